//! Source densities, transmitted-energy (refractor) measure, the energy budget
//! and discretization of a continuous target density into point masses.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{fresnel_transmission, FresnelBounds};
use crate::refractor::{CellAssignment, RefractorSolution, TargetMeasure};
use crate::scalar::{csum, CompensatedSum, Scalar};
use crate::sphere::{build_grid, fibonacci_cap, Direction, QuadratureGrid, SphericalCap, Vec3};

/// Radiant intensity on a cap.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub enum SourceDensity<T> {
    Uniform { value: T },
    /// `(axis·x)^exponent`.
    CosinePower { axis: Direction<T>, exponent: T },
    /// One value per node of a specific grid.
    Tabulated { values: Vec<T> },
}

impl<T: Scalar> SourceDensity<T> {
    pub fn uniform(value: T) -> Self {
        Self::Uniform { value }
    }

    /// Density at node `index` located at `x`.
    pub fn value_at(&self, index: usize, x: &Direction<T>) -> Result<T> {
        let v = match self {
            Self::Uniform { value } => *value,
            Self::CosinePower { axis, exponent } => {
                let c = axis.dot(x);
                if !(c > T::zero()) {
                    return Err(Error::Density(format!("cosine density vanishes at node {index}")));
                }
                c.powf(*exponent)
            }
            Self::Tabulated { values } => *values
                .get(index)
                .ok_or_else(|| Error::Density(format!("no tabulated value for node {index}")))?,
        };
        if !(v > T::zero()) || !v.is_finite() {
            return Err(Error::Density(format!("density {v} at node {index} is not positive")));
        }
        Ok(v)
    }

    /// Tabulated densities are tied to one grid and cannot follow a refinement.
    pub fn is_refinable(&self) -> bool {
        !matches!(self, Self::Tabulated { .. })
    }

    fn check_grid(&self, grid: &QuadratureGrid<T>) -> Result<()> {
        if let Self::Tabulated { values } = self {
            if values.len() != grid.len() {
                return Err(Error::Density(format!(
                    "{} tabulated values for a grid of {} nodes",
                    values.len(),
                    grid.len()
                )));
            }
        }
        Ok(())
    }
}

/// `f(x_j) w_j` for every node.
pub fn node_energies<T: Scalar>(f: &SourceDensity<T>, grid: &QuadratureGrid<T>) -> Result<Vec<T>> {
    f.check_grid(grid)?;
    grid.nodes()
        .par_iter()
        .zip(grid.weights().par_iter())
        .enumerate()
        .map(|(j, (x, &w))| Ok(f.value_at(j, x)? * w))
        .collect()
}

/// Quadrature value of `∫ f` over the grid's cap.
pub fn total_energy<T: Scalar>(f: &SourceDensity<T>, grid: &QuadratureGrid<T>) -> Result<T> {
    Ok(csum(node_energies(f, grid)?))
}

/// Transmitted energy per target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct EnergyVector<T> {
    pub per_target: Vec<T>,
    pub total_emitted: T,
    pub total_transmitted: T,
}

impl<T: Scalar> EnergyVector<T> {
    /// `(G_i - g_i)/g_i`.
    pub fn residuals(&self, targets: &TargetMeasure<T>) -> Vec<T> {
        self.per_target
            .iter()
            .zip(targets.energies())
            .map(|(&g_got, &g)| (g_got - g) / g)
            .collect()
    }

    pub fn subset_sum(&self, subset: &[usize]) -> T {
        csum(subset.iter().map(|&i| self.per_target[i]))
    }
}

/// `G_i = Σ f t w` over the nodes of cell `i`. Tied nodes count for the index
/// `trace_cells` gave them.
pub fn refractor_measure<T: Scalar>(
    sol: &RefractorSolution<T>,
    f: &SourceDensity<T>,
    grid: &QuadratureGrid<T>,
    assignment: &CellAssignment<T>,
    lossless: bool,
) -> Result<EnergyVector<T>> {
    if assignment.len() != grid.len() {
        return Err(Error::Config("assignment does not match the grid".into()));
    }
    let fw = node_energies(f, grid)?;
    let dirs = sol.targets.directions();
    let transmitted: Vec<T> = grid
        .nodes()
        .par_iter()
        .zip(assignment.winner.par_iter())
        .zip(fw.par_iter())
        .map(|((x, &i), &e)| Ok(e * fresnel_transmission(x, &dirs[i], &sol.medium, lossless)?))
        .collect::<Result<_>>()?;
    let mut cells = vec![CompensatedSum::new(); sol.len()];
    for (&i, &e) in assignment.winner.iter().zip(&transmitted) {
        cells[i].add(e);
    }
    Ok(EnergyVector {
        per_target: cells.iter().map(CompensatedSum::value).collect(),
        total_emitted: csum(fw),
        total_transmitted: csum(transmitted),
    })
}

/// Outcome of `∫ f >= mu / (1 - C_eps)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BudgetReport<T> {
    pub emitted: T,
    pub required: T,
    /// `emitted - required`.
    pub slack: T,
    pub c_eps: T,
}

impl<T: Scalar> BudgetReport<T> {
    pub fn passes(&self) -> bool {
        self.slack >= T::zero()
    }
}

pub fn energy_budget<T: Scalar>(
    f: &SourceDensity<T>,
    grid: &QuadratureGrid<T>,
    mu_total: T,
    bounds: &FresnelBounds<T>,
) -> Result<BudgetReport<T>> {
    let emitted = total_energy(f, grid)?;
    let required = mu_total / (T::one() - bounds.c_eps);
    Ok(BudgetReport { emitted, required, slack: emitted - required, c_eps: bounds.c_eps })
}

/// Like [`energy_budget`] but fails when the source cannot cover the target
/// after worst-case reflection losses.
pub fn check_energy_budget<T: Scalar>(
    f: &SourceDensity<T>,
    grid: &QuadratureGrid<T>,
    mu_total: T,
    bounds: &FresnelBounds<T>,
) -> Result<BudgetReport<T>> {
    let r = energy_budget(f, grid, mu_total, bounds)?;
    if !r.passes() {
        return Err(Error::Budget {
            emitted: r.emitted.to_f64_lossy(),
            required: r.required.to_f64_lossy(),
            target_total: mu_total.to_f64_lossy(),
            c_eps: r.c_eps.to_f64_lossy(),
        });
    }
    Ok(r)
}

/// Point-mass approximation of a continuous target density.
#[derive(Clone, Debug, PartialEq)]
pub struct Discretization<T> {
    pub targets: TargetMeasure<T>,
    /// Quadrature total of `g` on the fine grid.
    pub fine_total: T,
    /// Upper bound on the angular diameter of every cell.
    pub max_diameter: T,
    /// Fine-grid node to cell.
    pub cell_of_node: Vec<usize>,
}

const LLOYD_ITERATIONS: usize = 25;

/// Splits `cap` into `l` cells around representatives and lumps `g` into them.
///
/// Seeds start on a Fibonacci lattice and are moved to the energy centroids of
/// their nearest-seed cells for a fixed number of rounds, which keeps the
/// cells compact and balanced. With `l == fine_nodes` every fine node is its
/// own cell.
pub fn discretize_target<T: Scalar>(
    g: &SourceDensity<T>,
    cap: SphericalCap<T>,
    l: usize,
    fine_nodes: usize,
) -> Result<Discretization<T>> {
    if l < 2 {
        return Err(Error::Config(format!("cell count {l} must be at least 2")));
    }
    if l > fine_nodes {
        return Err(Error::Resolution(format!("{l} cells need at least as many fine nodes, got {fine_nodes}")));
    }
    let grid = build_grid(cap, fine_nodes)?;
    let energy = node_energies(g, &grid)?;
    let nodes = grid.nodes();
    let mut seeds = fibonacci_cap(&cap, l);
    let mut owner = nearest(nodes, &seeds);
    if l < fine_nodes {
        for _ in 0..LLOYD_ITERATIONS {
            let next = centroids(nodes, &energy, &owner, &seeds);
            if next == seeds {
                break;
            }
            seeds = next;
            owner = nearest(nodes, &seeds);
        }
        seeds = centroids(nodes, &energy, &owner, &seeds);
    }

    let mut sums = vec![CompensatedSum::new(); l];
    let mut counts = vec![0usize; l];
    let mut spread = vec![T::zero(); l];
    for (j, &i) in owner.iter().enumerate() {
        sums[i].add(energy[j]);
        counts[i] += 1;
        spread[i] = spread[i].max(seeds[i].angle_to(&nodes[j]));
    }
    if let Some(i) = counts.iter().position(|&c| c == 0) {
        return Err(Error::Resolution(format!(
            "cell {i} of {l} is empty on a {fine_nodes}-node fine grid"
        )));
    }
    let max_diameter = spread.iter().fold(T::zero(), |a, &s| a.max(s + s));
    let energies: Vec<T> = sums.iter().map(CompensatedSum::value).collect();
    Ok(Discretization {
        targets: TargetMeasure::new(seeds, energies)?,
        fine_total: csum(energy),
        max_diameter,
        cell_of_node: owner,
    })
}

fn nearest<T: Scalar>(nodes: &[Direction<T>], seeds: &[Direction<T>]) -> Vec<usize> {
    nodes
        .par_iter()
        .map(|x| {
            let mut best = (T::neg_infinity(), 0);
            for (i, s) in seeds.iter().enumerate() {
                let d = s.dot(x);
                if d > best.0 {
                    best = (d, i);
                }
            }
            best.1
        })
        .collect()
}

/// Energy-weighted mean of each cell, projected back to the sphere. Empty
/// cells keep their seed.
fn centroids<T: Scalar>(
    nodes: &[Direction<T>],
    energy: &[T],
    owner: &[usize],
    seeds: &[Direction<T>],
) -> Vec<Direction<T>> {
    let mut acc = vec![Vec3::zero(); seeds.len()];
    for ((x, &e), &i) in nodes.iter().zip(energy).zip(owner) {
        acc[i] = acc[i] + x.vec().scale(e);
    }
    acc.iter()
        .zip(seeds)
        .map(|(v, s)| v.try_normalize().unwrap_or(*s))
        .collect()
}

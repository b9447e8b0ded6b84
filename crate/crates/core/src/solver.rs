//! Monotone coordinate sweep on the focal parameters.
//!
//! `b_1 = 1` is held fixed and absorbs the surplus; every other `b_i` is moved
//! until its cell receives `g_i`. On a grid `G_i(b_i)` is a step function, so
//! each step solves it exactly: every node has a flip value of `b_i` past which
//! it joins cell `i`, and a bisection over the sorted flip values picks the
//! largest energy not exceeding `g_i`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{fresnel_bound, transmission_at, FresnelBounds, MediumPair, Regime};
use crate::refractor::{parameter_bracket, select_extreme, trace_cells, Normalization, RefractorSolution, TargetMeasure};
use crate::scalar::{CompensatedSum, Scalar};
use crate::sphere::{build_grid, QuadratureGrid};
use crate::transport::{check_energy_budget, node_energies, refractor_measure, BudgetReport, EnergyVector, SourceDensity};

/// Grid growth factor per refinement.
pub const REFINE_FACTOR: usize = 4;

/// Fraction of the empty-cell threshold used for the initial hyperboloid parameters.
const HYPERBOLOID_START: f64 = 0.9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub rel_tol: f64,
    pub max_sweeps: usize,
    /// Cap on bisection iterations per coordinate step.
    pub bisection_steps: usize,
    pub auto_refine: bool,
    pub max_refinements: usize,
    pub tie_tol: f64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            rel_tol: 1e-2,
            max_sweeps: 200,
            bisection_steps: 60,
            auto_refine: false,
            max_refinements: 4,
            tie_tol: crate::refractor::DEFAULT_TIE_TOL,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rel_tol > 0.0) {
            return Err(Error::Config(format!("rel_tol = {} must be positive", self.rel_tol)));
        }
        if self.max_sweeps < 1 {
            return Err(Error::Config("max_sweeps must be at least 1".into()));
        }
        if self.bisection_steps < 1 {
            return Err(Error::Config("bisection_steps must be at least 1".into()));
        }
        if !(self.tie_tol >= 0.0) {
            return Err(Error::Config("tie_tol must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolveReport {
    pub converged: bool,
    /// `(G_i - g_i)/g_i` for every target.
    pub residuals: Vec<f64>,
    pub max_abs_residual: f64,
    /// `G_1 - g_1`.
    pub surplus_m1: f64,
    pub sweeps: usize,
    pub refinements: usize,
    pub grid_nodes: usize,
    pub tie_fraction: f64,
    pub energies: Vec<f64>,
    pub total_emitted: f64,
    pub total_transmitted: f64,
    pub c_eps: f64,
    pub budget_slack: f64,
}

/// Everything the solver needs besides its tuning knobs.
#[derive(Clone, Copy, Debug)]
pub struct Problem<'a, T> {
    pub medium: MediumPair<T>,
    pub density: &'a SourceDensity<T>,
    pub grid: &'a QuadratureGrid<T>,
    pub targets: &'a TargetMeasure<T>,
    pub epsilon: T,
    pub lossless: bool,
}

#[derive(Clone, Debug)]
pub struct SolveOutcome<T> {
    pub solution: RefractorSolution<T>,
    pub report: SolveReport,
    /// The grid the solution was last solved on (differs from the input after refinement).
    pub grid: QuadratureGrid<T>,
}

/// Checks the margin over every node/target pair and the energy budget.
pub fn preflight<T: Scalar>(p: &Problem<'_, T>) -> Result<(FresnelBounds<T>, BudgetReport<T>)> {
    p.medium.validate()?;
    let threshold = p.medium.threshold();
    let mut worst = (T::infinity(), 0usize, 0usize);
    for (j, x) in p.grid.nodes().iter().enumerate() {
        for (i, m) in p.targets.directions().iter().enumerate() {
            let d = x.dot(m);
            if d < worst.0 {
                worst = (d, j, i);
            }
        }
    }
    if worst.0 - threshold < p.epsilon {
        let (d, j, i) = worst;
        return Err(Error::Admissibility {
            worst_dot: d.to_f64_lossy(),
            threshold: threshold.to_f64_lossy(),
            margin: (d - threshold).to_f64_lossy(),
            required: p.epsilon.to_f64_lossy(),
            source_dir: p.grid.nodes()[j].components().map(|c| c.to_f64_lossy()),
            target_dir: p.targets.directions()[i].components().map(|c| c.to_f64_lossy()),
        });
    }
    let mut bounds = fresnel_bound(&p.medium, p.epsilon)?;
    if p.lossless {
        bounds.c_eps = T::zero();
    }
    let budget = check_energy_budget(p.density, p.grid, p.targets.total(), &bounds)?;
    Ok((bounds, budget))
}

/// Initial parameters: `b_1 = 1` and every other cell empty.
pub fn initial_parameters<T: Scalar>(medium: &MediumPair<T>, epsilon: T, l: usize) -> Vec<T> {
    let k = medium.kappa;
    let rest = match medium.regime() {
        Regime::HyperboloidMax => T::lit(HYPERBOLOID_START) * (-k * epsilon) / (T::one() - k),
        Regime::EllipsoidMin => (T::one() + k).recip(),
    };
    let mut b = vec![rest; l];
    b[0] = T::one();
    b
}

/// Per-grid precomputation: `1 - kappa m_i·x_j` and `f t w` for every pair.
struct Tables<T> {
    l: usize,
    n: usize,
    regime: Regime,
    den: Vec<T>,
    energy: Vec<T>,
}

impl<T: Scalar> Tables<T> {
    fn new(p: &Problem<'_, T>, grid: &QuadratureGrid<T>) -> Result<Self> {
        let l = p.targets.len();
        let n = grid.len();
        let fw = node_energies(p.density, grid)?;
        let kappa = p.medium.kappa;
        let mut den = vec![T::zero(); l * n];
        let mut energy = vec![T::zero(); l * n];
        den.par_chunks_mut(n)
            .zip(energy.par_chunks_mut(n))
            .zip(p.targets.directions().par_iter())
            .try_for_each(|((drow, erow), m)| -> Result<()> {
                for (j, x) in grid.nodes().iter().enumerate() {
                    let c = m.dot(x);
                    drow[j] = T::one() - kappa * c;
                    erow[j] = fw[j] * transmission_at(c, &p.medium, p.lossless)?;
                }
                Ok(())
            })?;
        Ok(Self { l, n, regime: p.medium.regime(), den, energy })
    }

    fn sign(&self) -> T {
        match self.regime {
            Regime::HyperboloidMax => T::one(),
            Regime::EllipsoidMin => -T::one(),
        }
    }

    fn max_node_energy(&self) -> T {
        self.energy.iter().copied().fold(T::zero(), T::max)
    }

    /// Cell energies under the same winner rule as `trace_cells`.
    fn measure(&self, b: &[T], tie_tol: T) -> Vec<T> {
        let winners: Vec<usize> = (0..self.n)
            .into_par_iter()
            .map_init(
                || vec![T::zero(); self.l],
                |vals, j| {
                    for i in 0..self.l {
                        vals[i] = b[i] / self.den[i * self.n + j];
                    }
                    select_extreme(vals, self.regime, tie_tol).winner
                },
            )
            .collect();
        let mut acc = vec![CompensatedSum::new(); self.l];
        for (j, &w) in winners.iter().enumerate() {
            acc[w].add(self.energy[w * self.n + j]);
        }
        acc.iter().map(CompensatedSum::value).collect()
    }

    /// New `b_i` with every other coordinate frozen. `bracket` bounds `s b_i`
    /// where `s` is the regime sign.
    fn step(&self, i: usize, b: &[T], g: T, bracket: (T, T), tol: T, max_iter: usize) -> Result<T> {
        let (n, s) = (self.n, self.sign());
        let row = &self.den[i * n..(i + 1) * n];
        let erow = &self.energy[i * n..(i + 1) * n];
        // node j joins cell i once s b_i exceeds key_j
        let keys: Vec<T> = (0..n)
            .into_par_iter()
            .map(|j| {
                let mut other = T::neg_infinity();
                for k in (0..self.l).filter(|&k| k != i) {
                    other = other.max(s * b[k] / self.den[k * n + j]);
                }
                row[j] * other
            })
            .collect();
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &c| keys[a].partial_cmp(&keys[c]).unwrap_or(std::cmp::Ordering::Equal).then(a.cmp(&c)));

        // prefix[k] = energy of the first k nodes in flip order
        let mut prefix = Vec::with_capacity(n + 1);
        let mut acc = CompensatedSum::new();
        prefix.push(T::zero());
        for &j in &order {
            acc.add(erow[j]);
            prefix.push(acc.value());
        }
        let key = |k: usize| keys[order[k]];
        // s b_i realizing exactly the first k flips, or None when k splits a group of equal keys
        let place = |k: usize| -> Option<T> {
            if k == 0 {
                let k0 = key(0);
                Some(k0 - T::lit(0.5) * k0.abs().max(T::min_positive_value()))
            } else if k == n {
                let kn = key(n - 1);
                Some(kn + T::lit(0.5) * kn.abs().max(T::min_positive_value()))
            } else if key(k - 1) < key(k) {
                Some((key(k - 1) + key(k)) / T::lit(2.0))
            } else {
                None
            }
        };

        // largest k with prefix[k] <= g, by bisection
        let (mut lo, mut hi) = (0usize, n);
        let mut iter = 0;
        while lo < hi && iter < max_iter {
            let mid = (lo + hi).div_ceil(2);
            if prefix[mid] <= g {
                lo = mid;
            } else {
                hi = mid - 1;
            }
            iter += 1;
        }
        let mut k = lo;
        let current = s * b[i];
        loop {
            let in_region = |v: T| (k == 0 || v > key(k - 1)) && (k == n || v <= key(k));
            if in_region(current) {
                return Ok(b[i]);
            }
            if let Some(v) = place(k) {
                // hyperboloids: open bracket; ellipsoids: closed at the empty-cell end
                let v = if s < T::zero() { v.max(bracket.0) } else { v };
                let inside = (v > bracket.0 || (s < T::zero() && v == bracket.0)) && v < bracket.1;
                if inside && in_region(v) {
                    return Ok(s * v);
                }
            }
            if k == 0 {
                break;
            }
            k -= 1;
        }
        if prefix[k] < g * (T::one() - tol) {
            return Err(Error::Infeasible {
                index: i,
                reason: format!(
                    "energy {} cannot be reached inside the parameter bracket (best {})",
                    g,
                    prefix[k]
                ),
            });
        }
        Ok(b[i])
    }
}

fn converged<T: Scalar>(energies: &[T], targets: &TargetMeasure<T>, tol: T) -> bool {
    energies.iter().zip(targets.energies()).enumerate().all(|(i, (&got, &g))| {
        let r = (got - g) / g;
        if i == 0 {
            r >= -tol
        } else {
            r.abs() <= tol
        }
    })
}

/// Runs the sweep. Non-convergence is reported, not raised.
pub fn solve_discrete<T: Scalar>(p: &Problem<'_, T>, config: &SolverConfig) -> Result<SolveOutcome<T>> {
    config.validate()?;
    let (bounds, budget) = preflight(p)?;
    let l = p.targets.len();
    let tol = T::lit(config.rel_tol);
    let tie_tol = T::lit(config.tie_tol);
    let (lo, hi) = parameter_bracket(&p.medium, p.epsilon);
    let s_bracket = match p.medium.regime() {
        Regime::HyperboloidMax => (lo, hi),
        Regime::EllipsoidMin => (-hi, -lo),
    };
    let g_min = p.targets.energies().iter().copied().fold(T::infinity(), T::min);
    let refinable = config.auto_refine && p.density.is_refinable();

    let mut grid = p.grid.clone();
    let mut b = initial_parameters(&p.medium, p.epsilon, l);
    let mut sweeps = 0;
    let mut refinements = 0;
    let mut done = false;
    loop {
        let tables = Tables::new(p, &grid)?;
        let can_refine = refinable && refinements < config.max_refinements;
        if can_refine && tables.max_node_energy() > tol * g_min {
            grid = build_grid(*grid.cap(), grid.len() * REFINE_FACTOR)?;
            refinements += 1;
            continue;
        }
        for _ in 0..config.max_sweeps {
            for i in 1..l {
                b[i] = tables.step(i, &b, p.targets.energies()[i], s_bracket, tol, config.bisection_steps)?;
            }
            sweeps += 1;
            if converged(&tables.measure(&b, tie_tol), p.targets, tol) {
                done = true;
                break;
            }
        }
        if done || !can_refine {
            break;
        }
        grid = build_grid(*grid.cap(), grid.len() * REFINE_FACTOR)?;
        refinements += 1;
    }

    let mut solution = RefractorSolution::new(p.medium, p.targets.clone(), b)?;
    solution.normalization = Normalization::GaugeB1;
    let assignment = trace_cells(&solution, &grid, tie_tol)?;
    let ev = refractor_measure(&solution, p.density, &grid, &assignment, p.lossless)?;
    let report = build_report(&ev, p.targets, &assignment, tol, sweeps, refinements, &bounds, &budget);
    Ok(SolveOutcome { solution, report, grid })
}

#[allow(clippy::too_many_arguments)]
fn build_report<T: Scalar>(
    ev: &EnergyVector<T>,
    targets: &TargetMeasure<T>,
    assignment: &crate::refractor::CellAssignment<T>,
    tol: T,
    sweeps: usize,
    refinements: usize,
    bounds: &FresnelBounds<T>,
    budget: &BudgetReport<T>,
) -> SolveReport {
    let residuals: Vec<f64> = ev.residuals(targets).iter().map(|r| r.to_f64_lossy()).collect();
    SolveReport {
        converged: converged(&ev.per_target, targets, tol),
        max_abs_residual: residuals.iter().skip(1).fold(0.0, |a, r| a.max(r.abs())),
        residuals,
        surplus_m1: (ev.per_target[0] - targets.energies()[0]).to_f64_lossy(),
        sweeps,
        refinements,
        grid_nodes: assignment.len(),
        tie_fraction: assignment.tie_fraction(),
        energies: ev.per_target.iter().map(|g| g.to_f64_lossy()).collect(),
        total_emitted: ev.total_emitted.to_f64_lossy(),
        total_transmitted: ev.total_transmitted.to_f64_lossy(),
        c_eps: bounds.c_eps.to_f64_lossy(),
        budget_slack: budget.slack.to_f64_lossy(),
    }
}

/// Rescales `b` so that `b_1 = 1` or so that the smallest radius on `grid` is 1.
pub fn normalize_solution<T: Scalar>(
    sol: &RefractorSolution<T>,
    grid: &QuadratureGrid<T>,
    mode: Normalization,
) -> Result<RefractorSolution<T>> {
    sol.validate()?;
    let c = match mode {
        Normalization::GaugeB1 => sol.b[0].recip(),
        Normalization::MinRadiusOne => {
            let a = trace_cells(sol, grid, T::lit(crate::refractor::DEFAULT_TIE_TOL))?;
            a.min_rho().recip()
        }
        Normalization::None => T::one(),
    };
    let mut out = if c == T::one() { sol.clone() } else { sol.scaled(c) };
    out.normalization = mode;
    Ok(out)
}

//! Independent checks of a solved refractor: forward ray tracing, energy
//! audits and the Monge-Ampère diagnostics in [`ma`].

pub mod ma;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::snell_refract;
use crate::refractor::{envelope_radius, quadric_normal, trace_cells, CellAssignment, RefractorSolution};
use crate::scalar::{csum, Scalar};
use crate::sphere::QuadratureGrid;
use crate::transport::{refractor_measure, SourceDensity};

/// Angular tolerance of the focal property.
pub const RAY_TOL: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceReport {
    pub max_angular_error: f64,
    pub mean_angular_error: f64,
    /// Fraction of checked nodes refracted within [`RAY_TOL`] of their target.
    pub fraction_within_tol: f64,
    pub checked_nodes: usize,
    pub skipped_ties: usize,
    pub tie_fraction: f64,
    /// Largest error per target (0 for targets with no checked node).
    pub per_target_max_error: Vec<f64>,
}

impl TraceReport {
    pub fn passes(&self) -> bool {
        self.max_angular_error < RAY_TOL
    }
}

/// Refracts every non-tied node through the surface `sol` actually describes
/// and measures the angle to the target `assignment` sends it to.
///
/// The surface normal comes from the quadric that wins at the node under
/// `sol`, so an assignment that no longer matches `sol` shows up as errors.
pub fn raytrace_verify<T: Scalar>(
    sol: &RefractorSolution<T>,
    grid: &QuadratureGrid<T>,
    assignment: &CellAssignment<T>,
    tie_tol: T,
) -> Result<TraceReport> {
    if assignment.len() != grid.len() {
        return Err(Error::Config("assignment does not match the grid".into()));
    }
    let dirs = sol.targets.directions();
    let kappa = sol.medium.kappa;
    let errors: Vec<Option<(usize, f64)>> = grid
        .nodes()
        .par_iter()
        .enumerate()
        .map(|(j, x)| {
            if assignment.tie[j] {
                return Ok(None);
            }
            let here = envelope_radius(sol, x, tie_tol)?;
            if here.tie {
                return Ok(None);
            }
            let nu = quadric_normal(&dirs[here.winner], x, kappa)?;
            let out = snell_refract(x, &nu, &sol.medium)?;
            let target = assignment.winner[j];
            Ok(Some((target, out.angle_to(&dirs[target]).to_f64_lossy())))
        })
        .collect::<Result<_>>()?;

    let mut per_target = vec![0.0f64; sol.len()];
    let (mut max, mut sum, mut within, mut checked) = (0.0f64, 0.0f64, 0usize, 0usize);
    for &(i, e) in errors.iter().flatten() {
        per_target[i] = per_target[i].max(e);
        max = max.max(e);
        sum += e;
        checked += 1;
        if e < RAY_TOL {
            within += 1;
        }
    }
    Ok(TraceReport {
        max_angular_error: max,
        mean_angular_error: if checked > 0 { sum / checked as f64 } else { 0.0 },
        fraction_within_tol: if checked > 0 { within as f64 / checked as f64 } else { 1.0 },
        checked_nodes: checked,
        skipped_ties: grid.len() - checked,
        tie_fraction: assignment.tie_fraction(),
        per_target_max_error: per_target,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AuditConfig<T> {
    pub rel_tol: T,
    pub subsets: usize,
    pub seed: u64,
    pub lossless: bool,
    /// When set, also checks `transmitted >= (1 - c_eps) emitted`.
    pub c_eps: Option<T>,
    pub tie_tol: T,
}

impl<T: Scalar> Default for AuditConfig<T> {
    fn default() -> Self {
        Self {
            rel_tol: T::lit(1e-2),
            subsets: 100,
            seed: 0,
            lossless: false,
            c_eps: None,
            tie_tol: T::lit(crate::refractor::DEFAULT_TIE_TOL),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuditReport {
    pub energies: Vec<f64>,
    pub residuals: Vec<f64>,
    pub total_emitted: f64,
    pub total_transmitted: f64,
    /// `|Σ G_i - transmitted| / transmitted`.
    pub partition_error: f64,
    pub residuals_ok: bool,
    pub subsets_checked: usize,
    pub subset_failures: usize,
    /// Smallest `Σ_S G_i / Σ_S g_i` over the sampled subsets.
    pub min_subset_ratio: f64,
    pub loss_bound_ok: Option<bool>,
}

impl AuditReport {
    pub fn passes(&self) -> bool {
        self.residuals_ok
            && self.subset_failures == 0
            && self.partition_error <= 1e-10
            && self.loss_bound_ok != Some(false)
    }
}

/// Recomputes the cell energies from scratch and checks them against the targets.
pub fn energy_audit<T: Scalar>(
    sol: &RefractorSolution<T>,
    f: &SourceDensity<T>,
    grid: &QuadratureGrid<T>,
    cfg: &AuditConfig<T>,
) -> Result<AuditReport> {
    let assignment = trace_cells(sol, grid, cfg.tie_tol)?;
    let ev = refractor_measure(sol, f, grid, &assignment, cfg.lossless)?;
    let g = sol.targets.energies();
    let residuals: Vec<T> = ev.residuals(&sol.targets);
    let tol = cfg.rel_tol;
    let residuals_ok = residuals
        .iter()
        .enumerate()
        .all(|(i, &r)| if i == 0 { r >= -tol } else { r.abs() <= tol });
    let sum = csum(ev.per_target.iter().copied());
    let partition_error = ((sum - ev.total_transmitted) / ev.total_transmitted).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let l = sol.len();
    let (mut failures, mut min_ratio) = (0, f64::INFINITY);
    for _ in 0..cfg.subsets {
        let size = rng.gen_range(1..=l);
        let subset = sample(&mut rng, l, size).into_vec();
        let got = ev.subset_sum(&subset);
        let want = csum(subset.iter().map(|&i| g[i]));
        min_ratio = min_ratio.min((got / want).to_f64_lossy());
        if got < (T::one() - tol) * want {
            failures += 1;
        }
    }

    let loss_bound_ok = cfg.c_eps.map(|c| ev.total_transmitted >= (T::one() - c) * ev.total_emitted);
    Ok(AuditReport {
        energies: ev.per_target.iter().map(|v| v.to_f64_lossy()).collect(),
        residuals: residuals.iter().map(|v| v.to_f64_lossy()).collect(),
        total_emitted: ev.total_emitted.to_f64_lossy(),
        total_transmitted: ev.total_transmitted.to_f64_lossy(),
        partition_error: partition_error.to_f64_lossy(),
        residuals_ok,
        subsets_checked: cfg.subsets,
        subset_failures: failures,
        min_subset_ratio: min_ratio,
        loss_bound_ok,
    })
}

//! `negaref` command-line driver: solve, verify, Monge-Ampère diagnostics,
//! target discretization and mesh export.

mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use negaref::solver::preflight;
use negaref::verify::ma::{ma_per_cell_check, PerturbedField};
use negaref::{
    build_grid, check_admissible, energy_audit, ma_jacobian_check, normalize_solution, project_to_plane,
    raytrace_verify, solve_discrete, trace_cells, AdmissibleSetup, AuditConfig, Direction64, Error, MaConfig,
    MaReport, Problem, QuadricField, SphericalCap64,
};
use serde::{Deserialize, Serialize};

use config::{PointMass, RunConfig};
use output::{write_json, write_surface, SolutionFile};

/// Largest identity residual `ma-residual` accepts.
const MA_IDENTITY_TOL: f64 = 1e-4;
/// Largest closed-form vs direct `det C` mismatch `ma-residual` accepts.
const MA_DET_C_TOL: f64 = 1e-8;

#[derive(Parser)]
#[command(name = "negaref", version, about = "Design far-field refractors into negative-index media")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the focal parameters and write solution, report and surface.
    Solve(SolveArgs),
    /// Ray-trace and energy-audit a solution.
    Verify(VerifyArgs),
    /// Monge-Ampère identity and degeneracy residuals.
    MaResidual(MaArgs),
    /// Lump a continuous target density into point masses.
    DiscretizeTarget(DiscretizeArgs),
    /// Write surface.obj and surface.csv for a solution.
    ExportMesh(ExportArgs),
}

#[derive(Args)]
struct Common {
    /// Run configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the source grid size.
    #[arg(long)]
    grid_size: Option<usize>,
    /// Ignore Fresnel losses (transmission 1).
    #[arg(long)]
    lossless: bool,
    /// Seed for randomized checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SolveArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct VerifyArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    solution: PathBuf,
}

#[derive(Args)]
struct MaArgs {
    #[command(flatten)]
    common: Common,
    /// Solution to evaluate; requires --per-cell.
    #[arg(long, conflicts_with = "field")]
    solution: Option<PathBuf>,
    /// Smooth field description (JSON).
    #[arg(long)]
    field: Option<PathBuf>,
    /// Evaluate a piecewise solution cell by cell.
    #[arg(long)]
    per_cell: bool,
    /// Finite-difference step.
    #[arg(long, default_value_t = 1e-4)]
    h_fd: f64,
    /// Number of check points.
    #[arg(long, default_value_t = 256)]
    points: usize,
}

#[derive(Args)]
struct DiscretizeArgs {
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct ExportArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    solution: PathBuf,
}

/// A smooth radial field for `ma-residual --field`.
#[derive(Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
enum FieldSpec {
    Quadric { direction: [f64; 3], b: f64 },
    Perturbed { direction: [f64; 3], b: f64, amplitude: f64, center: [f64; 2], width: f64 },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Solve(a) => solve(&a.common),
        Command::Verify(a) => verify(&a),
        Command::MaResidual(a) => ma_residual(&a),
        Command::DiscretizeTarget(a) => discretize(&a.common),
        Command::ExportMesh(a) => export(&a),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 1: a check failed; 2: usage; 3: I/O or parse; 4 and up: one per library error kind.
fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        None => 3,
        Some(Error::Config(_)) => 4,
        Some(Error::Admissibility { .. }) => 5,
        Some(Error::Budget { .. }) => 6,
        Some(Error::Infeasible { .. }) => 7,
        Some(Error::Density(_)) => 8,
        Some(Error::Resolution(_)) => 9,
        Some(Error::Degenerate(_)) => 10,
        Some(Error::Margin(_)) => 11,
        Some(Error::Domain(_) | Error::Geometry(_) | Error::TotalInternalReflection { .. } | Error::Singular(_)) => 12,
    }
}

fn out_dir(c: &Common) -> anyhow::Result<PathBuf> {
    let dir = c.out.clone().unwrap_or_else(|| PathBuf::from("."));
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    Ok(dir)
}

#[derive(Serialize)]
struct SolveOutput<'a> {
    solve: &'a negaref::SolveReport,
    admissibility_margin: f64,
    required_margin: f64,
    lossless: bool,
}

fn solve(c: &Common) -> anyhow::Result<bool> {
    let (cfg, base) = RunConfig::load(&c.config)?;
    let medium = cfg.medium()?;
    let (src, tgt) = (cfg.source_cap()?, cfg.target_cap()?);
    let margin = check_admissible(&AdmissibleSetup { medium, source_cap: src, target_cap: tgt, epsilon: cfg.epsilon })
        .context("admissibility hypothesis (every ray must stay eps above the refraction threshold)")?;
    let n = c.grid_size.unwrap_or(cfg.source.grid_size);
    let grid = build_grid(src, n)?;
    let f = cfg.source_density(&base, n)?;
    let targets = cfg.targets(&base)?;
    if let Some(i) = targets.directions().iter().position(|m| !tgt.contains(m)) {
        return Err(Error::Config(format!("target {i} lies outside the target cap")).into());
    }
    let lossless = cfg.lossless || c.lossless;
    let problem = Problem { medium, density: &f, grid: &grid, targets: &targets, epsilon: cfg.epsilon, lossless };
    let out = solve_discrete(&problem, &cfg.solver)
        .context("energy budget hypothesis (source must cover the targets after worst-case reflection)")?;
    let sol = normalize_solution(&out.solution, &out.grid, cfg.normalization)?;

    let dir = out_dir(c)?;
    write_json(&dir.join("solution.json"), &SolutionFile::new(&sol, out.grid.len(), cfg.epsilon, lossless))?;
    let report = SolveOutput {
        solve: &out.report,
        admissibility_margin: margin.margin,
        required_margin: cfg.epsilon,
        lossless,
    };
    write_json(&dir.join("report.json"), &report)?;
    write_surface(&sol, &out.grid, cfg.solver.tie_tol, &dir)?;
    println!(
        "{} after {} sweeps on {} nodes; max residual {:.3e}, surplus on target 0 {:.3e}",
        if out.report.converged { "converged" } else { "NOT converged" },
        out.report.sweeps,
        out.report.grid_nodes,
        out.report.max_abs_residual,
        out.report.surplus_m1
    );
    Ok(out.report.converged)
}

#[derive(Serialize)]
struct VerifyOutput {
    passed: bool,
    lossless: bool,
    trace: negaref::TraceReport,
    audit: negaref::AuditReport,
}

fn verify(a: &VerifyArgs) -> anyhow::Result<bool> {
    let c = &a.common;
    let (cfg, base) = RunConfig::load(&c.config)?;
    let file = SolutionFile::load(&a.solution)?;
    let sol = file.solution()?;
    let n = c.grid_size.unwrap_or(file.grid_nodes);
    let grid = build_grid(cfg.source_cap()?, n)?;
    let f = cfg.source_density(&base, n)?;
    let lossless = file.lossless || c.lossless;
    let tie_tol = cfg.solver.tie_tol;

    let problem = Problem { medium: sol.medium, density: &f, grid: &grid, targets: &sol.targets, epsilon: file.epsilon, lossless };
    let (bounds, _) = preflight(&problem)?;
    let assignment = trace_cells(&sol, &grid, tie_tol)?;
    let trace = raytrace_verify(&sol, &grid, &assignment, tie_tol)?;
    let audit_cfg = AuditConfig {
        rel_tol: cfg.solver.rel_tol,
        seed: c.seed,
        lossless,
        c_eps: Some(bounds.c_eps),
        tie_tol,
        ..AuditConfig::default()
    };
    let audit = energy_audit(&sol, &f, &grid, &audit_cfg)?;
    let passed = trace.passes() && audit.passes();
    println!(
        "max angular error {:.3e} rad; transmitted {:.6e} of {:.6e}; worst subset ratio {:.4}; {}",
        trace.max_angular_error,
        audit.total_transmitted,
        audit.total_emitted,
        audit.min_subset_ratio,
        if passed { "PASS" } else { "FAIL" }
    );
    let report = VerifyOutput { passed, lossless, trace, audit };
    match &c.out {
        Some(_) => write_json(&out_dir(c)?.join("verify.json"), &report)?,
        None => println!("{}", serde_json::to_string_pretty(&report)?),
    }
    Ok(passed)
}

/// Chart points from a grid on the inner 80% of `cap`.
fn chart_points(cap: &SphericalCap64, count: usize) -> anyhow::Result<Vec<[f64; 2]>> {
    let inner = SphericalCap64::new(cap.axis, 0.8 * cap.angular_radius)?;
    let grid = build_grid(inner, count.max(negaref::sphere::MIN_GRID_NODES))?;
    Ok(grid.nodes().iter().map(project_to_plane).collect::<negaref::Result<_>>()?)
}

#[derive(Serialize)]
struct MaOutput {
    passed: bool,
    skipped_points: usize,
    #[serde(flatten)]
    report: MaReport,
}

fn ma_residual(a: &MaArgs) -> anyhow::Result<bool> {
    let c = &a.common;
    let (cfg, _) = RunConfig::load(&c.config)?;
    let medium = cfg.medium()?;
    let domain = cfg.source_cap()?;
    let points = chart_points(&domain, a.points)?;
    let ma_cfg = MaConfig { h_fd: a.h_fd, lossless: cfg.lossless || c.lossless };

    let (report, skipped) = match (&a.field, &a.solution) {
        (Some(path), None) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            let spec: FieldSpec = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
            let r = match spec {
                FieldSpec::Quadric { direction, b } => {
                    let m = Direction64::normalized(direction[0], direction[1], direction[2])?;
                    let q = QuadricField { m, b, kappa: medium.kappa };
                    ma_jacobian_check(&q, &medium, &points, &domain, &ma_cfg, None)?
                }
                FieldSpec::Perturbed { direction, b, amplitude, center, width } => {
                    let m = Direction64::normalized(direction[0], direction[1], direction[2])?;
                    let base = QuadricField { m, b, kappa: medium.kappa };
                    let p = PerturbedField { base, amplitude, center, width };
                    ma_jacobian_check(&p, &medium, &points, &domain, &ma_cfg, None)?
                }
            };
            (r, 0)
        }
        (None, Some(path)) => {
            if !a.per_cell {
                return Err(Error::Config(
                    "a solved refractor is an envelope of quadrics and is not twice differentiable across \
                     cell boundaries; rerun with --per-cell to evaluate each cell on its own quadric"
                        .into(),
                )
                .into());
            }
            let sol = SolutionFile::load(path)?.solution()?;
            ma_per_cell_check(&sol, &points, &domain, &ma_cfg, cfg.solver.tie_tol)?
        }
        _ => return Err(Error::Config("pass exactly one of --field or --solution".into()).into()),
    };
    let max = |s: &Option<negaref::verify::ma::Stats>| s.as_ref().map_or(0.0, |s| s.max);
    let passed = max(&report.identity_rel) < MA_IDENTITY_TOL && max(&report.det_c_rel) < MA_DET_C_TOL;
    println!(
        "{} points ({} skipped): identity residual max {:.3e}, det C mismatch max {:.3e}, degeneracy max {:.3e}",
        report.points.len(),
        skipped,
        max(&report.identity_rel),
        max(&report.det_c_rel),
        max(&report.degeneracy)
    );
    let out = MaOutput { passed, skipped_points: skipped, report };
    write_json(&out_dir(c)?.join("ma_report.json"), &out)?;
    Ok(passed)
}

fn discretize(c: &Common) -> anyhow::Result<bool> {
    let (cfg, base) = RunConfig::load(&c.config)?;
    let cont = cfg
        .target
        .continuous
        .as_ref()
        .ok_or_else(|| Error::Config("target has no `continuous` block".into()))?;
    let d = cfg.discretize(cont, &base)?;
    let list: Vec<PointMass> = d
        .targets
        .directions()
        .iter()
        .zip(d.targets.energies())
        .map(|(m, &energy)| PointMass { direction: m.components(), energy })
        .collect();
    write_json(&out_dir(c)?.join("targets.json"), &list)?;
    println!(
        "{} cells, total {:.6e}, max cell diameter {:.4} rad",
        list.len(),
        d.targets.total(),
        d.max_diameter
    );
    Ok(true)
}

fn export(a: &ExportArgs) -> anyhow::Result<bool> {
    let c = &a.common;
    let (cfg, _) = RunConfig::load(&c.config)?;
    let file = SolutionFile::load(&a.solution)?;
    let sol = file.solution()?;
    let grid = build_grid(cfg.source_cap()?, c.grid_size.unwrap_or(file.grid_nodes))?;
    write_surface(&sol, &grid, cfg.solver.tie_tol, &out_dir(c)?)?;
    Ok(true)
}


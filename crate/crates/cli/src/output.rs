//! Solution files and surface exports.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::Context;
use negaref::{
    trace_cells, Direction64, MediumPair64, Normalization, QuadratureGrid64, Regime, RefractorSolution64,
    TargetMeasure64,
};
use serde::{Deserialize, Serialize};

use crate::config::PointMass;

/// On-disk form of a solved refractor.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SolutionFile {
    pub regime: Regime,
    pub kappa: f64,
    pub medium: MediumPair64,
    pub targets: Vec<PointMass>,
    pub b: Vec<f64>,
    pub normalization: Normalization,
    /// Source grid size the parameters were solved on.
    pub grid_nodes: usize,
    pub epsilon: f64,
    pub lossless: bool,
}

impl SolutionFile {
    pub fn new(sol: &RefractorSolution64, grid_nodes: usize, epsilon: f64, lossless: bool) -> Self {
        Self {
            regime: sol.regime,
            kappa: sol.medium.kappa,
            medium: sol.medium,
            targets: sol
                .targets
                .directions()
                .iter()
                .zip(sol.targets.energies())
                .map(|(d, &energy)| PointMass { direction: d.components(), energy })
                .collect(),
            b: sol.b.clone(),
            normalization: sol.normalization,
            grid_nodes,
            epsilon,
            lossless,
        }
    }

    pub fn solution(&self) -> negaref::Result<RefractorSolution64> {
        let dirs = self
            .targets
            .iter()
            .map(|p| Direction64::new(p.direction[0], p.direction[1], p.direction[2]))
            .collect::<negaref::Result<Vec<_>>>()?;
        let energies: Vec<f64> = self.targets.iter().map(|p| p.energy).collect();
        let targets = if dirs.len() == 1 {
            TargetMeasure64::single(dirs[0], energies[0])
        } else {
            TargetMeasure64::new(dirs, energies)?
        };
        let mut sol = RefractorSolution64::new(self.medium, targets, self.b.clone())?;
        if sol.regime != self.regime || sol.medium.kappa != self.kappa {
            return Err(negaref::Error::Config("solution regime/kappa disagree with its medium".into()));
        }
        sol.normalization = self.normalization;
        Ok(sol)
    }

    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading solution {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing solution {}", path.display()))
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> anyhow::Result<()> {
    let file = File::create(path).with_context(|| format!("creating {}", path.display()))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes `surface.obj` (vertices `rho(x) x`, triangulated in the cap's
/// tangent plane) and `surface.csv` into `dir`.
pub fn write_surface(sol: &RefractorSolution64, grid: &QuadratureGrid64, tie_tol: f64, dir: &Path) -> anyhow::Result<()> {
    let a = trace_cells(sol, grid, tie_tol)?;
    let nodes = grid.nodes();

    let mut csv = csv::Writer::from_path(dir.join("surface.csv"))?;
    csv.write_record(["x1", "x2", "x3", "rho", "winner", "tie"])?;
    for (j, x) in nodes.iter().enumerate() {
        let c = x.components();
        csv.serialize((c[0], c[1], c[2], a.rho[j], a.winner[j], a.tie[j]))?;
    }
    csv.flush()?;

    let (u, v) = grid.cap().axis.tangent_frame();
    let plane: Vec<delaunator::Point> = nodes
        .iter()
        .map(|x| delaunator::Point { x: x.vec().dot(&u), y: x.vec().dot(&v) })
        .collect();
    let tri = delaunator::triangulate(&plane);

    let mut obj = BufWriter::new(File::create(dir.join("surface.obj"))?);
    writeln!(obj, "# refractor surface: {} vertices, {} faces", nodes.len(), tri.len())?;
    for (j, x) in nodes.iter().enumerate() {
        let p = x.vec().scale(a.rho[j]).0;
        writeln!(obj, "v {} {} {}", p[0], p[1], p[2])?;
    }
    for t in tri.triangles.chunks_exact(3) {
        writeln!(obj, "f {} {} {}", t[0] + 1, t[1] + 1, t[2] + 1)?;
    }
    obj.flush()?;
    Ok(())
}

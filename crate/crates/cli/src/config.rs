//! JSON run configuration.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use negaref::{
    discretize_target, Direction64, MediumPair64, Normalization, Regime, SolverConfig, SourceDensity64, SphericalCap64,
    TargetMeasure64,
};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub medium: MediumSpec,
    pub epsilon: f64,
    pub source: SourceSpec,
    pub target: TargetSpec,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub lossless: bool,
    /// Optional; must agree with the regime implied by kappa.
    #[serde(default)]
    pub regime: Option<Regime>,
    #[serde(default = "default_normalization")]
    pub normalization: Normalization,
}

fn default_normalization() -> Normalization {
    Normalization::GaugeB1
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct MediumSpec {
    pub n1: Option<f64>,
    pub n2: Option<f64>,
    pub kappa: Option<f64>,
    #[serde(default = "one")]
    pub z1: f64,
    #[serde(default = "one")]
    pub z2: f64,
    #[serde(default = "half")]
    pub alpha: f64,
}

fn one() -> f64 {
    1.0
}

fn half() -> f64 {
    0.5
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct CapSpec {
    pub axis: [f64; 3],
    pub angular_radius: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(rename_all = "snake_case", tag = "kind", deny_unknown_fields)]
pub enum DensitySpec {
    Uniform { value: f64 },
    CosinePower { axis: [f64; 3], exponent: f64 },
    /// CSV with columns `node,value`, one row per grid node.
    Tabulated { csv: PathBuf },
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub cap: CapSpec,
    pub density: DensitySpec,
    pub grid_size: usize,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct TargetSpec {
    pub cap: CapSpec,
    #[serde(default)]
    pub explicit: Option<Vec<PointMass>>,
    #[serde(default)]
    pub continuous: Option<ContinuousTarget>,
}

#[derive(Clone, Copy, Debug, Deserialize, Serialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct PointMass {
    pub direction: [f64; 3],
    pub energy: f64,
}

#[derive(Clone, Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
pub struct ContinuousTarget {
    pub density: DensitySpec,
    pub cell_count: usize,
    #[serde(default = "default_fine")]
    pub fine_grid_size: usize,
    /// Rescales the discretized energies to this total.
    #[serde(default)]
    pub total_energy: Option<f64>,
}

fn default_fine() -> usize {
    20_000
}

impl RunConfig {
    pub fn load(path: &Path) -> anyhow::Result<(Self, PathBuf)> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        let cfg: Self = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok((cfg, base))
    }

    pub fn medium(&self) -> negaref::Result<MediumPair64> {
        let m = &self.medium;
        let pair = match (m.n1, m.n2, m.kappa) {
            (Some(n1), Some(n2), k) => {
                let pair = MediumPair64::from_indices(n1, n2, m.z1, m.z2, m.alpha)?;
                if let Some(k) = k {
                    if (k - pair.kappa).abs() > 1e-12 * k.abs() {
                        return Err(negaref::Error::Config(format!(
                            "kappa = {k} disagrees with n2/n1 = {}",
                            pair.kappa
                        )));
                    }
                }
                pair
            }
            (None, None, Some(k)) => MediumPair64::from_kappa(k, m.z2 / m.z1, m.alpha)?,
            _ => {
                return Err(negaref::Error::Config(
                    "medium needs both n1 and n2, or kappa alone".into(),
                ))
            }
        };
        if let Some(r) = self.regime {
            if r != pair.regime() {
                return Err(negaref::Error::Config(format!(
                    "configured regime {r:?} does not match kappa = {} ({:?})",
                    pair.kappa,
                    pair.regime()
                )));
            }
        }
        Ok(pair)
    }

    pub fn source_cap(&self) -> negaref::Result<SphericalCap64> {
        cap(&self.source.cap)
    }

    pub fn target_cap(&self) -> negaref::Result<SphericalCap64> {
        cap(&self.target.cap)
    }

    pub fn source_density(&self, base: &Path, grid_size: usize) -> anyhow::Result<SourceDensity64> {
        density(&self.source.density, base, grid_size)
    }

    /// Explicit point masses, or the discretized continuous target.
    pub fn targets(&self, base: &Path) -> anyhow::Result<TargetMeasure64> {
        match (&self.target.explicit, &self.target.continuous) {
            (Some(list), None) => {
                let dirs = list
                    .iter()
                    .map(|p| Direction64::normalized(p.direction[0], p.direction[1], p.direction[2]))
                    .collect::<negaref::Result<Vec<_>>>()?;
                Ok(TargetMeasure64::new(dirs, list.iter().map(|p| p.energy).collect())?)
            }
            (None, Some(c)) => Ok(self.discretize(c, base)?.targets),
            _ => bail!(negaref::Error::Config(
                "target needs exactly one of `explicit` or `continuous`".into()
            )),
        }
    }

    pub fn discretize(&self, c: &ContinuousTarget, base: &Path) -> anyhow::Result<negaref::Discretization<f64>> {
        let g = density(&c.density, base, c.fine_grid_size)?;
        let mut d = discretize_target(&g, self.target_cap()?, c.cell_count, c.fine_grid_size)?;
        if let Some(total) = c.total_energy {
            d.targets = d.targets.scaled(total / d.targets.total());
        }
        Ok(d)
    }
}

fn cap(c: &CapSpec) -> negaref::Result<SphericalCap64> {
    let axis = Direction64::normalized(c.axis[0], c.axis[1], c.axis[2])?;
    SphericalCap64::new(axis, c.angular_radius)
}

fn density(spec: &DensitySpec, base: &Path, nodes: usize) -> anyhow::Result<SourceDensity64> {
    Ok(match spec {
        DensitySpec::Uniform { value } => SourceDensity64::uniform(*value),
        DensitySpec::CosinePower { axis, exponent } => SourceDensity64::CosinePower {
            axis: Direction64::normalized(axis[0], axis[1], axis[2])?,
            exponent: *exponent,
        },
        DensitySpec::Tabulated { csv } => SourceDensity64::Tabulated { values: read_table(&base.join(csv), nodes)? },
    })
}

#[derive(Deserialize)]
struct Row {
    node: usize,
    value: f64,
}

fn read_table(path: &Path, nodes: usize) -> anyhow::Result<Vec<f64>> {
    let mut rdr = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut values = vec![f64::NAN; nodes];
    for row in rdr.deserialize() {
        let r: Row = row.with_context(|| format!("parsing {}", path.display()))?;
        if r.node >= nodes {
            bail!(negaref::Error::Density(format!("node {} outside a {nodes}-node grid", r.node)));
        }
        values[r.node] = r.value;
    }
    if let Some(j) = values.iter().position(|v| v.is_nan()) {
        bail!(negaref::Error::Density(format!("no tabulated value for node {j}")));
    }
    Ok(values)
}

#![allow(dead_code)]

use negaref::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const EPSILON: f64 = 0.1;

pub fn north_cap(r: f64) -> SphericalCap64 {
    SphericalCap::new(Direction::north(), r).unwrap()
}

/// Uniform on the cap's area.
pub fn random_in_cap(cap: &SphericalCap64, rng: &mut ChaCha8Rng) -> Direction64 {
    let c = 1.0 - rng.gen::<f64>() * (1.0 - cap.angular_radius.cos());
    cap.direction_at(c.acos(), rng.gen::<f64>() * std::f64::consts::TAU)
}

pub struct Scenario {
    pub medium: MediumPair64,
    pub grid: QuadratureGrid64,
    pub density: SourceDensity64,
    pub targets: TargetMeasure64,
}

impl Scenario {
    pub fn problem(&self) -> Problem<'_, f64> {
        Problem {
            medium: self.medium,
            density: &self.density,
            grid: &self.grid,
            targets: &self.targets,
            epsilon: EPSILON,
            lossless: false,
        }
    }
}

/// Target total that leaves `slack` over the worst-case budget.
pub fn budget_total(medium: &MediumPair64, density: &SourceDensity64, grid: &QuadratureGrid64, slack: f64) -> f64 {
    let c = fresnel_bound(medium, EPSILON).unwrap().c_eps;
    total_energy(density, grid).unwrap() * (1.0 - c) / (1.0 + slack)
}

/// Source cap 0.4 with uniform intensity, `l` random targets in the cap of
/// radius 0.3 about the same axis, `g_i ~ U(0.5, 1.5)` rescaled so the budget
/// holds with 10% slack.
pub fn random_scenario(kappa: f64, l: usize, nodes: usize, seed: u64) -> Scenario {
    let medium = MediumPair::from_kappa(kappa, 1.2, 0.5).unwrap();
    let grid = build_grid(north_cap(0.4), nodes).unwrap();
    let density = SourceDensity::uniform(1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tcap = north_cap(0.3);
    let dirs: Vec<_> = (0..l).map(|_| random_in_cap(&tcap, &mut rng)).collect();
    let raw: Vec<f64> = (0..l).map(|_| rng.gen_range(0.5..1.5)).collect();
    let sum: f64 = raw.iter().sum();
    let mu = budget_total(&medium, &density, &grid, 0.1);
    let targets = TargetMeasure::new(dirs, raw.iter().map(|g| g * mu / sum).collect()).unwrap();
    Scenario { medium, grid, density, targets }
}

//! Supporting quadrics, the piecewise-quadric refractor `rho = max/min_i b_i/(1 - kappa m_i·x)`
//! and its trace map on a quadrature grid.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{MediumPair, Regime};
use crate::scalar::Scalar;
use crate::sphere::{Direction, QuadratureGrid};

/// Default relative tolerance below which two supporting quadrics count as tied.
pub const DEFAULT_TIE_TOL: f64 = 1e-9;

/// Minimum angular separation between two target directions.
pub const MIN_TARGET_SEPARATION: f64 = 1e-9;

/// Point masses `g_i` at directions `m_i`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct TargetMeasure<T> {
    directions: Vec<Direction<T>>,
    energies: Vec<T>,
}

impl<T: Scalar> TargetMeasure<T> {
    pub fn new(directions: Vec<Direction<T>>, energies: Vec<T>) -> Result<Self> {
        if directions.len() != energies.len() {
            return Err(Error::Config("targets: direction/energy length mismatch".into()));
        }
        if directions.len() < 2 {
            return Err(Error::Config(format!(
                "at least two targets are required, got {}",
                directions.len()
            )));
        }
        if let Some(i) = energies.iter().position(|g| !(*g > T::zero()) || !g.is_finite()) {
            return Err(Error::Config(format!("target {i} has non-positive energy {}", energies[i])));
        }
        let sep = T::lit(MIN_TARGET_SEPARATION);
        for i in 0..directions.len() {
            for j in 0..i {
                if directions[i].angle_to(&directions[j]) <= sep {
                    return Err(Error::Config(format!("targets {j} and {i} coincide")));
                }
            }
        }
        Ok(Self { directions, energies })
    }

    /// A lone point mass. Bypasses the two-target minimum; only meaningful for
    /// a single supporting quadric (focal-property checks, degenerate tests).
    pub fn single(direction: Direction<T>, energy: T) -> Self {
        Self { directions: vec![direction], energies: vec![energy] }
    }

    pub fn directions(&self) -> &[Direction<T>] {
        &self.directions
    }

    pub fn energies(&self) -> &[T] {
        &self.energies
    }

    pub fn len(&self) -> usize {
        self.directions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.directions.is_empty()
    }

    pub fn total(&self) -> T {
        crate::scalar::csum(self.energies.iter().copied())
    }

    /// Multiplies every energy by `factor > 0`.
    pub fn scaled(&self, factor: T) -> Self {
        Self {
            directions: self.directions.clone(),
            energies: self.energies.iter().map(|&g| g * factor).collect(),
        }
    }
}

/// How the overall scale of `b` was fixed.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Normalization {
    /// `b_1 = 1`.
    GaugeB1,
    /// `min rho = 1` over the grid it was normalized on.
    MinRadiusOne,
    /// Arbitrary scale.
    None,
}

/// The refractor `Gamma(b)`: regime, targets and focal parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct RefractorSolution<T> {
    pub regime: Regime,
    pub targets: TargetMeasure<T>,
    pub b: Vec<T>,
    pub medium: MediumPair<T>,
    pub normalization: Normalization,
}

impl<T: Scalar> RefractorSolution<T> {
    pub fn new(medium: MediumPair<T>, targets: TargetMeasure<T>, b: Vec<T>) -> Result<Self> {
        let sol = Self {
            regime: medium.regime(),
            targets,
            b,
            medium,
            normalization: Normalization::None,
        };
        sol.validate()?;
        Ok(sol.with_detected_gauge())
    }

    /// One supporting quadric `b / (1 - kappa m·x)`.
    pub fn single_quadric(medium: MediumPair<T>, m: Direction<T>, b: T) -> Result<Self> {
        Self::new(medium, TargetMeasure::single(m, T::one()), vec![b])
    }

    pub fn validate(&self) -> Result<()> {
        self.medium.validate()?;
        if self.regime != self.medium.regime() {
            return Err(Error::Config(format!(
                "regime {:?} does not match kappa = {}",
                self.regime, self.medium.kappa
            )));
        }
        if self.b.len() != self.targets.len() {
            return Err(Error::Config("b and targets differ in length".into()));
        }
        if self.b.iter().any(|b| !(*b > T::zero()) || !b.is_finite()) {
            return Err(Error::Config("focal parameters must be positive and finite".into()));
        }
        Ok(())
    }

    fn with_detected_gauge(mut self) -> Self {
        if self.b.first() == Some(&T::one()) {
            self.normalization = Normalization::GaugeB1;
        }
        self
    }

    /// `Gamma(c b) = c Gamma(b)`.
    pub fn scaled(&self, c: T) -> Self {
        Self {
            b: self.b.iter().map(|&b| b * c).collect(),
            normalization: Normalization::None,
            ..self.clone()
        }
    }

    pub fn len(&self) -> usize {
        self.b.len()
    }

    pub fn is_empty(&self) -> bool {
        self.b.is_empty()
    }

    /// Open bracket for `b_i / b_1`, `i >= 2`, within which every feasible
    /// solution lies: `(0, (1-kappa)/(-eps kappa))` for hyperboloids and
    /// `(1+kappa, 1/(1+kappa)]` for ellipsoids.
    pub fn parameter_bracket(&self, epsilon: T) -> (T, T) {
        parameter_bracket(&self.medium, epsilon)
    }

    /// Whether every `b_i / b_1` lies inside [`Self::parameter_bracket`].
    pub fn within_bracket(&self, epsilon: T) -> bool {
        let (lo, hi) = self.parameter_bracket(epsilon);
        let b1 = self.b[0];
        self.b.iter().skip(1).all(|&b| {
            let r = b / b1;
            match self.regime {
                Regime::HyperboloidMax => r > lo && r < hi,
                Regime::EllipsoidMin => r > lo && r <= hi * (T::one() + T::lit(1e-12)),
            }
        })
    }
}

pub fn parameter_bracket<T: Scalar>(medium: &MediumPair<T>, epsilon: T) -> (T, T) {
    let k = medium.kappa;
    match medium.regime() {
        Regime::HyperboloidMax => (T::zero(), (T::one() - k) / (-epsilon * k)),
        Regime::EllipsoidMin => (T::one() + k, (T::one() + k).recip()),
    }
}

/// Bound on `max rho` once `min rho = 1`: `(1-kappa)/(-eps kappa)` for
/// hyperboloids, `1/(1+kappa)` for ellipsoids.
pub fn normalized_height_bound<T: Scalar>(medium: &MediumPair<T>, epsilon: T) -> T {
    let k = medium.kappa;
    match medium.regime() {
        Regime::HyperboloidMax => (T::one() - k) / (-epsilon * k),
        Regime::EllipsoidMin => (T::one() + k).recip(),
    }
}

/// Lipschitz constant of a refractor with `max rho = max_rho`:
/// `max_rho / (eps^2 |kappa|)` for hyperboloids, `max_rho |kappa| / (1 - kappa^2)` for ellipsoids.
pub fn lipschitz_constant<T: Scalar>(medium: &MediumPair<T>, epsilon: T, max_rho: T) -> T {
    let k = medium.kappa;
    match medium.regime() {
        Regime::HyperboloidMax => max_rho / (epsilon * epsilon * k.abs()),
        Regime::EllipsoidMin => max_rho * k.abs() / (T::one() - k * k),
    }
}

/// Radial function `b / (1 - kappa m·x)` of the quadric focusing into `m`.
pub fn quadric_radius<T: Scalar>(m: &Direction<T>, b: T, x: &Direction<T>, kappa: T) -> Result<T> {
    let den = T::one() - kappa * m.dot(x);
    if !(den > T::zero()) {
        return Err(Error::Domain(format!("1 - kappa m·x = {den} <= 0: inadmissible pair")));
    }
    Ok(b / den)
}

/// Outward unit normal `(x - kappa m)/|x - kappa m|` of the quadric through `rho(x) x`.
pub fn quadric_normal<T: Scalar>(m: &Direction<T>, x: &Direction<T>, kappa: T) -> Result<Direction<T>> {
    (x.vec() - m.vec().scale(kappa))
        .try_normalize()
        .ok_or_else(|| Error::Domain("x - kappa m vanishes".into()))
}

/// Envelope evaluation at one direction.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnvelopePoint<T> {
    pub rho: T,
    pub winner: usize,
    pub tie: bool,
    /// `|top - second|` among candidate quadric values; infinite for one target.
    pub margin: T,
}

/// `max_i` (hyperboloids) or `min_i` (ellipsoids) of the supporting quadrics at `x`.
///
/// Values within `tie_tol * top` of the extreme are tied; the lowest tied index wins.
pub fn envelope_radius<T: Scalar>(sol: &RefractorSolution<T>, x: &Direction<T>, tie_tol: T) -> Result<EnvelopePoint<T>> {
    let kappa = sol.medium.kappa;
    let mut values = Vec::with_capacity(sol.len());
    for (m, &b) in sol.targets.directions().iter().zip(&sol.b) {
        values.push(quadric_radius(m, b, x, kappa)?);
    }
    Ok(select_extreme(&values, sol.regime, tie_tol))
}

pub(crate) fn select_extreme<T: Scalar>(values: &[T], regime: Regime, tie_tol: T) -> EnvelopePoint<T> {
    let better = |a: T, b: T| match regime {
        Regime::HyperboloidMax => a > b,
        Regime::EllipsoidMin => a < b,
    };
    let mut top = 0usize;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if better(v, values[top]) {
            top = i;
        }
    }
    let top_val = values[top];
    let mut second: Option<T> = None;
    for (i, &v) in values.iter().enumerate() {
        if i != top && second.is_none_or(|s| better(v, s)) {
            second = Some(v);
        }
    }
    let margin = second.map_or(T::infinity(), |s| (top_val - s).abs());
    let tol = tie_tol * top_val.abs();
    let tie = margin <= tol;
    let winner = if tie {
        values.iter().position(|&v| (v - top_val).abs() <= tol).unwrap_or(top)
    } else {
        top
    };
    EnvelopePoint { rho: top_val, winner, tie, margin }
}

/// Per-node envelope winner, radius, tie flag and winning margin.
#[derive(Clone, Debug, PartialEq)]
pub struct CellAssignment<T> {
    pub winner: Vec<usize>,
    pub rho: Vec<T>,
    pub tie: Vec<bool>,
    pub margin: Vec<T>,
}

impl<T: Scalar> CellAssignment<T> {
    pub fn len(&self) -> usize {
        self.winner.len()
    }

    pub fn is_empty(&self) -> bool {
        self.winner.is_empty()
    }

    pub fn tie_fraction(&self) -> f64 {
        if self.tie.is_empty() {
            return 0.0;
        }
        self.tie.iter().filter(|&&t| t).count() as f64 / self.tie.len() as f64
    }

    /// Number of nodes per cell.
    pub fn counts(&self, cells: usize) -> Vec<usize> {
        let mut c = vec![0; cells];
        for &w in &self.winner {
            c[w] += 1;
        }
        c
    }

    pub fn min_rho(&self) -> T {
        self.rho.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_rho(&self) -> T {
        self.rho.iter().copied().fold(T::neg_infinity(), T::max)
    }
}

/// Assigns every grid node to its supporting quadric. Node order follows the
/// grid; evaluation is sharded across threads.
pub fn trace_cells<T: Scalar>(sol: &RefractorSolution<T>, grid: &QuadratureGrid<T>, tie_tol: T) -> Result<CellAssignment<T>> {
    let points: Vec<EnvelopePoint<T>> = grid
        .nodes()
        .par_iter()
        .map(|x| envelope_radius(sol, x, tie_tol))
        .collect::<Result<_>>()?;
    let mut out = CellAssignment {
        winner: Vec::with_capacity(points.len()),
        rho: Vec::with_capacity(points.len()),
        tie: Vec::with_capacity(points.len()),
        margin: Vec::with_capacity(points.len()),
    };
    for p in points {
        out.winner.push(p.winner);
        out.rho.push(p.rho);
        out.tie.push(p.tie);
        out.margin.push(p.margin);
    }
    Ok(out)
}

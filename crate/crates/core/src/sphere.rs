//! Unit-sphere geometry: vectors, directions, spherical caps and the
//! equal-area quadrature grids used for every integral over a cap.

use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Ambient dimension. Everything downstream assumes directions live on S².
pub const DIM: usize = 3;

/// Unit-norm tolerance for [`Direction`].
pub const UNIT_TOL: f64 = 1e-12;

/// Smallest node count accepted by [`build_grid`].
pub const MIN_GRID_NODES: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3<T>(pub [T; DIM]);

impl<T: Scalar> Vec3<T> {
    pub fn new(x: T, y: T, z: T) -> Self {
        Self([x, y, z])
    }

    pub fn zero() -> Self {
        Self([T::zero(); DIM])
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0[0] * o.0[0] + self.0[1] * o.0[1] + self.0[2] * o.0[2]
    }

    #[inline]
    pub fn cross(&self, o: &Self) -> Self {
        let [a, b, c] = self.0;
        let [d, e, f] = o.0;
        Self([b * f - c * e, c * d - a * f, a * e - b * d])
    }

    #[inline]
    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn scale(&self, s: T) -> Self {
        Self([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }

    /// Returns `None` for the zero vector.
    pub fn try_normalize(&self) -> Option<Direction<T>> {
        let n = self.norm();
        if n > T::zero() && n.is_finite() {
            Some(Direction(self.scale(n.recip())))
        } else {
            None
        }
    }
}

impl<T: Scalar> Add for Vec3<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl<T: Scalar> Sub for Vec3<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl<T: Scalar> Neg for Vec3<T> {
    type Output = Self;
    fn neg(self) -> Self {
        Self([-self.0[0], -self.0[1], -self.0[2]])
    }
}

impl<T: Scalar> Mul<T> for Vec3<T> {
    type Output = Self;
    fn mul(self, s: T) -> Self {
        self.scale(s)
    }
}

/// A point on the unit sphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[T; 3]", into = "[T; 3]")]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct Direction<T>(Vec3<T>);

impl<T: Scalar> Direction<T> {
    /// Checked constructor: the components must already have unit norm.
    pub fn new(x: T, y: T, z: T) -> Result<Self> {
        let v = Vec3::new(x, y, z);
        let n = v.norm();
        if !((n - T::one()).abs() <= T::lit(UNIT_TOL)) {
            return Err(Error::Domain(format!("direction norm {n} is not 1")));
        }
        Ok(Self(v))
    }

    /// Normalizes arbitrary nonzero components.
    pub fn normalized(x: T, y: T, z: T) -> Result<Self> {
        Vec3::new(x, y, z)
            .try_normalize()
            .ok_or_else(|| Error::Domain("cannot normalize the zero vector".into()))
    }

    /// Wraps a vector already known to be unit length (closed-form results).
    #[inline]
    pub(crate) fn from_unit_vec(v: Vec3<T>) -> Self {
        Self(v)
    }

    pub fn north() -> Self {
        Self(Vec3::new(T::zero(), T::zero(), T::one()))
    }

    /// Point at polar angle `theta` and azimuth `phi` about the +z axis.
    pub fn from_spherical(theta: T, phi: T) -> Self {
        let (st, ct) = theta.sin_cos();
        let (sp, cp) = phi.sin_cos();
        Self(Vec3::new(st * cp, st * sp, ct))
    }

    #[inline]
    pub fn vec(&self) -> Vec3<T> {
        self.0
    }

    #[inline]
    pub fn components(&self) -> [T; 3] {
        self.0 .0
    }

    #[inline]
    pub fn dot(&self, o: &Self) -> T {
        self.0.dot(&o.0)
    }

    /// Great-circle angle to `o`, accurate for nearly parallel directions.
    pub fn angle_to(&self, o: &Self) -> T {
        let c = self.0.cross(&o.0).norm();
        let d = self.dot(o);
        c.atan2(d)
    }

    /// An orthonormal pair `(u, v)` with `u × v = self`. Deterministic.
    pub fn tangent_frame(&self) -> (Vec3<T>, Vec3<T>) {
        let a = self.0;
        let helper = if a.0[0].abs() < T::lit(0.9) {
            Vec3::new(T::one(), T::zero(), T::zero())
        } else {
            Vec3::new(T::zero(), T::one(), T::zero())
        };
        let u = helper.cross(&a);
        let u = u.scale(u.norm().recip());
        let v = a.cross(&u);
        (u, v)
    }

    /// Rotates `self` by `angle` along the great circle leaving `toward` behind,
    /// i.e. away from `toward`. Falls back to an arbitrary tangent when the two
    /// are parallel.
    pub(crate) fn rotate_away_from(&self, toward: &Self, angle: T) -> Self {
        let a = self.0;
        let t = toward.0 - a.scale(a.dot(&toward.0));
        let tangent = match t.try_normalize() {
            Some(d) => -d.0,
            None => self.tangent_frame().0,
        };
        self.rotate_along(&tangent, angle)
    }

    /// Moves `angle` along the great circle with unit tangent `tangent` at `self`.
    pub(crate) fn rotate_along(&self, tangent: &Vec3<T>, angle: T) -> Self {
        let (s, c) = angle.sin_cos();
        Self(self.0.scale(c) + tangent.scale(s))
    }
}

impl<T: Scalar> TryFrom<[T; 3]> for Direction<T> {
    type Error = Error;
    fn try_from(v: [T; 3]) -> Result<Self> {
        Self::new(v[0], v[1], v[2])
    }
}

impl<T: Scalar> From<Direction<T>> for [T; 3] {
    fn from(d: Direction<T>) -> Self {
        d.components()
    }
}

/// Spherical cap `{x : axis·x ≥ cos(angular_radius)}` inside an open hemisphere.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(bound(serialize = "T: Scalar + Serialize", deserialize = "T: Scalar + Deserialize<'de>"))]
pub struct SphericalCap<T> {
    pub axis: Direction<T>,
    pub angular_radius: T,
}

impl<T: Scalar> SphericalCap<T> {
    pub fn new(axis: Direction<T>, angular_radius: T) -> Result<Self> {
        if !(angular_radius > T::zero() && angular_radius < T::FRAC_PI_2()) {
            return Err(Error::Config(format!(
                "cap angular radius {angular_radius} must lie in (0, pi/2)"
            )));
        }
        Ok(Self { axis, angular_radius })
    }

    pub fn validate(&self) -> Result<()> {
        Self::new(self.axis, self.angular_radius).map(|_| ())
    }

    pub fn area(&self) -> T {
        T::lit(2.0) * T::PI() * (T::one() - self.angular_radius.cos())
    }

    /// Direction at angle `polar` from the axis and azimuth `azimuth` in the axis' tangent frame.
    pub fn direction_at(&self, polar: T, azimuth: T) -> Direction<T> {
        let (u, v) = self.axis.tangent_frame();
        let (sp, cp) = polar.sin_cos();
        let (sa, ca) = azimuth.sin_cos();
        Direction::from_unit_vec(self.axis.vec().scale(cp) + (u.scale(ca) + v.scale(sa)).scale(sp))
    }

    pub fn contains(&self, x: &Direction<T>) -> bool {
        self.axis.dot(x) >= self.angular_radius.cos() - T::lit(UNIT_TOL)
    }
}

/// Quadrature nodes with positive weights (steradians) covering a cap.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureGrid<T> {
    nodes: Vec<Direction<T>>,
    weights: Vec<T>,
    cap: SphericalCap<T>,
}

impl<T: Scalar> QuadratureGrid<T> {
    pub fn nodes(&self) -> &[Direction<T>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[T] {
        &self.weights
    }

    pub fn cap(&self) -> &SphericalCap<T> {
        &self.cap
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn total_weight(&self) -> T {
        crate::scalar::csum(self.weights.iter().copied())
    }
}

/// Fibonacci-lattice points on a cap with equal weights. No lower bound on `n`;
/// used both by [`build_grid`] and for seeding target partitions.
pub(crate) fn fibonacci_cap<T: Scalar>(cap: &SphericalCap<T>, n: usize) -> Vec<Direction<T>> {
    let (u, v) = cap.axis.tangent_frame();
    let a = cap.axis.vec();
    let one_minus_cos = T::one() - cap.angular_radius.cos();
    let golden = T::PI() * (T::lit(3.0) - T::lit(5.0).sqrt());
    let nf = T::from_usize_lossy(n);
    (0..n)
        .map(|k| {
            let kf = T::from_usize_lossy(k);
            // equal-area bands in the cap's local height coordinate
            let z = T::one() - one_minus_cos * (kf + T::lit(0.5)) / nf;
            let r = (T::one() - z * z).max(T::zero()).sqrt();
            let (s, c) = (golden * kf).sin_cos();
            let p = a.scale(z) + u.scale(r * c) + v.scale(r * s);
            // renormalize to absorb rounding in the frame
            p.try_normalize().expect("lattice point is nonzero")
        })
        .collect()
}

/// Builds a near-equal-area Fibonacci grid with `node_count` nodes on `cap`.
pub fn build_grid<T: Scalar>(cap: SphericalCap<T>, node_count: usize) -> Result<QuadratureGrid<T>> {
    cap.validate()?;
    if node_count < MIN_GRID_NODES {
        return Err(Error::Config(format!(
            "grid needs at least {MIN_GRID_NODES} nodes, got {node_count}"
        )));
    }
    let nodes = fibonacci_cap(&cap, node_count);
    let w = cap.area() / T::from_usize_lossy(node_count);
    Ok(QuadratureGrid { nodes, weights: vec![w; node_count], cap })
}

/// Orthogonal projection of an upper-hemisphere direction onto the equatorial plane.
pub fn project_to_plane<T: Scalar>(x: &Direction<T>) -> Result<[T; 2]> {
    let [a, b, c] = x.components();
    if !(c > T::zero()) {
        return Err(Error::Domain(format!(
            "third component {c} is not positive: point outside the upper hemisphere"
        )));
    }
    Ok([a, b])
}

/// Inverse of [`project_to_plane`]: `(x, sqrt(1 - |x|^2))`.
pub fn lift_from_plane<T: Scalar>(p: [T; 2]) -> Result<Direction<T>> {
    let r2 = p[0] * p[0] + p[1] * p[1];
    if !(r2 < T::one()) {
        return Err(Error::Domain(format!("|x|^2 = {r2} is not inside the unit disk")));
    }
    Ok(Direction(Vec3::new(p[0], p[1], (T::one() - r2).sqrt())))
}

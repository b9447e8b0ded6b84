//! Monge-Ampère diagnostics on the projected chart `x ↦ (x, sqrt(1 - |x|^2))`.
//!
//! For a smooth radial graph `rho` the refracted direction, projected back to
//! the plane, is `y = (omega x + h Drho)/kappa` with
//! `h = Phi(rho/R)/R`, `R^2 = rho^2 - (x·Drho)^2 + |Drho|^2` and
//! `omega = 1 - h (rho + Drho·x)`. Differentiating gives
//! `kappa Dy = B + C D^2 rho`, hence `det Dy = det C det(C^-1 B + D^2 rho) / kappa^2`.
//! Here `h` is treated as a function of `(x, z, p)` with `z = rho`, `p = Drho`.

use std::ops::{Add, Mul, Sub};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::optics::{phi, snell_refract, transmission_at, MediumPair};
use crate::refractor::{envelope_radius, quadric_radius, RefractorSolution};
use crate::scalar::Scalar;
use crate::sphere::{lift_from_plane, Direction, SphericalCap, Vec3};

/// Dimension of the projected chart.
const N: usize = 2;

/// Below this `|det C|` the chart is declared degenerate.
pub const DET_C_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2<T>(pub [[T; 2]; 2]);

impl<T: Scalar> Mat2<T> {
    pub fn identity() -> Self {
        Self([[T::one(), T::zero()], [T::zero(), T::one()]])
    }

    /// `a ⊗ b`, entries `a_i b_j`.
    pub fn outer(a: [T; 2], b: [T; 2]) -> Self {
        Self([[a[0] * b[0], a[0] * b[1]], [a[1] * b[0], a[1] * b[1]]])
    }

    pub fn det(&self) -> T {
        let m = self.0;
        m[0][0] * m[1][1] - m[0][1] * m[1][0]
    }

    pub fn inverse(&self) -> Option<Self> {
        let d = self.det();
        if d == T::zero() {
            return None;
        }
        let m = self.0;
        Some(Self([[m[1][1] / d, -m[0][1] / d], [-m[1][0] / d, m[0][0] / d]]))
    }

    pub fn scale(&self, s: T) -> Self {
        Self(self.0.map(|r| r.map(|v| v * s)))
    }

    pub fn norm(&self) -> T {
        self.0.iter().flatten().map(|&v| v * v).fold(T::zero(), |a, b| a + b).sqrt()
    }
}

impl<T: Scalar> Add for Mat2<T> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        let (a, b) = (self.0, o.0);
        Self([[a[0][0] + b[0][0], a[0][1] + b[0][1]], [a[1][0] + b[1][0], a[1][1] + b[1][1]]])
    }
}

impl<T: Scalar> Sub for Mat2<T> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        self + o.scale(-T::one())
    }
}

impl<T: Scalar> Mul for Mat2<T> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self.0, o.0);
        let mut r = [[T::zero(); 2]; 2];
        for i in 0..2 {
            for j in 0..2 {
                r[i][j] = a[i][0] * b[0][j] + a[i][1] * b[1][j];
            }
        }
        Self(r)
    }
}

fn dot2<T: Scalar>(a: [T; 2], b: [T; 2]) -> T {
    a[0] * b[0] + a[1] * b[1]
}

/// A radial function `rho` on the projected chart.
pub trait RadialField<T: Scalar>: Sync {
    fn rho(&self, x: [T; 2]) -> Result<T>;

    /// `Drho`. Central differences unless overridden.
    fn gradient(&self, x: [T; 2]) -> Result<[T; 2]> {
        let e = T::lit(1e-6);
        let mut g = [T::zero(); 2];
        for (k, gk) in g.iter_mut().enumerate() {
            let (mut a, mut b) = (x, x);
            a[k] += e;
            b[k] -= e;
            *gk = (self.rho(a)? - self.rho(b)?) / (e + e);
        }
        Ok(g)
    }

    /// Whether `rho` is C^2 everywhere on its domain.
    fn is_smooth(&self) -> bool {
        true
    }
}

/// One supporting quadric `b / (1 - kappa m·X)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadricField<T> {
    pub m: Direction<T>,
    pub b: T,
    pub kappa: T,
}

impl<T: Scalar> RadialField<T> for QuadricField<T> {
    fn rho(&self, x: [T; 2]) -> Result<T> {
        quadric_radius(&self.m, self.b, &lift_from_plane(x)?, self.kappa)
    }

    fn gradient(&self, x: [T; 2]) -> Result<[T; 2]> {
        // d/dx_k of m·X = m_k - m_3 x_k / X_3
        let x3 = lift_from_plane(x)?.components()[2];
        let m = self.m.components();
        let rho = self.rho(x)?;
        let c = self.kappa * rho * rho / self.b;
        Ok([c * (m[0] - m[2] * x[0] / x3), c * (m[1] - m[2] * x[1] / x3)])
    }
}

/// `rho_0 (1 + a exp(-|x - c|^2 / w^2))`: a quadric with a smooth bump.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct PerturbedField<T> {
    pub base: QuadricField<T>,
    pub amplitude: T,
    pub center: [T; 2],
    pub width: T,
}

impl<T: Scalar> PerturbedField<T> {
    fn bump(&self, x: [T; 2]) -> (T, [T; 2]) {
        let d = [x[0] - self.center[0], x[1] - self.center[1]];
        let w2 = self.width * self.width;
        let e = self.amplitude * (-dot2(d, d) / w2).exp();
        let k = -(e + e) / w2;
        (e, [k * d[0], k * d[1]])
    }
}

impl<T: Scalar> RadialField<T> for PerturbedField<T> {
    fn rho(&self, x: [T; 2]) -> Result<T> {
        Ok(self.base.rho(x)? * (T::one() + self.bump(x).0))
    }

    fn gradient(&self, x: [T; 2]) -> Result<[T; 2]> {
        let r = self.base.rho(x)?;
        let g = self.base.gradient(x)?;
        let (e, de) = self.bump(x);
        let one = T::one() + e;
        Ok([g[0] * one + r * de[0], g[1] * one + r * de[1]])
    }
}

/// The piecewise-quadric envelope of a solution. Only Lipschitz across cells.
#[derive(Clone, Debug)]
pub struct EnvelopeField<'a, T> {
    pub solution: &'a RefractorSolution<T>,
    pub tie_tol: T,
}

impl<T: Scalar> RadialField<T> for EnvelopeField<'_, T> {
    fn rho(&self, x: [T; 2]) -> Result<T> {
        Ok(envelope_radius(self.solution, &lift_from_plane(x)?, self.tie_tol)?.rho)
    }

    fn is_smooth(&self) -> bool {
        false
    }
}

/// Outer unit normal of the graph `rho(x) X(x)`, oriented so `X·nu > 0`.
pub fn normal_from_graph<T: Scalar>(x: [T; 2], rho: T, drho: [T; 2]) -> Result<Direction<T>> {
    let s = rho + dot2(drho, x);
    if s.abs() <= T::epsilon() * rho.abs() {
        return Err(Error::Singular(format!("rho + Drho·x = {s} vanishes")));
    }
    let xd = dot2(x, drho);
    let r2 = rho * rho - xd * xd + dot2(drho, drho);
    if !(r2 > T::zero()) {
        return Err(Error::Singular(format!("normal radicand {r2} is not positive")));
    }
    let x3 = (T::one() - dot2(x, x)).sqrt();
    let r = r2.sqrt();
    let v = Vec3::new(s * x[0] - drho[0], s * x[1] - drho[1], s * x3).scale(r.recip());
    let v = if rho < T::zero() { -v } else { v };
    v.try_normalize().ok_or_else(|| Error::Singular("zero normal".into()))
}

/// `h(x, z, p) = Phi(z/R)/R` with `R^2 = z^2 - (x·p)^2 + |p|^2`.
pub fn h_function<T: Scalar>(x: [T; 2], z: T, p: [T; 2], kappa: T) -> Result<T> {
    let xp = dot2(x, p);
    let r2 = z * z - xp * xp + dot2(p, p);
    if !(r2 > T::zero()) {
        return Err(Error::Singular(format!("R^2 = {r2} is not positive")));
    }
    let r = r2.sqrt();
    Ok(phi(z / r, kappa)? / r)
}

/// Pointwise quantities of the Monge-Ampère operator.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaWorkspace<T> {
    pub x: [T; 2],
    pub rho: T,
    pub drho: [T; 2],
    pub d2rho: Mat2<T>,
    pub h: T,
    pub omega: T,
    pub dh_dx: [T; 2],
    pub dh_dz: T,
    pub dh_dp: [T; 2],
    pub b: Mat2<T>,
    pub c: Mat2<T>,
    pub c_inv: Mat2<T>,
    /// `h^2 (1 - |x|^2)(1 - u·D_p h)`.
    pub det_c: T,
    /// `det` of the assembled `C`.
    pub det_c_direct: T,
    /// `u = (rho x / (1 - |x|^2) - Drho) / h`.
    pub u: [T; 2],
}

impl<T: Scalar> MaWorkspace<T> {
    /// `C^-1 B + D^2 rho`.
    pub fn operator(&self) -> Mat2<T> {
        self.c_inv * self.b + self.d2rho
    }

    /// `det Dy` from the identity `kappa^2 det Dy = det C det(C^-1 B + D^2 rho)`.
    pub fn det_dy(&self, kappa: T) -> T {
        self.det_c * self.operator().det() / (kappa * kappa)
    }

    /// Scale of `det(C^-1 B + D^2 rho)` against which its size is judged.
    pub fn operator_scale(&self) -> T {
        let a = (self.c_inv * self.b).norm();
        let d = self.d2rho.norm();
        a.max(d) * a.max(d)
    }
}

fn central<T: Scalar, F: Fn(T) -> Result<T>>(f: F, v: T) -> Result<T> {
    let e = T::lit(1e-6) * (T::one() + v.abs());
    Ok((f(v + e)? - f(v - e)?) / (e + e))
}

/// Checks that the `2 h_fd` stencil around `x` stays inside `domain`.
fn check_margin<T: Scalar>(x: [T; 2], h_fd: T, domain: &SphericalCap<T>) -> Result<()> {
    let two = h_fd + h_fd;
    for (dx, dy) in [(two, T::zero()), (-two, T::zero()), (T::zero(), two), (T::zero(), -two), (T::zero(), T::zero())] {
        let p = [x[0] + dx, x[1] + dy];
        let inside = dot2(p, p) < T::one() && lift_from_plane(p).map(|d| domain.contains(&d)).unwrap_or(false);
        if !inside {
            return Err(Error::Margin(format!(
                "finite-difference stencil of width {} at ({}, {}) leaves the domain",
                two, x[0], x[1]
            )));
        }
    }
    Ok(())
}

/// Derivatives of `rho` by central differences with step `h_fd`, then `h`,
/// `omega`, `B`, `C` and `C^-1` (Sherman–Morrison).
pub fn build_ma_workspace<T: Scalar, F: RadialField<T> + ?Sized>(
    x: [T; 2],
    field: &F,
    medium: &MediumPair<T>,
    h_fd: T,
    domain: &SphericalCap<T>,
) -> Result<MaWorkspace<T>> {
    check_margin(x, h_fd, domain)?;
    let kappa = medium.kappa;
    let at = |dx: T, dy: T| field.rho([x[0] + dx, x[1] + dy]);
    let (e, z) = (h_fd, T::zero());
    let rho = at(z, z)?;
    let (px, mx, py, my) = (at(e, z)?, at(-e, z)?, at(z, e)?, at(z, -e)?);
    let two = T::lit(2.0);
    let drho = [(px - mx) / (two * e), (py - my) / (two * e)];
    let e2 = e * e;
    let rxx = (px - two * rho + mx) / e2;
    let ryy = (py - two * rho + my) / e2;
    let rxy = (at(e, e)? - at(e, -e)? - at(-e, e)? + at(-e, -e)?) / (T::lit(4.0) * e2);
    let d2rho = Mat2([[rxx, rxy], [rxy, ryy]]);

    let hf = |xx: [T; 2], zz: T, pp: [T; 2]| h_function(xx, zz, pp, kappa);
    let h = hf(x, rho, drho)?;
    let s = rho + dot2(drho, x);
    let omega = T::one() - h * s;
    let dh_dx = [
        central(|v| hf([v, x[1]], rho, drho), x[0])?,
        central(|v| hf([x[0], v], rho, drho), x[1])?,
    ];
    let dh_dz = central(|v| hf(x, v, drho), rho)?;
    let dh_dp = [
        central(|v| hf(x, rho, [v, drho[1]]), drho[0])?,
        central(|v| hf(x, rho, [drho[0], v]), drho[1])?,
    ];

    // a = Drho - s x
    let a = [drho[0] - s * x[0], drho[1] - s * x[1]];
    let total_dh = [dh_dx[0] + dh_dz * drho[0], dh_dx[1] + dh_dz * drho[1]];
    let id = Mat2::identity();
    let b = id.scale(omega) + Mat2::outer(a, total_dh) - Mat2::outer(x, drho).scale(two * h);
    let m2 = id - Mat2::outer(x, x);
    let c = m2.scale(h) + Mat2::outer(a, dh_dp);

    let one_minus = T::one() - dot2(x, x);
    let u = [
        (rho * x[0] / one_minus - drho[0]) / h,
        (rho * x[1] / one_minus - drho[1]) / h,
    ];
    let denom = T::one() - dot2(u, dh_dp);
    let det_c = h * h * one_minus * denom;
    let det_c_direct = c.det();
    if det_c.abs() < T::lit(DET_C_FLOOR) {
        return Err(Error::Degenerate(format!("det C = {det_c} at ({}, {})", x[0], x[1])));
    }
    let n_mat = id + Mat2::outer(u, dh_dp).scale(denom.recip());
    let m2_inv = id + Mat2::outer(x, x).scale(one_minus.recip());
    let c_inv = (n_mat * m2_inv).scale(h.recip());

    Ok(MaWorkspace {
        x,
        rho,
        drho,
        d2rho,
        h,
        omega,
        dh_dx,
        dh_dz,
        dh_dp,
        b,
        c,
        c_inv,
        det_c,
        det_c_direct,
        u,
    })
}

/// Refracted direction at chart point `x`, through the vector Snell law and
/// the graph normal. Independent of the `h`, `omega`, `B`, `C` bookkeeping.
pub fn refracted_direction<T: Scalar, F: RadialField<T> + ?Sized>(
    x: [T; 2],
    field: &F,
    medium: &MediumPair<T>,
) -> Result<Direction<T>> {
    let rho = field.rho(x)?;
    let nu = normal_from_graph(x, rho, field.gradient(x)?)?;
    snell_refract(&lift_from_plane(x)?, &nu, medium)
}

/// `det Dy` of the projected refracted map by central differences.
pub fn map_jacobian_fd<T: Scalar, F: RadialField<T> + ?Sized>(
    x: [T; 2],
    field: &F,
    medium: &MediumPair<T>,
    h_fd: T,
) -> Result<T> {
    let y = |dx: T, dy: T| -> Result<[T; 2]> {
        let c = refracted_direction([x[0] + dx, x[1] + dy], field, medium)?.components();
        Ok([c[0], c[1]])
    };
    let (e, z) = (h_fd, T::zero());
    let (px, mx, py, my) = (y(e, z)?, y(-e, z)?, y(z, e)?, y(z, -e)?);
    let two_e = e + e;
    let j = Mat2([
        [(px[0] - mx[0]) / two_e, (py[0] - my[0]) / two_e],
        [(px[1] - mx[1]) / two_e, (py[1] - my[1]) / two_e],
    ]);
    Ok(j.det())
}

/// Source and target intensities for the inequality check.
pub struct Densities<'a, T> {
    /// Source intensity at a chart point.
    pub f: &'a (dyn Fn([T; 2]) -> T + Sync),
    /// Target intensity at a direction.
    pub g: &'a (dyn Fn(&Direction<T>) -> T + Sync),
}

#[derive(Clone, Copy, Debug)]
pub struct MaConfig<T> {
    pub h_fd: T,
    pub lossless: bool,
}

/// One check point.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaPoint {
    pub x: [f64; 2],
    /// `det Dy` by differencing the refracted map.
    pub det_dy_fd: f64,
    /// `det C det(C^-1 B + D^2 rho) / kappa^2`.
    pub det_dy_identity: f64,
    /// `|fd - identity| / max(|fd|, |identity|, scale)`.
    pub identity_rel: f64,
    /// `|det(C^-1 B + D^2 rho)|` over its local scale.
    pub degeneracy: f64,
    /// `|closed-form det C - direct det C| / |det C|`.
    pub det_c_rel: f64,
    /// `|det(D^2 rho + C^-1 B)|` over the energy bound; `<= 1` when the inequality holds.
    pub inequality_ratio: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stats {
    pub max: f64,
    pub mean: f64,
    pub p50: f64,
    pub p95: f64,
}

impl Stats {
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
        Some(Self { max: v[v.len() - 1], mean: v.iter().sum::<f64>() / v.len() as f64, p50: q(0.5), p95: q(0.95) })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MaReport {
    pub points: Vec<MaPoint>,
    pub identity_rel: Option<Stats>,
    pub degeneracy: Option<Stats>,
    pub det_c_rel: Option<Stats>,
    pub inequality_ratio: Option<Stats>,
}

/// Evaluates the Jacobian identity, the single-quadric degeneracy measure and
/// (with densities) the energy inequality at every point.
pub fn ma_jacobian_check<T: Scalar, F: RadialField<T> + ?Sized>(
    field: &F,
    medium: &MediumPair<T>,
    points: &[[T; 2]],
    domain: &SphericalCap<T>,
    cfg: &MaConfig<T>,
    densities: Option<&Densities<'_, T>>,
) -> Result<MaReport> {
    if !field.is_smooth() {
        return Err(Error::Config(
            "the field is only piecewise smooth; evaluate it cell by cell instead".into(),
        ));
    }
    let pts: Vec<MaPoint> = points
        .par_iter()
        .map(|&x| ma_point(x, field, medium, domain, cfg, densities))
        .collect::<Result<_>>()?;
    Ok(summarize(pts))
}

fn ma_point<T: Scalar, F: RadialField<T> + ?Sized>(
    x: [T; 2],
    field: &F,
    medium: &MediumPair<T>,
    domain: &SphericalCap<T>,
    cfg: &MaConfig<T>,
    densities: Option<&Densities<'_, T>>,
) -> Result<MaPoint> {
    let kappa = medium.kappa;
    let ws = build_ma_workspace(x, field, medium, cfg.h_fd, domain)?;
    let op_det = ws.operator().det();
    let rhs = ws.det_dy(kappa);
    let lhs = map_jacobian_fd(x, field, medium, cfg.h_fd)?;
    let scale = ws.det_c.abs() * ws.operator_scale() / (kappa * kappa) + T::epsilon();
    let identity_rel = (lhs - rhs).abs() / lhs.abs().max(rhs.abs()).max(scale);
    let degeneracy = op_det.abs() / (ws.operator_scale() + T::epsilon());
    let det_c_rel = (ws.det_c - ws.det_c_direct).abs() / ws.det_c.abs();

    let inequality_ratio = match densities {
        None => None,
        Some(d) => {
            let y = refracted_direction(x, field, medium)?;
            let cos = lift_from_plane(x)?.dot(&y);
            let t = transmission_at(cos, medium, cfg.lossless)?;
            let one_minus = T::one() - dot2(x, x);
            let denom = (T::one() - dot2(ws.u, ws.dh_dp)).abs();
            let n = T::from_usize_lossy(N + 1);
            let bound = (d.f)(x) * t * ws.omega.abs() * kappa.abs().powf(n - T::lit(2.0))
                / ((d.g)(&y) * ws.h.powf(n - T::one()) * one_minus * denom);
            Some((op_det.abs() / bound).to_f64_lossy())
        }
    };
    Ok(MaPoint {
        x: [x[0].to_f64_lossy(), x[1].to_f64_lossy()],
        det_dy_fd: lhs.to_f64_lossy(),
        det_dy_identity: rhs.to_f64_lossy(),
        identity_rel: identity_rel.to_f64_lossy(),
        degeneracy: degeneracy.to_f64_lossy(),
        det_c_rel: det_c_rel.to_f64_lossy(),
        inequality_ratio,
    })
}

fn summarize(points: Vec<MaPoint>) -> MaReport {
    let col = |f: fn(&MaPoint) -> Option<f64>| Stats::of(&points.iter().filter_map(f).collect::<Vec<_>>());
    MaReport {
        identity_rel: col(|p| Some(p.identity_rel)),
        degeneracy: col(|p| Some(p.degeneracy)),
        det_c_rel: col(|p| Some(p.det_c_rel)),
        inequality_ratio: col(|p| p.inequality_ratio),
        points,
    }
}

/// Runs the checks on a piecewise envelope one cell at a time: each point is
/// evaluated on its winning quadric, and points whose stencil crosses a cell
/// boundary are skipped. Returns the report and the number of skipped points.
pub fn ma_per_cell_check<T: Scalar>(
    sol: &RefractorSolution<T>,
    points: &[[T; 2]],
    domain: &SphericalCap<T>,
    cfg: &MaConfig<T>,
    tie_tol: T,
) -> Result<(MaReport, usize)> {
    let reach = T::lit(2.0) * cfg.h_fd;
    let kappa = sol.medium.kappa;
    let evaluated: Vec<Option<MaPoint>> = points
        .par_iter()
        .map(|&x| {
            let mut cell = None;
            for (dx, dy) in [(T::zero(), T::zero()), (reach, reach), (reach, -reach), (-reach, reach), (-reach, -reach)] {
                let p = lift_from_plane([x[0] + dx, x[1] + dy])?;
                let e = envelope_radius(sol, &p, tie_tol)?;
                if e.tie || cell.is_some_and(|c| c != e.winner) {
                    return Ok(None);
                }
                cell = Some(e.winner);
            }
            let i = cell.unwrap_or(0);
            let q = QuadricField { m: sol.targets.directions()[i], b: sol.b[i], kappa };
            ma_point(x, &q, &sol.medium, domain, cfg, None).map(Some)
        })
        .collect::<Result<_>>()?;
    let skipped = evaluated.iter().filter(|p| p.is_none()).count();
    Ok((summarize(evaluated.into_iter().flatten().collect()), skipped))
}

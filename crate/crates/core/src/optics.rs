//! Refraction into a negative-index medium: the vector Snell law, Fresnel
//! reflection/transmission fractions, the uniform reflection bound `C_eps`
//! and the closed-form admissibility test for a pair of caps.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::sphere::{Direction, SphericalCap, Vec3};

/// Which supporting quadrics build the refractor. Fixed by the relative index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `kappa < -1`: upper envelope (max) of hyperboloids.
    HyperboloidMax,
    /// `-1 < kappa < 0`: lower envelope (min) of ellipsoids.
    EllipsoidMin,
}

impl Regime {
    pub fn from_kappa<T: Scalar>(kappa: T) -> Result<Self> {
        if !(kappa < T::zero()) || !kappa.is_finite() {
            return Err(Error::Config(format!("relative index kappa = {kappa} must be negative")));
        }
        if kappa < -T::one() {
            Ok(Regime::HyperboloidMax)
        } else if kappa > -T::one() {
            Ok(Regime::EllipsoidMin)
        } else {
            Err(Error::Config("kappa = -1 is excluded".into()))
        }
    }
}

/// Material data on both sides of the interface.
///
/// `n1 > 0` is the index of the source medium and `n2 < 0` the index of the
/// left-handed target medium. `alpha`/`beta` are the energy fractions carried
/// by the parallel and perpendicular polarizations.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MediumPair<T> {
    pub n1: T,
    pub n2: T,
    pub kappa: T,
    pub z1: T,
    pub z2: T,
    pub sigma: T,
    pub alpha: T,
    pub beta: T,
}

impl<T: Scalar> MediumPair<T> {
    pub fn from_indices(n1: T, n2: T, z1: T, z2: T, alpha: T) -> Result<Self> {
        if !(n1 > T::zero()) {
            return Err(Error::Config(format!("n1 = {n1} must be positive")));
        }
        if !(n2 < T::zero()) {
            return Err(Error::Config(format!("n2 = {n2} must be negative")));
        }
        if !(z1 > T::zero() && z2 > T::zero()) {
            return Err(Error::Config("wave impedances must be positive".into()));
        }
        if !(alpha >= T::zero() && alpha <= T::one()) {
            return Err(Error::Config(format!("alpha = {alpha} must lie in [0, 1]")));
        }
        let kappa = n2 / n1;
        Regime::from_kappa(kappa)?;
        Ok(Self {
            n1,
            n2,
            kappa,
            z1,
            z2,
            sigma: z2 / z1,
            alpha,
            beta: T::one() - alpha,
        })
    }

    /// Medium with `n1 = 1`, `z1 = 1`, so `n2 = kappa` and `z2 = sigma`.
    pub fn from_kappa(kappa: T, sigma: T, alpha: T) -> Result<Self> {
        Self::from_indices(T::one(), kappa, T::one(), sigma, alpha)
    }

    /// Unpolarized light (`alpha = beta = 1/2`).
    pub fn unpolarized(kappa: T, sigma: T) -> Result<Self> {
        Self::from_kappa(kappa, sigma, T::lit(0.5))
    }

    pub fn regime(&self) -> Regime {
        Regime::from_kappa(self.kappa).expect("validated at construction")
    }

    /// Lower limit of `x·m` for refraction to be possible at all:
    /// `1/kappa` for `kappa < -1`, `kappa` otherwise.
    pub fn threshold(&self) -> T {
        match self.regime() {
            Regime::HyperboloidMax => self.kappa.recip(),
            Regime::EllipsoidMin => self.kappa,
        }
    }

    pub fn validate(&self) -> Result<()> {
        Regime::from_kappa(self.kappa)?;
        if !(self.sigma > T::zero()) {
            return Err(Error::Config("sigma must be positive".into()));
        }
        if (self.alpha + self.beta - T::one()).abs() > T::lit(1e-12) {
            return Err(Error::Config("alpha + beta must equal 1".into()));
        }
        Ok(())
    }
}

/// `Phi(t) = t + |kappa| sqrt(1 - kappa^-2 (1 - t^2))`, the multiple of the
/// normal in `x - kappa m = Phi(x·nu) nu`.
pub fn phi<T: Scalar>(t: T, kappa: T) -> Result<T> {
    let radicand = T::one() - (T::one() - t * t) / (kappa * kappa);
    if radicand < T::zero() {
        return Err(Error::TotalInternalReflection {
            t: t.to_f64_lossy(),
            radicand: radicand.to_f64_lossy(),
        });
    }
    Ok(t + kappa.abs() * radicand.sqrt())
}

/// Refracted direction `m = (x - Phi(x·nu) nu) / kappa` for a ray `x` meeting
/// a surface with unit normal `nu` pointing into the negative-index medium.
pub fn snell_refract<T: Scalar>(
    x: &Direction<T>,
    nu: &Direction<T>,
    medium: &MediumPair<T>,
) -> Result<Direction<T>> {
    let t = x.dot(nu);
    if !(t > T::zero()) {
        return Err(Error::Geometry(format!("x·nu = {t} <= 0: ray strikes the surface from behind")));
    }
    let lambda = phi(t, medium.kappa)?;
    let m = (x.vec() - nu.vec().scale(lambda)).scale(medium.kappa.recip());
    Ok(Direction::from_unit_vec(m))
}

/// Parallel-polarization amplitude ratio `p(t)`.
pub fn fresnel_p<T: Scalar>(t: T, medium: &MediumPair<T>) -> Result<T> {
    let (s, k) = (medium.sigma, medium.kappa);
    let num = s + k - (T::one() + k * s) * t;
    let den = s - k + (T::one() - k * s) * t;
    ratio(num, den, "p")
}

/// Perpendicular-polarization amplitude ratio `q(t)`.
pub fn fresnel_q<T: Scalar>(t: T, medium: &MediumPair<T>) -> Result<T> {
    let (s, k) = (medium.sigma, medium.kappa);
    let num = T::one() + k * s - (s + k) * t;
    let den = T::one() - k * s + (s - k) * t;
    ratio(num, den, "q")
}

fn ratio<T: Scalar>(num: T, den: T, which: &str) -> Result<T> {
    if den.abs() <= T::epsilon() * (T::one() + num.abs()) {
        return Err(Error::Singular(format!("denominator of {which}(t) vanishes")));
    }
    Ok(num / den)
}

/// Reflected energy fraction `psi(t) = alpha p(t)^2 + beta q(t)^2` at `t = x·m`.
pub fn fresnel_psi<T: Scalar>(t: T, medium: &MediumPair<T>) -> Result<T> {
    let p = fresnel_p(t, medium)?;
    let q = fresnel_q(t, medium)?;
    Ok(medium.alpha * p * p + medium.beta * q * q)
}

/// Transmitted energy fraction for a ray `x` refracted into `m`.
///
/// Exactly `1 - fresnel_psi(x·m)`; identically 1 in lossless mode.
pub fn fresnel_transmission<T: Scalar>(
    x: &Direction<T>,
    m: &Direction<T>,
    medium: &MediumPair<T>,
    lossless: bool,
) -> Result<T> {
    transmission_at(x.dot(m), medium, lossless)
}

/// [`fresnel_transmission`] expressed through `t = x·m`.
pub fn transmission_at<T: Scalar>(t: T, medium: &MediumPair<T>, lossless: bool) -> Result<T> {
    if t < medium.threshold() - T::lit(1e-12) {
        return Err(Error::Domain(format!(
            "x·m = {t} is below the refraction threshold {}",
            medium.threshold()
        )));
    }
    if lossless {
        return Ok(T::one());
    }
    Ok(T::one() - fresnel_psi(t, medium)?)
}

/// Uniform bound on the reflected fraction over the admissible interval.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FresnelBounds<T> {
    pub c_eps: T,
    /// Where the maximum is attained.
    pub argmax: T,
    /// Admissible interval `[threshold + eps, 1]`.
    pub interval: (T, T),
}

const BOUND_SCAN_POINTS: usize = 1024;

/// `C_eps = max psi` over `[threshold + eps, 1]`.
///
/// Starts from the two endpoints; a 1024-point scan plus golden-section polish
/// catches an interior maximum when `eps` is not small.
pub fn fresnel_bound<T: Scalar>(medium: &MediumPair<T>, epsilon: T) -> Result<FresnelBounds<T>> {
    if !(epsilon > T::zero()) {
        return Err(Error::Config(format!("epsilon = {epsilon} must be positive")));
    }
    let lo = medium.threshold() + epsilon;
    let hi = T::one();
    if lo > hi {
        return Err(Error::Config(format!(
            "epsilon = {epsilon} leaves an empty admissible interval"
        )));
    }
    let psi = |t: T| fresnel_psi(t, medium);

    let mut best = (psi(lo)?, lo);
    let at_one = psi(hi)?;
    if at_one > best.0 {
        best = (at_one, hi);
    }

    let n = BOUND_SCAN_POINTS;
    let step = (hi - lo) / T::from_usize_lossy(n - 1);
    let mut scan_best = (T::neg_infinity(), 0usize);
    for k in 0..n {
        let t = lo + step * T::from_usize_lossy(k);
        let v = psi(t.min(hi))?;
        if v > scan_best.0 {
            scan_best = (v, k);
        }
    }
    if scan_best.0 > best.0 && scan_best.1 > 0 && scan_best.1 < n - 1 {
        let k = scan_best.1;
        let a = lo + step * T::from_usize_lossy(k - 1);
        let b = lo + step * T::from_usize_lossy(k + 1);
        let (v, t) = golden_max(&psi, a, b)?;
        best = if v > scan_best.0 { (v, t) } else { (scan_best.0, lo + step * T::from_usize_lossy(k)) };
    } else if scan_best.0 > best.0 {
        best = (scan_best.0, lo + step * T::from_usize_lossy(scan_best.1));
    }

    if !(best.0 < T::one()) {
        return Err(Error::Config(format!(
            "C_eps = {} >= 1: the setup admits total reflection",
            best.0
        )));
    }
    Ok(FresnelBounds { c_eps: best.0.max(T::zero()), argmax: best.1, interval: (lo, hi) })
}

fn golden_max<T: Scalar, F: Fn(T) -> Result<T>>(f: &F, mut a: T, mut b: T) -> Result<(T, T)> {
    let inv_phi = (T::lit(5.0).sqrt() - T::one()) / T::lit(2.0);
    let mut c = b - (b - a) * inv_phi;
    let mut d = a + (b - a) * inv_phi;
    let (mut fc, mut fd) = (f(c)?, f(d)?);
    for _ in 0..200 {
        if (b - a).abs() <= T::epsilon() * (T::one() + a.abs()) {
            break;
        }
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - (b - a) * inv_phi;
            fc = f(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + (b - a) * inv_phi;
            fd = f(d)?;
        }
    }
    let t = (a + b) / T::lit(2.0);
    Ok((f(t)?.max(fc).max(fd), t))
}

/// Source cap, target cap and the margin `eps` required above the threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdmissibleSetup<T> {
    pub medium: MediumPair<T>,
    pub source_cap: SphericalCap<T>,
    pub target_cap: SphericalCap<T>,
    pub epsilon: T,
}

/// Outcome of [`check_admissible`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct MarginReport<T> {
    /// `min x·m` over the two caps.
    pub worst_dot: T,
    pub threshold: T,
    /// `worst_dot - threshold`, the largest usable `eps`.
    pub margin: T,
    pub required: T,
    pub source_extremal: [T; 3],
    pub target_extremal: [T; 3],
}

impl<T: Scalar> MarginReport<T> {
    pub fn passes(&self) -> bool {
        self.margin >= self.required
    }
}

/// Smallest `x·m` over two caps: `cos(min(pi, angle(axes) + r1 + r2))`.
pub fn worst_dot<T: Scalar>(a: &SphericalCap<T>, b: &SphericalCap<T>) -> T {
    let total = a.axis.angle_to(&b.axis) + a.angular_radius + b.angular_radius;
    total.min(T::PI()).cos()
}

/// Checks that every source/target pair stays at least `eps` above the
/// refraction threshold. Fails with the extremal directions otherwise.
pub fn check_admissible<T: Scalar>(setup: &AdmissibleSetup<T>) -> Result<MarginReport<T>> {
    setup.medium.validate()?;
    setup.source_cap.validate()?;
    setup.target_cap.validate()?;
    let (s, t) = (&setup.source_cap, &setup.target_cap);
    let worst = worst_dot(s, t);
    let threshold = setup.medium.threshold();
    let (x, m) = if s.axis.angle_to(&t.axis) < T::lit(1e-12) {
        // coincident axes: push the two rims apart along one shared tangent
        let u = s.axis.tangent_frame().0;
        (s.axis.rotate_along(&u, s.angular_radius), t.axis.rotate_along(&-u, t.angular_radius))
    } else {
        (
            s.axis.rotate_away_from(&t.axis, s.angular_radius),
            t.axis.rotate_away_from(&s.axis, t.angular_radius),
        )
    };
    let report = MarginReport {
        worst_dot: worst,
        threshold,
        margin: worst - threshold,
        required: setup.epsilon,
        source_extremal: x.components(),
        target_extremal: m.components(),
    };
    if !report.passes() {
        return Err(Error::Admissibility {
            worst_dot: worst.to_f64_lossy(),
            threshold: threshold.to_f64_lossy(),
            margin: report.margin.to_f64_lossy(),
            required: setup.epsilon.to_f64_lossy(),
            source_dir: x.components().map(|c| c.to_f64_lossy()),
            target_dir: m.components().map(|c| c.to_f64_lossy()),
        });
    }
    Ok(report)
}

/// Component of `v` orthogonal to `nu`.
pub fn tangential<T: Scalar>(v: &Vec3<T>, nu: &Direction<T>) -> Vec3<T> {
    *v - nu.vec().scale(v.dot(&nu.vec()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn medium(kappa: f64, sigma: f64) -> MediumPair<f64> {
        MediumPair::unpolarized(kappa, sigma).unwrap()
    }

    #[test]
    fn phi_examples() {
        assert!((phi(1.0f64, -2.0).unwrap() - 3.0).abs() < 1e-15);
        assert!((phi(1.0f64, -0.5).unwrap() - 1.5).abs() < 1e-15);
        // 0.9 + 2 sqrt(0.9525)
        let expect = 0.9 + 2.0 * 0.9525f64.sqrt();
        assert!((phi(0.9, -2.0).unwrap() - expect).abs() < 1e-14);
        assert!((expect - 2.851922).abs() < 1e-6);
    }

    #[test]
    fn phi_detects_total_internal_reflection() {
        // -1 < kappa < 0 needs t^2 >= 1 - kappa^2 = 0.75
        assert!(matches!(phi(0.5, -0.5), Err(Error::TotalInternalReflection { .. })));
        assert!(phi(0.9, -0.5).is_ok());
    }

    #[test]
    fn normal_incidence_passes_straight() {
        let z = Direction::<f64>::north();
        for k in [-2.0, -0.5] {
            let m = snell_refract(&z, &z, &medium(k, 1.0)).unwrap();
            assert!((m.vec() - z.vec()).norm() < 1e-15);
        }
    }

    #[test]
    fn oblique_refraction_stays_on_incident_side() {
        let th = 0.2f64;
        let x = Direction::new(th.sin(), 0.0, th.cos()).unwrap();
        let nu = Direction::north();
        let m = snell_refract(&x, &nu, &medium(-2.0, 1.0)).unwrap();
        // scalar Snell: n1 sin(th1) = n2 sin(th2) with n2 = -2 -> sin(th2) = -sin(th)/2
        let s2 = -th.sin() / 2.0;
        let expect = [s2, 0.0, (1.0 - s2 * s2).sqrt()];
        for (a, b) in m.components().iter().zip(expect) {
            assert!((a - b).abs() < 1e-14, "{m:?}");
        }
        assert!((m.vec().norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn ray_from_behind_rejected() {
        let x = Direction::new(0.0, 0.0, -1.0).unwrap();
        let nu = Direction::north();
        assert!(matches!(snell_refract(&x, &nu, &medium(-2.0, 1.0)), Err(Error::Geometry(_))));
    }

    #[test]
    fn psi_matched_impedance_normal_incidence_is_zero() {
        for k in [-3.0, -1.5, -0.7, -0.2] {
            assert!(fresnel_psi(1.0, &medium(k, 1.0)).unwrap().abs() < 1e-15);
        }
    }

    #[test]
    fn psi_normal_incidence_mismatched() {
        // ((sigma-1)/(sigma+1))^2 = 1/9 for sigma = 2
        for k in [-2.0, -0.5] {
            let v = fresnel_psi(1.0, &medium(k, 2.0)).unwrap();
            assert!((v - 1.0 / 9.0).abs() < 1e-15, "{v}");
            let m = Direction::north();
            let t = fresnel_transmission(&m, &m, &medium(k, 2.0), false).unwrap();
            assert!((t - 8.0 / 9.0).abs() < 1e-15);
        }
    }

    #[test]
    fn psi_hand_value() {
        // p(-0.4) = q(-0.4) = -1.4/1.8 for kappa = -2, sigma = 1
        let v = fresnel_psi(-0.4, &medium(-2.0, 1.0)).unwrap();
        assert!((v - 49.0 / 81.0).abs() < 1e-15);
    }

    #[test]
    fn lossless_transmission_is_one() {
        let x = Direction::new(0.6, 0.0, 0.8).unwrap();
        let m = Direction::north();
        assert_eq!(fresnel_transmission(&x, &m, &medium(-2.0, 3.0), true).unwrap(), 1.0);
    }

    #[test]
    fn transmission_below_threshold_rejected() {
        let x = Direction::new(1.0, 0.0, 0.0).unwrap();
        let m = Direction::new(-1.0, 0.0, 0.0).unwrap();
        assert!(fresnel_transmission(&x, &m, &medium(-2.0, 1.0), false).is_err());
    }

    #[test]
    fn bound_examples() {
        let b = fresnel_bound(&medium(-2.0, 1.0), 0.1).unwrap();
        assert!((b.c_eps - 49.0 / 81.0).abs() < 1e-12);
        let b = fresnel_bound(&medium(-0.5, 1.0), 0.1).unwrap();
        let expect = fresnel_psi(-0.4, &medium(-0.5, 1.0)).unwrap();
        assert!((b.c_eps - expect).abs() < 1e-12);
        // interval collapses to {1}
        let m = medium(-2.0, 1.0);
        let b = fresnel_bound(&m, 1.0 - m.threshold()).unwrap();
        assert!(b.c_eps.abs() < 1e-15);
    }

    #[test]
    fn bound_rejects_empty_interval() {
        assert!(fresnel_bound(&medium(-2.0, 1.0), 2.0).is_err());
        assert!(fresnel_bound(&medium(-2.0, 1.0), 0.0).is_err());
    }

    #[test]
    fn admissibility_examples() {
        let cap = SphericalCap::new(Direction::north(), 0.4).unwrap();
        let setup = AdmissibleSetup { medium: medium(-2.0, 1.0), source_cap: cap, target_cap: cap, epsilon: 0.1 };
        let r = check_admissible(&setup).unwrap();
        assert!((r.worst_dot - 0.8f64.cos()).abs() < 1e-14);
        assert!((r.margin - (0.8f64.cos() + 0.5)).abs() < 1e-14);
        // extremal pair realizes the worst dot product
        let x = Direction::new(r.source_extremal[0], r.source_extremal[1], r.source_extremal[2]).unwrap();
        let m = Direction::new(r.target_extremal[0], r.target_extremal[1], r.target_extremal[2]).unwrap();
        assert!((x.dot(&m) - r.worst_dot).abs() < 1e-12);

        let south = SphericalCap::new(Direction::new(0.0, 0.0, -1.0).unwrap(), 0.1).unwrap();
        let small = SphericalCap::new(Direction::north(), 0.1).unwrap();
        let bad = AdmissibleSetup { medium: medium(-2.0, 1.0), source_cap: small, target_cap: south, epsilon: 0.1 };
        match check_admissible(&bad) {
            Err(Error::Admissibility { worst_dot, .. }) => assert!((worst_dot + 1.0).abs() < 1e-12),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn kappa_minus_one_excluded() {
        assert!(MediumPair::<f64>::unpolarized(-1.0, 1.0).is_err());
        assert!(MediumPair::<f64>::unpolarized(0.5, 1.0).is_err());
        assert!(MediumPair::<f64>::from_indices(1.0, -1.5, 1.0, 1.0, 1.5).is_err());
    }

    #[test]
    fn f32_snell() {
        let x = Direction::<f32>::normalized(0.1, 0.0, 1.0).unwrap();
        let nu = Direction::<f32>::north();
        let m = snell_refract(&x, &nu, &MediumPair::unpolarized(-1.5f32, 1.0).unwrap()).unwrap();
        assert!((m.vec().norm() - 1.0).abs() < 1e-6);
    }
}

use negaref::optics::{fresnel_p, fresnel_q, tangential, transmission_at};
use negaref::*;
use proptest::prelude::*;

fn medium(kappa: f64, sigma: f64, alpha: f64) -> MediumPair64 {
    MediumPair::from_kappa(kappa, sigma, alpha).unwrap()
}

fn kappa_strategy() -> impl Strategy<Value = f64> {
    prop_oneof![-4.0..-1.05f64, -0.95..-0.1f64]
}

fn unit() -> impl Strategy<Value = Direction64> {
    (0.0..std::f64::consts::PI, 0.0..std::f64::consts::TAU).prop_map(|(t, p)| Direction::from_spherical(t, p))
}

proptest! {
    #[test]
    fn reflection_plus_transmission_is_one(k in kappa_strategy(), sigma in 0.2..5.0f64, alpha in 0.0..1.0f64, s in 0.0..1.0f64) {
        let m = medium(k, sigma, alpha);
        let lo = m.threshold() + 1e-3;
        let t = lo + s * (1.0 - lo);
        let r = fresnel_psi(t, &m).unwrap();
        prop_assert!((0.0..=1.0).contains(&r));
        prop_assert!((r + transmission_at(t, &m, false).unwrap() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn psi_respects_uniform_bound(k in kappa_strategy(), sigma in 0.2..5.0f64, alpha in 0.0..1.0f64,
                                  eps in 0.01..0.3f64, s in 0.0..1.0f64) {
        let m = medium(k, sigma, alpha);
        let b = fresnel_bound(&m, eps).unwrap();
        let t = b.interval.0 + s * (b.interval.1 - b.interval.0);
        prop_assert!(fresnel_psi(t, &m).unwrap() <= b.c_eps + 1e-12);
    }

    #[test]
    fn p_and_q_are_monotone(k in kappa_strategy(), sigma in 0.2..5.0f64, s in 0.0..0.99f64) {
        let m = medium(k, sigma, 0.5);
        let lo = m.threshold() + 1e-3;
        let t0 = lo + s * (1.0 - lo);
        let t1 = t0 + 0.01 * (1.0 - lo);
        let (dp, dq) = (
            fresnel_p(t1, &m).unwrap() - fresnel_p(t0, &m).unwrap(),
            fresnel_q(t1, &m).unwrap() - fresnel_q(t0, &m).unwrap(),
        );
        if k < -1.0 {
            prop_assert!(dp >= -1e-15 && dq >= -1e-15);
        } else {
            prop_assert!(dp <= 1e-15 && dq <= 1e-15);
        }
    }

    #[test]
    fn snell_contract(k in kappa_strategy(), x in unit(), nu in unit()) {
        let m = medium(k, 1.0, 0.5);
        let c = x.dot(&nu);
        prop_assume!(c > 1e-3);
        prop_assume!(k < -1.0 || c * c >= 1.0 - k * k + 1e-9);
        let out = snell_refract(&x, &nu, &m).unwrap();
        prop_assert!((out.vec().norm() - 1.0).abs() < 1e-12);
        let d = x.vec() - out.vec().scale(k);
        prop_assert!(d.cross(&nu.vec()).norm() < 1e-12 * d.norm().max(1.0));
        let t = tangential(&x.vec(), &nu) - tangential(&out.vec(), &nu).scale(k);
        prop_assert!(t.norm() < 1e-12);
    }

    #[test]
    fn extremal_pair_realizes_worst_dot(r1 in 0.05..1.2f64, r2 in 0.05..1.2f64, a in unit(), b in unit()) {
        let (s, t) = (SphericalCap::new(a, r1).unwrap(), SphericalCap::new(b, r2).unwrap());
        let setup = AdmissibleSetup { medium: medium(-2.0, 1.0, 0.5), source_cap: s, target_cap: t, epsilon: 1e-9 };
        let worst = optics::worst_dot(&s, &t);
        let (x, m) = match check_admissible(&setup) {
            Ok(r) => (r.source_extremal, r.target_extremal),
            Err(Error::Admissibility { source_dir, target_dir, .. }) => (source_dir, target_dir),
            Err(e) => panic!("{e}"),
        };
        let x = Direction::new(x[0], x[1], x[2]).unwrap();
        let m = Direction::new(m[0], m[1], m[2]).unwrap();
        prop_assert!(s.contains(&x) && t.contains(&m));
        if a.angle_to(&b) + r1 + r2 < std::f64::consts::PI {
            prop_assert!((x.dot(&m) - worst).abs() < 1e-12);
        }
    }
}

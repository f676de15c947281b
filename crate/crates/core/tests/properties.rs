mod common;

use common::{flat, trivial};
use photon_landauer::transmission::transmission_trivial;
use photon_landauer::{breakdown, golden_rule_rates, Side, TransportProblem};
use proptest::prelude::*;

fn problem() -> impl Strategy<Value = TransportProblem> {
    (0.05..0.5f64, 0.5..2.5f64, 0.05..0.5f64, 0.5..2.5f64, 0.05..0.4f64, 0.0..3.0f64, 0.1..2.0f64, 0.1..2.0f64).prop_map(
        |(al, wl, ar, wr, lambda, pump, tl, tr)| {
            trivial(flat(Side::Left, al, al + wl, 1.0, lambda), flat(Side::Right, ar, ar + wr, 1.3, 1.0), pump, tl, tr)
        },
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn transmission_is_nonnegative(e1 in 0.01..4.0f64, e2 in 0.01..4.0f64, lambda in -1.0..1.0f64) {
        let l = flat(Side::Left, 0.2, 3.0, 1.0, lambda);
        let r = flat(Side::Right, 0.5, 2.0, 2.0, 1.0);
        prop_assert!(transmission_trivial(e1, e2, &l, &r).unwrap() >= 0.0);
    }

    #[test]
    fn split_is_consistent(p in problem()) {
        let b = breakdown(&p).unwrap();
        let scale = b.j_right.abs().max(b.j_left.abs()).max(1e-300);
        prop_assert!((b.j_normal - 0.5 * (b.j_right - b.j_left)).abs() <= 1e-12 * scale);
        prop_assert!((b.j_anomalous - 0.5 * (b.j_right + b.j_left)).abs() <= 1e-12 * scale);
        let net = golden_rule_rates(&p).unwrap().net();
        prop_assert!((b.j_anomalous - net).abs() <= 1e-8 * b.j_anomalous.abs() + 2.0 * p.tolerance.abs_tol);
        prop_assert!(b.rate_creation >= 0.0 && b.rate_annihilation >= 0.0);
    }

    #[test]
    fn equal_temperatures_without_pump_carry_no_current(p in problem(), t in 0.1..2.0f64) {
        let mut p = p;
        p.pump = photon_landauer::PumpDrive::new(0.0).unwrap();
        p.left_bath = photon_landauer::BathState::new(t).unwrap();
        p.right_bath = p.left_bath;
        prop_assert!(breakdown(&p).unwrap().j_right.abs() <= 1e-10);
    }

    #[test]
    fn current_scales_with_coupling_squared(p in problem(), s in 0.1..5.0f64) {
        let base = breakdown(&p).unwrap().j_right;
        let mut q = p.clone();
        q.kernel = q.kernel.with_coupling_scale(s);
        let scaled = breakdown(&q).unwrap().j_right;
        prop_assert!((scaled - s * s * base).abs() <= 1e-6 * (s * s * base).abs() + 4.0 * s * s * p.tolerance.abs_tol);
    }

    #[test]
    fn pair_creation_vanishes_below_threshold(p in problem()) {
        let (l, r) = (p.kernel.left().band(), p.kernel.right().band());
        let mut p = p;
        p.pump = photon_landauer::PumpDrive::new(0.99 * (l.min + r.min)).unwrap();
        let b = breakdown(&p).unwrap();
        prop_assert_eq!(b.j_anomalous, 0.0);
        prop_assert_eq!(b.rate_creation, 0.0);
    }
}

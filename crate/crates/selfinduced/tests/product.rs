//! Product of period doubling with the 3-adic odometer.

use num_bigint::BigUint;
use proptest::prelude::*;

use selfinduced::product::{
    double, nonequicontinuous_witness, nonexpansive_witness, odometer_distance, product_distance, product_step,
    verify_product_selfinduced, z3,
};

const DEPTH: usize = 16;

fn value(z: &selfinduced::odometer::OdometerPoint) -> u64 {
    u64::try_from(z.value()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn odometer_part_is_an_isometry(a in 0u64..3u64.pow(DEPTH as u32), b in 0u64..3u64.pow(DEPTH as u32)) {
        let (mut x, mut y) = (z3(a, DEPTH), z3(b, DEPTH));
        let before = odometer_distance(&x, &y);
        prop_assert_eq!(odometer_distance(&double(&x), &double(&y)), before);
        for _ in 0..20 {
            x.increment();
            y.increment();
            prop_assert_eq!(odometer_distance(&x, &y), before);
        }
    }

    #[test]
    fn doubling_is_multiplication(a in 0u64..3u64.pow(DEPTH as u32)) {
        let m = 3u64.pow(DEPTH as u32);
        prop_assert_eq!(value(&double(&z3(a, DEPTH))), 2 * a % m);
        prop_assert_eq!(z3(a, DEPTH).value(), BigUint::from(a));
    }
}

#[test]
fn identities_hold_at_several_depths() {
    for depth in [1, 4, 12] {
        let r = verify_product_selfinduced(depth, 200).unwrap();
        assert!(r.passed(), "depth {depth}: {:?}", r.witnesses.first());
    }
}

#[test]
fn witnesses_behave_as_claimed() {
    for k in 1..5 {
        let eps = 3f64.powi(-k);
        let w = nonexpansive_witness(eps).unwrap();
        assert!(w.bound < eps);
        let (mut p, mut q) = (w.first.clone(), w.second.clone());
        assert!(product_distance(&p, &q) <= w.bound);
        while let (Ok(p2), Ok(q2)) = (product_step(&p), product_step(&q)) {
            assert!(product_distance(&p2, &q2) <= w.bound);
            (p, q) = (p2, q2);
        }
    }
    for r in 1..5 {
        let delta = 2f64.powi(-r);
        let w = nonequicontinuous_witness(delta, 64).unwrap();
        assert!(w.initial_distance < delta);
        let (mut p, mut q) = (w.first.clone(), w.second.clone());
        for _ in 0..w.separation_time {
            p = product_step(&p).unwrap();
            q = product_step(&q).unwrap();
        }
        assert_ne!(p.letter(0), q.letter(0));
    }
}

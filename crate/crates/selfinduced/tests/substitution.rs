//! Substitution toolkit against brute-force expansion and counting oracles.

mod common;

use std::collections::BTreeSet;

use proptest::prelude::*;

use selfinduced::substitution::{derive, frequencies, iterate, language, verify_self_induced, Substitution};
use selfinduced::words::factor_complexity;

use common::expand;

fn primitive_substitutions() -> Vec<Substitution> {
    vec![Substitution::period_doubling(), Substitution::fibonacci(), Substitution::thue_morse()]
}

#[test]
fn language_matches_factor_scan() {
    for s in primitive_substitutions() {
        let lang = language(&s, 8).unwrap();
        let w = expand(&s, &[0], 16);
        for n in 1..=8 {
            let scan: BTreeSet<Vec<usize>> = w.windows(n).map(<[usize]>::to_vec).collect();
            assert_eq!(lang.words(n).unwrap(), &scan, "length {n}");
        }
    }
}

#[test]
fn fibonacci_is_sturmian() {
    let lang = language(&Substitution::fibonacci(), 12).unwrap();
    for n in 1..=12 {
        assert_eq!(factor_complexity(&lang, n).unwrap(), n + 1);
    }
}

#[test]
fn self_induction_holds_on_samples() {
    for s in primitive_substitutions() {
        let rep = verify_self_induced(&s, 120, 12).unwrap();
        assert!(rep.passed(), "{:?}", rep.failures.first());
    }
}

#[test]
fn frequencies_match_counts() {
    for s in primitive_substitutions() {
        let f = frequencies::<f64>(&s).unwrap();
        let w = iterate(&s, &[0], 14).unwrap();
        for (a, fa) in f.iter().enumerate() {
            let share = w.iter().filter(|&&b| b == a).count() as f64 / w.len() as f64;
            assert!((share - fa).abs() < 1e-2, "letter {a}: {share} vs {fa}");
        }
        assert!((f.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let f32s = frequencies::<f32>(&s).unwrap();
        assert!(f.iter().zip(&f32s).all(|(a, b)| (a - f64::from(*b)).abs() < 1e-5));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn derived_substitution_conjugates(which in 0usize..3, letter in 0usize..2, w in prop::collection::vec(0usize..3, 0..8)) {
        let s = &primitive_substitutions()[which];
        let prefixed = (1..=4).any(|k| expand(s, &[letter], k)[0] == letter);
        let d = match derive(s, letter) {
            Ok(d) => d,
            Err(_) => {
                prop_assert!(!prefixed);
                return Ok(());
            }
        };
        let q = d.tau.alphabet().len();
        let w: Vec<usize> = w.into_iter().map(|a| a % q).collect();
        let lhs = d.theta_word(&expand(&d.tau, &w, 1));
        let rhs = expand(s, &d.theta_word(&w), d.power);
        prop_assert_eq!(lhs, rhs);
    }

    #[test]
    fn iterate_agrees_with_expansion(which in 0usize..3, w in prop::collection::vec(0usize..2, 1..6), k in 0usize..8) {
        let s = &primitive_substitutions()[which];
        prop_assert_eq!(iterate(s, &w, k).unwrap(), expand(s, &w, k));
        prop_assert_eq!(s.power(k.max(1)).apply(&w), expand(s, &w, k.max(1)));
    }
}

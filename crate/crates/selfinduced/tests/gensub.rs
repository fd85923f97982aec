//! Generalized substitutions: growth, languages, decompositions and handle rules.

mod common;

use proptest::prelude::*;

use selfinduced::gensub::{
    from_self_induced, language, recognizability_decompose, validate_continuity, verify_power_formula, Decomposition,
    GeneralizedSubstitution, TwoSidedCellWord,
};
use selfinduced::odometer::PAdicHandle;
use selfinduced::substitution::{SubstitutionSystem, Substitution};
use selfinduced::words::SystemHandle;

use common::expand;

/// Rule lengths equal first-return times of φ(x) to U, found by stepping forward.
fn check_return_law<H: SystemHandle>(h: &H, m: usize) {
    let g = from_self_induced(h, m).unwrap();
    let sp = g.space();
    for (label, x) in h.cells(m) {
        let c = sp.find(&format!("{m}:{label}")).unwrap();
        let y = h.phi(&x).unwrap();
        let mut q = h.forward(&y);
        let mut r = 1;
        while !h.in_clopen(&q) {
            q = h.forward(&q);
            r += 1;
        }
        assert_eq!(g.image(c, m).unwrap().len(), r, "cell {label}");
    }
}

#[test]
fn handle_rules_follow_return_times() {
    check_return_law(&PAdicHandle::new(2, 32).unwrap(), 3);
    check_return_law(&PAdicHandle::new(3, 32).unwrap(), 2);
    check_return_law(&SubstitutionSystem::new(&Substitution::period_doubling(), 3).unwrap(), 2);
}

#[test]
fn power_formula_on_handles() {
    for n in 1..=3 {
        assert!(verify_power_formula(&PAdicHandle::new(2, 32).unwrap(), n, 12, 3).unwrap().passed());
        assert!(verify_power_formula(&PAdicHandle::new(5, 24).unwrap(), n, 12, 2).unwrap().passed());
    }
}

#[test]
fn xi_language_does_not_depend_on_the_base() {
    let g = GeneralizedSubstitution::xi(6);
    let m = 4;
    let sp = g.space();
    let first = language(&g, sp.cells_at(m)[0], 3, m, 14).unwrap().words;
    for a in sp.cells_at(m) {
        assert_eq!(language(&g, a, 3, m, 14).unwrap().words, first, "base {}", sp.label(a));
    }
}

#[test]
fn xi_images_coarsen_consistently() {
    let g = GeneralizedSubstitution::xi(8);
    assert_eq!(validate_continuity(&g), Ok(()));
    let sp = g.space();
    for m in 0..8 {
        for c in sp.cells_at(m + 1) {
            let fine: Vec<usize> = g.image(c, m + 1).unwrap().iter().map(|&t| sp.coarsen(t, m).unwrap()).collect();
            assert_eq!(fine, g.image(sp.coarsen(c, m).unwrap(), m).unwrap());
        }
    }
}

#[test]
fn xi_lengths_double() {
    let g = GeneralizedSubstitution::xi(8);
    for a in g.space().cells_at(8) {
        for k in 0..10 {
            assert_eq!(g.iterate(&[a], k, 8).unwrap().len(), 1 << k);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn lengths_follow_the_incidence_matrix(which in 0usize..3, w in prop::collection::vec(0usize..2, 1..5), k in 0usize..7) {
        let s = [Substitution::period_doubling(), Substitution::fibonacci(), Substitution::thue_morse()][which].clone();
        let g = GeneralizedSubstitution::from_substitution(&s);
        let sp = g.space();
        let m = g.resolution();
        let cells: Vec<usize> = w.iter().map(|&a| sp.find(s.alphabet().symbol(a)).unwrap()).collect();
        let got = g.iterate(&cells, k, m).unwrap();
        prop_assert_eq!(got.len(), expand(&s, &w, k).len());
        let g_k = g.power(k.max(1)).unwrap();
        prop_assert_eq!(g_k.apply(&cells, m).unwrap(), g.iterate(&cells, k.max(1), m).unwrap());
    }

    #[test]
    fn images_decompose_into_their_preimage(start in 0usize..400, len in 8usize..14, h in 3usize..6, k in 1usize..4) {
        let s = Substitution::period_doubling();
        let fixed = expand(&s, &[0], 10);
        let u = &fixed[start..start + len];
        let g = GeneralizedSubstitution::from_substitution(&s).power(k).unwrap();
        let sp = g.space();
        let m = g.resolution();
        let cells: Vec<usize> = u.iter().map(|&a| sp.find(s.alphabet().symbol(a)).unwrap()).collect();
        let past = g.apply(&cells[..h], m).unwrap();
        let future = g.apply(&cells[h..], m).unwrap();
        let block = 1i64 << k;
        match recognizability_decompose(&g, &TwoSidedCellWord::new(past, future)).unwrap() {
            Decomposition::Unique { cuts, preimage } => {
                prop_assert!(cuts.iter().all(|c| c % block == 0));
                prop_assert_eq!(preimage.past, cells[..h].to_vec());
                prop_assert_eq!(preimage.future, cells[h..].to_vec());
            }
            other => prop_assert!(false, "{:?}", other),
        }
    }
}

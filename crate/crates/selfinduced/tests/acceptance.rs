//! One PASS/FAIL line per acceptance criterion.

mod common;

use std::time::{Duration, Instant};

use num_bigint::BigUint;
use num_rational::BigRational;

use selfinduced::bratteli::{
    self, contract, embed_ordered_graph, from_substitution, induced_measure, microscope, proper_order_certificate,
    stationary_measure, substitution_cylinder, verify_embedding, vershik_step, PathPrefix, ProperOrder, VershikOutcome,
};
use selfinduced::gensub::{
    self, from_self_induced, language, omega_fixed_point, recognizability_decompose, verify_power_formula, Decomposition,
    GeneralizedSubstitution, TwoSidedCellWord,
};
use selfinduced::odometer::{self, CharacteristicSequence, PAdicHandle, SelfInduction};
use selfinduced::product::verify_product_selfinduced;
use selfinduced::substitution::{self, derive, exact_frequencies, frequencies, verify_self_induced, Substitution};

use common::{all_words, base, expand, gap_scan, growing_diagram, sample_graph};

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl Into<String>) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg.into())
    }
}

fn odometer_verdicts() -> Outcome {
    let start = Instant::now();
    let two = odometer::is_self_induced(&CharacteristicSequence::cycle(&[2]));
    let all = odometer::is_self_induced(&CharacteristicSequence::all_primes());
    let elapsed = start.elapsed();
    ensure(two == SelfInduction::Yes { witness_prime: 2 }, format!("2-odometer: {two:?}"))?;
    ensure(all == SelfInduction::No, format!("all-primes odometer: {all:?}"))?;
    ensure(elapsed < Duration::from_millis(1), format!("took {elapsed:?}"))?;
    Ok(format!("YES (prime 2) and NO in {elapsed:?}"))
}

fn induction_drops_first_term() -> Outcome {
    let q = CharacteristicSequence::with_prefix(&[5], &[2, 3]);
    let induced = odometer::induce_via_diagram(&q).map_err(|e| e.to_string())?;
    let want = q.terms(41).map_err(|e| e.to_string())?[1..].to_vec();
    let got = induced.terms(40).map_err(|e| e.to_string())?;
    ensure(got == want, format!("{got:?} vs {want:?}"))?;
    Ok("(5; 2,3) induces (2,3), first 40 terms equal".into())
}

fn conjugacy() -> Outcome {
    let a = odometer::is_conjugate(&CharacteristicSequence::cycle(&[2, 3]), &CharacteristicSequence::cycle(&[6]));
    let b = odometer::is_conjugate(&CharacteristicSequence::cycle(&[2]), &CharacteristicSequence::cycle(&[2, 3]));
    ensure(a && !b, format!("(2,3)~(6) = {a}, (2)~(2,3) = {b}"))?;
    Ok("(2,3) ~ (6) and (2) !~ (2,3)".into())
}

fn period_doubling_self_induction() -> Outcome {
    let s = Substitution::period_doubling();
    let d = derive(&s, 0).map_err(|e| e.to_string())?;
    let tau: Vec<String> = (0..2).map(|a| d.tau.render(d.tau.image(a))).collect();
    ensure(tau == ["ABB", "A"], format!("τ = {tau:?}"))?;
    let mut checked = 0;
    for w in all_words(2, 10) {
        let lhs = d.theta_word(&expand(&d.tau, &w, 1));
        let rhs = expand(&s, &d.theta_word(&w), d.power);
        ensure(lhs == rhs, format!("θτ ≠ σ^{}θ on {w:?}", d.power))?;
        checked += 1;
    }
    let rep = verify_self_induced(&s, 200, 20).map_err(|e| e.to_string())?;
    ensure(rep.passed(), format!("self-induction failures: {:?}", rep.failures.first()))?;
    ensure(rep.samples == 20 && rep.return_times.iter().all(|&t| t == 2), format!("return times {:?}", rep.return_times))?;
    Ok(format!("τ = (ABB, A), {checked} words, return time 2 on 20 samples at depth 200"))
}

fn kac_identity() -> Outcome {
    let pd = Substitution::period_doubling();
    let m = stationary_measure::<f64>(&from_substitution(&pd).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (_, rep) = induced_measure(&m, &substitution_cylinder(&pd, 1)).map_err(|e| e.to_string())?;
    ensure((rep.kac_sum + rep.unresolved - 1.0).abs() < 1e-10, format!("pd Σ kμ(U_k) = {}", rep.kac_sum))?;
    ensure((rep.kac_sum - 1.0).abs() < 1e-10, format!("pd unresolved mass {}", rep.unresolved))?;
    let ert = rep.expected_return_time();
    ensure((ert - 3.0).abs() < 1e-9, format!("pd expected return time {ert}"))?;
    let (mean, law) = gap_scan(&expand(&pd, &[0], 12), 1);
    ensure((mean - 3.0).abs() < 1e-2, format!("gap-scan mean {mean}"))?;
    for (k, mass) in &rep.classes {
        let emp = law.get(k).copied().unwrap_or(0.0);
        ensure((emp - mass).abs() < 1e-2, format!("μ(U_{k}) = {mass} but gap-scan gives {emp}"))?;
    }
    ensure(law.keys().eq(rep.classes.keys()), "gap-scan has other return times")?;
    let fib = Substitution::fibonacci();
    let mf = stationary_measure::<f64>(&from_substitution(&fib).map_err(|e| e.to_string())?).map_err(|e| e.to_string())?;
    let (_, rf) = induced_measure(&mf, &substitution_cylinder(&fib, 0)).map_err(|e| e.to_string())?;
    ensure((rf.kac_sum - 1.0).abs() < 1e-10, format!("Fibonacci Σ kμ(U_k) = {}", rf.kac_sum))?;
    Ok(format!("pd sum {:.12}, E = {ert:.9}, gap-scan mean {mean:.4}; Fibonacci sum {:.12}", rep.kac_sum, rf.kac_sum))
}

fn vershik_matches_integers() -> Outcome {
    let d = base(2);
    let depth = 24;
    let mut p = PathPrefix::new(vec![0; depth]);
    for n in 1..=100_000u64 {
        p = match vershik_step(&d, &p).map_err(|e| e.to_string())? {
            VershikOutcome::Next(q) => q,
            VershikOutcome::NeedsExtension => return Err(format!("maximal path after {n} steps")),
        };
        let value = BigUint::from(n);
        let digits: Vec<usize> = (0..depth).map(|i| usize::from(value.bit(i as u64))).collect();
        ensure(p.edges == digits, format!("step {n}: {} vs {n}", p))?;
    }
    Ok("10^5 steps at depth 24 agree with +1".into())
}

fn contraction() -> Outcome {
    let c = contract(&base(2), &[0, 2, 4]).map_err(|e| e.to_string())?;
    let json = |d: &bratteli::OrderedBratteliDiagram| serde_json::to_vec(d).expect("serializable");
    ensure(json(&c) == json(&base(4)), "contraction is not the base-4 diagram")?;
    ensure(bratteli::to_dot(&c, 6) == bratteli::to_dot(&base(4), 6), "drawings differ")?;
    let b2 = base(2).levels[0].clone();
    let back = microscope(&c, 1, &b2, &b2).map_err(|e| e.to_string())?;
    ensure(json(&back) == json(&base(2)), "microscope does not undo the contraction")?;
    Ok("base 2 cut at 0,2,4 is base 4; microscope restores base 2".into())
}

fn is_maximal(d: &bratteli::OrderedBratteliDiagram, p: &[usize]) -> bool {
    p.iter().enumerate().all(|(i, &e)| {
        let l = d.level(i + 1).expect("level");
        let edge = l.edges[e];
        l.in_edges(edge.target).iter().all(|f| f.rank <= edge.rank)
    })
}

fn proper_order() -> Outcome {
    let certified = matches!(proper_order_certificate(&base(2), 12).map_err(|e| e.to_string())?, ProperOrder::Certified { .. });
    ensure(certified, "base 2 not certified")?;
    let pd = from_substitution(&Substitution::period_doubling()).map_err(|e| e.to_string())?;
    match proper_order_certificate(&pd, 12).map_err(|e| e.to_string())? {
        ProperOrder::NotProper { maximal: true, witnesses } => {
            ensure(witnesses.len() == 2 && witnesses[0] != witnesses[1], "need two distinct witnesses")?;
            for w in &witnesses {
                ensure(is_maximal(&pd, &w.edges), format!("{w} is not maximal"))?;
            }
            let ends = |w: &PathPrefix| -> Vec<usize> {
                w.edges.iter().enumerate().map(|(i, &e)| pd.level(i + 1).expect("level").edges[e].target).collect()
            };
            let (a, b) = (ends(&witnesses[0]), ends(&witnesses[1]));
            let alternating = a.windows(2).all(|x| x[0] != x[1]) && a.iter().zip(&b).all(|(x, y)| x != y);
            ensure(alternating, "maximal paths do not form a 2-cycle of vertices")?;
            Ok(format!("base 2 certified; pd maximal paths {} and {}", witnesses[0], witnesses[1]))
        }
        other => Err(format!("pd: {other:?}")),
    }
}

fn xi_examples() -> Outcome {
    let g = GeneralizedSubstitution::xi(8);
    let sp = g.space();
    let cell = |l: &str| sp.find(l).map_err(|e| e.to_string());
    let w = omega_fixed_point(&g, cell("0")?, cell("1")?, 8, 40).map_err(|e| e.to_string())?;
    let shown = w.window.render(sp);
    ensure(shown == "0102010∞.01020103", format!("window {shown}"))?;
    let past = w.window.past.clone();
    let future = w.window.future.clone();
    match recognizability_decompose(&g, &TwoSidedCellWord::new(past, future)).map_err(|e| e.to_string())? {
        Decomposition::Unique { cuts, .. } => ensure(cuts.iter().all(|c| c % 2 == 0), format!("cuts {cuts:?}"))?,
        other => return Err(format!("decomposition {other:?}")),
    }
    let lang = language(&g, cell("0")?, 2, 8, 12).map_err(|e| e.to_string())?;
    ensure(lang.words.contains(&vec![cell("[8,∞]")?, cell("0")?]), "∞0 missing from the language of 0")?;
    Ok(format!("window {shown}, even cuts, ∞0 admitted"))
}

fn two_adic_formula() -> Outcome {
    let h = PAdicHandle::new(2, 32).map_err(|e| e.to_string())?;
    let m = 4;
    let g = from_self_induced(&h, m).map_err(|e| e.to_string())?;
    gensub::validate_continuity(&g).map_err(|e| e.to_string())?;
    let sp = g.space();
    let label = |z: u64| format!("{m}:{}", (0..m).map(|i| ((z >> i) & 1).to_string()).collect::<String>());
    for z in 0..1u64 << m {
        let c = sp.find(&label(z)).map_err(|e| e.to_string())?;
        let img: Vec<String> = g.image(c, m).map_err(|e| e.to_string())?.iter().map(|&t| sp.label(t).to_string()).collect();
        let want = vec![label(2 * z % (1 << m)), label((2 * z + 1) % (1 << m))];
        ensure(img == want, format!("σ({}) = {img:?}", label(z)))?;
    }
    for n in 1..=3 {
        let rep = verify_power_formula(&h, n, 16, m).map_err(|e| e.to_string())?;
        ensure(rep.passed(), format!("n = {n}: {:?}", rep.failures.first()))?;
    }
    Ok(format!("σ(z) = (2z)(2z+1) on all {} cells, power formula for n ≤ 3", 1 << m))
}

fn graph_embeddings() -> Outcome {
    let d = growing_diagram(14);
    let mut embedded = 0;
    for seed in 0..100 {
        let (g, n0, left) = sample_graph(seed);
        match embed_ordered_graph(&d, n0, &left, &g) {
            Ok(e) => {
                verify_embedding(&d, &left, &g, &e).map_err(|m| format!("graph {seed}: {m}"))?;
                embedded += 1;
            }
            Err(e) => return Err(format!("graph {seed}: {e}")),
        }
    }
    Ok(format!("{embedded} of 100 embeddings verified"))
}

fn product_identities() -> Outcome {
    let r = verify_product_selfinduced(12, 1000).map_err(|e| e.to_string())?;
    ensure(r.commutation_failures == 0, format!("σS ≠ S²σ on {} samples", r.commutation_failures))?;
    ensure(r.odometer_failures == 0, format!("doubling fails on {} samples", r.odometer_failures))?;
    ensure(r.return_time_failures == 0, format!("return time fails: {:?}", r.witnesses.first()))?;
    Ok("three identities on 1000 samples at depth 12".into())
}

fn pd_frequencies() -> Outcome {
    let s = Substitution::period_doubling();
    let f = frequencies::<f64>(&s).map_err(|e| e.to_string())?;
    let exact = exact_frequencies(&s).map_err(|e| e.to_string())?.ok_or("no exact frequencies")?;
    let third = |n: i32| BigRational::new(n.into(), 3.into());
    ensure(exact == vec![third(2), third(1)], format!("exact {exact:?}"))?;
    ensure((f[0] - 2.0 / 3.0).abs() < 1e-10 && (f[1] - 1.0 / 3.0).abs() < 1e-10, format!("Perron {f:?}"))?;
    let w = substitution::iterate(&s, &[0], 10).map_err(|e| e.to_string())?;
    let ones = w.iter().filter(|&&a| a == 1).count() as f64 / w.len() as f64;
    ensure((1.0 - ones - f[0]).abs() < 1e-2 && (ones - f[1]).abs() < 1e-2, format!("empirical {ones}"))?;
    Ok(format!("({:.12}, {:.12}); σ^10(0) share of 1 is {ones:.6}", f[0], f[1]))
}

fn main() {
    let criteria: [Criterion; 13] = [
        ("odometer verdicts", odometer_verdicts),
        ("induction drops q1", induction_drops_first_term),
        ("odometer conjugacy", conjugacy),
        ("period-doubling self-induction", period_doubling_self_induction),
        ("Kac identity", kac_identity),
        ("Vershik vs big integers", vershik_matches_integers),
        ("contraction", contraction),
        ("proper order detection", proper_order),
        ("generalized xi", xi_examples),
        ("2-adic power formula", two_adic_formula),
        ("ordered graph embedding", graph_embeddings),
        ("product identities", product_identities),
        ("period-doubling frequencies", pd_frequencies),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let r = run();
        let t = start.elapsed();
        match r {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{t:.2?}]", i + 1),
            Err(msg) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {msg} [{t:.2?}]", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

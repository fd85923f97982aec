//! `sub` subcommands.

use std::collections::BTreeSet;

use clap::{Args, Subcommand};
use serde::Serialize;

use selfinduced::substitution::{self, iterate, Periodicity, Substitution};
use selfinduced::words::{factor_complexity, Letter, Word};

use crate::context::{usage, CliResult, Context};
use crate::docs::{builtin_substitution, SubstitutionDoc};
use crate::Common;

#[derive(Args, Debug)]
pub struct SubArgs {
    #[command(subcommand)]
    cmd: SubCmd,
    /// Named substitution instead of --file: period-doubling, fibonacci, thue-morse, chacon.
    #[arg(long, global = true)]
    builtin: Option<String>,
}

#[derive(Subcommand, Debug)]
enum SubCmd {
    /// Primitivity, periodicity, frequencies and recognizability radius.
    Analyze,
    /// Factor complexity up to --horizon and the words of one length.
    Language {
        #[arg(long, default_value_t = 3)]
        length: usize,
    },
    /// Derived substitution on return words to a letter.
    Derive {
        #[arg(long)]
        letter: String,
    },
    /// Self-induction through σ on sampled points at --depth.
    SelfInduce {
        #[arg(long, default_value_t = 20)]
        samples: usize,
    },
}

pub fn load(ctx: &mut Context, common: &Common, builtin: Option<&str>) -> CliResult<Substitution> {
    match (&common.file, builtin) {
        (Some(p), None) => ctx.document::<SubstitutionDoc>(p)?.build(),
        (None, Some(name)) => builtin_substitution(name),
        _ => Err(usage("give exactly one of --file and --builtin")),
    }
}

#[derive(Serialize)]
struct RuleView {
    letter: String,
    image: String,
}

fn rules_view(s: &Substitution) -> Vec<RuleView> {
    (0..s.alphabet().len())
        .map(|a| RuleView { letter: s.alphabet().symbol(a).to_string(), image: s.render(s.image(a)) })
        .collect()
}

/// Factors of σᵏ(a) for the first k with |σᵏ(a)| ≥ len.
fn scanned_factors(s: &Substitution, n: usize, len: usize) -> BTreeSet<Word> {
    let mut out = BTreeSet::new();
    for a in 0..s.alphabet().len() {
        let mut w = vec![a];
        while w.len() < len {
            w = s.apply(&w);
        }
        out.extend(w.windows(n).map(<[Letter]>::to_vec));
    }
    out
}

pub fn run(ctx: &mut Context, common: &Common, args: &SubArgs) -> CliResult {
    let s = load(ctx, common, args.builtin.as_deref())?;
    ctx.output("substitution", rules_view(&s))?;
    match &args.cmd {
        SubCmd::Analyze => analyze(ctx, common, &s),
        SubCmd::Language { length } => language(ctx, common, &s, *length),
        SubCmd::Derive { letter } => derive(ctx, common, &s, letter),
        SubCmd::SelfInduce { samples } => self_induce(ctx, common, &s, *samples),
    }
}

fn analyze(ctx: &mut Context, common: &Common, s: &Substitution) -> CliResult {
    let prim = substitution::is_primitive(s);
    ctx.output("primitivity", &prim)?;
    ctx.check("primitive", prim.is_primitive(), (!prim.is_primitive()).then(|| format!("{prim:?}")), None);
    if !prim.is_primitive() {
        return Ok(());
    }
    let Some(per) = ctx.attempt("periodicity", substitution::periodicity_check(s)) else { return Ok(()) };
    ctx.output("periodicity", &per)?;
    let aperiodic = matches!(per, Periodicity::Aperiodic { .. });
    let witness = match &per {
        Periodicity::Periodic(w) => Some(s.render(w)),
        Periodicity::Aperiodic { .. } => None,
    };
    ctx.check("aperiodic", aperiodic, witness, None);
    let Some(freq) = ctx.attempt("frequencies", substitution::frequencies::<f64>(s)) else { return Ok(()) };
    ctx.output("frequencies", &freq)?;
    if let Some(Some(exact)) = ctx.attempt("exact_frequencies", substitution::exact_frequencies(s)) {
        ctx.output("exact_frequencies", exact.iter().map(ToString::to_string).collect::<Vec<_>>())?;
    }
    if aperiodic {
        if let Some(r) = ctx.attempt("recognizability", substitution::recognizability_radius(s, common.bound)) {
            ctx.output("recognizability_radius", r)?;
            ctx.check("recognizable", r.is_some(), r.is_none().then(|| format!("no radius up to {}", common.bound)), Some(common.bound));
        }
    }
    if common.verify {
        let w = {
            let mut w = vec![0];
            while w.len() < 1 << 14 {
                w = s.apply(&w);
            }
            w
        };
        let worst = (0..s.alphabet().len())
            .map(|a| (w.iter().filter(|&&b| b == a).count() as f64 / w.len() as f64 - freq[a]).abs())
            .fold(0.0, f64::max);
        ctx.check("verify_frequencies_empirical", worst < 1e-2, Some(format!("max deviation {worst:.3e} over {} letters", w.len())), None);
    }
    Ok(())
}

fn language(ctx: &mut Context, common: &Common, s: &Substitution, length: usize) -> CliResult {
    let horizon = common.horizon.max(length);
    let Some(lang) = ctx.attempt("language", substitution::language(s, horizon)) else { return Ok(()) };
    let complexity: Vec<usize> = (1..=horizon).map(|n| factor_complexity(&lang, n).expect("within horizon")).collect();
    ctx.output("complexity", &complexity)?;
    let words: Vec<String> = lang.words(length).expect("within horizon").iter().map(|w| s.render(w)).collect();
    ctx.output("length", length)?;
    ctx.output("words", &words)?;
    let violations = lang.violations();
    ctx.check("factorial_and_extendable", violations.is_empty(), violations.first().cloned(), Some(horizon));
    if common.verify {
        let top = horizon.min(16);
        let bad = (1..=top).find(|&n| lang.words(n).expect("within horizon") != &scanned_factors(s, n, 1 << 15));
        ctx.check("verify_factor_scan", bad.is_none(), bad.map(|n| format!("length {n} differs from the scan")), Some(top));
    }
    Ok(())
}

fn derive(ctx: &mut Context, common: &Common, s: &Substitution, letter: &str) -> CliResult {
    let a = s.alphabet().index(letter).map_err(usage)?;
    let Some(d) = ctx.attempt("derive", substitution::derive(s, a)) else { return Ok(()) };
    ctx.output("tau", rules_view(&d.tau))?;
    ctx.output("theta", d.theta.iter().map(|w| s.render(w)).collect::<Vec<_>>())?;
    ctx.output("power", d.power)?;
    ctx.check("derive", true, None, None);
    if common.verify {
        let n = d.tau.alphabet().len();
        let max_len = (1..=common.depth.min(10)).take_while(|&l| n.pow(l as u32) <= 1 << 16).last().unwrap_or(1);
        let mut frontier: Vec<Word> = vec![vec![]];
        let mut failure = None;
        'outer: for _ in 0..max_len {
            frontier = frontier.iter().flat_map(|w| (0..n).map(move |b| [w.as_slice(), &[b]].concat())).collect();
            for w in &frontier {
                let lhs = d.theta_word(&d.tau.apply(w));
                let rhs = iterate(s, &d.theta_word(w), d.power).map_err(usage)?;
                if lhs != rhs {
                    failure = Some(d.tau.render(w));
                    break 'outer;
                }
            }
        }
        ctx.check("verify_theta_tau_commute", failure.is_none(), failure, Some(max_len));
    }
    Ok(())
}

fn self_induce(ctx: &mut Context, common: &Common, s: &Substitution, samples: usize) -> CliResult {
    let Some(r) = ctx.attempt("self_induced", substitution::verify_self_induced(s, common.depth, samples)) else { return Ok(()) };
    ctx.output("recognizability_radius", r.radius)?;
    ctx.output("return_times", r.return_times.iter().collect::<BTreeSet<_>>())?;
    ctx.check("self_induced", r.passed(), r.failures.first().cloned(), Some(common.depth));
    if common.verify {
        let lengths: BTreeSet<usize> = (0..s.alphabet().len()).map(|a| s.image(a).len()).collect();
        let seen: BTreeSet<usize> = r.return_times.iter().copied().collect();
        ctx.check("verify_return_times_are_block_lengths", seen.is_subset(&lengths), Some(format!("{seen:?} ⊆ {lengths:?}")), None);
    }
    Ok(())
}

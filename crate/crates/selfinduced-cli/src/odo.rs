//! `odo` subcommands.

use clap::{Args, Subcommand};
use num_bigint::BigUint;

use selfinduced::odometer::{self, CharacteristicSequence, SelfInduction};

use crate::context::{usage, CliResult, Context};
use crate::docs::{parse_list, OdometerDoc};
use crate::Common;

#[derive(Args, Debug)]
pub struct OdoArgs {
    #[command(subcommand)]
    cmd: OdoCmd,
    /// Periodic part of the characteristic sequence, e.g. 2,3.
    #[arg(long, global = true)]
    cycle: Option<String>,
    /// Preperiodic part of the characteristic sequence.
    #[arg(long, global = true)]
    prefix: Option<String>,
}

/// Second odometer for factor and conjugacy questions.
#[derive(Args, Debug)]
struct Other {
    #[arg(long)]
    other_file: Option<std::path::PathBuf>,
    #[arg(long)]
    other_cycle: Option<String>,
    #[arg(long)]
    other_prefix: Option<String>,
}

#[derive(Subcommand, Debug)]
enum OdoCmd {
    /// Whether the odometer is self-induced.
    SelfInduced,
    /// Whether the other odometer is a factor of this one.
    Factor(Other),
    /// Whether the two odometers are conjugate.
    Conjugate(Other),
    /// Canonical prime form of the characteristic sequence.
    Canon,
    /// Induce on a level-1 cylinder of the one-vertex diagram.
    Induce,
}

fn sequence(
    ctx: &mut Context,
    file: Option<&std::path::Path>,
    cycle: Option<&str>,
    prefix: Option<&str>,
) -> CliResult<CharacteristicSequence> {
    match (file, cycle) {
        (Some(p), None) => ctx.document::<OdometerDoc>(p)?.build(),
        (None, Some(c)) => {
            let prefix = prefix.map(parse_list).transpose()?.unwrap_or_default();
            CharacteristicSequence::eventually_periodic(prefix, parse_list(c)?).map_err(usage)
        }
        _ => Err(usage("give exactly one of a document and --cycle")),
    }
}

/// p_n = q_1 ⋯ q_n for n ≤ depth.
fn partial_products(q: &CharacteristicSequence, depth: usize) -> Option<Vec<BigUint>> {
    let terms = q.terms(depth).ok()?;
    let mut acc = BigUint::from(1u8);
    Some(terms.iter().map(|&t| {
        acc *= t;
        acc.clone()
    }).collect())
}

/// Every p′_n (n ≤ depth) divides some p_m (m ≤ 4·depth).
fn divides_eventually(qprime: &CharacteristicSequence, q: &CharacteristicSequence, depth: usize) -> Option<bool> {
    let a = partial_products(qprime, depth)?;
    let b = partial_products(q, 4 * depth)?;
    let zero = BigUint::from(0u8);
    Some(a.iter().all(|x| b.iter().any(|y| y % x == zero)))
}

pub fn run(ctx: &mut Context, common: &Common, args: &OdoArgs) -> CliResult {
    let q = sequence(ctx, common.file.as_deref(), args.cycle.as_deref(), args.prefix.as_deref())?;
    ctx.output("sequence", &q)?;
    match &args.cmd {
        OdoCmd::SelfInduced => {
            let verdict = odometer::is_self_induced(&q);
            let witness = match verdict {
                SelfInduction::Yes { witness_prime } => {
                    ctx.output("verdict", "YES")?;
                    ctx.output("witness_prime", witness_prime)?;
                    Some(format!("prime {witness_prime} has infinite valuation"))
                }
                SelfInduction::No => {
                    ctx.output("verdict", "NO")?;
                    None
                }
            };
            ctx.check("self_induced", matches!(verdict, SelfInduction::Yes { .. }), witness, None);
            if common.verify {
                if let SelfInduction::Yes { witness_prime: p } = verdict {
                    if let Some(pp) = partial_products(&q, common.depth) {
                        let v = |x: &BigUint| (0..).take_while(|&k| x % BigUint::from(p).pow(k + 1) == BigUint::from(0u8)).count();
                        let vals: Vec<usize> = pp.iter().map(v).collect();
                        let grows = vals.windows(2).all(|w| w[0] <= w[1]) && vals.last() > vals.get(vals.len() / 2);
                        ctx.check("verify_valuation_growth", grows, Some(format!("v_{p}(p_n) = {vals:?}")), Some(common.depth));
                    }
                }
            }
        }
        OdoCmd::Factor(o) | OdoCmd::Conjugate(o) => {
            let conj = matches!(args.cmd, OdoCmd::Conjugate(_));
            let other = sequence(ctx, o.other_file.as_deref(), o.other_cycle.as_deref(), o.other_prefix.as_deref())?;
            ctx.output("other", &other)?;
            let verdict = if conj { odometer::is_conjugate(&other, &q) } else { odometer::is_factor(&other, &q) };
            ctx.output("verdict", verdict)?;
            ctx.check(if conj { "conjugate" } else { "factor" }, verdict, None, None);
            if common.verify {
                let fwd = divides_eventually(&other, &q, common.depth);
                let oracle = if conj { fwd.zip(divides_eventually(&q, &other, common.depth)).map(|(a, b)| a && b) } else { fwd };
                if let Some(o) = oracle {
                    ctx.check("verify_divisibility", o == verdict, Some(format!("divisibility oracle says {o}")), Some(common.depth));
                }
            }
        }
        OdoCmd::Canon => {
            let Some(c) = ctx.attempt("canonical_prime_form", odometer::canonical_prime_form(&q)) else { return Ok(()) };
            ctx.output("canonical", &c)?;
            ctx.check("canonical_prime_form", true, None, None);
            if common.verify {
                let ok = divides_eventually(&c, &q, common.depth).zip(divides_eventually(&q, &c, common.depth)).map(|(a, b)| a && b);
                ctx.check("verify_divisibility", ok == Some(true), None, Some(common.depth));
            }
        }
        OdoCmd::Induce => {
            let Some(c) = ctx.attempt("induce", odometer::induce_via_diagram(&q)) else { return Ok(()) };
            ctx.output("induced", &c)?;
            ctx.check("induce", true, None, None);
            if common.verify {
                let want: Vec<u64> = q.terms(common.depth + 1).map_err(usage)?[1..].to_vec();
                let got = c.terms(common.depth).map_err(usage)?;
                let ok = got == want;
                ctx.check("verify_shifted_sequence", ok, Some(format!("expected (q_{{n+1}}) = {want:?}")), Some(common.depth));
            }
        }
    }
    Ok(())
}

//! `gensub` subcommands.

use std::collections::BTreeMap;

use clap::{Args, Subcommand, ValueEnum};

use selfinduced::gensub::{
    self, AlphabetSpace, CellId, CellWord, Decomposition, Exponent, GeneralizedSubstitution, TwoSidedCellWord, LENGTH_CAP,
};
use selfinduced::odometer::PAdicHandle;
use selfinduced::product::ProductSystem;
use selfinduced::substitution::{Substitution, SubstitutionSystem};
use selfinduced::words::SystemHandle;

use crate::context::{usage, CliResult, Context};
use crate::docs::GensubDoc;
use crate::Common;

#[derive(Args, Debug)]
pub struct GensubArgs {
    #[command(subcommand)]
    cmd: GensubCmd,
    /// Use ξ on the compactified naturals, declared at resolution N.
    #[arg(long, global = true)]
    xi: Option<usize>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SystemName {
    TwoAdic,
    ThreeAdic,
    PeriodDoubling,
    Product,
}

#[derive(Subcommand, Debug)]
enum GensubCmd {
    /// Continuity of lengths and letter maps at the declared resolution.
    Validate,
    /// Per-cell primitivity exponents at a resolution.
    Primitive {
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Cell-words of one length generated from a base cell.
    Language {
        #[arg(long)]
        cell: String,
        #[arg(long, default_value_t = 2)]
        length: usize,
        #[arg(long)]
        resolution: Option<usize>,
    },
    /// Stabilized window of the ω-limit point seeded by b.c.
    Fixedpoint {
        #[arg(long)]
        seed: String,
        #[arg(long, default_value_t = 8)]
        radius: usize,
    },
    /// Decompose a two-sided cell-word "past.future" into σ-blocks.
    Decompose {
        #[arg(long)]
        word: String,
    },
    /// Generalized substitution read off a system handle.
    FromSystem {
        #[arg(long, value_enum)]
        system: SystemName,
        #[arg(long, default_value_t = 3)]
        resolution: usize,
    },
    /// Power formula σᵏ(x) = φᵏ(x) T(φᵏ(x)) … on a system handle.
    PowerCheck {
        #[arg(long, value_enum)]
        system: SystemName,
        #[arg(long, default_value_t = 3)]
        n: usize,
        #[arg(long, default_value_t = 10)]
        samples: usize,
        #[arg(long, default_value_t = 3)]
        resolution: usize,
    },
}

fn load(ctx: &mut Context, common: &Common, xi: Option<usize>) -> CliResult<GeneralizedSubstitution> {
    match (&common.file, xi) {
        (Some(p), None) => ctx.document::<GensubDoc>(p)?.build(),
        (None, Some(n)) if n >= 1 => Ok(GeneralizedSubstitution::xi(n)),
        _ => Err(usage("give exactly one of --file and --xi N (N ≥ 1)")),
    }
}

/// Cell of P_m by label or display symbol.
fn find_cell(space: &AlphabetSpace, text: &str, m: usize) -> CliResult<CellId> {
    if let Ok(c) = space.find(text) {
        return Ok(c);
    }
    let hits: Vec<CellId> = space.cells_at(m).into_iter().filter(|&c| space.symbol(c) == text).collect();
    match hits[..] {
        [c] => Ok(c),
        [] => Err(usage(format!("no cell {text} at resolution {m}"))),
        _ => Err(usage(format!("symbol {text} is ambiguous at resolution {m}"))),
    }
}

fn parse_cells(space: &AlphabetSpace, text: &str, m: usize) -> CliResult<CellWord> {
    let tokens: Vec<String> = if text.contains(char::is_whitespace) || text.contains(',') {
        text.split(|c: char| c.is_whitespace() || c == ',').filter(|t| !t.is_empty()).map(str::to_string).collect()
    } else {
        text.chars().map(String::from).collect()
    };
    tokens.iter().map(|t| find_cell(space, t, m)).collect()
}

fn rules_view(g: &GeneralizedSubstitution) -> BTreeMap<String, Vec<String>> {
    let sp = g.space();
    g.rules().iter().map(|(&c, ts)| (sp.label(c).to_string(), ts.iter().map(|&t| sp.label(t).to_string()).collect())).collect()
}

pub fn run(ctx: &mut Context, common: &Common, args: &GensubArgs) -> CliResult {
    match &args.cmd {
        GensubCmd::FromSystem { system, resolution } => return from_system(ctx, common, *system, *resolution),
        GensubCmd::PowerCheck { system, n, samples, resolution } => return power_check(ctx, *system, *n, *samples, *resolution),
        _ => {}
    }
    let g = load(ctx, common, args.xi)?;
    let sp = g.space();
    let res = g.resolution();
    match &args.cmd {
        GensubCmd::Validate => {
            let r = gensub::validate_continuity(&g);
            ctx.output("resolution", res)?;
            ctx.check("continuous", r.is_ok(), r.err().map(|v| v.to_string()), Some(res));
        }
        GensubCmd::Primitive { resolution } => {
            let m = resolution.unwrap_or(res);
            let Some(table) = ctx.attempt("primitive", gensub::is_primitive_at_resolution(&g, m, common.bound)) else { return Ok(()) };
            let view: BTreeMap<String, Exponent> = table.iter().map(|&(c, e)| (sp.label(c).to_string(), e)).collect();
            ctx.output("exponents", &view)?;
            let unknown: Vec<&String> = view.iter().filter(|(_, e)| **e == Exponent::Unknown).map(|(l, _)| l).collect();
            ctx.check("primitive", unknown.is_empty(), unknown.first().map(|l| format!("no exponent for {l} up to {}", common.bound)), Some(common.bound));
            if common.verify {
                let failure = verify_exponents(&g, m, common.bound, &table);
                ctx.check("verify_direct_iteration", failure.is_none(), failure, Some(common.bound));
            }
        }
        GensubCmd::Language { cell, length, resolution } => {
            let m = resolution.unwrap_or(res);
            let a = find_cell(sp, cell, m)?;
            let Some(lang) = ctx.attempt("language", gensub::language(&g, a, *length, m, common.bound)) else { return Ok(()) };
            ctx.output("words", lang.words.iter().map(|w| sp.render(w)).collect::<Vec<_>>())?;
            ctx.output("expanded", lang.expanded)?;
            ctx.check("language", !lang.words.is_empty(), None, Some(lang.expanded));
            if common.verify {
                let mut failure = None;
                for b in sp.cells_at(m) {
                    match gensub::language(&g, b, *length, m, common.bound) {
                        Ok(other) if other.words == lang.words => {}
                        _ => {
                            failure = Some(format!("base {} gives a different language", sp.label(b)));
                            break;
                        }
                    }
                }
                ctx.check("verify_base_independence", failure.is_none(), failure, Some(lang.expanded));
            }
        }
        GensubCmd::Fixedpoint { seed, radius } => {
            let (b, c) = seed.split_once('.').ok_or_else(|| usage("seed must look like b.c"))?;
            let (b, c) = (find_cell(sp, b, res)?, find_cell(sp, c, res)?);
            let Some(w) = ctx.attempt("fixedpoint", gensub::omega_fixed_point(&g, b, c, *radius, common.bound.max(2 * radius + 8))) else { return Ok(()) };
            ctx.output("window", w.window.render(sp))?;
            ctx.output("iterations", w.iterations)?;
            ctx.output("power", w.power)?;
            ctx.check("stabilized", true, None, Some(w.iterations));
            if common.verify {
                let past = g.iterate(&w.window.past, w.power, res).map_err(usage)?;
                let future = g.iterate(&w.window.future, w.power, res).map_err(usage)?;
                let ok = past.ends_with(&w.window.past) && future.starts_with(&w.window.future);
                ctx.check("verify_window_invariant", ok, None, Some(w.power));
            }
        }
        GensubCmd::Decompose { word } => {
            let (p, f) = word.split_once('.').ok_or_else(|| usage("word must look like past.future"))?;
            let w = TwoSidedCellWord::new(parse_cells(sp, p, res)?, parse_cells(sp, f, res)?);
            let Some(dec) = ctx.attempt("decompose", gensub::recognizability_decompose(&g, &w)) else { return Ok(()) };
            match &dec {
                Decomposition::Unique { cuts, preimage } => {
                    ctx.output("cuts", cuts)?;
                    ctx.output("preimage", preimage.render(sp))?;
                    ctx.check("unique", true, None, Some(res));
                    if common.verify {
                        let cells = w.cells();
                        let origin = w.past.len() as i64;
                        let (lo, hi) = ((cuts[0] + origin) as usize, (cuts[cuts.len() - 1] + origin) as usize);
                        let rebuilt = g.apply(&preimage.cells(), res).map_err(usage)?;
                        ctx.check("verify_blocks_rebuild_window", rebuilt == cells[lo..hi], None, Some(res));
                    }
                }
                Decomposition::NotUnique { first, second } => {
                    ctx.output("first", first)?;
                    ctx.output("second", second)?;
                    ctx.check("unique", false, Some(format!("tilings with cuts {:?} and {:?}", first.cuts, second.cuts)), Some(res));
                }
                Decomposition::Inconclusive => {
                    ctx.output("decomposition", "inconclusive")?;
                    ctx.check("unique", false, Some("window too short to contain a full block".into()), Some(res));
                }
            }
        }
        GensubCmd::FromSystem { .. } | GensubCmd::PowerCheck { .. } => unreachable!("handled above"),
    }
    Ok(())
}

fn verify_exponents(g: &GeneralizedSubstitution, m: usize, bound: usize, table: &[(CellId, Exponent)]) -> Option<String> {
    let sp = g.space();
    let finest = sp.max_depth();
    for leaf in sp.leaves_under(sp.root()) {
        let mut w = vec![leaf];
        for k in 1..=bound {
            w = g.apply(&w, finest).ok()?;
            if w.len() > LENGTH_CAP {
                break;
            }
            for &(v, e) in table {
                if let Exponent::Exact(j) = e {
                    if k >= j && !w.iter().any(|&c| sp.coarsen(c, m) == Some(v)) {
                        return Some(format!("σ^{k}({}) misses {}", sp.label(leaf), sp.label(v)));
                    }
                }
            }
        }
    }
    None
}

fn with_system<R>(system: SystemName, f: impl FnOnce(&dyn SystemHandleRunner) -> R) -> CliResult<R> {
    match system {
        SystemName::TwoAdic => Ok(f(&PAdicHandle::new(2, 48).map_err(usage)?)),
        SystemName::ThreeAdic => Ok(f(&PAdicHandle::new(3, 32).map_err(usage)?)),
        SystemName::PeriodDoubling => Ok(f(&SubstitutionSystem::new(&Substitution::period_doubling(), 4).map_err(usage)?)),
        SystemName::Product => Ok(f(&ProductSystem::new(12, 4).map_err(usage)?)),
    }
}

/// Object-safe entry points over concrete handles.
trait SystemHandleRunner {
    fn induced_rules(&self, res: usize) -> Result<GeneralizedSubstitution, gensub::GenSubError>;
    fn power_formula(&self, n: usize, samples: usize, res: usize) -> Result<gensub::PowerFormulaReport, gensub::GenSubError>;
}

impl<H: SystemHandle> SystemHandleRunner for H {
    fn induced_rules(&self, res: usize) -> Result<GeneralizedSubstitution, gensub::GenSubError> {
        gensub::from_self_induced(self, res)
    }
    fn power_formula(&self, n: usize, samples: usize, res: usize) -> Result<gensub::PowerFormulaReport, gensub::GenSubError> {
        gensub::verify_power_formula(self, n, samples, res)
    }
}

fn from_system(ctx: &mut Context, common: &Common, system: SystemName, resolution: usize) -> CliResult {
    let (g, check) = with_system(system, |h| (h.induced_rules(resolution), common.verify.then(|| h.power_formula(1, 10, resolution))))?;
    let Some(g) = ctx.attempt("from_self_induced", g) else { return Ok(()) };
    ctx.output("rules", rules_view(&g))?;
    let cont = gensub::validate_continuity(&g);
    ctx.check("continuous", cont.is_ok(), cont.err().map(|v| v.to_string()), Some(resolution));
    if let Some(r) = check {
        if let Some(r) = ctx.attempt("verify_power_formula", r) {
            ctx.check("verify_power_formula", r.passed(), r.failures.first().cloned(), Some(resolution));
        }
    }
    Ok(())
}

fn power_check(ctx: &mut Context, system: SystemName, n: usize, samples: usize, resolution: usize) -> CliResult {
    let r = with_system(system, |h| h.power_formula(n, samples, resolution))?;
    let Some(r) = ctx.attempt("power_formula", r) else { return Ok(()) };
    ctx.output("report", &r)?;
    ctx.check("power_formula", r.passed(), r.failures.first().cloned(), Some(n));
    Ok(())
}

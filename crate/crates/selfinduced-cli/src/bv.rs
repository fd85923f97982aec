//! `bv` subcommands.

use std::cmp::Ordering;
use std::collections::BTreeSet;
use std::path::PathBuf;

use clap::{Args, Subcommand};
use num_bigint::BigUint;
use num_traits::ToPrimitive;

use selfinduced::bratteli::{
    self, OrderedBipartiteGraph, OrderedBratteliDiagram, PathPrefix, ProperOrder, VershikOutcome,
};

use crate::context::{usage, CliResult, Context};
use crate::docs::{builtin_diagram, parse_list, parse_paths};
use crate::Common;

/// Levels used by the power-iteration measure oracle.
const MEASURE_ORACLE_LEVELS: usize = 40;

#[derive(Args, Debug)]
pub struct BvArgs {
    #[command(subcommand)]
    cmd: BvCmd,
    /// Named diagram instead of --file: baseN or a substitution name.
    #[arg(long, global = true)]
    builtin: Option<String>,
}

#[derive(Subcommand, Debug)]
enum BvCmd {
    /// Structural validation.
    Validate,
    /// Positivity of every product of `window` consecutive level matrices.
    Simple {
        #[arg(long, default_value_t = 1)]
        window: usize,
    },
    /// Proper-order certificate up to --depth.
    Proper,
    /// Vershik successor of a cylinder.
    Vershik {
        #[arg(long)]
        prefix: String,
    },
    /// Telescope between the given levels.
    Contract {
        #[arg(long)]
        cuts: String,
    },
    /// Induce on a set of paths, e.g. "0;1,0".
    Induce {
        #[arg(long)]
        paths: String,
    },
    /// Invariant measure of a cylinder.
    Measure {
        #[arg(long)]
        prefix: String,
    },
    /// Return-time distribution to a clopen set of paths.
    Kac {
        #[arg(long)]
        paths: String,
    },
    /// Embed an ordered bipartite graph document above level n0.
    Embed {
        #[arg(long)]
        graph: PathBuf,
        #[arg(long, default_value_t = 0)]
        n0: usize,
        /// Vertices of level n0 carrying the left side, default 0,1,…
        #[arg(long)]
        left: Option<String>,
    },
    /// Level-by-level embedding of a source diagram into this one.
    Poincare {
        #[arg(long)]
        source: Option<PathBuf>,
        #[arg(long)]
        source_builtin: Option<String>,
    },
}

fn load_diagram(ctx: &mut Context, file: Option<&std::path::Path>, builtin: Option<&str>) -> CliResult<OrderedBratteliDiagram> {
    let d = match (file, builtin) {
        (Some(p), None) => ctx.document::<OrderedBratteliDiagram>(p)?,
        (None, Some(name)) => builtin_diagram(name)?,
        _ => return Err(usage("give exactly one diagram document or builtin")),
    };
    d.checked().map_err(usage)
}

fn render(p: &PathPrefix) -> String {
    p.edges.iter().map(usize::to_string).collect::<Vec<_>>().join(",")
}

pub fn run(ctx: &mut Context, common: &Common, args: &BvArgs) -> CliResult {
    let d = load_diagram(ctx, common.file.as_deref(), args.builtin.as_deref())?;
    let dot_depth = common.depth.min(6);
    match &args.cmd {
        BvCmd::Validate => {
            let v = bratteli::validate(&d);
            ctx.output("violations", &v)?;
            ctx.check("valid", v.is_empty(), v.first().cloned(), None);
            ctx.output("canonical", d.clone().canonical())?;
            if common.verify {
                let text = serde_json::to_string(&d).map_err(|e| usage(e.to_string()))?;
                let back: OrderedBratteliDiagram = serde_json::from_str(&text).map_err(|e| usage(e.to_string()))?;
                ctx.check("verify_round_trip", back == d, None, None);
            }
            ctx.write_dot(common.emit_dot.as_deref(), || bratteli::to_dot(&d, dot_depth))?;
        }
        BvCmd::Simple { window } => {
            let Some(simple) = ctx.attempt("simple", bratteli::is_simple(&d, *window)) else { return Ok(()) };
            ctx.output("simple", simple)?;
            ctx.check("simple", simple, None, Some(*window));
            if common.verify {
                let top = d.depth().unwrap_or(d.levels.len() + 2 * d.period);
                let oracle = (0..top.saturating_sub(*window).max(1)).all(|k| reach_all(&d, k, *window));
                ctx.check("verify_reachability", oracle == simple, Some(format!("reachability oracle says {oracle}")), Some(top));
            }
        }
        BvCmd::Proper => {
            let Some(cert) = ctx.attempt("proper", bratteli::proper_order_certificate(&d, common.depth)) else { return Ok(()) };
            ctx.output("certificate", &cert)?;
            let (pass, witness) = match &cert {
                ProperOrder::Certified { .. } => (true, None),
                ProperOrder::NotProper { maximal, witnesses } => (
                    false,
                    Some(format!(
                        "{} {} paths: {}",
                        witnesses.len(),
                        if *maximal { "maximal" } else { "minimal" },
                        witnesses.iter().map(render).collect::<Vec<_>>().join(" | ")
                    )),
                ),
                ProperOrder::Unknown { depth } => (false, Some(format!("undecided up to depth {depth}"))),
            };
            ctx.check("properly_ordered", pass, witness, Some(common.depth));
            if common.verify && !matches!(cert, ProperOrder::Unknown { .. }) {
                let counts = [true, false].map(|max| extremal_survivors(&d, common.depth.max(8), max));
                let oracle = counts.iter().all(|&c| c == 1);
                ctx.check("verify_extremal_survivors", oracle == pass, Some(format!("surviving max/min chains {counts:?}")), Some(common.depth.max(8)));
            }
        }
        BvCmd::Vershik { prefix } => {
            let p = PathPrefix::new(parse_list(prefix)?);
            let Some(out) = ctx.attempt("vershik", bratteli::vershik_step(&d, &p)) else { return Ok(()) };
            let next = match &out {
                VershikOutcome::Next(q) => Some(render(q)),
                VershikOutcome::NeedsExtension => None,
            };
            ctx.output("successor", &next)?;
            ctx.check("vershik_step", next.is_some(), next.is_none().then(|| "NeedsExtension: every edge is maximal".to_string()), Some(p.len()));
            if common.verify {
                let v = bratteli::check_prefix(&d, &p).map_err(usage)?;
                let mut same: Vec<PathPrefix> =
                    bratteli::all_paths(&d, p.len()).into_iter().filter(|q| bratteli::check_prefix(&d, q).ok() == Some(v)).collect();
                same.sort_by(|a, b| cmp_or_equal(&d, a, b));
                let i = same.iter().position(|q| *q == p).expect("prefix listed");
                let oracle = same.get(i + 1).map(render);
                ctx.check("verify_sorted_successor", oracle == next, oracle.clone(), Some(p.len()));
            }
        }
        BvCmd::Contract { cuts } => {
            let cuts: Vec<usize> = parse_list(cuts)?;
            let Some(c) = ctx.attempt("contract", bratteli::contract(&d, &cuts)) else { return Ok(()) };
            ctx.output("diagram", &c)?;
            ctx.check("contract", true, None, None);
            if common.verify {
                let bad = (1..cuts.len()).find(|&i| bratteli::path_counts(&c, i) != bratteli::path_counts(&d, cuts[i]));
                ctx.check("verify_path_counts", bad.is_none(), bad.map(|i| format!("level {i}")), Some(cuts.len()));
            }
            ctx.write_dot(common.emit_dot.as_deref(), || bratteli::to_dot(&c, dot_depth))?;
        }
        BvCmd::Induce { paths } => {
            let ps = parse_paths(paths)?;
            let Some(c) = ctx.attempt("induce", bratteli::induce_on_paths(&d, &ps)) else { return Ok(()) };
            ctx.output("diagram", &c)?;
            ctx.check("induce", true, None, None);
            if common.verify {
                let edges = c.level(1).map_or(0, |l| l.edges.len());
                let distinct = ps.iter().collect::<BTreeSet<_>>().len();
                ctx.check("verify_level_one_edges", edges == distinct, Some(format!("{edges} edges for {distinct} paths")), None);
            }
            ctx.write_dot(common.emit_dot.as_deref(), || bratteli::to_dot(&c, dot_depth))?;
        }
        BvCmd::Measure { prefix } => {
            let p = PathPrefix::new(parse_list(prefix)?);
            let Some(mu) = ctx.attempt("measure", bratteli::stationary_measure::<f64>(&d)) else { return Ok(()) };
            let Some(value) = ctx.attempt("measure", mu.value(&p)) else { return Ok(()) };
            ctx.output("value", value)?;
            ctx.output("exact", mu.value_exact(&p).map_err(usage)?.map(|r| r.to_string()))?;
            ctx.output("eigenvalue", mu.eigenvalue())?;
            let defect = mu.additivity_defect(&p).map_err(usage)?;
            ctx.check("additive", defect < 1e-10, Some(format!("defect {defect:.3e}")), Some(p.len() + 1));
            if common.verify {
                let oracle = count_ratio(&d, &p, MEASURE_ORACLE_LEVELS);
                let gap = (oracle - value).abs();
                ctx.check("verify_path_count_ratio", gap < 1e-6, Some(format!("oracle {oracle:.12}, gap {gap:.3e}")), Some(p.len() + MEASURE_ORACLE_LEVELS));
            }
        }
        BvCmd::Kac { paths } => {
            let ps = parse_paths(paths)?;
            let Some(mu) = ctx.attempt("measure", bratteli::stationary_measure::<f64>(&d)) else { return Ok(()) };
            let Some((_, report)) = ctx.attempt("kac", bratteli::induced_measure(&mu, &ps)) else { return Ok(()) };
            ctx.output("report", &report)?;
            ctx.output("expected_return_time", report.expected_return_time())?;
            let defect = (report.kac_sum + report.unresolved - 1.0).abs();
            ctx.check("kac_identity", defect < 1e-10, Some(format!("Σ k μ(U_k) = {:.12}", report.kac_sum)), Some(report.max_depth));
            if common.verify {
                let gap = (report.expected_return_time() - 1.0 / report.clopen_mass).abs();
                ctx.check("verify_inverse_mass", gap < 1e-9, Some(format!("1/μ(U) = {:.12}", 1.0 / report.clopen_mass)), None);
            }
        }
        BvCmd::Embed { graph, n0, left } => {
            let g: OrderedBipartiteGraph = ctx.document(graph)?;
            let left: Vec<usize> = match left {
                Some(l) => parse_list(l)?,
                None => (0..g.left).collect(),
            };
            let Some(emb) = ctx.attempt("embed", bratteli::embed_ordered_graph(&d, *n0, &left, &g)) else { return Ok(()) };
            ctx.output("embedding", &emb)?;
            ctx.check("embed", true, None, Some(emb.k));
            if common.verify {
                let r = bratteli::verify_embedding(&d, &left, &g, &emb);
                ctx.check("verify_embedding", r.is_ok(), r.err(), Some(emb.k));
            }
        }
        BvCmd::Poincare { source, source_builtin } => {
            let src = load_diagram(ctx, source.as_deref(), source_builtin.as_deref())?;
            let Some(cert) = ctx.attempt("poincare", bratteli::poincare_embed(&d, &src, common.depth)) else { return Ok(()) };
            ctx.output("certificate", &cert)?;
            ctx.check("poincare", true, None, Some(common.depth));
            if common.verify {
                let mut left = vec![0];
                let mut failure = None;
                for (n, emb) in cert.levels.iter().enumerate() {
                    let g = OrderedBipartiteGraph::from_level(&src, n + 1).expect("level exists");
                    if let Err(e) = bratteli::verify_embedding(&d, &left, &g, emb) {
                        failure = Some(format!("level {}: {e}", n + 1));
                        break;
                    }
                    left = emb.right_map.clone();
                }
                ctx.check("verify_embedding", failure.is_none(), failure, Some(common.depth));
            }
        }
    }
    Ok(())
}

fn cmp_or_equal(d: &OrderedBratteliDiagram, a: &PathPrefix, b: &PathPrefix) -> Ordering {
    bratteli::cmp_paths(d, 1, &a.edges, &b.edges)
}

/// Every vertex of level k reaches every vertex of level k + window.
fn reach_all(d: &OrderedBratteliDiagram, k: usize, window: usize) -> bool {
    let Some(nk) = d.vertices(k) else { return true };
    if !d.has_level(k + window) {
        return true;
    }
    (0..nk).all(|u| {
        let mut set: BTreeSet<usize> = [u].into();
        for j in k + 1..=k + window {
            let l = d.level(j).expect("level exists");
            set = l.edges.iter().filter(|e| set.contains(&e.source)).map(|e| e.target).collect();
        }
        set.len() == l_vertices(d, k + window)
    })
}

fn l_vertices(d: &OrderedBratteliDiagram, k: usize) -> usize {
    d.vertices(k).expect("level exists")
}

/// Vertices of the middle level reached by following extremal in-edges down from every vertex of level 1 + span.
fn extremal_survivors(d: &OrderedBratteliDiagram, span: usize, max: bool) -> usize {
    let Some(top) = d.vertices(1 + span) else { return 0 };
    let mid = 1 + span / 2;
    let mut set: BTreeSet<usize> = (0..top).collect();
    for j in (mid + 1..=1 + span).rev() {
        let l = d.level(j).expect("level exists");
        set = set
            .iter()
            .map(|&v| {
                let ins = l.in_edges(v);
                (if max { ins.last() } else { ins.first() }).expect("vertex has in-edges").source
            })
            .collect();
    }
    set.len()
}

/// μ([p]) ≈ #paths from t(p) up `levels` levels ÷ #paths from the root to the same height.
fn count_ratio(d: &OrderedBratteliDiagram, p: &PathPrefix, levels: usize) -> f64 {
    let n = p.len();
    let v = bratteli::check_prefix(d, p).expect("valid prefix");
    let mut h = vec![BigUint::from(0u8); d.vertices(n).expect("level")];
    h[v] = BigUint::from(1u8);
    for k in n + 1..=n + levels {
        let l = d.level(k).expect("stationary");
        let mut next = vec![BigUint::from(0u8); l.vertices];
        for e in &l.edges {
            next[e.target] += &h[e.source];
        }
        h = next;
    }
    let total: BigUint = bratteli::path_counts(d, n + levels).iter().sum();
    let num: BigUint = h.iter().sum();
    num.to_f64().expect("finite") / total.to_f64().expect("finite")
}

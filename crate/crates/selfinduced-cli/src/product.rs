//! `product` subcommands.

use clap::{Args, Subcommand};

use selfinduced::gensub;
use selfinduced::product::{self, ProductSystem};

use crate::context::{usage, CliResult, Context};
use crate::Common;

#[derive(Args, Debug)]
pub struct ProductArgs {
    #[command(subcommand)]
    cmd: ProductCmd,
}

#[derive(Subcommand, Debug)]
enum ProductCmd {
    /// σ∘S = S²∘σ, doubling on ℤ₃ and return time 2 on sampled points at --depth.
    Verify {
        #[arg(long, default_value_t = 1000)]
        samples: usize,
    },
    /// Non-expansiveness and non-equicontinuity witnesses.
    Witness {
        #[arg(long, default_value_t = 1.0 / 81.0)]
        epsilon: f64,
        #[arg(long, default_value_t = 1.0 / 32.0)]
        delta: f64,
    },
}

pub fn run(ctx: &mut Context, common: &Common, args: &ProductArgs) -> CliResult {
    match &args.cmd {
        ProductCmd::Verify { samples } => {
            let Some(r) = ctx.attempt("product_selfinduced", product::verify_product_selfinduced(common.depth, *samples)) else { return Ok(()) };
            ctx.output("report", &r)?;
            ctx.check("sigma_commutes_with_shift", r.commutation_failures == 0, None, Some(common.depth));
            ctx.check("doubling_on_z3", r.odometer_failures == 0, None, Some(common.depth));
            ctx.check("return_time_two", r.return_time_failures == 0, r.witnesses.first().cloned(), Some(common.depth));
            if common.verify {
                let h = ProductSystem::new(common.depth.max(1), 2).map_err(usage)?;
                if let Some(p) = ctx.attempt("verify_power_formula", gensub::verify_power_formula(&h, 2, 10, 3)) {
                    ctx.check("verify_power_formula", p.passed(), p.failures.first().cloned(), Some(2));
                }
            }
        }
        ProductCmd::Witness { epsilon, delta } => {
            if let Some(w) = ctx.attempt("nonexpansive", product::nonexpansive_witness(*epsilon)) {
                ctx.output("nonexpansive", &w)?;
                ctx.check("nonexpansive", w.bound < *epsilon, Some(format!("orbit distance {:.3e}", w.bound)), Some(w.first.z.depth()));
            }
            if let Some(w) = ctx.attempt("nonequicontinuous", product::nonequicontinuous_witness(*delta, common.horizon)) {
                ctx.output("nonequicontinuous", &w)?;
                let close = w.initial_distance < *delta || (*delta >= 1.0 && w.initial_distance <= *delta);
                ctx.check("nonequicontinuous", close, Some(format!("separates after {} steps", w.separation_time)), Some(common.horizon));
                if common.verify {
                    let (mut p, mut q) = (w.first.clone(), w.second.clone());
                    for _ in 0..w.separation_time {
                        p = product::product_step(&p).map_err(usage)?;
                        q = product::product_step(&q).map_err(usage)?;
                    }
                    ctx.check("verify_separation", p.letter(0) != q.letter(0), None, Some(w.separation_time));
                }
            }
        }
    }
    Ok(())
}

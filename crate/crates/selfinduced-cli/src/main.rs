//! `selfinduced` command-line front end.

mod bv;
mod context;
mod docs;
mod gensub;
mod odo;
mod product;
mod sub;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use context::{CliError, Context, EXIT_INTERNAL, EXIT_USAGE};

#[derive(Parser, Debug)]
#[command(name = "selfinduced", version, about = "Exact checks for self-induced minimal Cantor systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Substitutions on finite alphabets.
    Sub(sub::SubArgs),
    /// Odometers given by characteristic sequences or valuation profiles.
    Odo(odo::OdoArgs),
    /// Ordered Bratteli diagrams and Vershik maps.
    Bv(bv::BvArgs),
    /// Generalized substitutions on compact alphabets.
    Gensub(gensub::GensubArgs),
    /// The period-doubling × ℤ₃ product system.
    Product(product::ProductArgs),
}

/// Flags shared by every subcommand.
#[derive(Args, Debug, Clone)]
pub struct Common {
    /// Input document (JSON).
    #[arg(long, global = true)]
    pub file: Option<PathBuf>,
    /// Certification depth.
    #[arg(long, global = true, default_value_t = 12)]
    pub depth: usize,
    /// Window or language horizon.
    #[arg(long, global = true, default_value_t = 64)]
    pub horizon: usize,
    /// Search bound.
    #[arg(long, global = true, default_value_t = 32)]
    pub bound: usize,
    /// Re-check the output with an independent oracle.
    #[arg(long, global = true)]
    pub verify: bool,
    /// Write a Graphviz drawing of the relevant diagram to this path.
    #[arg(long, global = true)]
    pub emit_dot: Option<PathBuf>,
}

fn main() -> ExitCode {
    let argv: Vec<String> = std::env::args().collect();
    let cli = Cli::parse();
    let mut ctx = Context::new(argv[1..].to_vec());
    let result = match &cli.command {
        Command::Sub(a) => sub::run(&mut ctx, &cli.common, a),
        Command::Odo(a) => odo::run(&mut ctx, &cli.common, a),
        Command::Bv(a) => bv::run(&mut ctx, &cli.common, a),
        Command::Gensub(a) => gensub::run(&mut ctx, &cli.common, a),
        Command::Product(a) => product::run(&mut ctx, &cli.common, a),
    };
    match result.and_then(|()| ctx.finish()) {
        Ok(code) => ExitCode::from(code),
        Err(CliError::Usage(m)) => {
            eprintln!("usage error: {m}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Internal(m)) => {
            eprintln!("internal error: {m}");
            ExitCode::from(EXIT_INTERNAL)
        }
    }
}

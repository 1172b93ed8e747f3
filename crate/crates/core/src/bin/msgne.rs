use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use msgne::experiment::{
    parse_algorithm_list, run, Algorithm, ExperimentConfig, GameSource, Outcome, EXIT_CONFIG, GENERATORS,
};
use msgne::solvers::SolveConfig;
use msgne::{Error, Result};

/// Mixed-strategy generalized Nash equilibrium solver.
#[derive(Parser, Debug)]
#[command(name = "msgne", version)]
struct Args {
    /// Game file (JSON).
    #[arg(long, conflicts_with = "generator")]
    game: Option<PathBuf>,

    /// Builtin instance, optionally with parameters, e.g. `dsm:n=5,t=8`.
    #[arg(long)]
    generator: Option<String>,

    /// bforb, forb_alternative or distributed.
    #[arg(long, default_value = "bforb")]
    algorithm: String,

    /// ring, star, complete, er:p=<prob> or a graph file (distributed only).
    #[arg(long)]
    graph: Option<String>,

    /// One step for every agent, or a comma-separated list.
    #[arg(long)]
    gamma: Option<String>,

    #[arg(long)]
    zeta: Option<f64>,

    #[arg(long, default_value_t = 1e-5)]
    eps: f64,

    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,

    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Record every this many iterations in the trace.
    #[arg(long, default_value_t = 1)]
    trace_every: usize,

    /// CSV trace output.
    #[arg(long)]
    trace: Option<PathBuf>,

    /// JSON report output (printed to stdout when absent).
    #[arg(long)]
    report: Option<PathBuf>,

    /// Comma-separated algorithms to run on the same instance.
    #[arg(long)]
    compare: Option<String>,
}

fn parse_steps(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(|t| {
            t.trim()
                .parse::<f64>()
                .map_err(|_| Error::Config(format!("bad step size {t:?}")))
        })
        .collect()
}

fn config(args: &Args) -> Result<ExperimentConfig> {
    let game = match (&args.game, &args.generator) {
        (Some(p), None) => GameSource::Path(p.clone()),
        (None, Some(g)) => GameSource::Generator(g.clone()),
        _ => {
            return Err(Error::Config(format!(
                "give exactly one of --game or --generator ({})",
                GENERATORS.join(", ")
            )))
        }
    };
    let algorithms = match &args.compare {
        Some(list) => parse_algorithm_list(list)?,
        None => vec![args.algorithm.parse::<Algorithm>()?],
    };
    let solve = SolveConfig {
        gamma: args.gamma.as_deref().map(parse_steps).transpose()?,
        zeta: args.zeta,
        epsilon: args.eps,
        max_iters: args.max_iters,
        trace_every: args.trace_every,
        seed: args.seed,
        ..SolveConfig::default()
    };
    Ok(ExperimentConfig {
        game,
        algorithms,
        graph: args.graph.clone(),
        seed: args.seed,
        solve,
        trace: args.trace.clone(),
        report: args.report.clone(),
    })
}

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) if e.use_stderr() => {
            let _ = e.print();
            return ExitCode::from(EXIT_CONFIG as u8);
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
    };
    let outcome: Result<Outcome> = config(&args).and_then(|c| run(&c));
    match outcome {
        Ok(o) => {
            if args.report.is_none() {
                match o.to_json() {
                    Ok(s) => print!("{s}"),
                    Err(e) => eprintln!("error: {e}"),
                }
            }
            ExitCode::from(o.exit_code() as u8)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_CONFIG as u8)
        }
    }
}

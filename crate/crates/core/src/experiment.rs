//! Experiment runner behind the command-line tool: builtin generators, one solve or a
//! comparison of several algorithms, and the JSON report.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::{
    compile, io, lift_integer_cost, make_cournot_instance, make_dsm_instance, make_flow_instance,
    make_pwa_instance, matching_pennies, reformulate_pwa, CournotParams, DsmParams, FlowParams, GmiGame,
    MsGnep, PwaParams,
};
use crate::linalg::dist_inf;
use crate::network::CommGraph;
use crate::operators::{build_problem, SplitProblem, Variant};
use crate::regularizers::LegendreKind;
use crate::solvers::{
    consensus_spread, regularizer_for, run_algorithm2_problem, run_alternative_problem, run_problem, SolveConfig,
    SolveReport, Status,
};
use crate::verify::{kkt_residual, round_to_pure, EquilibriumCertificate};

pub const EXIT_CONVERGED: i32 = 0;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

pub const GENERATORS: [&str; 5] = ["matching_pennies", "dsm", "cournot", "flow", "pwa_demo"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Algorithm {
    Bforb,
    ForbAlternative,
    Distributed,
}

impl Algorithm {
    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Bforb => "bforb",
            Algorithm::ForbAlternative => "forb_alternative",
            Algorithm::Distributed => "distributed",
        }
    }

    pub fn variant(self) -> Variant {
        match self {
            Algorithm::Bforb => Variant::SemiDecentralized,
            Algorithm::ForbAlternative => Variant::Alternative,
            Algorithm::Distributed => Variant::Distributed,
        }
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "bforb" => Ok(Algorithm::Bforb),
            "forb_alternative" => Ok(Algorithm::ForbAlternative),
            "distributed" => Ok(Algorithm::Distributed),
            other => Err(Error::Config(format!(
                "unknown algorithm {other:?} (expected bforb, forb_alternative or distributed)"
            ))),
        }
    }
}

/// Comma-separated algorithm names; an empty list is an error.
pub fn parse_algorithm_list(s: &str) -> Result<Vec<Algorithm>> {
    let list: Vec<Algorithm> = s
        .split(',')
        .filter(|t| !t.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    if list.is_empty() {
        return Err(Error::Config("the comparison needs at least one algorithm".into()));
    }
    Ok(list)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GameSource {
    Path(PathBuf),
    /// `name` or `name:key=value,...`
    Generator(String),
    /// A game document held in memory.
    Inline(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub game: GameSource,
    pub algorithms: Vec<Algorithm>,
    /// `ring`, `star`, `complete`, `er:p=<prob>` or a graph file.
    pub graph: Option<String>,
    pub seed: u64,
    pub solve: SolveConfig,
    pub trace: Option<PathBuf>,
    pub report: Option<PathBuf>,
}

fn parse_params(name: &str, rest: Option<&str>) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for kv in rest.unwrap_or("").split(',').filter(|t| !t.trim().is_empty()) {
        let (k, v) = kv
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("generator {name}: expected key=value, got {kv:?}")))?;
        out.insert(k.trim().to_ascii_lowercase(), v.trim().to_string());
    }
    Ok(out)
}

fn take<T: FromStr>(params: &mut BTreeMap<String, String>, keys: &[&str], default: T, name: &str) -> Result<T> {
    for k in keys {
        if let Some(v) = params.remove(*k) {
            return v
                .parse()
                .map_err(|_| Error::Config(format!("generator {name}: bad value {v:?} for {k}")));
        }
    }
    Ok(default)
}

/// Builds a builtin instance from `name[:key=value,...]`.
pub fn generate(spec: &str, seed: u64) -> Result<GmiGame> {
    let (name, rest) = match spec.split_once(':') {
        Some((n, r)) => (n.trim(), Some(r)),
        None => (spec.trim(), None),
    };
    let mut p = parse_params(name, rest)?;
    let game = match name {
        "matching_pennies" => matching_pennies(),
        "dsm" => {
            let d = DsmParams::default();
            make_dsm_instance(&DsmParams {
                n_agents: take(&mut p, &["n", "n_agents"], d.n_agents, name)?,
                horizon: take(&mut p, &["t", "horizon"], d.horizon, name)?,
                devices_per_agent: take(&mut p, &["devices", "devices_per_agent"], d.devices_per_agent, name)?,
                seed,
            })?
        }
        "cournot" => {
            let d = CournotParams::default();
            make_cournot_instance(&CournotParams {
                n_agents: take(&mut p, &["n", "n_agents"], d.n_agents, name)?,
                n_markets: take(&mut p, &["m", "n_markets"], d.n_markets, name)?,
                seed,
            })?
        }
        "flow" => {
            let d = FlowParams::default();
            let g = make_flow_instance(&FlowParams {
                n_agents: take(&mut p, &["n", "n_agents"], d.n_agents, name)?,
                n_links: take(&mut p, &["l", "n_links"], d.n_links, name)?,
                seed,
            })?;
            lift_integer_cost(&g)?
        }
        "pwa_demo" => {
            let d = PwaParams::default();
            reformulate_pwa(&make_pwa_instance(&PwaParams {
                n_agents: take(&mut p, &["n", "n_agents"], d.n_agents, name)?,
                max_regions: take(&mut p, &["p", "max_regions"], d.max_regions, name)?,
                seed,
            })?)?
        }
        other => {
            return Err(Error::Config(format!(
                "unknown generator {other:?} (expected one of {})",
                GENERATORS.join(", ")
            )))
        }
    };
    if let Some(k) = p.keys().next() {
        return Err(Error::Config(format!("generator {name}: unknown parameter {k:?}")));
    }
    Ok(game)
}

pub fn load_game(source: &GameSource, seed: u64) -> Result<GmiGame> {
    match source {
        GameSource::Path(p) => io::game_from_path(p),
        GameSource::Generator(g) => generate(g, seed),
        GameSource::Inline(text) => io::game_from_str(text),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub algorithm: Algorithm,
    pub status: Status,
    pub iterations: usize,
    pub certificate: EquilibriumCertificate,
    pub final_strategies: Vec<Vec<f64>>,
    pub final_continuous: Vec<Vec<f64>>,
    pub rounded_actions: Vec<Vec<i64>>,
    /// Shared multipliers, or every agent's copy for the distributed algorithm.
    pub final_multipliers: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub consensus_spread: Option<f64>,
    pub lipschitz: f64,
    pub gamma: Vec<f64>,
    pub zeta: f64,
    pub seed: u64,
    pub config_echo: ExperimentConfig,
}

impl ExperimentReport {
    pub fn exit_code(&self) -> i32 {
        exit_code(self.status)
    }

    pub fn primal(&self) -> Vec<f64> {
        self.final_strategies
            .iter()
            .zip(&self.final_continuous)
            .flat_map(|(x, y)| x.iter().chain(y).copied())
            .collect()
    }
}

pub fn exit_code(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_CONVERGED,
        Status::MaxIters => EXIT_MAX_ITERS,
        Status::Diverged => EXIT_DIVERGED,
    }
}

/// One assembled solve: the problem, the raw solver output and its certificate.
pub struct Solved {
    pub problem: SplitProblem,
    pub report: SolveReport,
    pub certificate: EquilibriumCertificate,
}

/// Runs `algorithm` on a compiled game.
pub fn solve(ms: &MsGnep, algorithm: Algorithm, graph: Option<&CommGraph>, cfg: &SolveConfig) -> Result<Solved> {
    if algorithm == Algorithm::Distributed && graph.is_none() {
        return Err(Error::Config("the distributed algorithm needs --graph".into()));
    }
    let problem = build_problem(ms, algorithm.variant(), graph, cfg.seed)?;
    let (report, kind) = match algorithm {
        Algorithm::Bforb => (run_problem(ms, &problem, cfg, cfg.regularizer)?, cfg.regularizer),
        Algorithm::ForbAlternative => (run_alternative_problem(ms, &problem, cfg)?, LegendreKind::Euclidean),
        Algorithm::Distributed => (
            run_algorithm2_problem(ms, &problem, graph.expect("checked above"), cfg)?,
            cfg.regularizer,
        ),
    };
    let spec = regularizer_for(&problem, kind)?;
    let steps = problem.block_steps(&report.gamma, report.zeta);
    let certificate = kkt_residual(ms, &problem, &spec, &steps, &report.final_iterate)?;
    Ok(Solved {
        problem,
        report,
        certificate,
    })
}

fn with_suffix(path: &Path, alg: Algorithm) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("trace");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}_{alg}.{ext}"),
        None => format!("{stem}_{alg}"),
    };
    path.with_file_name(name)
}

fn single_report(cfg: &ExperimentConfig, ms: &MsGnep, graph: Option<&CommGraph>, alg: Algorithm) -> Result<ExperimentReport> {
    let mut solve_cfg = cfg.solve.clone();
    solve_cfg.seed = cfg.seed;
    let s = solve(ms, alg, graph, &solve_cfg)?;
    if let Some(path) = &cfg.trace {
        let path = if cfg.algorithms.len() > 1 {
            with_suffix(path, alg)
        } else {
            path.clone()
        };
        s.report.write_trace_path(&path)?;
    }
    let r = &s.report;
    let n_lambda = r.layout.lambda.len();
    Ok(ExperimentReport {
        algorithm: alg,
        status: r.status,
        iterations: r.iterations,
        certificate: s.certificate,
        final_strategies: r.strategies(),
        final_continuous: r.continuous(),
        rounded_actions: round_to_pure(ms, &r.layout.gather_x(&r.final_iterate))?,
        final_multipliers: (0..n_lambda).map(|i| r.lambda(i).to_vec()).collect(),
        consensus_spread: (alg == Algorithm::Distributed).then(|| consensus_spread(r)),
        lipschitz: r.lipschitz,
        gamma: r.gamma.clone(),
        zeta: r.zeta,
        seed: cfg.seed,
        config_echo: cfg.clone(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairDistance {
    pub a: Algorithm,
    pub b: Algorithm,
    /// `‖(x, y)_a − (x, y)_b‖_∞`
    pub primal_distance_inf: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComparisonReport {
    pub runs: Vec<ExperimentReport>,
    pub iterations: BTreeMap<Algorithm, usize>,
    pub pairwise: Vec<PairDistance>,
    pub seed: u64,
}

impl ComparisonReport {
    /// The worst exit code of the individual runs.
    pub fn exit_code(&self) -> i32 {
        self.runs.iter().map(|r| r.exit_code()).max().unwrap_or(EXIT_CONFIG)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Outcome {
    Single(Box<ExperimentReport>),
    Comparison(ComparisonReport),
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        match self {
            Outcome::Single(r) => r.exit_code(),
            Outcome::Comparison(c) => c.exit_code(),
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }
}

fn prepare(cfg: &ExperimentConfig) -> Result<(MsGnep, Option<CommGraph>)> {
    if cfg.algorithms.is_empty() {
        return Err(Error::Config("no algorithm selected".into()));
    }
    let needs_graph = cfg.algorithms.contains(&Algorithm::Distributed);
    if needs_graph && cfg.graph.is_none() {
        return Err(Error::Config("the distributed algorithm needs --graph".into()));
    }
    let game = load_game(&cfg.game, cfg.seed)?;
    let ms = compile(&game)?;
    let graph = match (&cfg.graph, needs_graph) {
        (Some(desc), true) => Some(CommGraph::from_descriptor(desc, ms.n_agents(), cfg.seed)?),
        _ => None,
    };
    Ok((ms, graph))
}

/// Runs one algorithm (or compares several when more than one is listed) and
/// writes the requested artifacts.
pub fn run(cfg: &ExperimentConfig) -> Result<Outcome> {
    let (ms, graph) = prepare(cfg)?;
    let outcome = if cfg.algorithms.len() == 1 {
        Outcome::Single(Box::new(single_report(cfg, &ms, graph.as_ref(), cfg.algorithms[0])?))
    } else {
        let runs: Vec<ExperimentReport> = cfg
            .algorithms
            .iter()
            .map(|&a| single_report(cfg, &ms, graph.as_ref(), a))
            .collect::<Result<_>>()?;
        let mut pairwise = Vec::new();
        for i in 0..runs.len() {
            for j in i + 1..runs.len() {
                pairwise.push(PairDistance {
                    a: runs[i].algorithm,
                    b: runs[j].algorithm,
                    primal_distance_inf: dist_inf(&runs[i].primal(), &runs[j].primal()),
                });
            }
        }
        Outcome::Comparison(ComparisonReport {
            iterations: runs.iter().map(|r| (r.algorithm, r.iterations)).collect(),
            pairwise,
            seed: cfg.seed,
            runs,
        })
    };
    if let Some(path) = &cfg.report {
        std::fs::write(path, outcome.to_json()?)?;
    }
    Ok(outcome)
}

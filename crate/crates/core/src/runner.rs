//! Experiment configuration, multi-seed execution, result files and aggregation.
//!
//! Configs are plain text, one `key = value` per line, `#` starting a comment.
//! Unknown keys are rejected. [`ExperimentConfig::to_config_string`] writes the
//! canonical form, which parses back to an equal config.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::acquisition::AcqMaxBudget;
use crate::benchmarks::{make_benchmark, Problem, PROBLEM_NAMES};
use crate::error::{Error, Result};
use crate::gp::HyperOptConfig;
use crate::simulator::{
    run_async, run_sync, Budget, EventLog, RuntimeDist, SimConfig, SimError, SurrogateConfig,
};
use crate::strategies::{StrategyConfig, StrategyKind};

pub const CHECKPOINT_STEPS: [usize; 3] = [50, 75, 100];
pub const TIME_GRID_POINTS: usize = 101;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Sync,
    Async,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sync => "sync",
            Mode::Async => "async",
        }
    }
}

impl FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sync" | "synchronous" => Ok(Mode::Sync),
            "async" | "asynchronous" => Ok(Mode::Async),
            other => Err(Error::Config(format!(
                "mode must be sync or async, got `{other}`"
            ))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub problem: String,
    /// Seed of the GP draw for `mat-*` problems.
    pub problem_seed: Option<u64>,
    #[serde(serialize_with = "serialize_display")]
    pub strategy: StrategyKind,
    pub mode: Mode,
    pub k: usize,
    pub c: usize,
    pub n_steps: usize,
    pub max_sim_time: Option<f64>,
    pub seeds: Vec<u64>,
    pub kappa: f64,
    pub gamma: f64,
    pub p: f64,
    pub ts_samples: usize,
    pub acq_random: usize,
    pub acq_refine: usize,
    pub acq_refine_steps: usize,
    pub acq_refine_step: f64,
    pub lipschitz_samples_per_dim: usize,
    #[serde(serialize_with = "serialize_display")]
    pub runtime: RuntimeDist,
    pub refit_every: usize,
    pub hyper_restarts: usize,
    pub hyper_max_iters: usize,
    pub standardise: bool,
    pub out: PathBuf,
}

fn serialize_display<T: std::fmt::Display, S: serde::Serializer>(
    v: &T,
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_str(v)
}

const REQUIRED_KEYS: [&str; 3] = ["problem", "strategy", "k"];

const KNOWN_KEYS: [&str; 24] = [
    "problem",
    "problem_seed",
    "strategy",
    "mode",
    "k",
    "c",
    "n_steps",
    "max_sim_time",
    "seeds",
    "kappa",
    "gamma",
    "p",
    "ts_samples",
    "acq_random",
    "acq_refine",
    "acq_refine_steps",
    "acq_refine_step",
    "lipschitz_samples_per_dim",
    "runtime",
    "refit_every",
    "hyper_restarts",
    "hyper_max_iters",
    "standardise",
    "out",
];

impl ExperimentConfig {
    /// A config with every optional field at its default.
    pub fn new(problem: &str, strategy: StrategyKind, k: usize) -> Self {
        let s = StrategyConfig::default();
        let h = HyperOptConfig::default();
        let sur = SurrogateConfig::default();
        Self {
            problem: problem.to_string(),
            problem_seed: None,
            strategy,
            mode: Mode::Async,
            k,
            c: 1,
            n_steps: 50,
            max_sim_time: None,
            seeds: (0..30).collect(),
            kappa: s.kappa,
            gamma: s.gamma,
            p: s.p,
            ts_samples: s.ts_samples,
            acq_random: s.acq_budget.n_random,
            acq_refine: s.acq_budget.n_refine,
            acq_refine_steps: s.acq_budget.refine_steps,
            acq_refine_step: s.acq_budget.refine_step_size,
            lipschitz_samples_per_dim: s.lipschitz_samples_per_dim,
            runtime: RuntimeDist::default(),
            refit_every: sur.refit_every,
            hyper_restarts: h.n_restarts,
            hyper_max_iters: h.max_iters,
            standardise: sur.standardise,
            out: PathBuf::from("results"),
        }
    }

    /// Parses the key-value text format and validates the result.
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_pairs(parse_pairs(text)?)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text)
    }

    /// Builds a config from keys and raw values; later duplicates are not allowed.
    pub fn from_pairs(pairs: BTreeMap<String, String>) -> Result<Self> {
        for key in pairs.keys() {
            if !KNOWN_KEYS.contains(&key.as_str()) {
                return Err(Error::Config(format!(
                    "unknown key `{key}`; valid keys are: {}",
                    KNOWN_KEYS.join(", ")
                )));
            }
        }
        for key in REQUIRED_KEYS {
            if !pairs.contains_key(key) {
                return Err(Error::Config(format!("missing required key `{key}`")));
            }
        }
        let strategy: StrategyKind = pairs["strategy"].parse()?;
        let k = parse_value::<usize>("k", &pairs["k"])?;
        let mut c = Self::new(pairs["problem"].trim(), strategy, k);
        for (key, raw) in &pairs {
            let v = raw.trim();
            match key.as_str() {
                "problem" | "strategy" | "k" => {}
                "problem_seed" => c.problem_seed = parse_optional(key, v)?,
                "mode" => c.mode = v.parse()?,
                "c" => c.c = parse_value(key, v)?,
                "n_steps" => c.n_steps = parse_value(key, v)?,
                "max_sim_time" => c.max_sim_time = parse_optional(key, v)?,
                "seeds" => c.seeds = parse_seeds(v)?,
                "kappa" => c.kappa = parse_value(key, v)?,
                "gamma" => c.gamma = parse_value(key, v)?,
                "p" => c.p = parse_value(key, v)?,
                "ts_samples" => c.ts_samples = parse_value(key, v)?,
                "acq_random" => c.acq_random = parse_value(key, v)?,
                "acq_refine" => c.acq_refine = parse_value(key, v)?,
                "acq_refine_steps" => c.acq_refine_steps = parse_value(key, v)?,
                "acq_refine_step" => c.acq_refine_step = parse_value(key, v)?,
                "lipschitz_samples_per_dim" => c.lipschitz_samples_per_dim = parse_value(key, v)?,
                "runtime" => c.runtime = v.parse()?,
                "refit_every" => c.refit_every = parse_value(key, v)?,
                "hyper_restarts" => c.hyper_restarts = parse_value(key, v)?,
                "hyper_max_iters" => c.hyper_max_iters = parse_value(key, v)?,
                "standardise" => c.standardise = parse_value(key, v)?,
                "out" => c.out = PathBuf::from(v),
                _ => unreachable!("keys were checked above"),
            }
        }
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        if !PROBLEM_NAMES.contains(&self.problem.trim().to_ascii_lowercase().as_str()) {
            return Err(Error::UnknownProblem {
                name: self.problem.clone(),
                valid: PROBLEM_NAMES.to_vec(),
            });
        }
        if self.k == 0 {
            return Err(Error::Config("k must be at least 1".into()));
        }
        if self.c == 0 || self.c > self.k {
            return Err(Error::Config(format!(
                "c must satisfy 1 <= c <= k = {}, got c = {}",
                self.k, self.c
            )));
        }
        if self.n_steps == 0 {
            return Err(Error::Config("n_steps must be at least 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        self.sim_config()
            .validate()
            .map_err(|e| Error::Config(e.to_string()))
    }

    pub fn sim_config(&self) -> SimConfig {
        SimConfig {
            strategy: self.strategy,
            k: self.k,
            c: self.c,
            budget: Budget {
                max_evaluations: self.n_steps,
                max_sim_time: self.max_sim_time,
            },
            runtime: self.runtime.clone(),
            strategy_config: StrategyConfig {
                kappa: self.kappa,
                gamma: self.gamma,
                p: self.p,
                acq_budget: AcqMaxBudget {
                    n_random: self.acq_random,
                    n_refine: self.acq_refine,
                    refine_steps: self.acq_refine_steps,
                    refine_step_size: self.acq_refine_step,
                },
                lipschitz_samples_per_dim: self.lipschitz_samples_per_dim,
                ts_samples: self.ts_samples,
                ..StrategyConfig::default()
            },
            surrogate: SurrogateConfig {
                hyperopt: HyperOptConfig {
                    n_restarts: self.hyper_restarts,
                    max_iters: self.hyper_max_iters,
                    ..HyperOptConfig::default()
                },
                refit_every: self.refit_every,
                standardise: self.standardise,
                ..SurrogateConfig::default()
            },
        }
    }

    /// Canonical text form; every key is written.
    pub fn to_config_string(&self) -> String {
        let opt = |v: Option<String>| v.unwrap_or_else(|| "none".into());
        let mut s = String::new();
        let mut put = |k: &str, v: String| {
            let _ = writeln!(s, "{k} = {v}");
        };
        put("problem", self.problem.clone());
        put(
            "problem_seed",
            opt(self.problem_seed.map(|v| v.to_string())),
        );
        put("strategy", self.strategy.to_string());
        put("mode", self.mode.as_str().into());
        put("k", self.k.to_string());
        put("c", self.c.to_string());
        put("n_steps", self.n_steps.to_string());
        put(
            "max_sim_time",
            opt(self.max_sim_time.map(|v| v.to_string())),
        );
        put("seeds", format_seeds(&self.seeds));
        put("kappa", self.kappa.to_string());
        put("gamma", self.gamma.to_string());
        put("p", self.p.to_string());
        put("ts_samples", self.ts_samples.to_string());
        put("acq_random", self.acq_random.to_string());
        put("acq_refine", self.acq_refine.to_string());
        put("acq_refine_steps", self.acq_refine_steps.to_string());
        put("acq_refine_step", self.acq_refine_step.to_string());
        put(
            "lipschitz_samples_per_dim",
            self.lipschitz_samples_per_dim.to_string(),
        );
        put("runtime", self.runtime.to_string());
        put("refit_every", self.refit_every.to_string());
        put("hyper_restarts", self.hyper_restarts.to_string());
        put("hyper_max_iters", self.hyper_max_iters.to_string());
        put("standardise", self.standardise.to_string());
        put("out", self.out.display().to_string());
        s
    }
}

/// Splits `key = value` lines into a map. Blank lines and `#` comments are skipped.
pub fn parse_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut pairs = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", i + 1)))?;
        let key = key.trim().to_string();
        if pairs
            .insert(key.clone(), value.trim().to_string())
            .is_some()
        {
            return Err(Error::Config(format!(
                "line {}: duplicate key `{key}`",
                i + 1
            )));
        }
    }
    Ok(pairs)
}

fn parse_value<T: FromStr>(key: &str, v: &str) -> Result<T> {
    v.trim()
        .parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}

fn parse_optional<T: FromStr>(key: &str, v: &str) -> Result<Option<T>> {
    if v.eq_ignore_ascii_case("none") || v.is_empty() {
        Ok(None)
    } else {
        parse_value(key, v).map(Some)
    }
}

/// Comma-separated seeds or inclusive ranges, e.g. `0-29` or `1,4,10-12`.
pub fn parse_seeds(v: &str) -> Result<Vec<u64>> {
    let mut seeds = Vec::new();
    for part in v.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b): (u64, u64) = (parse_value("seeds", a)?, parse_value("seeds", b)?);
                if a > b {
                    return Err(Error::Config(format!("empty seed range `{part}`")));
                }
                seeds.extend(a..=b);
            }
            None => seeds.push(parse_value("seeds", part)?),
        }
    }
    if seeds.is_empty() {
        return Err(Error::Config("seeds must not be empty".into()));
    }
    Ok(seeds)
}

/// Inverse of [`parse_seeds`], collapsing consecutive runs into ranges.
pub fn format_seeds(seeds: &[u64]) -> String {
    let mut parts = Vec::new();
    let mut i = 0;
    while i < seeds.len() {
        let mut j = i;
        while j + 1 < seeds.len() && seeds[j + 1] == seeds[j] + 1 {
            j += 1;
        }
        parts.push(if j > i {
            format!("{}-{}", seeds[i], seeds[j])
        } else {
            seeds[i].to_string()
        });
        i = j + 1;
    }
    parts.join(",")
}

/// Best-so-far log regret of one seed against completions and simulated time.
#[derive(Clone, Debug, PartialEq)]
pub struct SeedTrace {
    pub seed: u64,
    /// Entry `s` is the regret after `s` post-design completions.
    pub by_step: Vec<f64>,
    /// `(finish time, regret)` for every completion.
    pub by_time: Vec<(f64, f64)>,
}

impl SeedTrace {
    pub fn from_log(seed: u64, log: &EventLog, true_min: f64) -> Result<Self> {
        let start = log.initial_best().ok_or(Error::Empty("initial design"))?;
        let regret = |best: f64| crate::benchmarks::log_simple_regret(best, true_min);
        let mut by_step = vec![regret(start)];
        let mut by_time = Vec::new();
        for r in log.finishes() {
            by_step.push(regret(r.best_so_far));
            by_time.push((r.sim_time, regret(r.best_so_far)));
        }
        Ok(Self {
            seed,
            by_step,
            by_time,
        })
    }

    /// Regret carried forward from the last completion at or before `t`.
    pub fn at_time(&self, t: f64) -> f64 {
        self.by_time
            .iter()
            .take_while(|(time, _)| *time <= t)
            .last()
            .map_or(self.by_step[0], |&(_, v)| v)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct QuantilePoint {
    pub x: f64,
    pub lower: f64,
    pub median: f64,
    pub upper: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Checkpoint {
    pub step: usize,
    pub n_seeds: usize,
    pub mean: f64,
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct AggregateTrace {
    pub n_seeds: usize,
    /// One point per completion count, up to the shortest seed.
    pub by_step: Vec<QuantilePoint>,
    /// Uniform grid from zero to the earliest final completion time across seeds.
    pub by_time: Vec<QuantilePoint>,
    pub checkpoints: Vec<Checkpoint>,
}

/// Nearest-rank quantile: the `ceil(q * n)`-th smallest value.
pub fn nearest_rank(sorted: &[f64], q: f64) -> f64 {
    let n = sorted.len();
    let rank = ((q * n as f64).ceil() as usize).clamp(1, n);
    sorted[rank - 1]
}

fn quartiles(x: f64, mut values: Vec<f64>) -> QuantilePoint {
    values.sort_by(f64::total_cmp);
    QuantilePoint {
        x,
        lower: nearest_rank(&values, 0.25),
        median: nearest_rank(&values, 0.5),
        upper: nearest_rank(&values, 0.75),
    }
}

/// Median and quartiles across seeds on both axes, plus checkpoint means.
pub fn aggregate(traces: &[SeedTrace]) -> Result<AggregateTrace> {
    if traces.is_empty() {
        return Err(Error::Empty("seed traces"));
    }
    let steps = traces.iter().map(|t| t.by_step.len()).min().unwrap_or(0);
    let by_step = (0..steps)
        .map(|s| quartiles(s as f64, traces.iter().map(|t| t.by_step[s]).collect()))
        .collect();

    let horizon = traces
        .iter()
        .map(|t| t.by_time.last().map_or(0.0, |p| p.0))
        .fold(f64::INFINITY, f64::min);
    let by_time = (0..TIME_GRID_POINTS)
        .map(|i| {
            let t = horizon * i as f64 / (TIME_GRID_POINTS - 1) as f64;
            quartiles(t, traces.iter().map(|tr| tr.at_time(t)).collect())
        })
        .collect();

    let checkpoints = CHECKPOINT_STEPS
        .iter()
        .filter_map(|&step| {
            let vals: Vec<f64> = traces
                .iter()
                .filter_map(|t| t.by_step.get(step).copied())
                .collect();
            if vals.is_empty() {
                return None;
            }
            let n = vals.len() as f64;
            let mean = vals.iter().sum::<f64>() / n;
            let std = if vals.len() > 1 {
                (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            } else {
                0.0
            };
            Some(Checkpoint {
                step,
                n_seeds: vals.len(),
                mean,
                std,
            })
        })
        .collect();

    Ok(AggregateTrace {
        n_seeds: traces.len(),
        by_step,
        by_time,
        checkpoints,
    })
}

/// Writes one seed's log as CSV: design rows (`init`) followed by every finish.
pub fn write_seed_csv(path: &Path, seed: u64, log: &EventLog, problem: &Problem) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let d = problem.dim();
    let mut header: Vec<String> = ["seed", "event", "sim_time", "worker_id"]
        .map(String::from)
        .to_vec();
    header.extend((0..d).map(|i| format!("x_{i}")));
    header.extend(["y", "best_so_far", "log10_regret", "n_completed"].map(String::from));
    w.write_record(&header)?;

    let mut best = f64::INFINITY;
    for obs in &log.initial {
        best = best.min(obs.value);
        let mut row = vec![seed.to_string(), "init".into(), "0".into(), String::new()];
        row.extend(obs.location.iter().map(f64::to_string));
        row.extend([
            obs.value.to_string(),
            best.to_string(),
            problem.log_simple_regret(best).to_string(),
            "0".into(),
        ]);
        w.write_record(&row)?;
    }
    for r in log.finishes() {
        let mut row = vec![
            seed.to_string(),
            "finish".into(),
            r.sim_time.to_string(),
            r.worker_id.to_string(),
        ];
        row.extend(r.location.iter().map(f64::to_string));
        row.extend([
            r.observed_value.map_or(String::new(), |v| v.to_string()),
            r.best_so_far.to_string(),
            problem.log_simple_regret(r.best_so_far).to_string(),
            r.n_completed.to_string(),
        ]);
        w.write_record(&row)?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}

#[derive(Clone, Debug, Serialize)]
pub struct SeedFailure {
    pub seed: u64,
    pub completed: usize,
    pub error: String,
}

#[derive(Debug, Serialize)]
struct AggregateFile<'a> {
    config: &'a ExperimentConfig,
    true_min: f64,
    failures: &'a [SeedFailure],
    aggregate: &'a AggregateTrace,
}

#[derive(Clone, Debug)]
pub struct ExperimentOutput {
    pub csv_paths: Vec<PathBuf>,
    pub aggregate_path: PathBuf,
    pub aggregate: AggregateTrace,
    pub failures: Vec<SeedFailure>,
}

/// Runs one simulation for `seed` with the given problem.
pub fn run_seed(
    config: &ExperimentConfig,
    problem: &Problem,
    seed: u64,
) -> std::result::Result<EventLog, SimError> {
    let sim = config.sim_config();
    match config.mode {
        Mode::Async => run_async(problem, &sim, seed),
        Mode::Sync => run_sync(problem, &sim, seed),
    }
}

/// Runs every seed (in parallel), writes `seed_<n>.csv` files and `aggregate.json` under `config.out`.
///
/// A failed seed still gets a CSV of its partial log; it is left out of the
/// aggregate and listed under `failures`.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutput> {
    config.validate()?;
    let problem = make_benchmark(&config.problem, config.problem_seed)?;
    fs::create_dir_all(&config.out).map_err(|e| Error::io(&config.out, e))?;

    let results: Vec<(u64, PathBuf, std::result::Result<EventLog, SimError>)> = config
        .seeds
        .par_iter()
        .map(|&seed| {
            let path = config.out.join(format!("seed_{seed}.csv"));
            (seed, path, run_seed(config, &problem, seed))
        })
        .collect();

    let mut csv_paths = Vec::new();
    let mut traces = Vec::new();
    let mut failures = Vec::new();
    for (seed, path, result) in results {
        match result {
            Ok(log) => {
                write_seed_csv(&path, seed, &log, &problem)?;
                traces.push(SeedTrace::from_log(seed, &log, problem.true_min_value())?);
            }
            Err(err) => {
                log::warn!("seed {seed} failed: {err}");
                write_seed_csv(&path, seed, &err.log, &problem)?;
                failures.push(SeedFailure {
                    seed,
                    completed: err.log.n_completed(),
                    error: err.source.to_string(),
                });
            }
        }
        csv_paths.push(path);
    }
    if !failures.is_empty() {
        log::warn!(
            "{} of {} seeds failed and were left out of the aggregate",
            failures.len(),
            config.seeds.len()
        );
    }
    let aggregate = aggregate(&traces)?;
    let aggregate_path = config.out.join("aggregate.json");
    let file = AggregateFile {
        config,
        true_min: problem.true_min_value(),
        failures: &failures,
        aggregate: &aggregate,
    };
    let json = serde_json::to_string_pretty(&file)?;
    fs::write(&aggregate_path, json + "\n").map_err(|e| Error::io(&aggregate_path, e))?;
    Ok(ExperimentOutput {
        csv_paths,
        aggregate_path,
        aggregate,
        failures,
    })
}

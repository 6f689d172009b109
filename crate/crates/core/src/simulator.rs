//! Discrete-event simulation of `k` workers under synchronous or asynchronous scheduling.
//!
//! A run owns four independent rng streams derived from one seed: the initial
//! design, point selection, task runtimes and hyperparameter fitting. Task `j`
//! (counted in start order) always receives the `j`-th runtime draw, so a
//! synchronous and an asynchronous run with the same seed see identical
//! per-task runtimes.

use std::f64::consts::PI;
use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::gp::{fit_gp, GpModel, HyperOptConfig, KernelHyperparams};
use crate::strategies::{
    initial_design, select_async, select_batch_sync, BusySet, StrategyConfig, StrategyKind,
};

const STREAM_DESIGN: u64 = 0;
const STREAM_SELECTION: u64 = 1;
const STREAM_RUNTIME: u64 = 2;
const STREAM_HYPER: u64 = 3;

/// Something the workers can evaluate, defined on `[-1, 1]^d`.
pub trait Objective {
    fn dim(&self) -> usize;
    fn evaluate(&self, x: &[f64]) -> Result<f64>;
}

/// Wraps a closure as an [`Objective`].
pub struct FnObjective<F> {
    dim: usize,
    f: F,
}

impl<F: Fn(&[f64]) -> f64> FnObjective<F> {
    pub fn new(dim: usize, f: F) -> Self {
        Self { dim, f }
    }
}

impl<F: Fn(&[f64]) -> f64> Objective for FnObjective<F> {
    fn dim(&self) -> usize {
        self.dim
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Ok((self.f)(x))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum RuntimeDist {
    HalfNormal {
        scale: f64,
    },
    Constant(f64),
    /// Cycles through a fixed list of runtimes; used to rig schedules.
    Replay(Vec<f64>),
}

impl Default for RuntimeDist {
    /// Half-normal with unit mean.
    fn default() -> Self {
        RuntimeDist::HalfNormal {
            scale: (PI / 2.0).sqrt(),
        }
    }
}

impl RuntimeDist {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            RuntimeDist::HalfNormal { scale } => scale.is_finite() && *scale > 0.0,
            RuntimeDist::Constant(v) => v.is_finite() && *v > 0.0,
            RuntimeDist::Replay(vs) => {
                !vs.is_empty() && vs.iter().all(|v| v.is_finite() && *v > 0.0)
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!(
                "runtimes must be finite and positive: {self:?}"
            )))
        }
    }
}

impl fmt::Display for RuntimeDist {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RuntimeDist::HalfNormal { scale } => write!(f, "half-normal:{scale}"),
            RuntimeDist::Constant(v) => write!(f, "constant:{v}"),
            RuntimeDist::Replay(vs) => {
                let parts: Vec<String> = vs.iter().map(|v| v.to_string()).collect();
                write!(f, "replay:{}", parts.join("/"))
            }
        }
    }
}

impl std::str::FromStr for RuntimeDist {
    type Err = Error;

    /// Parses `half-normal`, `half-normal:<scale>`, `constant:<v>` or `replay:<v1>/<v2>/...`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        let (kind, arg) = match s.split_once(':') {
            Some((k, a)) => (k.trim(), Some(a.trim())),
            None => (s, None),
        };
        let num = |a: &str| {
            a.parse::<f64>()
                .map_err(|_| Error::invalid(format!("bad runtime value `{a}` in `{s}`")))
        };
        let dist = match (kind.to_ascii_lowercase().as_str(), arg) {
            ("half-normal" | "halfnormal", None) => RuntimeDist::default(),
            ("half-normal" | "halfnormal", Some(a)) => RuntimeDist::HalfNormal { scale: num(a)? },
            ("constant", Some(a)) => RuntimeDist::Constant(num(a)?),
            ("replay", Some(a)) => {
                RuntimeDist::Replay(a.split('/').map(num).collect::<Result<_>>()?)
            }
            _ => {
                return Err(Error::invalid(format!(
                    "unknown runtime distribution `{s}`"
                )))
            }
        };
        dist.validate()?;
        Ok(dist)
    }
}

/// Draws runtimes in task order.
#[derive(Clone, Debug)]
pub struct RuntimeSampler {
    dist: RuntimeDist,
    rng: ChaCha8Rng,
    drawn: usize,
}

impl RuntimeSampler {
    pub fn new(dist: RuntimeDist, rng: ChaCha8Rng) -> Result<Self> {
        dist.validate()?;
        Ok(Self {
            dist,
            rng,
            drawn: 0,
        })
    }

    pub fn next_runtime(&mut self) -> f64 {
        let v = match &self.dist {
            RuntimeDist::Replay(vs) => vs[self.drawn % vs.len()],
            d => sample_runtime(d, &mut self.rng),
        };
        self.drawn += 1;
        v
    }
}

/// One runtime draw. Half-normal draws are `|z| * scale`, resampled on an exact zero.
pub fn sample_runtime<R: Rng + ?Sized>(dist: &RuntimeDist, rng: &mut R) -> f64 {
    match dist {
        RuntimeDist::HalfNormal { scale } => loop {
            let z: f64 = StandardNormal.sample(rng);
            let v = z.abs() * scale;
            if v > 0.0 {
                break v;
            }
        },
        RuntimeDist::Constant(v) => *v,
        RuntimeDist::Replay(vs) => vs[rng.random_range(0..vs.len())],
    }
}

/// How the surrogate is rebuilt between selections.
#[derive(Clone, Debug, PartialEq)]
pub struct SurrogateConfig {
    pub noise_variance: f64,
    pub hyperopt: HyperOptConfig,
    /// Hyperparameters are re-optimised once this many new observations have
    /// arrived; in between, the previous hyperparameters are reused.
    pub refit_every: usize,
    /// Fit on standardised targets.
    pub standardise: bool,
    pub initial_lengthscale: f64,
}

impl Default for SurrogateConfig {
    fn default() -> Self {
        Self {
            noise_variance: 1e-6,
            hyperopt: HyperOptConfig::default(),
            refit_every: 1,
            standardise: true,
            initial_lengthscale: 0.5,
        }
    }
}

impl SurrogateConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_variance.is_finite() && self.noise_variance > 0.0) {
            return Err(Error::invalid("noise_variance must be positive"));
        }
        if self.refit_every == 0 {
            return Err(Error::invalid("refit_every must be at least 1"));
        }
        if !(self.initial_lengthscale.is_finite() && self.initial_lengthscale > 0.0) {
            return Err(Error::invalid("initial_lengthscale must be positive"));
        }
        self.hyperopt.validate()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Budget {
    /// Post-design completions; the initial design is not counted.
    pub max_evaluations: usize,
    pub max_sim_time: Option<f64>,
}

impl Budget {
    pub fn evaluations(n: usize) -> Self {
        Self {
            max_evaluations: n,
            max_sim_time: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.max_evaluations == 0 {
            return Err(Error::invalid("max_evaluations must be at least 1"));
        }
        if let Some(t) = self.max_sim_time {
            if !(t.is_finite() && t > 0.0) {
                return Err(Error::invalid("max_sim_time must be positive"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SimConfig {
    pub strategy: StrategyKind,
    pub k: usize,
    /// Asynchronous mode waits for this many idle workers before selecting.
    pub c: usize,
    pub budget: Budget,
    pub runtime: RuntimeDist,
    pub strategy_config: StrategyConfig,
    pub surrogate: SurrogateConfig,
}

impl SimConfig {
    pub fn new(strategy: StrategyKind, k: usize, budget: Budget) -> Self {
        Self {
            strategy,
            k,
            c: 1,
            budget,
            runtime: RuntimeDist::default(),
            strategy_config: StrategyConfig::default(),
            surrogate: SurrogateConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::invalid("k must be at least 1"));
        }
        if self.c == 0 || self.c > self.k {
            return Err(Error::invalid(format!(
                "c must lie in 1..={}, got {}",
                self.k, self.c
            )));
        }
        self.budget.validate()?;
        self.runtime.validate()?;
        self.strategy_config.validate()?;
        self.surrogate.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    Start,
    Finish,
}

impl EventKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Start => "start",
            EventKind::Finish => "finish",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EventRecord {
    pub event: EventKind,
    pub sim_time: f64,
    pub worker_id: usize,
    pub location: Vec<f64>,
    /// Present on finish events only.
    pub observed_value: Option<f64>,
    /// Best value over the design and all completions so far.
    pub best_so_far: f64,
    /// Post-design completions so far.
    pub n_completed: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Observation {
    pub location: Vec<f64>,
    pub value: f64,
}

/// A point at which the strategy was asked for new locations.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionRecord {
    pub sim_time: f64,
    pub n_busy: usize,
    pub n_selected: usize,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct EventLog {
    /// Initial design, evaluated at time zero.
    pub initial: Vec<Observation>,
    pub records: Vec<EventRecord>,
    pub selections: Vec<SelectionRecord>,
}

impl EventLog {
    pub fn finishes(&self) -> impl Iterator<Item = &EventRecord> {
        self.records.iter().filter(|r| r.event == EventKind::Finish)
    }

    pub fn n_completed(&self) -> usize {
        self.finishes().count()
    }

    /// Completions with `sim_time <= t`.
    pub fn n_completed_at(&self, t: f64) -> usize {
        self.finishes().filter(|r| r.sim_time <= t).count()
    }

    pub fn initial_best(&self) -> Option<f64> {
        self.initial.iter().map(|o| o.value).reduce(f64::min)
    }

    /// Best-so-far after each completion, starting with the design's best.
    pub fn best_trace(&self) -> Vec<f64> {
        self.initial_best()
            .into_iter()
            .chain(self.finishes().map(|r| r.best_so_far))
            .collect()
    }

    /// Checks time ordering, start/finish matching, completion counts and best-so-far.
    pub fn check_invariants(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::invalid(format!("event log: {msg}")));
        let mut open: std::collections::HashMap<usize, (f64, &[f64])> = Default::default();
        let mut last_time = 0.0;
        let mut completed = 0;
        let mut best = self.initial_best().unwrap_or(f64::INFINITY);
        for (i, r) in self.records.iter().enumerate() {
            if !(r.sim_time >= last_time) {
                return bad(format!("time decreases at record {i}"));
            }
            last_time = r.sim_time;
            match r.event {
                EventKind::Start => {
                    if open
                        .insert(r.worker_id, (r.sim_time, &r.location))
                        .is_some()
                    {
                        return bad(format!(
                            "worker {} started twice at record {i}",
                            r.worker_id
                        ));
                    }
                }
                EventKind::Finish => {
                    let Some((start, loc)) = open.remove(&r.worker_id) else {
                        return bad(format!("finish without start at record {i}"));
                    };
                    if start > r.sim_time || loc != r.location.as_slice() {
                        return bad(format!("finish does not match its start at record {i}"));
                    }
                    completed += 1;
                    match r.observed_value {
                        Some(y) => best = best.min(y),
                        None => return bad(format!("finish without a value at record {i}")),
                    }
                }
            }
            if r.n_completed != completed {
                return bad(format!(
                    "n_completed is {} at record {i}, expected {completed}",
                    r.n_completed
                ));
            }
            if r.best_so_far != best {
                return bad(format!("best_so_far mismatch at record {i}"));
            }
        }
        Ok(())
    }
}

/// A failed run, with everything logged before the failure.
#[derive(Debug)]
pub struct SimError {
    pub log: Box<EventLog>,
    pub source: Error,
}

impl fmt::Display for SimError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "simulation failed after {} completions: {}",
            self.log.n_completed(),
            self.source
        )
    }
}

impl std::error::Error for SimError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.source)
    }
}

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Observations plus the surrogate rebuilt from them.
struct SurrogateState<'a> {
    config: &'a SurrogateConfig,
    inputs: Vec<Vec<f64>>,
    values: Vec<f64>,
    hyperparams: KernelHyperparams,
    fitted_at: Option<usize>,
    rng: ChaCha8Rng,
}

impl<'a> SurrogateState<'a> {
    fn new(config: &'a SurrogateConfig, dim: usize, rng: ChaCha8Rng) -> Result<Self> {
        Ok(Self {
            config,
            inputs: Vec::new(),
            values: Vec::new(),
            hyperparams: KernelHyperparams::isotropic(1.0, config.initial_lengthscale, dim)?,
            fitted_at: None,
            rng,
        })
    }

    fn push(&mut self, x: Vec<f64>, y: f64) {
        self.inputs.push(x);
        self.values.push(y);
    }

    fn targets(&self) -> Vec<f64> {
        if !self.config.standardise || self.values.len() < 2 {
            return self.values.clone();
        }
        let n = self.values.len() as f64;
        let mean = self.values.iter().sum::<f64>() / n;
        let var = self.values.iter().map(|y| (y - mean).powi(2)).sum::<f64>() / n;
        let sd = if var.sqrt() > 1e-12 { var.sqrt() } else { 1.0 };
        self.values.iter().map(|y| (y - mean) / sd).collect()
    }

    fn model(&mut self) -> Result<GpModel> {
        let targets = self.targets();
        let n = self.values.len();
        let stale = self
            .fitted_at
            .is_none_or(|m| n >= m + self.config.refit_every);
        if stale && n > 0 {
            let model = fit_gp(
                &self.inputs,
                &targets,
                self.config.noise_variance,
                &self.hyperparams,
                &self.config.hyperopt,
                &mut self.rng,
            )?;
            self.hyperparams = model.hyperparams().clone();
            self.fitted_at = Some(n);
            return Ok(model);
        }
        GpModel::new(
            self.inputs.clone(),
            targets,
            self.hyperparams.clone(),
            self.config.noise_variance,
        )
    }
}

struct Task {
    location: Vec<f64>,
    finish: f64,
}

/// Shared bookkeeping for both schedulers.
struct Run<'a, O: Objective + ?Sized> {
    objective: &'a O,
    config: &'a SimConfig,
    log: EventLog,
    surrogate: SurrogateState<'a>,
    selection_rng: ChaCha8Rng,
    runtimes: RuntimeSampler,
    best: f64,
    started: usize,
}

impl<'a, O: Objective + ?Sized> Run<'a, O> {
    fn new(objective: &'a O, config: &'a SimConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            objective,
            config,
            log: EventLog::default(),
            surrogate: SurrogateState::new(
                &config.surrogate,
                objective.dim(),
                stream(seed, STREAM_HYPER),
            )?,
            selection_rng: stream(seed, STREAM_SELECTION),
            runtimes: RuntimeSampler::new(config.runtime.clone(), stream(seed, STREAM_RUNTIME))?,
            best: f64::INFINITY,
            started: 0,
        })
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        let y = self.objective.evaluate(x)?;
        if y.is_finite() {
            Ok(y)
        } else {
            Err(Error::NonFinite("objective value"))
        }
    }

    fn run_design(&mut self, seed: u64) -> Result<()> {
        let design = initial_design(self.objective.dim(), &mut stream(seed, STREAM_DESIGN))?;
        for x in design {
            let y = self.evaluate(&x)?;
            self.best = self.best.min(y);
            self.surrogate.push(x.clone(), y);
            self.log.initial.push(Observation {
                location: x,
                value: y,
            });
        }
        Ok(())
    }

    fn remaining(&self) -> usize {
        self.config.budget.max_evaluations - self.started
    }

    fn past_deadline(&self, t: f64) -> bool {
        self.config
            .budget
            .max_sim_time
            .is_some_and(|limit| t > limit)
    }

    fn start(&mut self, worker_id: usize, location: Vec<f64>, now: f64) -> Task {
        let finish = now + self.runtimes.next_runtime();
        self.started += 1;
        self.log.records.push(EventRecord {
            event: EventKind::Start,
            sim_time: now,
            worker_id,
            location: location.clone(),
            observed_value: None,
            best_so_far: self.best,
            n_completed: self.surrogate.values.len() - self.log.initial.len(),
        });
        Task { location, finish }
    }

    fn finish(&mut self, worker_id: usize, task: Task) -> Result<()> {
        let y = self.evaluate(&task.location)?;
        self.best = self.best.min(y);
        self.surrogate.push(task.location.clone(), y);
        self.log.records.push(EventRecord {
            event: EventKind::Finish,
            sim_time: task.finish,
            worker_id,
            location: task.location,
            observed_value: Some(y),
            best_so_far: self.best,
            n_completed: self.surrogate.values.len() - self.log.initial.len(),
        });
        Ok(())
    }

    fn select_batch(&mut self, n: usize, now: f64) -> Result<Vec<Vec<f64>>> {
        let model = self.surrogate.model()?;
        self.log.selections.push(SelectionRecord {
            sim_time: now,
            n_busy: 0,
            n_selected: n,
        });
        select_batch_sync(
            self.config.strategy,
            &model,
            n,
            &self.config.strategy_config,
            &mut self.selection_rng,
        )
    }

    fn select_for_idle(&mut self, busy: BusySet, n: usize, now: f64) -> Result<Vec<Vec<f64>>> {
        let model = self.surrogate.model()?;
        self.log.selections.push(SelectionRecord {
            sim_time: now,
            n_busy: busy.len(),
            n_selected: n,
        });
        select_async(
            self.config.strategy,
            &model,
            &busy,
            n,
            &self.config.strategy_config,
            &mut self.selection_rng,
        )
    }

    fn run_async(&mut self, seed: u64) -> Result<()> {
        self.run_design(seed)?;
        let k = self.config.k;
        let mut workers: Vec<Option<Task>> = (0..k).map(|_| None).collect();
        let first = self.select_batch(k.min(self.remaining()), 0.0)?;
        for (w, x) in first.into_iter().enumerate() {
            workers[w] = Some(self.start(w, x, 0.0));
        }
        loop {
            // Earliest finish; ties go to the lowest worker id.
            let next = workers
                .iter()
                .enumerate()
                .filter_map(|(w, t)| t.as_ref().map(|t| (w, t.finish)))
                .min_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
            let Some((w, now)) = next else { break };
            if self.past_deadline(now) {
                break;
            }
            let task = workers[w].take().expect("worker is busy");
            self.finish(w, task)?;

            let remaining = self.remaining();
            if remaining == 0 {
                continue;
            }
            let idle: Vec<usize> = (0..k).filter(|&i| workers[i].is_none()).collect();
            let in_flight = k - idle.len();
            if idle.len() < self.config.c.min(remaining) && in_flight > 0 {
                continue;
            }
            let busy = BusySet::new(
                workers
                    .iter()
                    .flatten()
                    .map(|t| t.location.clone())
                    .collect(),
            );
            let picks = self.select_for_idle(busy, idle.len().min(remaining), now)?;
            for (w, x) in idle.into_iter().zip(picks) {
                workers[w] = Some(self.start(w, x, now));
            }
        }
        Ok(())
    }

    fn run_sync(&mut self, seed: u64) -> Result<()> {
        self.run_design(seed)?;
        let mut round_start = 0.0;
        while self.remaining() > 0 {
            let batch = self.select_batch(self.config.k.min(self.remaining()), round_start)?;
            let mut tasks: Vec<(usize, Task)> = batch
                .into_iter()
                .enumerate()
                .map(|(w, x)| (w, self.start(w, x, round_start)))
                .collect();
            tasks.sort_by(|a, b| a.1.finish.total_cmp(&b.1.finish).then(a.0.cmp(&b.0)));
            for (w, task) in tasks {
                if self.past_deadline(task.finish) {
                    return Ok(());
                }
                round_start = task.finish;
                self.finish(w, task)?;
            }
        }
        Ok(())
    }
}

fn finish_run<O: Objective + ?Sized>(
    run: Run<'_, O>,
    outcome: Result<()>,
) -> std::result::Result<EventLog, SimError> {
    match outcome {
        Ok(()) => Ok(run.log),
        Err(source) => Err(SimError {
            log: Box::new(run.log),
            source,
        }),
    }
}

/// Asynchronous scheduling: each freed worker gets a new task immediately.
///
/// The first `k` tasks are chosen as one synchronous batch from the initial
/// design. Afterwards, whenever `config.c` workers are idle the surrogate is
/// rebuilt on all completed data and the strategy fills them, with the
/// in-flight locations as the busy set.
pub fn run_async<O: Objective + ?Sized>(
    objective: &O,
    config: &SimConfig,
    seed: u64,
) -> std::result::Result<EventLog, SimError> {
    let mut run = match Run::new(objective, config, seed) {
        Ok(r) => r,
        Err(source) => {
            return Err(SimError {
                log: Box::default(),
                source,
            })
        }
    };
    let outcome = run.run_async(seed);
    finish_run(run, outcome)
}

/// Synchronous scheduling: whole batches of `k`, each round waiting for its slowest task.
pub fn run_sync<O: Objective + ?Sized>(
    objective: &O,
    config: &SimConfig,
    seed: u64,
) -> std::result::Result<EventLog, SimError> {
    let mut run = match Run::new(objective, config, seed) {
        Ok(r) => r,
        Err(source) => {
            return Err(SimError {
                log: Box::default(),
                source,
            })
        }
    };
    let outcome = run.run_sync(seed);
    finish_run(run, outcome)
}

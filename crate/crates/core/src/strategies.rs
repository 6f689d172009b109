//! Point-selection policies for synchronous and asynchronous batches.
//!
//! Every policy takes a surrogate fitted on completed observations only and
//! returns points in `[-1, 1]^d`. Randomness comes from the caller's rng, so a
//! fixed seed reproduces a selection exactly.

use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::acquisition::{
    self, estimate_global_lipschitz, estimate_local_lipschitz, estimate_min, minimising_ucb,
    minimising_ucb_batch, penalise, uniform_points, AcqMaxBudget, CandidateContext, PenaliserKind,
    PenaliserParams,
};
use crate::error::{Error, Result};
use crate::gp::{GpModel, SamplerConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum StrategyKind {
    /// Soft penaliser, global Lipschitz estimate.
    PlaybookL,
    /// Soft penaliser, per-location Lipschitz estimates.
    PlaybookLL,
    /// Hard penaliser, global Lipschitz estimate.
    PlaybookH,
    /// Hard penaliser, per-location Lipschitz estimates.
    PlaybookHL,
    KrigingBeliever,
    ThompsonSampling,
    /// Plain UCB that ignores busy locations.
    Sequential,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 7] = [
        StrategyKind::PlaybookL,
        StrategyKind::PlaybookLL,
        StrategyKind::PlaybookH,
        StrategyKind::PlaybookHL,
        StrategyKind::KrigingBeliever,
        StrategyKind::ThompsonSampling,
        StrategyKind::Sequential,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::PlaybookL => "playbook-l",
            StrategyKind::PlaybookLL => "playbook-ll",
            StrategyKind::PlaybookH => "playbook-h",
            StrategyKind::PlaybookHL => "playbook-hl",
            StrategyKind::KrigingBeliever => "kb",
            StrategyKind::ThompsonSampling => "ts",
            StrategyKind::Sequential => "sequential",
        }
    }

    /// Penaliser used by the penalisation variants, `None` otherwise.
    pub fn penaliser(self) -> Option<PenaliserKind> {
        match self {
            StrategyKind::PlaybookL | StrategyKind::PlaybookLL => Some(PenaliserKind::Soft),
            StrategyKind::PlaybookH | StrategyKind::PlaybookHL => Some(PenaliserKind::Hard),
            _ => None,
        }
    }

    pub fn uses_local_lipschitz(self) -> bool {
        matches!(self, StrategyKind::PlaybookLL | StrategyKind::PlaybookHL)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase().replace('_', "-");
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == lower)
            .ok_or_else(|| {
                let names: Vec<_> = StrategyKind::ALL.iter().map(|k| k.name()).collect();
                Error::Config(format!(
                    "unknown strategy `{s}`; expected one of {}",
                    names.join(", ")
                ))
            })
    }
}

/// Tunables shared by all selection policies.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyConfig {
    pub kappa: f64,
    pub gamma: f64,
    pub p: f64,
    pub acq_budget: AcqMaxBudget,
    /// Lipschitz search points per input dimension.
    pub lipschitz_samples_per_dim: usize,
    /// Candidate pool size for Thompson sampling.
    pub ts_samples: usize,
    pub sampler: SamplerConfig,
}

impl Default for StrategyConfig {
    fn default() -> Self {
        Self {
            kappa: 2.0,
            gamma: 1.0,
            p: -5.0,
            acq_budget: AcqMaxBudget::default(),
            lipschitz_samples_per_dim: 1000,
            ts_samples: 10_000,
            sampler: SamplerConfig::default(),
        }
    }
}

impl StrategyConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa.is_finite() && self.kappa >= 0.0) {
            return Err(Error::Config(format!(
                "kappa must be non-negative, got {}",
                self.kappa
            )));
        }
        if !(self.gamma.is_finite() && self.gamma > 0.0) {
            return Err(Error::Config(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.p.is_finite() && self.p < 0.0) {
            return Err(Error::Config(format!("p must be negative, got {}", self.p)));
        }
        if self.ts_samples == 0 || self.lipschitz_samples_per_dim == 0 {
            return Err(Error::Config("sample counts must be positive".into()));
        }
        self.acq_budget.validate()
    }
}

/// Locations currently under evaluation.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BusySet {
    locations: Vec<Vec<f64>>,
}

impl BusySet {
    pub fn new(locations: Vec<Vec<f64>>) -> Self {
        Self { locations }
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn locations(&self) -> &[Vec<f64>] {
        &self.locations
    }

    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn push(&mut self, x: Vec<f64>) {
        self.locations.push(x);
    }
}

/// `3 * d` points drawn uniformly from `[-1, 1]^d`.
pub fn initial_design<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> Result<Vec<Vec<f64>>> {
    if dim == 0 {
        return Err(Error::invalid("dimension must be at least 1"));
    }
    Ok(uniform_points(dim, 3 * dim, rng))
}

/// Penaliser parameters for every busy location.
///
/// The minimum estimate comes from the model's observations; the Lipschitz
/// constant is either one global estimate or one local estimate per location,
/// depending on `kind`. No randomness is consumed when `busy` is empty.
pub fn playbook_penalisers<R: Rng + ?Sized>(
    model: &GpModel,
    busy: &BusySet,
    kind: StrategyKind,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<PenaliserParams>> {
    if busy.is_empty() {
        return Ok(Vec::new());
    }
    let min_estimate = estimate_min(model.targets())?;
    let n_grid = config.lipschitz_samples_per_dim * model.dim();
    let global = if kind.uses_local_lipschitz() {
        None
    } else {
        Some(estimate_global_lipschitz(model, n_grid, rng))
    };
    busy.locations()
        .iter()
        .map(|loc| {
            let lipschitz = match global {
                Some(l) => l,
                None => estimate_local_lipschitz(
                    model,
                    loc,
                    model.hyperparams().lengthscales(),
                    n_grid,
                    rng,
                )?,
            };
            let (mean, var) = model.posterior(loc)?;
            PenaliserParams::new(
                loc.clone(),
                mean,
                var.sqrt(),
                lipschitz,
                min_estimate,
                config.gamma,
                config.p,
            )
        })
        .collect()
}

/// Maximises the shifted, penalised acquisition over a fresh candidate pool.
fn select_penalised<R: Rng + ?Sized>(
    model: &GpModel,
    penalisers: &[PenaliserParams],
    kind: PenaliserKind,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    config.acq_budget.validate()?;
    let pool = uniform_points(model.dim(), config.acq_budget.n_random, rng);
    let base = minimising_ucb_batch(model, &pool, config.kappa)?;
    let ctx = CandidateContext::from_pool_values(&base)?;
    let values: Vec<f64> = pool
        .iter()
        .zip(&base)
        .map(|(x, b)| penalise(*b, x, penalisers, kind, ctx))
        .collect();
    let utility = |x: &[f64]| {
        let b = minimising_ucb(model, x, config.kappa).unwrap_or(f64::NEG_INFINITY);
        penalise(b, x, penalisers, kind, ctx)
    };
    Ok(acquisition::refine_pool(utility, &pool, &values, &config.acq_budget).0)
}

/// Plain sequential UCB selection.
pub fn select_next_ucb<R: Rng + ?Sized>(
    model: &GpModel,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    select_penalised(model, &[], PenaliserKind::Hard, config, rng)
}

/// Maximises the acquisition multiplied by one penaliser per busy location.
pub fn select_next_playbook<R: Rng + ?Sized>(
    model: &GpModel,
    busy: &BusySet,
    kind: StrategyKind,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    let penaliser = kind
        .penaliser()
        .ok_or_else(|| Error::invalid(format!("{kind} is not a penalisation strategy")))?;
    let penalisers = playbook_penalisers(model, busy, kind, config, rng)?;
    select_penalised(model, &penalisers, penaliser, config, rng)
}

/// Greedy synchronous batch: each point is penalised by the ones already chosen.
pub fn select_batch_sync_playbook<R: Rng + ?Sized>(
    model: &GpModel,
    k: usize,
    kind: StrategyKind,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut chosen = BusySet::empty();
    for _ in 0..k {
        let x = select_next_playbook(model, &chosen, kind, config, rng)?;
        chosen.push(x);
    }
    Ok(chosen.locations)
}

/// Kriging Believer: hallucinate the posterior mean at each busy location, then plain UCB.
pub fn select_next_kb<R: Rng + ?Sized>(
    model: &GpModel,
    busy: &BusySet,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if busy.is_empty() {
        return select_next_ucb(model, config, rng);
    }
    let (means, _) = model.posterior_batch(busy.locations())?;
    let believed = model.condition_on_hallucinated(busy.locations(), &means)?;
    select_next_ucb(&believed, config, rng)
}

/// Thompson sampling: minimiser of one joint posterior draw over a fresh uniform pool.
pub fn select_next_ts<R: Rng + ?Sized>(
    model: &GpModel,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if config.ts_samples == 0 {
        return Err(Error::invalid("ts_samples must be positive"));
    }
    let mut pool = uniform_points(model.dim(), config.ts_samples, rng);
    let draw = model.sample_posterior(&pool, &config.sampler, rng)?;
    let best = draw
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .expect("pool is non-empty");
    Ok(pool.swap_remove(best))
}

/// Selects one point for a free worker while `busy` is being evaluated.
pub fn select_next<R: Rng + ?Sized>(
    kind: StrategyKind,
    model: &GpModel,
    busy: &BusySet,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<f64>> {
    match kind {
        StrategyKind::PlaybookL
        | StrategyKind::PlaybookLL
        | StrategyKind::PlaybookH
        | StrategyKind::PlaybookHL => select_next_playbook(model, busy, kind, config, rng),
        StrategyKind::KrigingBeliever => select_next_kb(model, busy, config, rng),
        StrategyKind::ThompsonSampling => select_next_ts(model, config, rng),
        StrategyKind::Sequential => select_next_ucb(model, config, rng),
    }
}

/// Selects `c` points for free workers, treating earlier picks as busy for later ones.
pub fn select_async<R: Rng + ?Sized>(
    kind: StrategyKind,
    model: &GpModel,
    busy: &BusySet,
    c: usize,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    let mut pending = busy.clone();
    let mut picks = Vec::with_capacity(c);
    for _ in 0..c {
        let x = select_next(kind, model, &pending, config, rng)?;
        pending.push(x.clone());
        picks.push(x);
    }
    Ok(picks)
}

/// Selects a full synchronous batch of `k` points from one surrogate.
///
/// Penalisation variants penalise earlier picks, KB hallucinates them, TS
/// takes `k` independent draws, and sequential UCB ignores them.
pub fn select_batch_sync<R: Rng + ?Sized>(
    kind: StrategyKind,
    model: &GpModel,
    k: usize,
    config: &StrategyConfig,
    rng: &mut R,
) -> Result<Vec<Vec<f64>>> {
    match kind {
        StrategyKind::PlaybookL
        | StrategyKind::PlaybookLL
        | StrategyKind::PlaybookH
        | StrategyKind::PlaybookHL => select_batch_sync_playbook(model, k, kind, config, rng),
        StrategyKind::KrigingBeliever => {
            let mut current = model.clone();
            let mut batch = Vec::with_capacity(k);
            for _ in 0..k {
                let x = select_next_ucb(&current, config, rng)?;
                let (mean, _) = current.posterior(&x)?;
                current = current.condition_on_hallucinated(std::slice::from_ref(&x), &[mean])?;
                batch.push(x);
            }
            Ok(batch)
        }
        StrategyKind::ThompsonSampling => {
            (0..k).map(|_| select_next_ts(model, config, rng)).collect()
        }
        StrategyKind::Sequential => (0..k)
            .map(|_| select_next_ucb(model, config, rng))
            .collect(),
    }
}

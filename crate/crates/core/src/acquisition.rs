//! UCB acquisition, local penalisers and Lipschitz estimation.
//!
//! The objective is minimised. UCB is `mu + kappa * sigma`; the acquisition
//! that gets maximised is the UCB of the *negated* surrogate,
//! `-mu + kappa * sigma` (see [`minimising_ucb`]). That is the only place the
//! sign flips. Penalisers multiply a shifted, non-negative copy of it.

use rand::Rng;

use crate::error::{Error, Result};
use crate::gp::GpModel;

/// Lower bound on every Lipschitz estimate.
pub const LIPSCHITZ_FLOOR: f64 = 1e-6;
/// Lower bound on the posterior standard deviation at a busy location.
pub const SIGMA_FLOOR: f64 = 1e-9;
/// Distances at or below this count as "at the busy point" for the hard penaliser.
pub const ZERO_DISTANCE: f64 = 1e-12;

pub fn ucb_from_moments(mean: f64, std: f64, kappa: f64) -> f64 {
    mean + kappa * std
}

/// `mu(x) + kappa * sigma(x)` on the surrogate as fitted.
pub fn ucb(model: &GpModel, x: &[f64], kappa: f64) -> Result<f64> {
    let (mean, var) = model.posterior(x)?;
    Ok(ucb_from_moments(mean, var.sqrt(), kappa))
}

/// UCB of the negated surrogate, `-mu(x) + kappa * sigma(x)`.
///
/// Maximising this is equivalent to minimising the lower confidence bound of
/// the objective.
pub fn minimising_ucb(model: &GpModel, x: &[f64], kappa: f64) -> Result<f64> {
    let (mean, var) = model.posterior(x)?;
    Ok(ucb_from_moments(-mean, var.sqrt(), kappa))
}

pub(crate) fn minimising_ucb_batch(
    model: &GpModel,
    points: &[Vec<f64>],
    kappa: f64,
) -> Result<Vec<f64>> {
    let (means, vars) = model.posterior_batch(points)?;
    Ok(means
        .iter()
        .zip(&vars)
        .map(|(m, v)| ucb_from_moments(-m, v.sqrt(), kappa))
        .collect())
}

/// Subtracts the minimum so the smallest entry becomes exactly zero.
pub fn nonneg_shift(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::Empty("acquisition values"));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("acquisition values"));
    }
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    Ok(values.iter().map(|v| v - min).collect())
}

/// Best observed value, used as the estimate of the global minimum.
pub fn estimate_min(observations: &[f64]) -> Result<f64> {
    if observations.is_empty() {
        return Err(Error::Empty("observations"));
    }
    Ok(observations.iter().copied().fold(f64::INFINITY, f64::min))
}

/// Largest posterior-mean gradient norm over `points`, floored at [`LIPSCHITZ_FLOOR`].
pub fn max_gradient_norm<'a>(
    model: &GpModel,
    points: impl IntoIterator<Item = &'a Vec<f64>>,
) -> f64 {
    points
        .into_iter()
        .map(|p| {
            model
                .mean_gradient(p)
                .iter()
                .map(|g| g * g)
                .sum::<f64>()
                .sqrt()
        })
        .fold(LIPSCHITZ_FLOOR, f64::max)
}

/// `max ||grad mu||` over `n_grid` uniform points in `[-1, 1]^d` plus the training inputs.
pub fn estimate_global_lipschitz<R: Rng + ?Sized>(
    model: &GpModel,
    n_grid: usize,
    rng: &mut R,
) -> f64 {
    let grid = uniform_points(model.dim(), n_grid, rng);
    max_gradient_norm(model, grid.iter().chain(model.inputs()))
}

/// Lipschitz estimate in the box of side `lengthscales` centred on `center`, clipped to `[-1, 1]^d`.
pub fn estimate_local_lipschitz<R: Rng + ?Sized>(
    model: &GpModel,
    center: &[f64],
    lengthscales: &[f64],
    n_grid: usize,
    rng: &mut R,
) -> Result<f64> {
    if center.len() != model.dim() || lengthscales.len() != model.dim() {
        return Err(Error::DimensionMismatch {
            expected: model.dim(),
            found: if center.len() != model.dim() {
                center.len()
            } else {
                lengthscales.len()
            },
        });
    }
    let bounds: Vec<(f64, f64)> = center
        .iter()
        .zip(lengthscales)
        .map(|(c, l)| ((c - 0.5 * l).max(-1.0), (c + 0.5 * l).min(1.0)))
        .collect();
    let grid: Vec<Vec<f64>> = (0..n_grid)
        .map(|_| {
            bounds
                .iter()
                .map(|&(lo, hi)| sample_interval(lo, hi, rng))
                .collect()
        })
        .collect();
    Ok(max_gradient_norm(model, &grid))
}

fn sample_interval<R: Rng + ?Sized>(lo: f64, hi: f64, rng: &mut R) -> f64 {
    if hi > lo {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// `n` points drawn uniformly from `[-1, 1]^dim`.
pub fn uniform_points<R: Rng + ?Sized>(dim: usize, n: usize, rng: &mut R) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..dim).map(|_| rng.random_range(-1.0..=1.0)).collect())
        .collect()
}

/// Penaliser shape parameters for one busy location.
#[derive(Clone, Debug, PartialEq)]
pub struct PenaliserParams {
    center: Vec<f64>,
    mean: f64,
    std: f64,
    lipschitz: f64,
    min_estimate: f64,
    gamma: f64,
    p: f64,
    radius_denominator: f64,
}

impl PenaliserParams {
    /// `std` is floored at [`SIGMA_FLOOR`]. The radius denominator is
    /// `|mean - min_estimate| / L + gamma * std / L`.
    pub fn new(
        center: Vec<f64>,
        mean: f64,
        std: f64,
        lipschitz: f64,
        min_estimate: f64,
        gamma: f64,
        p: f64,
    ) -> Result<Self> {
        if !(mean.is_finite() && min_estimate.is_finite() && std.is_finite() && std >= 0.0) {
            return Err(Error::NonFinite("penaliser moments"));
        }
        if !(lipschitz.is_finite() && lipschitz > 0.0) {
            return Err(Error::invalid(format!(
                "Lipschitz constant must be positive, got {lipschitz}"
            )));
        }
        if !(gamma.is_finite() && gamma > 0.0) {
            return Err(Error::invalid(format!(
                "gamma must be positive, got {gamma}"
            )));
        }
        if !(p.is_finite() && p < 0.0) {
            return Err(Error::invalid(format!("p must be negative, got {p}")));
        }
        let std = std.max(SIGMA_FLOOR);
        let radius_denominator = (mean - min_estimate).abs() / lipschitz + gamma * std / lipschitz;
        Ok(Self {
            center,
            mean,
            std,
            lipschitz,
            min_estimate,
            gamma,
            p,
            radius_denominator,
        })
    }

    pub fn center(&self) -> &[f64] {
        &self.center
    }

    pub fn mean(&self) -> f64 {
        self.mean
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn lipschitz(&self) -> f64 {
        self.lipschitz
    }

    pub fn min_estimate(&self) -> f64 {
        self.min_estimate
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn p(&self) -> f64 {
        self.p
    }

    /// Expected exclusion radius `|mu_j - M| / L`.
    pub fn expected_radius(&self) -> f64 {
        (self.mean - self.min_estimate).abs() / self.lipschitz
    }

    pub fn radius_denominator(&self) -> f64 {
        self.radius_denominator
    }

    fn distance(&self, x: &[f64]) -> f64 {
        x.iter()
            .zip(&self.center)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt()
    }
}

/// Smoothed `min(||x - x_j|| / R, 1)`: `[(d / R)^p + 1]^(1/p)` with `p < 0`.
///
/// Zero at the busy point, increasing with distance, saturating towards 1.
pub fn hard_local_penaliser(x: &[f64], params: &PenaliserParams) -> f64 {
    let dist = params.distance(x);
    if dist <= ZERO_DISTANCE {
        return 0.0;
    }
    let ratio = dist / params.radius_denominator;
    // Inside the ball ratio^p overflows for large |p|; factor out ratio instead.
    if ratio < 1.0 {
        ratio * (ratio.powf(-params.p) + 1.0).powf(1.0 / params.p)
    } else {
        (ratio.powf(params.p) + 1.0).powf(1.0 / params.p)
    }
}

/// Gaussian-tail penaliser `0.5 erfc(-z)`, `z = (L ||x - x_j|| - mu_j + M) / (sqrt2 sigma_j)`.
pub fn soft_local_penaliser(x: &[f64], params: &PenaliserParams) -> f64 {
    let dist = params.distance(x);
    let z = (params.lipschitz * dist - params.mean + params.min_estimate)
        / (std::f64::consts::SQRT_2 * params.std);
    0.5 * libm::erfc(-z)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum PenaliserKind {
    Soft,
    Hard,
}

impl PenaliserKind {
    pub fn apply(self, x: &[f64], params: &PenaliserParams) -> f64 {
        match self {
            PenaliserKind::Soft => soft_local_penaliser(x, params),
            PenaliserKind::Hard => hard_local_penaliser(x, params),
        }
    }
}

/// Pool-level context for the penalised acquisition.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CandidateContext {
    /// Minimum of the base acquisition over the current candidate pool.
    pub shift: f64,
}

impl CandidateContext {
    pub fn from_pool_values(values: &[f64]) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("acquisition values"));
        }
        let shift = values.iter().copied().fold(f64::INFINITY, f64::min);
        if !shift.is_finite() {
            return Err(Error::Empty("candidate pool"));
        }
        Ok(Self { shift })
    }
}

/// Product of the per-busy-location penaliser values at `x`.
pub fn penalty(x: &[f64], penalisers: &[PenaliserParams], kind: PenaliserKind) -> f64 {
    penalisers.iter().map(|p| kind.apply(x, p)).product()
}

/// Shifted acquisition value times the penaliser product.
pub fn penalise(
    base_value: f64,
    x: &[f64],
    penalisers: &[PenaliserParams],
    kind: PenaliserKind,
    ctx: CandidateContext,
) -> f64 {
    (base_value - ctx.shift).max(0.0) * penalty(x, penalisers, kind)
}

/// `max(alpha(x) - shift, 0) * prod_j phi(x | x_j)` with `alpha` from [`minimising_ucb`].
pub fn penalised_acquisition(
    model: &GpModel,
    x: &[f64],
    penalisers: &[PenaliserParams],
    kappa: f64,
    kind: PenaliserKind,
    ctx: CandidateContext,
) -> Result<f64> {
    let base = minimising_ucb(model, x, kappa)?;
    Ok(penalise(base, x, penalisers, kind, ctx))
}

/// Random-search-plus-refinement budget for maximising an acquisition.
#[derive(Clone, Debug, PartialEq)]
pub struct AcqMaxBudget {
    pub n_random: usize,
    pub n_refine: usize,
    pub refine_steps: usize,
    pub refine_step_size: f64,
}

impl Default for AcqMaxBudget {
    fn default() -> Self {
        Self {
            n_random: 3000,
            n_refine: 5,
            refine_steps: 20,
            refine_step_size: 0.01,
        }
    }
}

impl AcqMaxBudget {
    pub fn validate(&self) -> Result<()> {
        if self.n_random == 0 || self.n_refine == 0 || self.refine_steps == 0 {
            return Err(Error::invalid("acquisition budget counts must be positive"));
        }
        if self.n_refine > self.n_random {
            return Err(Error::invalid(format!(
                "n_refine ({}) exceeds n_random ({})",
                self.n_refine, self.n_random
            )));
        }
        if !(self.refine_step_size.is_finite() && self.refine_step_size > 0.0) {
            return Err(Error::invalid("refine_step_size must be positive"));
        }
        Ok(())
    }
}

/// Maximises `utility` over `[-1, 1]^dim`: uniform random search, then
/// pattern-search refinement of the best few samples.
pub fn maximise_acquisition<F, R>(
    utility: F,
    dim: usize,
    budget: &AcqMaxBudget,
    rng: &mut R,
) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
    R: Rng + ?Sized,
{
    budget.validate()?;
    let pool = uniform_points(dim, budget.n_random, rng);
    let values: Vec<f64> = pool.iter().map(|p| utility(p)).collect();
    Ok(refine_pool(utility, &pool, &values, budget).0)
}

/// Refines the top `n_refine` pool entries and returns the best point seen with its value.
///
/// Each refinement tries `+-step` along every coordinate (clipped to the box),
/// moves to the best strict improvement, and halves the step when none exists.
pub fn refine_pool<F>(
    utility: F,
    pool: &[Vec<f64>],
    values: &[f64],
    budget: &AcqMaxBudget,
) -> (Vec<f64>, f64)
where
    F: Fn(&[f64]) -> f64,
{
    assert_eq!(pool.len(), values.len(), "pool and values must align");
    assert!(!pool.is_empty(), "candidate pool must be non-empty");
    let score = |v: f64| if v.is_nan() { f64::NEG_INFINITY } else { v };
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| score(values[b]).total_cmp(&score(values[a])));

    let mut best = (pool[order[0]].clone(), score(values[order[0]]));
    for &start in order.iter().take(budget.n_refine) {
        let mut x = pool[start].clone();
        let mut fx = score(values[start]);
        let mut step = budget.refine_step_size;
        for _ in 0..budget.refine_steps {
            let mut improved: Option<(Vec<f64>, f64)> = None;
            for m in 0..x.len() {
                for dir in [1.0, -1.0] {
                    let mut trial = x.clone();
                    trial[m] = (trial[m] + dir * step).clamp(-1.0, 1.0);
                    if trial[m] == x[m] {
                        continue;
                    }
                    let ft = score(utility(&trial));
                    if ft > improved.as_ref().map_or(fx, |(_, v)| *v) {
                        improved = Some((trial, ft));
                    }
                }
            }
            match improved {
                Some((t, ft)) => {
                    x = t;
                    fx = ft;
                }
                None => step *= 0.5,
            }
        }
        if fx > best.1 {
            best = (x, fx);
        }
    }
    best
}

//! Benchmark objectives on `[-1, 1]^d`, their reference minima, and the regret metric.

use std::collections::HashMap;
use std::f64::consts::{E, PI, TAU};
use std::sync::{Arc, Mutex, OnceLock};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::acquisition::uniform_points;
use crate::error::{Error, Result};
use crate::gp::{FeatureFunction, KernelHyperparams};
use crate::simulator::Objective;

pub const PROBLEM_NAMES: [&str; 7] = [
    "egg-2", "ack-5", "ack-10", "mic-5", "mic-10", "mat-2", "mat-6",
];

pub const EGGHOLDER_MIN: f64 = -959.640_662_720_851;
pub const EGGHOLDER_ARGMIN: [f64; 2] = [512.0, 404.231_805_120_134];
pub const MICHALEWICZ_5_MIN: f64 = -4.687_658_179_088_146;
pub const MICHALEWICZ_10_MIN: f64 = -9.660_151_715_641_341;

/// Lengthscale and signal variance of the GP-draw problems.
pub const GP_DRAW_LENGTHSCALE: f64 = 0.3;
pub const GP_DRAW_SIGNAL_VARIANCE: f64 = 1.0;
pub const GP_DRAW_FEATURES: usize = 1024;
pub const GP_DRAW_DEFAULT_SEED: u64 = 0;

const REGRET_FLOOR: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum MinProvenance {
    Analytic,
    /// Found by multi-start local search on the realised function.
    Estimated,
}

#[derive(Clone, Debug)]
enum Formula {
    Ackley,
    Eggholder,
    Michalewicz,
    GpDraw(Arc<FeatureFunction>),
}

#[derive(Clone, Debug)]
pub struct Problem {
    name: String,
    bounds: Vec<(f64, f64)>,
    formula: Formula,
    true_min_value: f64,
    true_min_provenance: MinProvenance,
    noise_variance: f64,
}

impl Problem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn native_bounds(&self) -> &[(f64, f64)] {
        &self.bounds
    }

    pub fn true_min_value(&self) -> f64 {
        self.true_min_value
    }

    pub fn true_min_provenance(&self) -> MinProvenance {
        self.true_min_provenance
    }

    /// Noise variance assumed by the surrogate. Evaluations themselves are noiseless.
    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Value at a point given in native coordinates.
    pub fn evaluate_native(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        Ok(match &self.formula {
            Formula::Ackley => ackley(x),
            Formula::Eggholder => eggholder(x[0], x[1]),
            Formula::Michalewicz => michalewicz(x),
            Formula::GpDraw(f) => f.eval(x),
        })
    }

    /// Value at a point of `[-1, 1]^d`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: x.len(),
            });
        }
        self.evaluate_native(&unscale_point(x, &self.bounds)?)
    }

    pub fn log_simple_regret(&self, best_observed: f64) -> f64 {
        log_simple_regret(best_observed, self.true_min_value)
    }
}

impl Objective for Problem {
    fn dim(&self) -> usize {
        Problem::dim(self)
    }

    fn evaluate(&self, x: &[f64]) -> Result<f64> {
        Problem::evaluate(self, x)
    }
}

/// Builds a named benchmark. `seed` selects the GP draw for `mat-*` problems and is ignored otherwise.
pub fn make_benchmark(name: &str, seed: Option<u64>) -> Result<Problem> {
    let unknown = || Error::UnknownProblem {
        name: name.to_string(),
        valid: PROBLEM_NAMES.to_vec(),
    };
    let key = name.trim().to_ascii_lowercase();
    if !PROBLEM_NAMES.contains(&key.as_str()) {
        return Err(unknown());
    }
    let (family, dim) = key.split_once('-').ok_or_else(unknown)?;
    let dim: usize = dim.parse().map_err(|_| unknown())?;
    let problem = |bounds: (f64, f64), formula, min, provenance| Problem {
        name: key.clone(),
        bounds: vec![bounds; dim],
        formula,
        true_min_value: min,
        true_min_provenance: provenance,
        noise_variance: 1e-6,
    };
    Ok(match family {
        "ack" => problem(
            (-32.768, 32.768),
            Formula::Ackley,
            0.0,
            MinProvenance::Analytic,
        ),
        "egg" => problem(
            (-512.0, 512.0),
            Formula::Eggholder,
            EGGHOLDER_MIN,
            MinProvenance::Analytic,
        ),
        "mic" => {
            let min = if dim == 5 {
                MICHALEWICZ_5_MIN
            } else {
                MICHALEWICZ_10_MIN
            };
            problem(
                (0.0, PI),
                Formula::Michalewicz,
                min,
                MinProvenance::Analytic,
            )
        }
        "mat" => {
            let seed = seed.unwrap_or(GP_DRAW_DEFAULT_SEED);
            let f = Arc::new(gp_draw(dim, seed)?);
            let min = estimated_gp_draw_min(&key, seed, &f);
            problem(
                (-1.0, 1.0),
                Formula::GpDraw(f),
                min,
                MinProvenance::Estimated,
            )
        }
        _ => return Err(unknown()),
    })
}

fn gp_draw(dim: usize, seed: u64) -> Result<FeatureFunction> {
    let hp = KernelHyperparams::isotropic(GP_DRAW_SIGNAL_VARIANCE, GP_DRAW_LENGTHSCALE, dim)?;
    FeatureFunction::sample(&hp, GP_DRAW_FEATURES, &mut ChaCha8Rng::seed_from_u64(seed))
}

/// Minimum estimates are cached per (name, seed); the search is costly and deterministic.
fn estimated_gp_draw_min(name: &str, seed: u64, f: &FeatureFunction) -> f64 {
    static CACHE: OnceLock<Mutex<HashMap<(String, u64), f64>>> = OnceLock::new();
    let cache = CACHE.get_or_init(Default::default);
    if let Some(v) = cache
        .lock()
        .expect("cache lock")
        .get(&(name.to_string(), seed))
    {
        return *v;
    }
    let dim = f.dim();
    let v = estimate_minimum(|x| f.eval(x), dim, 1000, seed);
    cache
        .lock()
        .expect("cache lock")
        .insert((name.to_string(), seed), v);
    v
}

/// Multi-start pattern search on `[-1, 1]^d`.
///
/// The `n_starts` best points of a uniform pool twenty times larger seed
/// coarse local searches; the twenty best results are then polished with a
/// fine step. The smallest value found is returned.
pub fn estimate_minimum<F: Fn(&[f64]) -> f64>(f: F, dim: usize, n_starts: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(1);
    let mut pool: Vec<(f64, Vec<f64>)> = uniform_points(dim, 20 * n_starts.max(1), &mut rng)
        .into_iter()
        .map(|x| (f(&x), x))
        .collect();
    pool.sort_by(|a, b| a.0.total_cmp(&b.0));
    pool.truncate(n_starts.max(1));
    let mut coarse: Vec<(f64, Vec<f64>)> = pool
        .into_iter()
        .map(|(v, mut x)| (pattern_search(&f, &mut x, v, 0.05, 1e-3), x))
        .collect();
    coarse.sort_by(|a, b| a.0.total_cmp(&b.0));
    coarse
        .into_iter()
        .take(20)
        .map(|(v, mut x)| pattern_search(&f, &mut x, v, 1e-3, 1e-8))
        .fold(f64::INFINITY, f64::min)
}

/// Coordinate pattern search inside `[-1, 1]^d`; the step doubles after a
/// successful sweep and halves after a failed one.
fn pattern_search<F: Fn(&[f64]) -> f64>(
    f: &F,
    x: &mut [f64],
    mut fx: f64,
    mut step: f64,
    min_step: f64,
) -> f64 {
    while step > min_step {
        let mut improved = false;
        for i in 0..x.len() {
            for dir in [1.0, -1.0] {
                let old = x[i];
                x[i] = (old + dir * step).clamp(-1.0, 1.0);
                let v = f(x);
                if v < fx {
                    fx = v;
                    improved = true;
                    break;
                }
                x[i] = old;
            }
        }
        step = if improved {
            (2.0 * step).min(0.5)
        } else {
            0.5 * step
        };
    }
    fx
}

/// Ackley, written so that the origin evaluates to exactly zero.
pub fn ackley(x: &[f64]) -> f64 {
    let n = x.len() as f64;
    let sq = x.iter().map(|v| v * v).sum::<f64>() / n;
    let cos = x.iter().map(|v| (TAU * v).cos()).sum::<f64>() / n;
    20.0 * (1.0 - (-0.2 * sq.sqrt()).exp()) + (E - cos.exp())
}

pub fn eggholder(x1: f64, x2: f64) -> f64 {
    -(x2 + 47.0) * (x2 + x1 / 2.0 + 47.0).abs().sqrt().sin()
        - x1 * (x1 - (x2 + 47.0)).abs().sqrt().sin()
}

/// Michalewicz with steepness 10.
pub fn michalewicz(x: &[f64]) -> f64 {
    -x.iter()
        .enumerate()
        .map(|(i, &v)| v.sin() * ((i + 1) as f64 * v * v / PI).sin().powi(20))
        .sum::<f64>()
}

/// `log10(max(|true_min - best_observed|, 1e-12))`.
pub fn log_simple_regret(best_observed: f64, true_min: f64) -> f64 {
    (true_min - best_observed).abs().max(REGRET_FLOOR).log10()
}

fn check_box(x: &[f64], bounds: &[(f64, f64)], what: &str) -> Result<()> {
    if x.len() != bounds.len() {
        return Err(Error::DimensionMismatch {
            expected: bounds.len(),
            found: x.len(),
        });
    }
    for (i, (&v, &(lo, hi))) in x.iter().zip(bounds).enumerate() {
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "bounds {i} are empty: ({lo}, {hi})"
            )));
        }
        if !(v >= lo && v <= hi) {
            return Err(Error::invalid(format!(
                "{what} coordinate {i} = {v} lies outside [{lo}, {hi}]"
            )));
        }
    }
    Ok(())
}

/// Native point to `[-1, 1]^d`.
pub fn scale_point(x: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
    check_box(x, bounds, "native")?;
    Ok(x.iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| 2.0 * (v - lo) / (hi - lo) - 1.0)
        .collect())
}

/// Point of `[-1, 1]^d` to native coordinates.
pub fn unscale_point(s: &[f64], bounds: &[(f64, f64)]) -> Result<Vec<f64>> {
    let unit = vec![(-1.0, 1.0); bounds.len()];
    check_box(s, &unit, "scaled")?;
    for (i, &(lo, hi)) in bounds.iter().enumerate() {
        if !(lo < hi) {
            return Err(Error::invalid(format!(
                "bounds {i} are empty: ({lo}, {hi})"
            )));
        }
    }
    Ok(s.iter()
        .zip(bounds)
        .map(|(&v, &(lo, hi))| lo + (v + 1.0) * (hi - lo) / 2.0)
        .collect())
}

//! Zero-mean Gaussian-process surrogate with a Matérn-5/2 ARD kernel.
//!
//! A [`GpModel`] caches the Cholesky factor of `K(X, X) + noise * I` and the
//! weight vector `alpha = (K + noise * I)^-1 y`, so posterior queries cost one
//! kernel row plus one triangular solve. Models are immutable: conditioning on
//! hallucinated data or refitting hyperparameters produces a new model.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal, Uniform};

use crate::error::{Error, Result};

const SQRT5: f64 = 2.236_067_977_499_79;
const LN_2PI: f64 = 1.837_877_066_409_345_3;

/// Signal variance and per-dimension lengthscales of the Matérn-5/2 ARD kernel.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelHyperparams {
    signal_variance: f64,
    lengthscales: Vec<f64>,
}

impl KernelHyperparams {
    pub fn new(signal_variance: f64, lengthscales: Vec<f64>) -> Result<Self> {
        if !(signal_variance.is_finite() && signal_variance > 0.0) {
            return Err(Error::invalid(format!(
                "signal variance must be positive and finite, got {signal_variance}"
            )));
        }
        if lengthscales.is_empty() {
            return Err(Error::invalid("at least one lengthscale is required"));
        }
        if let Some(bad) = lengthscales.iter().find(|l| !(l.is_finite() && **l > 0.0)) {
            return Err(Error::invalid(format!(
                "lengthscales must be positive and finite, got {bad}"
            )));
        }
        Ok(Self {
            signal_variance,
            lengthscales,
        })
    }

    pub fn isotropic(signal_variance: f64, lengthscale: f64, dim: usize) -> Result<Self> {
        Self::new(signal_variance, vec![lengthscale; dim])
    }

    pub fn signal_variance(&self) -> f64 {
        self.signal_variance
    }

    pub fn lengthscales(&self) -> &[f64] {
        &self.lengthscales
    }

    pub fn dim(&self) -> usize {
        self.lengthscales.len()
    }

    /// `[ln signal_variance, ln l_1, ..., ln l_d]`
    pub fn to_log_params(&self) -> Vec<f64> {
        std::iter::once(self.signal_variance.ln())
            .chain(self.lengthscales.iter().map(|l| l.ln()))
            .collect()
    }

    pub fn from_log_params(theta: &[f64]) -> Result<Self> {
        let (first, rest) = theta
            .split_first()
            .ok_or(Error::Empty("log hyperparameters"))?;
        Self::new(first.exp(), rest.iter().map(|t| t.exp()).collect())
    }
}

fn scaled_distance(a: &[f64], b: &[f64], lengthscales: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(lengthscales)
        .map(|((ai, bi), l)| {
            let z = (ai - bi) / l;
            z * z
        })
        .sum::<f64>()
        .sqrt()
}

/// `(1 + sqrt5 r + 5 r^2 / 3) exp(-sqrt5 r)`
fn matern52_profile(r: f64) -> f64 {
    let s = SQRT5 * r;
    (1.0 + s + s * s / 3.0) * (-s).exp()
}

/// Kernel value without dimension checks; callers guarantee matching lengths.
pub(crate) fn kernel(a: &[f64], b: &[f64], hp: &KernelHyperparams) -> f64 {
    hp.signal_variance * matern52_profile(scaled_distance(a, b, &hp.lengthscales))
}

/// Matérn-5/2 covariance with one lengthscale per input dimension.
pub fn matern52_ard(x: &[f64], x2: &[f64], hp: &KernelHyperparams) -> Result<f64> {
    check_dim(hp.dim(), x.len())?;
    check_dim(hp.dim(), x2.len())?;
    Ok(kernel(x, x2, hp))
}

fn check_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(Error::DimensionMismatch { expected, found });
    }
    Ok(())
}

fn kernel_matrix(inputs: &[Vec<f64>], hp: &KernelHyperparams) -> DMatrix<f64> {
    let n = inputs.len();
    let mut k = DMatrix::zeros(n, n);
    for i in 0..n {
        k[(i, i)] = hp.signal_variance;
        for j in 0..i {
            let v = kernel(&inputs[i], &inputs[j], hp);
            k[(i, j)] = v;
            k[(j, i)] = v;
        }
    }
    k
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// Jitter starts at `1e-10 * scale` and grows by 10x up to `1e-4 * scale`,
/// where `scale` is the mean of the diagonal unless overridden.
pub(crate) fn cholesky_with_jitter(
    matrix: DMatrix<f64>,
    scale: Option<f64>,
) -> Result<(Cholesky<f64, Dyn>, f64)> {
    let n = matrix.nrows();
    if matrix.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("covariance matrix"));
    }
    if let Some(chol) = Cholesky::new(matrix.clone()) {
        return Ok((chol, 0.0));
    }
    let scale = scale
        .unwrap_or_else(|| matrix.diagonal().mean())
        .abs()
        .max(f64::MIN_POSITIVE);
    let mut attempted = Vec::new();
    for exponent in -10..=-4 {
        let jitter = 10f64.powi(exponent) * scale;
        attempted.push(jitter);
        let mut m = matrix.clone();
        for i in 0..n {
            m[(i, i)] += jitter;
        }
        if let Some(chol) = Cholesky::new(m) {
            return Ok((chol, jitter));
        }
    }
    Err(Error::Factorization { attempted })
}

/// Settings for maximising the log marginal likelihood.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperOptConfig {
    pub n_restarts: usize,
    /// Bounds on `ln signal_variance`.
    pub log_signal_bounds: (f64, f64),
    /// Bounds on each `ln lengthscale`.
    pub log_lengthscale_bounds: (f64, f64),
    pub max_iters: usize,
}

impl Default for HyperOptConfig {
    fn default() -> Self {
        Self {
            n_restarts: 5,
            log_signal_bounds: (1e-3f64.ln(), 1e3f64.ln()),
            log_lengthscale_bounds: (0.01f64.ln(), 10f64.ln()),
            max_iters: 60,
        }
    }
}

impl HyperOptConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_restarts == 0 {
            return Err(Error::invalid("n_restarts must be at least 1"));
        }
        for (name, (lo, hi)) in [
            ("signal", self.log_signal_bounds),
            ("lengthscale", self.log_lengthscale_bounds),
        ] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(Error::invalid(format!(
                    "{name} bounds must satisfy low < high, got ({lo}, {hi})"
                )));
            }
        }
        Ok(())
    }

    fn bounds(&self, dim: usize) -> Vec<(f64, f64)> {
        std::iter::once(self.log_signal_bounds)
            .chain(std::iter::repeat_n(self.log_lengthscale_bounds, dim))
            .collect()
    }
}

/// How joint posterior draws are produced.
#[derive(Clone, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Largest candidate set drawn exactly through a Cholesky factor.
    pub exact_max: usize,
    /// Random features used for the prior part of larger draws.
    pub n_features: usize,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self {
            exact_max: 4096,
            n_features: 1024,
        }
    }
}

/// A fitted zero-mean GP surrogate.
#[derive(Clone, Debug)]
pub struct GpModel {
    dim: usize,
    inputs: Vec<Vec<f64>>,
    targets: DVector<f64>,
    hyperparams: KernelHyperparams,
    noise_variance: f64,
    chol: Cholesky<f64, Dyn>,
    alpha: DVector<f64>,
    jitter: f64,
}

impl GpModel {
    /// Builds a model with fixed hyperparameters. `inputs` may be empty, giving the prior.
    pub fn new(
        inputs: Vec<Vec<f64>>,
        targets: Vec<f64>,
        hyperparams: KernelHyperparams,
        noise_variance: f64,
    ) -> Result<Self> {
        let dim = hyperparams.dim();
        if inputs.len() != targets.len() {
            return Err(Error::invalid(format!(
                "{} inputs but {} targets",
                inputs.len(),
                targets.len()
            )));
        }
        for x in &inputs {
            check_dim(dim, x.len())?;
            if x.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite("training inputs"));
            }
        }
        if targets.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("training targets"));
        }
        if !(noise_variance.is_finite() && noise_variance >= 0.0) {
            return Err(Error::invalid(format!(
                "noise variance must be non-negative, got {noise_variance}"
            )));
        }
        let mut k = kernel_matrix(&inputs, &hyperparams);
        for i in 0..inputs.len() {
            k[(i, i)] += noise_variance;
        }
        let (chol, jitter) = cholesky_with_jitter(k, None)?;
        let targets = DVector::from_vec(targets);
        let alpha = chol.solve(&targets);
        Ok(Self {
            dim,
            inputs,
            targets,
            hyperparams,
            noise_variance,
            chol,
            alpha,
            jitter,
        })
    }

    pub fn prior(hyperparams: KernelHyperparams, noise_variance: f64) -> Result<Self> {
        Self::new(Vec::new(), Vec::new(), hyperparams, noise_variance)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n(&self) -> usize {
        self.inputs.len()
    }

    pub fn inputs(&self) -> &[Vec<f64>] {
        &self.inputs
    }

    pub fn targets(&self) -> &[f64] {
        self.targets.as_slice()
    }

    pub fn hyperparams(&self) -> &KernelHyperparams {
        &self.hyperparams
    }

    pub fn noise_variance(&self) -> f64 {
        self.noise_variance
    }

    /// Diagonal jitter that was needed on top of the noise, zero when none.
    pub fn jitter(&self) -> f64 {
        self.jitter
    }

    /// Lower-triangular factor of `K(X, X) + noise * I` (plus any jitter).
    pub fn factor(&self) -> DMatrix<f64> {
        self.chol.l()
    }

    pub fn alpha(&self) -> &[f64] {
        self.alpha.as_slice()
    }

    fn cross_covariance(&self, x: &[f64]) -> DVector<f64> {
        DVector::from_iterator(
            self.n(),
            self.inputs
                .iter()
                .map(|xi| kernel(x, xi, &self.hyperparams)),
        )
    }

    /// Posterior mean and clamped variance at `x`.
    pub fn posterior(&self, x: &[f64]) -> Result<(f64, f64)> {
        check_dim(self.dim, x.len())?;
        Ok(self.moments(x))
    }

    pub(crate) fn moments(&self, x: &[f64]) -> (f64, f64) {
        let prior_var = self.hyperparams.signal_variance;
        if self.inputs.is_empty() {
            return (0.0, prior_var);
        }
        let kx = self.cross_covariance(x);
        let mean = kx.dot(&self.alpha);
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kx)
            .expect("cholesky factor has a non-zero diagonal");
        let var = prior_var - v.norm_squared();
        (mean, var.max(0.0))
    }

    /// Posterior means and variances for many points with a single triangular solve.
    pub fn posterior_batch(&self, points: &[Vec<f64>]) -> Result<(Vec<f64>, Vec<f64>)> {
        for p in points {
            check_dim(self.dim, p.len())?;
        }
        let m = points.len();
        let prior_var = self.hyperparams.signal_variance;
        if self.inputs.is_empty() {
            return Ok((vec![0.0; m], vec![prior_var; m]));
        }
        let kxs = self.cross_matrix(points);
        let means = (kxs.transpose() * &self.alpha).as_slice().to_vec();
        let v = self
            .chol
            .l_dirty()
            .solve_lower_triangular(&kxs)
            .expect("cholesky factor has a non-zero diagonal");
        let vars = v
            .column_iter()
            .map(|col| (prior_var - col.norm_squared()).max(0.0))
            .collect();
        Ok((means, vars))
    }

    /// `n x m` matrix of `k(x_i, p_j)`.
    fn cross_matrix(&self, points: &[Vec<f64>]) -> DMatrix<f64> {
        DMatrix::from_fn(self.n(), points.len(), |i, j| {
            kernel(&self.inputs[i], &points[j], &self.hyperparams)
        })
    }

    /// Gradient of the posterior mean, i.e. the mean of the derivative process.
    pub fn posterior_mean_gradient(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim, x.len())?;
        Ok(self.mean_gradient(x))
    }

    pub(crate) fn mean_gradient(&self, x: &[f64]) -> Vec<f64> {
        let hp = &self.hyperparams;
        let mut grad = vec![0.0; self.dim];
        for (xi, a) in self.inputs.iter().zip(self.alpha.iter()) {
            let r = scaled_distance(x, xi, &hp.lengthscales);
            // d k / d x_m = -sf2 * 5/3 * (1 + sqrt5 r) exp(-sqrt5 r) * (x_m - xi_m) / l_m^2
            let c = -hp.signal_variance * (5.0 / 3.0) * (1.0 + SQRT5 * r) * (-SQRT5 * r).exp();
            for m in 0..self.dim {
                let l = hp.lengthscales[m];
                grad[m] += a * c * (x[m] - xi[m]) / (l * l);
            }
        }
        grad
    }

    /// One joint draw of the latent function at `candidates`.
    ///
    /// Up to `sampler.exact_max` candidates the draw is exact. Larger sets use
    /// pathwise conditioning: a random-feature prior draw corrected by the
    /// exact data term `k(x, X) (K + noise I)^-1 (y - f_prior(X) - eps)`.
    pub fn sample_posterior<R: Rng + ?Sized>(
        &self,
        candidates: &[Vec<f64>],
        sampler: &SamplerConfig,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        if candidates.is_empty() {
            return Err(Error::Empty("candidate set"));
        }
        for c in candidates {
            check_dim(self.dim, c.len())?;
        }
        if candidates.len() <= sampler.exact_max {
            self.sample_exact(candidates, rng)
        } else {
            self.sample_pathwise(candidates, sampler.n_features, rng)
        }
    }

    fn sample_exact<R: Rng + ?Sized>(
        &self,
        candidates: &[Vec<f64>],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let m = candidates.len();
        let mut cov = kernel_matrix(candidates, &self.hyperparams);
        let mut mean = DVector::zeros(m);
        if !self.inputs.is_empty() {
            let kxs = self.cross_matrix(candidates);
            mean = kxs.transpose() * &self.alpha;
            let v = self
                .chol
                .l_dirty()
                .solve_lower_triangular(&kxs)
                .expect("cholesky factor has a non-zero diagonal");
            cov -= v.transpose() * v;
        }
        let (chol, _) = cholesky_with_jitter(cov, Some(self.hyperparams.signal_variance))?;
        let z = DVector::from_iterator(m, (0..m).map(|_| rng.sample::<f64, _>(StandardNormal)));
        let draw = mean + chol.l_dirty().lower_triangle() * z;
        Ok(draw.as_slice().to_vec())
    }

    fn sample_pathwise<R: Rng + ?Sized>(
        &self,
        candidates: &[Vec<f64>],
        n_features: usize,
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let prior = FeatureFunction::sample(&self.hyperparams, n_features, rng)?;
        let mut draw: Vec<f64> = candidates.iter().map(|c| prior.eval(c)).collect();
        if self.inputs.is_empty() {
            return Ok(draw);
        }
        let noise_sd = self.noise_variance.sqrt();
        let residual = DVector::from_iterator(
            self.n(),
            self.inputs.iter().zip(self.targets.iter()).map(|(x, y)| {
                let eps: f64 = rng.sample(StandardNormal);
                y - prior.eval(x) - noise_sd * eps
            }),
        );
        let weights = self.chol.solve(&residual);
        for (value, c) in draw.iter_mut().zip(candidates) {
            *value += self
                .inputs
                .iter()
                .zip(weights.iter())
                .map(|(xi, w)| w * kernel(c, xi, &self.hyperparams))
                .sum::<f64>();
        }
        Ok(draw)
    }

    /// Appends `(points, values)` as observations, keeping hyperparameters fixed.
    pub fn condition_on_hallucinated(&self, points: &[Vec<f64>], values: &[f64]) -> Result<Self> {
        if points.len() != values.len() {
            return Err(Error::invalid(format!(
                "{} hallucinated points but {} values",
                points.len(),
                values.len()
            )));
        }
        if points.is_empty() {
            return Ok(self.clone());
        }
        let mut inputs = self.inputs.clone();
        inputs.extend(points.iter().cloned());
        let mut targets = self.targets.as_slice().to_vec();
        targets.extend_from_slice(values);
        Self::new(
            inputs,
            targets,
            self.hyperparams.clone(),
            self.noise_variance,
        )
    }

    /// Log marginal likelihood of the model's own data under its hyperparameters.
    pub fn log_marginal_likelihood(&self) -> f64 {
        let n = self.n() as f64;
        let log_det: f64 = self
            .chol
            .l_dirty()
            .diagonal()
            .iter()
            .map(|d| d.ln())
            .sum::<f64>();
        -0.5 * self.targets.dot(&self.alpha) - log_det - 0.5 * n * LN_2PI
    }
}

/// Standard GP log marginal likelihood `-y'K^-1y/2 - log|K|/2 - n log(2 pi)/2`.
pub fn log_marginal_likelihood(
    inputs: &[Vec<f64>],
    targets: &[f64],
    hyperparams: &KernelHyperparams,
    noise_variance: f64,
) -> Result<f64> {
    let model = GpModel::new(
        inputs.to_vec(),
        targets.to_vec(),
        hyperparams.clone(),
        noise_variance,
    )?;
    Ok(model.log_marginal_likelihood())
}

/// Log marginal likelihood and its gradient with respect to the log hyperparameters.
fn lml_with_gradient(
    inputs: &[Vec<f64>],
    targets: &[f64],
    theta: &[f64],
    noise_variance: f64,
) -> Result<(f64, Vec<f64>)> {
    let hp = KernelHyperparams::from_log_params(theta)?;
    let model = GpModel::new(inputs.to_vec(), targets.to_vec(), hp, noise_variance)?;
    let lml = model.log_marginal_likelihood();
    let n = model.n();
    let d = model.dim;
    let k_inv = model.chol.inverse();
    let alpha = &model.alpha;
    let hp = &model.hyperparams;
    let sf2 = hp.signal_variance;

    // dLML/dtheta = 1/2 tr((alpha alpha' - K^-1) dK/dtheta)
    let mut grad = vec![0.0; d + 1];
    for i in 0..n {
        let w_ii = alpha[i] * alpha[i] - k_inv[(i, i)];
        grad[0] += 0.5 * w_ii * sf2;
        for j in 0..i {
            let w_ij = alpha[i] * alpha[j] - k_inv[(i, j)];
            let xi = &model.inputs[i];
            let xj = &model.inputs[j];
            let r = scaled_distance(xi, xj, &hp.lengthscales);
            let e = (-SQRT5 * r).exp();
            let k_ij = sf2 * (1.0 + SQRT5 * r + 5.0 * r * r / 3.0) * e;
            grad[0] += w_ij * k_ij;
            let c = w_ij * sf2 * (5.0 / 3.0) * (1.0 + SQRT5 * r) * e;
            for m in 0..d {
                let z = (xi[m] - xj[m]) / hp.lengthscales[m];
                grad[m + 1] += c * z * z;
            }
        }
    }
    Ok((lml, grad))
}

/// Fits kernel hyperparameters by maximising the log marginal likelihood.
///
/// The first restart starts from `hp_init` (clamped into the bounds); the
/// remaining restarts start uniformly in the log-space box. The returned model
/// never has a lower marginal likelihood than `hp_init`.
pub fn fit_gp<R: Rng + ?Sized>(
    inputs: &[Vec<f64>],
    targets: &[f64],
    noise_variance: f64,
    hp_init: &KernelHyperparams,
    opt: &HyperOptConfig,
    rng: &mut R,
) -> Result<GpModel> {
    opt.validate()?;
    if inputs.is_empty() {
        return Err(Error::Empty("training inputs"));
    }
    let init_model = GpModel::new(
        inputs.to_vec(),
        targets.to_vec(),
        hp_init.clone(),
        noise_variance,
    )?;
    let mut best_theta = hp_init.to_log_params();
    let mut best_lml = init_model.log_marginal_likelihood();

    let bounds = opt.bounds(hp_init.dim());
    for restart in 0..opt.n_restarts {
        let start: Vec<f64> = if restart == 0 {
            clamp_to(&hp_init.to_log_params(), &bounds)
        } else {
            bounds
                .iter()
                .map(|&(lo, hi)| rng.random_range(lo..hi))
                .collect()
        };
        let objective = |theta: &[f64]| {
            lml_with_gradient(inputs, targets, theta, noise_variance)
                .ok()
                .filter(|(v, g)| v.is_finite() && g.iter().all(|x| x.is_finite()))
                .map(|(v, g)| (-v, g.into_iter().map(|x| -x).collect::<Vec<_>>()))
        };
        if let Some((theta, neg_lml)) = projected_bfgs(objective, start, &bounds, opt.max_iters) {
            if -neg_lml > best_lml {
                best_lml = -neg_lml;
                best_theta = theta;
            }
        }
    }
    if best_theta == hp_init.to_log_params() {
        return Ok(init_model);
    }
    let hp = KernelHyperparams::from_log_params(&best_theta)?;
    GpModel::new(inputs.to_vec(), targets.to_vec(), hp, noise_variance)
}

fn clamp_to(x: &[f64], bounds: &[(f64, f64)]) -> Vec<f64> {
    x.iter()
        .zip(bounds)
        .map(|(v, &(lo, hi))| v.clamp(lo, hi))
        .collect()
}

/// Minimises `f` inside a box with BFGS directions and projected backtracking.
/// Returns the final point and value, or `None` when `f` fails at the start.
fn projected_bfgs<F>(
    f: F,
    start: Vec<f64>,
    bounds: &[(f64, f64)],
    max_iters: usize,
) -> Option<(Vec<f64>, f64)>
where
    F: Fn(&[f64]) -> Option<(f64, Vec<f64>)>,
{
    let n = start.len();
    let mut x = start;
    let (mut fx, mut g) = f(&x)?;
    let mut h = DMatrix::<f64>::identity(n, n);
    for _ in 0..max_iters {
        let gv = DVector::from_column_slice(&g);
        let mut dir = -(&h * &gv);
        if dir.dot(&gv) >= 0.0 {
            h.fill_with_identity();
            dir = -gv.clone();
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..30 {
            let trial: Vec<f64> = x
                .iter()
                .zip(dir.iter())
                .zip(bounds)
                .map(|((xi, di), &(lo, hi))| (xi + step * di).clamp(lo, hi))
                .collect();
            let decrease: f64 = trial
                .iter()
                .zip(&x)
                .zip(&g)
                .map(|((t, xi), gi)| gi * (t - xi))
                .sum();
            if let Some((ft, gt)) = f(&trial) {
                if ft <= fx + 1e-4 * decrease.min(0.0) && ft <= fx {
                    accepted = Some((trial, ft, gt));
                    break;
                }
            }
            step *= 0.5;
        }
        let Some((x_new, f_new, g_new)) = accepted else {
            break;
        };
        let s = DVector::from_iterator(n, x_new.iter().zip(&x).map(|(a, b)| a - b));
        let y = DVector::from_iterator(n, g_new.iter().zip(&g).map(|(a, b)| a - b));
        let improvement = fx - f_new;
        x = x_new;
        fx = f_new;
        g = g_new;
        let sy = s.dot(&y);
        if sy > 1e-12 {
            let rho = 1.0 / sy;
            let ident = DMatrix::<f64>::identity(n, n);
            let left = &ident - rho * &s * y.transpose();
            let right = &ident - rho * &y * s.transpose();
            h = left * &h * right + rho * &s * s.transpose();
        }
        if improvement.abs() <= 1e-10 * (1.0 + fx.abs()) || s.norm() < 1e-9 {
            break;
        }
    }
    Some((x, fx))
}

/// Random Fourier features whose inner products approximate the Matérn-5/2 ARD kernel.
///
/// Frequencies follow the kernel's spectral density, a multivariate Student-t
/// with 5 degrees of freedom scaled by the inverse lengthscales.
#[derive(Clone, Debug)]
pub struct MaternFeatures {
    frequencies: Vec<Vec<f64>>,
    phases: Vec<f64>,
    amplitude: f64,
}

impl MaternFeatures {
    pub fn sample<R: Rng + ?Sized>(
        hp: &KernelHyperparams,
        n_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if n_features == 0 {
            return Err(Error::invalid("n_features must be positive"));
        }
        let chi = ChiSquared::new(5.0).expect("valid degrees of freedom");
        let phase = Uniform::new(0.0, std::f64::consts::TAU).expect("valid range");
        let mut frequencies = Vec::with_capacity(n_features);
        let mut phases = Vec::with_capacity(n_features);
        for _ in 0..n_features {
            let u: f64 = chi.sample(rng);
            let scale = (5.0 / u).sqrt();
            frequencies.push(
                hp.lengthscales
                    .iter()
                    .map(|l| rng.sample::<f64, _>(StandardNormal) * scale / l)
                    .collect(),
            );
            phases.push(phase.sample(rng));
        }
        Ok(Self {
            frequencies,
            phases,
            amplitude: (2.0 * hp.signal_variance / n_features as f64).sqrt(),
        })
    }

    pub fn n_features(&self) -> usize {
        self.phases.len()
    }

    pub fn features(&self, x: &[f64]) -> Vec<f64> {
        self.frequencies
            .iter()
            .zip(&self.phases)
            .map(|(w, b)| self.amplitude * (dot(w, x) + b).cos())
            .collect()
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A function drawn from the random-feature approximation of the GP prior.
#[derive(Clone, Debug)]
pub struct FeatureFunction {
    features: MaternFeatures,
    weights: Vec<f64>,
}

impl FeatureFunction {
    pub fn sample<R: Rng + ?Sized>(
        hp: &KernelHyperparams,
        n_features: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let features = MaternFeatures::sample(hp, n_features, rng)?;
        let weights = (0..n_features)
            .map(|_| rng.sample(StandardNormal))
            .collect();
        Ok(Self { features, weights })
    }

    pub fn dim(&self) -> usize {
        self.features.frequencies.first().map_or(0, Vec::len)
    }

    pub fn eval(&self, x: &[f64]) -> f64 {
        let f = &self.features;
        f.frequencies
            .iter()
            .zip(&f.phases)
            .zip(&self.weights)
            .map(|((w, b), a)| a * (dot(w, x) + b).cos())
            .sum::<f64>()
            * f.amplitude
    }
}

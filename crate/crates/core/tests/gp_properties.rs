mod common;

use playbook::gp::{GpModel, KernelHyperparams, SamplerConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::{random_point, DenseOracle};

fn model_from(seed: u64, n: usize, d: usize, lengthscale: f64, signal: f64) -> GpModel {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let inputs: Vec<Vec<f64>> = (0..n).map(|_| random_point(&mut rng, d)).collect();
    let targets: Vec<f64> = inputs
        .iter()
        .map(|x| x.iter().map(|v| (3.0 * v).sin()).sum())
        .collect();
    let hp = KernelHyperparams::isotropic(signal, lengthscale, d).unwrap();
    GpModel::new(inputs, targets, hp, 1e-6).unwrap()
}

fn oracle(model: &GpModel) -> DenseOracle {
    DenseOracle::new(
        model.inputs(),
        model.targets(),
        model.hyperparams(),
        model.noise_variance() + model.jitter(),
    )
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn posterior_variance_is_non_negative(
        seed in 0u64..1000, n in 1usize..15, d in 1usize..4, ell in 0.05f64..3.0, sf in 0.1f64..10.0,
    ) {
        let model = model_from(seed, n, d, ell, sf);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 1);
        let mut probes: Vec<Vec<f64>> = (0..20).map(|_| random_point(&mut rng, d)).collect();
        probes.extend(model.inputs().iter().cloned());
        for x in &probes {
            let (mean, var) = model.posterior(x).unwrap();
            prop_assert!(mean.is_finite());
            prop_assert!(var >= 0.0 && var <= sf * (1.0 + 1e-12));
        }
    }

    #[test]
    fn posterior_matches_dense_inverse(seed in 0u64..1000, n in 1usize..10, d in 1usize..4, ell in 0.2f64..2.0) {
        let model = model_from(seed, n, d, ell, 1.0);
        let dense = oracle(&model);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 7);
        for _ in 0..10 {
            let x = random_point(&mut rng, d);
            let (m, v) = model.posterior(&x).unwrap();
            let (om, ov) = dense.posterior(&x);
            prop_assert!((m - om).abs() <= 1e-6 * (1.0 + om.abs()));
            prop_assert!((v - ov.max(0.0)).abs() <= 1e-6);
        }
        prop_assert!((model.log_marginal_likelihood() - dense.lml).abs() <= 1e-6 * (1.0 + dense.lml.abs()));
    }

    #[test]
    fn hallucinating_the_mean_leaves_the_mean_unchanged(
        seed in 0u64..1000, n in 1usize..10, b in 1usize..5, d in 1usize..4, ell in 0.1f64..2.0,
    ) {
        let model = model_from(seed, n, d, ell, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(seed + 3);
        let pending: Vec<Vec<f64>> = (0..b).map(|_| random_point(&mut rng, d)).collect();
        let means: Vec<f64> = pending.iter().map(|p| model.posterior(p).unwrap().0).collect();
        let kb = model.condition_on_hallucinated(&pending, &means).unwrap();
        for _ in 0..20 {
            let x = random_point(&mut rng, d);
            let (m0, v0) = model.posterior(&x).unwrap();
            let (m1, v1) = kb.posterior(&x).unwrap();
            prop_assert!((m0 - m1).abs() <= 1e-8, "{} vs {}", m0, m1);
            prop_assert!(v1 <= v0 + 1e-12);
        }
    }
}

fn check_draw_moments(sampler: &SamplerConfig, seed: u64) {
    let model = model_from(seed, 6, 2, 0.4, 1.0);
    let dense = oracle(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let candidates: Vec<Vec<f64>> = (0..5).map(|_| random_point(&mut rng, 2)).collect();
    let n = 5000;
    let draws: Vec<Vec<f64>> = (0..n)
        .map(|_| {
            model
                .sample_posterior(&candidates, sampler, &mut rng)
                .unwrap()
        })
        .collect();
    let m = candidates.len();
    let mean: Vec<f64> = (0..m)
        .map(|i| draws.iter().map(|d| d[i]).sum::<f64>() / n as f64)
        .collect();
    for i in 0..m {
        let (om, ov) = dense.posterior(&candidates[i]);
        assert!(
            (mean[i] - om).abs() <= 0.1 * ov.sqrt().max(1e-3),
            "mean {i}: {} vs {om}",
            mean[i]
        );
        for j in 0..m {
            let cov = draws
                .iter()
                .map(|d| (d[i] - mean[i]) * (d[j] - mean[j]))
                .sum::<f64>()
                / (n - 1) as f64;
            let expected = dense.covariance(&candidates[i], &candidates[j]);
            let scale =
                (dense.posterior(&candidates[i]).1 * dense.posterior(&candidates[j]).1).sqrt();
            assert!(
                (cov - expected).abs() <= 0.1 * scale,
                "cov ({i}, {j}): {cov} vs {expected}"
            );
        }
    }
}

#[test]
fn exact_draws_have_the_posterior_covariance() {
    check_draw_moments(&SamplerConfig::default(), 11);
}

#[test]
fn pathwise_draws_have_the_posterior_covariance() {
    check_draw_moments(
        &SamplerConfig {
            exact_max: 0,
            n_features: 1024,
        },
        12,
    );
}

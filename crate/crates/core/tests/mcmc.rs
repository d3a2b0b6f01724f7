use curvwomb::data::SpatialDataset;
use curvwomb::kernels::{gram_matrix, KernelFamily, KernelSpec};
use curvwomb::mcmc::*;
use curvwomb::summary::hpd;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn dataset(seed: u64, n: usize, y: impl Fn(&[f64; 2], f64) -> f64) -> SpatialDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let locs: Vec<[f64; 2]> = (0..n).map(|_| [rng.random(), rng.random()]).collect();
    let cov: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let ys = locs.iter().zip(&cov).map(|(s, c)| y(s, *c) + 0.3 * rng.random_range(-1.0..1.0)).collect();
    SpatialDataset::new(locs, ys, vec![("c".into(), cov)]).unwrap()
}

/// Batch-means standard error of a chain's mean.
fn batch_se(xs: &[f64], batches: usize) -> f64 {
    let m = xs.len() / batches;
    let means: Vec<f64> = xs.chunks_exact(m).map(|c| c.iter().sum::<f64>() / m as f64).collect();
    let grand = means.iter().sum::<f64>() / means.len() as f64;
    let var = means.iter().map(|x| (x - grand).powi(2)).sum::<f64>() / (means.len() - 1) as f64;
    (var / means.len() as f64).sqrt()
}

#[test]
fn beta_mean_matches_gls_with_pinned_covariance_parameters() {
    let (sigma2, tau2, phi) = (1.0, 0.5, 3.0);
    let ds = dataset(3, 30, |s, c| 1.0 + 2.0 * c + (4.0 * s[0]).sin());
    let mut priors = default_priors(&ds, PriorPreset::Simulation);
    // Enormous inverse-gamma shapes pin the variances; a sliver of support pins φ.
    let pin = 1e9;
    priors.a_sigma = pin;
    priors.b_sigma = pin * sigma2;
    priors.a_tau = pin;
    priors.b_tau = pin * tau2;
    priors.a_phi = phi * (1.0 - 1e-9);
    priors.b_phi = phi * (1.0 + 1e-9);
    priors.sigma_beta = vec![vec![100.0, 0.0], vec![0.0, 100.0]];
    priors.mu_beta = vec![0.5, -0.5];
    let settings = FitSettings { iters: 11_000, burn_in: 1_000, thin: 1, seed: 9, target_accept: 0.44 };
    let chains = fit(&ds, KernelFamily::SquaredExponential, &priors, &settings).unwrap();

    let spec = KernelSpec::new(KernelFamily::SquaredExponential, sigma2, phi).unwrap();
    let mut v = gram_matrix(&spec, &ds.locations);
    for i in 0..ds.len() {
        v[(i, i)] += tau2;
    }
    let vinv = v.try_inverse().unwrap();
    let prior_prec = DMatrix::from_diagonal_element(2, 2, 0.01);
    let mu = DVector::from_column_slice(&priors.mu_beta);
    let prec = &prior_prec + ds.x.transpose() * &vinv * &ds.x;
    let gls = prec.clone().try_inverse().unwrap() * (&prior_prec * mu + ds.x.transpose() * &vinv * &ds.y);

    for j in 0..2 {
        let col = chains.column(|d| d.beta[j]);
        let mean = col.iter().sum::<f64>() / col.len() as f64;
        let se = batch_se(&col, 50);
        assert!((mean - gls[j]).abs() < 3.0 * se, "beta{j}: {mean} vs {} (se {se})", gls[j]);
    }
    for d in &chains.draws {
        assert!((d.sigma2 / sigma2 - 1.0).abs() < 1e-3 && (d.tau2 / tau2 - 1.0).abs() < 1e-3);
    }
}

#[test]
fn noiseless_linear_data_concentrates_at_least_squares() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let locs: Vec<[f64; 2]> = (0..40).map(|_| [rng.random(), rng.random()]).collect();
    let cov: Vec<f64> = (0..40).map(|_| rng.random_range(-1.0..1.0)).collect();
    let y = cov.iter().map(|c| 3.0 - 1.5 * c).collect();
    let ds = SpatialDataset::new(locs, y, vec![("c".into(), cov)]).unwrap();
    let mut priors = default_priors(&ds, PriorPreset::Simulation);
    priors.b_sigma = 1e-8;
    priors.b_tau = 1e-8;
    let settings = FitSettings { iters: 2_000, burn_in: 1_000, thin: 1, seed: 2, target_accept: 0.44 };
    let chains = fit(&ds, KernelFamily::Matern52, &priors, &settings).unwrap();
    for (j, truth) in [3.0, -1.5].into_iter().enumerate() {
        let col = chains.column(|d| d.beta[j]);
        let h = hpd(&col, 0.95).unwrap();
        assert!(h.contains(truth) && h.width() < 1e-2, "beta{j} {h:?}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn draws_respect_support_and_are_reproducible(seed in any::<u64>(), fam in prop::sample::select(vec![
        KernelFamily::SquaredExponential, KernelFamily::Matern52, KernelFamily::Matern32,
    ])) {
        let ds = dataset(seed, 15, |s, _| (3.0 * s[0]).cos() + s[1]);
        let priors = default_priors(&ds, PriorPreset::Simulation);
        let settings = FitSettings { iters: 150, burn_in: 50, thin: 2, seed, target_accept: 0.44 };
        let a = fit(&ds, fam, &priors, &settings).unwrap();
        prop_assert_eq!(a.draws.len(), 50);
        for d in &a.draws {
            prop_assert!(d.phi >= priors.a_phi && d.phi <= priors.b_phi);
            prop_assert!(d.sigma2 > 0.0 && d.tau2 > 0.0);
            prop_assert!(log_joint(&ds, fam, &priors, d).unwrap().is_finite());
        }
        prop_assert_eq!(&a, &fit(&ds, fam, &priors, &settings).unwrap());
    }
}

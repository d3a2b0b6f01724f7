use curvwomb::differential::*;
use curvwomb::kernels::{KernelFamily, KernelSpec};
use nalgebra::{DMatrix, DVector, Vector2, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn family() -> impl Strategy<Value = KernelFamily> {
    prop::sample::select(vec![KernelFamily::SquaredExponential, KernelFamily::Matern52])
}

fn random_points(rng: &mut ChaCha8Rng, n: usize) -> Vec<[f64; 2]> {
    (0..n).map(|_| [rng.random::<f64>(), rng.random::<f64>()]).collect()
}

/// Conditional law from the full joint covariance by a dense Schur complement.
fn schur_oracle(
    spec: &KernelSpec,
    locs: &[[f64; 2]],
    values: &[f64],
    nugget: f64,
    s0: [f64; 2],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = locs.len();
    let mut joint = joint_covariance(spec, locs, &[s0]).unwrap();
    for i in 0..n {
        joint[(i, i)] += nugget;
    }
    let s11 = joint.view((0, 0), (n, n)).into_owned();
    let s21 = joint.view((n, 0), (6, n)).into_owned();
    let s22 = joint.view((n, n), (6, 6)).into_owned();
    let inv = s11.try_inverse().unwrap();
    let mean = &s21 * &inv * DVector::from_column_slice(values);
    let cov = s22 - &s21 * inv * s21.transpose();
    (mean, cov)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn conditional_law_matches_schur_complement(
        fam in family(),
        seed in any::<u64>(),
        n in 1usize..=10,
        phi in 0.5f64..3.0,
        s2 in 0.5f64..3.0,
        nugget in prop::sample::select(vec![0.0, 0.05, 0.5]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        // spread points so the noiseless Gram matrix stays well conditioned
        let locs: Vec<[f64; 2]> = (0..n)
            .map(|i| [i as f64 * 0.7 + 0.2 * rng.random::<f64>(), 2.0 * rng.random::<f64>()])
            .collect();
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let s0 = [rng.random_range(-0.5..3.0), rng.random_range(-0.5..2.5)];
        let spec = KernelSpec::new(fam, s2, phi).unwrap();
        let cond = Conditioner::new(spec, &locs, &values, &vec![0.0; n], nugget).unwrap();
        let law = cond.law_at(s0);
        let (mean, cov) = schur_oracle(&spec, &locs, &values, nugget, s0);
        let scale = point_covariance(&spec).unwrap().amax();
        for a in 0..6 {
            prop_assert!((law.mean[a] - mean[a]).abs() <= 1e-8 * scale.sqrt() * (1.0 + mean.amax()));
            for b in 0..6 {
                prop_assert!((law.cov[(a, b)] - cov[(a, b)]).abs() <= 1e-8 * scale,
                    "({a},{b}) {} vs {}", law.cov[(a, b)], cov[(a, b)]);
            }
        }
    }

    #[test]
    fn conditional_covariance_is_positive_semidefinite(
        fam in family(),
        seed in any::<u64>(),
        n in 1usize..=50,
        phi in 0.5f64..10.0,
        nugget in prop::sample::select(vec![0.0, 0.1, 1.0]),
    ) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let locs = random_points(&mut rng, n);
        let values: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let spec = KernelSpec::new(fam, 1.0, phi).unwrap();
        let cond = Conditioner::new(spec, &locs, &values, &vec![0.0; n], nugget).unwrap();
        for _ in 0..5 {
            let s0 = [rng.random::<f64>(), rng.random::<f64>()];
            let cov = cond.law_at(s0).cov;
            let eig = cov.symmetric_eigenvalues();
            let max = eig.amax().max(f64::MIN_POSITIVE);
            prop_assert!(eig.min() >= -1e-8 * max, "min {} max {}", eig.min(), max);
        }
    }

    #[test]
    fn principal_direction_maximizes_normal_curvature(
        a in -10.0f64..10.0, b in -10.0f64..10.0, c in -10.0f64..10.0,
    ) {
        let d = DifferentialDraw { location: [0.0, 0.0], grad: Vector2::zeros(), hess_vech: Vector3::new(a, b, c) };
        let s = curvature_summary(&d);
        prop_assert!((0.0..std::f64::consts::PI).contains(&s.theta_pc));
        let kn = |t: f64| {
            let (sn, cs) = t.sin_cos();
            (a * cs * cs + 2.0 * b * cs * sn + c * sn * sn).abs()
        };
        let best = (0..10_000)
            .map(|i| kn(std::f64::consts::PI * i as f64 / 10_000.0))
            .fold(0.0, f64::max);
        prop_assert!(kn(s.theta_pc) >= best - 1e-9 * (1.0 + best));
        prop_assert!((s.eigen1 + s.eigen2 - (a + c)).abs() < 1e-9 * (1.0 + a.abs() + c.abs()));
        prop_assert!((s.gaussian - s.eigen1 * s.eigen2).abs() < 1e-8 * (1.0 + s.gaussian.abs()));
    }
}

#[test]
fn sampled_moments_match_law() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let locs = random_points(&mut rng, 12);
    let values: Vec<f64> = (0..12).map(|_| rng.random_range(-1.0..1.0)).collect();
    let spec = KernelSpec::new(KernelFamily::SquaredExponential, 1.3, 2.0).unwrap();
    let law = Conditioner::new(spec, &locs, &values, &[0.0; 12], 0.2).unwrap().law_at([0.4, 0.6]);
    let n = 100_000;
    let draws: Vec<_> = (0..n).map(|_| law.sample(&mut rng)).collect();
    let mean = draws.iter().fold(Vector6::zeros(), |acc, d| acc + d) / n as f64;
    for a in 0..6 {
        let se = (law.cov[(a, a)] / n as f64).sqrt();
        assert!((mean[a] - law.mean[a]).abs() < 4.0 * se, "mean {a}");
        for b in 0..6 {
            let cov_ab = draws
                .iter()
                .map(|d| (d[a] - law.mean[a]) * (d[b] - law.mean[b]))
                .sum::<f64>()
                / n as f64;
            // Var of a product of normals: Σaa Σbb + Σab²
            let se = ((law.cov[(a, a)] * law.cov[(b, b)] + law.cov[(a, b)].powi(2)) / n as f64).sqrt();
            assert!((cov_ab - law.cov[(a, b)]).abs() < 4.0 * se, "cov ({a},{b})");
        }
    }
}

#[test]
fn curvature_needs_smooth_kernel() {
    let spec = KernelSpec::new(KernelFamily::Matern32, 1.0, 1.0).unwrap();
    assert!(point_covariance(&spec).is_err());
    assert!(joint_covariance(&spec, &[[0.0, 0.0]], &[[1.0, 1.0]]).is_err());
}

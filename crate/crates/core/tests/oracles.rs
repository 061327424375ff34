//! Independent reference implementations checked against the production paths.

use indde_core::gauss::{self, GaussianModel, Label, Ridge, TrainingMatrix};
use indde_core::signal::{compute_features, FeatureVector, NodeId};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Straightforward two-pass statistics, written from the definitions.
fn two_pass(d: &[f64]) -> [f64; 7] {
    let r = d.len() as f64;
    let mean = d.iter().sum::<f64>() / r;
    let ms = d.iter().map(|x| x * x).sum::<f64>() / r;
    let var = d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / r;
    let sd = var.sqrt();
    let skw = d.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / r / sd.powi(3);
    let krt = d.iter().map(|x| (x - mean).powi(4)).sum::<f64>() / r / var.powi(2);
    let peak = d.iter().fold(0.0_f64, |m, x| m.max(x.abs()));
    [mean, ms, var, sd, skw, krt, peak / ms.sqrt()]
}

/// Direct double loop over `E[x_u x_v] - E[x_u] E[x_v]`.
fn naive_fit(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>) {
    let m = rows[0].len();
    let t = rows.len() as f64;
    let e = |u: usize| rows.iter().map(|r| r[u]).sum::<f64>() / t;
    let omega: Vec<f64> = (0..m).map(e).collect();
    let mut sigma = vec![0.0; m * m];
    for u in 0..m {
        for v in 0..m {
            let exy = rows.iter().map(|r| r[u] * r[v]).sum::<f64>() / t;
            sigma[u * m + v] = exy - omega[u] * omega[v];
        }
    }
    (omega, sigma)
}

fn rel_err(a: f64, b: f64) -> f64 {
    if a == b {
        0.0
    } else {
        (a - b).abs() / a.abs().max(b.abs())
    }
}

fn random_window(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let r = rng.random_range(2..=4096);
    let offset: f64 = rng.random_range(-5.0..5.0);
    let scale: f64 = rng.random_range(0.01..10.0);
    (0..r)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            offset + scale * z
        })
        .collect()
}

#[test]
fn single_pass_matches_two_pass_on_random_windows() {
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_0001);
    let mut worst = 0.0_f64;
    for _ in 0..1000 {
        let w = random_window(&mut rng);
        let got = compute_features(&w).unwrap().to_array();
        let want = two_pass(&w);
        for (j, (g, e)) in got.iter().zip(&want).enumerate() {
            // kurtosis and crest factor are clamped at their lower bound of 1
            let e = if j >= 5 { e.max(1.0) } else { *e };
            let err = rel_err(*g, e);
            worst = worst.max(err);
            assert!(err <= 1e-9, "feature {j}: {g} vs {e} (r = {})", w.len());
        }
        let f = compute_features(&w).unwrap();
        assert!(f.kurtosis >= 1.0 && f.crest_factor >= 1.0);
        assert!(rel_err(f.std_dev * f.std_dev, f.variance) <= 4.0 * f64::EPSILON);
        assert!(f.mean_square >= f.mean * f.mean);
    }
    assert!(worst < 1e-9);
}

#[test]
fn ramp_oracle_agrees_with_frozen_values() {
    let want = two_pass(&[1.0, 2.0, 3.0, 4.0]);
    let frozen = [
        2.5,
        7.5,
        1.25,
        1.118_033_988_749_895,
        0.0,
        1.64,
        1.460_593_486_680_443,
    ];
    for (w, f) in want.iter().zip(&frozen) {
        assert!((w - f).abs() < 1e-12, "{w} vs {f}");
    }
}

fn window_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-100.0..100.0_f64, 2..512)
        .prop_filter("non-constant", |v| v.iter().any(|&x| x != v[0]))
}

proptest! {
    #[test]
    fn shift_property(w in window_strategy(), c in -50.0..50.0_f64) {
        let base = compute_features(&w).unwrap();
        let shifted: Vec<f64> = w.iter().map(|x| x + c).collect();
        // shifting can make a window numerically constant only if spread ~ 0
        let s = compute_features(&shifted).unwrap();
        let tol = 1e-9;
        prop_assert!((s.mean - (base.mean + c)).abs() <= tol * (base.mean.abs() + c.abs()).max(1.0));
        prop_assert!(rel_err(s.variance, base.variance) <= tol);
        prop_assert!(rel_err(s.std_dev, base.std_dev) <= tol);
        prop_assert!((s.skewness - base.skewness).abs() <= tol * base.skewness.abs().max(1.0));
        prop_assert!(rel_err(s.kurtosis, base.kurtosis) <= tol);
        let expect_ms = base.mean_square + 2.0 * c * base.mean + c * c;
        prop_assert!((s.mean_square - expect_ms).abs() <= tol * (base.mean_square + c * c).max(1.0));
    }

    #[test]
    fn scale_property(w in window_strategy(), s in 0.001..1000.0_f64) {
        let base = compute_features(&w).unwrap();
        let scaled: Vec<f64> = w.iter().map(|x| x * s).collect();
        let f = compute_features(&scaled).unwrap();
        let tol = 1e-9;
        prop_assert!((f.mean - s * base.mean).abs() <= tol * (s * base.std_dev).max(s * base.mean.abs()));
        prop_assert!(rel_err(f.mean_square, s * s * base.mean_square) <= tol);
        prop_assert!(rel_err(f.variance, s * s * base.variance) <= tol);
        prop_assert!(rel_err(f.std_dev, s * base.std_dev) <= tol);
        prop_assert!((f.skewness - base.skewness).abs() <= tol * base.skewness.abs().max(1.0));
        prop_assert!(rel_err(f.kurtosis, base.kurtosis) <= tol);
        prop_assert!(rel_err(f.crest_factor, base.crest_factor) <= tol);
    }

    #[test]
    fn feature_bounds(w in window_strategy()) {
        let f = compute_features(&w).unwrap();
        prop_assert!(f.variance >= 0.0);
        prop_assert_eq!(f.std_dev, f.variance.sqrt());
        prop_assert!(f.kurtosis >= 1.0);
        prop_assert!(f.crest_factor >= 1.0);
        prop_assert!(f.mean_square >= f.mean * f.mean);
    }
}

#[test]
fn fit_matches_double_loop_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(0xf17);
    for _ in 0..200 {
        let t = rng.random_range(8..=50);
        // correlated columns so that covariances are well away from zero
        let rows: Vec<Vec<f64>> = (0..t)
            .map(|_| {
                let base: f64 = rng.random_range(-1.0..1.0);
                (0..7)
                    .map(|j| base * (j as f64 + 1.0) * 0.3 + rng.random_range(-1.0..1.0))
                    .collect()
            })
            .collect();
        let x = TrainingMatrix::from_rows(7, &rows).unwrap();
        let model = gauss::fit(&x, Ridge::Fixed(0.0)).unwrap();
        let (omega, sigma) = naive_fit(&rows);
        for (a, b) in model.omega().iter().zip(&omega) {
            assert!(rel_err(*a, *b) <= 1e-10, "omega {a} vs {b}");
        }
        for (i, (a, b)) in model.sigma().iter().zip(&sigma).enumerate() {
            let (u, v) = (i / 7, i % 7);
            // scale by the diagonal when an entry happens to be close to zero
            let scale = (sigma[u * 7 + u] * sigma[v * 7 + v]).sqrt();
            let err = (a - b).abs() / a.abs().max(b.abs()).max(1e-3 * scale);
            assert!(err <= 1e-10, "sigma[{u}][{v}] {a} vs {b}");
        }
        let s = model.sigma();
        for u in 0..7 {
            for v in 0..7 {
                assert!((s[u * 7 + v] - s[v * 7 + u]).abs() <= 1e-12);
            }
        }
    }
}

/// 7-D generator with a fixed lower-triangular mixing matrix.
fn known_gaussian() -> ([f64; 7], [[f64; 7]; 7]) {
    let mean = [1.0, -2.0, 0.5, 3.0, 0.0, -1.0, 2.0];
    let mut a = [[0.0; 7]; 7];
    for (i, row) in a.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate().take(i + 1) {
            *v = if i == j {
                1.0
            } else {
                0.2 * ((i + j) % 3) as f64 - 0.1
            };
        }
    }
    (mean, a)
}

#[test]
fn monte_carlo_fit_recovers_generator() {
    let (mean, a) = known_gaussian();
    let mut rng = ChaCha8Rng::seed_from_u64(10_000);
    let rows: Vec<[f64; 7]> = (0..10_000)
        .map(|_| {
            let z: [f64; 7] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
            std::array::from_fn(|i| mean[i] + (0..7).map(|k| a[i][k] * z[k]).sum::<f64>())
        })
        .collect();
    let x = TrainingMatrix::from_rows(7, &rows).unwrap();
    let model = gauss::fit(&x, Ridge::default()).unwrap();
    for i in 0..7 {
        assert!((model.omega()[i] - mean[i]).abs() < 5e-2);
        for j in 0..7 {
            let cov: f64 = (0..7).map(|k| a[i][k] * a[j][k]).sum();
            assert!((model.sigma()[i * 7 + j] - cov).abs() < 1e-1);
        }
    }
}

fn wishart_like(rng: &mut ChaCha8Rng, m: usize) -> Vec<f64> {
    let b: Vec<f64> = (0..m * m).map(|_| rng.random_range(-1.0..1.0)).collect();
    let mut s = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            s[i * m + j] = (0..m).map(|k| b[i * m + k] * b[j * m + k]).sum::<f64>()
                + if i == j { 0.5 } else { 0.0 };
        }
    }
    s
}

fn random_model(rng: &mut ChaCha8Rng, m: usize) -> GaussianModel {
    let omega: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
    GaussianModel::from_parts(m, omega, wishart_like(rng, m), 0.0).unwrap()
}

#[test]
fn log_space_agrees_with_linear_space() {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for _ in 0..200 {
        let model = random_model(&mut rng, 7);
        let peak = model.log_density(model.omega()).unwrap();
        let eps_log = peak - rng.random_range(0.0..15.0);
        let model = model.with_epsilon_log(eps_log).unwrap();
        let eps = eps_log.exp();
        for _ in 0..20 {
            let x: Vec<f64> = model
                .omega()
                .iter()
                .map(|o| o + rng.random_range(-4.0..4.0))
                .collect();
            let ld = model.log_density(&x).unwrap();
            let p = ld.exp();
            if p == 0.0 || (ld - eps_log).abs() < 1e-9 {
                continue;
            }
            let linear = if p < eps {
                Label::Damaged
            } else {
                Label::Healthy
            };
            assert_eq!(model.label_for(ld).unwrap(), linear);
        }
    }
}

#[test]
fn density_is_maximal_at_mean_and_mahalanobis_nonnegative() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let model = random_model(&mut rng, 7);
    let peak = model.log_density(model.omega()).unwrap();
    assert_eq!(model.mahalanobis_sq(model.omega()).unwrap(), 0.0);
    for _ in 0..1000 {
        let x: Vec<f64> = (0..7).map(|_| rng.random_range(-10.0..10.0)).collect();
        assert!(model.mahalanobis_sq(&x).unwrap() > 0.0);
        assert!(model.log_density(&x).unwrap() <= peak);
    }
}

#[test]
fn ridge_continuity() {
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    for _ in 0..50 {
        let m = 7;
        let omega: Vec<f64> = (0..m).map(|_| rng.random_range(-1.0..1.0)).collect();
        let sigma = wishart_like(&mut rng, m);
        let trace: f64 = (0..m).map(|i| sigma[i * m + i]).sum();
        let lambda = 1e-10 * trace / m as f64;
        let exact = GaussianModel::from_parts(m, omega.clone(), sigma.clone(), 0.0).unwrap();
        let ridged = GaussianModel::from_parts(m, omega, sigma, lambda).unwrap();
        for _ in 0..20 {
            let x: Vec<f64> = (0..m).map(|_| rng.random_range(-3.0..3.0)).collect();
            let d = exact.log_density(&x).unwrap() - ridged.log_density(&x).unwrap();
            assert!(d.abs() < 1e-6);
        }
    }
}

#[test]
fn calibration_order_statistics_against_sort() {
    let mut rng = ChaCha8Rng::seed_from_u64(72);
    for _ in 0..100 {
        let densities: Vec<f64> = (0..72).map(|_| rng.random_range(-40.0..-5.0)).collect();
        let eps = gauss::threshold_from_log_densities(&densities, 0.99, 0.0).unwrap();
        let mut sorted = densities.clone();
        sorted.sort_by(f64::total_cmp);
        assert_eq!(eps, sorted[0]);
        assert!(densities.iter().filter(|&&d| d < eps).count() <= 1);

        let n = 299;
        let densities: Vec<f64> = (0..n).map(|_| rng.random_range(-40.0..-5.0)).collect();
        let eps = gauss::threshold_from_log_densities(&densities, 0.99, 0.0).unwrap();
        let below = densities.iter().filter(|&&d| d < eps).count();
        assert_eq!(below, 2);
        assert!((below as f64) / (n as f64) <= 0.01);
    }
}

#[test]
fn lowering_threshold_never_adds_damage() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    for _ in 0..100 {
        let model = random_model(&mut rng, 7);
        let peak = model.log_density(model.omega()).unwrap();
        let hi = peak - rng.random_range(0.0..20.0);
        let lo = hi - rng.random_range(0.0..20.0);
        let strict = model.clone().with_epsilon_log(hi).unwrap();
        let loose = model.with_epsilon_log(lo).unwrap();
        for _ in 0..50 {
            let x: Vec<f64> = (0..7).map(|_| rng.random_range(-6.0..6.0)).collect();
            let f = FeatureVector::from_array(x.try_into().unwrap(), 0);
            let a = strict.classify(NodeId(0), &f).unwrap().label;
            let b = loose.classify(NodeId(0), &f).unwrap().label;
            if a == Label::Healthy {
                assert_eq!(b, Label::Healthy);
            }
        }
    }
}

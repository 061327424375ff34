//! Multivariate Gaussian model of the healthy state.
//!
//! Densities are handled in log-space throughout: with seven features and
//! small covariances the linear density underflows `f64` easily, and the
//! threshold comparison `P < eps` is equivalent to `ln P < ln eps`. The
//! inverse and determinant of the covariance are never formed explicitly; both
//! come from one Cholesky factor of `Sigma + lambda * I`.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::PI;
use core::fmt;

use crate::linalg::Cholesky;
use crate::signal::{FeatureVector, NodeId, WindowSpec};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum GaussError {
    #[error("need at least {needed} training rows, got {rows}")]
    InsufficientSamples { rows: usize, needed: usize },
    #[error("expected {expected} values per row, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("input contains a non-finite value")]
    NonFiniteInput,
    #[error("covariance is not positive definite after ridge (pivot {pivot})")]
    SingularCovariance { pivot: usize },
    #[error("ridge must be finite and nonnegative, got {0}")]
    InvalidRidge(f64),
    #[error("validation set is empty")]
    EmptyValidation,
    #[error("quantile must lie in (0, 1], got {0}")]
    InvalidQuantile(f64),
    #[error("margin must be finite and nonnegative, got {0}")]
    InvalidMargin(f64),
    #[error("model has no calibrated threshold")]
    UncalibratedModel,
}

/// Health state of a window.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Label {
    Healthy,
    Damaged,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Healthy => "healthy",
            Label::Damaged => "damaged",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        match s.trim() {
            s if s.eq_ignore_ascii_case("healthy") || s.eq_ignore_ascii_case("h") || s == "0" => {
                Some(Label::Healthy)
            }
            s if s.eq_ignore_ascii_case("damaged") || s.eq_ignore_ascii_case("d") || s == "1" => {
                Some(Label::Damaged)
            }
            _ => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Row-major `t x m` matrix of feature vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingMatrix {
    dim: usize,
    data: Vec<f64>,
}

impl TrainingMatrix {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self, GaussError> {
        if dim == 0 || !data.len().is_multiple_of(dim) {
            return Err(GaussError::DimensionMismatch {
                expected: dim,
                got: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(GaussError::NonFiniteInput);
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows<R: AsRef<[f64]>>(dim: usize, rows: &[R]) -> Result<Self, GaussError> {
        let mut data = Vec::with_capacity(rows.len() * dim);
        for row in rows {
            let row = row.as_ref();
            if row.len() != dim {
                return Err(GaussError::DimensionMismatch {
                    expected: dim,
                    got: row.len(),
                });
            }
            data.extend_from_slice(row);
        }
        Self::new(dim, data)
    }

    pub fn from_features(features: &[FeatureVector]) -> Result<Self, GaussError> {
        let rows: Vec<_> = features.iter().map(FeatureVector::to_array).collect();
        Self::from_rows(crate::FEATURE_COUNT, &rows)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn rows(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter_rows(&self) -> core::slice::ChunksExact<'_, f64> {
        self.data.chunks_exact(self.dim)
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.iter_rows().map(|r| r[j]).collect()
    }
}

/// Ridge added to the covariance diagonal before factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// Absolute `lambda`.
    Fixed(f64),
    /// `lambda = factor * mean(diag(Sigma))`.
    Relative(f64),
}

impl Default for Ridge {
    fn default() -> Self {
        Ridge::Relative(1e-8)
    }
}

impl Ridge {
    fn resolve(self, sigma: &[f64], dim: usize) -> Result<f64, GaussError> {
        let lambda = match self {
            Ridge::Fixed(l) => l,
            Ridge::Relative(f) => {
                let trace: f64 = (0..dim).map(|i| sigma[i * dim + i]).sum();
                f * trace / dim as f64
            }
        };
        if lambda.is_finite() && lambda >= 0.0 {
            Ok(lambda)
        } else {
            Err(GaussError::InvalidRidge(lambda))
        }
    }
}

/// Default policy: threshold at the least validation log-density, minus `ln 10`.
pub const DEFAULT_QUANTILE: f64 = 1.0;
pub const DEFAULT_MARGIN_LOG: f64 = core::f64::consts::LN_10;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianModel {
    dim: usize,
    omega: Vec<f64>,
    sigma: Vec<f64>,
    ridge_lambda: f64,
    chol: Cholesky,
    log_det: f64,
    epsilon_log: Option<f64>,
    window: Option<WindowSpec>,
    fit_rows: usize,
    validation_rows: usize,
}

/// Fits mean and population covariance of `x`, then factors `Sigma + lambda I`.
pub fn fit(x: &TrainingMatrix, ridge: Ridge) -> Result<GaussianModel, GaussError> {
    let m = x.dim();
    let t = x.rows();
    if t < m + 1 {
        return Err(GaussError::InsufficientSamples {
            rows: t,
            needed: m + 1,
        });
    }
    let n = t as f64;
    let mut omega = vec![0.0; m];
    for row in x.iter_rows() {
        for (o, v) in omega.iter_mut().zip(row) {
            *o += v;
        }
    }
    omega.iter_mut().for_each(|o| *o /= n);

    // Centered accumulation; equal to E[x_u x_v] - E[x_u] E[x_v].
    let mut sigma = vec![0.0; m * m];
    let mut centered = vec![0.0; m];
    for row in x.iter_rows() {
        for ((c, v), o) in centered.iter_mut().zip(row).zip(&omega) {
            *c = v - o;
        }
        for u in 0..m {
            for v in 0..=u {
                sigma[u * m + v] += centered[u] * centered[v];
            }
        }
    }
    for u in 0..m {
        for v in 0..=u {
            let s = sigma[u * m + v] / n;
            sigma[u * m + v] = s;
            sigma[v * m + u] = s;
        }
    }
    let lambda = ridge.resolve(&sigma, m)?;
    let mut model = GaussianModel::from_parts(m, omega, sigma, lambda)?;
    model.fit_rows = t;
    Ok(model)
}

impl GaussianModel {
    /// Builds a model from explicit parameters and factors `sigma + lambda I`.
    pub fn from_parts(
        dim: usize,
        omega: Vec<f64>,
        sigma: Vec<f64>,
        ridge_lambda: f64,
    ) -> Result<Self, GaussError> {
        if omega.len() != dim {
            return Err(GaussError::DimensionMismatch {
                expected: dim,
                got: omega.len(),
            });
        }
        if sigma.len() != dim * dim {
            return Err(GaussError::DimensionMismatch {
                expected: dim * dim,
                got: sigma.len(),
            });
        }
        if omega.iter().chain(&sigma).any(|v| !v.is_finite()) {
            return Err(GaussError::NonFiniteInput);
        }
        if !(ridge_lambda.is_finite() && ridge_lambda >= 0.0) {
            return Err(GaussError::InvalidRidge(ridge_lambda));
        }
        let mut regularized = sigma.clone();
        for i in 0..dim {
            regularized[i * dim + i] += ridge_lambda;
        }
        let chol = Cholesky::factor(&regularized, dim)
            .map_err(|e| GaussError::SingularCovariance { pivot: e.pivot })?;
        let log_det = chol.log_det();
        Ok(Self {
            dim,
            omega,
            sigma,
            ridge_lambda,
            chol,
            log_det,
            epsilon_log: None,
            window: None,
            fit_rows: 0,
            validation_rows: 0,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn omega(&self) -> &[f64] {
        &self.omega
    }

    /// Row-major covariance without the ridge.
    pub fn sigma(&self) -> &[f64] {
        &self.sigma
    }

    pub fn sigma_diagonal(&self) -> Vec<f64> {
        (0..self.dim)
            .map(|i| self.sigma[i * self.dim + i])
            .collect()
    }

    pub fn ridge_lambda(&self) -> f64 {
        self.ridge_lambda
    }

    /// Row-major lower factor of `Sigma + lambda I`.
    pub fn chol_lower(&self) -> &[f64] {
        self.chol.lower()
    }

    /// `ln |Sigma + lambda I|`.
    pub fn log_det(&self) -> f64 {
        self.log_det
    }

    pub fn epsilon_log(&self) -> Option<f64> {
        self.epsilon_log
    }

    pub fn is_calibrated(&self) -> bool {
        self.epsilon_log.is_some()
    }

    pub fn window(&self) -> Option<&WindowSpec> {
        self.window.as_ref()
    }

    pub fn fit_rows(&self) -> usize {
        self.fit_rows
    }

    pub fn validation_rows(&self) -> usize {
        self.validation_rows
    }

    pub fn with_window(mut self, window: WindowSpec) -> Self {
        self.window = Some(window);
        self
    }

    pub fn with_row_counts(mut self, fit_rows: usize, validation_rows: usize) -> Self {
        self.fit_rows = fit_rows;
        self.validation_rows = validation_rows;
        self
    }

    /// Sets `ln eps` directly.
    pub fn with_epsilon_log(mut self, epsilon_log: f64) -> Result<Self, GaussError> {
        if !epsilon_log.is_finite() {
            return Err(GaussError::NonFiniteInput);
        }
        self.epsilon_log = Some(epsilon_log);
        Ok(self)
    }

    fn check_input(&self, x: &[f64]) -> Result<(), GaussError> {
        if x.len() != self.dim {
            return Err(GaussError::DimensionMismatch {
                expected: self.dim,
                got: x.len(),
            });
        }
        if x.iter().any(|v| !v.is_finite()) {
            return Err(GaussError::NonFiniteInput);
        }
        Ok(())
    }

    /// Squared Mahalanobis norm of `x - Omega` under `Sigma + lambda I`.
    pub fn mahalanobis_sq(&self, x: &[f64]) -> Result<f64, GaussError> {
        self.check_input(x)?;
        let diff: Vec<f64> = x.iter().zip(&self.omega).map(|(a, b)| a - b).collect();
        Ok(self.chol.quad_form_inv(&diff))
    }

    /// Log of the Gaussian density at `x`.
    pub fn log_density(&self, x: &[f64]) -> Result<f64, GaussError> {
        let q = self.mahalanobis_sq(x)?;
        Ok(self.log_density_from_mahalanobis(q))
    }

    pub fn log_density_from_mahalanobis(&self, q: f64) -> f64 {
        -0.5 * self.dim as f64 * libm::log(2.0 * PI) - 0.5 * self.log_det - 0.5 * q
    }

    pub fn log_density_features(&self, f: &FeatureVector) -> Result<f64, GaussError> {
        self.log_density(&f.to_array())
    }

    /// Sets `ln eps` from held-out healthy rows. See [`threshold_from_log_densities`].
    pub fn calibrate_threshold(
        mut self,
        validation: &TrainingMatrix,
        quantile: f64,
        margin_log: f64,
    ) -> Result<Self, GaussError> {
        let densities = validation
            .iter_rows()
            .map(|row| self.log_density(row))
            .collect::<Result<Vec<_>, _>>()?;
        let eps = threshold_from_log_densities(&densities, quantile, margin_log)?;
        self.epsilon_log = Some(eps);
        self.validation_rows = densities.len();
        Ok(self)
    }

    /// Label for a log-density under the calibrated threshold (strict `<`).
    pub fn label_for(&self, log_density: f64) -> Result<Label, GaussError> {
        let eps = self.epsilon_log.ok_or(GaussError::UncalibratedModel)?;
        Ok(if log_density < eps {
            Label::Damaged
        } else {
            Label::Healthy
        })
    }

    pub fn classify(&self, node_id: NodeId, x: &FeatureVector) -> Result<Verdict, GaussError> {
        let log_density = self.log_density_features(x)?;
        let label = self.label_for(log_density)?;
        Ok(Verdict {
            node_id,
            window_index: x.window_index,
            log_density,
            label,
            flags: VerdictFlags::NONE,
        })
    }
}

/// Order-statistic threshold in log-space.
///
/// With `n` validation densities sorted ascending, the threshold is the
/// `k`-th smallest, `k = max(1, floor((1 - quantile) * (n + 1)))`, minus
/// `margin_log`. For an exchangeable healthy window the probability of
/// falling strictly below the `k`-th order statistic is `k / (n + 1)`, which
/// never exceeds `1 - quantile`. `quantile = 1` selects the minimum.
pub fn threshold_from_log_densities(
    log_densities: &[f64],
    quantile: f64,
    margin_log: f64,
) -> Result<f64, GaussError> {
    if !(quantile > 0.0 && quantile <= 1.0) {
        return Err(GaussError::InvalidQuantile(quantile));
    }
    if !(margin_log.is_finite() && margin_log >= 0.0) {
        return Err(GaussError::InvalidMargin(margin_log));
    }
    if log_densities.is_empty() {
        return Err(GaussError::EmptyValidation);
    }
    if log_densities.iter().any(|v| v.is_nan()) {
        return Err(GaussError::NonFiniteInput);
    }
    let mut sorted = log_densities.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let k = threshold_rank(n, quantile);
    let eps = sorted[k - 1] - margin_log;
    if eps.is_finite() {
        Ok(eps)
    } else {
        Err(GaussError::NonFiniteInput)
    }
}

/// 1-based rank of the validation order statistic used as threshold.
pub fn threshold_rank(n: usize, quantile: f64) -> usize {
    let raw = libm::floor((1.0 - quantile) * (n as f64 + 1.0) + 1e-9);
    (raw as usize).clamp(1, n.max(1))
}

/// Bit flags attached to a verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct VerdictFlags(pub u8);

impl VerdictFlags {
    pub const NONE: Self = Self(0);
    /// The window had zero variance or zero energy; no density was evaluated.
    pub const DEGENERATE: Self = Self(1);

    pub fn contains(self, other: Self) -> bool {
        self.0 & other.0 == other.0
    }

    pub fn is_degenerate(self) -> bool {
        self.contains(Self::DEGENERATE)
    }
}

/// Health classification of one window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Verdict {
    pub node_id: NodeId,
    pub window_index: usize,
    pub log_density: f64,
    pub label: Label,
    pub flags: VerdictFlags,
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn identity(m: usize) -> Vec<f64> {
        let mut s = vec![0.0; m * m];
        for i in 0..m {
            s[i * m + i] = 1.0;
        }
        s
    }

    #[test]
    fn standard_normal_peak() {
        let model = GaussianModel::from_parts(1, vec![0.0], vec![1.0], 0.0).unwrap();
        let ld = model.log_density(&[0.0]).unwrap();
        assert!((ld - (-0.918_938_533_204_672_7)).abs() < 1e-12);
        assert!((libm::exp(ld) - 0.398_942_280_401_432_7).abs() < 1e-12);
    }

    #[test]
    fn seven_dim_identity_peak() {
        let model = GaussianModel::from_parts(7, vec![0.3; 7], identity(7), 0.0).unwrap();
        let ld = model.log_density(&[0.3; 7]).unwrap();
        assert!((ld - (-6.432_569_732_432_709)).abs() < 1e-12, "{ld}");
    }

    #[test]
    fn diagonal_hand_case() {
        let model =
            GaussianModel::from_parts(2, vec![0.0, 0.0], vec![2.0, 0.0, 0.0, 0.5], 0.0).unwrap();
        assert!((model.mahalanobis_sq(&[2.0, 1.0]).unwrap() - 4.0).abs() < 1e-15);
        assert!(model.log_det().abs() < 1e-15);
        let ld = model.log_density(&[2.0, 1.0]).unwrap();
        assert!((ld - (-(2.0 * PI).ln() - 2.0)).abs() < 1e-12);
        assert!((ld - (-3.837_877_066_409_345_3)).abs() < 1e-12);
    }

    #[test]
    fn toy_fit() {
        let x = TrainingMatrix::from_rows(2, &[[0.0, 0.0], [2.0, 0.0], [0.0, 2.0], [2.0, 2.0]])
            .unwrap();
        let model = fit(&x, Ridge::Fixed(0.0)).unwrap();
        assert_eq!(model.omega(), &[1.0, 1.0]);
        assert_eq!(model.sigma(), &[1.0, 0.0, 0.0, 1.0]);
        assert_eq!(model.fit_rows(), 4);
    }

    #[test]
    fn identical_rows_need_ridge() {
        let rows = vec![[1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0]; 10];
        let x = TrainingMatrix::from_rows(7, &rows).unwrap();
        let model = fit(&x, Ridge::Fixed(1e-6)).unwrap();
        assert!(model.sigma().iter().all(|&v| v == 0.0));
        assert!((model.log_det() - 7.0 * 1e-6_f64.ln()).abs() < 1e-9);
        assert!(matches!(
            fit(&x, Ridge::default()),
            Err(GaussError::SingularCovariance { .. })
        ));
        assert!(matches!(
            fit(&x, Ridge::Fixed(-1.0)),
            Err(GaussError::InvalidRidge(_))
        ));
    }

    #[test]
    fn too_few_rows() {
        let x = TrainingMatrix::from_rows(2, &[[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(
            fit(&x, Ridge::default()).unwrap_err(),
            GaussError::InsufficientSamples { rows: 2, needed: 3 }
        );
    }

    #[test]
    fn threshold_rules() {
        let d = [-3.0, -5.0, -4.0];
        assert_eq!(threshold_from_log_densities(&d, 1.0, 0.0).unwrap(), -5.0);
        let e = threshold_from_log_densities(&d, 1.0, core::f64::consts::LN_10).unwrap();
        assert!((e - (-7.302_585_092_994_046)).abs() < 1e-12);
        assert_eq!(
            threshold_from_log_densities(&[], 1.0, 0.0),
            Err(GaussError::EmptyValidation)
        );
        assert!(threshold_from_log_densities(&d, 0.0, 0.0).is_err());
        assert!(threshold_from_log_densities(&d, 1.5, 0.0).is_err());
        assert!(threshold_from_log_densities(&d, 1.0, -1.0).is_err());
    }

    #[test]
    fn threshold_rank_values() {
        assert_eq!(threshold_rank(72, 1.0), 1);
        assert_eq!(threshold_rank(72, 0.99), 1);
        assert_eq!(threshold_rank(299, 0.99), 3);
        assert_eq!(threshold_rank(9, 0.9), 1);
        assert_eq!(threshold_rank(19, 0.9), 2);
        assert_eq!(threshold_rank(3, 0.01), 3);
    }

    #[test]
    fn classify_boundaries() {
        let base = GaussianModel::from_parts(7, vec![0.0; 7], identity(7), 0.0).unwrap();
        let f = FeatureVector::default();
        assert_eq!(
            base.classify(NodeId(1), &f).unwrap_err(),
            GaussError::UncalibratedModel
        );

        let model = base.clone().with_epsilon_log(-10.0).unwrap();
        assert_eq!(model.classify(NodeId(1), &f).unwrap().label, Label::Healthy);

        let far = FeatureVector::from_array([10.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0], 3);
        let strict = base.clone().with_epsilon_log(-20.0).unwrap();
        let v = strict.classify(NodeId(1), &far).unwrap();
        assert!((v.log_density - (-56.432_569_732_432_71)).abs() < 1e-9);
        assert_eq!((v.label, v.window_index), (Label::Damaged, 3));

        let peak = base.log_density(&[0.0; 7]).unwrap();
        let tie = base.with_epsilon_log(peak).unwrap();
        assert_eq!(tie.classify(NodeId(1), &f).unwrap().label, Label::Healthy);
    }

    #[test]
    fn rejects_bad_inputs() {
        let model = GaussianModel::from_parts(2, vec![0.0; 2], identity(2), 0.0).unwrap();
        assert_eq!(
            model.log_density(&[f64::NAN, 0.0]),
            Err(GaussError::NonFiniteInput)
        );
        assert!(matches!(
            model.log_density(&[0.0]),
            Err(GaussError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn label_parsing() {
        assert_eq!(Label::parse("Healthy"), Some(Label::Healthy));
        assert_eq!(Label::parse(" damaged "), Some(Label::Damaged));
        assert_eq!(Label::parse("x"), None);
    }
}

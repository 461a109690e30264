//! Problem description: scenario dimensions, the rank-one signal model, the
//! noise covariance model, and the SNR parameterization that ties them
//! together.
//!
//! All types here are immutable after construction and safe to share across
//! Monte Carlo workers.

use crate::linalg::{
    self, cholesky_factor, hermitian_solve, hermitize, max_abs, CMatrix, CVector, C64,
    LinalgError,
};
use rand::Rng;
use std::fmt;
use thiserror::Error;

/// Problem dimensions and experiment knobs; the contract every other type
/// validates against.
///
/// * `channels` — number of receive channels (rows of the data matrices).
/// * `test_cols` — columns of the test data matrix.
/// * `row_dim` — dimension of the known signal row subspace.
/// * `training_cols` — columns of signal-free training data.
#[derive(Debug, Clone, PartialEq)]
pub struct Scenario {
    pub channels: usize,
    pub test_cols: usize,
    pub row_dim: usize,
    pub training_cols: usize,
    pub pfa_target: f64,
    pub snr_grid_db: Vec<f64>,
    pub seed: u64,
    pub trials_calibration: usize,
    pub trials_pd: usize,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ScenarioViolation {
    #[error("channel count O must be at least 2, got O={channels}")]
    ChannelCount { channels: usize },
    #[error("row-subspace dimension must satisfy 1 <= Q <= P, got Q={row_dim}, P={test_cols}")]
    RowDimRange { row_dim: usize, test_cols: usize },
    #[error("effective sample count too small: L+P-Q={effective} < O={channels} (L={training_cols}, P={test_cols}, Q={row_dim})")]
    EffectiveSamples {
        effective: i64,
        channels: usize,
        training_cols: usize,
        test_cols: usize,
        row_dim: usize,
    },
    #[error("total sample count too small: L+P={total} < O+1={min} (L={training_cols}, P={test_cols})")]
    TotalSamples {
        total: usize,
        min: usize,
        training_cols: usize,
        test_cols: usize,
    },
    #[error("pfa target must lie strictly inside (0,1), got {value}")]
    PfaRange { value: f64 },
    #[error("snr grid must be finite and strictly increasing, violated at index {index} (value {value})")]
    SnrGrid { index: usize, value: f64 },
    #[error("{field} must be positive")]
    TrialsZero { field: &'static str },
}

/// All scenario invariant violations at once, not just the first.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioErrors(pub Vec<ScenarioViolation>);

impl fmt::Display for ScenarioErrors {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let msgs: Vec<String> = self.0.iter().map(|v| v.to_string()).collect();
        write!(f, "{}", msgs.join("; "))
    }
}

impl std::error::Error for ScenarioErrors {}

impl Scenario {
    /// Checks every invariant and returns the full list of violations.
    pub fn validate(&self) -> Result<(), ScenarioErrors> {
        let mut v = Vec::new();
        if self.channels < 2 {
            v.push(ScenarioViolation::ChannelCount {
                channels: self.channels,
            });
        }
        if self.row_dim < 1 || self.row_dim > self.test_cols {
            v.push(ScenarioViolation::RowDimRange {
                row_dim: self.row_dim,
                test_cols: self.test_cols,
            });
        }
        // L + P - Q >= O, evaluated without unsigned underflow.
        if self.training_cols + self.test_cols < self.row_dim + self.channels {
            v.push(ScenarioViolation::EffectiveSamples {
                effective: self.training_cols as i64 + self.test_cols as i64
                    - self.row_dim as i64,
                channels: self.channels,
                training_cols: self.training_cols,
                test_cols: self.test_cols,
                row_dim: self.row_dim,
            });
        }
        if self.training_cols + self.test_cols < self.channels + 1 {
            v.push(ScenarioViolation::TotalSamples {
                total: self.training_cols + self.test_cols,
                min: self.channels + 1,
                training_cols: self.training_cols,
                test_cols: self.test_cols,
            });
        }
        if !(self.pfa_target > 0.0 && self.pfa_target < 1.0) {
            v.push(ScenarioViolation::PfaRange {
                value: self.pfa_target,
            });
        }
        for i in 0..self.snr_grid_db.len() {
            let bad_order = i > 0 && self.snr_grid_db[i] <= self.snr_grid_db[i - 1];
            if !self.snr_grid_db[i].is_finite() || bad_order {
                v.push(ScenarioViolation::SnrGrid {
                    index: i,
                    value: self.snr_grid_db[i],
                });
                break;
            }
        }
        if self.trials_calibration == 0 {
            v.push(ScenarioViolation::TrialsZero {
                field: "trials_calibration",
            });
        }
        if self.trials_pd == 0 {
            v.push(ScenarioViolation::TrialsZero { field: "trials_pd" });
        }
        if v.is_empty() {
            Ok(())
        } else {
            Err(ScenarioErrors(v))
        }
    }
}

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("invalid scenario: {0}")]
    Scenario(#[from] ScenarioErrors),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("steering vector must be nonzero")]
    ZeroSteering,
    #[error("row-weight vector must be nonzero")]
    ZeroRowWeights,
    #[error("snr must be finite and nonnegative, got {value}")]
    InvalidSnr { value: f64 },
    #[error("covariance decay parameter must satisfy |value| < 1, got {value}")]
    InvalidCovarianceParam { value: f64 },
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
}

/// Rank-one signal model `H = amplitude * steering * row_weights^H * row_basis`.
///
/// `steering` is the known spatial signature (length O), `row_basis` spans
/// the known row subspace (Q x P, full row rank), and `row_weights` holds
/// the subspace coordinates (length Q). The complex `amplitude` carries the
/// signal strength; detection performance depends on it only through the
/// SNR of [`snr_from_amplitude`].
#[derive(Debug, Clone, PartialEq)]
pub struct SignalModel {
    pub steering: CVector,
    pub row_basis: CMatrix,
    pub row_weights: CVector,
    pub amplitude: C64,
}

impl SignalModel {
    /// Checks dimensions against a scenario plus the structural invariants
    /// (nonzero steering vector, linearly independent basis rows).
    pub fn validate(&self, s: &Scenario) -> Result<(), ModelError> {
        if self.steering.len() != s.channels {
            return Err(ModelError::DimensionMismatch {
                context: format!(
                    "steering vector has length {}, expected O={}",
                    self.steering.len(),
                    s.channels
                ),
            });
        }
        if self.row_basis.nrows() != s.row_dim || self.row_basis.ncols() != s.test_cols {
            return Err(ModelError::DimensionMismatch {
                context: format!(
                    "row basis is {}x{}, expected QxP = {}x{}",
                    self.row_basis.nrows(),
                    self.row_basis.ncols(),
                    s.row_dim,
                    s.test_cols
                ),
            });
        }
        if self.row_weights.len() != s.row_dim {
            return Err(ModelError::DimensionMismatch {
                context: format!(
                    "row weights have length {}, expected Q={}",
                    self.row_weights.len(),
                    s.row_dim
                ),
            });
        }
        if self.steering.norm() == 0.0 {
            return Err(ModelError::ZeroSteering);
        }
        // Rows independent iff the Gram matrix is positive definite.
        let gram = hermitize(&(&self.row_basis * self.row_basis.adjoint()));
        cholesky_factor(&gram).map_err(|_| LinalgError::RankDeficient)?;
        Ok(())
    }

    /// The rank-one signal matrix `H` (O x P).
    pub fn signal_matrix(&self) -> CMatrix {
        let row_signature = self.row_weights.adjoint() * &self.row_basis; // 1 x P
        (&self.steering * row_signature).scale(1.0) * self.amplitude
    }
}

/// Deterministic default signal model: a unit-modulus steering vector at the
/// given spatial frequency, the first Q rows of the P-point unitary DFT
/// matrix as the row basis (orthonormal by construction), and uniform unit
/// row weights. The amplitude starts at zero; trial generation sets it from
/// the requested SNR.
pub fn default_signal_model(s: &Scenario, spatial_freq: f64) -> SignalModel {
    let o = s.channels;
    let p = s.test_cols;
    let q = s.row_dim;
    let steering = CVector::from_fn(o, |k, _| {
        let phase = 2.0 * std::f64::consts::PI * spatial_freq * (k as f64);
        C64::new(phase.cos(), phase.sin())
    });
    let row_basis = CMatrix::from_fn(q, p, |i, j| {
        let phase = -2.0 * std::f64::consts::PI * (i as f64) * (j as f64) / (p as f64);
        C64::new(phase.cos(), phase.sin()) / (p as f64).sqrt()
    });
    let row_weights = CVector::from_element(q, C64::new(1.0 / (q as f64).sqrt(), 0.0));
    SignalModel {
        steering,
        row_basis,
        row_weights,
        amplitude: C64::new(0.0, 0.0),
    }
}

/// Hermitian positive-definite noise covariance together with its lower
/// Cholesky factor, kept so colored samples can be drawn without
/// refactoring.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseModel {
    pub covariance: CMatrix,
    pub factor: CMatrix,
}

impl NoiseModel {
    pub fn new(covariance: CMatrix) -> Result<Self, ModelError> {
        let asym = max_abs(&(&covariance - covariance.adjoint()));
        if asym > linalg::HERMITIAN_TOL * max_abs(&covariance).max(1.0) {
            return Err(LinalgError::NotHermitian {
                max_asym: asym,
                tol: linalg::HERMITIAN_TOL,
            }
            .into());
        }
        let factor = cholesky_factor(&covariance)?;
        Ok(NoiseModel { covariance, factor })
    }

    /// Exponentially decaying covariance `R(k1,k2) = decay^|k1-k2|`, the
    /// standard simulation model for correlated channel noise.
    pub fn exponential(channels: usize, decay: f64) -> Result<Self, ModelError> {
        if !decay.is_finite() || decay.abs() >= 1.0 {
            return Err(ModelError::InvalidCovarianceParam { value: decay });
        }
        let r = CMatrix::from_fn(channels, channels, |i, j| {
            C64::new(decay.powi((i as i64 - j as i64).unsigned_abs() as i32), 0.0)
        });
        NoiseModel::new(r)
    }

    pub fn identity(channels: usize) -> Self {
        NoiseModel {
            covariance: CMatrix::identity(channels, channels),
            factor: CMatrix::identity(channels, channels),
        }
    }

    /// Draws `cols` columns of `CN(0, R)` noise.
    pub fn sample<R: Rng + ?Sized>(&self, cols: usize, rng: &mut R) -> CMatrix {
        linalg::sample_colored_gaussian(&self.factor, cols, rng)
    }
}

/// One realization of test data (O x P) and training data (O x L).
#[derive(Debug, Clone, PartialEq)]
pub struct TrialData {
    pub test: CMatrix,
    pub training: CMatrix,
}

impl TrialData {
    pub fn dims_match(&self, s: &Scenario) -> bool {
        self.test.nrows() == s.channels
            && self.test.ncols() == s.test_cols
            && self.training.nrows() == s.channels
            && self.training.ncols() == s.training_cols
    }
}

/// Quadratic form `w^H (C C^H) w . a^H R^{-1} a` shared by the SNR maps.
fn snr_scale(m: &SignalModel, n: &NoiseModel) -> Result<f64, ModelError> {
    let gram = hermitize(&(&m.row_basis * m.row_basis.adjoint()));
    let weight_energy = (m.row_weights.adjoint() * &gram * &m.row_weights)[(0, 0)].re;
    if !(weight_energy > 0.0) {
        return Err(ModelError::ZeroRowWeights);
    }
    let a_mat = CMatrix::from_fn(m.steering.len(), 1, |i, _| m.steering[i]);
    let solved = hermitian_solve(&n.covariance, &a_mat)?;
    let whitened_energy = (a_mat.adjoint() * solved)[(0, 0)].re;
    if !(whitened_energy > 0.0) {
        return Err(ModelError::ZeroSteering);
    }
    Ok(weight_energy * whitened_energy)
}

/// Amplitude that realizes a given linear SNR:
/// `|amplitude|^2 = snr / (w^H C C^H w . a^H R^{-1} a)`, with the phase
/// fixed to zero (performance depends on the modulus only).
pub fn snr_to_amplitude(snr: f64, m: &SignalModel, n: &NoiseModel) -> Result<C64, ModelError> {
    if !snr.is_finite() || snr < 0.0 {
        return Err(ModelError::InvalidSnr { value: snr });
    }
    let scale = snr_scale(m, n)?;
    Ok(C64::new((snr / scale).sqrt(), 0.0))
}

/// Linear SNR realized by a given amplitude (inverse of
/// [`snr_to_amplitude`]).
pub fn snr_from_amplitude(
    amplitude: C64,
    m: &SignalModel,
    n: &NoiseModel,
) -> Result<f64, ModelError> {
    Ok(amplitude.norm_sqr() * snr_scale(m, n)?)
}

/// `10^(db/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn fig1_scenario() -> Scenario {
        Scenario {
            channels: 12,
            test_cols: 6,
            row_dim: 3,
            training_cols: 11,
            pfa_target: 1e-3,
            snr_grid_db: (0..=12).map(|i| 2.0 * i as f64).collect(),
            seed: 1,
            trials_calibration: 100_000,
            trials_pd: 10_000,
        }
    }

    #[test]
    fn published_dimensions_are_valid() {
        assert!(fig1_scenario().validate().is_ok());
    }

    #[test]
    fn undersized_training_is_rejected() {
        let s = Scenario {
            test_cols: 3,
            training_cols: 8,
            ..fig1_scenario()
        };
        let errs = s.validate().unwrap_err();
        assert!(errs
            .0
            .iter()
            .any(|v| matches!(v, ScenarioViolation::EffectiveSamples { effective: 8, .. })));
    }

    #[test]
    fn single_channel_is_rejected() {
        let s = Scenario {
            channels: 1,
            test_cols: 2,
            row_dim: 1,
            training_cols: 4,
            ..fig1_scenario()
        };
        let errs = s.validate().unwrap_err();
        assert!(errs
            .0
            .iter()
            .any(|v| matches!(v, ScenarioViolation::ChannelCount { channels: 1 })));
    }

    #[test]
    fn all_violations_reported_together() {
        let s = Scenario {
            channels: 1,
            test_cols: 2,
            row_dim: 3,
            training_cols: 0,
            pfa_target: 2.0,
            snr_grid_db: vec![0.0, 0.0],
            seed: 0,
            trials_calibration: 0,
            trials_pd: 1,
        };
        let errs = s.validate().unwrap_err();
        assert!(errs.0.len() >= 5, "got {} violations: {errs}", errs.0.len());
    }

    #[test]
    fn default_model_zero_frequency_gives_all_ones_steering() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.0);
        for k in 0..s.channels {
            assert!((m.steering[k] - C64::new(1.0, 0.0)).norm() < 1e-15);
        }
    }

    #[test]
    fn default_model_rows_orthonormal() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.2);
        let gram = &m.row_basis * m.row_basis.adjoint();
        assert!(max_abs(&(&gram - CMatrix::identity(s.row_dim, s.row_dim))) < 1e-12);
        assert!(m.validate(&s).is_ok());
    }

    #[test]
    fn noise_factor_reproduces_covariance_up_to_64_channels() {
        for &o in &[2usize, 12, 33, 64] {
            let n = NoiseModel::exponential(o, 0.95).unwrap();
            let resid = &n.factor * n.factor.adjoint() - &n.covariance;
            assert!(max_abs(&resid) <= 1e-12, "O={o}: {:.3e}", max_abs(&resid));
        }
    }

    #[test]
    fn exponential_covariance_matches_definition() {
        let n = NoiseModel::exponential(4, 0.95).unwrap();
        assert!((n.covariance[(0, 3)].re - 0.95f64.powi(3)).abs() < 1e-15);
        assert!((n.covariance[(2, 2)].re - 1.0).abs() < 1e-15);
    }

    #[test]
    fn zero_snr_gives_zero_amplitude() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1);
        let n = NoiseModel::exponential(s.channels, 0.95).unwrap();
        let theta = snr_to_amplitude(0.0, &m, &n).unwrap();
        assert_eq!(theta, C64::new(0.0, 0.0));
    }

    #[test]
    fn unit_amplitude_case_by_hand() {
        // R = I, all-ones steering (a^H R^{-1} a = O), orthonormal basis
        // rows and unit-norm weights (w^H C C^H w = 1): snr = O gives
        // |amplitude| = 1.
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.0);
        let n = NoiseModel::identity(s.channels);
        let theta = snr_to_amplitude(s.channels as f64, &m, &n).unwrap();
        assert!((theta.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn snr_round_trip() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.13);
        let n = NoiseModel::exponential(s.channels, 0.95).unwrap();
        for &snr in &[1e-6, 0.5, 1.0, 63.0, 1e4] {
            let theta = snr_to_amplitude(snr, &m, &n).unwrap();
            let back = snr_from_amplitude(theta, &m, &n).unwrap();
            assert!(
                ((back - snr) / snr).abs() < 1e-12,
                "snr {snr}: round trip {back}"
            );
        }
    }

    #[test]
    fn zero_steering_rejected() {
        let s = fig1_scenario();
        let mut m = default_signal_model(&s, 0.1);
        m.steering = CVector::zeros(s.channels);
        let n = NoiseModel::identity(s.channels);
        assert!(matches!(
            snr_to_amplitude(1.0, &m, &n),
            Err(ModelError::ZeroSteering)
        ));
        assert!(matches!(m.validate(&s), Err(ModelError::ZeroSteering)));
    }

    #[test]
    fn zero_row_weights_rejected() {
        let s = fig1_scenario();
        let mut m = default_signal_model(&s, 0.1);
        m.row_weights = CVector::zeros(s.row_dim);
        let n = NoiseModel::identity(s.channels);
        assert!(matches!(
            snr_to_amplitude(1.0, &m, &n),
            Err(ModelError::ZeroRowWeights)
        ));
    }

    #[test]
    fn signal_matrix_is_rank_one() {
        let s = fig1_scenario();
        let mut m = default_signal_model(&s, 0.1);
        m.amplitude = C64::new(2.0, 1.0);
        let h = m.signal_matrix();
        let svals = h.svd(false, false).singular_values;
        assert!(svals[0] > 0.0);
        for k in 1..svals.len() {
            assert!(svals[k] < 1e-12 * svals[0]);
        }
    }
}

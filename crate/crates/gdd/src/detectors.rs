//! The two detection statistics, computed in their reduced forms.
//!
//! Both statistics are built from the same three ingredients: the training
//! sample covariance `S = Z_L Z_L^H`, the augmented sample covariance
//! `S_plus = S + Z P_perp Z^H` (training energy plus the test-data energy
//! outside the signal row space), and the reduced test data
//! `Z_star = Z C^H (C C^H)^{-1/2}` (O x Q).
//!
//! The production path factors `S_plus` once per trial; the augmented matrix
//! stays invertible whenever `L + P - Q >= O`, which is what lets the
//! detectors run with fewer training snapshots than channels. Cost per trial
//! is dominated by building `S_plus` (O(O^2 P + O P^2)) and factoring it
//! (O(O^3)).

use crate::linalg::{
    cholesky_factor, hermitize, projector, solve_with_factor, CMatrix, LinalgError,
};
use crate::model::{SignalModel, TrialData};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DetectorError {
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },
    #[error("augmented sample covariance is singular (pivot {pivot}); check L+P-Q >= O")]
    SingularAugmented { pivot: usize },
    #[error("raw sample covariance requires L >= O, got L={training_cols}, O={channels}")]
    InsufficientTraining { training_cols: usize, channels: usize },
    #[error("inner Q x Q system is singular (pivot {pivot})")]
    SingularInner { pivot: usize },
    #[error("statistic must lie in [0,1), got {value}")]
    StatisticOutOfRange { value: f64 },
}

/// Which sample covariance normalizes the matched-filter statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ScmMode {
    /// `S_plus` (default): defined whenever `L + P - Q >= O` and the
    /// variant whose distribution theory this crate implements.
    Augmented,
    /// Plain training-only `S`; requires `L >= O`.
    Raw,
}

/// Per-trial matrices shared by both statistics.
#[derive(Debug, Clone)]
pub struct DetectorWorkspace {
    /// Training sample covariance `S` (O x O, Hermitian PSD).
    pub scm: CMatrix,
    /// Augmented sample covariance `S_plus` (O x O, Hermitian PD).
    pub scm_aug: CMatrix,
    /// Reduced test data `Z_star` (O x Q).
    pub test_reduced: CMatrix,
    aug_factor: CMatrix,
}

/// All statistics for one trial.
///
/// `glrt_ratio` lies in [0,1); `glrt_odds = glrt_ratio / (1 - glrt_ratio)`
/// is its strictly increasing odds transform, the form whose null
/// distribution has the closed-form CDF. `matched_filter` is the
/// (augmented-SCM) adaptive matched-filter statistic, nonnegative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorOutput {
    pub t_glrgdd: f64,
    pub t_glrgdd_prime: f64,
    pub t_amgdd: f64,
}

fn check_dims(d: &TrialData, m: &SignalModel) -> Result<(usize, usize, usize, usize), DetectorError> {
    let o = d.test.nrows();
    let p = d.test.ncols();
    let q = m.row_basis.nrows();
    let l = d.training.ncols();
    if d.training.nrows() != o {
        return Err(DetectorError::DimensionMismatch {
            context: format!(
                "test data has {} rows but training data has {}",
                o,
                d.training.nrows()
            ),
        });
    }
    if m.row_basis.ncols() != p {
        return Err(DetectorError::DimensionMismatch {
            context: format!(
                "row basis has {} columns but test data has {}",
                m.row_basis.ncols(),
                p
            ),
        });
    }
    if m.steering.len() != o {
        return Err(DetectorError::DimensionMismatch {
            context: format!(
                "steering vector has length {} but data has {} rows",
                m.steering.len(),
                o
            ),
        });
    }
    if l + p < q + o {
        return Err(DetectorError::DimensionMismatch {
            context: format!("L+P-Q >= O required, got L={l}, P={p}, Q={q}, O={o}"),
        });
    }
    Ok((o, p, q, l))
}

/// Builds `S`, `S_plus` and `Z_star` for one trial and verifies that the
/// augmented covariance is positive definite.
pub fn build_workspace(d: &TrialData, m: &SignalModel) -> Result<DetectorWorkspace, DetectorError> {
    check_dims(d, m)?;
    let scm = hermitize(&(&d.training * d.training.adjoint()));
    let (_, perp) = projector(&m.row_basis)?;
    let scm_aug = hermitize(&(&scm + &d.test * perp * d.test.adjoint()));
    let w = crate::linalg::gram_inv_sqrt(&m.row_basis)?;
    let test_reduced = &d.test * m.row_basis.adjoint() * w;
    let aug_factor = cholesky_factor(&scm_aug).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot } => DetectorError::SingularAugmented { pivot },
        other => other.into(),
    })?;
    Ok(DetectorWorkspace {
        scm,
        scm_aug,
        test_reduced,
        aug_factor,
    })
}

fn steering_column(m: &SignalModel) -> CMatrix {
    CMatrix::from_fn(m.steering.len(), 1, |i, _| m.steering[i])
}

/// Core of the GLRT statistic given the factored SCM: returns
/// `(numerator, denominator)` of the energy ratio
/// `a^H M^{-1} Z* (I + Z*^H M^{-1} Z*)^{-1} Z*^H M^{-1} a  /  a^H M^{-1} a`.
fn glrt_parts(
    factor: &CMatrix,
    z_star: &CMatrix,
    a: &CMatrix,
) -> Result<(f64, f64), DetectorError> {
    let u = solve_with_factor(factor, a); // M^{-1} a
    let den = (a.adjoint() * &u)[(0, 0)].re;
    let v = z_star.adjoint() * &u; // Q x 1
    let w = solve_with_factor(factor, z_star); // M^{-1} Z*
    let q = z_star.ncols();
    let inner = hermitize(&(CMatrix::identity(q, q) + z_star.adjoint() * w));
    let inner_factor = cholesky_factor(&inner).map_err(|e| match e {
        LinalgError::NotPositiveDefinite { pivot } => DetectorError::SingularInner { pivot },
        other => other.into(),
    })?;
    let x = solve_with_factor(&inner_factor, &v);
    let num = (v.adjoint() * x)[(0, 0)].re;
    Ok((num, den))
}

fn glrgdd_from_workspace(
    ws: &DetectorWorkspace,
    m: &SignalModel,
) -> Result<(f64, f64), DetectorError> {
    let a = steering_column(m);
    let (num, den) = glrt_parts(&ws.aug_factor, &ws.test_reduced, &a)?;
    let t = num / den;
    if !t.is_finite() || !(0.0..1.0).contains(&t) {
        return Err(DetectorError::StatisticOutOfRange { value: t });
    }
    // Odds form computed from the same parts; den - num > 0 since t < 1.
    Ok((t, num / (den - num)))
}

fn amgdd_from_workspace(
    ws: &DetectorWorkspace,
    m: &SignalModel,
    mode: ScmMode,
) -> Result<f64, DetectorError> {
    let a = steering_column(m);
    let factor;
    let factor_ref = match mode {
        ScmMode::Augmented => &ws.aug_factor,
        ScmMode::Raw => {
            factor = cholesky_factor(&ws.scm).map_err(|e| match e {
                LinalgError::NotPositiveDefinite { pivot } => {
                    DetectorError::SingularAugmented { pivot }
                }
                other => other.into(),
            })?;
            &factor
        }
    };
    let u = solve_with_factor(factor_ref, &a);
    let den = (a.adjoint() * &u)[(0, 0)].re;
    let v = ws.test_reduced.adjoint() * &u;
    let num: f64 = v.iter().map(|z| z.norm_sqr()).sum();
    let t = num / den;
    if !t.is_finite() || t < 0.0 {
        return Err(DetectorError::StatisticOutOfRange { value: t });
    }
    Ok(t)
}

/// GLRT statistic for one trial, in [0,1).
pub fn glrgdd(d: &TrialData, m: &SignalModel) -> Result<f64, DetectorError> {
    let ws = build_workspace(d, m)?;
    Ok(glrgdd_from_workspace(&ws, m)?.0)
}

/// Odds transform `t / (1 - t)`, strictly increasing on [0,1).
pub fn glrgdd_prime(t: f64) -> Result<f64, DetectorError> {
    if !t.is_finite() || !(0.0..1.0).contains(&t) {
        return Err(DetectorError::StatisticOutOfRange { value: t });
    }
    Ok(t / (1.0 - t))
}

/// Adaptive matched-filter statistic for one trial, nonnegative.
///
/// `mode` picks the normalizing sample covariance; `Raw` requires at least
/// as many training columns as channels.
pub fn amgdd(d: &TrialData, m: &SignalModel, mode: ScmMode) -> Result<f64, DetectorError> {
    if mode == ScmMode::Raw && d.training.ncols() < d.test.nrows() {
        return Err(DetectorError::InsufficientTraining {
            training_cols: d.training.ncols(),
            channels: d.test.nrows(),
        });
    }
    let ws = build_workspace(d, m)?;
    amgdd_from_workspace(&ws, m, mode)
}

/// Both statistics from one shared workspace and factorization. This is the
/// path the Monte Carlo engine uses: the matched-filter statistic reuses the
/// GLRT's solves, so evaluating the pair costs barely more than one.
pub fn evaluate(d: &TrialData, m: &SignalModel) -> Result<DetectorOutput, DetectorError> {
    let ws = build_workspace(d, m)?;
    let (t, t_prime) = glrgdd_from_workspace(&ws, m)?;
    let t_amgdd = amgdd_from_workspace(&ws, m, ScmMode::Augmented)?;
    Ok(DetectorOutput {
        t_glrgdd: t,
        t_glrgdd_prime: t_prime,
        t_amgdd,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{max_abs, sample_standard_complex, CVector, C64};
    use crate::model::{default_signal_model, NoiseModel, Scenario, SignalModel};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn fig1_scenario() -> Scenario {
        Scenario {
            channels: 12,
            test_cols: 6,
            row_dim: 3,
            training_cols: 11,
            pfa_target: 1e-3,
            snr_grid_db: vec![0.0, 10.0],
            seed: 1,
            trials_calibration: 1000,
            trials_pd: 1000,
        }
    }

    fn noise_trial(s: &Scenario, rng: &mut ChaCha8Rng) -> TrialData {
        let n = NoiseModel::exponential(s.channels, 0.95).unwrap();
        TrialData {
            test: n.sample(s.test_cols, rng),
            training: n.sample(s.training_cols, rng),
        }
    }

    #[test]
    fn zero_test_data_gives_zero_statistics() {
        // With Z = 0 the augmented SCM collapses to S, which then must be
        // invertible on its own, so use a training record longer than O.
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1);
        let n = NoiseModel::exponential(s.channels, 0.95).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let d = TrialData {
            test: CMatrix::zeros(s.channels, s.test_cols),
            training: n.sample(20, &mut rng),
        };
        let ws = build_workspace(&d, &m).unwrap();
        assert!(max_abs(&(&ws.scm_aug - &ws.scm)) < 1e-12, "S_plus == S");
        assert_eq!(glrgdd(&d, &m).unwrap(), 0.0);
        assert_eq!(amgdd(&d, &m, ScmMode::Augmented).unwrap(), 0.0);
    }

    #[test]
    fn orthonormal_rows_make_reduction_a_plain_projection() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1); // DFT rows: C C^H = I
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let d = noise_trial(&s, &mut rng);
        let ws = build_workspace(&d, &m).unwrap();
        let plain = &d.test * m.row_basis.adjoint();
        assert!(max_abs(&(&ws.test_reduced - plain)) < 1e-10);
    }

    #[test]
    fn reduced_data_carries_projected_energy() {
        let s = fig1_scenario();
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        for _ in 0..50 {
            let mut m = default_signal_model(&s, 0.1);
            m.row_basis = sample_standard_complex(s.row_dim, s.test_cols, &mut rng);
            let d = noise_trial(&s, &mut rng);
            let ws = build_workspace(&d, &m).unwrap();
            let (proj, _) = crate::linalg::projector(&m.row_basis).unwrap();
            let lhs = &d.test * proj * d.test.adjoint();
            let rhs = &ws.test_reduced * ws.test_reduced.adjoint();
            assert!(max_abs(&(&lhs - &rhs)) < 1e-10);
        }
    }

    #[test]
    fn statistic_stays_in_unit_interval() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(14);
        for _ in 0..2000 {
            let d = noise_trial(&s, &mut rng);
            let out = evaluate(&d, &m).unwrap();
            assert!((0.0..1.0).contains(&out.t_glrgdd));
            assert!(out.t_amgdd >= 0.0);
            let odds = out.t_glrgdd / (1.0 - out.t_glrgdd);
            let rel = (out.t_glrgdd_prime - odds).abs() / odds.max(1e-300);
            assert!(rel < 1e-9);
        }
    }

    #[test]
    fn odds_transform_reference_points() {
        assert_eq!(glrgdd_prime(0.0).unwrap(), 0.0);
        assert!((glrgdd_prime(0.5).unwrap() - 1.0).abs() < 1e-15);
        assert!((glrgdd_prime(0.9).unwrap() - 9.0).abs() < 1e-12);
        assert!(glrgdd_prime(1.0).is_err());
        assert!(glrgdd_prime(-0.1).is_err());
        assert!(glrgdd_prime(f64::NAN).is_err());
    }

    #[test]
    fn glrgdd_scale_invariant() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..50 {
            let d = noise_trial(&s, &mut rng);
            let scaled = TrialData {
                test: d.test.scale(7.5),
                training: d.training.scale(7.5),
            };
            let t1 = glrgdd(&d, &m).unwrap();
            let t2 = glrgdd(&scaled, &m).unwrap();
            assert!((t1 - t2).abs() / t1.max(1e-300) < 1e-9);
        }
    }

    #[test]
    fn strong_signal_saturates_glrt() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1);
        let n = NoiseModel::exponential(s.channels, 0.95).unwrap();
        let theta = crate::model::snr_to_amplitude(1e6, &m, &n).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(16);
        let mut signal_model = m.clone();
        signal_model.amplitude = theta;
        for _ in 0..20 {
            let mut d = noise_trial(&s, &mut rng);
            d.test += signal_model.signal_matrix();
            let t = glrgdd(&d, &m).unwrap();
            assert!(t > 0.99, "t = {t}");
        }
    }

    #[test]
    fn scalar_matched_filter_reduces_by_hand() {
        // O = 1, P = Q = 1, unit steering, raw SCM: the statistic collapses
        // to |z|^2 / sum_l |z_l|^2.
        let z = C64::new(1.5, -0.5);
        let train = [C64::new(0.5, 0.2), C64::new(-1.0, 0.3), C64::new(0.1, 1.1)];
        let d = TrialData {
            test: CMatrix::from_element(1, 1, z),
            training: CMatrix::from_iterator(1, 3, train.iter().copied()),
        };
        let m = SignalModel {
            steering: CVector::from_element(1, C64::new(1.0, 0.0)),
            row_basis: CMatrix::from_element(1, 1, C64::new(1.0, 0.0)),
            row_weights: CVector::from_element(1, C64::new(1.0, 0.0)),
            amplitude: C64::new(0.0, 0.0),
        };
        let t = amgdd(&d, &m, ScmMode::Raw).unwrap();
        let expect = z.norm_sqr() / train.iter().map(|c| c.norm_sqr()).sum::<f64>();
        assert!((t - expect).abs() < 1e-12);
    }

    #[test]
    fn raw_mode_needs_enough_training() {
        let s = fig1_scenario(); // L = 11 < O = 12
        let m = default_signal_model(&s, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let d = noise_trial(&s, &mut rng);
        assert!(matches!(
            amgdd(&d, &m, ScmMode::Raw),
            Err(DetectorError::InsufficientTraining { .. })
        ));
        // Augmented mode works at the same dimensions.
        assert!(amgdd(&d, &m, ScmMode::Augmented).is_ok());
    }

    #[test]
    fn dimension_mismatch_reported() {
        let s = fig1_scenario();
        let m = default_signal_model(&s, 0.1);
        let mut rng = ChaCha8Rng::seed_from_u64(18);
        let mut d = noise_trial(&s, &mut rng);
        d.training = d.training.clone().remove_rows(0, 1);
        assert!(matches!(
            build_workspace(&d, &m),
            Err(DetectorError::DimensionMismatch { .. })
        ));
    }
}

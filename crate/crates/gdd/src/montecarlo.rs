//! Seeded, batch-parallel Monte Carlo engine: trial generation, empirical
//! threshold calibration, detection-probability estimation, and full
//! theory-vs-simulation sweeps.
//!
//! Reproducibility scheme: work is cut into fixed-size batches and batch `b`
//! of a given purpose draws from ChaCha stream `salt << 32 | b` of the
//! scenario seed. Results are merged as counts or in batch order, so the
//! outcome is bit-identical for any worker count.

use crate::analytic::{self, AnalyticError, DistParams};
use crate::detectors::{self, DetectorError};
use crate::linalg::CMatrix;
use crate::model::{
    db_to_linear, snr_to_amplitude, ModelError, NoiseModel, Scenario, SignalModel, TrialData,
};
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use std::fmt;
use thiserror::Error;

/// Trials per RNG stream; fixed so that results do not depend on the
/// number of worker threads.
const BATCH_SIZE: usize = 512;

/// Stream salts separating the random draws of unrelated estimation tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    Calibration = 1,
    PdEstimation = 2,
    NullDistribution = 3,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Detector {
    Glrgdd,
    Amgdd,
}

impl Detector {
    pub const ALL: [Detector; 2] = [Detector::Glrgdd, Detector::Amgdd];

    pub fn as_str(&self) -> &'static str {
        match self {
            Detector::Glrgdd => "glrgdd",
            Detector::Amgdd => "amgdd",
        }
    }

    /// Analytic detection probability at threshold `eta`.
    pub fn pd(&self, eta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
        match self {
            Detector::Glrgdd => analytic::pd_glrgdd(eta, p),
            Detector::Amgdd => analytic::pd_amgdd(eta, p),
        }
    }

    /// Analytic false-alarm probability at threshold `eta`.
    pub fn pfa(&self, eta: f64, p: &DistParams) -> Result<f64, AnalyticError> {
        match self {
            Detector::Glrgdd => analytic::pfa_glrgdd(eta, p),
            Detector::Amgdd => analytic::pfa_amgdd(eta, p),
        }
    }

    /// Analytic threshold at the given false-alarm target.
    pub fn threshold(&self, p: &DistParams, target: f64) -> Result<f64, AnalyticError> {
        match self {
            Detector::Glrgdd => analytic::threshold_glrgdd(p, target),
            Detector::Amgdd => analytic::threshold_amgdd(p, target),
        }
    }
}

impl fmt::Display for Detector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error)]
pub enum McError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Detector(#[from] DetectorError),
    #[error(transparent)]
    Analytic(#[from] AnalyticError),
    #[error("insufficient trials for the target quantile: {trials} < {needed} (need >= 10/pfa)")]
    InsufficientTrials { trials: usize, needed: usize },
}

/// One Monte Carlo estimate with its three-sigma binomial error bar.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McResult {
    pub detector: Detector,
    pub eta: f64,
    pub estimate: f64,
    pub trials: usize,
    pub ci_halfwidth: f64,
    pub seed: u64,
}

/// Precomputed per-trial generator: the deterministic signal component plus
/// the noise factor, so the per-trial work is two Gaussian draws and an add.
pub struct TrialGenerator {
    signal: Option<CMatrix>,
    noise: NoiseModel,
    test_cols: usize,
    training_cols: usize,
}

impl TrialGenerator {
    pub fn new(
        s: &Scenario,
        m: &SignalModel,
        n: &NoiseModel,
        snr: f64,
    ) -> Result<Self, McError> {
        s.validate().map_err(ModelError::from)?;
        m.validate(s)?;
        let signal = if snr > 0.0 {
            let amplitude = snr_to_amplitude(snr, m, n)?;
            let mut with_amp = m.clone();
            with_amp.amplitude = amplitude;
            Some(with_amp.signal_matrix())
        } else {
            snr_to_amplitude(snr, m, n)?; // still validates snr and model
            None
        };
        Ok(TrialGenerator {
            signal,
            noise: n.clone(),
            test_cols: s.test_cols,
            training_cols: s.training_cols,
        })
    }

    pub fn generate(&self, rng: &mut ChaCha8Rng) -> TrialData {
        let mut test = self.noise.sample(self.test_cols, rng);
        if let Some(signal) = &self.signal {
            test += signal;
        }
        let training = self.noise.sample(self.training_cols, rng);
        TrialData { test, training }
    }
}

/// One trial: signal (scaled to the requested linear SNR; zero SNR means
/// the null hypothesis) plus colored noise in both data blocks.
pub fn gen_trial(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    snr: f64,
    rng: &mut ChaCha8Rng,
) -> Result<TrialData, McError> {
    Ok(TrialGenerator::new(s, m, n, snr)?.generate(rng))
}

fn stream_rng(seed: u64, purpose: Purpose, batch: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << 32) | batch);
    rng
}

/// Statistic pairs `(t'_glrgdd, t_amgdd)` over `trials` seeded trials,
/// flattened in batch order.
fn statistic_pairs(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    snr: f64,
    trials: usize,
    seed: u64,
    purpose: Purpose,
) -> Result<Vec<(f64, f64)>, McError> {
    let generator = TrialGenerator::new(s, m, n, snr)?;
    let batches = trials.div_ceil(BATCH_SIZE);
    let per_batch: Vec<Vec<(f64, f64)>> = (0..batches)
        .into_par_iter()
        .map(|b| -> Result<Vec<(f64, f64)>, McError> {
            let mut rng = stream_rng(seed, purpose, b as u64);
            let len = BATCH_SIZE.min(trials - b * BATCH_SIZE);
            let mut out = Vec::with_capacity(len);
            for _ in 0..len {
                let trial = generator.generate(&mut rng);
                let stats = detectors::evaluate(&trial, m)?;
                out.push((stats.t_glrgdd_prime, stats.t_amgdd));
            }
            Ok(out)
        })
        .collect::<Result<_, _>>()?;
    Ok(per_batch.into_iter().flatten().collect())
}

/// Null-hypothesis statistic sample for one detector, in trial order.
pub fn sample_null_statistics(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    detector: Detector,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, McError> {
    let pairs = statistic_pairs(s, m, n, 0.0, trials, seed, Purpose::NullDistribution)?;
    Ok(pairs
        .into_iter()
        .map(|(g, a)| match detector {
            Detector::Glrgdd => g,
            Detector::Amgdd => a,
        })
        .collect())
}

/// Empirical threshold at the scenario's false-alarm target: the
/// `ceil(trials * (1 - pfa))`-th order statistic of the null sample,
/// with ties resolved deterministically by sorted order.
pub fn calibrate_threshold(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    detector: Detector,
    trials: usize,
    seed: u64,
) -> Result<f64, McError> {
    let needed = (10.0 / s.pfa_target).ceil() as usize;
    if trials < needed {
        return Err(McError::InsufficientTrials { trials, needed });
    }
    let pairs = statistic_pairs(s, m, n, 0.0, trials, seed, Purpose::Calibration)?;
    let mut sample: Vec<f64> = pairs
        .into_iter()
        .map(|(g, a)| match detector {
            Detector::Glrgdd => g,
            Detector::Amgdd => a,
        })
        .collect();
    sample.sort_by(f64::total_cmp);
    Ok(crate::stats::quantile(&sample, 1.0 - s.pfa_target))
}

/// Sorted null sample for one detector (convenience for calibration-style
/// analyses that need the whole distribution, not just one quantile).
pub fn calibration_sample(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    detector: Detector,
    trials: usize,
    seed: u64,
) -> Result<Vec<f64>, McError> {
    let pairs = statistic_pairs(s, m, n, 0.0, trials, seed, Purpose::Calibration)?;
    let mut sample: Vec<f64> = pairs
        .into_iter()
        .map(|(g, a)| match detector {
            Detector::Glrgdd => g,
            Detector::Amgdd => a,
        })
        .collect();
    sample.sort_by(f64::total_cmp);
    Ok(sample)
}

/// Monte Carlo detection probability: the fraction of signal-bearing trials
/// whose statistic exceeds `eta`, with a three-sigma binomial half-width.
pub fn estimate_pd(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    detector: Detector,
    eta: f64,
    snr: f64,
    trials: usize,
    seed: u64,
) -> Result<McResult, McError> {
    let pairs = statistic_pairs(s, m, n, snr, trials, seed, Purpose::PdEstimation)?;
    let hits = pairs
        .iter()
        .filter(|(g, a)| {
            let stat = match detector {
                Detector::Glrgdd => *g,
                Detector::Amgdd => *a,
            };
            stat > eta
        })
        .count();
    let estimate = hits as f64 / trials as f64;
    Ok(McResult {
        detector,
        eta,
        estimate,
        trials,
        ci_halfwidth: crate::stats::binomial_halfwidth(estimate, trials, 3.0),
        seed,
    })
}

/// How sweep thresholds are obtained for the Monte Carlo column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ThresholdSource {
    /// Invert the closed-form false-alarm expression (default; keeps
    /// threshold error out of the detection-probability comparison).
    Analytic,
    /// Calibrate empirically from null trials.
    Empirical,
}

/// One curve point: theory and simulation at a single SNR for one detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PerfPoint {
    pub snr_db: f64,
    pub detector: Detector,
    pub pd_theory: f64,
    pub pd_mc: f64,
    pub ci_halfwidth: f64,
    pub eta: f64,
}

#[derive(Debug, Clone)]
pub struct SweepFailure {
    pub snr_db: f64,
    pub detector: Detector,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct SweepOutcome {
    pub points: Vec<PerfPoint>,
    pub failures: Vec<SweepFailure>,
}

/// SplitMix64; used to derive independent per-point seeds from the master
/// seed so no two sweep points share noise.
pub fn derive_seed(master: u64, tag: u64) -> u64 {
    let mut z = master ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Theory-vs-simulation sweep over the scenario's SNR grid for both
/// detectors. The theory column always uses the analytically inverted
/// threshold; `source` picks the threshold for the Monte Carlo column.
/// Per-point failures are collected and the sweep continues.
pub fn sweep(
    s: &Scenario,
    m: &SignalModel,
    n: &NoiseModel,
    source: ThresholdSource,
) -> Result<SweepOutcome, McError> {
    s.validate().map_err(ModelError::from)?;
    m.validate(s)?;
    let p0 = DistParams::from_scenario(s, 0.0)?;
    let mut outcome = SweepOutcome::default();
    for (det_idx, det) in Detector::ALL.iter().enumerate() {
        let eta_analytic = det.threshold(&p0, s.pfa_target)?;
        let eta_mc = match source {
            ThresholdSource::Analytic => eta_analytic,
            ThresholdSource::Empirical => {
                calibrate_threshold(s, m, n, *det, s.trials_calibration, s.seed)?
            }
        };
        for (i, &snr_db) in s.snr_grid_db.iter().enumerate() {
            let snr = db_to_linear(snr_db);
            let point_seed = derive_seed(s.seed, (det_idx as u64) << 32 | i as u64);
            let result = p0
                .with_snr(snr)
                .map_err(McError::from)
                .and_then(|p| det.pd(eta_analytic, &p).map_err(McError::from))
                .and_then(|theory| {
                    estimate_pd(s, m, n, *det, eta_mc, snr, s.trials_pd, point_seed)
                        .map(|mc| (theory, mc))
                });
            match result {
                Ok((pd_theory, mc)) => outcome.points.push(PerfPoint {
                    snr_db,
                    detector: *det,
                    pd_theory,
                    pd_mc: mc.estimate,
                    ci_halfwidth: mc.ci_halfwidth,
                    eta: eta_mc,
                }),
                Err(e) => outcome.failures.push(SweepFailure {
                    snr_db,
                    detector: *det,
                    message: e.to_string(),
                }),
            }
        }
    }
    // Row order: grid-major, detector-minor.
    outcome
        .points
        .sort_by(|a, b| a.snr_db.total_cmp(&b.snr_db).then(a.detector.as_str().cmp(b.detector.as_str())));
    Ok(outcome)
}

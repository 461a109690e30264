//! Adaptive generalized-direction detection with a known spatial steering
//! vector: detection statistics, their exact closed-form detection and
//! false-alarm probabilities, and a reproducible Monte Carlo engine that
//! validates the theory against simulation.

pub mod analytic;
pub mod detectors;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod stats;

pub use analytic::{AnalyticError, DistParams, QuadratureRule};
pub use detectors::{DetectorError, DetectorOutput, DetectorWorkspace, ScmMode};
pub use linalg::{CMatrix, CVector, C64, LinalgError};
pub use model::{
    db_to_linear, default_signal_model, snr_from_amplitude, snr_to_amplitude, ModelError,
    NoiseModel, Scenario, ScenarioErrors, ScenarioViolation, SignalModel, TrialData,
};
pub use montecarlo::{
    Detector, McError, McResult, PerfPoint, SweepOutcome, ThresholdSource,
};

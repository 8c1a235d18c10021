//! Absolute calibration of single-photon detectors with correlated photon
//! pairs: polarization algebra, a description of the optical bench, an
//! event-level simulator, efficiency estimators and uncertainty budgets.

pub mod bench;
pub mod calib;
pub mod polarization;
pub mod scenario;
pub mod sim;
pub mod uncertainty;

pub use bench::{
    BenchConfig, ConfigError, DetectorParams, DriverPolicy, FailureModel, PockelsConfig,
    PredictedRates, PulseShape, TacConfig,
};
pub use calib::{ CalibError, CountSummary, Estimate, FitPoint, KlyshkoCounts, ThetaFit };
pub use polarization::{
    Arm, JointDensity, PolarizationChannel, PolarizationDensity, Projector, SourceKind,
    StateError, StokesVector,
};
pub use scenario::{ parse_config, render_config, KeyValues, ScenarioError };
pub use sim::{ Experiment, Run, SimError, SimResult };
pub use uncertainty::{ Budget, BudgetRow, EstimatorId, InputDistribution, UncertainInput };

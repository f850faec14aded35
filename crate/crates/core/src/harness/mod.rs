//! Study harness: curve error, simulation studies, exposure prediction and
//! file formats.

pub mod io;
mod mse;
mod predict;
mod study;

pub use mse::{mse_curve, mse_domain, MseDomain, MseResult, MSE_GRID_POINTS, MSE_LEVEL};
pub use predict::{predict_exposure, ExposureReport, ExposureSettings, ThresholdSummary};
pub use study::{
    generate_replicate, replicate_seed, run_simulation_study, AbcStudySettings, Estimator,
    ModelSummary, Replicate, RunRow, StudyConfig, StudyModel, StudyReport,
};

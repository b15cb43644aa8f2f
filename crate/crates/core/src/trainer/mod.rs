//! Correctness meta-model: standardization, class-weighted ridge, cross-fitted
//! calibration and hyperparameter search.

pub mod calibration;
pub mod config;
pub mod folds;
pub mod gate;
pub mod grid;
pub mod ridge;
pub mod standardize;

pub use calibration::{
    fit_isotonic, fit_platt, pava, CalibrationMethod, Calibrator, IsotonicFit, NonConvergence,
    PlattFit,
};
pub use config::{ClassWeight, RidgeConfig};
pub use folds::stratified_kfold;
pub use gate::{cross_fit_calibrated, FoldPipeline, ModelArtifact, TrainedGate, DEFAULT_SEED};
pub use grid::{grid_search, CvEntry, GridResult, GridSpace};
pub use ridge::{
    fit_ridge_closed_form, fit_ridge_lsqr, fit_ridge_weighted, ridge_objective, RidgeFit, Solver,
};
pub use standardize::Standardizer;

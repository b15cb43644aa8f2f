use std::collections::HashMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::calibration::CalibrationMethod;
use super::config::{ClassWeight, RidgeConfig};
use super::folds::{stratified_kfold, train_indices};
use super::gate::{cross_fit_calibrated, ensemble_score, select_rows, CROSS_FIT_FOLDS};
use super::ridge::Solver;
use crate::error::{GateError, Result};
use crate::metrics::f1_for_class;
use crate::scalar::Scalar;

pub const SELECTION_THRESHOLD: f64 = 0.5;

/// Cartesian product of hyperparameter lists, enumerated lexicographically
/// in field order (alpha, tol, max_iter, class_weight, calibration).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridSpace {
    pub alphas: Vec<f64>,
    pub tols: Vec<f64>,
    pub max_iters: Vec<usize>,
    pub class_weights: Vec<ClassWeight>,
    pub calibrations: Vec<CalibrationMethod>,
    pub solver: Solver,
}

impl Default for GridSpace {
    fn default() -> Self {
        Self {
            alphas: vec![0.1, 1.0, 10.0, 100.0],
            tols: vec![1e-6, 1e-5, 1e-4, 1e-3],
            max_iters: vec![1000, 2000, 3000],
            class_weights: ClassWeight::default_set(),
            calibrations: vec![CalibrationMethod::Sigmoid, CalibrationMethod::Isotonic],
            solver: Solver::ClosedForm,
        }
    }
}

impl GridSpace {
    pub fn single(cfg: RidgeConfig) -> Self {
        Self {
            alphas: vec![cfg.alpha],
            tols: vec![cfg.tol],
            max_iters: vec![cfg.max_iter],
            class_weights: vec![cfg.class_weight],
            calibrations: vec![cfg.calibration],
            solver: cfg.solver,
        }
    }

    pub fn len(&self) -> usize {
        self.alphas.len()
            * self.tols.len()
            * self.max_iters.len()
            * self.class_weights.len()
            * self.calibrations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn configs(&self) -> Vec<RidgeConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &alpha in &self.alphas {
            for &tol in &self.tols {
                for &max_iter in &self.max_iters {
                    for &class_weight in &self.class_weights {
                        for &calibration in &self.calibrations {
                            out.push(RidgeConfig {
                                alpha,
                                tol,
                                max_iter,
                                class_weight,
                                calibration,
                                solver: self.solver,
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvEntry {
    pub config: RidgeConfig,
    /// Mean error-class F1 over the outer folds; `None` if the config failed.
    pub score: Option<f64>,
    pub fold_scores: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridResult {
    pub best: RidgeConfig,
    pub best_index: usize,
    pub entries: Vec<CvEntry>,
}

/// Configurations that provably produce the same fits share one evaluation:
/// the closed-form path ignores `tol` and `max_iter`.
fn fit_key(cfg: &RidgeConfig) -> String {
    match cfg.solver {
        Solver::ClosedForm => format!("{}|{}|{:?}", cfg.alpha, cfg.class_weight, cfg.calibration),
        Solver::Lsqr => format!(
            "{}|{}|{}|{}|{:?}",
            cfg.alpha, cfg.tol, cfg.max_iter, cfg.class_weight, cfg.calibration
        ),
    }
}

fn evaluate_config<T: Scalar>(
    x: &DMatrix<T>,
    z: &[bool],
    outer: &[Vec<usize>],
    cfg: &RidgeConfig,
    seed: u64,
) -> Result<Vec<f64>> {
    outer
        .iter()
        .map(|held| {
            let train = train_indices(z.len(), held);
            let xt = select_rows(x, &train);
            let zt: Vec<bool> = train.iter().map(|&i| z[i]).collect();
            let folds = cross_fit_calibrated(&xt, &zt, cfg, seed)?;
            let pred: Vec<bool> = held
                .iter()
                .map(|&i| {
                    let row: Vec<T> = x.row(i).iter().copied().collect();
                    ensemble_score(&folds, &row).as_f64() >= SELECTION_THRESHOLD
                })
                .collect();
            let truth: Vec<bool> = held.iter().map(|&i| z[i]).collect();
            Ok(f1_for_class(&pred, &truth, false).unwrap_or(0.0))
        })
        .collect()
}

/// Selects the configuration with the highest mean error-class F1 under
/// stratified 3-fold CV on the standardized matrix `x`. Earlier
/// configurations win ties.
pub fn grid_search<T: Scalar>(
    space: &GridSpace,
    x: &DMatrix<T>,
    z: &[bool],
    seed: u64,
) -> Result<GridResult> {
    let configs = space.configs();
    if configs.is_empty() {
        return Err(GateError::InvalidInput("empty hyperparameter grid".into()));
    }
    if x.nrows() != z.len() {
        return Err(GateError::LengthMismatch {
            left: x.nrows(),
            right: z.len(),
        });
    }
    let outer = stratified_kfold(z, CROSS_FIT_FOLDS, seed)?;

    let mut unique: Vec<(String, RidgeConfig)> = Vec::new();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for cfg in &configs {
        let key = fit_key(cfg);
        if !seen.contains_key(&key) {
            seen.insert(key.clone(), unique.len());
            unique.push((key, *cfg));
        }
    }
    let results: Vec<std::result::Result<Vec<f64>, GateError>> = unique
        .par_iter()
        .map(|(_, cfg)| evaluate_config(x, z, &outer, cfg, seed))
        .collect();

    let entries: Vec<CvEntry> = configs
        .iter()
        .map(|cfg| {
            let r = &results[seen[&fit_key(cfg)]];
            match r {
                Ok(fs) => CvEntry {
                    config: *cfg,
                    score: Some(fs.iter().sum::<f64>() / fs.len() as f64),
                    fold_scores: fs.clone(),
                    error: None,
                },
                Err(e) => CvEntry {
                    config: *cfg,
                    score: None,
                    fold_scores: Vec::new(),
                    error: Some(e.to_string()),
                },
            }
        })
        .collect();

    let mut best: Option<(usize, f64)> = None;
    for (i, e) in entries.iter().enumerate() {
        if let Some(s) = e.score {
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((i, s));
            }
        }
    }
    match best {
        Some((i, _)) => Ok(GridResult {
            best: entries[i].config,
            best_index: i,
            entries,
        }),
        None => Err(results
            .into_iter()
            .find_map(|r| r.err())
            .unwrap_or_else(|| {
                GateError::InvalidInput("no configuration could be evaluated".into())
            })),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn noisy(n: usize, d: usize, seed: u64) -> (DMatrix<f64>, Vec<bool>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(n, d, |_, _| rng.random_range(-1.0..1.0));
        let z = (0..n)
            .map(|i| x[(i, 0)] + 0.8 * rng.random_range(-1.0..1.0) > -0.5)
            .collect();
        (x, z)
    }

    #[test]
    fn full_grid_has_672_points_in_lexicographic_order() {
        let space = GridSpace::default();
        let cfgs = space.configs();
        assert_eq!(cfgs.len(), 672);
        assert_eq!(cfgs[0].alpha, 0.1);
        assert_eq!(cfgs[0].calibration, CalibrationMethod::Sigmoid);
        assert_eq!(cfgs[1].calibration, CalibrationMethod::Isotonic);
        assert_eq!(cfgs[2].class_weight, ClassWeight::ratio(0.64, 1.0));
        assert_eq!(cfgs[671].alpha, 100.0);
    }

    #[test]
    fn single_config_space_selects_it() {
        let (x, z) = noisy(120, 3, 1);
        let cfg = RidgeConfig::default();
        let r = grid_search(&GridSpace::single(cfg), &x, &z, 42).unwrap();
        assert_eq!(r.best, cfg);
        assert_eq!(r.entries.len(), 1);
    }

    #[test]
    fn ties_go_to_earlier_config() {
        // tol differences are invisible to the closed-form path, so both score equally.
        let (x, z) = noisy(120, 3, 2);
        let space = GridSpace {
            tols: vec![1e-3, 1e-6],
            ..GridSpace::single(RidgeConfig::default())
        };
        let r = grid_search(&space, &x, &z, 42).unwrap();
        assert_eq!(r.entries[0].score, r.entries[1].score);
        assert_eq!(r.best_index, 0);
        assert_eq!(r.best.tol, 1e-3);
    }

    #[test]
    fn selection_is_deterministic() {
        let (x, z) = noisy(150, 4, 3);
        let space = GridSpace {
            alphas: vec![0.1, 10.0],
            tols: vec![1e-4],
            max_iters: vec![1000],
            ..GridSpace::default()
        };
        let a = grid_search(&space, &x, &z, 42).unwrap();
        let b = grid_search(&space, &x, &z, 42).unwrap();
        assert_eq!(
            serde_json::to_string(&a).unwrap(),
            serde_json::to_string(&b).unwrap()
        );
        let best = a.entries[a.best_index].score.unwrap();
        assert!(a.entries.iter().all(|e| e.score.unwrap() <= best));
    }
}

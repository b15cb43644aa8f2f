//! End-to-end orchestration: features, resampling, model selection, threshold
//! choice on validation and frozen-threshold evaluation on test.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    resample, Dataset, DatasetProfile, ResampleConfig, ResampleReport, Split, SplitSpec,
};
use crate::error::{GateError, Result};
use crate::eval::{
    evaluate_frozen, run_baseline, AblationRow, BaselineFeature, Comparison, MetricsReport,
    META_MODEL,
};
use crate::features::{assemble_feature_vector, Family, FamilySet, FeatureConfig};
use crate::io::{ExcludedRow, FeatureTable};
use crate::policy::{
    sweep_threshold, CostModel, PolicyReport, PolicyResult, TauGrid, DEFAULT_SENSITIVITY_RATIOS,
};
use crate::schema::ResponseTrace;
use crate::trainer::{
    cross_fit_calibrated, grid_search, GridResult, GridSpace, Standardizer, TrainedGate,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub families: FamilySet,
    pub feature_config: FeatureConfig,
    pub profile: DatasetProfile,
    pub validation_fraction: f64,
    pub resample: ResampleConfig,
    pub grid: GridSpace,
    pub cost: CostModel,
    pub tau: TauGrid,
    pub sensitivity_ratios: Vec<f64>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            seed: 42,
            families: FamilySet::all(),
            feature_config: FeatureConfig::default(),
            profile: DatasetProfile::OpenaiMod,
            validation_fraction: crate::dataset::DEFAULT_VALIDATION_FRACTION,
            resample: ResampleConfig::default(),
            grid: GridSpace::default(),
            cost: CostModel::default(),
            tau: TauGrid::default(),
            sensitivity_ratios: DEFAULT_SENSITIVITY_RATIOS.to_vec(),
        }
    }
}

impl PipelineConfig {
    pub fn split_spec(&self) -> SplitSpec {
        SplitSpec {
            test_negative_count: self.profile.test_negative_count(),
            validation_fraction: self.validation_fraction,
            seed: self.seed,
        }
    }

    pub fn resample_config(&self) -> ResampleConfig {
        ResampleConfig {
            seed: self.seed,
            ..self.resample
        }
    }
}

/// Feature rows for every trace that supports the requested families.
///
/// Traces whose features cannot be computed (no log-probabilities, no label
/// mass among the candidates, ...) are listed with the reason instead.
pub fn extract_features(
    traces: &[ResponseTrace],
    families: &FamilySet,
    cfg: &FeatureConfig,
) -> Result<(FeatureTable, Vec<ExcludedRow>)> {
    if families.is_empty() {
        return Err(GateError::EmptyFamilySet);
    }
    let mut sorted: Vec<&ResponseTrace> = traces.iter().collect();
    sorted.sort_by(|a, b| a.item_id.cmp(&b.item_id));
    let mut table = FeatureTable {
        feature_names: Vec::new(),
        item_ids: Vec::new(),
        rows: Vec::new(),
    };
    let mut excluded = Vec::new();
    for t in sorted {
        match assemble_feature_vector::<f64>(t, families, cfg) {
            Ok(fv) => {
                let names = fv.names();
                if table.item_ids.is_empty() {
                    table.feature_names = names;
                } else if names != table.feature_names {
                    return Err(GateError::FeatureMismatch(format!(
                        "item {} has a different feature layout",
                        t.item_id
                    )));
                }
                table.item_ids.push(t.item_id.clone());
                table.rows.push(fv.values());
            }
            Err(e) => excluded.push(ExcludedRow {
                item_id: t.item_id.clone(),
                reason: e.kind().to_string(),
            }),
        }
    }
    if !excluded.is_empty() {
        tracing::warn!(
            count = excluded.len(),
            "traces excluded from feature extraction"
        );
    }
    Ok((table, excluded))
}

pub fn family_of(feature_name: &str) -> Option<Family> {
    let prefix = feature_name.split('.').next()?;
    Family::ALL.into_iter().find(|f| f.prefix() == prefix)
}

/// Column names belonging to the given families, in table order.
pub fn columns_for(names: &[String], families: &FamilySet) -> Vec<String> {
    names
        .iter()
        .filter(|n| family_of(n).is_some_and(|f| families.contains(f)))
        .cloned()
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainOutput {
    pub gate: TrainedGate<f64>,
    pub grid: GridResult,
    pub resample: ResampleReport,
}

/// Resamples the training split, selects hyperparameters and fits the gate.
/// `train` must already be restricted to the model's feature columns.
pub fn train_gate(train: &Dataset<f64>, cfg: &PipelineConfig) -> Result<TrainOutput> {
    if train.feature_names.is_empty() {
        return Err(GateError::EmptyFamilySet);
    }
    let report = resample(&train.examples, &cfg.resample_config())?;
    let data = train.subset(&report.kept);
    let x = data.matrix();
    let z = data.z();
    let scaler = Standardizer::fit(&x);
    let xs = scaler.apply(&x);
    let grid = grid_search(&cfg.grid, &xs, &z, cfg.seed)?;
    let folds = cross_fit_calibrated(&xs, &z, &grid.best, cfg.seed)?;
    let gate = TrainedGate::from_parts(data.feature_names.clone(), scaler, folds, grid.best);
    Ok(TrainOutput {
        gate,
        grid,
        resample: report,
    })
}

pub fn gate_scores(gate: &TrainedGate<f64>, data: &Dataset<f64>) -> Result<Vec<f64>> {
    let view = data.select_features(&gate.feature_names)?;
    gate.predict_matrix(&view.feature_names, &view.matrix())
}

/// Chooses τ* on validation and stores it in the gate.
pub fn choose_threshold(
    gate: &mut TrainedGate<f64>,
    validation: &Dataset<f64>,
    cfg: &PipelineConfig,
) -> Result<PolicyResult> {
    let scores = gate_scores(gate, validation)?;
    let result = sweep_threshold(&scores, &validation.z(), &cfg.cost, &cfg.tau)?;
    gate.tau_star = Some(result.tau_star);
    Ok(result)
}

/// Meta-model metrics on test at the gate's frozen τ*.
pub fn evaluate_gate(
    gate: &TrainedGate<f64>,
    validation: &Dataset<f64>,
    test: &Dataset<f64>,
    cfg: &PipelineConfig,
) -> Result<MetricsReport> {
    let vs = gate_scores(gate, validation)?;
    let ts = gate_scores(gate, test)?;
    let report = evaluate_frozen(
        META_MODEL,
        &vs,
        &validation.z(),
        &ts,
        &test.z(),
        &cfg.cost,
        &cfg.tau,
    )?;
    if let Some(tau) = gate.tau_star {
        if tau != report.tau_star {
            return Err(GateError::InvalidInput(format!(
                "stored threshold {tau} differs from the validation optimum {}",
                report.tau_star
            )));
        }
    }
    Ok(report)
}

/// Meta-model plus every single-feature baseline, in report order.
pub fn compare_methods(
    gate: &TrainedGate<f64>,
    validation: &Dataset<f64>,
    test: &Dataset<f64>,
    cfg: &PipelineConfig,
) -> Result<Comparison> {
    let mut methods = Vec::new();
    for b in BaselineFeature::ALL {
        methods.push(run_baseline(b, validation, test, &cfg.cost, &cfg.tau)?);
    }
    methods.push(evaluate_gate(gate, validation, test, cfg)?);
    Comparison::new(methods, &test.z(), &cfg.cost)
}

pub fn policy_report(
    meta: &MetricsReport,
    test: &Dataset<f64>,
    cfg: &PipelineConfig,
) -> PolicyReport {
    let result = PolicyResult {
        tau_star: meta.tau_star,
        expected_cost: meta.expected_cost,
        escalations: meta.escalations,
        escalation_ratio: meta.escalation_ratio,
        counts: meta.counts,
    };
    PolicyReport::new(&result, &test.z(), &cfg.cost, &sensitivity_ratios(cfg))
}

/// Configured sensitivity ratios plus the operating ratio, ascending.
pub fn sensitivity_ratios(cfg: &PipelineConfig) -> Vec<f64> {
    let mut r = cfg.sensitivity_ratios.clone();
    if !r.contains(&cfg.cost.ratio()) {
        r.push(cfg.cost.ratio());
    }
    r.sort_by(f64::total_cmp);
    r
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineOutput {
    pub train: TrainOutput,
    pub comparison: Comparison,
    pub policy: PolicyReport,
}

/// Full run on a dataset carrying all extracted columns.
pub fn run_pipeline(
    data: &Dataset<f64>,
    split: &Split,
    cfg: &PipelineConfig,
) -> Result<PipelineOutput> {
    let cols = columns_for(&data.feature_names, &cfg.families);
    let train = data.subset(&split.train).select_features(&cols)?;
    let validation = data.subset(&split.validation);
    let test = data.subset(&split.test);
    let mut out = train_gate(&train, cfg)?;
    choose_threshold(&mut out.gate, &validation, cfg)?;
    let comparison = compare_methods(&out.gate, &validation, &test, cfg)?;
    let meta = comparison.get(META_MODEL).expect("meta-model row present");
    let policy = policy_report(meta, &test, cfg);
    Ok(PipelineOutput {
        train: out,
        comparison,
        policy,
    })
}

/// Frozen-threshold test cost of a meta-model trained on `cfg.families`.
pub fn meta_model_cost(data: &Dataset<f64>, split: &Split, cfg: &PipelineConfig) -> Result<f64> {
    if cfg.families.is_empty() {
        return Err(GateError::EmptyFamilySet);
    }
    let cols = columns_for(&data.feature_names, &cfg.families);
    if cols.is_empty() {
        return Err(GateError::EmptyFamilySet);
    }
    let train = data.subset(&split.train).select_features(&cols)?;
    let validation = data.subset(&split.validation);
    let test = data.subset(&split.test);
    let mut out = train_gate(&train, cfg)?;
    choose_threshold(&mut out.gate, &validation, cfg)?;
    Ok(evaluate_gate(&out.gate, &validation, &test, cfg)?.expected_cost)
}

/// Test cost of the meta-model when trained without `family`.
pub fn ablation_cost(
    data: &Dataset<f64>,
    split: &Split,
    cfg: &PipelineConfig,
    family: Family,
) -> Result<f64> {
    if !cfg.families.contains(family) {
        return Err(GateError::InvalidInput(format!(
            "family {family} is not in the include set"
        )));
    }
    let reduced = PipelineConfig {
        families: cfg.families.clone().without(family),
        ..cfg.clone()
    };
    meta_model_cost(data, split, &reduced)
}

pub fn run_ablation(
    data: &Dataset<f64>,
    split: &Split,
    cfg: &PipelineConfig,
    drop: &[Family],
    full_cost: f64,
) -> Result<Vec<AblationRow>> {
    drop.iter()
        .map(|&f| {
            let cost = ablation_cost(data, split, cfg, f)?;
            Ok(AblationRow {
                dropped_family: f.prefix().to_string(),
                expected_cost: cost,
                delta_vs_full: cost - full_cost,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::stratified_split;
    use crate::synth::{generate, SignalSpec, SynthConfig};

    fn small_grid() -> GridSpace {
        GridSpace {
            alphas: vec![1.0, 10.0],
            tols: vec![1e-4],
            max_iters: vec![1000],
            ..GridSpace::default()
        }
    }

    fn corpus(cfg: &SynthConfig) -> Dataset<f64> {
        let c = generate(cfg).unwrap();
        let (table, excluded) =
            extract_features(&c.traces, &FamilySet::all(), &FeatureConfig::default()).unwrap();
        assert!(excluded.is_empty());
        table.join_labels(&c.labels).unwrap()
    }

    #[test]
    fn family_lookup_by_prefix() {
        assert_eq!(family_of("outcome_topk.msp"), Some(Family::OutcomeTopK));
        assert_eq!(
            family_of("attribution.inconclusive"),
            Some(Family::Attribution)
        );
        assert_eq!(family_of("mystery"), None);
    }

    #[test]
    fn null_signal_gives_chance_auc() {
        let data = corpus(&SynthConfig {
            n_items: 1500,
            abstention_rate: 0.0,
            signal: SignalSpec::none(),
            ..SynthConfig::default()
        });
        let cfg = PipelineConfig {
            grid: small_grid(),
            ..PipelineConfig::default()
        };
        let split = stratified_split(&data.examples, &cfg.split_spec()).unwrap();
        let out = run_pipeline(&data, &split, &cfg).unwrap();
        let auc = out.comparison.get(META_MODEL).unwrap().auc_roc.unwrap();
        assert!((0.4..=0.6).contains(&auc), "{auc}");
    }

    #[test]
    fn msp_only_signal_matches_msp_baseline() {
        let data = corpus(&SynthConfig {
            n_items: 2000,
            abstention_rate: 0.0,
            signal: SignalSpec::msp_only(),
            ..SynthConfig::default()
        });
        let cfg = PipelineConfig {
            grid: small_grid(),
            ..PipelineConfig::default()
        };
        let split = stratified_split(&data.examples, &cfg.split_spec()).unwrap();
        let out = run_pipeline(&data, &split, &cfg).unwrap();
        let meta = out.comparison.get(META_MODEL).unwrap().expected_cost;
        let msp = out.comparison.get("MSP").unwrap().expected_cost;
        let scale = out.comparison.always_trust_cost;
        assert!(
            (meta - msp).abs() <= 0.05 * scale,
            "meta {meta} msp {msp} scale {scale}"
        );
    }

    #[test]
    fn dropping_everything_is_rejected() {
        let data = corpus(&SynthConfig {
            n_items: 400,
            ..SynthConfig::default()
        });
        let cfg = PipelineConfig {
            families: FamilySet::only(Family::Attribution),
            profile: DatasetProfile::Multimodal,
            grid: small_grid(),
            ..PipelineConfig::default()
        };
        let split = stratified_split(&data.examples, &cfg.split_spec()).unwrap();
        assert!(matches!(
            ablation_cost(&data, &split, &cfg, Family::Attribution),
            Err(GateError::EmptyFamilySet)
        ));
    }
}

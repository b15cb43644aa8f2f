//! Method comparison: per-class F1, AUC, frozen-threshold cost, baselines and
//! report tables.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;
use crate::error::{GateError, Result};
use crate::features::names;
use crate::metrics::{auc_roc, f1_for_class};
use crate::policy::{
    always_trust_cost, expected_cost, sweep_threshold, ConfusionCounts, CostModel, Decision,
    TauGrid,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub f1_trust_class: Option<f64>,
    pub f1_error_class: Option<f64>,
    pub macro_f1: Option<f64>,
    pub auc_roc: Option<f64>,
    pub expected_cost: f64,
    pub always_trust_cost: f64,
    pub escalations: usize,
    pub escalation_ratio: f64,
    pub tau_star: f64,
    pub counts: ConfusionCounts,
}

/// Metrics for fixed decisions; `tau_star` records the threshold that made them.
pub fn compute_metrics(
    method: &str,
    scores: &[f64],
    decisions: &[Decision],
    z: &[bool],
    m: &CostModel,
    tau_star: f64,
) -> Result<MetricsReport> {
    let counts = crate::policy::confusion(decisions, z)?;
    let trust: Vec<bool> = decisions.iter().map(|d| *d == Decision::Trust).collect();
    let f1_trust = f1_for_class(&trust, z, true);
    let f1_error = f1_for_class(&trust, z, false);
    let macro_f1 = match (f1_trust, f1_error) {
        (Some(a), Some(b)) => Some((a + b) / 2.0),
        _ => None,
    };
    Ok(MetricsReport {
        method: method.to_string(),
        f1_trust_class: f1_trust,
        f1_error_class: f1_error,
        macro_f1,
        auc_roc: auc_roc(scores, z)?,
        expected_cost: expected_cost(&counts, m),
        always_trust_cost: always_trust_cost(z, m),
        escalations: counts.escalations(),
        escalation_ratio: counts.escalation_ratio(),
        tau_star,
        counts,
    })
}

/// Sweeps τ on validation scores, then applies it unchanged to test scores.
pub fn evaluate_frozen(
    method: &str,
    val_scores: &[f64],
    val_z: &[bool],
    test_scores: &[f64],
    test_z: &[bool],
    m: &CostModel,
    grid: &TauGrid,
) -> Result<MetricsReport> {
    let tau = sweep_threshold(val_scores, val_z, m, grid)?.tau_star;
    let decisions: Vec<Decision> = test_scores
        .iter()
        .map(|&s| crate::policy::route(s, tau))
        .collect();
    compute_metrics(method, test_scores, &decisions, test_z, m, tau)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineFeature {
    Msp,
    Top2Margin,
    Entropy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Orientation {
    HigherIsCorrect,
    LowerIsCorrect,
}

impl BaselineFeature {
    pub const ALL: [BaselineFeature; 3] = [
        BaselineFeature::Msp,
        BaselineFeature::Top2Margin,
        BaselineFeature::Entropy,
    ];

    pub fn column(self) -> &'static str {
        match self {
            BaselineFeature::Msp => names::MSP,
            BaselineFeature::Top2Margin => names::TOP2_MARGIN,
            BaselineFeature::Entropy => names::ENTROPY,
        }
    }

    pub fn orientation(self) -> Orientation {
        match self {
            BaselineFeature::Entropy => Orientation::LowerIsCorrect,
            _ => Orientation::HigherIsCorrect,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            BaselineFeature::Msp => "MSP",
            BaselineFeature::Top2Margin => "Top-2 Margin",
            BaselineFeature::Entropy => "Entropy",
        }
    }
}

impl fmt::Display for BaselineFeature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

pub const META_MODEL: &str = "Meta-Model";

/// Min-max map fitted on validation values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub max: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Result<Self> {
        if values.is_empty() {
            return Err(GateError::InvalidInput(
                "cannot rescale an empty validation set".into(),
            ));
        }
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Ok(Self { min, max })
    }

    /// Values outside the fitted range are not clamped, so ranks survive.
    /// A constant validation range maps to a step at its value.
    pub fn apply(&self, v: f64) -> f64 {
        if self.max > self.min {
            (v - self.min) / (self.max - self.min)
        } else if v >= self.min {
            1.0
        } else {
            0.0
        }
    }
}

pub fn oriented(feature: BaselineFeature, values: &[f64]) -> Vec<f64> {
    match feature.orientation() {
        Orientation::HigherIsCorrect => values.to_vec(),
        Orientation::LowerIsCorrect => values.iter().map(|v| -v).collect(),
    }
}

/// Rescaled validation and test scores for a single-feature baseline.
pub fn baseline_scores(
    feature: BaselineFeature,
    validation: &Dataset<f64>,
    test: &Dataset<f64>,
) -> Result<(Vec<f64>, Vec<f64>)> {
    let col = |d: &Dataset<f64>| -> Result<Vec<f64>> {
        let j = d
            .feature_names
            .iter()
            .position(|n| n == feature.column())
            .ok_or_else(|| GateError::MissingFeature(feature.column().to_string()))?;
        Ok(oriented(
            feature,
            &d.examples.iter().map(|e| e.features[j]).collect::<Vec<_>>(),
        ))
    };
    let (v, t) = (col(validation)?, col(test)?);
    let mm = MinMax::fit(&v)?;
    Ok((
        v.iter().map(|&x| mm.apply(x)).collect(),
        t.iter().map(|&x| mm.apply(x)).collect(),
    ))
}

pub fn run_baseline(
    feature: BaselineFeature,
    validation: &Dataset<f64>,
    test: &Dataset<f64>,
    m: &CostModel,
    grid: &TauGrid,
) -> Result<MetricsReport> {
    let (vs, ts) = baseline_scores(feature, validation, test)?;
    evaluate_frozen(
        feature.label(),
        &vs,
        &validation.z(),
        &ts,
        &test.z(),
        m,
        grid,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub dropped_family: String,
    pub expected_cost: f64,
    pub delta_vs_full: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    /// Fixed order: MSP, Top-2 Margin, Entropy, Meta-Model (whichever are present).
    pub methods: Vec<MetricsReport>,
    pub always_trust_cost: f64,
    pub test_items: usize,
    pub test_errors: usize,
}

const METHOD_ORDER: [&str; 4] = ["MSP", "Top-2 Margin", "Entropy", META_MODEL];

impl Comparison {
    pub fn new(mut methods: Vec<MetricsReport>, test_z: &[bool], m: &CostModel) -> Result<Self> {
        if methods.is_empty() {
            return Err(GateError::InvalidInput(
                "no method results to report".into(),
            ));
        }
        methods.sort_by_key(|r| {
            METHOD_ORDER
                .iter()
                .position(|&n| n == r.method)
                .unwrap_or(METHOD_ORDER.len())
        });
        Ok(Self {
            methods,
            always_trust_cost: always_trust_cost(test_z, m),
            test_items: test_z.len(),
            test_errors: test_z.iter().filter(|&&v| !v).count(),
        })
    }

    pub fn get(&self, method: &str) -> Option<&MetricsReport> {
        self.methods.iter().find(|r| r.method == method)
    }
}

fn cell(v: Option<f64>) -> String {
    v.map(|x| format!("{x:?}")).unwrap_or_default()
}

fn csv_bytes(header: &[&str], rows: Vec<Vec<String>>) -> Vec<u8> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).expect("in-memory write");
    for r in rows {
        w.write_record(&r).expect("in-memory write");
    }
    w.into_inner().expect("in-memory flush")
}

pub fn predictive_csv(c: &Comparison) -> Vec<u8> {
    csv_bytes(
        &["method", "f1", "auc_roc", "macro_f1", "f1_error_class"],
        c.methods
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    cell(r.f1_trust_class),
                    cell(r.auc_roc),
                    cell(r.macro_f1),
                    cell(r.f1_error_class),
                ]
            })
            .collect(),
    )
}

pub fn cost_csv(c: &Comparison) -> Vec<u8> {
    csv_bytes(
        &[
            "method",
            "always_trust_cost",
            "expected_cost",
            "escalations",
            "escalation_ratio",
            "tau_star",
        ],
        c.methods
            .iter()
            .map(|r| {
                vec![
                    r.method.clone(),
                    format!("{:?}", r.always_trust_cost),
                    format!("{:?}", r.expected_cost),
                    r.escalations.to_string(),
                    format!("{:?}", r.escalation_ratio),
                    format!("{:?}", r.tau_star),
                ]
            })
            .collect(),
    )
}

pub fn ablation_csv(rows: &[AblationRow]) -> Vec<u8> {
    csv_bytes(
        &["dropped_family", "expected_cost", "delta_vs_full"],
        rows.iter()
            .map(|r| {
                vec![
                    r.dropped_family.clone(),
                    format!("{:?}", r.expected_cost),
                    format!("{:?}", r.delta_vs_full),
                ]
            })
            .collect(),
    )
}

//! Trust/escalate routing and expected review cost.
//!
//! Trust is the positive decision. With `z = 1` meaning the LLM was correct:
//! TP trusts a correct answer, FP trusts a wrong one, TN escalates a wrong
//! one and FN escalates a correct one. Cost is measured relative to always
//! trusting, so it may be negative.

use num_traits::{FromPrimitive, Num};
use serde::{Deserialize, Serialize};

use crate::error::{GateError, Result};

pub const DEFAULT_COST_RATIO: f64 = 0.64;
pub const DEFAULT_SENSITIVITY_RATIOS: [f64; 3] = [0.4, 0.64, 0.9];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Trust,
    Escalate,
}

pub fn route<S: PartialOrd>(score: S, tau: S) -> Decision {
    if score >= tau {
        Decision::Trust
    } else {
        Decision::Escalate
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl ConfusionCounts {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn escalations(&self) -> usize {
        self.tn + self.fn_
    }

    pub fn escalation_ratio(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            n => self.escalations() as f64 / n as f64,
        }
    }
}

pub fn confusion(decisions: &[Decision], z: &[bool]) -> Result<ConfusionCounts> {
    if decisions.len() != z.len() {
        return Err(GateError::LengthMismatch {
            left: decisions.len(),
            right: z.len(),
        });
    }
    let mut c = ConfusionCounts::default();
    for (d, &correct) in decisions.iter().zip(z) {
        match (d, correct) {
            (Decision::Trust, true) => c.tp += 1,
            (Decision::Trust, false) => c.fp += 1,
            (Decision::Escalate, false) => c.tn += 1,
            (Decision::Escalate, true) => c.fn_ += 1,
        }
    }
    Ok(c)
}

/// Per-item costs of an undetected error and of a human review. Generic so
/// that exact arithmetic can be used where needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CostModel<C = f64> {
    pub c_mis: C,
    pub c_rev: C,
}

impl CostModel<f64> {
    /// Unit miss cost with review cost `r`.
    pub fn from_ratio(r: f64) -> Result<Self> {
        let m = Self {
            c_mis: 1.0,
            c_rev: r,
        };
        m.validate()?;
        Ok(m)
    }

    pub fn ratio(&self) -> f64 {
        self.c_rev / self.c_mis
    }

    pub fn validate(&self) -> Result<()> {
        if self.c_mis > 0.0 && self.c_rev > 0.0 && self.c_mis.is_finite() && self.c_rev.is_finite()
        {
            Ok(())
        } else {
            Err(GateError::InvalidInput(format!(
                "costs must be positive and finite (c_mis={}, c_rev={})",
                self.c_mis, self.c_rev
            )))
        }
    }
}

impl Default for CostModel<f64> {
    fn default() -> Self {
        Self {
            c_mis: 1.0,
            c_rev: DEFAULT_COST_RATIO,
        }
    }
}

fn count<C: FromPrimitive>(n: usize) -> C {
    C::from_usize(n).expect("count representable in cost type")
}

/// `c_mis*FP + (c_rev - c_mis)*TN + c_rev*FN`.
pub fn expected_cost<C: Num + Copy + FromPrimitive>(c: &ConfusionCounts, m: &CostModel<C>) -> C {
    m.c_mis * count(c.fp) + (m.c_rev - m.c_mis) * count(c.tn) + m.c_rev * count(c.fn_)
}

pub fn always_trust_cost<C: Num + Copy + FromPrimitive>(z: &[bool], m: &CostModel<C>) -> C {
    m.c_mis * count(z.iter().filter(|&&v| !v).count())
}

/// Evenly spaced thresholds, snapped to a 1e-12 grid so that accumulated
/// floating-point error never shifts a boundary.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TauGrid {
    pub lo: f64,
    pub hi: f64,
    pub step: f64,
}

impl Default for TauGrid {
    fn default() -> Self {
        Self {
            lo: 0.35,
            hi: 0.70,
            step: 0.005,
        }
    }
}

pub fn snap_tau(t: f64) -> f64 {
    (t * 1e12).round() / 1e12
}

impl TauGrid {
    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0 && self.lo <= self.hi && self.lo.is_finite() && self.hi.is_finite()) {
            return Err(GateError::InvalidInput(format!(
                "invalid threshold grid [{}, {}] step {}",
                self.lo, self.hi, self.step
            )));
        }
        Ok(())
    }

    pub fn points(&self) -> Vec<f64> {
        let n = ((self.hi - self.lo) / self.step + 1e-9).floor() as usize;
        (0..=n)
            .map(|k| snap_tau(self.lo + k as f64 * self.step))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PolicyResult<C = f64> {
    pub tau_star: f64,
    pub expected_cost: C,
    pub escalations: usize,
    pub escalation_ratio: f64,
    pub counts: ConfusionCounts,
}

pub fn counts_at(scores: &[f64], z: &[bool], tau: f64) -> Result<ConfusionCounts> {
    let decisions: Vec<Decision> = scores.iter().map(|&s| route(s, tau)).collect();
    confusion(&decisions, z)
}

pub fn evaluate_at<C: Num + Copy + FromPrimitive>(
    scores: &[f64],
    z: &[bool],
    m: &CostModel<C>,
    tau: f64,
) -> Result<PolicyResult<C>> {
    let counts = counts_at(scores, z, tau)?;
    Ok(PolicyResult {
        tau_star: tau,
        expected_cost: expected_cost(&counts, m),
        escalations: counts.escalations(),
        escalation_ratio: counts.escalation_ratio(),
        counts,
    })
}

/// Cost-minimizing threshold; ties go to fewer escalations, then lower τ.
pub fn sweep_threshold<C>(
    scores: &[f64],
    z: &[bool],
    m: &CostModel<C>,
    grid: &TauGrid,
) -> Result<PolicyResult<C>>
where
    C: Num + Copy + FromPrimitive + PartialOrd,
{
    grid.validate()?;
    let mut best: Option<PolicyResult<C>> = None;
    for tau in grid.points() {
        let cand = evaluate_at(scores, z, m, tau)?;
        let better = match &best {
            None => true,
            Some(b) => {
                cand.expected_cost < b.expected_cost
                    || (cand.expected_cost == b.expected_cost && cand.escalations < b.escalations)
            }
        };
        if better {
            best = Some(cand);
        }
    }
    Ok(best.expect("grid has at least one point"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SensitivityPoint<C = f64> {
    pub r: C,
    pub relative_cost: C,
}

/// `C / c_mis = FP + (r - 1) TN + r FN` at each ratio.
pub fn cost_ratio_sensitivity<C: Num + Copy + FromPrimitive>(
    c: &ConfusionCounts,
    ratios: &[C],
) -> Vec<SensitivityPoint<C>> {
    ratios
        .iter()
        .map(|&r| SensitivityPoint {
            r,
            relative_cost: count::<C>(c.fp) + (r - C::one()) * count(c.tn) + r * count(c.fn_),
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyReport {
    pub tau_star: f64,
    pub expected_cost: f64,
    pub always_trust_cost: f64,
    pub counts: ConfusionCounts,
    pub escalations: usize,
    pub escalation_ratio: f64,
    pub sensitivity: Vec<SensitivityPoint>,
}

impl PolicyReport {
    pub fn new(result: &PolicyResult, z: &[bool], m: &CostModel, ratios: &[f64]) -> Self {
        Self {
            tau_star: result.tau_star,
            expected_cost: result.expected_cost,
            always_trust_cost: always_trust_cost(z, m),
            counts: result.counts,
            escalations: result.escalations,
            escalation_ratio: result.escalation_ratio,
            sensitivity: cost_ratio_sensitivity(&result.counts, ratios),
        }
    }
}

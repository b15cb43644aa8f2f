//! Correctness labels, class-imbalance resampling and deterministic splits.
//!
//! Every operation first orders examples by `item_id`, so results depend
//! only on content and seed, never on input row order.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{GateError, Result};
use crate::scalar::Scalar;
use crate::schema::OutcomeLabel;
use crate::trainer::Standardizer;

pub const DEFAULT_VALIDATION_FRACTION: f64 = 0.2;
pub const DEFAULT_TARGET_RATIO: f64 = 4.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum GroundTruth {
    NonViolating,
    Violating,
}

impl GroundTruth {
    pub fn code(self) -> u8 {
        match self {
            GroundTruth::NonViolating => 0,
            GroundTruth::Violating => 1,
        }
    }
}

impl FromStr for GroundTruth {
    type Err = GateError;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "1" | "violating" | "true" | "yes" => Ok(GroundTruth::Violating),
            "0" | "non_violating" | "nonviolating" | "false" | "no" => {
                Ok(GroundTruth::NonViolating)
            }
            other => Err(GateError::InvalidInput(format!(
                "unrecognized ground truth `{other}`"
            ))),
        }
    }
}

impl fmt::Display for GroundTruth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.code())
    }
}

impl Serialize for GroundTruth {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_u8(self.code())
    }
}

impl<'de> Deserialize<'de> for GroundTruth {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(u8),
            Bool(bool),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(n) => n.to_string().parse(),
            Raw::Bool(b) => Ok(if b {
                GroundTruth::Violating
            } else {
                GroundTruth::NonViolating
            }),
            Raw::Text(t) => t.parse(),
        }
        .map_err(serde::de::Error::custom)
    }
}

/// `true` iff a binary verdict matches the ground truth. Abstentions never match.
pub fn label_correctness(outcome: OutcomeLabel, truth: GroundTruth) -> bool {
    matches!(
        (outcome, truth),
        (OutcomeLabel::Yes, GroundTruth::Violating) | (OutcomeLabel::No, GroundTruth::NonViolating)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledExample<T> {
    pub item_id: String,
    pub features: Vec<T>,
    pub llm_outcome: OutcomeLabel,
    pub ground_truth: GroundTruth,
    pub z: bool,
}

impl<T> LabeledExample<T> {
    pub fn new(
        item_id: impl Into<String>,
        features: Vec<T>,
        llm_outcome: OutcomeLabel,
        ground_truth: GroundTruth,
    ) -> Self {
        Self {
            item_id: item_id.into(),
            features,
            llm_outcome,
            ground_truth,
            z: label_correctness(llm_outcome, ground_truth),
        }
    }
}

/// Named feature columns plus labeled rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset<T> {
    pub feature_names: Vec<String>,
    pub examples: Vec<LabeledExample<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(feature_names: Vec<String>, mut examples: Vec<LabeledExample<T>>) -> Result<Self> {
        if let Some(bad) = examples
            .iter()
            .find(|e| e.features.len() != feature_names.len())
        {
            return Err(GateError::LengthMismatch {
                left: feature_names.len(),
                right: bad.features.len(),
            });
        }
        examples.sort_by(|a, b| a.item_id.cmp(&b.item_id));
        if let Some(w) = examples.windows(2).find(|w| w[0].item_id == w[1].item_id) {
            return Err(GateError::InvalidInput(format!(
                "duplicate item_id `{}`",
                w[0].item_id
            )));
        }
        Ok(Self {
            feature_names,
            examples,
        })
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    pub fn matrix(&self) -> DMatrix<T> {
        DMatrix::from_fn(self.examples.len(), self.feature_names.len(), |i, j| {
            self.examples[i].features[j]
        })
    }

    pub fn z(&self) -> Vec<bool> {
        self.examples.iter().map(|e| e.z).collect()
    }

    pub fn item_ids(&self) -> Vec<String> {
        self.examples.iter().map(|e| e.item_id.clone()).collect()
    }

    /// Rows whose ids appear in `ids`, in dataset order.
    pub fn subset(&self, ids: &[String]) -> Self {
        let keep: std::collections::HashSet<&str> = ids.iter().map(String::as_str).collect();
        Self {
            feature_names: self.feature_names.clone(),
            examples: self
                .examples
                .iter()
                .filter(|e| keep.contains(e.item_id.as_str()))
                .cloned()
                .collect(),
        }
    }

    /// Keeps only the named columns, in the given order.
    pub fn select_features(&self, names: &[String]) -> Result<Self> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|m| m == n)
                    .ok_or_else(|| GateError::MissingFeature(n.clone()))
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            feature_names: names.to_vec(),
            examples: self
                .examples
                .iter()
                .map(|e| LabeledExample {
                    features: idx.iter().map(|&j| e.features[j]).collect(),
                    ..e.clone()
                })
                .collect(),
        })
    }
}

fn sorted_order<T>(examples: &[LabeledExample<T>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.sort_by(|&a, &b| examples[a].item_id.cmp(&examples[b].item_id));
    order
}

/// The larger class; `z = 1` when the classes are the same size.
fn majority_class(z: impl Iterator<Item = bool>) -> bool {
    let (mut pos, mut neg) = (0usize, 0usize);
    for v in z {
        if v {
            pos += 1;
        } else {
            neg += 1;
        }
    }
    pos >= neg
}

/// Majority-class members of cross-class mutual nearest-neighbour pairs.
///
/// Distances are Euclidean on features z-scored over the input. Returned
/// values index into `examples`, ascending.
pub fn tomek_links<T: Scalar>(examples: &[LabeledExample<T>]) -> Vec<usize> {
    let n = examples.len();
    if n < 2 {
        return Vec::new();
    }
    let order = sorted_order(examples);
    let d = examples[0].features.len();
    let raw = DMatrix::from_fn(n, d, |i, j| examples[order[i]].features[j]);
    let x = Standardizer::fit(&raw).apply(&raw);
    let z: Vec<bool> = order.iter().map(|&i| examples[i].z).collect();
    let majority = majority_class(z.iter().copied());

    let nearest: Vec<usize> = (0..n)
        .map(|i| {
            let mut best = (T::INFINITY, usize::MAX);
            for k in 0..n {
                if k == i {
                    continue;
                }
                let mut dist = T::zero();
                for j in 0..d {
                    let diff = x[(i, j)] - x[(k, j)];
                    dist += diff * diff;
                }
                if dist < best.0 {
                    best = (dist, k);
                }
            }
            best.1
        })
        .collect();

    let mut out: Vec<usize> = (0..n)
        .filter(|&i| {
            let k = nearest[i];
            z[i] == majority && z[k] != majority && nearest[k] == i
        })
        .map(|i| order[i])
        .collect();
    out.sort_unstable();
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResampleConfig {
    /// Upper bound on majority:minority after undersampling.
    pub target_majority_ratio: f64,
    pub protect_abstentions: bool,
    /// Fail instead of relaxing the target when protected rows exceed it.
    #[serde(default)]
    pub strict_ratio: bool,
    pub seed: u64,
}

impl Default for ResampleConfig {
    fn default() -> Self {
        Self {
            target_majority_ratio: DEFAULT_TARGET_RATIO,
            protect_abstentions: true,
            strict_ratio: false,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResampleReport {
    pub kept: Vec<String>,
    pub tomek_removed: Vec<String>,
    pub undersample_removed: Vec<String>,
    /// Set when protected rows forced the majority above the target.
    pub target_relaxed: bool,
}

fn is_protected<T>(e: &LabeledExample<T>, cfg: &ResampleConfig) -> bool {
    cfg.protect_abstentions && e.llm_outcome.is_abstention()
}

/// Uniformly drops unprotected majority rows until the ratio holds. Returns
/// the indices to remove, ascending.
pub fn random_undersample<T>(
    examples: &[LabeledExample<T>],
    cfg: &ResampleConfig,
) -> Result<(Vec<usize>, bool)> {
    undersample_class(examples, cfg, majority_class(examples.iter().map(|e| e.z)))
}

fn undersample_class<T>(
    examples: &[LabeledExample<T>],
    cfg: &ResampleConfig,
    majority: bool,
) -> Result<(Vec<usize>, bool)> {
    if cfg.target_majority_ratio.is_nan() || cfg.target_majority_ratio <= 0.0 {
        return Err(GateError::InvalidInput(
            "target majority ratio must be positive".into(),
        ));
    }
    let order = sorted_order(examples);
    let maj: Vec<usize> = order
        .iter()
        .copied()
        .filter(|&i| examples[i].z == majority)
        .collect();
    let minority_count = examples.len() - maj.len();
    let target = (cfg.target_majority_ratio * minority_count as f64).floor() as usize;
    if maj.len() <= target {
        return Ok((Vec::new(), false));
    }
    let (protected, mut free): (Vec<usize>, Vec<usize>) = maj
        .into_iter()
        .partition(|&i| is_protected(&examples[i], cfg));
    let mut relaxed = false;
    let keep_free = if protected.len() > target {
        if cfg.strict_ratio {
            return Err(GateError::RatioUnreachable {
                protected: protected.len(),
                target,
            });
        }
        tracing::warn!(
            protected = protected.len(),
            target,
            "protected abstentions exceed the undersampling target; keeping all of them"
        );
        relaxed = true;
        0
    } else {
        target - protected.len()
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    free.shuffle(&mut rng);
    let mut removed: Vec<usize> = free.split_off(keep_free.min(free.len()));
    removed.sort_unstable();
    Ok((removed, relaxed))
}

/// Tomek-link cleaning followed by random undersampling.
pub fn resample<T: Scalar>(
    examples: &[LabeledExample<T>],
    cfg: &ResampleConfig,
) -> Result<ResampleReport> {
    let links: Vec<usize> = tomek_links(examples)
        .into_iter()
        .filter(|&i| !is_protected(&examples[i], cfg))
        .collect();
    let mut alive = vec![true; examples.len()];
    for &i in &links {
        alive[i] = false;
    }
    let survivors: Vec<usize> = (0..examples.len()).filter(|&i| alive[i]).collect();
    let cleaned: Vec<LabeledExample<T>> = survivors.iter().map(|&i| examples[i].clone()).collect();
    // Tomek removal can flip a near-tie, so the class to thin is fixed up front.
    let majority = majority_class(examples.iter().map(|e| e.z));
    let (removed, target_relaxed) = undersample_class(&cleaned, cfg, majority)?;
    for &k in &removed {
        alive[survivors[k]] = false;
    }
    let ids_of = |idx: &mut dyn Iterator<Item = usize>| -> Vec<String> {
        let mut v: Vec<String> = idx.map(|i| examples[i].item_id.clone()).collect();
        v.sort();
        v
    };
    Ok(ResampleReport {
        kept: ids_of(&mut (0..examples.len()).filter(|&i| alive[i])),
        tomek_removed: ids_of(&mut links.iter().copied()),
        undersample_removed: ids_of(&mut removed.iter().map(|&k| survivors[k])),
        target_relaxed,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetProfile {
    OpenaiMod,
    Multimodal,
}

impl DatasetProfile {
    pub fn test_negative_count(self) -> usize {
        match self {
            DatasetProfile::OpenaiMod => 150,
            DatasetProfile::Multimodal => 45,
        }
    }
}

impl FromStr for DatasetProfile {
    type Err = GateError;
    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "openai-mod" | "openai_mod" | "openai" => Ok(DatasetProfile::OpenaiMod),
            "multimodal" => Ok(DatasetProfile::Multimodal),
            other => Err(GateError::InvalidInput(format!(
                "unknown dataset profile `{other}`"
            ))),
        }
    }
}

impl fmt::Display for DatasetProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DatasetProfile::OpenaiMod => "openai-mod",
            DatasetProfile::Multimodal => "multimodal",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub test_negative_count: usize,
    pub validation_fraction: f64,
    pub seed: u64,
}

impl SplitSpec {
    pub fn for_profile(profile: DatasetProfile) -> Self {
        Self {
            test_negative_count: profile.test_negative_count(),
            validation_fraction: DEFAULT_VALIDATION_FRACTION,
            seed: 42,
        }
    }
}

/// Item ids of each partition, each list sorted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub test: Vec<String>,
}

fn round_half_up(v: f64) -> usize {
    (v + 0.5).floor().max(0.0) as usize
}

pub fn stratified_split<T>(examples: &[LabeledExample<T>], spec: &SplitSpec) -> Result<Split> {
    if !(spec.validation_fraction > 0.0 && spec.validation_fraction < 1.0) {
        return Err(GateError::InvalidInput(
            "validation fraction must lie in (0, 1)".into(),
        ));
    }
    let order = sorted_order(examples);
    let mut neg: Vec<usize> = order.iter().copied().filter(|&i| !examples[i].z).collect();
    let mut pos: Vec<usize> = order.iter().copied().filter(|&i| examples[i].z).collect();
    let want = spec.test_negative_count;
    if want > neg.len() {
        return Err(GateError::InsufficientNegatives(format!(
            "{want} test negatives requested, {} available",
            neg.len()
        )));
    }
    let test_pos = if neg.is_empty() {
        0
    } else {
        round_half_up(want as f64 * pos.len() as f64 / neg.len() as f64).min(pos.len())
    };

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    neg.shuffle(&mut rng);
    pos.shuffle(&mut rng);
    let neg_rest = neg.split_off(want);
    let pos_rest = pos.split_off(test_pos);
    let mut test = neg;
    test.extend(pos);

    let n_val_neg = round_half_up(spec.validation_fraction * neg_rest.len() as f64);
    let n_val_pos = round_half_up(spec.validation_fraction * pos_rest.len() as f64);
    let (val_neg, train_neg) = neg_rest.split_at(n_val_neg.min(neg_rest.len()));
    let (val_pos, train_pos) = pos_rest.split_at(n_val_pos.min(pos_rest.len()));
    if train_neg.is_empty() || train_pos.is_empty() {
        return Err(GateError::InsufficientNegatives(format!(
            "training split would have {} negatives and {} positives",
            train_neg.len(),
            train_pos.len()
        )));
    }
    let ids = |idx: Vec<usize>| -> Vec<String> {
        let mut v: Vec<String> = idx
            .into_iter()
            .map(|i| examples[i].item_id.clone())
            .collect();
        v.sort();
        v
    };
    Ok(Split {
        train: ids([train_neg, train_pos].concat()),
        validation: ids([val_neg, val_pos].concat()),
        test: ids(test),
    })
}

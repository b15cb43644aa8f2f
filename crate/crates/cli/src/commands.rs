use std::path::{Path, PathBuf};
use std::time::Duration;

use lppgate_core::dataset::{stratified_split, Dataset, Split};
use lppgate_core::eval::{ablation_csv, cost_csv, predictive_csv, AblationRow, META_MODEL};
use lppgate_core::features::Family;
use lppgate_core::io::{
    features_to_csv, ids_to_text, labels_to_csv, read_feature_csv, read_ids, read_labels,
    read_string, read_traces, sidecar_path, traces_to_jsonl, FeatureSidecar,
};
use lppgate_core::pipeline::{
    choose_threshold, compare_methods, evaluate_gate, extract_features, gate_scores,
    meta_model_cost, policy_report, run_ablation, sensitivity_ratios, train_gate,
};
use lppgate_core::policy::{evaluate_at, ConfusionCounts, PolicyResult};
use lppgate_core::synth::generate;
use lppgate_core::trainer::TrainedGate;
use lppgate_core::GateError;
use lppgate_gateway::runner::read_items;
use lppgate_gateway::{OpenAiCompatible, Provider, StubProvider};
use serde::Serialize;

use crate::config::CliConfig;
use crate::context::{manifest_for, RunContext};
use crate::error::{CliError, CliResult};

/// Where a split's id lists live inside a split directory.
pub fn split_files(dir: &Path) -> [PathBuf; 3] {
    [
        dir.join("train.txt"),
        dir.join("validation.txt"),
        dir.join("test.txt"),
    ]
}

fn load_dataset(ctx: &mut RunContext, features: &Path, labels: &Path) -> CliResult<Dataset<f64>> {
    ctx.input(features)?;
    ctx.input(labels)?;
    let table = read_feature_csv(features)?;
    let labels = read_labels(labels)?;
    let data = table.join_labels(&labels)?;
    if data.len() < table.item_ids.len() {
        ctx.warn(format!(
            "{} feature rows have no label and were skipped",
            table.item_ids.len() - data.len()
        ));
    }
    Ok(data)
}

fn load_split(ctx: &mut RunContext, dir: &Path) -> CliResult<Split> {
    let [tr, va, te] = split_files(dir);
    for p in [&tr, &va, &te] {
        ctx.input(p)?;
    }
    Ok(Split {
        train: read_ids(&tr)?,
        validation: read_ids(&va)?,
        test: read_ids(&te)?,
    })
}

fn load_model(ctx: &mut RunContext, path: &Path) -> CliResult<TrainedGate<f64>> {
    ctx.input(path)?;
    Ok(TrainedGate::from_artifact_json(&read_string(path)?)?)
}

fn model_bytes(gate: &TrainedGate<f64>) -> Vec<u8> {
    let mut s = gate.to_artifact_json();
    s.push('\n');
    s.into_bytes()
}

fn require_threshold(gate: &TrainedGate<f64>) -> CliResult<f64> {
    gate.tau_star.ok_or_else(|| {
        GateError::InvalidInput("model has no decision threshold; run `lppgate sweep` first".into())
            .into()
    })
}

pub fn synth(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    traces: &Path,
    labels: &Path,
) -> CliResult<PathBuf> {
    let corpus = generate(&cfg.synth)?;
    ctx.write(traces, traces_to_jsonl(&corpus.traces).as_bytes())?;
    ctx.write(labels, &labels_to_csv(&corpus.labels)?)?;
    Ok(manifest_for(traces))
}

pub fn generate_traces(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    items: &Path,
    traces: &Path,
) -> CliResult<PathBuf> {
    ctx.input(items)?;
    let items = read_items(items)?;
    let provider: Box<dyn Provider> = match cfg.provider.kind.as_str() {
        "stub" => {
            let fixture = cfg.provider.stub_fixture.as_deref().ok_or_else(|| {
                CliError::Usage("the stub provider needs a fixture (--stub PATH)".into())
            })?;
            ctx.input(fixture)?;
            Box::new(StubProvider::from_fixture(fixture)?)
        }
        _ => Box::new(OpenAiCompatible::from_env(
            cfg.provider.base_url.clone(),
            cfg.provider.model.clone(),
            Duration::from_secs(cfg.provider.timeout_secs),
        )?),
    };
    if cfg.gateway.allow_nonstandard_decoding && !cfg.gateway.decoding.is_default() {
        ctx.warn("non-default decoding parameters in use (override flag set)");
    }
    let report = lppgate_gateway::run(provider.as_ref(), &items, &cfg.gateway)?;
    for id in &report.no_logprobs {
        ctx.warn(format!("item {id}: provider returned no log-probabilities"));
    }
    ctx.write(traces, traces_to_jsonl(&report.traces).as_bytes())?;
    ctx.give_ups(report.give_ups);
    Ok(manifest_for(traces))
}

pub fn extract(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    traces: &Path,
    out: &Path,
) -> CliResult<PathBuf> {
    ctx.input(traces)?;
    let traces = read_traces(traces)?;
    let p = &cfg.pipeline;
    let (table, excluded) = extract_features(&traces, &p.families, &p.feature_config)?;
    if !excluded.is_empty() {
        ctx.warn(format!(
            "{} traces excluded from feature extraction",
            excluded.len()
        ));
    }
    let sidecar = FeatureSidecar {
        families: p.families.clone(),
        feature_config: p.feature_config,
        feature_names: table.feature_names.clone(),
        excluded,
    };
    ctx.write(out, &features_to_csv(&table)?)?;
    ctx.write_json(&sidecar_path(out), &sidecar)?;
    Ok(manifest_for(out))
}

pub fn split(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    features: &Path,
    labels: &Path,
    out_dir: &Path,
) -> CliResult<PathBuf> {
    let data = load_dataset(ctx, features, labels)?;
    let s = stratified_split(&data.examples, &cfg.pipeline.split_spec())?;
    let [tr, va, te] = split_files(out_dir);
    ctx.write(&tr, ids_to_text(&s.train).as_bytes())?;
    ctx.write(&va, ids_to_text(&s.validation).as_bytes())?;
    ctx.write(&te, ids_to_text(&s.test).as_bytes())?;
    Ok(out_dir.join("split.manifest.json"))
}

#[derive(Serialize)]
struct TrainReport<'a> {
    selected: &'a lppgate_core::trainer::RidgeConfig,
    best_index: usize,
    best_score: Option<f64>,
    configs_evaluated: usize,
    resample: &'a lppgate_core::dataset::ResampleReport,
    grid: &'a [lppgate_core::trainer::CvEntry],
}

pub fn train(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    features: &Path,
    labels: &Path,
    split_dir: &Path,
    model: &Path,
) -> CliResult<PathBuf> {
    let data = load_dataset(ctx, features, labels)?;
    let s = load_split(ctx, split_dir)?;
    let cols = lppgate_core::pipeline::columns_for(&data.feature_names, &cfg.pipeline.families);
    if cols.is_empty() {
        return Err(GateError::EmptyFamilySet.into());
    }
    let train = data.subset(&s.train).select_features(&cols)?;
    let out = train_gate(&train, &cfg.pipeline)?;
    if out.resample.target_relaxed {
        ctx.warn("undersampling target relaxed to keep protected abstentions");
    }
    let report = TrainReport {
        selected: &out.grid.best,
        best_index: out.grid.best_index,
        best_score: out.grid.entries[out.grid.best_index].score,
        configs_evaluated: out.grid.entries.len(),
        resample: &out.resample,
        grid: &out.grid.entries,
    };
    ctx.write(model, &model_bytes(&out.gate))?;
    ctx.write_json(&model.with_extension("train.json"), &report)?;
    Ok(manifest_for(model))
}

#[derive(Serialize)]
struct CurvePoint {
    tau: f64,
    expected_cost: f64,
    escalations: usize,
}

#[derive(Serialize)]
struct SweepReport {
    tau_star: f64,
    expected_cost: f64,
    escalations: usize,
    escalation_ratio: f64,
    counts: ConfusionCounts,
    curve: Vec<CurvePoint>,
}

pub fn sweep(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    model: &Path,
    features: &Path,
    labels: &Path,
    split_dir: &Path,
    out: &Path,
) -> CliResult<PathBuf> {
    let mut gate = load_model(ctx, model)?;
    let data = load_dataset(ctx, features, labels)?;
    let s = load_split(ctx, split_dir)?;
    let validation = data.subset(&s.validation);
    let best: PolicyResult = choose_threshold(&mut gate, &validation, &cfg.pipeline)?;
    let scores = gate_scores(&gate, &validation)?;
    let z = validation.z();
    let curve = cfg
        .pipeline
        .tau
        .points()
        .into_iter()
        .map(|tau| {
            let r = evaluate_at(&scores, &z, &cfg.pipeline.cost, tau)?;
            Ok(CurvePoint {
                tau,
                expected_cost: r.expected_cost,
                escalations: r.escalations,
            })
        })
        .collect::<Result<Vec<_>, GateError>>()?;
    let report = SweepReport {
        tau_star: best.tau_star,
        expected_cost: best.expected_cost,
        escalations: best.escalations,
        escalation_ratio: best.escalation_ratio,
        counts: best.counts,
        curve,
    };
    ctx.write(out, &model_bytes(&gate))?;
    ctx.write_json(&out.with_extension("sweep.json"), &report)?;
    Ok(out.with_extension("sweep.manifest.json"))
}

pub fn evaluate(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    model: &Path,
    features: &Path,
    labels: &Path,
    split_dir: &Path,
    out_dir: &Path,
) -> CliResult<PathBuf> {
    let gate = load_model(ctx, model)?;
    require_threshold(&gate)?;
    let data = load_dataset(ctx, features, labels)?;
    let s = load_split(ctx, split_dir)?;
    let (validation, test) = (data.subset(&s.validation), data.subset(&s.test));
    let comparison = compare_methods(&gate, &validation, &test, &cfg.pipeline)?;
    let meta = comparison.get(META_MODEL).expect("meta-model row present");
    let policy = policy_report(meta, &test, &cfg.pipeline);
    ctx.write_json(&out_dir.join("comparison.json"), &comparison)?;
    ctx.write(
        &out_dir.join("predictive.csv"),
        &predictive_csv(&comparison),
    )?;
    ctx.write(&out_dir.join("cost.csv"), &cost_csv(&comparison))?;
    ctx.write_json(&out_dir.join("policy.json"), &policy)?;
    Ok(out_dir.join("evaluate.manifest.json"))
}

pub fn ablate(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    features: &Path,
    labels: &Path,
    split_dir: &Path,
    families: &[String],
    out: &Path,
) -> CliResult<PathBuf> {
    let data = load_dataset(ctx, features, labels)?;
    let s = load_split(ctx, split_dir)?;
    let drop: Vec<Family> = if families.is_empty() {
        cfg.pipeline.families.iter().collect()
    } else {
        families
            .iter()
            .map(|f| f.parse())
            .collect::<Result<_, GateError>>()?
    };
    let full = meta_model_cost(&data, &s, &cfg.pipeline)?;
    let rows: Vec<AblationRow> = run_ablation(&data, &s, &cfg.pipeline, &drop, full)?;
    ctx.write(out, &ablation_csv(&rows))?;
    Ok(manifest_for(out))
}

pub fn sensitivity(
    ctx: &mut RunContext,
    cfg: &CliConfig,
    model: &Path,
    features: &Path,
    labels: &Path,
    split_dir: &Path,
    out: &Path,
) -> CliResult<PathBuf> {
    let gate = load_model(ctx, model)?;
    require_threshold(&gate)?;
    let data = load_dataset(ctx, features, labels)?;
    let s = load_split(ctx, split_dir)?;
    let (validation, test) = (data.subset(&s.validation), data.subset(&s.test));
    let meta = evaluate_gate(&gate, &validation, &test, &cfg.pipeline)?;
    let report = policy_report(&meta, &test, &cfg.pipeline);
    debug_assert_eq!(
        report.sensitivity.len(),
        sensitivity_ratios(&cfg.pipeline).len()
    );
    let mut csv = String::from("r,relative_cost\n");
    for p in &report.sensitivity {
        csv.push_str(&format!("{:?},{:?}\n", p.r, p.relative_cost));
    }
    ctx.write(out, csv.as_bytes())?;
    ctx.write_json(&out.with_extension("json"), &report)?;
    Ok(manifest_for(out))
}

//! Acceptance suite: ten criteria, one PASS/FAIL line each.
//!
//! Run with `cargo test -p lppgate-cli --test acceptance -- --nocapture` to
//! see the report. Tolerances and budgets are pinned as constants below.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use lppgate_core::dataset::stratified_split;
use lppgate_core::eval::{BaselineFeature, META_MODEL};
use lppgate_core::features::{assemble_feature_vector, Family, FamilySet, FeatureConfig};
use lppgate_core::features::{compute_topk_features, TopKDistribution};
use lppgate_core::pipeline::{ablation_cost, extract_features, run_pipeline, PipelineConfig};
use lppgate_core::policy::{
    always_trust_cost, cost_ratio_sensitivity, counts_at, expected_cost, CostModel,
};
use lppgate_core::schema::{
    OutcomeLabel, ResponseTrace, Span, StructuredResponse, TokenCandidate, TokenRecord,
};
use lppgate_core::synth::{generate, SynthConfig};
use lppgate_core::trainer::{
    fit_ridge_closed_form, fit_ridge_lsqr, grid_search, pava, ridge_objective, CalibrationMethod,
    Calibrator, GridSpace, Solver, Standardizer,
};
use lppgate_gateway::{
    run, GatewayItem, ItemOutcome, RunnerConfig, StubEntry, StubProvider, StubResponse,
};
use nalgebra::DMatrix;
use num_rational::Ratio;
use num_traits::Zero;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

const FEATURE_TOL: f64 = 1e-9;
const FEATURE_BUDGET: Duration = Duration::from_secs(5);
const SENSITIVITY_TOL: f64 = 1e-9;
const RIDGE_HAND_TOL: f64 = 1e-12;
const RIDGE_GRAD_TOL: f64 = 1e-6;
const RIDGE_SOLVER_TOL: f64 = 1e-6;
const PAVA_MAX_N: usize = 10;
const PAVA_BUDGET: Duration = Duration::from_secs(10);
const ECE_LIMIT: f64 = 0.05;
const ECE_BINS: usize = 10;
const PIPELINE_BUDGET: Duration = Duration::from_secs(300);
const GRID_BUDGET: Duration = Duration::from_secs(600);

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn check(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// 1 ------------------------------------------------------------------------

fn outcome_trace(candidates: Vec<TokenCandidate>) -> ResponseTrace {
    let chosen = candidates
        .iter()
        .max_by(|a, b| a.logprob.total_cmp(&b.logprob))
        .cloned()
        .expect("non-empty");
    ResponseTrace {
        item_id: "oracle".into(),
        attempt: 1,
        structured: StructuredResponse::direct(OutcomeLabel::Yes),
        tokens: vec![TokenRecord::new(Span::Outcome, chosen, candidates).expect("valid record")],
        logprobs_unavailable: false,
    }
}

fn feature_oracle() -> Outcome {
    let t0 = Instant::now();
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/feature_oracle.json");
    let doc: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&path).map_err(|e| e.to_string())?)
            .map_err(|e| e.to_string())?;
    let families: FamilySet = [
        Family::OutcomeTopK,
        Family::FilteredOutcome,
        Family::LogOddsMargin,
    ]
    .into_iter()
    .collect();
    let cfg = FeatureConfig::default();
    let cases = doc["cases"].as_array().ok_or("fixture has no cases")?;
    let mut worst = 0.0_f64;
    let mut compared = 0usize;
    for (i, case) in cases.iter().enumerate() {
        let cands: Vec<TokenCandidate> = case["candidates"]
            .as_array()
            .unwrap()
            .iter()
            .map(|c| TokenCandidate::new(c[0].as_str().unwrap(), c[1].as_f64().unwrap()))
            .collect();
        let fv = assemble_feature_vector::<f64>(&outcome_trace(cands), &families, &cfg)
            .map_err(|e| format!("case {i}: {e}"))?;
        let expected = case["expected"].as_object().unwrap();
        check(fv.len() == expected.len(), || {
            format!(
                "case {i}: {} features vs {} expected",
                fv.len(),
                expected.len()
            )
        })?;
        for (name, want) in expected {
            let want = want.as_f64().unwrap();
            let got = fv
                .get(name)
                .ok_or_else(|| format!("case {i}: missing {name}"))?;
            let err = (got - want).abs() / want.abs().max(1.0);
            worst = worst.max(err);
            check(err <= FEATURE_TOL, || {
                format!("case {i} {name}: got {got:e}, want {want:e}")
            })?;
            compared += 1;
        }
    }
    check(cases.len() == 1000, || {
        format!("fixture has {} cases", cases.len())
    })?;

    let dyadic = compute_topk_features(&TopKDistribution {
        probs: vec![0.5, 0.25, 0.125, 0.0625, 0.0625],
    });
    check(dyadic.entropy == 1.875, || {
        format!("dyadic H2 = {:e}", dyadic.entropy)
    })?;
    check(dyadic.effective_choices == 1.875f64.exp2(), || {
        "dyadic N_eff".into()
    })?;
    check(
        dyadic.top2_margin == 0.25
            && dyadic.top2_margin_normalized == 0.5
            && dyadic.top1_top2_ratio == 2.0,
        || "dyadic margins".into(),
    )?;
    let uniform = compute_topk_features(&TopKDistribution {
        probs: vec![0.2; 5],
    });
    check(uniform.entropy == 5f64.log2(), || {
        format!("uniform H2 = {:e} vs {:e}", uniform.entropy, 5f64.log2())
    })?;
    check(
        uniform.normalized_entropy == 1.0
            && uniform.top2_margin == 0.0
            && uniform.top1_top2_ratio == 1.0,
        || "uniform closed forms".into(),
    )?;

    let elapsed = t0.elapsed();
    check(elapsed < FEATURE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{} cases, {compared} values, worst rel err {worst:.1e}, {elapsed:.2?}",
        cases.len()
    ))
}

// 2 ------------------------------------------------------------------------

fn cost_anchors() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    for inst in 0..100 {
        let n = rng.random_range(1..300);
        let scores: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        let z: Vec<bool> = (0..n).map(|_| rng.random_bool(0.8)).collect();
        let c_mis = Ratio::new(rng.random_range(1..50i64), rng.random_range(1..20i64));
        let c_rev = Ratio::new(rng.random_range(1..50i64), rng.random_range(1..20i64));
        let m = CostModel { c_mis, c_rev };
        let lo = scores.iter().copied().fold(f64::INFINITY, f64::min) - 0.01;
        let hi = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max) + 0.01;
        let errors = z.iter().filter(|&&v| !v).count() as i64;

        let below = expected_cost(&counts_at(&scores, &z, lo).map_err(|e| e.to_string())?, &m);
        check(below == always_trust_cost(&z, &m), || {
            format!("instance {inst}: trust-all {below} != always-trust")
        })?;
        check(below == c_mis * Ratio::from_integer(errors), || {
            format!("instance {inst}: always-trust != c_mis * I")
        })?;

        let above = expected_cost(&counts_at(&scores, &z, hi).map_err(|e| e.to_string())?, &m);
        let want = c_rev * Ratio::from_integer(n as i64) - c_mis * Ratio::from_integer(errors);
        check(above == want, || {
            format!("instance {inst}: escalate-all {above} != {want}")
        })?;
    }
    Ok("100 exact rational instances".into())
}

// 3 ------------------------------------------------------------------------

fn small_corpus(seed: u64, n: usize) -> lppgate_core::dataset::Dataset<f64> {
    let c = generate(&SynthConfig {
        n_items: n,
        seed,
        ..SynthConfig::default()
    })
    .expect("corpus");
    let (table, _) = extract_features(&c.traces, &FamilySet::all(), &FeatureConfig::default())
        .expect("features");
    table.join_labels(&c.labels).expect("join")
}

fn sensitivity_consistency() -> Outcome {
    let models = [(1.0, 0.64), (2.0, 1.28), (1.0, 0.4), (1.0, 0.9), (3.0, 1.5)];
    let mut checked = 0;
    let mut worst = 0.0_f64;
    for (k, &(c_mis, c_rev)) in models.iter().enumerate() {
        let data = small_corpus(42 + k as u64, 1500);
        let cfg = PipelineConfig {
            cost: CostModel { c_mis, c_rev },
            ..PipelineConfig::default()
        };
        let split =
            stratified_split(&data.examples, &cfg.split_spec()).map_err(|e| e.to_string())?;
        let out = run_pipeline(&data, &split, &cfg).map_err(|e| e.to_string())?;
        let r = c_rev / c_mis;
        let point = out
            .policy
            .sensitivity
            .iter()
            .find(|p| p.r == r)
            .ok_or_else(|| format!("run {k}: r = {r} missing from report"))?;
        let err = (point.relative_cost - out.policy.expected_cost / c_mis).abs();
        worst = worst.max(err);
        check(err <= SENSITIVITY_TOL, || {
            format!(
                "run {k}: {} vs {}",
                point.relative_cost,
                out.policy.expected_cost / c_mis
            )
        })?;
        for m in &out.comparison.methods {
            let s = cost_ratio_sensitivity(&m.counts, &[r])[0].relative_cost;
            let err = (s - m.expected_cost / c_mis).abs();
            worst = worst.max(err);
            check(err <= SENSITIVITY_TOL, || {
                format!("run {k} {}: {s} vs {}", m.method, m.expected_cost / c_mis)
            })?;
            checked += 1;
        }
    }
    Ok(format!(
        "{} runs, {checked} method reports, worst abs err {worst:.1e}",
        models.len()
    ))
}

// 4 ------------------------------------------------------------------------

fn ridge_correctness() -> Outcome {
    let x = DMatrix::from_row_slice(2, 1, &[1.0, -1.0]);
    let fit = fit_ridge_closed_form::<f64>(&x, &[1.0, 0.0], &[1.0, 1.0], 2.0)
        .map_err(|e| e.to_string())?;
    check(
        (fit.coef[0] - 0.25).abs() <= RIDGE_HAND_TOL
            && (fit.intercept - 0.5).abs() <= RIDGE_HAND_TOL,
        || format!("hand case gave w={}, b={}", fit.coef[0], fit.intercept),
    )?;

    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (mut worst_grad, mut worst_gap) = (0.0_f64, 0.0_f64);
    for p in 0..50 {
        let n = rng.random_range(40..120);
        let d = rng.random_range(2..8);
        let x = DMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng));
        let z: Vec<f64> = (0..n)
            .map(|_| if rng.random_bool(0.6) { 1.0 } else { 0.0 })
            .collect();
        let w: Vec<f64> = (0..n).map(|_| rng.random_range(0.5..2.0)).collect();
        let alpha = [0.1, 1.0, 10.0][p % 3];
        let cf = fit_ridge_closed_form(&x, &z, &w, alpha).map_err(|e| e.to_string())?;
        let it = fit_ridge_lsqr(&x, &z, &w, alpha, 1e-12, 10_000).map_err(|e| e.to_string())?;
        for (a, b) in cf
            .coef
            .iter()
            .chain([&cf.intercept])
            .zip(it.coef.iter().chain([&it.intercept]))
        {
            worst_gap = worst_gap.max((a - b).abs());
        }
        // Central differences on every parameter, intercept last.
        let mut params: Vec<f64> = cf.coef.clone();
        params.push(cf.intercept);
        let f = |p: &[f64]| ridge_objective(&x, &z, &w, alpha, &p[..d], p[d]);
        let h = 1e-6;
        for j in 0..=d {
            let mut up = params.clone();
            let mut dn = params.clone();
            up[j] += h;
            dn[j] -= h;
            worst_grad = worst_grad.max(((f(&up) - f(&dn)) / (2.0 * h)).abs());
        }
    }
    check(worst_grad < RIDGE_GRAD_TOL, || {
        format!("gradient {worst_grad:e} at optimum")
    })?;
    check(worst_gap <= RIDGE_SOLVER_TOL, || {
        format!("closed form vs LSQR gap {worst_gap:e}")
    })?;
    Ok(format!("hand case exact, max |grad| {worst_grad:.1e}, max solver gap {worst_gap:.1e} over 50 problems"))
}

// 5 ------------------------------------------------------------------------

/// Exact isotonic fit by dynamic programming over candidate levels: the
/// optimum only takes values that are means of contiguous runs, so the best
/// fit of y[..=i] ending at level L is the cheapest fit of y[..i] ending at a
/// level <= L plus (y_i - L)^2.
fn isotonic_dp(y: &[i64]) -> Vec<Ratio<i64>> {
    let n = y.len();
    let mut levels: Vec<Ratio<i64>> = Vec::new();
    for a in 0..n {
        let mut s = 0;
        for (len, &v) in y[a..].iter().enumerate() {
            s += v;
            levels.push(Ratio::new(s, len as i64 + 1));
        }
    }
    levels.sort();
    levels.dedup();
    let m = levels.len();
    let sq = |v: i64, l: Ratio<i64>| (Ratio::from_integer(v) - l) * (Ratio::from_integer(v) - l);
    // cost[i][j]: best cost of y[..=i] with fitted y_i = levels[j]; arg for backtracking.
    let mut cost = vec![vec![Ratio::zero(); m]; n];
    let mut arg = vec![vec![0usize; m]; n];
    for j in 0..m {
        cost[0][j] = sq(y[0], levels[j]);
    }
    for i in 1..n {
        let (mut best, mut best_j) = (cost[i - 1][0], 0);
        for j in 0..m {
            if cost[i - 1][j] < best {
                best = cost[i - 1][j];
                best_j = j;
            }
            cost[i][j] = best + sq(y[i], levels[j]);
            arg[i][j] = best_j;
        }
    }
    let mut j = (0..m).min_by_key(|&j| cost[n - 1][j]).unwrap();
    let mut out = vec![Ratio::zero(); n];
    for i in (0..n).rev() {
        out[i] = levels[j];
        j = arg[i][j];
    }
    out
}

fn sse(y: &[i64], f: &[Ratio<i64>]) -> Ratio<i64> {
    y.iter()
        .zip(f)
        .map(|(&v, &l)| (Ratio::from_integer(v) - l) * (Ratio::from_integer(v) - l))
        .fold(Ratio::zero(), |a, b| a + b)
}

fn pava_oracle() -> Outcome {
    let t0 = Instant::now();
    let mut sequences = 0;
    for n in 1..=PAVA_MAX_N {
        for bits in 0u32..(1 << n) {
            let y: Vec<i64> = (0..n).map(|i| ((bits >> i) & 1) as i64).collect();
            let blocks: Vec<(Ratio<i64>, Ratio<i64>)> = y
                .iter()
                .map(|&v| (Ratio::from_integer(v), Ratio::from_integer(1)))
                .collect();
            let fit = pava(&blocks);
            check(fit.windows(2).all(|w| w[0] <= w[1]), || {
                format!("{y:?}: output decreases")
            })?;
            let dp = isotonic_dp(&y);
            check(sse(&y, &fit) == sse(&y, &dp), || {
                format!("{y:?}: PAVA SSE {} vs DP {}", sse(&y, &fit), sse(&y, &dp))
            })?;
            check(fit == dp, || format!("{y:?}: PAVA {fit:?} vs DP {dp:?}"))?;
            let float: Vec<(f64, f64)> = y.iter().map(|&v| (v as f64, 1.0)).collect();
            let ff = pava(&float);
            check(ff.windows(2).all(|w| w[0] <= w[1]), || {
                format!("{y:?}: float output decreases")
            })?;
            sequences += 1;
        }
    }
    let elapsed = t0.elapsed();
    check(elapsed < PAVA_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{sequences} binary sequences (n <= {PAVA_MAX_N}) match exactly, {elapsed:.2?}"
    ))
}

// 6 ------------------------------------------------------------------------

fn ece(probs: &[f64], z: &[bool]) -> f64 {
    let mut idx: Vec<usize> = (0..probs.len()).collect();
    idx.sort_by(|&a, &b| probs[a].total_cmp(&probs[b]));
    let n = probs.len();
    let mut total = 0.0;
    for b in 0..ECE_BINS {
        let bin = &idx[b * n / ECE_BINS..(b + 1) * n / ECE_BINS];
        if bin.is_empty() {
            continue;
        }
        let conf: f64 = bin.iter().map(|&i| probs[i]).sum::<f64>() / bin.len() as f64;
        let acc = bin.iter().filter(|&&i| z[i]).count() as f64 / bin.len() as f64;
        total += bin.len() as f64 / n as f64 * (conf - acc).abs();
    }
    total
}

fn calibration_sanity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let normal = Normal::new(0.0, 2.0).unwrap();
    let mut draw = |n: usize| -> (Vec<f64>, Vec<bool>) {
        let s: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let z = s
            .iter()
            .map(|&v| rng.random_bool(1.0 / (1.0 + (-v).exp())))
            .collect();
        (s, z)
    };
    let (s, z) = draw(5000);
    let (s_new, z_new) = draw(5000);
    let mut parts = Vec::new();
    for method in [CalibrationMethod::Sigmoid, CalibrationMethod::Isotonic] {
        let cal = Calibrator::fit(method, &s, &z);
        let fit_ece = ece(&s.iter().map(|&v| cal.apply(v)).collect::<Vec<_>>(), &z);
        let new_ece = ece(
            &s_new.iter().map(|&v| cal.apply(v)).collect::<Vec<_>>(),
            &z_new,
        );
        check(fit_ece < ECE_LIMIT && new_ece < ECE_LIMIT, || {
            format!("{method:?}: ECE {fit_ece:.4} / held-out {new_ece:.4}")
        })?;
        parts.push(format!(
            "{method:?} ECE {fit_ece:.4} (held-out {new_ece:.4})"
        ));
    }
    Ok(parts.join(", "))
}

// 7 ------------------------------------------------------------------------

fn synthetic_frontier() -> Outcome {
    let t0 = Instant::now();
    let synth = SynthConfig::default();
    check(
        synth.n_items == 3000 && synth.error_rate == 0.15 && synth.abstention_rate == 0.03,
        || "synthetic defaults changed".into(),
    )?;
    let data = small_corpus(synth.seed, synth.n_items);
    let cfg = PipelineConfig::default();
    let split = stratified_split(&data.examples, &cfg.split_spec()).map_err(|e| e.to_string())?;
    let out = run_pipeline(&data, &split, &cfg).map_err(|e| e.to_string())?;
    let meta = out
        .comparison
        .get(META_MODEL)
        .ok_or("no meta-model row")?
        .expected_cost;
    let mut parts = vec![format!("meta {meta}")];
    for b in BaselineFeature::ALL {
        let c = out
            .comparison
            .get(b.label())
            .ok_or("missing baseline")?
            .expected_cost;
        check(meta < c, || {
            format!("meta-model {meta} not below {} {c}", b.label())
        })?;
        parts.push(format!("{} {c}", b.label()));
    }
    let without =
        ablation_cost(&data, &split, &cfg, Family::Attribution).map_err(|e| e.to_string())?;
    check(without > meta, || {
        format!("dropping attribution gave {without} vs full {meta}")
    })?;
    let elapsed = t0.elapsed();
    check(elapsed < PIPELINE_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{}; without attribution {without}; {elapsed:.2?}",
        parts.join(", ")
    ))
}

// 8 ------------------------------------------------------------------------

fn cli(dir: &Path, args: &[&str]) -> Result<(), String> {
    let out = Command::new(env!("CARGO_BIN_EXE_lppgate"))
        .current_dir(dir)
        .args(args)
        .output()
        .map_err(|e| e.to_string())?;
    check(out.status.success(), || {
        format!("{args:?}: {}", String::from_utf8_lossy(&out.stderr))
    })
}

fn full_run(dir: &Path) -> Result<BTreeMap<String, Vec<u8>>, String> {
    let data = [
        "--features",
        "features.csv",
        "--labels",
        "labels.csv",
        "--split-dir",
        "split",
    ];
    let with = |cmd: &'static str, rest: &[&'static str]| -> Vec<&'static str> {
        let mut v = vec![cmd];
        v.extend(data);
        v.extend(rest);
        v
    };
    cli(
        dir,
        &[
            "--seed",
            "42",
            "synth",
            "--traces",
            "traces.jsonl",
            "--labels",
            "labels.csv",
        ],
    )?;
    cli(
        dir,
        &[
            "extract",
            "--traces",
            "traces.jsonl",
            "--out",
            "features.csv",
        ],
    )?;
    cli(
        dir,
        &[
            "--seed",
            "42",
            "split",
            "--features",
            "features.csv",
            "--labels",
            "labels.csv",
            "--out-dir",
            "split",
        ],
    )?;
    cli(dir, &with("train", &["--model", "model.json"]))?;
    cli(dir, &with("sweep", &["--model", "model.json"]))?;
    cli(
        dir,
        &with(
            "evaluate",
            &["--model", "model.json", "--out-dir", "report"],
        ),
    )?;
    cli(
        dir,
        &with(
            "sensitivity",
            &["--model", "model.json", "--out", "sensitivity.csv"],
        ),
    )?;
    cli(
        dir,
        &with(
            "ablate",
            &["--family", "attribution", "--out", "ablation.csv"],
        ),
    )?;
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else if !p.to_string_lossy().ends_with(".manifest.json") {
                let rel = p.strip_prefix(dir).unwrap().to_string_lossy().into_owned();
                files.insert(rel, std::fs::read(&p).map_err(|e| e.to_string())?);
            }
        }
    }
    Ok(files)
}

fn determinism() -> Outcome {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = full_run(a.path())?;
    let fb = full_run(b.path())?;
    check(fa.keys().eq(fb.keys()), || {
        format!("artifact sets differ: {:?} vs {:?}", fa.keys(), fb.keys())
    })?;
    for (name, bytes) in &fa {
        check(fb[name] == *bytes, || {
            format!("{name} differs between runs")
        })?;
    }
    for required in [
        "model.json",
        "report/comparison.json",
        "report/cost.csv",
        "report/policy.json",
        "sensitivity.csv",
    ] {
        check(fa.contains_key(required), || format!("{required} missing"))?;
    }
    let model: serde_json::Value =
        serde_json::from_slice(&fa["model.json"]).map_err(|e| e.to_string())?;
    let tau = model["gate"]["tau_star"]
        .as_f64()
        .ok_or("model has no tau_star")?;
    Ok(format!(
        "{} artifacts byte-identical across two runs, tau* = {tau}",
        fa.len()
    ))
}

// 9 ------------------------------------------------------------------------

fn retry_contract() -> Outcome {
    let malformed = |t: &str| StubResponse {
        text: t.into(),
        logprobs: true,
        outcome_candidates: vec![],
    };
    let valid = StubResponse {
        text: r#"{"outcome":"0","p_correct":70,"band":"H"}"#.into(),
        logprobs: true,
        outcome_candidates: vec![
            TokenCandidate::new("0", -0.2),
            TokenCandidate::new("1", -1.7),
        ],
    };
    let entries = vec![
        StubEntry {
            item_id: "recovers".into(),
            responses: vec![
                malformed("{oops"),
                malformed(r#"{"outcome":"7"}"#),
                malformed("no json"),
                valid,
            ],
        },
        StubEntry {
            item_id: "fails".into(),
            responses: vec![
                malformed("{"),
                malformed("{"),
                malformed("{"),
                malformed("{"),
            ],
        },
    ];
    let items: Vec<GatewayItem> = ["recovers", "fails"]
        .iter()
        .map(|id| GatewayItem {
            item_id: id.to_string(),
            fields: BTreeMap::from([
                ("TEXT".into(), "x".into()),
                ("CONCEPT_DEFINITION".into(), "c".into()),
            ]),
        })
        .collect();
    let provider = StubProvider::new(entries);
    let cfg = RunnerConfig {
        backoff_ms: 0,
        ..RunnerConfig::default()
    };
    match lppgate_gateway::run_item(&provider, &items[0], &cfg).map_err(|e| e.to_string())? {
        ItemOutcome::Accepted(t) => check(t.attempt == 4, || {
            format!("accepted on attempt {}", t.attempt)
        })?,
        other => return Err(format!("expected acceptance, got {other:?}")),
    }
    let report = run(&provider, &items, &cfg).map_err(|e| e.to_string())?;
    check(
        report.traces.len() == 1 && report.give_ups.len() == 1,
        || "library run counts".into(),
    )?;

    // Through the CLI: the give-up must be logged in the run manifest.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let d = dir.path();
    std::fs::write(d.join("fixture.jsonl"), provider.to_fixture()).map_err(|e| e.to_string())?;
    let items_jsonl: String = items
        .iter()
        .map(|i| serde_json::to_string(i).unwrap() + "\n")
        .collect();
    std::fs::write(d.join("items.jsonl"), items_jsonl).map_err(|e| e.to_string())?;
    cli(
        d,
        &[
            "--stub",
            "fixture.jsonl",
            "generate",
            "--items",
            "items.jsonl",
            "--traces",
            "traces.jsonl",
        ],
    )?;
    let traces = std::fs::read_to_string(d.join("traces.jsonl")).map_err(|e| e.to_string())?;
    let lines: Vec<serde_json::Value> = traces
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    check(lines.len() == 1 && lines[0]["attempt"] == 4, || {
        format!("CLI traces: {traces}")
    })?;
    let manifest: serde_json::Value = serde_json::from_str(
        &std::fs::read_to_string(d.join("traces.manifest.json")).map_err(|e| e.to_string())?,
    )
    .map_err(|e| e.to_string())?;
    let g = &manifest["give_ups"];
    check(
        g.as_array().map(Vec::len) == Some(1)
            && g[0]["item_id"] == "fails"
            && g[0]["attempts"] == 4,
        || format!("manifest give-ups: {g}"),
    )?;
    Ok(
        "3 malformed + valid accepted at attempt 4; 4 malformed gave up and logged in manifest"
            .into(),
    )
}

// 10 -----------------------------------------------------------------------

fn grid_data() -> (DMatrix<f64>, Vec<bool>) {
    let mut rng = ChaCha8Rng::seed_from_u64(42);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let (n, d) = (800, 30);
    let x = DMatrix::from_fn(n, d, |_, _| normal.sample(&mut rng));
    let z = (0..n)
        .map(|i| {
            let s: f64 = 1.5
                + (0..5)
                    .map(|j| x[(i, j)] * [1.2, -0.8, 0.6, 0.5, -0.4][j])
                    .sum::<f64>();
            rng.random_bool(1.0 / (1.0 + (-s).exp()))
        })
        .collect();
    (x, z)
}

fn grid_execution() -> Outcome {
    let (x, z) = grid_data();
    let xs = Standardizer::fit(&x).apply(&x);
    let mut parts = Vec::new();
    for solver in [Solver::ClosedForm, Solver::Lsqr] {
        let space = GridSpace {
            solver,
            ..GridSpace::default()
        };
        check(space.len() == 672, || {
            format!("grid has {} points", space.len())
        })?;
        let t0 = Instant::now();
        let a = grid_search(&space, &xs, &z, 42).map_err(|e| e.to_string())?;
        let elapsed = t0.elapsed();
        check(elapsed < GRID_BUDGET, || {
            format!("{solver:?} grid took {elapsed:?}")
        })?;
        check(a.entries.len() == 672, || {
            format!("{} entries scored", a.entries.len())
        })?;
        check(
            a.entries
                .iter()
                .zip(space.configs())
                .all(|(e, c)| e.config == c),
            || "entries out of grid order".into(),
        )?;
        let top = a
            .entries
            .iter()
            .filter_map(|e| e.score)
            .fold(f64::NEG_INFINITY, f64::max);
        let first = a
            .entries
            .iter()
            .position(|e| e.score == Some(top))
            .ok_or("no scored config")?;
        check(
            a.best_index == first && a.best == a.entries[first].config,
            || format!("selected {} but first maximum is {first}", a.best_index),
        )?;
        let b = grid_search(&space, &xs, &z, 42).map_err(|e| e.to_string())?;
        check(a == b, || {
            format!("{solver:?} grid search not deterministic")
        })?;
        parts.push(format!(
            "{solver:?}: 672 configs in {elapsed:.2?}, best #{} F1 {top:.4}",
            a.best_index
        ));
    }
    Ok(parts.join("; "))
}

// -------------------------------------------------------------------------

#[test]
fn acceptance() {
    let criteria: [Criterion; 10] = [
        ("feature oracle equivalence", feature_oracle),
        ("cost-formula anchors", cost_anchors),
        ("sensitivity consistency", sensitivity_consistency),
        ("ridge correctness", ridge_correctness),
        ("isotonic / PAVA oracle", pava_oracle),
        ("calibration sanity", calibration_sanity),
        ("end-to-end synthetic frontier", synthetic_frontier),
        ("determinism", determinism),
        ("retry contract", retry_contract),
        ("grid search execution", grid_execution),
    ];
    let mut failed = Vec::new();
    for (i, (name, f)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default())
        });
        match result {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                println!("FAIL {:>2} {name}: {why}", i + 1);
                failed.push(i + 1);
            }
        }
    }
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU32, Ordering};

use lppgate_core::io::traces_to_jsonl;
use lppgate_core::schema::{OutcomeLabel, Span, TokenCandidate};
use lppgate_core::synth::{generate, SynthConfig};
use lppgate_gateway::{
    run, run_item, GatewayError, GatewayItem, ItemOutcome, Provider, ProviderRequest, RawResponse,
    RunnerConfig, StubEntry, StubProvider, StubResponse, TemplateId,
};

fn item(id: &str) -> GatewayItem {
    GatewayItem {
        item_id: id.into(),
        fields: BTreeMap::from([
            ("TEXT".to_string(), format!("content of {id}")),
            ("CONCEPT_DEFINITION".to_string(), "spam".to_string()),
        ]),
    }
}

fn cfg() -> RunnerConfig {
    RunnerConfig {
        concurrency: 2,
        backoff_ms: 0,
        ..RunnerConfig::default()
    }
}

fn resp(text: &str) -> StubResponse {
    StubResponse {
        text: text.into(),
        logprobs: true,
        outcome_candidates: vec![
            TokenCandidate::new("1", -0.1),
            TokenCandidate::new("0", -2.4),
        ],
    }
}

const VALID: &str = r#"{"outcome":"1","p_correct":90,"band":"VH"}"#;

#[test]
fn three_malformed_then_valid_is_accepted_on_attempt_four() {
    let p = StubProvider::new(vec![StubEntry {
        item_id: "a".into(),
        responses: vec![
            resp("not json"),
            resp(r#"{"outcome":"maybe"}"#),
            resp(r#"{"outcome":"1","band":"XX"}"#),
            resp(VALID),
        ],
    }]);
    match run_item(&p, &item("a"), &cfg()).unwrap() {
        ItemOutcome::Accepted(t) => {
            assert_eq!(t.attempt, 4);
            assert_eq!(t.structured.outcome, OutcomeLabel::Yes);
            let o = t.outcome_record().unwrap();
            assert_eq!(o.chosen, TokenCandidate::new("1", -0.1));
            assert_eq!(o.candidates.len(), 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn four_malformed_give_up_and_are_reported() {
    let p = StubProvider::new(vec![
        StubEntry {
            item_id: "bad".into(),
            responses: vec![resp("{")],
        },
        StubEntry {
            item_id: "good".into(),
            responses: vec![resp(VALID)],
        },
    ]);
    let report = run(&p, &[item("good"), item("bad")], &cfg()).unwrap();
    assert_eq!(report.traces.len(), 1);
    assert_eq!(report.give_ups.len(), 1);
    assert_eq!(report.give_ups[0].item_id, "bad");
    assert_eq!(report.give_ups[0].attempts, 4);
}

#[test]
fn cot_template_requires_three_steps() {
    let two = r#"{"reasoning_steps":[{"step_number":1,"description":"a"},{"step_number":2,"description":"b"}],"outcome":"0"}"#;
    let three = r#"{"reasoning_steps":[{"step_number":1,"description":"a b"},{"step_number":2,"description":"c"},{"step_number":3,"description":"d 1"}],"outcome":"0"}"#;
    let p = StubProvider::new(vec![StubEntry {
        item_id: "a".into(),
        responses: vec![resp(two), resp(three)],
    }]);
    let c = RunnerConfig {
        template: TemplateId::TextCot,
        ..cfg()
    };
    let ItemOutcome::Accepted(t) = run_item(&p, &item("a"), &c).unwrap() else {
        panic!()
    };
    assert_eq!(t.attempt, 2);
    assert_eq!(t.structured.reasoning_steps.len(), 3);
    let reasoning: String = t
        .reasoning_records()
        .map(|r| r.chosen.surface.as_str())
        .collect();
    assert_eq!(reasoning, "a bcd 1");
    assert_eq!(
        t.tokens.iter().filter(|r| r.span == Span::Outcome).count(),
        1
    );
    assert_eq!(t.outcome_record().unwrap().chosen.surface, "0");
}

struct Flaky {
    failures_left: AtomicU32,
    inner: StubProvider,
}

impl Provider for Flaky {
    fn name(&self) -> &str {
        "flaky"
    }

    fn complete(&self, req: &ProviderRequest<'_>) -> lppgate_gateway::Result<RawResponse> {
        if self.failures_left.load(Ordering::SeqCst) > 0 {
            self.failures_left.fetch_sub(1, Ordering::SeqCst);
            return Err(GatewayError::Transport("timeout".into()));
        }
        self.inner.complete(req)
    }
}

#[test]
fn transport_retries_do_not_consume_attempts() {
    let p = Flaky {
        failures_left: AtomicU32::new(3),
        inner: StubProvider::new(vec![StubEntry {
            item_id: "a".into(),
            responses: vec![resp(VALID)],
        }]),
    };
    let ItemOutcome::Accepted(t) = run_item(&p, &item("a"), &cfg()).unwrap() else {
        panic!()
    };
    assert_eq!(t.attempt, 1);

    let p = Flaky {
        failures_left: AtomicU32::new(100),
        inner: StubProvider::default(),
    };
    let ItemOutcome::GaveUp(g) = run_item(&p, &item("a"), &cfg()).unwrap() else {
        panic!()
    };
    assert!(g.reason.starts_with("transport"));
}

struct Unauthorized;

impl Provider for Unauthorized {
    fn name(&self) -> &str {
        "unauthorized"
    }

    fn complete(&self, _: &ProviderRequest<'_>) -> lppgate_gateway::Result<RawResponse> {
        Err(GatewayError::AuthFailure("HTTP 401".into()))
    }
}

#[test]
fn auth_failure_aborts_the_run() {
    assert!(matches!(
        run(&Unauthorized, &[item("a")], &cfg()),
        Err(GatewayError::AuthFailure(_))
    ));
}

#[test]
fn missing_placeholder_aborts_before_dispatch() {
    let mut it = item("a");
    it.fields.remove("TEXT");
    let err = run(&StubProvider::default(), &[it], &cfg()).unwrap_err();
    assert_eq!(err, GatewayError::MissingPlaceholder("TEXT".into()));
}

#[test]
fn provider_without_logprobs_flags_items() {
    let p = StubProvider::new(vec![StubEntry {
        item_id: "a".into(),
        responses: vec![resp(VALID)],
    }])
    .without_logprobs();
    let report = run(&p, &[item("a")], &cfg()).unwrap();
    assert_eq!(report.no_logprobs, vec!["a".to_string()]);
    assert!(report.traces[0].logprobs_unavailable);
    assert!(report.traces[0].tokens.is_empty());
}

#[test]
fn non_default_decoding_requires_override() {
    let mut c = cfg();
    c.decoding.top_p = 0.9;
    assert_eq!(
        run(&StubProvider::default(), &[], &c),
        Err(GatewayError::NonstandardDecoding)
    );
    c.allow_nonstandard_decoding = true;
    assert!(run(&StubProvider::default(), &[], &c).is_ok());
}

#[test]
fn echoed_traces_round_trip_and_rerun_is_byte_identical() {
    let corpus = generate(&SynthConfig {
        n_items: 60,
        ..SynthConfig::default()
    })
    .unwrap();
    let stub = StubProvider::from_traces(&corpus.traces);
    let items: Vec<GatewayItem> = corpus
        .traces
        .iter()
        .rev()
        .map(|t| item(&t.item_id))
        .collect();
    let a = run(&stub, &items, &cfg()).unwrap();
    let b = run(
        &stub,
        &items,
        &RunnerConfig {
            concurrency: 5,
            ..cfg()
        },
    )
    .unwrap();
    assert!(a.give_ups.is_empty());
    assert_eq!(traces_to_jsonl(&a.traces), traces_to_jsonl(&b.traces));
    for (orig, echoed) in corpus.traces.iter().zip(&a.traces) {
        assert_eq!(orig.item_id, echoed.item_id);
        assert_eq!(orig.structured, echoed.structured);
        assert_eq!(
            orig.outcome_record().unwrap().candidates,
            echoed.outcome_record().unwrap().candidates
        );
    }
}

#[test]
fn fixture_file_round_trips() {
    let p = StubProvider::new(vec![StubEntry {
        item_id: "a".into(),
        responses: vec![resp(VALID)],
    }]);
    let dir = std::env::temp_dir().join(format!("lppgate-stub-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let path = dir.join("fixture.jsonl");
    std::fs::write(&path, p.to_fixture()).unwrap();
    let q = StubProvider::from_fixture(&path).unwrap();
    assert_eq!(q.to_fixture(), p.to_fixture());
    std::fs::remove_dir_all(&dir).unwrap();
}

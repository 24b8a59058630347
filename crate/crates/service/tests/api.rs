use std::sync::Arc;
use std::time::Duration;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use doorcount_core::{
    CounterConfig, CrossingAxis, CrossingEvent, RoiLayout, ScenarioKind, ScenarioSpec,
    SceneRenderer, SceneSequence, SegmentationConfig,
};
use doorcount_service::api::router;
use doorcount_service::source::VecSource;
use doorcount_service::{
    CountsSnapshot, PipelineConfig, ServiceHandle, ServiceOptions, ServiceStatus, Sinks,
};
use http_body_util::BodyExt;
use serde_json::Value;
use tower::ServiceExt;

const DIMS: (u32, u32) = (160, 120);

fn config(initial: i64) -> PipelineConfig {
    PipelineConfig {
        layout: RoiLayout::equal_bands(DIMS.0, DIMS.1, CrossingAxis::Vertical),
        segmentation: SegmentationConfig::default(),
        counter: CounterConfig {
            initial_occupancy: initial,
            ..Default::default()
        },
    }
}

fn source(kinds: &[ScenarioKind]) -> VecSource {
    let layout = config(0).layout;
    let scenes = kinds
        .iter()
        .map(|&kind| {
            let spec = ScenarioSpec {
                kind,
                head_radius_px: 12,
                speed_px_per_frame: 4,
                ..Default::default()
            };
            SceneRenderer::new(&spec, &layout, DIMS).unwrap()
        })
        .collect();
    VecSource::new(SceneSequence::new(scenes, 1_000).collect())
}

fn spawn(kinds: &[ScenarioKind], sinks: Sinks, autostart: bool, initial: i64) -> ServiceHandle {
    let opts = ServiceOptions {
        paced: false,
        autostart,
        ..Default::default()
    };
    ServiceHandle::spawn(Box::new(source(kinds)), config(initial), sinks, opts)
}

async fn call(
    svc: &ServiceHandle,
    method: &str,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Vec<u8>) {
    let req = Request::builder()
        .method(method)
        .uri(uri)
        .header("content-type", "application/json")
        .body(body.map_or_else(Body::empty, |b| Body::from(b.to_owned())))
        .unwrap();
    let resp = router(svc.shared()).oneshot(req).await.unwrap();
    let status = resp.status();
    (
        status,
        resp.into_body()
            .collect()
            .await
            .unwrap()
            .to_bytes()
            .to_vec(),
    )
}

async fn json(
    svc: &ServiceHandle,
    method: &str,
    uri: &str,
    body: Option<&str>,
) -> (StatusCode, Value) {
    let (st, bytes) = call(svc, method, uri, body).await;
    (st, serde_json::from_slice(&bytes).unwrap())
}

async fn wait_done(svc: &ServiceHandle) -> Arc<ServiceStatus> {
    let mut rx = svc.shared().subscribe();
    let st = tokio::time::timeout(Duration::from_secs(30), rx.wait_for(|s| s.source_exhausted))
        .await
        .expect("source did not finish")
        .unwrap()
        .clone();
    st
}

#[tokio::test]
async fn counts_are_zero_before_any_frame() {
    let svc = spawn(&[ScenarioKind::Entry], Sinks::none(), false, 0);
    let (st, body) = json(&svc, "GET", "/api/v1/counts", None).await;
    assert_eq!(st, StatusCode::OK);
    let counts: CountsSnapshot = serde_json::from_value(body).unwrap();
    assert_eq!(counts, CountsSnapshot::default());
}

#[tokio::test]
async fn stop_then_status_is_not_running() {
    let svc = spawn(
        &[ScenarioKind::Entry, ScenarioKind::Exit],
        Sinks::none(),
        false,
        0,
    );
    let (st, body) = json(
        &svc,
        "POST",
        "/api/v1/control",
        Some(r#"{"action":"start"}"#),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["running"], true);
    let (st, _) = json(
        &svc,
        "POST",
        "/api/v1/control",
        Some(r#"{"action":"stop"}"#),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let (_, body) = json(&svc, "GET", "/api/v1/status", None).await;
    assert_eq!(body["running"], false);
}

#[tokio::test]
async fn entry_replay_yields_one_entry_event_and_snapshot() {
    let dir = tempfile::tempdir().unwrap();
    let svc = spawn(
        &[ScenarioKind::Entry],
        Sinks::create(dir.path()).unwrap(),
        true,
        0,
    );
    wait_done(&svc).await;
    let (st, body) = json(&svc, "GET", "/api/v1/events?since_seq=0", None).await;
    assert_eq!(st, StatusCode::OK);
    let events: Vec<CrossingEvent> = serde_json::from_value(body).unwrap();
    assert_eq!(events.len(), 1);
    assert_eq!(events[0].kind.as_str(), "entry");

    let id = events[0].snapshot_id.unwrap();
    let (st, bytes) = call(&svc, "GET", &format!("/api/v1/snapshots/{id}"), None).await;
    assert_eq!(st, StatusCode::OK);
    assert!(bytes.starts_with(b"P5\n160 120\n255\n"));

    let (st, body) = json(&svc, "GET", "/api/v1/events?since_seq=1", None).await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body, Value::Array(vec![]));
}

#[tokio::test]
async fn events_are_paged() {
    let kinds = [
        ScenarioKind::Entry,
        ScenarioKind::Exit,
        ScenarioKind::RegretExit,
        ScenarioKind::Entry,
    ];
    let svc = spawn(&kinds, Sinks::none(), true, 0);
    wait_done(&svc).await;
    let (_, body) = json(&svc, "GET", "/api/v1/events?since_seq=1&limit=2", None).await;
    let seqs: Vec<u64> = body
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["seq"].as_u64().unwrap())
        .collect();
    assert_eq!(seqs, vec![2, 3]);
    let (st, body) = json(&svc, "GET", "/api/v1/events?limit=100000", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_limit");
}

#[tokio::test]
async fn counts_satisfy_occupancy_identity() {
    let kinds = [
        ScenarioKind::Entry,
        ScenarioKind::Entry,
        ScenarioKind::Exit,
        ScenarioKind::Loiter,
    ];
    let svc = spawn(&kinds, Sinks::none(), true, 5);
    let mut done = false;
    while !done {
        let (_, body) = json(&svc, "GET", "/api/v1/status", None).await;
        let st: ServiceStatus = serde_json::from_value(body).unwrap();
        let c = st.counts;
        assert_eq!(c.occupancy, 5 + c.entries as i64 - c.exits as i64);
        done = st.source_exhausted;
        tokio::task::yield_now().await;
    }
    let (_, body) = json(&svc, "GET", "/api/v1/counts", None).await;
    assert_eq!(body["occupancy"], 6);
    assert_eq!(body["entries"], 2);
}

#[tokio::test]
async fn control_errors_are_machine_readable() {
    let svc = spawn(&[ScenarioKind::EmptyScene], Sinks::none(), true, 0);
    let (st, body) = json(
        &svc,
        "POST",
        "/api/v1/control",
        Some(r#"{"action":"explode"}"#),
    )
    .await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "unknown_action");
    let (st, body) = json(&svc, "POST", "/api/v1/control", Some("not json")).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_body");

    wait_done(&svc).await;
    let (st, body) = json(
        &svc,
        "POST",
        "/api/v1/control",
        Some(r#"{"action":"start"}"#),
    )
    .await;
    assert_eq!(st, StatusCode::CONFLICT);
    assert_eq!(body["error"], "source_exhausted");

    let (st, body) = json(&svc, "GET", "/api/v1/snapshots/42", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
    assert_eq!(body["error"], "unknown_snapshot");
    let (st, body) = json(&svc, "GET", "/api/v1/snapshots/abc", None).await;
    assert_eq!(st, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_snapshot_id");
    let (st, _) = json(&svc, "GET", "/api/v1/nope", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn reset_and_clear_logs() {
    let dir = tempfile::tempdir().unwrap();
    let svc = spawn(
        &[ScenarioKind::Entry, ScenarioKind::Entry],
        Sinks::create(dir.path()).unwrap(),
        true,
        0,
    );
    wait_done(&svc).await;

    let (st, body) = json(
        &svc,
        "POST",
        "/api/v1/control",
        Some(r#"{"action":"reset"}"#),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    assert_eq!(body["counts"]["entries"], 0);
    let (_, body) = json(&svc, "GET", "/api/v1/events", None).await;
    assert_eq!(
        body.as_array().unwrap().len(),
        2,
        "reset must not touch history"
    );

    let (st, _) = json(
        &svc,
        "POST",
        "/api/v1/control",
        Some(r#"{"action":"clear_logs"}"#),
    )
    .await;
    assert_eq!(st, StatusCode::OK);
    let (_, body) = json(&svc, "GET", "/api/v1/events", None).await;
    assert_eq!(body, Value::Array(vec![]));
    assert_eq!(
        std::fs::read(dir.path().join("events.jsonl"))
            .unwrap()
            .len(),
        0
    );
    assert_eq!(
        std::fs::read_dir(dir.path().join("snapshots"))
            .unwrap()
            .count(),
        0
    );
    let (st, _) = call(&svc, "GET", "/api/v1/snapshots/1", None).await;
    assert_eq!(st, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn report_buckets_events() {
    let kinds = [ScenarioKind::Entry, ScenarioKind::Exit, ScenarioKind::Entry];
    let svc = spawn(&kinds, Sinks::none(), true, 0);
    let st = wait_done(&svc).await;
    let to = st.counts.timestamp_us + 1;
    let (code, body) = json(
        &svc,
        "GET",
        &format!("/api/v1/report?from=0&to={to}&bucket={to}"),
        None,
    )
    .await;
    assert_eq!(code, StatusCode::OK);
    assert_eq!(body["rows"].as_array().unwrap().len(), 1);
    assert_eq!(body["totals"]["entries"], 2);
    assert_eq!(body["totals"]["exits"], 1);
    assert_eq!(body["rows"][0]["occupancy"], 1);

    let (code, body) = json(&svc, "GET", "/api/v1/report?from=10&to=5", None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_report_window");
    let (code, body) = json(&svc, "GET", "/api/v1/report?bucket=x", None).await;
    assert_eq!(code, StatusCode::BAD_REQUEST);
    assert_eq!(body["error"], "bad_query");
}

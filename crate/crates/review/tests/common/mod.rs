#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::Arc;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use nsdx_core::explain::{bundle, fixture_tree, write_bundle};
use nsdx_core::neural::{r_stub, s_stub, synth_dataset, Arch, CohortCounts, SynthSpec};
use nsdx_review::{router, AppState};
use serde_json::{json, Value};
use tower::ServiceExt;

/// Writes `n` explanation bundles built from synthetic cases and freshly
/// initialized stub models.
pub fn make_bundles(dir: &Path, n: usize) {
    if n == 0 {
        return;
    }
    let spec = SynthSpec::new(
        CohortCounts {
            covid: n / 2 + n % 2,
            healthy: n / 2,
            tuberculosis: 0,
            pneumonia: 0,
        },
        5,
    );
    let cases = synth_dataset(&spec).unwrap();
    let pixels = cases[0].record.image.len();
    let s = s_stub(pixels, Arch::Linear, 0, 1).unwrap();
    let r = r_stub(pixels, Arch::Linear, 0, 2).unwrap();
    let tree = fixture_tree();
    for c in &cases {
        let b = bundle(&c.record, &s, &r, &tree, 0.5).unwrap();
        write_bundle(&dir.join(&c.record.case_id), &b, &c.record).unwrap();
    }
}

pub struct Fixture {
    pub tmp: tempfile::TempDir,
    pub app: Router,
}

impl Fixture {
    pub fn new(n: usize) -> Self {
        let tmp = tempfile::tempdir().unwrap();
        make_bundles(&tmp.path().join("bundles"), n);
        std::fs::create_dir_all(tmp.path().join("bundles")).unwrap();
        let app = Self::app_for(tmp.path());
        Fixture { tmp, app }
    }

    pub fn app_for(root: &Path) -> Router {
        let state = AppState::load(&root.join("bundles"), &root.join("feedback.jsonl")).unwrap();
        router(Arc::new(state))
    }

    pub fn log(&self) -> PathBuf {
        self.tmp.path().join("feedback.jsonl")
    }

    pub fn restart(&self) -> Router {
        Self::app_for(self.tmp.path())
    }
}

pub async fn call(
    app: &Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string()))
            .unwrap(),
        None => req.body(Body::empty()).unwrap(),
    };
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

pub fn json(text: &str) -> Value {
    serde_json::from_str(text).unwrap()
}

pub fn stage_payloads() -> Vec<Value> {
    vec![
        json!({"stage": "diagnosis", "diagnosis": "COV+", "sure": "sure"}),
        json!({"stage": "quality", "quality": "high"}),
        json!({"stage": "visual", "inductive": "useful", "descriptive": "somewhat-useful", "comparison": "first-better"}),
        json!({"stage": "textual", "inductive": "somewhat-useful", "descriptive": "not-useful", "comparison": "same"}),
        json!({"stage": "overall", "comparison": "second-better"}),
    ]
}

/// Keys and values that would leak the model's call or the ground truth.
pub fn leaks(body: &str) -> Vec<String> {
    let mut v: Value = serde_json::from_str(body).unwrap();
    strip_images(&mut v);
    let text = v.to_string();
    [
        "model_dx",
        "truth",
        "prediction",
        "explanations",
        "COV+",
        "COV-",
        "COV\u{2212}",
    ]
    .iter()
    .filter(|needle| text.contains(*needle))
    .map(|s| s.to_string())
    .collect()
}

fn strip_images(v: &mut Value) {
    match v {
        Value::Object(map) => {
            map.remove("image");
            map.values_mut().for_each(strip_images);
        }
        Value::Array(items) => items.iter_mut().for_each(strip_images),
        _ => {}
    }
}

pub fn log_lines(path: &Path) -> Vec<String> {
    std::fs::read_to_string(path)
        .unwrap_or_default()
        .lines()
        .map(str::to_string)
        .collect()
}

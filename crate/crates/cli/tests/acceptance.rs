//! Acceptance suite. Each test prints one `PASS`/`FAIL` line to stderr
//! (bypassing the harness capture) and fails normally on a miss.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Arc;
use std::time::{Duration, Instant};

use axum::body::Body;
use axum::http::{Request, StatusCode};
use http_body_util::BodyExt;
use nsdx_core::data::{
    encode_morphology, FeatureVector, Label, MorphClass, MorphEncoding, MorphProbs, SymptomVector,
    NUM_SYMPTOMS,
};
use nsdx_core::eval::read_feedback_file;
use nsdx_core::explain::{bin, extract_rules, fixture_tree, Bin};
use nsdx_core::neural::{Arch, LossKind, Target, ToyModel};
use nsdx_core::tree::{fit, FitParams};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use tower::ServiceExt;

const STAT_TOL: f64 = 0.001;
const STATS_BUDGET: Duration = Duration::from_secs(1);
const ANALYTICS_BUDGET: Duration = Duration::from_secs(1);
const FIDELITY_MIN: f64 = 0.98;
const FIDELITY_BUDGET: Duration = Duration::from_secs(30);
const GRADIENT_MAX_REL_ERR: f64 = 1e-4;
const GRADIENT_STEP: f64 = 1e-4;
const GRADIENT_FLOOR: f64 = 1e-2;
const GRADIENT_CONFIGS: usize = 100;
const GRADIENT_BUDGET: Duration = Duration::from_secs(30);

struct Report {
    id: u8,
    name: &'static str,
    start: Instant,
    passed: bool,
}

impl Report {
    fn new(id: u8, name: &'static str) -> Self {
        Report {
            id,
            name,
            start: Instant::now(),
            passed: false,
        }
    }

    fn pass(mut self) {
        self.passed = true;
    }
}

impl Drop for Report {
    fn drop(&mut self) {
        let verdict = if self.passed && !std::thread::panicking() {
            "PASS"
        } else {
            "FAIL"
        };
        let _ = writeln!(
            std::io::stderr(),
            "acceptance {:>2} {verdict} {} ({:.2?})",
            self.id,
            self.name,
            self.start.elapsed()
        );
    }
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

fn nsdx(args: &[&str]) -> (bool, String, Duration) {
    let start = Instant::now();
    let out = Command::new(env!("CARGO_BIN_EXE_nsdx"))
        .args(args)
        .env_remove("DX_SEED")
        .output()
        .unwrap();
    let elapsed = start.elapsed();
    assert!(
        out.status.success(),
        "nsdx {args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    (
        out.status.success(),
        String::from_utf8(out.stdout).unwrap(),
        elapsed,
    )
}

fn random_features(rng: &mut ChaCha8Rng) -> FeatureVector {
    let mut s = [0.0; NUM_SYMPTOMS];
    for v in &mut s {
        *v = rng.gen_range(0.0..=1.0);
    }
    let mut m = [0.0; 5];
    for v in &mut m {
        *v = -rng.gen_range(f64::EPSILON..1.0f64).ln();
    }
    let sum: f64 = m.iter().sum();
    FeatureVector::new(
        SymptomVector::new(s).unwrap(),
        MorphProbs::renormalized(m.map(|v| v / sum)).unwrap(),
    )
}

#[test]
fn criterion_01_accuracy_statistics() {
    let r = Report::new(1, "accuracy statistics on the published confusion matrices");
    let tmp = tempfile::tempdir().unwrap();
    let a = tmp.path().join("a.json");
    let b = tmp.path().join("b.json");
    std::fs::write(&a, r#"{"tp": 26, "fn": 4, "fp": 1, "tn": 297}"#).unwrap();
    std::fs::write(&b, r#"{"tp": 23, "fn": 7, "fp": 2, "tn": 296}"#).unwrap();
    let (_, text, elapsed) = nsdx(&[
        "eval",
        "--pred-a",
        a.to_str().unwrap(),
        "--pred-b",
        b.to_str().unwrap(),
    ]);
    assert!(text.contains("0.985 ± 0.007"), "{text}");
    assert!(text.contains("0.973 ± 0.009"), "{text}");
    assert!(text.contains("difference: not significant"), "{text}");
    assert!(elapsed < STATS_BUDGET, "{elapsed:?}");
    let (_, js, _) = nsdx(&[
        "eval",
        "--pred-a",
        a.to_str().unwrap(),
        "--pred-b",
        b.to_str().unwrap(),
        "--json",
    ]);
    let v: Value = serde_json::from_str(&js).unwrap();
    let close = |x: &Value, want: f64| (x.as_f64().unwrap() - want).abs() <= STAT_TOL;
    assert!(close(&v["a"]["p"], 0.985) && close(&v["a"]["sd"], 0.007));
    assert!(close(&v["b"]["p"], 0.973) && close(&v["b"]["sd"], 0.009));
    assert_eq!(v["significant"], false);
    r.pass();
}

#[test]
fn criterion_02_rule_extraction() {
    let r = Report::new(2, "rule extraction from the fixture tree");
    let tree = fixture_tree();
    let rules = extract_rules(&tree);
    let mut positive: Vec<String> = rules
        .iter()
        .filter(|r| r.label == Label::Positive)
        .map(|r| r.render())
        .collect();
    positive.sort();
    let mut published = vec![
        "COV+: P(ASO) > 0.5",
        "COV+: P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && P(Infiltration) > 0.406 && P(Emphysema) <= 0.122",
        "COV+: P(ASO) <= 0.5 && P(Missing GGO/ASO) <= 0.5 && P(Infiltration) <= 0.406 && P(Emphysema) > 0.127 && P(Edema) > 0.085",
    ];
    published.sort();
    assert_eq!(positive, published);
    let exact = [0.5, 0.406, 0.122, 0.127, 0.085];
    assert!(rules
        .iter()
        .flat_map(|r| &r.conditions)
        .all(|c| exact.contains(&c.threshold)));
    assert!(rules
        .iter()
        .filter(|r| !positive.contains(&r.render()))
        .all(|r| r.label == Label::Negative));
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let x = random_features(&mut rng);
        let fired: Vec<_> = rules.iter().filter(|r| r.fires(&x)).collect();
        assert_eq!(fired.len(), 1);
        assert_eq!(fired[0].label, tree.predict(&x).unwrap());
    }
    r.pass();
}

#[test]
fn criterion_03_conversion_table() {
    let r = Report::new(3, "morphology conversion table");
    let table = [
        (MorphClass::Aso, (true, false, false)),
        (MorphClass::Ggo, (false, true, false)),
        (MorphClass::AsoGgo, (true, true, false)),
        (MorphClass::NoAsoGgo, (false, false, false)),
        (MorphClass::MissingAsoGgo, (false, false, true)),
    ];
    for (class, (aso, ggo, missing)) in table {
        assert_eq!(
            encode_morphology(&MorphProbs::one_hot(class)),
            MorphEncoding { aso, ggo, missing }
        );
    }
    r.pass();
}

#[test]
fn criterion_04_binning() {
    let r = Report::new(4, "three-bin partition boundaries");
    assert_eq!(bin(0.33), Bin::Low);
    assert_eq!(bin(0.67), Bin::Medium);
    assert_eq!(bin(0.671), Bin::High);
    let grid: Vec<Bin> = (0..=1000).map(|i| bin(i as f64 / 1000.0)).collect();
    assert!(grid.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(grid.iter().position(|b| *b == Bin::Medium), Some(331));
    assert_eq!(grid.iter().position(|b| *b == Bin::High), Some(671));
    assert_eq!((grid[0], grid[1000]), (Bin::Low, Bin::High));
    r.pass();
}

#[test]
fn criterion_05_covidr_parser() {
    let r = Report::new(5, "COVIDr fixture finding counts");
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("labels.csv");
    let (_, text, _) = nsdx(&[
        "parse-covidr",
        "--in",
        fixture("covidr_245.csv").to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let expected = [
        ("rows", 245),
        ("None", 44),
        ("Ground glass opacity", 145),
        ("Bilateral patchy air-space opacification", 30),
        ("Bilateral symmetrical air-space opacification", 18),
        ("Bilateral peripheral air-space opacification", 54),
        ("Predominantly unilateral air-space opacification Rt", 36),
        ("Predominantly unilateral air-space opacification Lt", 28),
    ];
    for (name, n) in expected {
        assert!(
            text.lines().any(|l| l == format!("{name}: {n}")),
            "{name}: {n} missing from\n{text}"
        );
    }
    r.pass();
}

#[test]
fn criterion_06_analytics() {
    let r = Report::new(6, "feedback analytics on the study-shaped log");
    let (_, js, elapsed) = nsdx(&[
        "report",
        "--log",
        fixture("feedback_study_30.jsonl").to_str().unwrap(),
        "--json",
    ]);
    let v: Value = serde_json::from_str(&js).unwrap();
    assert_eq!(v["usefulness"]["counts"][0], json!([14, 7, 9]));
    assert_eq!(v["usefulness"]["counts"][2], json!([17, 1, 12]));
    assert_eq!(v["usefulness"]["counts"][3], json!([6, 4, 20]));
    assert_eq!(
        v["visual"],
        json!({"relevant": 21, "inductive_better": 5, "descriptive_better": 8, "same": 8})
    );
    assert_eq!(
        v["textual"],
        json!({"relevant": 18, "inductive_better": 13, "descriptive_better": 0, "same": 5})
    );
    assert_eq!(v["agreement"], json!({"sure": [19, 6], "unsure": [4, 1]}));
    assert_eq!(
        (v["relevance_coverage"].as_u64(), v["completed"].as_u64()),
        (Some(29), Some(30))
    );
    assert!(elapsed < ANALYTICS_BUDGET, "{elapsed:?}");
    r.pass();
}

#[test]
fn criterion_07_cart_fidelity() {
    let r = Report::new(7, "CART refit fidelity to the fixture tree");
    let teacher = fixture_tree();
    for seed in 0..5u64 {
        let mut rng = ChaCha8Rng::seed_from_u64(700 + seed);
        let mut sample = |n: usize| -> Vec<(FeatureVector, Label)> {
            (0..n)
                .map(|_| {
                    let x = random_features(&mut rng);
                    (x, teacher.predict(&x).unwrap())
                })
                .collect()
        };
        let train = sample(2000);
        let test = sample(1000);
        let student = fit(&train, &FitParams::new(8, 16)).unwrap();
        let agree = test
            .iter()
            .filter(|(x, y)| student.predict(x).unwrap() == *y)
            .count();
        let fidelity = agree as f64 / 1000.0;
        assert!(fidelity >= FIDELITY_MIN, "seed {seed}: {fidelity}");
    }
    assert!(r.start.elapsed() < FIDELITY_BUDGET);
    r.pass();
}

fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(GRADIENT_FLOOR)
}

#[test]
fn criterion_08_gradient_oracle() {
    let r = Report::new(8, "analytic gradients against finite differences");
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let h = GRADIENT_STEP;
    for arch in [Arch::Linear, Arch::Mlp1] {
        for _ in 0..GRADIENT_CONFIGS {
            let categorical = rng.gen_bool(0.5);
            let (kind, out) = if categorical {
                (LossKind::CategoricalCe, rng.gen_range(2..=5))
            } else {
                (LossKind::BinaryCe, rng.gen_range(1..=5))
            };
            let mut m =
                ToyModel::zeros(arch, rng.gen_range(1..=8), rng.gen_range(1..=6), out, kind)
                    .unwrap();
            for w in &mut m.weights {
                *w = rng.gen_range(-1.0..1.0);
            }
            let x: Vec<f64> = (0..m.input_dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let t = if categorical {
                Target::Class(rng.gen_range(0..out))
            } else {
                Target::Binary((0..out).map(|_| f64::from(rng.gen_range(0..2u8))).collect())
            };
            let (_, g) = m.param_gradient(&x, &t).unwrap();
            for (i, gi) in g.iter().enumerate() {
                let (mut a, mut b) = (m.clone(), m.clone());
                a.weights[i] += h;
                b.weights[i] -= h;
                let num = (a.loss(&x, &t).unwrap() - b.loss(&x, &t).unwrap()) / (2.0 * h);
                assert!(
                    rel_err(*gi, num) <= GRADIENT_MAX_REL_ERR,
                    "{arch:?} param {i}"
                );
            }
            let gx = m.loss_input_gradient(&x, &t).unwrap();
            for i in 0..x.len() {
                let (mut a, mut b) = (x.clone(), x.clone());
                a[i] += h;
                b[i] -= h;
                let num = (m.loss(&a, &t).unwrap() - m.loss(&b, &t).unwrap()) / (2.0 * h);
                assert!(
                    rel_err(gx[i], num) <= GRADIENT_MAX_REL_ERR,
                    "{arch:?} input {i}"
                );
            }
        }
    }
    assert!(r.start.elapsed() < GRADIENT_BUDGET);
    r.pass();
}

const SMALL_RUN: &str = r#"{
    "seed": 21,
    "data": {"kind": "synthetic", "spec": {"counts": {"covid": 24, "healthy": 24, "tb": 12, "pneumonia": 12}, "seed": 21}}
}"#;

fn run_pipeline_cli(root: &Path, name: &str) -> PathBuf {
    let cfg = root.join("cfg.json");
    std::fs::write(&cfg, SMALL_RUN).unwrap();
    let out = root.join(name);
    nsdx(&[
        "run",
        "--config",
        cfg.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    out
}

#[test]
fn criterion_09_determinism() {
    let r = Report::new(9, "pipeline determinism");
    let tmp = tempfile::tempdir().unwrap();
    let a = run_pipeline_cli(tmp.path(), "a");
    let b = run_pipeline_cli(tmp.path(), "b");
    for f in ["tree.json", "metrics.csv"] {
        let (x, y) = (
            std::fs::read(a.join(f)).unwrap(),
            std::fs::read(b.join(f)).unwrap(),
        );
        assert!(!x.is_empty());
        assert_eq!(x, y, "{f} differs");
    }
    r.pass();
}

async fn call(
    app: &axum::Router,
    method: &str,
    uri: &str,
    body: Option<Value>,
) -> (StatusCode, String) {
    let req = Request::builder().method(method).uri(uri);
    let req = match body {
        Some(v) => req
            .header("content-type", "application/json")
            .body(Body::from(v.to_string())),
        None => req.body(Body::empty()),
    }
    .unwrap();
    let resp = app.clone().oneshot(req).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

fn leaked_fields(body: &str) -> Vec<&'static str> {
    let mut v: Value = serde_json::from_str(body).unwrap();
    fn strip(v: &mut Value) {
        match v {
            Value::Object(m) => {
                m.remove("image");
                m.values_mut().for_each(strip);
            }
            Value::Array(a) => a.iter_mut().for_each(strip),
            _ => {}
        }
    }
    strip(&mut v);
    let text = v.to_string();
    [
        "model_dx",
        "truth",
        "prediction",
        "explanations",
        "COV+",
        "COV-",
    ]
    .into_iter()
    .filter(|k| text.contains(k))
    .collect()
}

#[tokio::test]
async fn criterion_10_reveal_safety() {
    let r = Report::new(10, "review service reveal safety and single log record");
    let tmp = tempfile::tempdir().unwrap();
    let run = run_pipeline_cli(tmp.path(), "run");
    let log = tmp.path().join("feedback.jsonl");
    let state = nsdx_review::AppState::load(&run.join("bundles"), &log).unwrap();
    let app = nsdx_review::router(Arc::new(state));

    let (status, list) = call(&app, "GET", "/cases", None).await;
    assert_eq!(status, StatusCode::OK);
    assert!(leaked_fields(&list).is_empty());
    let ids: Vec<String> = serde_json::from_str::<Value>(&list)
        .unwrap()
        .as_array()
        .unwrap()
        .iter()
        .map(|c| c["case_id"].as_str().unwrap().to_string())
        .collect();
    assert!(!ids.is_empty());

    let stages = [
        json!({"stage": "diagnosis", "diagnosis": "COV-", "sure": "unsure"}),
        json!({"stage": "quality", "quality": "medium"}),
        json!({"stage": "visual", "inductive": "useful", "descriptive": "not-useful", "comparison": "first-better"}),
        json!({"stage": "textual", "inductive": "useful", "descriptive": "somewhat-useful", "comparison": "same"}),
        json!({"stage": "overall", "comparison": "first-better"}),
    ];
    for id in &ids {
        let (_, body) = call(&app, "GET", &format!("/cases/{id}"), None).await;
        assert!(
            leaked_fields(&body).is_empty(),
            "{id}: {:?}",
            leaked_fields(&body)
        );
        for s in &stages[1..] {
            let (status, body) =
                call(&app, "POST", &format!("/cases/{id}/stage"), Some(s.clone())).await;
            assert_eq!(status, StatusCode::CONFLICT);
            assert!(leaked_fields(&body).is_empty());
        }
    }

    let id = &ids[0];
    for (i, s) in stages.iter().enumerate() {
        let (status, body) =
            call(&app, "POST", &format!("/cases/{id}/stage"), Some(s.clone())).await;
        assert_eq!(status, StatusCode::OK, "{body}");
        if i == 0 {
            let v: Value = serde_json::from_str(&body).unwrap();
            assert!(
                v["model_dx"].is_string(),
                "diagnosis response must reveal the model's call"
            );
        }
        assert!(!body.contains("truth"));
    }
    let records = read_feedback_file(&log).unwrap();
    assert_eq!(std::fs::read_to_string(&log).unwrap().lines().count(), 1);
    assert_eq!(records.len(), 1);
    assert!(records[0].complete().is_ok());
    r.pass();
}

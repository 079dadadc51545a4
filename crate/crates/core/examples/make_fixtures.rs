//! Regenerates the files under `fixtures/`.
//!
//! ```text
//! cargo run -p nsdx-core --example make_fixtures -- fixtures
//! ```

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nsdx_core::data::{
    annotation_header, write_features, FeatureRecord, FeatureVector, Label, MorphProbs,
    SymptomVector, NUM_SYMPTOMS,
};
use nsdx_core::eval::{Comparison, FeedbackRecord, Quality, Rating, Stage, Sureness};
use nsdx_core::explain::fixture_tree;
use nsdx_core::tree::tree_feature_index;
use nsdx_core::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> Result<()> {
    let dir = PathBuf::from(std::env::args().nth(1).unwrap_or_else(|| "fixtures".into()));
    std::fs::create_dir_all(&dir).expect("create fixture dir");
    covidr(&dir.join("covidr_245.csv"));
    features(&dir.join("features_test_328.csv"))?;
    feedback(&dir.join("feedback_study_30.jsonl"))?;
    Ok(())
}

/// 245 COVID-positive rows whose finding columns total None 44, GGO 145,
/// bilateral patchy 30, symmetric 18, peripheral 54, unilateral right 36,
/// unilateral left 28.
fn covidr(path: &Path) {
    const ROWS: usize = 245;
    let mut flags = vec![[0u8; 7]; ROWS];
    for row in flags.iter_mut().take(44) {
        row[0] = 1;
    }
    for row in flags.iter_mut().skip(44).take(145) {
        row[1] = 1;
    }
    let aso = [(2, 30), (3, 18), (4, 54), (5, 36), (6, 28)];
    let mut row = ROWS;
    for (col, n) in aso {
        for _ in 0..n {
            row -= 1;
            flags[row][col] = 1;
        }
    }
    let mut out = annotation_header().join(",") + "\n";
    for (i, f) in flags.iter().enumerate() {
        let cells: Vec<String> = f.iter().map(u8::to_string).collect();
        writeln!(out, "covidr-{i:03},covid,{}", cells.join(",")).unwrap();
    }
    std::fs::write(path, out).expect("write covidr fixture");
}

fn symptoms(rng: &mut ChaCha8Rng, fixed: &[(&str, f64)]) -> SymptomVector {
    let mut s = [0.0; NUM_SYMPTOMS];
    for v in s.iter_mut() {
        *v = (rng.gen_range(0..1000) as f64) / 1000.0;
    }
    for (name, v) in fixed {
        s[tree_feature_index(name).unwrap()] = *v;
    }
    SymptomVector::new(s).unwrap()
}

fn morph(rng: &mut ChaCha8Rng, lead: usize) -> MorphProbs {
    let mut p = [0.0; 5];
    let mut rest = 1.0;
    p[lead] = 0.5 + rng.gen_range(0..40) as f64 / 100.0;
    rest -= p[lead];
    let others: Vec<usize> = (0..5).filter(|&i| i != lead).collect();
    for &i in &others[..3] {
        p[i] = rest / 4.0;
    }
    p[others[3]] = rest - 3.0 * (rest / 4.0);
    MorphProbs::renormalized(p).unwrap()
}

/// 328 held-out rows (30 COV+, 298 COV-) on which the fixture tree scores
/// tp 23, fn 7, fp 2, tn 296.
fn features(path: &Path) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(328);
    let tree = fixture_tree();
    let mut records = Vec::new();
    let mut push = |truth: Label, positive: bool, rng: &mut ChaCha8Rng, n: usize| {
        for _ in 0..n {
            let x = if positive {
                match rng.gen_range(0..3) {
                    0 => FeatureVector::new(symptoms(rng, &[]), morph(rng, 0)),
                    1 => FeatureVector::new(
                        symptoms(rng, &[("Infiltration", 0.62), ("Emphysema", 0.05)]),
                        morph(rng, 1),
                    ),
                    _ => FeatureVector::new(
                        symptoms(
                            rng,
                            &[("Infiltration", 0.21), ("Emphysema", 0.3), ("Edema", 0.4)],
                        ),
                        morph(rng, 3),
                    ),
                }
            } else if rng.gen_bool(0.2) {
                FeatureVector::new(symptoms(rng, &[]), morph(rng, 4))
            } else {
                let lead = if rng.gen_bool(0.5) { 1 } else { 3 };
                FeatureVector::new(
                    symptoms(
                        rng,
                        &[("Infiltration", 0.15), ("Emphysema", 0.3), ("Edema", 0.02)],
                    ),
                    morph(rng, lead),
                )
            };
            assert_eq!(tree.predict(&x).unwrap() == Label::Positive, positive);
            let id = format!("test-{:03}", records.len());
            records.push(FeatureRecord {
                case_id: id,
                features: x,
                truth,
            });
        }
    };
    push(Label::Positive, true, &mut rng, 23);
    push(Label::Positive, false, &mut rng, 7);
    push(Label::Negative, true, &mut rng, 2);
    push(Label::Negative, false, &mut rng, 296);
    let mut buf = Vec::new();
    write_features(&mut buf, &records)?;
    std::fs::write(path, buf).expect("write features fixture");
    Ok(())
}

fn rating(i: usize, useful: std::ops::Range<usize>, somewhat: std::ops::Range<usize>) -> Rating {
    if useful.contains(&i) {
        Rating::Useful
    } else if somewhat.contains(&i) {
        Rating::SomewhatUseful
    } else {
        Rating::NotUseful
    }
}

/// 30 completed review sessions shaped after the published study.
fn feedback(path: &Path) -> Result<()> {
    let mut out = String::new();
    for i in 0..30 {
        let truth = if i % 2 == 0 {
            Label::Positive
        } else {
            Label::Negative
        };
        let model_dx = if i == 29 { flip(truth) } else { truth };
        let sure = if i < 25 {
            Sureness::Sure
        } else {
            Sureness::Unsure
        };
        let radiologist_dx = if (19..25).contains(&i) {
            flip(model_dx)
        } else {
            model_dx
        };
        let text_ind = if (21..29).contains(&i) {
            Rating::Useful
        } else {
            rating(i, 0..9, 9..10)
        };
        let cmp_textual = match i {
            0..=9 | 21..=23 => Comparison::FirstBetter,
            24..=28 => Comparison::Same,
            _ => Comparison::SecondBetter,
        };
        let cmp_visual = match i {
            0..=4 => Comparison::FirstBetter,
            13..=20 => Comparison::Same,
            _ => Comparison::SecondBetter,
        };
        let rec = FeedbackRecord {
            stage: Stage::Complete,
            radiologist_dx: Some(radiologist_dx),
            sure: Some(sure),
            model_dx: Some(model_dx),
            truth: Some(truth),
            quality: Some(match i % 3 {
                0 => Quality::High,
                1 => Quality::Medium,
                _ => Quality::Low,
            }),
            vis_ind: Some(rating(i, 0..14, 14..21)),
            vis_des: Some(rating(i, 0..21, 21..26)),
            text_ind: Some(text_ind),
            text_des: Some(rating(i, 0..6, 6..10)),
            cmp_visual: Some(cmp_visual),
            cmp_textual: Some(cmp_textual),
            cmp_overall: Some(if i % 3 == 0 {
                Comparison::SecondBetter
            } else {
                Comparison::FirstBetter
            }),
            ..FeedbackRecord::new(format!("review-{i:02}"))
        };
        out.push_str(&serde_json::to_string(&rec)?);
        out.push('\n');
    }
    std::fs::write(path, out).expect("write feedback fixture");
    Ok(())
}

fn flip(l: Label) -> Label {
    match l {
        Label::Positive => Label::Negative,
        Label::Negative => Label::Positive,
    }
}

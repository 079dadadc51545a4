#![allow(dead_code)]

use std::path::PathBuf;

use nsdx_core::data::{FeatureVector, MorphProbs, SymptomVector, NUM_MORPH_CLASSES, NUM_SYMPTOMS};
use rand::Rng;

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fixtures")
        .join(name)
}

/// Uniform symptom probabilities and a random point on the morphology simplex.
pub fn random_features(rng: &mut impl Rng) -> FeatureVector {
    let mut s = [0.0; NUM_SYMPTOMS];
    for v in &mut s {
        *v = rng.gen_range(0.0..=1.0);
    }
    let mut m = [0.0; NUM_MORPH_CLASSES];
    for v in &mut m {
        *v = -rng.gen_range(f64::EPSILON..1.0f64).ln();
    }
    let sum: f64 = m.iter().sum();
    for v in &mut m {
        *v /= sum;
    }
    FeatureVector::new(
        SymptomVector::new(s).unwrap(),
        MorphProbs::renormalized(m).unwrap(),
    )
}

//! Desk-scale stand-ins for the symptom (S) and radiology (R) networks and the
//! end-to-end baseline, with input-gradient saliency and threshold
//! segmentation.

pub mod model;
pub mod saliency;
pub mod synth;
pub mod train;

pub use model::{param_count, Arch, LossKind, Target, ToyModel};
pub use saliency::{saliency, segment, SaliencyMap, SegmentationMask};
pub use synth::{synth_dataset, CohortCounts, SynthCase, SynthSpec};
pub use train::{
    accuracy, grid_search, train, Example, GridOutcome, GridRun, TrainConfig, TrainReport,
};

use crate::data::{Label, MorphProbs, SymptomVector, NUM_MORPH_CLASSES, NUM_SYMPTOMS};
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DEFAULT_HIDDEN: usize = 16;

pub fn s_stub(pixels: usize, arch: Arch, hidden: usize, seed: u64) -> Result<ToyModel> {
    ToyModel::new(arch, pixels, hidden, NUM_SYMPTOMS, LossKind::BinaryCe, seed)
}

pub fn r_stub(pixels: usize, arch: Arch, hidden: usize, seed: u64) -> Result<ToyModel> {
    ToyModel::new(
        arch,
        pixels + NUM_SYMPTOMS,
        hidden,
        NUM_MORPH_CLASSES,
        LossKind::CategoricalCe,
        seed,
    )
}

pub fn e2e_stub(pixels: usize, arch: Arch, hidden: usize, seed: u64) -> Result<ToyModel> {
    ToyModel::new(arch, pixels, hidden, 1, LossKind::BinaryCe, seed)
}

fn check_role(model: &ToyModel, outputs: usize, kind: LossKind, input_dim: usize) -> Result<()> {
    if model.output_dim != outputs || model.loss_kind != kind {
        return Err(Error::Config(format!(
            "expected a {kind:?} model with {outputs} outputs, got {:?} with {}",
            model.loss_kind, model.output_dim
        )));
    }
    if model.input_dim != input_dim {
        return Err(Error::Dimension {
            expected: model.input_dim,
            actual: input_dim,
        });
    }
    Ok(())
}

/// Symptom probabilities from an S-stub.
pub fn predict_s(model: &ToyModel, img: &GrayImage) -> Result<SymptomVector> {
    check_role(model, NUM_SYMPTOMS, LossKind::BinaryCe, img.len())?;
    SymptomVector::from_slice(&model.outputs(img.pixels())?)
}

/// Morphology distribution from an R-stub fed the image and S-stub output.
pub fn predict_r(
    model: &ToyModel,
    img: &GrayImage,
    symptoms: &SymptomVector,
) -> Result<MorphProbs> {
    check_role(
        model,
        NUM_MORPH_CLASSES,
        LossKind::CategoricalCe,
        img.len() + NUM_SYMPTOMS,
    )?;
    let x = saliency::model_input(model, img, Some(symptoms))?;
    let p: [f64; NUM_MORPH_CLASSES] = model
        .outputs(&x)?
        .try_into()
        .expect("output dimension checked");
    MorphProbs::new(p)
}

/// COV+ probability from the end-to-end baseline.
pub fn predict_e2e_prob(model: &ToyModel, img: &GrayImage) -> Result<f64> {
    check_role(model, 1, LossKind::BinaryCe, img.len())?;
    Ok(model.outputs(img.pixels())?[0])
}

/// End-to-end diagnosis; a probability of exactly 0.5 is COV-.
pub fn predict_e2e(model: &ToyModel, img: &GrayImage) -> Result<Label> {
    Ok(if predict_e2e_prob(model, img)? > 0.5 {
        Label::Positive
    } else {
        Label::Negative
    })
}

pub fn s_examples(cases: &[SynthCase]) -> Vec<Example> {
    cases
        .iter()
        .map(|c| {
            let y = c
                .symptoms
                .iter()
                .map(|&b| if b { 1.0 } else { 0.0 })
                .collect();
            Example::new(c.record.image.pixels().to_vec(), Target::Binary(y))
        })
        .collect()
}

/// R-stub examples; the symptom half of each input comes from `s_model`.
pub fn r_examples(cases: &[SynthCase], s_model: &ToyModel) -> Result<Vec<Example>> {
    cases
        .iter()
        .map(|c| {
            let s = predict_s(s_model, &c.record.image)?;
            let mut x = c.record.image.pixels().to_vec();
            x.extend_from_slice(s.as_array());
            Ok(Example::new(x, Target::Class(c.morph.index())))
        })
        .collect()
}

pub fn e2e_examples(cases: &[SynthCase]) -> Vec<Example> {
    cases
        .iter()
        .map(|c| {
            let y = if c.record.truth == Label::Positive {
                1.0
            } else {
                0.0
            };
            Example::new(c.record.image.pixels().to_vec(), Target::Binary(vec![y]))
        })
        .collect()
}

use serde::{Deserialize, Serialize};

use super::model::ToyModel;
use super::train::argmax;
use crate::data::{SymptomVector, NUM_SYMPTOMS};
use crate::error::{Error, Result};
use crate::image::{encode_pgm, GrayImage};

/// Per-pixel saliency in [0,1]; the maximum is exactly 1 unless the map is
/// identically zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SaliencyMap {
    pub width: usize,
    pub height: usize,
    pub values: Vec<f64>,
}

impl SaliencyMap {
    pub fn max(&self) -> f64 {
        self.values.iter().cloned().fold(0.0, f64::max)
    }

    pub fn to_pgm(&self) -> String {
        encode_pgm(self.width, self.height, &self.values)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SegmentationMask {
    pub width: usize,
    pub height: usize,
    pub values: Vec<u8>,
}

impl SegmentationMask {
    pub fn to_pgm(&self) -> String {
        let v: Vec<f64> = self.values.iter().map(|&b| b as f64).collect();
        encode_pgm(self.width, self.height, &v)
    }

    pub fn coverage(&self) -> usize {
        self.values.iter().filter(|&&b| b == 1).count()
    }
}

/// Model input for an image: the pixels, followed by the symptom
/// probabilities when the model takes them (radiology stubs).
pub fn model_input(
    model: &ToyModel,
    img: &GrayImage,
    symptoms: Option<&SymptomVector>,
) -> Result<Vec<f64>> {
    let n = img.len();
    if model.input_dim == n {
        Ok(img.pixels().to_vec())
    } else if model.input_dim == n + NUM_SYMPTOMS {
        let symptoms = symptoms.ok_or_else(|| {
            Error::Config("model expects symptom probabilities alongside the image".into())
        })?;
        let mut x = img.pixels().to_vec();
        x.extend_from_slice(symptoms.as_array());
        Ok(x)
    } else {
        Err(Error::Dimension {
            expected: model.input_dim,
            actual: n,
        })
    }
}

/// Unnormalized |d logit / d pixel| for the model's argmax class.
pub fn raw_saliency(
    model: &ToyModel,
    img: &GrayImage,
    symptoms: Option<&SymptomVector>,
) -> Result<Vec<f64>> {
    let x = model_input(model, img, symptoms)?;
    let class = argmax(&model.logits(&x)?);
    let grad = model.logit_input_gradient(&x, class)?;
    Ok(grad[..img.len()].iter().map(|g| g.abs()).collect())
}

/// Input-gradient saliency of the predicted class, scaled so the peak is 1.
pub fn saliency(
    model: &ToyModel,
    img: &GrayImage,
    symptoms: Option<&SymptomVector>,
) -> Result<SaliencyMap> {
    let mut values = raw_saliency(model, img, symptoms)?;
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        for v in &mut values {
            *v /= max;
        }
        // Guard against x / x rounding below 1.
        if let Some(peak) = values.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *peak = 1.0;
        }
    }
    Ok(SaliencyMap {
        width: img.width(),
        height: img.height(),
        values,
    })
}

/// Threshold segmentation: 1 where the pixel is at least `tau`.
pub fn segment(img: &GrayImage, tau: f64) -> Result<SegmentationMask> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(Error::Value(format!(
            "segmentation threshold {tau} outside [0,1]"
        )));
    }
    Ok(SegmentationMask {
        width: img.width(),
        height: img.height(),
        values: img.pixels().iter().map(|&p| u8::from(p >= tau)).collect(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::neural::model::{Arch, LossKind};

    fn img3() -> GrayImage {
        GrayImage::new(3, 3, (0..9).map(|i| i as f64 / 8.0).collect()).unwrap()
    }

    #[test]
    fn zero_model_gives_zero_map() {
        let m = ToyModel::zeros(Arch::Mlp1, 9 + 14, 4, 5, LossKind::CategoricalCe).unwrap();
        let s = SymptomVector::splat(0.5).unwrap();
        let map = saliency(&m, &img3(), Some(&s)).unwrap();
        assert!(map.values.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn single_weight_lights_single_pixel() {
        let mut m = ToyModel::zeros(Arch::Linear, 9, 0, 2, LossKind::CategoricalCe).unwrap();
        // class 1 wins and depends on pixel 4 only
        m.weights[9 + 4] = 0.3;
        let map = saliency(&m, &img3(), None).unwrap();
        let expected: Vec<f64> = (0..9).map(|i| if i == 4 { 1.0 } else { 0.0 }).collect();
        assert_eq!(map.values, expected);
    }

    #[test]
    fn saliency_is_normalized() {
        let m = ToyModel::new(Arch::Mlp1, 9 + 14, 5, 5, LossKind::CategoricalCe, 3).unwrap();
        let s = SymptomVector::splat(0.2).unwrap();
        let map = saliency(&m, &img3(), Some(&s)).unwrap();
        assert_eq!(map.max(), 1.0);
        assert!(map.values.iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn missing_symptoms_or_wrong_size_rejected() {
        let m = ToyModel::zeros(Arch::Linear, 9 + 14, 0, 5, LossKind::CategoricalCe).unwrap();
        assert!(saliency(&m, &img3(), None).is_err());
        let img = GrayImage::filled(2, 2, 0.0).unwrap();
        assert!(matches!(
            saliency(&m, &img, None),
            Err(Error::Dimension { .. })
        ));
    }

    #[test]
    fn segmentation_thresholds() {
        let img = img3();
        assert!(segment(&img, 0.0).unwrap().values.iter().all(|&b| b == 1));
        assert!(segment(&img, 1.0 + 1e-9).is_err());
        assert!(segment(&img, -0.1).is_err());
        let checker = GrayImage::new(2, 2, vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(segment(&checker, 0.5).unwrap().values, vec![0, 1, 1, 0]);
    }

    #[test]
    fn mask_pgm_uses_full_range() {
        let checker = GrayImage::new(2, 1, vec![0.0, 1.0]).unwrap();
        assert_eq!(
            segment(&checker, 0.5).unwrap().to_pgm(),
            "P2\n2 1\n255\n0 255\n"
        );
    }
}

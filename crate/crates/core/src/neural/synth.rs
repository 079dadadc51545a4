//! Deterministic synthetic chest X-ray stand-ins.
//!
//! Every image is a dark field with two brighter lung regions plus uniform
//! noise. Each cohort plants a fixed pattern on top:
//!
//! * GGO: a diffuse haze over the lower half of both lungs.
//! * ASO: dense opacities along the outer edge of both lungs.
//! * tuberculosis: bright spots in the lung apices.
//! * pneumonia: a consolidated block next to the mediastinum.
//!
//! COVID-positive cases cycle through the morphology classes
//! ASO, GGO, ASO_GGO, GGO, ASO_GGO, No_ASO_GGO; healthy cases carry no pattern.
//! Symptom labels follow from the planted patterns (see [`symptom_labels`]),
//! so both stub models have a learnable signal. Pixels are quantized to
//! multiples of 1/255 so images survive a PGM round trip unchanged.

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::train::derive_seed;
use crate::data::{symptom_index, CaseRecord, Cohort, MorphClass, NUM_SYMPTOMS, SYMPTOM_NAMES};
use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const DEFAULT_SIZE: usize = 16;
const MIN_SIZE: usize = 8;

const BACKGROUND: f64 = 0.08;
const LUNG: f64 = 0.35;
const NOISE: f64 = 0.04;

const COVID_CYCLE: [MorphClass; 6] = [
    MorphClass::Aso,
    MorphClass::Ggo,
    MorphClass::AsoGgo,
    MorphClass::Ggo,
    MorphClass::AsoGgo,
    MorphClass::NoAsoGgo,
];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct CohortCounts {
    #[serde(default)]
    pub covid: usize,
    #[serde(default)]
    pub healthy: usize,
    #[serde(default, alias = "tb")]
    pub tuberculosis: usize,
    #[serde(default)]
    pub pneumonia: usize,
}

impl CohortCounts {
    pub fn get(&self, cohort: Cohort) -> usize {
        match cohort {
            Cohort::Covid => self.covid,
            Cohort::Healthy => self.healthy,
            Cohort::Tuberculosis => self.tuberculosis,
            Cohort::Pneumonia => self.pneumonia,
        }
    }

    pub fn total(&self) -> usize {
        Cohort::ALL.iter().map(|&c| self.get(c)).sum()
    }
}

fn default_size() -> usize {
    DEFAULT_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub counts: CohortCounts,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
}

impl SynthSpec {
    pub fn new(counts: CohortCounts, seed: u64) -> Self {
        SynthSpec {
            counts,
            seed,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
        }
    }
}

/// A synthetic case with the supervision targets for both stubs.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthCase {
    pub record: CaseRecord,
    pub morph: MorphClass,
    pub symptoms: [bool; NUM_SYMPTOMS],
}

pub fn morph_class_for(cohort: Cohort, index_in_cohort: usize) -> MorphClass {
    match cohort {
        Cohort::Covid => COVID_CYCLE[index_in_cohort % COVID_CYCLE.len()],
        Cohort::Healthy => MorphClass::NoAsoGgo,
        Cohort::Tuberculosis | Cohort::Pneumonia => MorphClass::MissingAsoGgo,
    }
}

/// Symptom labels implied by the planted patterns:
/// Consolidation for ASO or pneumonia, Infiltration for GGO or pneumonia,
/// Edema for GGO, Pneumonia for pneumonia, Fibrosis and Nodule for
/// tuberculosis. Everything else is absent.
pub fn symptom_labels(cohort: Cohort, morph: MorphClass) -> [bool; NUM_SYMPTOMS] {
    let aso = matches!(morph, MorphClass::Aso | MorphClass::AsoGgo);
    let ggo = matches!(morph, MorphClass::Ggo | MorphClass::AsoGgo);
    let pneumonia = cohort == Cohort::Pneumonia;
    let tb = cohort == Cohort::Tuberculosis;
    let mut labels = [false; NUM_SYMPTOMS];
    let mut set = |name: &str, v: bool| labels[symptom_index(name).expect("known symptom")] = v;
    set("Consolidation", aso || pneumonia);
    set("Infiltration", ggo || pneumonia);
    set("Edema", ggo);
    set("Pneumonia", pneumonia);
    set("Fibrosis", tb);
    set("Nodule", tb);
    labels
}

struct Geometry {
    w: f64,
    h: f64,
}

impl Geometry {
    /// Lung membership: 0 outside, 1 for the left lung, 2 for the right.
    fn lung(&self, x: usize, y: usize) -> u8 {
        let (fx, fy) = ((x as f64 + 0.5) / self.w, (y as f64 + 0.5) / self.h);
        let inside = |cx: f64| {
            let dx = (fx - cx) / 0.19;
            let dy = (fy - 0.5) / 0.38;
            dx * dx + dy * dy <= 1.0
        };
        if inside(0.29) {
            1
        } else if inside(0.71) {
            2
        } else {
            0
        }
    }

    fn frac(&self, x: usize, y: usize) -> (f64, f64) {
        ((x as f64 + 0.5) / self.w, (y as f64 + 0.5) / self.h)
    }
}

fn render(
    cohort: Cohort,
    morph: MorphClass,
    width: usize,
    height: usize,
    rng: &mut ChaCha8Rng,
) -> GrayImage {
    let g = Geometry {
        w: width as f64,
        h: height as f64,
    };
    let aso = matches!(morph, MorphClass::Aso | MorphClass::AsoGgo);
    let ggo = matches!(morph, MorphClass::Ggo | MorphClass::AsoGgo);
    let mut pixels = Vec::with_capacity(width * height);
    for y in 0..height {
        for x in 0..width {
            let lung = g.lung(x, y);
            let (fx, fy) = g.frac(x, y);
            let mut v = if lung > 0 { LUNG } else { BACKGROUND };
            if lung > 0 {
                if ggo && fy > 0.5 {
                    v += 0.3;
                }
                let outer = (lung == 1 && fx < 0.2) || (lung == 2 && fx > 0.8);
                if aso && outer && (0.25..0.75).contains(&fy) {
                    v = 0.95;
                }
                if cohort == Cohort::Tuberculosis && fy < 0.32 && (x + y) % 2 == 0 {
                    v = 0.85;
                }
                let inner = (lung == 1 && (0.3..0.46).contains(&fx))
                    || (lung == 2 && (0.54..0.7).contains(&fx));
                if cohort == Cohort::Pneumonia && inner && (0.45..0.8).contains(&fy) {
                    v = 0.9;
                }
            }
            v += rng.gen_range(-NOISE..=NOISE);
            let level = (v.clamp(0.0, 1.0) * 255.0).round();
            pixels.push(level / 255.0);
        }
    }
    GrayImage::new(width, height, pixels).expect("synthetic pixels are in range")
}

/// Generates `counts` cases per cohort, cohorts in [`Cohort::ALL`] order.
/// Case ids are `<cohort>-<nnn>`. Each image draws noise from its own seed
/// stream, so the output is a pure function of the spec.
pub fn synth_dataset(spec: &SynthSpec) -> Result<Vec<SynthCase>> {
    if spec.width < MIN_SIZE || spec.height < MIN_SIZE {
        return Err(Error::Config(format!(
            "synthetic images need at least {MIN_SIZE}x{MIN_SIZE} pixels"
        )));
    }
    let mut out = Vec::with_capacity(spec.counts.total());
    let mut stream = 0u64;
    for cohort in Cohort::ALL {
        for i in 0..spec.counts.get(cohort) {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, stream));
            stream += 1;
            let morph = morph_class_for(cohort, i);
            let image = render(cohort, morph, spec.width, spec.height, &mut rng);
            out.push(SynthCase {
                record: CaseRecord::new(format!("{cohort}-{i:03}"), image, cohort),
                morph,
                symptoms: symptom_labels(cohort, morph),
            });
        }
    }
    Ok(out)
}

fn cases_header() -> Vec<&'static str> {
    let mut h = vec!["case_id", "cohort", "truth", "morph_class"];
    h.extend(SYMPTOM_NAMES);
    h
}

/// Writes `cases.csv` and `images/<case_id>.pgm` under `dir`.
pub fn write_cases(dir: &Path, cases: &[SynthCase]) -> Result<()> {
    let images = dir.join("images");
    std::fs::create_dir_all(&images).map_err(|e| Error::io(&images, e))?;
    let csv_path = dir.join("cases.csv");
    let file = std::fs::File::create(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut wtr = csv::Writer::from_writer(file);
    wtr.write_record(cases_header())?;
    for c in cases {
        let mut row = vec![
            c.record.case_id.clone(),
            c.record.cohort.to_string(),
            c.record.truth.to_string(),
            c.morph.to_string(),
        ];
        row.extend(c.symptoms.iter().map(|&b| u8::from(b).to_string()));
        wtr.write_record(&row)?;
        let img_path = images.join(format!("{}.pgm", c.record.case_id));
        std::fs::write(&img_path, c.record.image.to_pgm()).map_err(|e| Error::io(&img_path, e))?;
    }
    wtr.flush().map_err(|e| Error::io(&csv_path, e))?;
    Ok(())
}

/// Reads a directory written by [`write_cases`].
pub fn read_cases(dir: &Path) -> Result<Vec<SynthCase>> {
    let csv_path = dir.join("cases.csv");
    let file = std::fs::File::open(&csv_path).map_err(|e| Error::io(&csv_path, e))?;
    let mut rdr = csv::Reader::from_reader(file);
    let header = cases_header();
    let found: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if found != header {
        return Err(Error::Parse {
            line: 1,
            message: format!("expected header `{}`", header.join(",")),
        });
    }
    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line() as usize);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        let case_id = record[0].to_string();
        let cohort: Cohort = record[1].parse()?;
        let morph: MorphClass = record[3].parse()?;
        let mut symptoms = [false; NUM_SYMPTOMS];
        for (i, s) in symptoms.iter_mut().enumerate() {
            *s = match &record[4 + i] {
                "0" => false,
                "1" => true,
                other => {
                    return Err(Error::Parse {
                        line,
                        message: format!("symptom label `{other}` is not 0/1"),
                    })
                }
            };
        }
        let img_path = dir.join("images").join(format!("{case_id}.pgm"));
        let image = GrayImage::read_pgm(&img_path)?;
        let rec = CaseRecord::new(case_id, image, cohort);
        if record[2].parse::<crate::data::Label>()? != rec.truth {
            return Err(Error::Value(format!(
                "line {line}: truth disagrees with cohort {cohort}"
            )));
        }
        out.push(SynthCase {
            record: rec,
            morph,
            symptoms,
        });
    }
    Ok(out)
}

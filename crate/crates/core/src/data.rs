//! Domain types shared by every stage: symptom and morphology probability
//! vectors, diagnosis labels, COVIDr annotations, and the tabular file formats.

use std::fmt;
use std::io::{Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::GrayImage;

pub const NUM_SYMPTOMS: usize = 14;
pub const NUM_MORPH_CLASSES: usize = 5;

/// The 14 chest X-ray disease indications, alphabetical. Column order in every
/// file and index order in every vector follows this list.
pub const SYMPTOM_NAMES: [&str; NUM_SYMPTOMS] = [
    "Atelectasis",
    "Cardiomegaly",
    "Consolidation",
    "Edema",
    "Effusion",
    "Emphysema",
    "Fibrosis",
    "Hernia",
    "Infiltration",
    "Mass",
    "Nodule",
    "Pleural_Thickening",
    "Pneumonia",
    "Pneumothorax",
];

pub const MORPH_COLUMNS: [&str; NUM_MORPH_CLASSES] =
    ["p_aso", "p_ggo", "p_aso_ggo", "p_none", "p_missing"];

/// Tolerance on the morphology probability sum for an already-validated vector.
pub const MORPH_SUM_TOLERANCE: f64 = 1e-6;
/// Largest sum deviation that `load_features` silently renormalizes.
pub const RENORMALIZE_TOLERANCE: f64 = 1e-3;

pub fn symptom_index(name: &str) -> Option<usize> {
    SYMPTOM_NAMES.iter().position(|n| *n == name)
}

/// COVID-19 diagnosis; COV+ is the positive class everywhere.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "COV+")]
    Positive,
    #[serde(rename = "COV-", alias = "COV−")]
    Negative,
}

impl Label {
    pub fn as_str(self) -> &'static str {
        match self {
            Label::Positive => "COV+",
            Label::Negative => "COV-",
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Label {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "COV+" => Ok(Label::Positive),
            "COV-" | "COV−" => Ok(Label::Negative),
            other => Err(Error::Value(format!("unknown label `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Cohort {
    Covid,
    Healthy,
    Tuberculosis,
    Pneumonia,
}

impl Cohort {
    pub const ALL: [Cohort; 4] = [
        Cohort::Covid,
        Cohort::Healthy,
        Cohort::Tuberculosis,
        Cohort::Pneumonia,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Cohort::Covid => "covid",
            Cohort::Healthy => "healthy",
            Cohort::Tuberculosis => "tuberculosis",
            Cohort::Pneumonia => "pneumonia",
        }
    }

    /// Healthy, pneumonia and tuberculosis images are all COV-.
    pub fn truth(self) -> Label {
        match self {
            Cohort::Covid => Label::Positive,
            _ => Label::Negative,
        }
    }
}

impl fmt::Display for Cohort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Cohort {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "covid" => Ok(Cohort::Covid),
            "healthy" => Ok(Cohort::Healthy),
            "tuberculosis" | "tb" => Ok(Cohort::Tuberculosis),
            "pneumonia" => Ok(Cohort::Pneumonia),
            other => Err(Error::Value(format!("unknown cohort `{other}`"))),
        }
    }
}

fn check_probability(what: &str, v: f64) -> Result<()> {
    if v.is_finite() && (0.0..=1.0).contains(&v) {
        Ok(())
    } else {
        Err(Error::Value(format!(
            "{what} = {v} is not a probability in [0,1]"
        )))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct SymptomVector([f64; NUM_SYMPTOMS]);

impl SymptomVector {
    pub fn new(probs: [f64; NUM_SYMPTOMS]) -> Result<Self> {
        for (name, &p) in SYMPTOM_NAMES.iter().zip(&probs) {
            check_probability(name, p)?;
        }
        Ok(SymptomVector(probs))
    }

    pub fn from_slice(probs: &[f64]) -> Result<Self> {
        let arr: [f64; NUM_SYMPTOMS] = probs.try_into().map_err(|_| Error::Dimension {
            expected: NUM_SYMPTOMS,
            actual: probs.len(),
        })?;
        Self::new(arr)
    }

    pub fn splat(p: f64) -> Result<Self> {
        Self::new([p; NUM_SYMPTOMS])
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        symptom_index(name).map(|i| self.0[i])
    }

    pub fn as_array(&self) -> &[f64; NUM_SYMPTOMS] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for SymptomVector {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        Self::from_slice(&v)
    }
}

impl From<SymptomVector> for Vec<f64> {
    fn from(v: SymptomVector) -> Self {
        v.0.to_vec()
    }
}

/// The R-model's five mutually exclusive morphology outcomes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MorphClass {
    #[serde(rename = "ASO")]
    Aso,
    #[serde(rename = "GGO")]
    Ggo,
    #[serde(rename = "ASO_GGO")]
    AsoGgo,
    #[serde(rename = "No_ASO_GGO")]
    NoAsoGgo,
    #[serde(rename = "Missing_ASO_GGO")]
    MissingAsoGgo,
}

impl MorphClass {
    pub const ALL: [MorphClass; NUM_MORPH_CLASSES] = [
        MorphClass::Aso,
        MorphClass::Ggo,
        MorphClass::AsoGgo,
        MorphClass::NoAsoGgo,
        MorphClass::MissingAsoGgo,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }

    pub fn as_str(self) -> &'static str {
        match self {
            MorphClass::Aso => "ASO",
            MorphClass::Ggo => "GGO",
            MorphClass::AsoGgo => "ASO_GGO",
            MorphClass::NoAsoGgo => "No_ASO_GGO",
            MorphClass::MissingAsoGgo => "Missing_ASO_GGO",
        }
    }

    pub fn from_presence(aso: bool, ggo: bool) -> Self {
        match (aso, ggo) {
            (true, true) => MorphClass::AsoGgo,
            (true, false) => MorphClass::Aso,
            (false, true) => MorphClass::Ggo,
            (false, false) => MorphClass::NoAsoGgo,
        }
    }
}

impl fmt::Display for MorphClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for MorphClass {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        MorphClass::ALL
            .into_iter()
            .find(|c| c.as_str() == s.trim())
            .ok_or_else(|| Error::Value(format!("unknown morphology class `{s}`")))
    }
}

/// Probability distribution over [`MorphClass::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct MorphProbs([f64; NUM_MORPH_CLASSES]);

impl MorphProbs {
    pub fn new(probs: [f64; NUM_MORPH_CLASSES]) -> Result<Self> {
        for (name, &p) in MORPH_COLUMNS.iter().zip(&probs) {
            check_probability(name, p)?;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > MORPH_SUM_TOLERANCE {
            return Err(Error::Normalization { sum });
        }
        Ok(MorphProbs(probs))
    }

    /// Accepts sums within [`RENORMALIZE_TOLERANCE`] of one and rescales them.
    pub fn renormalized(probs: [f64; NUM_MORPH_CLASSES]) -> Result<Self> {
        for (name, &p) in MORPH_COLUMNS.iter().zip(&probs) {
            check_probability(name, p)?;
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > RENORMALIZE_TOLERANCE {
            return Err(Error::Normalization { sum });
        }
        if (sum - 1.0).abs() <= MORPH_SUM_TOLERANCE {
            return Ok(MorphProbs(probs));
        }
        Ok(MorphProbs(probs.map(|p| p / sum)))
    }

    pub fn one_hot(class: MorphClass) -> Self {
        let mut probs = [0.0; NUM_MORPH_CLASSES];
        probs[class.index()] = 1.0;
        MorphProbs(probs)
    }

    pub fn uniform() -> Self {
        MorphProbs([1.0 / NUM_MORPH_CLASSES as f64; NUM_MORPH_CLASSES])
    }

    pub fn get(&self, class: MorphClass) -> f64 {
        self.0[class.index()]
    }

    pub fn as_array(&self) -> &[f64; NUM_MORPH_CLASSES] {
        &self.0
    }

    /// Most probable class; ties go to the lowest class index.
    pub fn argmax(&self) -> MorphClass {
        let mut best = 0;
        for i in 1..NUM_MORPH_CLASSES {
            if self.0[i] > self.0[best] {
                best = i;
            }
        }
        MorphClass::ALL[best]
    }
}

impl TryFrom<Vec<f64>> for MorphProbs {
    type Error = Error;

    fn try_from(v: Vec<f64>) -> Result<Self> {
        let arr: [f64; NUM_MORPH_CLASSES] =
            v.as_slice().try_into().map_err(|_| Error::Dimension {
                expected: NUM_MORPH_CLASSES,
                actual: v.len(),
            })?;
        Self::new(arr)
    }
}

impl From<MorphProbs> for Vec<f64> {
    fn from(v: MorphProbs) -> Self {
        v.0.to_vec()
    }
}

/// Indicator encoding consumed by the decision tree. An unknown morphology is
/// carried by its own `missing` indicator with `aso` and `ggo` both cleared.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct MorphEncoding {
    pub aso: bool,
    pub ggo: bool,
    pub missing: bool,
}

impl MorphEncoding {
    pub fn of_class(class: MorphClass) -> Self {
        let (aso, ggo, missing) = match class {
            MorphClass::Aso => (true, false, false),
            MorphClass::Ggo => (false, true, false),
            MorphClass::AsoGgo => (true, true, false),
            MorphClass::NoAsoGgo => (false, false, false),
            MorphClass::MissingAsoGgo => (false, false, true),
        };
        MorphEncoding { aso, ggo, missing }
    }

    pub fn as_features(&self) -> [f64; 3] {
        let f = |b: bool| if b { 1.0 } else { 0.0 };
        [f(self.aso), f(self.ggo), f(self.missing)]
    }
}

/// Converts the R-model distribution to tree indicators via its argmax class.
pub fn encode_morphology(p: &MorphProbs) -> MorphEncoding {
    MorphEncoding::of_class(p.argmax())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureVector {
    pub symptoms: SymptomVector,
    pub morph: MorphProbs,
}

impl FeatureVector {
    pub fn new(symptoms: SymptomVector, morph: MorphProbs) -> Self {
        FeatureVector { symptoms, morph }
    }
}

pub const NUM_FINDINGS: usize = 7;

pub const FINDING_NAMES: [&str; NUM_FINDINGS] = [
    "None",
    "Ground glass opacity",
    "Bilateral patchy air-space opacification",
    "Bilateral symmetrical air-space opacification",
    "Bilateral peripheral air-space opacification",
    "Predominantly unilateral air-space opacification Rt",
    "Predominantly unilateral air-space opacification Lt",
];

pub const FINDING_COLUMNS: [&str; NUM_FINDINGS] = [
    "none",
    "ggo",
    "bilat_patchy",
    "bilat_sym",
    "bilat_periph",
    "unilat_rt",
    "unilat_lt",
];

const GGO_FINDING: usize = 1;
const ASO_FINDINGS: std::ops::RangeInclusive<usize> = 2..=6;

/// One row of the radiologist's COVIDr finding annotations. `None` flags are
/// undefined (the image was never annotated).
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CovidrAnnotation {
    pub image_id: String,
    pub cohort: Cohort,
    pub flags: [Option<bool>; NUM_FINDINGS],
}

impl CovidrAnnotation {
    pub fn flag(&self, finding: usize) -> bool {
        self.flags[finding].unwrap_or(false)
    }
}

pub fn annotation_to_class(a: &CovidrAnnotation) -> MorphClass {
    match a.cohort {
        Cohort::Covid => {
            let ggo = a.flag(GGO_FINDING);
            let aso = ASO_FINDINGS.into_iter().any(|i| a.flag(i));
            MorphClass::from_presence(aso, ggo)
        }
        Cohort::Healthy => MorphClass::NoAsoGgo,
        Cohort::Tuberculosis | Cohort::Pneumonia => MorphClass::MissingAsoGgo,
    }
}

fn parse_flag(cell: &str, line: usize, column: &str) -> Result<Option<bool>> {
    match cell.trim() {
        "" => Ok(None),
        "0" => Ok(Some(false)),
        "1" => Ok(Some(true)),
        other => Err(Error::Value(format!(
            "line {line}: column `{column}` has `{other}`, expected 0, 1 or empty"
        ))),
    }
}

fn csv_line(record: &csv::StringRecord) -> usize {
    record.position().map_or(0, |p| p.line() as usize)
}

fn check_header(found: &csv::StringRecord, expected: &[&str]) -> Result<()> {
    let found: Vec<&str> = found.iter().map(str::trim).collect();
    if found != expected {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                expected.join(","),
                found.join(",")
            ),
        });
    }
    Ok(())
}

pub fn annotation_header() -> Vec<&'static str> {
    let mut h = vec!["image_id", "cohort"];
    h.extend(FINDING_COLUMNS);
    h
}

/// Reads the COVIDr annotation CSV.
pub fn parse_covidr<R: Read>(reader: R) -> Result<Vec<CovidrAnnotation>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = annotation_header();
    check_header(rdr.headers()?, &header)?;

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = csv_line(&record);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        let image_id = record[0].trim().to_string();
        let cohort: Cohort = record[1].parse().map_err(|e: Error| Error::Parse {
            line,
            message: e.to_string(),
        })?;
        let mut flags = [None; NUM_FINDINGS];
        for (i, flag) in flags.iter_mut().enumerate() {
            *flag = parse_flag(&record[i + 2], line, FINDING_COLUMNS[i])?;
        }

        match cohort {
            Cohort::Covid => {
                if flags.iter().all(Option::is_none) {
                    return Err(Error::Value(format!(
                        "line {line}: covid image `{image_id}` has no defined finding flags"
                    )));
                }
                for f in &mut flags {
                    f.get_or_insert(false);
                }
            }
            Cohort::Healthy => {
                for f in &mut flags {
                    f.get_or_insert(false);
                }
            }
            Cohort::Tuberculosis | Cohort::Pneumonia => {
                if flags.iter().any(Option::is_some) {
                    return Err(Error::Value(format!(
                        "line {line}: {cohort} image `{image_id}` was never annotated, flags must be empty"
                    )));
                }
            }
        }
        out.push(CovidrAnnotation {
            image_id,
            cohort,
            flags,
        });
    }
    Ok(out)
}

pub fn parse_covidr_file(path: &Path) -> Result<Vec<CovidrAnnotation>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    parse_covidr(file)
}

/// Number of positive flags per finding, in [`FINDING_NAMES`] order.
pub fn finding_counts(annotations: &[CovidrAnnotation]) -> [usize; NUM_FINDINGS] {
    let mut counts = [0; NUM_FINDINGS];
    for a in annotations {
        for (i, c) in counts.iter_mut().enumerate() {
            if a.flags[i] == Some(true) {
                *c += 1;
            }
        }
    }
    counts
}

/// Writes `image_id,cohort,class` rows.
pub fn write_class_labels<W: Write>(writer: W, annotations: &[CovidrAnnotation]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["image_id", "cohort", "class"])?;
    for a in annotations {
        wtr.write_record([
            a.image_id.as_str(),
            a.cohort.as_str(),
            annotation_to_class(a).as_str(),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRecord {
    pub case_id: String,
    pub features: FeatureVector,
    pub truth: Label,
}

pub fn feature_header() -> Vec<&'static str> {
    let mut h = vec!["case_id"];
    h.extend(SYMPTOM_NAMES);
    h.extend(MORPH_COLUMNS);
    h.push("truth");
    h
}

fn parse_prob(cell: &str, line: usize, column: &str) -> Result<f64> {
    let v: f64 = cell.trim().parse().map_err(|_| Error::Parse {
        line,
        message: format!("column `{column}`: `{cell}` is not a number"),
    })?;
    check_probability(column, v).map_err(|_| {
        Error::Value(format!(
            "line {line}: {column} = {v} is not a probability in [0,1]"
        ))
    })?;
    Ok(v)
}

/// Reads a feature CSV. Morphology rows whose sum is off by at most
/// [`RENORMALIZE_TOLERANCE`] are rescaled; larger deviations are rejected.
pub fn load_features<R: Read>(reader: R) -> Result<Vec<FeatureRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let header = feature_header();
    check_header(rdr.headers()?, &header)?;

    let mut out = Vec::new();
    for record in rdr.records() {
        let record = record?;
        let line = csv_line(&record);
        if record.len() != header.len() {
            return Err(Error::Parse {
                line,
                message: format!("expected {} columns, found {}", header.len(), record.len()),
            });
        }
        let mut symptoms = [0.0; NUM_SYMPTOMS];
        for (i, s) in symptoms.iter_mut().enumerate() {
            *s = parse_prob(&record[1 + i], line, SYMPTOM_NAMES[i])?;
        }
        let mut morph = [0.0; NUM_MORPH_CLASSES];
        for (i, m) in morph.iter_mut().enumerate() {
            *m = parse_prob(&record[1 + NUM_SYMPTOMS + i], line, MORPH_COLUMNS[i])?;
        }
        let truth: Label = record[header.len() - 1]
            .parse()
            .map_err(|e: Error| Error::Parse {
                line,
                message: e.to_string(),
            })?;
        out.push(FeatureRecord {
            case_id: record[0].trim().to_string(),
            features: FeatureVector::new(SymptomVector(symptoms), MorphProbs::renormalized(morph)?),
            truth,
        });
    }
    Ok(out)
}

pub fn load_features_file(path: &Path) -> Result<Vec<FeatureRecord>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    load_features(file)
}

/// Writes a feature CSV. Floats use the shortest round-trip representation, so
/// re-reading yields identical records.
pub fn write_features<W: Write>(writer: W, records: &[FeatureRecord]) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(feature_header())?;
    for r in records {
        let mut row = Vec::with_capacity(NUM_SYMPTOMS + NUM_MORPH_CLASSES + 2);
        row.push(r.case_id.clone());
        row.extend(r.features.symptoms.as_array().iter().map(|v| v.to_string()));
        row.extend(r.features.morph.as_array().iter().map(|v| v.to_string()));
        row.push(r.truth.to_string());
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct CaseRecord {
    pub case_id: String,
    pub image: GrayImage,
    pub truth: Label,
    pub cohort: Cohort,
}

impl CaseRecord {
    pub fn new(case_id: impl Into<String>, image: GrayImage, cohort: Cohort) -> Self {
        CaseRecord {
            case_id: case_id.into(),
            image,
            truth: cohort.truth(),
            cohort,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HEADER: &str =
        "image_id,cohort,none,ggo,bilat_patchy,bilat_sym,bilat_periph,unilat_rt,unilat_lt\n";

    fn parse(rows: &str) -> Result<Vec<CovidrAnnotation>> {
        parse_covidr(format!("{HEADER}{rows}").as_bytes())
    }

    #[test]
    fn covid_row_with_ggo_and_peripheral_aso() {
        let a = parse("img1,covid,0,1,0,0,1,0,0\n").unwrap();
        assert_eq!(a.len(), 1);
        assert!(a[0].flag(1));
        assert!(a[0].flag(4));
        assert_eq!(annotation_to_class(&a[0]), MorphClass::AsoGgo);
    }

    #[test]
    fn healthy_row_with_empty_flags_is_all_absent() {
        let a = parse("img2,healthy,,,,,,,\n").unwrap();
        assert_eq!(a[0].cohort, Cohort::Healthy);
        assert!(a[0].flags.iter().all(|f| *f == Some(false)));
        assert_eq!(annotation_to_class(&a[0]), MorphClass::NoAsoGgo);
    }

    #[test]
    fn unannotated_cohorts_map_to_missing() {
        let a = parse("p1,pneumonia,,,,,,,\nt1,tuberculosis,,,,,,,\n").unwrap();
        assert!(a[0].flags.iter().all(Option::is_none));
        assert_eq!(annotation_to_class(&a[0]), MorphClass::MissingAsoGgo);
        assert_eq!(annotation_to_class(&a[1]), MorphClass::MissingAsoGgo);
    }

    #[test]
    fn covid_none_maps_to_no_findings() {
        let a = parse("img3,covid,1,0,0,0,0,0,0\n").unwrap();
        assert_eq!(annotation_to_class(&a[0]), MorphClass::NoAsoGgo);
    }

    #[test]
    fn covid_aso_only_and_ggo_only() {
        let a = parse("a,covid,0,0,0,0,0,1,0\nb,covid,0,1,0,0,0,0,0\n").unwrap();
        assert_eq!(annotation_to_class(&a[0]), MorphClass::Aso);
        assert_eq!(annotation_to_class(&a[1]), MorphClass::Ggo);
    }

    #[test]
    fn wrong_column_count_reports_line() {
        let err = parse("img1,covid,0,1,0,0,1,0,0\nimg2,covid,0,1\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn flag_outside_domain_is_value_error() {
        assert!(matches!(
            parse("img1,covid,0,2,0,0,1,0,0\n"),
            Err(Error::Value(_))
        ));
    }

    #[test]
    fn undefined_covid_flags_rejected() {
        assert!(matches!(parse("img1,covid,,,,,,,\n"), Err(Error::Value(_))));
    }

    #[test]
    fn defined_flags_for_unannotated_cohort_rejected() {
        assert!(matches!(
            parse("img1,pneumonia,0,1,0,0,0,0,0\n"),
            Err(Error::Value(_))
        ));
    }

    #[test]
    fn bad_header_is_parse_error() {
        let err = parse_covidr("id,cohort\nx,covid\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 1, .. }));
    }

    #[test]
    fn conversion_table_rows() {
        let e = encode_morphology(&MorphProbs::new([0.1, 0.7, 0.1, 0.05, 0.05]).unwrap());
        assert_eq!(
            e,
            MorphEncoding {
                aso: false,
                ggo: true,
                missing: false
            }
        );
        let e = encode_morphology(&MorphProbs::new([0.2; 5]).unwrap());
        assert_eq!(
            e,
            MorphEncoding {
                aso: true,
                ggo: false,
                missing: false
            }
        );
        let e = encode_morphology(&MorphProbs::new([0.05, 0.05, 0.1, 0.1, 0.7]).unwrap());
        assert_eq!(
            e,
            MorphEncoding {
                aso: false,
                ggo: false,
                missing: true
            }
        );
    }

    #[test]
    fn argmax_ties_go_to_lowest_index() {
        let p = MorphProbs::new([0.1, 0.4, 0.1, 0.4, 0.0]).unwrap();
        assert_eq!(p.argmax(), MorphClass::Ggo);
    }

    #[test]
    fn morph_probs_reject_bad_sums() {
        assert!(matches!(
            MorphProbs::new([0.5, 0.5, 0.5, 0.0, 0.0]),
            Err(Error::Normalization { .. })
        ));
        assert!(matches!(
            MorphProbs::new([1.5, -0.5, 0.0, 0.0, 0.0]),
            Err(Error::Value(_))
        ));
    }

    fn feature_csv(row: &str) -> String {
        format!("{}\n{row}\n", feature_header().join(","))
    }

    #[test]
    fn one_hot_no_findings_row_is_valid() {
        let row = format!("c1,{},0,0,0,1,0,COV-", vec!["0"; 14].join(","));
        let recs = load_features(feature_csv(&row).as_bytes()).unwrap();
        assert_eq!(recs[0].features.morph.argmax(), MorphClass::NoAsoGgo);
        assert_eq!(recs[0].truth, Label::Negative);
    }

    #[test]
    fn out_of_range_symptom_is_value_error() {
        let mut cells = vec!["0"; 14];
        cells[symptom_index("Infiltration").unwrap()] = "1.2";
        let row = format!("c1,{},0,0,0,1,0,COV-", cells.join(","));
        assert!(matches!(
            load_features(feature_csv(&row).as_bytes()),
            Err(Error::Value(_))
        ));
    }

    #[test]
    fn small_sum_deviation_is_renormalized() {
        let row = format!(
            "c1,{},0.2,0.2,0.2,0.2,0.2005,COV+",
            vec!["0.5"; 14].join(",")
        );
        let recs = load_features(feature_csv(&row).as_bytes()).unwrap();
        let sum: f64 = recs[0].features.morph.as_array().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn large_sum_deviation_is_rejected() {
        let row = format!("c1,{},0.2,0.2,0.2,0.2,0.21,COV+", vec!["0.5"; 14].join(","));
        assert!(matches!(
            load_features(feature_csv(&row).as_bytes()),
            Err(Error::Normalization { .. })
        ));
    }

    #[test]
    fn label_parsing_accepts_unicode_minus() {
        assert_eq!("COV−".parse::<Label>().unwrap(), Label::Negative);
        assert!("positive".parse::<Label>().is_err());
    }
}

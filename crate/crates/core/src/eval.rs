//! Accuracy estimates with the binomial standard deviation, the two-s.d.
//! significance rule, and the tables computed from radiologist feedback.

use std::fmt;
use std::io::BufRead;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::Label;
use crate::error::{Error, Result};

/// Confusion counts with COV+ as the positive class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub fp: usize,
    pub tn: usize,
}

impl ConfusionMatrix {
    pub fn new(tp: usize, fn_: usize, fp: usize, tn: usize) -> Self {
        ConfusionMatrix { tp, fn_, fp, tn }
    }

    pub fn n(&self) -> usize {
        self.tp + self.fn_ + self.fp + self.tn
    }

    pub fn record(&mut self, truth: Label, predicted: Label) {
        match (truth, predicted) {
            (Label::Positive, Label::Positive) => self.tp += 1,
            (Label::Positive, Label::Negative) => self.fn_ += 1,
            (Label::Negative, Label::Positive) => self.fp += 1,
            (Label::Negative, Label::Negative) => self.tn += 1,
        }
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (Label, Label)>) -> Self {
        let mut cm = ConfusionMatrix::default();
        for (truth, predicted) in pairs {
            cm.record(truth, predicted);
        }
        cm
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccuracyEstimate {
    pub p: f64,
    pub sd: f64,
    pub n: usize,
}

impl AccuracyEstimate {
    /// Gaussian approximation to the binomial: sd = sqrt(p (1 - p) / n).
    pub fn new(p: f64, n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::EmptyMatrix);
        }
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Value(format!("accuracy {p} outside [0,1]")));
        }
        Ok(AccuracyEstimate {
            p,
            sd: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        })
    }
}

impl fmt::Display for AccuracyEstimate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.3} ± {:.3}", self.p, self.sd)
    }
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<AccuracyEstimate> {
    let n = cm.n();
    if n == 0 {
        return Err(Error::EmptyMatrix);
    }
    AccuracyEstimate::new((cm.tp + cm.tn) as f64 / n as f64, n)
}

/// Two estimates differ significantly when they are at least two of the
/// larger standard deviations apart.
pub fn significant_difference(a: &AccuracyEstimate, b: &AccuracyEstimate) -> bool {
    let diff = (a.p - b.p).abs();
    diff > 0.0 && diff >= 2.0 * a.sd.max(b.sd)
}

/// Where a review session stands; a record is usable for analytics only once
/// it reaches `Complete`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    AwaitDiagnosis,
    AwaitQuality,
    AwaitVisual,
    AwaitTextual,
    AwaitOverall,
    Complete,
}

impl Stage {
    pub fn next(self) -> Stage {
        match self {
            Stage::AwaitDiagnosis => Stage::AwaitQuality,
            Stage::AwaitQuality => Stage::AwaitVisual,
            Stage::AwaitVisual => Stage::AwaitTextual,
            Stage::AwaitTextual => Stage::AwaitOverall,
            Stage::AwaitOverall | Stage::Complete => Stage::Complete,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Sureness {
    Sure,
    Unsure,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Quality {
    Low,
    Medium,
    High,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Rating {
    Useful,
    SomewhatUseful,
    NotUseful,
}

impl Rating {
    pub const ALL: [Rating; 3] = [Rating::Useful, Rating::SomewhatUseful, Rating::NotUseful];

    /// Useful or somewhat useful.
    pub fn is_relevant(self) -> bool {
        self != Rating::NotUseful
    }

    fn index(self) -> usize {
        self as usize
    }
}

/// Answer to "which of the two was more useful".
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Comparison {
    FirstBetter,
    SecondBetter,
    Same,
}

/// Feedback for one case. Fields fill in stage by stage; `stage` says how far
/// the session got.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeedbackRecord {
    pub case_id: String,
    pub stage: Stage,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radiologist_dx: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sure: Option<Sureness>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model_dx: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub truth: Option<Label>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub quality: Option<Quality>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vis_ind: Option<Rating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vis_des: Option<Rating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_ind: Option<Rating>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_des: Option<Rating>,
    /// Inductive (first) against descriptive (second) visual explanation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmp_visual: Option<Comparison>,
    /// Inductive (first) against descriptive (second) textual explanation.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmp_textual: Option<Comparison>,
    /// Visual (first) against textual (second) explanations overall.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cmp_overall: Option<Comparison>,
}

impl FeedbackRecord {
    pub fn new(case_id: impl Into<String>) -> Self {
        FeedbackRecord {
            case_id: case_id.into(),
            stage: Stage::AwaitDiagnosis,
            radiologist_dx: None,
            sure: None,
            model_dx: None,
            truth: None,
            quality: None,
            vis_ind: None,
            vis_des: None,
            text_ind: None,
            text_des: None,
            cmp_visual: None,
            cmp_textual: None,
            cmp_overall: None,
        }
    }

    pub fn complete(&self) -> Result<CompletedFeedback> {
        let missing = || Error::IncompleteRecord(self.case_id.clone());
        if self.stage != Stage::Complete {
            return Err(missing());
        }
        Ok(CompletedFeedback {
            case_id: self.case_id.clone(),
            radiologist_dx: self.radiologist_dx.ok_or_else(missing)?,
            sure: self.sure.ok_or_else(missing)?,
            model_dx: self.model_dx.ok_or_else(missing)?,
            truth: self.truth.ok_or_else(missing)?,
            quality: self.quality.ok_or_else(missing)?,
            ratings: [
                self.vis_ind.ok_or_else(missing)?,
                self.vis_des.ok_or_else(missing)?,
                self.text_ind.ok_or_else(missing)?,
                self.text_des.ok_or_else(missing)?,
            ],
            cmp_visual: self.cmp_visual.ok_or_else(missing)?,
            cmp_textual: self.cmp_textual.ok_or_else(missing)?,
            cmp_overall: self.cmp_overall.ok_or_else(missing)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompletedFeedback {
    pub case_id: String,
    pub radiologist_dx: Label,
    pub sure: Sureness,
    pub model_dx: Label,
    pub truth: Label,
    pub quality: Quality,
    /// In [`REPRESENTATIONS`] order.
    pub ratings: [Rating; 4],
    pub cmp_visual: Comparison,
    pub cmp_textual: Comparison,
    pub cmp_overall: Comparison,
}

pub const REPRESENTATIONS: [&str; 4] = ["Vis-Ind", "Vis-Des", "Text-Ind", "Text-Des"];
const VIS_IND: usize = 0;
const TEXT_IND: usize = 2;

fn all_complete(records: &[FeedbackRecord]) -> Result<Vec<CompletedFeedback>> {
    records.iter().map(FeedbackRecord::complete).collect()
}

/// Completed records only; partial sessions are dropped.
pub fn completed(records: &[FeedbackRecord]) -> Vec<FeedbackRecord> {
    records
        .iter()
        .filter(|r| r.complete().is_ok())
        .cloned()
        .collect()
}

/// `counts[column][rating]`: columns follow [`REPRESENTATIONS`], ratings
/// follow [`Rating::ALL`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UsefulnessTable {
    pub counts: [[usize; 3]; 4],
}

impl UsefulnessTable {
    pub fn column(&self, representation: usize) -> (usize, usize, usize) {
        let c = self.counts[representation];
        (c[0], c[1], c[2])
    }
}

pub fn usefulness_table(records: &[FeedbackRecord]) -> Result<UsefulnessTable> {
    let mut table = UsefulnessTable::default();
    for r in all_complete(records)? {
        for (col, rating) in r.ratings.iter().enumerate() {
            table.counts[col][rating.index()] += 1;
        }
    }
    Ok(table)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Visual,
    Textual,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConditionalComparison {
    pub relevant: usize,
    pub inductive_better: usize,
    pub descriptive_better: usize,
    pub same: usize,
}

/// Inductive-vs-descriptive tallies over records whose inductive explanation
/// of `modality` was rated relevant.
pub fn conditional_comparison(
    records: &[FeedbackRecord],
    modality: Modality,
) -> Result<ConditionalComparison> {
    let mut out = ConditionalComparison::default();
    for r in all_complete(records)? {
        let (rating, cmp) = match modality {
            Modality::Visual => (r.ratings[VIS_IND], r.cmp_visual),
            Modality::Textual => (r.ratings[TEXT_IND], r.cmp_textual),
        };
        if !rating.is_relevant() {
            continue;
        }
        out.relevant += 1;
        match cmp {
            Comparison::FirstBetter => out.inductive_better += 1,
            Comparison::SecondBetter => out.descriptive_better += 1,
            Comparison::Same => out.same += 1,
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct AgreementTables {
    /// Radiologist sure: (agrees with model, disagrees).
    pub sure: (usize, usize),
    /// Radiologist unsure: (model correct, model incorrect).
    pub unsure: (usize, usize),
}

pub fn agreement_tables(records: &[FeedbackRecord]) -> Result<AgreementTables> {
    let mut out = AgreementTables::default();
    for r in all_complete(records)? {
        match r.sure {
            Sureness::Sure if r.radiologist_dx == r.model_dx => out.sure.0 += 1,
            Sureness::Sure => out.sure.1 += 1,
            Sureness::Unsure if r.model_dx == r.truth => out.unsure.0 += 1,
            Sureness::Unsure => out.unsure.1 += 1,
        }
    }
    Ok(out)
}

/// Records where either inductive explanation (visual or textual) is relevant.
pub fn relevance_coverage(records: &[FeedbackRecord]) -> Result<usize> {
    Ok(all_complete(records)?
        .iter()
        .filter(|r| r.ratings[VIS_IND].is_relevant() || r.ratings[TEXT_IND].is_relevant())
        .count())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub records: usize,
    pub completed: usize,
    pub usefulness: UsefulnessTable,
    pub visual: ConditionalComparison,
    pub textual: ConditionalComparison,
    pub agreement: AgreementTables,
    pub relevance_coverage: usize,
}

impl Report {
    /// All tables over the completed subset of `records`.
    pub fn from_records(records: &[FeedbackRecord]) -> Report {
        let done = completed(records);
        let expect = "completed records only";
        Report {
            records: records.len(),
            completed: done.len(),
            usefulness: usefulness_table(&done).expect(expect),
            visual: conditional_comparison(&done, Modality::Visual).expect(expect),
            textual: conditional_comparison(&done, Modality::Textual).expect(expect),
            agreement: agreement_tables(&done).expect(expect),
            relevance_coverage: relevance_coverage(&done).expect(expect),
        }
    }

    pub fn render_text(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "Completed reviews: {}/{}\n\nUsefulness of explanations and baselines\n",
            self.completed, self.records
        ));
        s.push_str(&format!("{:<16}", ""));
        for name in REPRESENTATIONS {
            s.push_str(&format!("{name:>10}"));
        }
        s.push('\n');
        for (ri, label) in ["Useful", "Somewhat Useful", "Not Useful"]
            .iter()
            .enumerate()
        {
            s.push_str(&format!("{label:<16}"));
            for col in &self.usefulness.counts {
                s.push_str(&format!("{:>10}", col[ri]));
            }
            s.push('\n');
        }
        for (title, c) in [("Visual", &self.visual), ("Textual", &self.textual)] {
            s.push_str(&format!(
                "\n{title} comparison given the inductive explanation is relevant ({}/{})\n",
                c.relevant, self.completed
            ));
            s.push_str(&format!(
                "I > D {:>6}\nI < D {:>6}\nI = D {:>6}\n",
                c.inductive_better, c.descriptive_better, c.same
            ));
        }
        s.push_str(&format!(
            "\nRadiologist sure:   agree {}, disagree {}\nRadiologist unsure: model correct {}, model incorrect {}\n",
            self.agreement.sure.0, self.agreement.sure.1, self.agreement.unsure.0, self.agreement.unsure.1
        ));
        s.push_str(&format!(
            "\nEither inductive explanation relevant: {}/{}\n",
            self.relevance_coverage, self.completed
        ));
        s
    }

    /// Long-format CSV: `table,row,column,count`.
    pub fn render_csv(&self) -> String {
        let mut s = String::from("table,row,column,count\n");
        for (ci, name) in REPRESENTATIONS.iter().enumerate() {
            for (ri, rating) in ["useful", "somewhat-useful", "not-useful"]
                .iter()
                .enumerate()
            {
                s.push_str(&format!(
                    "usefulness,{rating},{name},{}\n",
                    self.usefulness.counts[ci][ri]
                ));
            }
        }
        for (table, c) in [
            ("visual_comparison", &self.visual),
            ("textual_comparison", &self.textual),
        ] {
            s.push_str(&format!("{table},I>D,count,{}\n", c.inductive_better));
            s.push_str(&format!("{table},I<D,count,{}\n", c.descriptive_better));
            s.push_str(&format!("{table},I=D,count,{}\n", c.same));
            s.push_str(&format!("{table},relevant,count,{}\n", c.relevant));
        }
        s.push_str(&format!(
            "agreement_sure,Sure,Agree,{}\n",
            self.agreement.sure.0
        ));
        s.push_str(&format!(
            "agreement_sure,Sure,Disagree,{}\n",
            self.agreement.sure.1
        ));
        s.push_str(&format!(
            "agreement_unsure,Unsure,Correct,{}\n",
            self.agreement.unsure.0
        ));
        s.push_str(&format!(
            "agreement_unsure,Unsure,Incorrect,{}\n",
            self.agreement.unsure.1
        ));
        s.push_str(&format!(
            "relevance_coverage,either_inductive,count,{}\n",
            self.relevance_coverage
        ));
        s
    }
}

/// Parses a JSON-lines feedback log; blank lines are skipped.
pub fn read_feedback<R: BufRead>(reader: R) -> Result<Vec<FeedbackRecord>> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<feedback log>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(rec);
    }
    Ok(out)
}

/// Reads a feedback log; a missing file is an empty log.
pub fn read_feedback_file(path: &Path) -> Result<Vec<FeedbackRecord>> {
    match std::fs::File::open(path) {
        Ok(f) => read_feedback(std::io::BufReader::new(f)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Vec::new()),
        Err(e) => Err(Error::io(path, e)),
    }
}

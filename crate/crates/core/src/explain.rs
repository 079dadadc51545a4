//! The four explanation artifacts for a diagnosis, rule extraction from a
//! fitted tree, and the published reference tree.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{CaseRecord, FeatureVector, Label, MorphClass, SYMPTOM_NAMES};
use crate::error::{Error, Result};
use crate::neural::{
    predict_r, predict_s, saliency, segment, SaliencyMap, SegmentationMask, ToyModel,
};
use crate::tree::{tree_inputs, Comparator, DecisionTree, TreeNode, ASO_FEATURE, MISSING_FEATURE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub feature: String,
    pub comparator: Comparator,
    pub threshold: f64,
}

impl Condition {
    pub fn new(feature: &str, comparator: Comparator, threshold: f64) -> Self {
        Condition {
            feature: feature.to_string(),
            comparator,
            threshold,
        }
    }

    pub fn is_missing_indicator(&self) -> bool {
        self.feature == MISSING_FEATURE
    }
}

/// Thresholds print with at most three decimals, trailing zeros dropped.
/// Nonzero values that would round to zero keep three significant digits.
pub fn format_threshold(t: f64) -> String {
    let decimals = if t != 0.0 && t.abs() < 0.0005 {
        (2 - t.abs().log10().floor() as i32) as usize
    } else {
        3
    };
    let s = format!("{t:.decimals$}");
    s.trim_end_matches('0').trim_end_matches('.').to_string()
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "P({}) {} {}",
            self.feature,
            self.comparator.symbol(),
            format_threshold(self.threshold)
        )
    }
}

/// A root-to-leaf path of a tree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rule {
    pub id: usize,
    pub label: Label,
    pub conditions: Vec<Condition>,
}

impl Rule {
    pub fn fires(&self, x: &FeatureVector) -> bool {
        let inputs = tree_inputs(x);
        self.conditions.iter().all(|c| {
            let idx = crate::tree::tree_feature_index(&c.feature)
                .expect("rule features come from a valid tree");
            c.comparator.holds(inputs[idx], c.threshold)
        })
    }

    pub fn render(&self) -> String {
        if self.conditions.is_empty() {
            return format!("{}: (no conditions)", self.label);
        }
        let parts: Vec<String> = self.conditions.iter().map(|c| c.to_string()).collect();
        format!("{}: {}", self.label, parts.join(" && "))
    }
}

/// One rule per leaf, left subtrees first; rule ids number the leaves in that
/// order.
pub fn extract_rules(tree: &DecisionTree) -> Vec<Rule> {
    fn walk(node: &TreeNode, path: &mut Vec<Condition>, out: &mut Vec<Rule>) {
        match node {
            TreeNode::Leaf { label, .. } => out.push(Rule {
                id: out.len(),
                label: *label,
                conditions: path.clone(),
            }),
            TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } => {
                path.push(Condition::new(feature, Comparator::Le, *threshold));
                walk(left, path, out);
                path.pop();
                path.push(Condition::new(feature, Comparator::Gt, *threshold));
                walk(right, path, out);
                path.pop();
            }
        }
    }
    let mut out = Vec::new();
    walk(&tree.root, &mut Vec::new(), &mut out);
    out
}

/// The decision path behind one prediction, rendered without statements
/// about missing morphology.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextualInductive {
    pub label: Label,
    pub conditions: Vec<Condition>,
    pub rule_id: usize,
}

impl TextualInductive {
    /// Conditions shown to the reader.
    pub fn shown(&self) -> impl Iterator<Item = &Condition> {
        self.conditions.iter().filter(|c| !c.is_missing_indicator())
    }

    pub fn render(&self) -> String {
        let parts: Vec<String> = self.shown().map(|c| c.to_string()).collect();
        if parts.is_empty() {
            format!("{} (no conditions)", self.label)
        } else {
            format!("{} because {}", self.label, parts.join(" && "))
        }
    }
}

pub fn explain_textual_inductive(
    tree: &DecisionTree,
    x: &FeatureVector,
) -> Result<TextualInductive> {
    let rules = extract_rules(tree);
    let (steps, leaf) = tree.route(&tree_inputs(x))?;
    let TreeNode::Leaf { label, .. } = leaf else {
        unreachable!("route ends at a leaf")
    };
    let conditions: Vec<Condition> = steps
        .into_iter()
        .map(|s| Condition::new(&s.feature, s.comparator, s.threshold))
        .collect();
    let rule_id = rules
        .iter()
        .find(|r| r.conditions == conditions)
        .map(|r| r.id)
        .expect("every routed path is an extracted rule");
    Ok(TextualInductive {
        label: *label,
        conditions,
        rule_id,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Bin {
    Low,
    Medium,
    High,
}

impl Bin {
    pub fn as_str(self) -> &'static str {
        match self {
            Bin::Low => "Low",
            Bin::Medium => "Medium",
            Bin::High => "High",
        }
    }
}

pub const LOW_MAX: f64 = 0.33;
pub const MEDIUM_MAX: f64 = 0.67;

/// Low up to 0.33, Medium up to 0.67, High above.
pub fn bin(v: f64) -> Bin {
    if v <= LOW_MAX {
        Bin::Low
    } else if v <= MEDIUM_MAX {
        Bin::Medium
    } else {
        Bin::High
    }
}

/// Binned tabulation of the model outputs: the 14 symptoms followed by the
/// ASO, GGO and Missing class probabilities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextualDescriptive {
    pub rows: Vec<(String, Bin)>,
}

impl TextualDescriptive {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("feature,bin\n");
        for (name, b) in &self.rows {
            out.push_str(&format!("{name},{}\n", b.as_str()));
        }
        out
    }
}

pub const DESCRIPTIVE_MORPH_ROWS: [(&str, MorphClass); 3] = [
    ("P(ASO)", MorphClass::Aso),
    ("P(GGO)", MorphClass::Ggo),
    ("P(Missing)", MorphClass::MissingAsoGgo),
];

pub fn explain_textual_descriptive(x: &FeatureVector) -> TextualDescriptive {
    let mut rows: Vec<(String, Bin)> = SYMPTOM_NAMES
        .iter()
        .zip(x.symptoms.as_array())
        .map(|(name, &v)| (format!("P({name})"), bin(v)))
        .collect();
    rows.extend(
        DESCRIPTIVE_MORPH_ROWS
            .iter()
            .map(|(name, class)| (name.to_string(), bin(x.morph.get(*class)))),
    );
    TextualDescriptive { rows }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExplanationBundle {
    pub case_id: String,
    pub features: FeatureVector,
    pub prediction: Label,
    pub visual_inductive: SaliencyMap,
    pub visual_descriptive: SegmentationMask,
    pub textual_inductive: TextualInductive,
    pub textual_descriptive: TextualDescriptive,
}

/// Runs the whole neural-symbolic chain for one case and assembles every
/// explanation. Nothing is written to disk.
pub fn bundle(
    case: &CaseRecord,
    s_model: &ToyModel,
    r_model: &ToyModel,
    tree: &DecisionTree,
    tau: f64,
) -> Result<ExplanationBundle> {
    let symptoms = predict_s(s_model, &case.image)?;
    let morph = predict_r(r_model, &case.image, &symptoms)?;
    let features = FeatureVector::new(symptoms, morph);
    let prediction = tree.predict(&features)?;
    let textual_inductive = explain_textual_inductive(tree, &features)?;
    debug_assert_eq!(textual_inductive.label, prediction);
    Ok(ExplanationBundle {
        case_id: case.case_id.clone(),
        features,
        prediction,
        visual_inductive: saliency(r_model, &case.image, Some(&symptoms))?,
        visual_descriptive: segment(&case.image, tau)?,
        textual_inductive,
        textual_descriptive: explain_textual_descriptive(&features),
    })
}

pub const IMAGE_FILE: &str = "image.pgm";
pub const SALIENCY_FILE: &str = "saliency.pgm";
pub const MASK_FILE: &str = "mask.pgm";
pub const INDUCTIVE_FILE: &str = "inductive.txt";
pub const DESCRIPTIVE_FILE: &str = "descriptive.csv";
pub const PREDICTION_FILE: &str = "prediction.txt";
pub const TRUTH_FILE: &str = "truth.txt";

/// Writes a bundle into `dir` (created if needed), together with the source
/// image and the ground truth that the review service keeps to itself.
pub fn write_bundle(dir: &Path, b: &ExplanationBundle, case: &CaseRecord) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let files = [
        (IMAGE_FILE, case.image.to_pgm()),
        (SALIENCY_FILE, b.visual_inductive.to_pgm()),
        (MASK_FILE, b.visual_descriptive.to_pgm()),
        (
            INDUCTIVE_FILE,
            format!("{}\n", b.textual_inductive.render()),
        ),
        (DESCRIPTIVE_FILE, b.textual_descriptive.to_csv()),
        (PREDICTION_FILE, format!("{}\n", b.prediction)),
        (TRUTH_FILE, format!("{}\n", case.truth)),
    ];
    for (name, contents) in files {
        crate::fsutil::write_atomic(&dir.join(name), contents.as_bytes())?;
    }
    Ok(())
}

/// The published diagnosis tree.
///
/// ```text
/// ASO <= 0.5
/// ├─ Missing <= 0.5
/// │  ├─ Infiltration <= 0.406
/// │  │  ├─ Emphysema <= 0.127 → COV-
/// │  │  └─ Emphysema > 0.127
/// │  │     ├─ Edema <= 0.085 → COV-
/// │  │     └─ Edema > 0.085 → COV+
/// │  └─ Infiltration > 0.406
/// │     ├─ Emphysema <= 0.122 → COV+
/// │     └─ Emphysema > 0.122 → COV-
/// └─ Missing > 0.5 → COV-
/// ASO > 0.5 → COV+
/// ```
///
/// Leaf counts are not published; each leaf records a single row of its class.
pub fn fixture_tree() -> DecisionTree {
    let pos = || TreeNode::leaf(1, 0);
    let neg = || TreeNode::leaf(0, 1);
    let low_infiltration = TreeNode::split(
        "Emphysema",
        0.127,
        neg(),
        TreeNode::split("Edema", 0.085, neg(), pos()),
    );
    let high_infiltration = TreeNode::split("Emphysema", 0.122, pos(), neg());
    let known = TreeNode::split("Infiltration", 0.406, low_infiltration, high_infiltration);
    let no_aso = TreeNode::split(MISSING_FEATURE, 0.5, known, neg());
    let root = TreeNode::split(ASO_FEATURE, 0.5, no_aso, pos());
    DecisionTree::new(root, 5, 7)
}

//! CART learner for the symbolic diagnosis model.
//!
//! Trees split on a 17-value projection of a [`FeatureVector`]: the 14
//! symptom probabilities followed by the ASO, GGO and Missing indicators from
//! [`encode_morphology`]. Growth is best-first on Gini decrease so that a
//! leaf budget picks the most useful splits first.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::{encode_morphology, FeatureVector, Label, NUM_SYMPTOMS, SYMPTOM_NAMES};
use crate::error::{Error, Result};

pub const NUM_TREE_FEATURES: usize = NUM_SYMPTOMS + 3;
pub const ASO_FEATURE: &str = "ASO";
pub const GGO_FEATURE: &str = "GGO";
pub const MISSING_FEATURE: &str = "Missing GGO/ASO";

pub fn tree_feature_names() -> [&'static str; NUM_TREE_FEATURES] {
    let mut names = [""; NUM_TREE_FEATURES];
    names[..NUM_SYMPTOMS].copy_from_slice(&SYMPTOM_NAMES);
    names[NUM_SYMPTOMS] = ASO_FEATURE;
    names[NUM_SYMPTOMS + 1] = GGO_FEATURE;
    names[NUM_SYMPTOMS + 2] = MISSING_FEATURE;
    names
}

pub fn tree_feature_index(name: &str) -> Option<usize> {
    tree_feature_names().iter().position(|n| *n == name)
}

pub type TreeInputs = [f64; NUM_TREE_FEATURES];

pub fn tree_inputs(x: &FeatureVector) -> TreeInputs {
    let mut out = [0.0; NUM_TREE_FEATURES];
    out[..NUM_SYMPTOMS].copy_from_slice(x.symptoms.as_array());
    out[NUM_SYMPTOMS..].copy_from_slice(&encode_morphology(&x.morph).as_features());
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Comparator {
    #[serde(rename = "<=")]
    Le,
    #[serde(rename = ">")]
    Gt,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Le => "<=",
            Comparator::Gt => ">",
        }
    }

    pub fn holds(self, value: f64, threshold: f64) -> bool {
        match self {
            Comparator::Le => value <= threshold,
            Comparator::Gt => value > threshold,
        }
    }
}

/// `value <= threshold` goes left, anything greater goes right.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum TreeNode {
    Internal {
        feature: String,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf {
        label: Label,
        /// (COV+ count, COV- count) of the training rows that reached the leaf.
        counts: (usize, usize),
    },
}

impl TreeNode {
    pub fn leaf(n_pos: usize, n_neg: usize) -> Self {
        TreeNode::Leaf {
            label: majority(n_pos, n_neg),
            counts: (n_pos, n_neg),
        }
    }

    pub fn split(feature: &str, threshold: f64, left: TreeNode, right: TreeNode) -> Self {
        TreeNode::Internal {
            feature: feature.to_string(),
            threshold,
            left: Box::new(left),
            right: Box::new(right),
        }
    }

    pub fn leaf_count(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.leaf_count() + right.leaf_count(),
        }
    }

    /// Edges on the longest root-to-leaf path.
    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// Majority class; a tie is COV-.
pub fn majority(n_pos: usize, n_neg: usize) -> Label {
    if n_pos > n_neg {
        Label::Positive
    } else {
        Label::Negative
    }
}

/// One decision taken while routing an input.
#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub feature: String,
    pub comparator: Comparator,
    pub threshold: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub feature_names: Vec<String>,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub root: TreeNode,
}

impl DecisionTree {
    pub fn new(root: TreeNode, max_depth: usize, max_leaves: usize) -> Self {
        DecisionTree {
            feature_names: tree_feature_names().iter().map(|s| s.to_string()).collect(),
            max_depth,
            max_leaves,
            root,
        }
    }

    pub fn leaf_count(&self) -> usize {
        self.root.leaf_count()
    }

    pub fn depth(&self) -> usize {
        self.root.depth()
    }

    /// Checks feature names against the 17-feature projection and the
    /// recorded constraints.
    pub fn validate(&self) -> Result<()> {
        let expected = tree_feature_names();
        if self.feature_names.len() != expected.len()
            || self.feature_names.iter().zip(expected).any(|(a, b)| a != b)
        {
            return Err(Error::CorruptModel("unexpected tree feature list".into()));
        }
        fn walk(node: &TreeNode) -> Result<()> {
            if let TreeNode::Internal {
                feature,
                threshold,
                left,
                right,
            } = node
            {
                if tree_feature_index(feature).is_none() {
                    return Err(Error::CorruptModel(format!(
                        "unknown split feature `{feature}`"
                    )));
                }
                if !threshold.is_finite() {
                    return Err(Error::CorruptModel(format!(
                        "non-finite threshold on `{feature}`"
                    )));
                }
                walk(left)?;
                walk(right)?;
            }
            Ok(())
        }
        walk(&self.root)?;
        if self.leaf_count() > self.max_leaves || self.depth() > self.max_depth {
            return Err(Error::CorruptModel(format!(
                "tree with {} leaves and depth {} violates its constraints ({} leaves, depth {})",
                self.leaf_count(),
                self.depth(),
                self.max_leaves,
                self.max_depth
            )));
        }
        Ok(())
    }

    /// Routes `inputs` to a leaf, returning the decisions taken and the leaf.
    pub fn route(&self, inputs: &TreeInputs) -> Result<(Vec<Step>, &TreeNode)> {
        let mut node = &self.root;
        let mut steps = Vec::new();
        loop {
            match node {
                TreeNode::Leaf { .. } => return Ok((steps, node)),
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    let idx = tree_feature_index(feature).ok_or_else(|| {
                        Error::CorruptModel(format!("unknown split feature `{feature}`"))
                    })?;
                    let comparator = if inputs[idx] <= *threshold {
                        Comparator::Le
                    } else {
                        Comparator::Gt
                    };
                    steps.push(Step {
                        feature: feature.clone(),
                        comparator,
                        threshold: *threshold,
                    });
                    node = if comparator == Comparator::Le {
                        left
                    } else {
                        right
                    };
                }
            }
        }
    }

    pub fn predict_inputs(&self, inputs: &TreeInputs) -> Result<Label> {
        match self.route(inputs)?.1 {
            TreeNode::Leaf { label, .. } => Ok(*label),
            TreeNode::Internal { .. } => unreachable!("route ends at a leaf"),
        }
    }

    pub fn predict(&self, x: &FeatureVector) -> Result<Label> {
        self.predict_inputs(&tree_inputs(x))
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: DecisionTree = serde_json::from_str(text)?;
        tree.validate()?;
        Ok(tree)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitParams {
    pub max_depth: usize,
    pub max_leaves: usize,
    /// When set, features are scanned in a seeded random order, which decides
    /// ties between equally good splits. Otherwise the natural feature order
    /// decides.
    pub seed: Option<u64>,
}

impl FitParams {
    pub fn new(max_depth: usize, max_leaves: usize) -> Self {
        FitParams {
            max_depth,
            max_leaves,
            seed: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: f64,
}

struct Grow {
    rows: Vec<usize>,
    depth: usize,
    n_pos: usize,
    best: Option<Split>,
    children: Option<(usize, usize)>,
}

const GAIN_EPS: f64 = 1e-12;

fn gini_mass(n_pos: usize, n: usize) -> f64 {
    // n * gini = n * (1 - p^2 - q^2) = 2 * pos * neg / n
    if n == 0 {
        return 0.0;
    }
    let pos = n_pos as f64;
    2.0 * pos * (n - n_pos) as f64 / n as f64
}

fn best_split(
    inputs: &[TreeInputs],
    positive: &[bool],
    rows: &[usize],
    order: &[usize],
) -> Option<Split> {
    let n = rows.len();
    let n_pos = rows.iter().filter(|&&r| positive[r]).count();
    let parent = gini_mass(n_pos, n);
    if parent == 0.0 {
        return None;
    }
    let mut best: Option<Split> = None;
    let mut sorted = rows.to_vec();
    for &f in order {
        sorted.sort_by(|&a, &b| inputs[a][f].total_cmp(&inputs[b][f]));
        let mut left_pos = 0;
        for i in 0..n - 1 {
            if positive[sorted[i]] {
                left_pos += 1;
            }
            let (lo, hi) = (inputs[sorted[i]][f], inputs[sorted[i + 1]][f]);
            if lo == hi {
                continue;
            }
            let n_left = i + 1;
            let gain =
                parent - gini_mass(left_pos, n_left) - gini_mass(n_pos - left_pos, n - n_left);
            if gain > best.map_or(GAIN_EPS, |b| b.gain + GAIN_EPS) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

/// Grows a CART tree on projected inputs.
pub fn fit_inputs(
    inputs: &[TreeInputs],
    labels: &[Label],
    params: &FitParams,
) -> Result<DecisionTree> {
    if inputs.is_empty() {
        return Err(Error::Config(
            "cannot fit a tree on an empty dataset".into(),
        ));
    }
    if inputs.len() != labels.len() {
        return Err(Error::Dimension {
            expected: inputs.len(),
            actual: labels.len(),
        });
    }
    if params.max_depth < 1 {
        return Err(Error::Config("max depth must be at least 1".into()));
    }
    if params.max_leaves < 2 {
        return Err(Error::Config("max leaves must be at least 2".into()));
    }
    if inputs.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Value("non-finite tree input".into()));
    }

    let mut order: Vec<usize> = (0..NUM_TREE_FEATURES).collect();
    if let Some(seed) = params.seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    let positive: Vec<bool> = labels.iter().map(|&l| l == Label::Positive).collect();

    let make = |rows: Vec<usize>, depth: usize| {
        let n_pos = rows.iter().filter(|&&r| positive[r]).count();
        let best = if depth < params.max_depth {
            best_split(inputs, &positive, &rows, &order)
        } else {
            None
        };
        Grow {
            rows,
            depth,
            n_pos,
            best,
            children: None,
        }
    };

    let mut nodes = vec![make((0..inputs.len()).collect(), 0)];
    let mut leaves = 1;
    while leaves < params.max_leaves {
        // Expand the open leaf with the largest decrease; earliest on ties.
        let mut pick: Option<(usize, f64)> = None;
        for (id, node) in nodes.iter().enumerate() {
            if let (None, Some(split)) = (node.children, node.best) {
                if pick.is_none_or(|(_, g)| split.gain > g + GAIN_EPS) {
                    pick = Some((id, split.gain));
                }
            }
        }
        let Some((id, _)) = pick else { break };
        let split = nodes[id].best.expect("picked node has a split");
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = nodes[id]
            .rows
            .iter()
            .partition(|&&r| inputs[r][split.feature] <= split.threshold);
        let depth = nodes[id].depth + 1;
        let left = make(left_rows, depth);
        let right = make(right_rows, depth);
        nodes.push(left);
        nodes.push(right);
        nodes[id].children = Some((nodes.len() - 2, nodes.len() - 1));
        leaves += 1;
    }

    let names = tree_feature_names();
    fn build(nodes: &[Grow], id: usize, names: &[&str]) -> TreeNode {
        let node = &nodes[id];
        match (node.children, node.best) {
            (Some((l, r)), Some(split)) => TreeNode::split(
                names[split.feature],
                split.threshold,
                build(nodes, l, names),
                build(nodes, r, names),
            ),
            _ => TreeNode::leaf(node.n_pos, node.rows.len() - node.n_pos),
        }
    }
    let root = build(&nodes, 0, &names);
    Ok(DecisionTree::new(root, params.max_depth, params.max_leaves))
}

pub fn fit(data: &[(FeatureVector, Label)], params: &FitParams) -> Result<DecisionTree> {
    let inputs: Vec<TreeInputs> = data.iter().map(|(x, _)| tree_inputs(x)).collect();
    let labels: Vec<Label> = data.iter().map(|(_, y)| *y).collect();
    fit_inputs(&inputs, &labels, params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    MaxLeaves,
    MaxDepth,
}

impl SweepParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SweepParam::MaxLeaves => "max_leaves",
            SweepParam::MaxDepth => "max_depth",
        }
    }
}

/// Constraint held fixed while the other one is swept.
pub const SWEEP_FIXED_DEPTH: usize = 32;
pub const SWEEP_FIXED_LEAVES: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: usize,
    pub accuracy: f64,
}

/// Held-out accuracy for each constraint value. One seeded split of `data`
/// (`eval_split` of it held out) is reused for every setting.
pub fn sweep(
    data: &[(FeatureVector, Label)],
    param: SweepParam,
    values: &[usize],
    eval_split: f64,
    seed: u64,
) -> Result<Vec<SweepPoint>> {
    if values.is_empty() {
        return Err(Error::Config("sweep needs at least one value".into()));
    }
    let min = match param {
        SweepParam::MaxLeaves => 2,
        SweepParam::MaxDepth => 1,
    };
    if let Some(v) = values.iter().find(|&&v| v < min) {
        return Err(Error::Config(format!(
            "{} value {v} is below the minimum {min}",
            param.as_str()
        )));
    }
    if !(eval_split > 0.0 && eval_split < 1.0) {
        return Err(Error::Config(format!(
            "eval split {eval_split} must lie strictly between 0 and 1"
        )));
    }
    let mut idx: Vec<usize> = (0..data.len()).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_eval = ((data.len() as f64) * eval_split).round() as usize;
    if n_eval == 0 || n_eval >= data.len() {
        return Err(Error::Config(format!(
            "eval split {eval_split} of {} rows leaves an empty partition",
            data.len()
        )));
    }
    let (eval_idx, train_idx) = idx.split_at(n_eval);
    let train: Vec<(FeatureVector, Label)> = train_idx.iter().map(|&i| data[i]).collect();

    values
        .iter()
        .map(|&value| {
            let params = match param {
                SweepParam::MaxLeaves => FitParams::new(SWEEP_FIXED_DEPTH, value),
                SweepParam::MaxDepth => FitParams::new(value, SWEEP_FIXED_LEAVES),
            };
            let tree = fit(&train, &params)?;
            let mut correct = 0;
            for &i in eval_idx {
                if tree.predict(&data[i].0)? == data[i].1 {
                    correct += 1;
                }
            }
            Ok(SweepPoint {
                value,
                accuracy: correct as f64 / eval_idx.len() as f64,
            })
        })
        .collect()
}

pub fn write_sweep_csv<W: Write>(
    writer: W,
    param: SweepParam,
    points: &[SweepPoint],
) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["param", "value", "accuracy"])?;
    for p in points {
        wtr.write_record([
            param.as_str().to_string(),
            p.value.to_string(),
            format!("{:.6}", p.accuracy),
        ])?;
    }
    wtr.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

//! End-to-end run: data, S-stub, R-stub grid, features, tree, held-out
//! comparison against the end-to-end baseline, and explanation bundles.
//!
//! A run directory contains:
//!
//! ```text
//! manifest.json
//! metrics.csv
//! tree.json
//! features.csv          tree training features
//! test_features.csv     held-out features
//! models/{s,r,e2e}.json
//! models/r_grid.csv
//! bundles/<case_id>/    one explanation bundle per held-out case
//! ```

use std::collections::{BTreeMap, HashSet};
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{
    load_features_file, write_features, CaseRecord, Cohort, FeatureRecord, FeatureVector, Label,
};
use crate::error::{Error, Result};
use crate::eval::{accuracy, significant_difference, AccuracyEstimate, ConfusionMatrix};
use crate::explain::{bundle, write_bundle};
use crate::fsutil::write_atomic;
use crate::neural::train::derive_seed;
use crate::neural::{
    e2e_examples, e2e_stub, grid_search, predict_e2e, predict_r, predict_s, r_examples, r_stub,
    s_examples, s_stub, synth::read_cases, synth_dataset, train, Arch, CohortCounts, GridRun,
    SynthCase, SynthSpec, ToyModel, TrainConfig,
};
use crate::tree::{fit, DecisionTree, FitParams};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DataSource {
    Synthetic {
        spec: SynthSpec,
    },
    /// A directory written by `synth` (`cases.csv` plus `images/`).
    Cases {
        dir: PathBuf,
    },
    /// Precomputed features; only the tree branch runs.
    Features {
        path: PathBuf,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub seed: u64,
    pub data: DataSource,
    /// Share of each cohort held out for the final comparison.
    pub test_fraction: f64,
    /// Split of the remaining cases into training and validation.
    pub train_fraction: f64,
    pub val_fraction: f64,
    pub arch: Arch,
    pub hidden_dim: usize,
    pub batch_size: usize,
    pub s_lr: f64,
    pub s_epochs: usize,
    pub e2e_lr: f64,
    pub e2e_epochs: usize,
    pub lr_grid: Vec<f64>,
    pub epoch_grid: Vec<usize>,
    pub max_depth: usize,
    pub max_leaves: usize,
    pub tau: f64,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 7,
            data: DataSource::Synthetic {
                spec: SynthSpec::new(
                    CohortCounts {
                        covid: 60,
                        healthy: 60,
                        tuberculosis: 40,
                        pneumonia: 40,
                    },
                    7,
                ),
            },
            test_fraction: 0.25,
            train_fraction: 0.85,
            val_fraction: 0.15,
            arch: Arch::Linear,
            hidden_dim: 16,
            batch_size: 16,
            s_lr: 1e-2,
            s_epochs: 100,
            e2e_lr: 1e-3,
            e2e_epochs: 250,
            lr_grid: vec![1e-3, 1e-4, 1e-5],
            epoch_grid: vec![100, 250, 500],
            max_depth: 5,
            max_leaves: 8,
            tau: 0.5,
        }
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        let frac = |name: &str, v: f64| {
            if v > 0.0 && v < 1.0 {
                Ok(())
            } else {
                Err(Error::Config(format!(
                    "{name} = {v} must lie strictly between 0 and 1"
                )))
            }
        };
        frac("test_fraction", self.test_fraction)?;
        frac("train_fraction", self.train_fraction)?;
        frac("val_fraction", self.val_fraction)?;
        if (self.train_fraction + self.val_fraction - 1.0).abs() > 1e-9 {
            return Err(Error::Config(
                "train_fraction + val_fraction must equal 1".into(),
            ));
        }
        if self.lr_grid.is_empty() || self.epoch_grid.is_empty() {
            return Err(Error::Config(
                "learning-rate and epoch grids must be nonempty".into(),
            ));
        }
        if self.lr_grid.iter().any(|lr| !(lr.is_finite() && *lr > 0.0))
            || !(self.s_lr > 0.0 && self.e2e_lr > 0.0)
        {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if self.max_depth < 1 || self.max_leaves < 2 {
            return Err(Error::Config(
                "tree needs max_depth >= 1 and max_leaves >= 2".into(),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(Error::Config(format!("tau = {} outside [0,1]", self.tau)));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be positive".into()));
        }
        Ok(())
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(serde_json::to_string(self)?.as_bytes()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ApproachMetrics {
    pub confusion: ConfusionMatrix,
    pub accuracy: AccuracyEstimate,
}

impl ApproachMetrics {
    fn new(confusion: ConfusionMatrix) -> Result<Self> {
        Ok(ApproachMetrics {
            accuracy: accuracy(&confusion)?,
            confusion,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitSizes {
    pub train: usize,
    pub val: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub config_hash: String,
    /// SHA-256 of each model checkpoint, keyed by file path in the run dir.
    pub model_checksums: BTreeMap<String, String>,
    pub tree_path: String,
    pub tree_checksum: String,
    pub split: SplitSizes,
    pub r_grid: Vec<GridRun>,
    pub selected_r_run: Option<usize>,
    pub end_to_end: Option<ApproachMetrics>,
    pub neural_symbolic: ApproachMetrics,
    /// Whether the two accuracies differ by two or more s.d.
    pub significant_difference: Option<bool>,
    pub bundles: Vec<String>,
    pub started_at: u64,
    pub finished_at: u64,
}

pub struct StubModels<'a> {
    pub s: &'a ToyModel,
    pub r: &'a ToyModel,
    pub e2e: &'a ToyModel,
}

pub fn features_for(case: &CaseRecord, s: &ToyModel, r: &ToyModel) -> Result<FeatureVector> {
    let symptoms = predict_s(s, &case.image)?;
    let morph = predict_r(r, &case.image, &symptoms)?;
    Ok(FeatureVector::new(symptoms, morph))
}

/// Confusion matrices of (end-to-end, neural-symbolic) over the same cases in
/// the same order.
pub fn evaluate_split(
    tree: &DecisionTree,
    models: &StubModels<'_>,
    test: &[CaseRecord],
) -> Result<(ConfusionMatrix, ConfusionMatrix)> {
    if test.is_empty() {
        return Err(Error::EmptyTestSet);
    }
    let mut e2e = ConfusionMatrix::default();
    let mut ns = ConfusionMatrix::default();
    for case in test {
        e2e.record(case.truth, predict_e2e(models.e2e, &case.image)?);
        let x = features_for(case, models.s, models.r)?;
        ns.record(case.truth, tree.predict(&x)?);
    }
    Ok((e2e, ns))
}

struct Split<T> {
    train: Vec<T>,
    val: Vec<T>,
    test: Vec<T>,
}

/// Per-group seeded shuffle, then test / val / train carved off in that order.
fn stratified_split<T: Clone, K: Ord + Copy>(
    items: &[T],
    key: impl Fn(&T) -> K,
    cfg: &PipelineConfig,
) -> Split<T> {
    let mut groups: BTreeMap<K, Vec<usize>> = BTreeMap::new();
    for (i, item) in items.iter().enumerate() {
        groups.entry(key(item)).or_default().push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, 0));
    let mut split = Split {
        train: Vec::new(),
        val: Vec::new(),
        test: Vec::new(),
    };
    for idx in groups.values_mut() {
        idx.shuffle(&mut rng);
        let n_test = (idx.len() as f64 * cfg.test_fraction).round() as usize;
        let rest = idx.len() - n_test;
        let n_val = (rest as f64 * cfg.val_fraction).round() as usize;
        for (k, &i) in idx.iter().enumerate() {
            let bucket = if k < n_test {
                &mut split.test
            } else if k < n_test + n_val {
                &mut split.val
            } else {
                &mut split.train
            };
            bucket.push(items[i].clone());
        }
    }
    split
}

fn check_disjoint<'a>(
    train: impl Iterator<Item = &'a str>,
    test: impl Iterator<Item = &'a str>,
) -> Result<()> {
    let seen: HashSet<&str> = train.collect();
    for id in test {
        if seen.contains(id) {
            return Err(Error::Config(format!(
                "case `{id}` appears in both training and evaluation data"
            )));
        }
    }
    Ok(())
}

fn stage<T>(name: &'static str, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Stage {
        stage: name,
        source: Box::new(e),
    })
}

fn now_secs() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<String> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    write_atomic(path, text.as_bytes())?;
    Ok(text)
}

fn write_feature_file(path: &Path, records: &[FeatureRecord]) -> Result<()> {
    let mut buf = Vec::new();
    write_features(&mut buf, records)?;
    write_atomic(path, &buf)
}

pub fn metrics_csv(e2e: Option<&ApproachMetrics>, ns: &ApproachMetrics) -> String {
    let mut s = String::from("approach,tp,fn,fp,tn,n,accuracy,sd\n");
    let mut row = |name: &str, m: &ApproachMetrics| {
        let c = &m.confusion;
        s.push_str(&format!(
            "{name},{},{},{},{},{},{:.6},{:.6}\n",
            c.tp,
            c.fn_,
            c.fp,
            c.tn,
            c.n(),
            m.accuracy.p,
            m.accuracy.sd
        ));
    };
    if let Some(m) = e2e {
        row("end_to_end", m);
    }
    row("neural_symbolic", ns);
    s
}

fn grid_csv(runs: &[GridRun], best: usize) -> String {
    let mut s = String::from("index,lr,epochs,seed,final_loss,val_accuracy,selected\n");
    for r in runs {
        s.push_str(&format!(
            "{},{},{},{},{:.6},{:.6},{}\n",
            r.index,
            r.lr,
            r.epochs,
            r.seed,
            r.final_loss,
            r.val_accuracy,
            u8::from(r.index == best)
        ));
    }
    s
}

/// Runs the pipeline into `out_dir`. Everything is produced in a sibling
/// staging directory that is renamed into place on success and removed on
/// failure, so a failed run leaves nothing behind.
pub fn run_pipeline(cfg: &PipelineConfig, out_dir: &Path) -> Result<RunManifest> {
    stage("config", cfg.validate())?;
    if out_dir.exists()
        && std::fs::read_dir(out_dir)
            .map_err(|e| Error::io(out_dir, e))?
            .next()
            .is_some()
    {
        return Err(Error::Config(format!(
            "output directory {} is not empty",
            out_dir.display()
        )));
    }
    let parent = match out_dir.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => PathBuf::from("."),
    };
    std::fs::create_dir_all(&parent).map_err(|e| Error::io(&parent, e))?;
    let name = out_dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("{} is not a directory path", out_dir.display())))?;
    let staging = parent.join(format!(
        ".{}.partial{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    if staging.exists() {
        std::fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    std::fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    match run_into(cfg, &staging) {
        Ok(manifest) => {
            if out_dir.exists() {
                std::fs::remove_dir(out_dir).map_err(|e| Error::io(out_dir, e))?;
            }
            std::fs::rename(&staging, out_dir).map_err(|e| Error::io(out_dir, e))?;
            Ok(manifest)
        }
        Err(e) => {
            let _ = std::fs::remove_dir_all(&staging);
            Err(e)
        }
    }
}

fn run_into(cfg: &PipelineConfig, dir: &Path) -> Result<RunManifest> {
    let started_at = now_secs();
    let config_hash = cfg.hash()?;
    let cases = match &cfg.data {
        DataSource::Synthetic { spec } => stage("data", synth_dataset(spec))?,
        DataSource::Cases { dir } => stage("data", read_cases(dir))?,
        DataSource::Features { path } => {
            let records = stage("data", load_features_file(path))?;
            return run_features_only(cfg, dir, &records, config_hash, started_at);
        }
    };
    let mut ids = HashSet::new();
    if let Some(dup) = cases
        .iter()
        .find(|c| !ids.insert(c.record.case_id.as_str()))
    {
        return stage(
            "data",
            Err(Error::Value(format!(
                "duplicate case id `{}`",
                dup.record.case_id
            ))),
        );
    }

    let split = stratified_split(&cases, |c: &SynthCase| c.record.cohort, cfg);
    if split.train.is_empty() || split.val.is_empty() || split.test.is_empty() {
        return stage(
            "split",
            Err(Error::Config(format!(
                "split produced an empty partition (train {}, val {}, test {})",
                split.train.len(),
                split.val.len(),
                split.test.len()
            ))),
        );
    }
    stage(
        "split",
        check_disjoint(
            split
                .train
                .iter()
                .chain(&split.val)
                .map(|c| c.record.case_id.as_str()),
            split.test.iter().map(|c| c.record.case_id.as_str()),
        ),
    )?;
    let pixels = split.train[0].record.image.len();
    let model_dir = dir.join("models");
    let mut model_checksums = BTreeMap::new();
    let mut save_model = |name: &str, m: &ToyModel| -> Result<()> {
        let text = m.to_json()? + "\n";
        let rel = format!("models/{name}.json");
        write_atomic(&model_dir.join(format!("{name}.json")), text.as_bytes())?;
        model_checksums.insert(rel, sha256_hex(text.as_bytes()));
        Ok(())
    };

    // S-stub
    let s_model = stage("s_model", {
        let init = s_stub(pixels, cfg.arch, cfg.hidden_dim, derive_seed(cfg.seed, 1))?;
        let tc = TrainConfig {
            batch_size: cfg.batch_size,
            ..TrainConfig::new(cfg.s_lr, cfg.s_epochs, derive_seed(cfg.seed, 2))
        };
        train(&init, &s_examples(&split.train), &tc).map(|r| r.model)
    })?;
    save_model("s", &s_model)?;

    // R-stub grid, selected on validation accuracy
    let grid = stage("r_model", {
        let init = r_stub(pixels, cfg.arch, cfg.hidden_dim, derive_seed(cfg.seed, 3))?;
        let r_train = r_examples(&split.train, &s_model)?;
        let r_val = r_examples(&split.val, &s_model)?;
        grid_search(
            &init,
            &r_train,
            &r_val,
            &cfg.lr_grid,
            &cfg.epoch_grid,
            derive_seed(cfg.seed, 4),
            cfg.batch_size,
        )
    })?;
    let r_model = grid.best_model.clone();
    save_model("r", &r_model)?;
    write_atomic(
        &model_dir.join("r_grid.csv"),
        grid_csv(&grid.runs, grid.best).as_bytes(),
    )?;

    // Tree on S/R outputs for every non-test case
    let to_records = |cases: &[SynthCase]| -> Result<Vec<FeatureRecord>> {
        cases
            .iter()
            .map(|c| {
                Ok(FeatureRecord {
                    case_id: c.record.case_id.clone(),
                    features: features_for(&c.record, &s_model, &r_model)?,
                    truth: c.record.truth,
                })
            })
            .collect()
    };
    let fit_cases: Vec<SynthCase> = split.train.iter().chain(&split.val).cloned().collect();
    let fit_records = stage("features", to_records(&fit_cases))?;
    let test_records = stage("features", to_records(&split.test))?;
    write_feature_file(&dir.join("features.csv"), &fit_records)?;
    write_feature_file(&dir.join("test_features.csv"), &test_records)?;
    let tree = stage("tree", {
        let data: Vec<(FeatureVector, Label)> =
            fit_records.iter().map(|r| (r.features, r.truth)).collect();
        fit(&data, &FitParams::new(cfg.max_depth, cfg.max_leaves))
    })?;
    let tree_text = tree.to_json()? + "\n";
    write_atomic(&dir.join("tree.json"), tree_text.as_bytes())?;

    // End-to-end baseline
    let e2e_model = stage("e2e_model", {
        let init = e2e_stub(pixels, cfg.arch, cfg.hidden_dim, derive_seed(cfg.seed, 5))?;
        let tc = TrainConfig {
            batch_size: cfg.batch_size,
            ..TrainConfig::new(cfg.e2e_lr, cfg.e2e_epochs, derive_seed(cfg.seed, 6))
        };
        train(&init, &e2e_examples(&split.train), &tc).map(|r| r.model)
    })?;
    save_model("e2e", &e2e_model)?;

    let test_cases: Vec<CaseRecord> = split.test.iter().map(|c| c.record.clone()).collect();
    let models = StubModels {
        s: &s_model,
        r: &r_model,
        e2e: &e2e_model,
    };
    let (cm_e2e, cm_ns) = stage("evaluate", evaluate_split(&tree, &models, &test_cases))?;
    let e2e_metrics = ApproachMetrics::new(cm_e2e)?;
    let ns_metrics = ApproachMetrics::new(cm_ns)?;
    write_atomic(
        &dir.join("metrics.csv"),
        metrics_csv(Some(&e2e_metrics), &ns_metrics).as_bytes(),
    )?;

    let mut bundles = Vec::new();
    stage("bundles", {
        (|| {
            for case in &test_cases {
                let b = bundle(case, &s_model, &r_model, &tree, cfg.tau)?;
                write_bundle(&dir.join("bundles").join(&case.case_id), &b, case)?;
                bundles.push(case.case_id.clone());
            }
            Ok(())
        })()
    })?;

    let manifest = RunManifest {
        config_hash,
        model_checksums,
        tree_path: "tree.json".into(),
        tree_checksum: sha256_hex(tree_text.as_bytes()),
        split: SplitSizes {
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
        },
        selected_r_run: Some(grid.best),
        r_grid: grid.runs,
        significant_difference: Some(significant_difference(
            &e2e_metrics.accuracy,
            &ns_metrics.accuracy,
        )),
        end_to_end: Some(e2e_metrics),
        neural_symbolic: ns_metrics,
        bundles,
        started_at,
        finished_at: now_secs(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

fn run_features_only(
    cfg: &PipelineConfig,
    dir: &Path,
    records: &[FeatureRecord],
    config_hash: String,
    started_at: u64,
) -> Result<RunManifest> {
    let split = stratified_split(records, |r: &FeatureRecord| r.truth, cfg);
    let fit_records: Vec<FeatureRecord> = split.train.iter().chain(&split.val).cloned().collect();
    if fit_records.is_empty() || split.test.is_empty() {
        return stage(
            "split",
            Err(Error::Config("split produced an empty partition".into())),
        );
    }
    stage(
        "split",
        check_disjoint(
            fit_records.iter().map(|r| r.case_id.as_str()),
            split.test.iter().map(|r| r.case_id.as_str()),
        ),
    )?;
    write_feature_file(&dir.join("features.csv"), &fit_records)?;
    write_feature_file(&dir.join("test_features.csv"), &split.test)?;
    let data: Vec<(FeatureVector, Label)> =
        fit_records.iter().map(|r| (r.features, r.truth)).collect();
    let tree = stage(
        "tree",
        fit(&data, &FitParams::new(cfg.max_depth, cfg.max_leaves)),
    )?;
    let tree_text = tree.to_json()? + "\n";
    write_atomic(&dir.join("tree.json"), tree_text.as_bytes())?;

    let mut cm = ConfusionMatrix::default();
    for r in &split.test {
        cm.record(r.truth, stage("evaluate", tree.predict(&r.features))?);
    }
    let ns_metrics = ApproachMetrics::new(cm)?;
    write_atomic(
        &dir.join("metrics.csv"),
        metrics_csv(None, &ns_metrics).as_bytes(),
    )?;
    let manifest = RunManifest {
        config_hash,
        model_checksums: BTreeMap::new(),
        tree_path: "tree.json".into(),
        tree_checksum: sha256_hex(tree_text.as_bytes()),
        split: SplitSizes {
            train: split.train.len(),
            val: split.val.len(),
            test: split.test.len(),
        },
        r_grid: Vec::new(),
        selected_r_run: None,
        end_to_end: None,
        neural_symbolic: ns_metrics,
        significant_difference: None,
        bundles: Vec::new(),
        started_at,
        finished_at: now_secs(),
    };
    write_json(&dir.join("manifest.json"), &manifest)?;
    Ok(manifest)
}

/// Cohort composition of a case list, for reporting.
pub fn cohort_counts(cases: &[CaseRecord]) -> BTreeMap<Cohort, usize> {
    let mut out = BTreeMap::new();
    for c in cases {
        *out.entry(c.cohort).or_insert(0) += 1;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::TreeNode;

    #[test]
    fn config_validation() {
        let mut cfg = PipelineConfig::default();
        cfg.validate().unwrap();
        cfg.train_fraction = 0.8;
        assert!(cfg.validate().is_err());
        let cfg = PipelineConfig {
            lr_grid: vec![],
            ..PipelineConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trip_and_defaults() {
        let cfg: PipelineConfig = serde_json::from_str(
            r#"{"seed": 3, "data": {"kind": "synthetic", "spec": {"counts": {"covid": 4}, "seed": 1}}}"#,
        )
        .unwrap();
        assert_eq!(cfg.seed, 3);
        assert_eq!(cfg.lr_grid, vec![1e-3, 1e-4, 1e-5]);
        let back: PipelineConfig =
            serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn split_is_stratified_and_disjoint() {
        let cfg = PipelineConfig::default();
        let spec = match &cfg.data {
            DataSource::Synthetic { spec } => *spec,
            _ => unreachable!(),
        };
        let cases = synth_dataset(&spec).unwrap();
        let split = stratified_split(&cases, |c: &SynthCase| c.record.cohort, &cfg);
        assert_eq!(
            split.train.len() + split.val.len() + split.test.len(),
            cases.len()
        );
        assert_eq!(
            split
                .test
                .iter()
                .filter(|c| c.record.cohort == Cohort::Covid)
                .count(),
            15
        );
        let test_ids: HashSet<_> = split.test.iter().map(|c| &c.record.case_id).collect();
        assert!(split
            .train
            .iter()
            .chain(&split.val)
            .all(|c| !test_ids.contains(&c.record.case_id)));
    }

    #[test]
    fn overlapping_ids_detected() {
        assert!(check_disjoint(["a", "b"].into_iter(), ["c", "b"].into_iter()).is_err());
        assert!(check_disjoint(["a"].into_iter(), ["c"].into_iter()).is_ok());
    }

    #[test]
    fn empty_test_set_is_error() {
        let m = ToyModel::zeros(Arch::Linear, 4, 0, 1, crate::neural::LossKind::BinaryCe).unwrap();
        let tree = DecisionTree::new(TreeNode::leaf(0, 1), 1, 2);
        let models = StubModels {
            s: &m,
            r: &m,
            e2e: &m,
        };
        assert!(matches!(
            evaluate_split(&tree, &models, &[]),
            Err(Error::EmptyTestSet)
        ));
    }

    #[test]
    fn failed_run_leaves_nothing_behind() {
        let tmp = tempfile::tempdir().unwrap();
        let out = tmp.path().join("run");
        let cfg = PipelineConfig {
            data: DataSource::Cases {
                dir: tmp.path().join("does-not-exist"),
            },
            ..PipelineConfig::default()
        };
        let err = run_pipeline(&cfg, &out).unwrap_err();
        assert!(matches!(err, Error::Stage { stage: "data", .. }));
        assert!(!out.exists());
        assert_eq!(std::fs::read_dir(tmp.path()).unwrap().count(), 0);
    }
}

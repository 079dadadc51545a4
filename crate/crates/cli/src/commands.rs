use std::fmt;
use std::path::Path;
use std::sync::Arc;

use anyhow::{Context, Result};
use nsdx_core::data::{
    finding_counts, load_features_file, parse_covidr_file, write_class_labels, write_features,
    FeatureRecord, FINDING_NAMES,
};
use nsdx_core::eval::{
    accuracy, read_feedback_file, significant_difference, ConfusionMatrix, Report,
};
use nsdx_core::explain::{bundle, write_bundle};
use nsdx_core::fsutil::write_atomic;
use nsdx_core::neural::synth::{read_cases, write_cases};
use nsdx_core::neural::train::derive_seed;
use nsdx_core::neural::{
    e2e_examples, e2e_stub, r_examples, r_stub, s_examples, s_stub, synth_dataset, train, Arch,
    SynthSpec, ToyModel, TrainConfig,
};
use nsdx_core::pipeline::{features_for, run_pipeline, PipelineConfig};
use nsdx_core::tree::{fit, sweep, write_sweep_csv, DecisionTree, FitParams, SweepParam};
use nsdx_review::{AppState, ReviewError};
use serde::de::DeserializeOwned;

use crate::{ArchArg, Command, StubKind, SweepArg};

/// Bad arguments caught by the CLI itself.
#[derive(Debug)]
struct Invalid(String);

impl fmt::Display for Invalid {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for Invalid {}

fn invalid(msg: impl Into<String>) -> anyhow::Error {
    Invalid(msg.into()).into()
}

pub fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if let Some(e) = cause.downcast_ref::<nsdx_core::Error>() {
            return if e.is_validation() { 1 } else { 2 };
        }
        if let Some(e) = cause.downcast_ref::<ReviewError>() {
            return match e {
                ReviewError::Core(core) if !core.is_validation() => 2,
                _ => 1,
            };
        }
        if cause.is::<Invalid>() {
            return 1;
        }
    }
    2
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| {
        nsdx_core::Error::Io {
            path: path.to_path_buf(),
            source: e,
        }
        .into()
    })
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = read_text(path)?;
    let value = serde_json::from_str(&text).map_err(nsdx_core::Error::from);
    value.with_context(|| format!("reading {}", path.display()))
}

fn read_model(path: &Path) -> Result<ToyModel> {
    ToyModel::from_json(&read_text(path)?).with_context(|| format!("reading {}", path.display()))
}

fn arch(a: ArchArg) -> Arch {
    match a {
        ArchArg::Linear => Arch::Linear,
        ArchArg::Mlp1 => Arch::Mlp1,
    }
}

/// Builds a directory in a hidden sibling and renames it into place. An
/// existing target is replaced only when `replace` is set; otherwise it must
/// be absent or empty.
fn atomic_dir(target: &Path, replace: bool, build: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let parent = match target.parent() {
        Some(p) if !p.as_os_str().is_empty() => p.to_path_buf(),
        _ => std::path::PathBuf::from("."),
    };
    let name = target
        .file_name()
        .ok_or_else(|| invalid(format!("{} is not a directory path", target.display())))?;
    if target.exists() && !replace && std::fs::read_dir(target)?.next().is_some() {
        return Err(invalid(format!(
            "{} exists and is not empty",
            target.display()
        )));
    }
    std::fs::create_dir_all(&parent)?;
    let staging = parent.join(format!(
        ".{}.partial{}",
        name.to_string_lossy(),
        std::process::id()
    ));
    if staging.exists() {
        std::fs::remove_dir_all(&staging)?;
    }
    std::fs::create_dir_all(&staging)?;
    if let Err(e) = build(&staging) {
        let _ = std::fs::remove_dir_all(&staging);
        return Err(e);
    }
    if target.exists() {
        std::fs::remove_dir_all(target)?;
    }
    std::fs::rename(&staging, target)?;
    Ok(())
}

pub fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::ParseCovidr { input, out } => {
            let rows = parse_covidr_file(&input)?;
            let mut buf = Vec::new();
            write_class_labels(&mut buf, &rows)?;
            write_atomic(&out, &buf)?;
            println!("rows: {}", rows.len());
            for (name, count) in FINDING_NAMES.iter().zip(finding_counts(&rows)) {
                println!("{name}: {count}");
            }
        }
        Command::Synth { spec, out, seed } => {
            let mut spec: SynthSpec = read_json(&spec)?;
            if let Some(seed) = seed {
                spec.seed = seed;
            }
            let cases = synth_dataset(&spec)?;
            atomic_dir(&out, false, |dir| Ok(write_cases(dir, &cases)?))?;
            println!("wrote {} cases to {}", cases.len(), out.display());
        }
        Command::TrainStub {
            kind,
            data,
            lr,
            epochs,
            seed,
            out,
            arch: a,
            hidden,
            batch_size,
            s,
            init: warm_start,
        } => {
            let seed = seed.unwrap_or(0);
            let cases = read_cases(&data)?;
            let pixels = cases
                .first()
                .ok_or_else(|| invalid(format!("{} holds no cases", data.display())))?
                .record
                .image
                .len();
            let init_seed = derive_seed(seed, 1);
            let (init, examples) = match kind {
                StubKind::S => (
                    s_stub(pixels, arch(a), hidden, init_seed)?,
                    s_examples(&cases),
                ),
                StubKind::R => {
                    let s_path =
                        s.ok_or_else(|| invalid("--kind r needs the trained S-stub via --s"))?;
                    let s_model = read_model(&s_path)?;
                    (
                        r_stub(pixels, arch(a), hidden, init_seed)?,
                        r_examples(&cases, &s_model)?,
                    )
                }
                StubKind::E2e => (
                    e2e_stub(pixels, arch(a), hidden, init_seed)?,
                    e2e_examples(&cases),
                ),
            };
            let init = match warm_start {
                Some(path) => {
                    let warm = read_model(&path)?;
                    if (warm.input_dim, warm.output_dim, warm.loss_kind)
                        != (init.input_dim, init.output_dim, init.loss_kind)
                    {
                        return Err(invalid(format!(
                            "{} does not fit a {} stub over this data",
                            path.display(),
                            match kind {
                                StubKind::S => "s",
                                StubKind::R => "r",
                                StubKind::E2e => "e2e",
                            }
                        )));
                    }
                    warm
                }
                None => init,
            };
            let cfg = TrainConfig {
                batch_size,
                ..TrainConfig::new(lr, epochs, derive_seed(seed, 2))
            };
            let report = train(&init, &examples, &cfg)?;
            write_atomic(&out, (report.model.to_json()? + "\n").as_bytes())?;
            let acc = nsdx_core::neural::accuracy(&report.model, &examples)?;
            match report.epoch_losses.last() {
                Some(loss) => println!("final loss {loss:.6}, training accuracy {acc:.3}"),
                None => println!("no epochs run, training accuracy {acc:.3}"),
            }
        }
        Command::Features { s, r, cases, out } => {
            let s = read_model(&s)?;
            let r = read_model(&r)?;
            let records = read_cases(&cases)?
                .iter()
                .map(|c| {
                    Ok(FeatureRecord {
                        case_id: c.record.case_id.clone(),
                        features: features_for(&c.record, &s, &r)?,
                        truth: c.record.truth,
                    })
                })
                .collect::<nsdx_core::Result<Vec<_>>>()?;
            let mut buf = Vec::new();
            write_features(&mut buf, &records)?;
            write_atomic(&out, &buf)?;
            println!("wrote {} feature rows", records.len());
        }
        Command::FitTree {
            data,
            max_depth,
            max_leaves,
            out,
            seed,
        } => {
            let records = load_features_file(&data)?;
            let rows: Vec<_> = records.iter().map(|r| (r.features, r.truth)).collect();
            let params = FitParams {
                seed,
                ..FitParams::new(max_depth, max_leaves)
            };
            let tree = fit(&rows, &params)?;
            write_atomic(&out, (tree.to_json()? + "\n").as_bytes())?;
            let correct = rows
                .iter()
                .map(|(x, y)| tree.predict(x).map(|p| p == *y))
                .collect::<nsdx_core::Result<Vec<_>>>()?
                .into_iter()
                .filter(|ok| *ok)
                .count();
            println!(
                "{} leaves, depth {}, training accuracy {:.3}",
                tree.leaf_count(),
                tree.depth(),
                correct as f64 / rows.len() as f64
            );
        }
        Command::Sweep {
            data,
            param,
            values,
            out,
            eval_split,
            seed,
        } => {
            let param = match param {
                SweepArg::Leaves => SweepParam::MaxLeaves,
                SweepArg::Depth => SweepParam::MaxDepth,
            };
            let rows: Vec<_> = load_features_file(&data)?
                .iter()
                .map(|r| (r.features, r.truth))
                .collect();
            let points = sweep(&rows, param, &values, eval_split, seed.unwrap_or(0))?;
            let mut buf = Vec::new();
            write_sweep_csv(&mut buf, param, &points)?;
            write_atomic(&out, &buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
        Command::Explain {
            tree,
            s,
            r,
            cases,
            case,
            out,
            tau,
        } => {
            let tree = DecisionTree::from_json(&read_text(&tree)?)?;
            let s = read_model(&s)?;
            let r = read_model(&r)?;
            let cases = read_cases(&cases)?;
            let record = &cases
                .iter()
                .find(|c| c.record.case_id == case)
                .ok_or_else(|| invalid(format!("no case `{case}` in the case directory")))?
                .record;
            let b = bundle(record, &s, &r, &tree, tau)?;
            atomic_dir(&out.join(&case), true, |dir| {
                Ok(write_bundle(dir, &b, record)?)
            })?;
            println!("{}", b.textual_inductive.render());
        }
        Command::Eval {
            pred_a,
            pred_b,
            json,
        } => {
            let a: ConfusionMatrix = read_json(&pred_a)?;
            let b: ConfusionMatrix = read_json(&pred_b)?;
            let ea = accuracy(&a)?;
            let eb = accuracy(&b)?;
            let significant = significant_difference(&ea, &eb);
            if json {
                let v = serde_json::json!({ "a": ea, "b": eb, "significant": significant });
                println!("{}", serde_json::to_string_pretty(&v)?);
            } else {
                println!("A: {ea} (n = {})", ea.n);
                println!("B: {eb} (n = {})", eb.n);
                println!(
                    "difference: {}",
                    if significant {
                        "significant"
                    } else {
                        "not significant"
                    }
                );
            }
        }
        Command::Report { log, out, json } => {
            if !log.exists() {
                return Err(invalid(format!("feedback log {} not found", log.display())));
            }
            let report = Report::from_records(&read_feedback_file(&log)?);
            let as_json = serde_json::to_string_pretty(&report)? + "\n";
            if let Some(dir) = out {
                write_atomic(&dir.join("report.txt"), report.render_text().as_bytes())?;
                write_atomic(&dir.join("report.csv"), report.render_csv().as_bytes())?;
                write_atomic(&dir.join("report.json"), as_json.as_bytes())?;
            }
            if json {
                print!("{as_json}");
            } else {
                print!("{}", report.render_text());
            }
        }
        Command::Serve {
            bundles,
            log,
            port,
            host,
        } => {
            let state = Arc::new(AppState::load(&bundles, &log)?);
            let addr = std::net::SocketAddr::new(host, port);
            let rt = tokio::runtime::Runtime::new()?;
            rt.block_on(async {
                println!("review service listening on http://{addr}");
                nsdx_review::serve(state, addr).await
            })
            .with_context(|| format!("serving on {addr}"))?;
        }
        Command::Run { config, out, seed } => {
            let mut cfg: PipelineConfig = read_json(&config)?;
            if let Some(seed) = seed {
                cfg.seed = seed;
            }
            let m = run_pipeline(&cfg, &out)?;
            println!(
                "split: train {}, val {}, test {}",
                m.split.train, m.split.val, m.split.test
            );
            if let Some(e2e) = &m.end_to_end {
                println!("end-to-end:      {}", e2e.accuracy);
            }
            println!("neural-symbolic: {}", m.neural_symbolic.accuracy);
            if let Some(sig) = m.significant_difference {
                println!(
                    "difference: {}",
                    if sig {
                        "significant"
                    } else {
                        "not significant"
                    }
                );
            }
            println!("outputs in {}", out.display());
        }
    }
    Ok(())
}

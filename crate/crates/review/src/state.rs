use std::collections::BTreeMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use nsdx_core::data::Label;
use nsdx_core::eval::{
    read_feedback_file, Comparison, FeedbackRecord, Quality, Rating, Report, Stage, Sureness,
};
use nsdx_core::explain::{
    DESCRIPTIVE_FILE, IMAGE_FILE, INDUCTIVE_FILE, MASK_FILE, PREDICTION_FILE, SALIENCY_FILE,
    TRUTH_FILE,
};
use serde::Deserialize;

use crate::error::ReviewError;

/// One prepared case as read from `bundles/<case_id>/`.
#[derive(Debug, Clone)]
pub struct CaseBundle {
    pub case_id: String,
    pub image_pgm: String,
    pub saliency_pgm: String,
    pub mask_pgm: String,
    pub inductive: String,
    pub descriptive: String,
    pub prediction: Label,
    truth: Label,
}

impl CaseBundle {
    pub fn load(dir: &Path) -> Result<Self, ReviewError> {
        let read = |name: &str| {
            std::fs::read_to_string(dir.join(name)).map_err(|e| ReviewError::Bundle {
                path: dir.join(name).display().to_string(),
                message: e.to_string(),
            })
        };
        let label = |name: &str| -> Result<Label, ReviewError> {
            read(name)?
                .trim()
                .parse()
                .map_err(|e: nsdx_core::Error| ReviewError::Bundle {
                    path: dir.join(name).display().to_string(),
                    message: e.to_string(),
                })
        };
        let case_id = dir
            .file_name()
            .map(|n| n.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(CaseBundle {
            case_id,
            image_pgm: read(IMAGE_FILE)?,
            saliency_pgm: read(SALIENCY_FILE)?,
            mask_pgm: read(MASK_FILE)?,
            inductive: read(INDUCTIVE_FILE)?.trim_end().to_string(),
            descriptive: read(DESCRIPTIVE_FILE)?,
            prediction: label(PREDICTION_FILE)?,
            truth: label(TRUTH_FILE)?,
        })
    }
}

/// Answers for the stage a session is currently waiting on.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "stage", rename_all = "snake_case", deny_unknown_fields)]
pub enum StagePayload {
    Diagnosis {
        diagnosis: Label,
        sure: Sureness,
    },
    Quality {
        quality: Quality,
    },
    Visual {
        inductive: Rating,
        descriptive: Rating,
        comparison: Comparison,
    },
    Textual {
        inductive: Rating,
        descriptive: Rating,
        comparison: Comparison,
    },
    Overall {
        comparison: Comparison,
    },
}

impl StagePayload {
    pub fn name(&self) -> &'static str {
        match self {
            StagePayload::Diagnosis { .. } => "diagnosis",
            StagePayload::Quality { .. } => "quality",
            StagePayload::Visual { .. } => "visual",
            StagePayload::Textual { .. } => "textual",
            StagePayload::Overall { .. } => "overall",
        }
    }

    fn stage(&self) -> Stage {
        match self {
            StagePayload::Diagnosis { .. } => Stage::AwaitDiagnosis,
            StagePayload::Quality { .. } => Stage::AwaitQuality,
            StagePayload::Visual { .. } => Stage::AwaitVisual,
            StagePayload::Textual { .. } => Stage::AwaitTextual,
            StagePayload::Overall { .. } => Stage::AwaitOverall,
        }
    }
}

struct Sessions {
    records: BTreeMap<String, FeedbackRecord>,
    log: File,
}

/// Bundles are immutable after startup; sessions and the log sit behind one
/// lock so that stage changes and log appends happen one at a time.
pub struct AppState {
    cases: BTreeMap<String, CaseBundle>,
    log_path: PathBuf,
    sessions: Mutex<Sessions>,
}

impl AppState {
    /// Loads every subdirectory of `bundles` as a case and replays `log`,
    /// restoring completed sessions. Sessions that had not completed before a
    /// restart start over.
    pub fn load(bundles: &Path, log: &Path) -> Result<Self, ReviewError> {
        let entries = std::fs::read_dir(bundles).map_err(|e| ReviewError::Bundle {
            path: bundles.display().to_string(),
            message: e.to_string(),
        })?;
        let mut cases = BTreeMap::new();
        for entry in entries {
            let entry = entry.map_err(|e| ReviewError::Bundle {
                path: bundles.display().to_string(),
                message: e.to_string(),
            })?;
            if entry.path().is_dir() {
                let case = CaseBundle::load(&entry.path())?;
                cases.insert(case.case_id.clone(), case);
            }
        }
        let mut records: BTreeMap<String, FeedbackRecord> = cases
            .keys()
            .map(|id| (id.clone(), FeedbackRecord::new(id.clone())))
            .collect();
        for rec in read_feedback_file(log)? {
            if rec.stage == Stage::Complete {
                if let Some(slot) = records.get_mut(&rec.case_id) {
                    *slot = rec;
                }
            }
        }
        if let Some(dir) = log.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| nsdx_core::Error::Io {
                path: dir.to_path_buf(),
                source: e,
            })?;
        }
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(log)
            .map_err(|e| nsdx_core::Error::Io {
                path: log.to_path_buf(),
                source: e,
            })?;
        Ok(AppState {
            cases,
            log_path: log.to_path_buf(),
            sessions: Mutex::new(Sessions { records, log: file }),
        })
    }

    pub fn cases(&self) -> impl Iterator<Item = &CaseBundle> {
        self.cases.values()
    }

    pub fn case(&self, id: &str) -> Result<&CaseBundle, ReviewError> {
        self.cases
            .get(id)
            .ok_or_else(|| ReviewError::NotFound(id.to_string()))
    }

    pub fn session(&self, id: &str) -> Result<FeedbackRecord, ReviewError> {
        self.case(id)?;
        let sessions = self.sessions.lock().expect("session lock poisoned");
        Ok(sessions.records[id].clone())
    }

    pub fn stages(&self) -> BTreeMap<String, Stage> {
        let sessions = self.sessions.lock().expect("session lock poisoned");
        sessions
            .records
            .iter()
            .map(|(k, v)| (k.clone(), v.stage))
            .collect()
    }

    /// Applies one stage of answers. Reaching `Complete` appends the full
    /// record to the log before the session state changes.
    pub fn submit(&self, id: &str, payload: StagePayload) -> Result<FeedbackRecord, ReviewError> {
        let case = self.case(id)?;
        let mut sessions = self.sessions.lock().expect("session lock poisoned");
        let current = sessions.records[id].clone();
        if payload.stage() != current.stage {
            return Err(ReviewError::State {
                case_id: id.to_string(),
                current: current.stage,
                submitted: payload.name(),
            });
        }
        let mut next = current;
        match payload {
            StagePayload::Diagnosis { diagnosis, sure } => {
                next.radiologist_dx = Some(diagnosis);
                next.sure = Some(sure);
                next.model_dx = Some(case.prediction);
            }
            StagePayload::Quality { quality } => next.quality = Some(quality),
            StagePayload::Visual {
                inductive,
                descriptive,
                comparison,
            } => {
                next.vis_ind = Some(inductive);
                next.vis_des = Some(descriptive);
                next.cmp_visual = Some(comparison);
            }
            StagePayload::Textual {
                inductive,
                descriptive,
                comparison,
            } => {
                next.text_ind = Some(inductive);
                next.text_des = Some(descriptive);
                next.cmp_textual = Some(comparison);
            }
            StagePayload::Overall { comparison } => {
                next.cmp_overall = Some(comparison);
                next.truth = Some(case.truth);
            }
        }
        next.stage = next.stage.next();
        if next.stage == Stage::Complete {
            next.complete()?;
            let mut line = serde_json::to_string(&next).map_err(nsdx_core::Error::from)?;
            line.push('\n');
            let io = |e| nsdx_core::Error::Io {
                path: self.log_path.clone(),
                source: e,
            };
            sessions.log.write_all(line.as_bytes()).map_err(io)?;
            sessions.log.sync_data().map_err(io)?;
        }
        sessions.records.insert(id.to_string(), next.clone());
        Ok(next)
    }

    /// Tables over the log as persisted.
    pub fn report(&self) -> Result<Report, ReviewError> {
        let _guard = self.sessions.lock().expect("session lock poisoned");
        Ok(Report::from_records(&read_feedback_file(&self.log_path)?))
    }
}

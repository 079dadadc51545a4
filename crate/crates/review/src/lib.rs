//! HTTP service for the staged radiologist review of explanation bundles.
//!
//! ```text
//! GET  /cases              case summaries, sorted by id
//! GET  /cases/{id}         image, stage, and whatever the stage allows
//! POST /cases/{id}/stage   answers for the current stage
//! GET  /report             feedback tables over completed reviews
//! ```
//!
//! The model's diagnosis and the explanations (the inductive text names the
//! diagnosis) are only sent once the rater's own diagnosis is in. Ground truth
//! is never sent.

mod error;
mod state;

use std::net::SocketAddr;
use std::sync::Arc;

use axum::body::Bytes;
use axum::extract::{Path, State};
use axum::routing::{get, post};
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD;
use base64::Engine as _;
use nsdx_core::data::Label;
use nsdx_core::eval::{FeedbackRecord, Report, Stage};
use serde::Serialize;

pub use error::ReviewError;
pub use state::{AppState, CaseBundle, StagePayload};

#[derive(Debug, Serialize)]
pub struct CaseSummary {
    pub case_id: String,
    pub stage: Stage,
    pub complete: bool,
}

#[derive(Debug, Serialize)]
pub struct Explanations {
    /// Saliency map, base64 of a PGM file.
    pub visual_inductive: String,
    /// Segmentation mask, base64 of a PGM file.
    pub visual_descriptive: String,
    pub textual_inductive: String,
    pub textual_descriptive: String,
}

#[derive(Debug, Serialize)]
pub struct CaseView {
    pub case_id: String,
    pub stage: Stage,
    pub complete: bool,
    /// Base64 of a PGM file.
    pub image: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model_dx: Option<Label>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explanations: Option<Explanations>,
    /// The rater's answers so far.
    pub feedback: FeedbackRecord,
}

fn view(case: &CaseBundle, mut record: FeedbackRecord) -> CaseView {
    record.truth = None;
    let revealed = record.stage > Stage::AwaitDiagnosis;
    if !revealed {
        record.model_dx = None;
    }
    CaseView {
        case_id: case.case_id.clone(),
        stage: record.stage,
        complete: record.stage == Stage::Complete,
        image: STANDARD.encode(&case.image_pgm),
        model_dx: revealed.then_some(case.prediction),
        explanations: revealed.then(|| Explanations {
            visual_inductive: STANDARD.encode(&case.saliency_pgm),
            visual_descriptive: STANDARD.encode(&case.mask_pgm),
            textual_inductive: case.inductive.clone(),
            textual_descriptive: case.descriptive.clone(),
        }),
        feedback: record,
    }
}

async fn list_cases(State(state): State<Arc<AppState>>) -> Json<Vec<CaseSummary>> {
    let stages = state.stages();
    Json(
        stages
            .into_iter()
            .map(|(case_id, stage)| CaseSummary {
                case_id,
                stage,
                complete: stage == Stage::Complete,
            })
            .collect(),
    )
}

async fn get_case(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
) -> Result<Json<CaseView>, ReviewError> {
    let record = state.session(&id)?;
    Ok(Json(view(state.case(&id)?, record)))
}

async fn submit_stage(
    State(state): State<Arc<AppState>>,
    Path(id): Path<String>,
    body: Bytes,
) -> Result<Json<CaseView>, ReviewError> {
    let case = state.case(&id)?;
    let payload: StagePayload =
        serde_json::from_slice(&body).map_err(|e| ReviewError::Validation(e.to_string()))?;
    let record = state.submit(&id, payload)?;
    Ok(Json(view(case, record)))
}

async fn report(State(state): State<Arc<AppState>>) -> Result<Json<Report>, ReviewError> {
    Ok(Json(state.report()?))
}

pub fn router(state: Arc<AppState>) -> Router {
    Router::new()
        .route("/cases", get(list_cases))
        .route("/cases/{id}", get(get_case))
        .route("/cases/{id}/stage", post(submit_stage))
        .route("/report", get(report))
        .with_state(state)
}

pub async fn serve(state: Arc<AppState>, addr: SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    axum::serve(listener, router(state)).await
}

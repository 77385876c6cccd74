use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post, put};
use axum::{Json, Router};
use serde::Deserialize;
use serde_json::json;
use tower_http::services::ServeDir;

use super::store::{GoldInput, ReviewError, ReviewStore, DEFAULT_PAGE_SIZE};
use super::RatingInput;

impl IntoResponse for ReviewError {
    fn into_response(self) -> Response {
        let status = match &self {
            ReviewError::UnknownSplit(_) | ReviewError::ValidationFailed { .. } => StatusCode::BAD_REQUEST,
            ReviewError::UnknownDialogue(_) | ReviewError::NoRatings(_) => StatusCode::NOT_FOUND,
            ReviewError::NotTestSplit(_) => StatusCode::CONFLICT,
            ReviewError::Storage { .. } => StatusCode::INTERNAL_SERVER_ERROR,
        };
        let mut body = json!({ "error": self.code(), "message": self.to_string() });
        if let ReviewError::ValidationFailed { violations, .. } = &self {
            body["violations"] = json!(violations);
        }
        (status, Json(body)).into_response()
    }
}

type Shared = Arc<ReviewStore>;

#[derive(Deserialize)]
struct ListQuery {
    #[serde(default = "default_split")]
    split: String,
    #[serde(default = "default_page")]
    page: usize,
    #[serde(default = "default_page_size")]
    page_size: usize,
}

fn default_split() -> String {
    "test".into()
}

fn default_page() -> usize {
    1
}

fn default_page_size() -> usize {
    DEFAULT_PAGE_SIZE
}

async fn list_dialogues(State(s): State<Shared>, Query(q): Query<ListQuery>) -> Result<Response, ReviewError> {
    Ok(Json(s.list_dialogues(&q.split, q.page, q.page_size)?).into_response())
}

async fn get_dialogue(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ReviewError> {
    Ok(Json(s.get_dialogue(&id)?).into_response())
}

async fn put_rating(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(input): Json<RatingInput>,
) -> Result<Response, ReviewError> {
    Ok(Json(s.submit_rating(&id, input).await?).into_response())
}

#[derive(Deserialize)]
struct SkipBody {
    rater_id: String,
}

async fn post_skip(
    State(s): State<Shared>,
    Path(id): Path<String>,
    Json(body): Json<SkipBody>,
) -> Result<Response, ReviewError> {
    Ok(Json(s.skip(&id, &body.rater_id).await?).into_response())
}

async fn get_aggregate(State(s): State<Shared>, Path(id): Path<String>) -> Result<Response, ReviewError> {
    Ok(Json(s.aggregate(&id)?).into_response())
}

async fn get_summary(State(s): State<Shared>) -> Response {
    Json(s.summary()).into_response()
}

async fn put_gold(
    State(s): State<Shared>,
    Path((id, turn)): Path<(String, usize)>,
    Json(input): Json<GoldInput>,
) -> Result<Response, ReviewError> {
    Ok(Json(s.save_gold(&id, turn, input).await?).into_response())
}

async fn export_gold(State(s): State<Shared>) -> Response {
    Json(s.export_gold()).into_response()
}

async fn ontology(State(s): State<Shared>) -> Response {
    let ont = s.ontology();
    Json(json!({
        "domains": ont.domains,
        "act_slots": ont.act_slots,
        "act_types": crate::annotation::DEFAULT_ACT_TYPES,
    }))
    .into_response()
}

/// The JSON API, plus static files from `static_dir` for any other path.
pub fn router(store: Shared, static_dir: Option<PathBuf>) -> Router {
    let api = Router::new()
        .route("/api/dialogues", get(list_dialogues))
        .route("/api/dialogues/{id}", get(get_dialogue))
        .route("/api/ratings/{dialogue_id}", put(put_rating))
        .route("/api/skips/{dialogue_id}", post(post_skip))
        .route("/api/aggregate", get(get_summary))
        .route("/api/aggregate/{dialogue_id}", get(get_aggregate))
        .route("/api/gold/{dialogue_id}/{turn}", put(put_gold))
        .route("/api/export/gold", get(export_gold))
        .route("/api/ontology", get(ontology))
        .with_state(store);
    match static_dir {
        Some(dir) => api.fallback_service(ServeDir::new(dir)),
        None => api,
    }
}

/// Serves until Ctrl-C.
pub async fn serve(store: Shared, addr: SocketAddr, static_dir: Option<PathBuf>) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    tracing::info!(addr = %listener.local_addr()?, "review service listening");
    axum::serve(listener, router(store, static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await
}

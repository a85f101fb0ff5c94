//! HTTP backend for the label-correction UI.
//!
//! | method | path | body |
//! |---|---|---|
//! | GET | `/api/regions` | region metadata list |
//! | GET | `/api/regions/{id}/composite.png?date=t1\|t2&bands=rgb\|swgb` | PNG |
//! | GET | `/api/regions/{id}/labels?date=t1\|t2\|change` | [`LabelsPayload`] |
//! | PUT | `/api/regions/{id}/labels?date=t1\|t2\|change` | [`LabelsUpdate`] → [`RevisionReply`] |

use std::sync::Arc;

use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::{Json, Router};
use base64::engine::general_purpose::STANDARD as B64;
use base64::Engine;
use pondwatch::pipeline::{Layer, RegionMeta, RegionStore};
use pondwatch::raster::{composite_png_bytes, BandName};
use pondwatch::Error;
use serde::{Deserialize, Serialize};

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
    current_revision: Option<u64>,
}

impl ApiError {
    fn bad_request(message: impl Into<String>) -> Self {
        ApiError {
            status: StatusCode::BAD_REQUEST,
            message: message.into(),
            current_revision: None,
        }
    }
}

impl From<Error> for ApiError {
    fn from(e: Error) -> Self {
        let (status, current_revision) = match &e {
            Error::UnknownRegion(_) => (StatusCode::NOT_FOUND, None),
            Error::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => {
                (StatusCode::NOT_FOUND, None)
            }
            Error::RevisionConflict { current, .. } => (StatusCode::CONFLICT, Some(*current)),
            Error::UnknownClassCode { .. }
            | Error::SizeMismatch { .. }
            | Error::InvalidParameter(_) => (StatusCode::BAD_REQUEST, None),
            _ => (StatusCode::INTERNAL_SERVER_ERROR, None),
        };
        if status == StatusCode::INTERNAL_SERVER_ERROR {
            log::error!("{e}");
        }
        ApiError {
            status,
            message: e.to_string(),
            current_revision,
        }
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        let body = serde_json::json!({ "error": self.message, "revision": self.current_revision });
        (self.status, Json(body)).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

#[derive(Debug, Deserialize)]
pub struct CompositeQuery {
    date: Option<String>,
    bands: Option<String>,
}

#[derive(Debug, Deserialize)]
pub struct LabelsQuery {
    date: Option<String>,
}

#[derive(Debug, Serialize, Deserialize, PartialEq)]
pub struct ClassInfo {
    pub code: u8,
    pub name: String,
}

/// A label layer as sent to the client; `data` is base64 of one byte per pixel, row-major.
#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsPayload {
    pub width: usize,
    pub height: usize,
    pub revision: u64,
    pub classes: Vec<ClassInfo>,
    pub nodata: u8,
    pub data: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct LabelsUpdate {
    pub revision: u64,
    pub data: String,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct RevisionReply {
    pub revision: u64,
}

fn layer(date: Option<&str>) -> ApiResult<Layer> {
    let date = date.unwrap_or("change");
    Layer::parse(date).ok_or_else(|| {
        ApiError::bad_request(format!("unknown date {date:?}; expected t1, t2 or change"))
    })
}

/// Runs blocking store access off the async workers.
async fn blocking<T: Send + 'static>(
    f: impl FnOnce() -> ApiResult<T> + Send + 'static,
) -> ApiResult<T> {
    tokio::task::spawn_blocking(f).await.map_err(|e| ApiError {
        status: StatusCode::INTERNAL_SERVER_ERROR,
        message: e.to_string(),
        current_revision: None,
    })?
}

async fn list_regions(State(store): State<Arc<RegionStore>>) -> ApiResult<Json<Vec<RegionMeta>>> {
    blocking(move || Ok(Json(store.list()?))).await
}

async fn composite(
    State(store): State<Arc<RegionStore>>,
    Path(id): Path<String>,
    Query(q): Query<CompositeQuery>,
) -> ApiResult<Response> {
    let [r, g, b] = match q.bands.as_deref().unwrap_or("rgb") {
        "rgb" => [BandName::Red, BandName::Green, BandName::Blue],
        "swgb" => [BandName::Swir1, BandName::Green, BandName::Blue],
        other => {
            return Err(ApiError::bad_request(format!(
                "unknown bands {other:?}; expected rgb or swgb"
            )))
        }
    };
    let date = q.date.unwrap_or_else(|| "t1".into());
    if date != "t1" && date != "t2" {
        return Err(ApiError::bad_request(format!(
            "unknown date {date:?}; expected t1 or t2"
        )));
    }
    let png = blocking(move || {
        let pair = store.pair(&id)?;
        let raster = if date == "t1" { &pair.t1 } else { &pair.t2 };
        Ok(composite_png_bytes(raster, &r, &g, &b)?)
    })
    .await?;
    Ok(([(header::CONTENT_TYPE, "image/png")], png).into_response())
}

async fn get_labels(
    State(store): State<Arc<RegionStore>>,
    Path(id): Path<String>,
    Query(q): Query<LabelsQuery>,
) -> ApiResult<Json<LabelsPayload>> {
    let layer = layer(q.date.as_deref())?;
    blocking(move || {
        let (labels, revision) = store.labels(&id, layer)?;
        let classes = labels
            .kind
            .class_names()
            .into_iter()
            .enumerate()
            .map(|(code, name)| ClassInfo {
                code: code as u8,
                name,
            })
            .collect();
        Ok(Json(LabelsPayload {
            width: labels.width,
            height: labels.height,
            revision,
            classes,
            nodata: pondwatch::raster::NODATA,
            data: B64.encode(&labels.values),
        }))
    })
    .await
}

async fn put_labels(
    State(store): State<Arc<RegionStore>>,
    Path(id): Path<String>,
    Query(q): Query<LabelsQuery>,
    Json(update): Json<LabelsUpdate>,
) -> ApiResult<Json<RevisionReply>> {
    let layer = layer(q.date.as_deref())?;
    let values = B64
        .decode(update.data.as_bytes())
        .map_err(|e| ApiError::bad_request(format!("data is not base64: {e}")))?;
    blocking(move || {
        let revision = store.put_labels(&id, layer, update.revision, values)?;
        log::info!("region {id} {layer:?} labels saved at revision {revision}");
        Ok(Json(RevisionReply { revision }))
    })
    .await
}

pub fn router(store: Arc<RegionStore>) -> Router {
    Router::new()
        .route("/api/regions", get(list_regions))
        .route("/api/regions/{id}/composite.png", get(composite))
        .route("/api/regions/{id}/labels", get(get_labels).put(put_labels))
        .with_state(store)
}

pub async fn serve(store: RegionStore, addr: std::net::SocketAddr) -> std::io::Result<()> {
    let listener = tokio::net::TcpListener::bind(addr).await?;
    log::info!(
        "serving {} on http://{}",
        store.root().display(),
        listener.local_addr()?
    );
    axum::serve(listener, router(Arc::new(store))).await
}

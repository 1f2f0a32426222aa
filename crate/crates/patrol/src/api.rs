//! HTTP adapter over [`PatrolService`].
//!
//! | Method | Path | Body / query |
//! |---|---|---|
//! | POST | `/login` | `{name, category?}` |
//! | POST | `/reports/begin` | `{token}` |
//! | POST | `/reports/obstacle` | `{token?, draft_id?, class, count, location}` |
//! | POST | `/reports/event` | `{token?, draft_id?, keyword, location}` |
//! | GET | `/reports/{id}` | |
//! | POST | `/missions/dispatch` | |
//! | POST | `/updates/sync` | |
//! | GET | `/advisory` | `?route=a,b&ttl_minutes=30` |
//! | GET | `/leaderboard` | `?n=10&period=week\|all` |
//! | POST | `/feedback` | `{report_id, helpful}` |
//! | GET | `/notifications` | `?token=` |
//! | GET | `/status` | |
//!
//! Errors are `{"error": <Name>, "message": <text>}` with status 400, 401,
//! 404, 409, 503 or 500.

use std::sync::Arc;

use axum::extract::rejection::JsonRejection;
use axum::extract::{Path, Query, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::TimeDelta;
use serde::{Deserialize, Serialize};
use serde_json::json;

use patrol_core::gamification::Period;
use patrol_core::store::{ReportId, UserCategory};

use crate::service::{ErrorClass, PatrolService, ReportRequest, ServiceError};

pub type AppState = Arc<PatrolService>;

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    name: String,
    message: String,
}

impl ApiError {
    fn bad_request(name: &str, message: impl Into<String>) -> Self {
        Self {
            status: StatusCode::BAD_REQUEST,
            name: name.to_string(),
            message: message.into(),
        }
    }
}

impl From<ServiceError> for ApiError {
    fn from(e: ServiceError) -> Self {
        let status = match e.class() {
            ErrorClass::BadRequest => StatusCode::BAD_REQUEST,
            ErrorClass::Unauthorized => StatusCode::UNAUTHORIZED,
            ErrorClass::NotFound => StatusCode::NOT_FOUND,
            ErrorClass::Conflict => StatusCode::CONFLICT,
            ErrorClass::Unavailable => StatusCode::SERVICE_UNAVAILABLE,
            ErrorClass::Internal => StatusCode::INTERNAL_SERVER_ERROR,
        };
        Self {
            status,
            name: e.name().to_string(),
            message: e.to_string(),
        }
    }
}

impl From<JsonRejection> for ApiError {
    fn from(e: JsonRejection) -> Self {
        Self::bad_request("BadRequestBody", e.body_text())
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (
            self.status,
            Json(json!({"error": self.name, "message": self.message})),
        )
            .into_response()
    }
}

type ApiResult<T> = Result<Json<T>, ApiError>;

async fn blocking<T, F>(state: AppState, f: F) -> ApiResult<T>
where
    T: Send + 'static,
    F: FnOnce(&PatrolService) -> Result<T, ServiceError> + Send + 'static,
{
    tokio::task::spawn_blocking(move || f(&state))
        .await
        .map_err(|e| ApiError {
            status: StatusCode::INTERNAL_SERVER_ERROR,
            name: "Internal".into(),
            message: e.to_string(),
        })?
        .map(Json)
        .map_err(ApiError::from)
}

#[derive(Debug, Deserialize)]
struct LoginBody {
    #[serde(default)]
    name: String,
    category: Option<UserCategory>,
}

#[derive(Debug, Deserialize)]
struct TokenBody {
    token: String,
}

#[derive(Debug, Deserialize)]
struct ObstacleBody {
    token: Option<String>,
    draft_id: Option<String>,
    class: String,
    count: u32,
    location: String,
}

#[derive(Debug, Deserialize)]
struct EventBody {
    token: Option<String>,
    draft_id: Option<String>,
    keyword: String,
    location: String,
}

#[derive(Debug, Deserialize)]
struct FeedbackBody {
    report_id: ReportId,
    helpful: bool,
}

#[derive(Debug, Deserialize)]
struct AdvisoryQuery {
    #[serde(default)]
    route: String,
    ttl_minutes: Option<i64>,
}

#[derive(Debug, Deserialize)]
struct LeaderboardQuery {
    n: Option<usize>,
    period: Option<String>,
}

#[derive(Debug, Deserialize)]
struct NotificationsQuery {
    token: String,
}

#[derive(Debug, Serialize)]
struct Synced {
    applied: bool,
    #[serde(flatten)]
    outcome: Option<crate::service::SyncOutcome>,
}

async fn login(
    State(s): State<AppState>,
    body: Result<Json<LoginBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let category = body.category.unwrap_or(UserCategory::Registered);
    blocking(s, move |s| s.login(&body.name, category))
        .await
        .into_response()
}

async fn begin(
    State(s): State<AppState>,
    body: Result<Json<TokenBody>, JsonRejection>,
) -> Response {
    let Json(body) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::from(e).into_response(),
    };
    blocking(s, move |s| s.begin_report(&body.token))
        .await
        .into_response()
}

async fn report_obstacle(
    State(s): State<AppState>,
    body: Result<Json<ObstacleBody>, JsonRejection>,
) -> Response {
    let Json(b) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let req = ReportRequest::Obstacle {
        class: b.class,
        count: b.count,
        location: b.location,
    };
    blocking(s, move |s| {
        s.submit_report(b.token.as_deref(), b.draft_id.as_deref(), &req)
    })
    .await
    .into_response()
}

async fn report_event(
    State(s): State<AppState>,
    body: Result<Json<EventBody>, JsonRejection>,
) -> Response {
    let Json(b) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::from(e).into_response(),
    };
    let req = ReportRequest::Event {
        keyword: b.keyword,
        location: b.location,
    };
    blocking(s, move |s| {
        s.submit_report(b.token.as_deref(), b.draft_id.as_deref(), &req)
    })
    .await
    .into_response()
}

async fn report(State(s): State<AppState>, Path(id): Path<ReportId>) -> Response {
    blocking(s, move |s| s.report(id)).await.into_response()
}

async fn dispatch(State(s): State<AppState>) -> Response {
    blocking(s, |s| s.dispatch()).await.into_response()
}

async fn sync(State(s): State<AppState>) -> Response {
    blocking(s, |s| {
        s.sync_updates().map(|outcome| Synced {
            applied: outcome.is_some(),
            outcome,
        })
    })
    .await
    .into_response()
}

async fn advisory(State(s): State<AppState>, Query(q): Query<AdvisoryQuery>) -> Response {
    let ttl = match q.ttl_minutes {
        Some(m) if m > 0 => Some(TimeDelta::minutes(m)),
        Some(_) => {
            return ApiError::bad_request("BadTtl", "ttl_minutes must be positive").into_response()
        }
        None => None,
    };
    blocking(s, move |s| s.advisory(&q.route, ttl))
        .await
        .into_response()
}

async fn leaderboard(State(s): State<AppState>, Query(q): Query<LeaderboardQuery>) -> Response {
    let n = q.n.unwrap_or(10);
    if n == 0 {
        return ApiError::bad_request("BadLimit", "n must be at least 1").into_response();
    }
    let period = match q.period.as_deref() {
        None | Some("week") => Period::iso_week(s.now()),
        Some("all") => Period::All,
        Some(other) => {
            return ApiError::bad_request("BadPeriod", format!("unknown period `{other}`"))
                .into_response()
        }
    };
    blocking(s, move |s| Ok(s.leaderboard(n, period)))
        .await
        .into_response()
}

async fn feedback(
    State(s): State<AppState>,
    body: Result<Json<FeedbackBody>, JsonRejection>,
) -> Response {
    let Json(b) = match body {
        Ok(b) => b,
        Err(e) => return ApiError::from(e).into_response(),
    };
    blocking(s, move |s| s.feedback(b.report_id, b.helpful))
        .await
        .into_response()
}

async fn notifications(State(s): State<AppState>, Query(q): Query<NotificationsQuery>) -> Response {
    blocking(s, move |s| s.notifications(&q.token))
        .await
        .into_response()
}

async fn status(State(s): State<AppState>) -> Response {
    blocking(s, |s| s.status()).await.into_response()
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/login", post(login))
        .route("/reports/begin", post(begin))
        .route("/reports/obstacle", post(report_obstacle))
        .route("/reports/event", post(report_event))
        .route("/reports/{id}", get(report))
        .route("/missions/dispatch", post(dispatch))
        .route("/updates/sync", post(sync))
        .route("/advisory", get(advisory))
        .route("/leaderboard", get(leaderboard))
        .route("/feedback", post(feedback))
        .route("/notifications", get(notifications))
        .route("/status", get(status))
        .with_state(state)
}

use std::net::SocketAddr;
use std::path::PathBuf;

use axum::body::Bytes;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use serde::Serialize;
use survpower_core::VERSION;
use tower_http::services::ServeDir;

use crate::dispatch::{dispatch, Command};
use crate::error::ApiError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Health {
    pub status: &'static str,
    pub version: &'static str,
}

fn json_response(status: StatusCode, body: String) -> Response {
    (status, [(header::CONTENT_TYPE, "application/json")], body).into_response()
}

fn error_response(err: &ApiError) -> Response {
    let status = StatusCode::from_u16(err.class.http_status()).unwrap_or(StatusCode::INTERNAL_SERVER_ERROR);
    json_response(status, err.to_json(false))
}

async fn run(command: Command, body: Bytes) -> Response {
    // Simulations can run for minutes; keep them off the async workers.
    let result = tokio::task::spawn_blocking(move || dispatch(command, &body, None)).await;
    match result {
        Ok(Ok(outcome)) => json_response(StatusCode::OK, outcome.render(false)),
        Ok(Err(err)) => error_response(&err),
        Err(join) => error_response(&ApiError::internal(format!("computation aborted: {join}"))),
    }
}

/// `POST /api/<command>` for every command, `GET /api/health`, and the
/// static UI under `/` when `static_dir` is given.
pub fn router(static_dir: Option<PathBuf>) -> Router {
    let mut app = Router::new().route(
        "/api/health",
        get(|| async {
            Json(Health {
                status: "ok",
                version: VERSION,
            })
        }),
    );
    for command in Command::ALL {
        app = app.route(
            &format!("/api/{}", command.name()),
            post(move |body: Bytes| run(command, body)),
        );
    }
    match static_dir {
        Some(dir) => app.fallback_service(ServeDir::new(dir)),
        None => app,
    }
}

pub async fn serve(bind: SocketAddr, static_dir: Option<PathBuf>) -> anyhow::Result<()> {
    let listener = tokio::net::TcpListener::bind(bind).await?;
    eprintln!("listening on http://{}", listener.local_addr()?);
    axum::serve(listener, router(static_dir))
        .with_graceful_shutdown(async {
            let _ = tokio::signal::ctrl_c().await;
        })
        .await?;
    Ok(())
}

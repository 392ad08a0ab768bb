//! HTTP routes and the per-session WebSocket.

use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, State};
use axum::http::StatusCode;
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use futures::{SinkExt, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::json;
use tokio::sync::broadcast::error::RecvError;

use crate::manager::{ServiceError, SessionManager};
use crate::wire::{ClientMessage, ErrorCode, WireBody, WireMessage};

pub fn router(manager: Arc<SessionManager>) -> Router {
    Router::new()
        .route("/health", get(health))
        .route("/sessions", post(create_session))
        .route("/sessions/{id}", get(snapshot))
        .route("/sessions/{id}/messages", get(messages))
        .route("/sessions/{id}/utterances", post(post_utterance))
        .route("/sessions/{id}/ws", get(connect))
        .with_state(manager)
}

impl IntoResponse for ServiceError {
    fn into_response(self) -> Response {
        let status = match self {
            ServiceError::UnknownSession(_) => StatusCode::NOT_FOUND,
            ServiceError::SessionNotActive => StatusCode::CONFLICT,
            ServiceError::UtteranceRejected(_) => StatusCode::UNPROCESSABLE_ENTITY,
            ServiceError::CapacityExceeded(_) => StatusCode::SERVICE_UNAVAILABLE,
            ServiceError::BackendFailure(_) => StatusCode::BAD_GATEWAY,
            ServiceError::Internal(_) => StatusCode::INTERNAL_SERVER_ERROR,
        };
        (status, Json(json!({"error": {"code": self.code(), "message": self.to_string()}}))).into_response()
    }
}

async fn health(State(manager): State<Arc<SessionManager>>) -> Json<serde_json::Value> {
    Json(json!({"status": "ok", "active_sessions": manager.active_sessions()}))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CreatedSession {
    pub session_id: String,
    pub messages: Vec<WireMessage>,
}

async fn create_session(State(manager): State<Arc<SessionManager>>) -> Result<(StatusCode, Json<CreatedSession>), ServiceError> {
    let (session_id, messages) = manager.create_session().await?;
    Ok((StatusCode::CREATED, Json(CreatedSession { session_id, messages })))
}

async fn snapshot(State(manager): State<Arc<SessionManager>>, Path(id): Path<String>) -> Result<Json<WireMessage>, ServiceError> {
    Ok(Json(manager.channel(&id)?.subscribe().0))
}

async fn messages(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
) -> Result<Json<Vec<WireMessage>>, ServiceError> {
    Ok(Json(manager.channel(&id)?.log()))
}

#[derive(Debug, Serialize, Deserialize)]
pub struct UtteranceRequest {
    pub text: String,
}

async fn post_utterance(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    Json(request): Json<UtteranceRequest>,
) -> Result<StatusCode, ServiceError> {
    manager.post_utterance(&id, &request.text)?;
    Ok(StatusCode::ACCEPTED)
}

async fn connect(
    State(manager): State<Arc<SessionManager>>,
    Path(id): Path<String>,
    upgrade: WebSocketUpgrade,
) -> Result<Response, ServiceError> {
    manager.channel(&id)?;
    Ok(upgrade.on_upgrade(move |socket| serve_socket(manager, id, socket)))
}

fn frame(message: &WireMessage) -> Message {
    Message::Text(serde_json::to_string(message).expect("wire messages serialize").into())
}

async fn serve_socket(manager: Arc<SessionManager>, id: String, socket: WebSocket) {
    let Ok(channel) = manager.channel(&id) else { return };
    let (mut sink, mut stream) = socket.split();
    let (snapshot, mut events) = channel.subscribe();
    if sink.send(frame(&snapshot)).await.is_err() {
        return;
    }
    loop {
        tokio::select! {
            event = events.recv() => match event {
                Ok(message) => {
                    if sink.send(frame(&message)).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Lagged(skipped)) => {
                    tracing::warn!(session = %id, skipped, "viewer lagged, resending snapshot");
                    let (snapshot, fresh) = channel.subscribe();
                    events = fresh;
                    if sink.send(frame(&snapshot)).await.is_err() {
                        break;
                    }
                }
                Err(RecvError::Closed) => break,
            },
            incoming = stream.next() => match incoming {
                Some(Ok(Message::Text(text))) => {
                    let result = match serde_json::from_str::<ClientMessage>(&text) {
                        Ok(ClientMessage::CustomerUtterance { text }) => manager.post_utterance(&id, &text),
                        Err(e) => Err(ServiceError::Internal(format!("bad message: {e}"))),
                    };
                    if let Err(e) = result {
                        let code = if matches!(e, ServiceError::Internal(_)) { ErrorCode::BadMessage } else { e.code() };
                        channel.publish(WireBody::Error { code, message: e.to_string() });
                    }
                }
                Some(Ok(Message::Close(_))) | None | Some(Err(_)) => break,
                Some(Ok(_)) => {}
            },
        }
    }
    tracing::debug!(session = %id, "viewer disconnected");
}

//! HTTP side: `/ws` carries the line protocol, `/` serves the game page.

use std::sync::mpsc::Sender;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::http::header;
use axum::response::{Html, IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use futures::{SinkExt, StreamExt};
use repwatch_core::session::EventMsg;

use crate::engine::{unsequenced, EngineInput};
use crate::hub::Hub;

const INDEX_HTML: &str = include_str!("../static/index.html");
const APP_JS: &str = include_str!("../static/app.js");
const VIEW_JS: &str = include_str!("../static/view.js");

#[derive(Clone)]
pub struct AppState {
    pub hub: Arc<Hub>,
    /// `None` for replay sessions, which take no client input.
    pub input: Option<Sender<EngineInput>>,
}

pub fn router(state: AppState) -> Router {
    Router::new()
        .route("/", get(|| async { Html(INDEX_HTML) }))
        .route(
            "/app.js",
            get(|| async { ([(header::CONTENT_TYPE, "text/javascript")], APP_JS) }),
        )
        .route(
            "/view.js",
            get(|| async { ([(header::CONTENT_TYPE, "text/javascript")], VIEW_JS) }),
        )
        .route("/ws", get(ws_handler))
        .with_state(state)
}

async fn ws_handler(ws: WebSocketUpgrade, State(state): State<AppState>) -> Response {
    ws.on_upgrade(move |socket| client(socket, state)).into_response()
}

async fn client(socket: WebSocket, state: AppState) {
    let sub = state.hub.subscribe();
    let (mut tx, mut rx) = socket.split();
    let queue = sub.queue.clone();
    let writer = tokio::spawn(async move {
        while let Some(line) = queue.recv().await {
            if tx.send(Message::Text(line.to_string().into())).await.is_err() {
                break;
            }
        }
    });
    while let Some(Ok(msg)) = rx.next().await {
        let text = match msg {
            Message::Text(t) => t.to_string(),
            Message::Close(_) => break,
            _ => continue,
        };
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            match &state.input {
                Some(input) => {
                    let sent = input.send(EngineInput::Line {
                        client: sub.id,
                        text: line.to_string(),
                    });
                    if sent.is_err() {
                        state.hub.send_to(
                            sub.id,
                            unsequenced(EventMsg::Error {
                                message: "session engine has stopped".into(),
                            }),
                        );
                    }
                }
                None => state.hub.send_to(
                    sub.id,
                    unsequenced(EventMsg::Rejected {
                        reason: "replay sessions take no input".into(),
                        t: None,
                    }),
                ),
            }
        }
    }
    state.hub.unsubscribe(sub.id);
    let _ = writer.await;
}

//! Live sessions over WebSocket.
//!
//! Each connection owns at most one session. The server paces it against the
//! wall clock, streams a `frame` message per tick plus `event` messages for
//! that tick's outputs, and hands back the play log on request. Costume images
//! are served from `/assets/<sprite>/<costume_id>?project=<name>`.

pub mod catalog;
pub mod connection;
pub mod pacing;
pub mod protocol;

use std::collections::HashMap;
use std::future::Future;
use std::io;
use std::net::SocketAddr;
use std::sync::Arc;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::get;
use axum::Router;
use tokio::net::TcpListener;
use tokio::time::Instant;

pub use catalog::{Catalog, CatalogEntry, CatalogError};
pub use connection::Connection;
pub use pacing::TickPacer;
pub use protocol::{ClientMessage, ServerMessage, StreamTrace, PROTOCOL_VERSION};

/// The HTTP application: `/ws` for the protocol and `/assets/...` for images.
pub fn router(catalog: Arc<Catalog>) -> Router {
    Router::new()
        .route("/ws", get(ws_upgrade))
        .route("/assets/:sprite/:costume_id", get(asset))
        .with_state(catalog)
}

pub async fn bind(addr: SocketAddr) -> io::Result<TcpListener> {
    TcpListener::bind(addr).await
}

/// Serves until `shutdown` resolves.
pub async fn serve(
    listener: TcpListener,
    catalog: Arc<Catalog>,
    shutdown: impl Future<Output = ()> + Send + 'static,
) -> io::Result<()> {
    axum::serve(listener, router(catalog))
        .with_graceful_shutdown(shutdown)
        .await
}

async fn ws_upgrade(State(catalog): State<Arc<Catalog>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| drive(socket, catalog))
}

async fn drive(mut socket: WebSocket, catalog: Arc<Catalog>) {
    let origin = Instant::now();
    let mut conn = Connection::new(catalog);
    if send_all(&mut socket, [conn.hello()]).await.is_err() {
        return;
    }
    loop {
        let deadline = conn.next_deadline().map(|d| origin + d);
        let out = tokio::select! {
            incoming = socket.recv() => match incoming {
                Some(Ok(Message::Text(text))) => conn.handle_text(&text, origin.elapsed()),
                Some(Ok(Message::Binary(_))) => {
                    vec![ServerMessage::error("binary frames are not supported")]
                }
                Some(Ok(_)) => continue,
                Some(Err(e)) => {
                    tracing::debug!("websocket error: {e}");
                    return;
                }
                None => return,
            },
            _ = sleep_until(deadline) => conn.poll(origin.elapsed()),
        };
        if send_all(&mut socket, out).await.is_err() {
            return;
        }
    }
}

async fn sleep_until(deadline: Option<Instant>) {
    match deadline {
        Some(d) => tokio::time::sleep_until(d).await,
        None => std::future::pending().await,
    }
}

async fn send_all(
    socket: &mut WebSocket,
    msgs: impl IntoIterator<Item = ServerMessage>,
) -> Result<(), axum::Error> {
    for m in msgs {
        socket.send(Message::Text(m.to_text())).await?;
    }
    Ok(())
}

async fn asset(
    State(catalog): State<Arc<Catalog>>,
    Path((sprite, costume_id)): Path<(String, String)>,
    Query(query): Query<HashMap<String, String>>,
) -> Response {
    let entry = match query.get("project") {
        Some(name) => catalog.get(name),
        None if catalog.len() == 1 => catalog.get(&catalog.names()[0]),
        None => return (StatusCode::BAD_REQUEST, "missing ?project=").into_response(),
    };
    let Some(path) = entry.and_then(|e| e.costume_file(&sprite, &costume_id)) else {
        return StatusCode::NOT_FOUND.into_response();
    };
    match tokio::fs::read(&path).await {
        Ok(bytes) => {
            let mime = match path.extension().and_then(|e| e.to_str()) {
                Some(ext) if ext.eq_ignore_ascii_case("png") => "image/png",
                _ => "application/octet-stream",
            };
            ([(header::CONTENT_TYPE, mime)], bytes).into_response()
        }
        Err(e) => {
            tracing::warn!("cannot read {}: {e}", path.display());
            StatusCode::NOT_FOUND.into_response()
        }
    }
}

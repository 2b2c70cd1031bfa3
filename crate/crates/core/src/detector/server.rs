//! Status board shared between the ingestion loop and HTTP readers.

use std::io::BufRead;
use std::sync::{Arc, Mutex};

use axum::extract::State;
use axum::routing::get;
use axum::{Json, Router};
use serde_json::{json, Value};

use super::{Detector, DetectorError, StatusEvent};
use crate::dataset::parse_reading_record;

#[derive(Debug, Default, Clone)]
struct Snapshot {
    latest: Option<StatusEvent>,
    history: Arc<Vec<StatusEvent>>,
}

/// Latest event plus history. The ingestion loop is the only writer;
/// readers take a consistent copy under a short lock.
#[derive(Debug, Default)]
pub struct StatusBoard {
    inner: Mutex<Snapshot>,
}

impl StatusBoard {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn publish(&self, event: StatusEvent) {
        let mut snap = self.inner.lock().unwrap_or_else(|e| e.into_inner());
        Arc::make_mut(&mut snap.history).push(event.clone());
        snap.latest = Some(event);
    }

    pub fn latest(&self) -> Option<StatusEvent> {
        self.snapshot().latest
    }

    pub fn history(&self) -> Arc<Vec<StatusEvent>> {
        self.snapshot().history
    }

    fn snapshot(&self) -> Snapshot {
        self.inner.lock().unwrap_or_else(|e| e.into_inner()).clone()
    }

    /// Body of `GET /status`.
    pub fn status_json(&self) -> Value {
        match self.latest() {
            Some(ev) => serde_json::to_value(ev).expect("events always serialize"),
            None => json!({ "status": "unknown" }),
        }
    }
}

async fn status(State(board): State<Arc<StatusBoard>>) -> Json<Value> {
    Json(board.status_json())
}

async fn history(State(board): State<Arc<StatusBoard>>) -> Json<Vec<StatusEvent>> {
    Json(board.history().as_ref().clone())
}

pub fn router(board: Arc<StatusBoard>) -> Router {
    Router::new()
        .route("/status", get(status))
        .route("/history", get(history))
        .with_state(board)
}

pub async fn serve(
    listener: tokio::net::TcpListener,
    board: Arc<StatusBoard>,
) -> std::io::Result<()> {
    axum::serve(listener, router(board)).await
}

/// Feeds CSV reading lines (`timestamp,sensor_id,kind,value`) into the
/// detector and publishes every event. A header line and blank lines are
/// skipped; malformed or stale lines are logged and dropped. Returns the
/// number of lines rejected.
pub fn ingest_lines<R: BufRead>(
    reader: R,
    detector: &mut Detector,
    board: &StatusBoard,
) -> std::io::Result<usize> {
    let mut rejected = 0;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with("timestamp,") {
            continue;
        }
        let reading = match parse_reading_record(line.split(',')) {
            Ok(r) => r,
            Err(reason) => {
                log::warn!("line {}: {reason}", i + 1);
                rejected += 1;
                continue;
            }
        };
        match detector.step(&reading) {
            Ok(Some(ev)) => board.publish(ev),
            Ok(None) => {}
            Err(e @ (DetectorError::StaleReading { .. } | DetectorError::InvalidReading(_))) => {
                log::warn!("line {}: {e}", i + 1);
                rejected += 1;
            }
            Err(e) => {
                log::error!("line {}: {e}", i + 1);
                rejected += 1;
            }
        }
    }
    Ok(rejected)
}

//! Match manifest JSON: source fps, the audience ROI rectangle, and the
//! annotated event list.
//!
//! ```json
//! {
//!   "fps": 30.0,
//!   "roi": {"x": 0, "y": 0, "w": 400, "h": 250},
//!   "events": [{"time_s": 100.0, "type": "goal"}]
//! }
//! ```

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const EVENT_TYPES: [&str; 6] = ["goal", "foul", "shot", "save", "fight", "timeout"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Roi {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time_s: f64,
    #[serde(rename = "type")]
    pub kind: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventManifest {
    pub fps: f64,
    pub roi: Roi,
    pub events: Vec<Event>,
}

impl EventManifest {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut manifest: EventManifest = serde_json::from_str(&text)?;
        manifest.normalize()?;
        Ok(manifest)
    }

    /// Sort events by time and check basic sanity; event-type validation is
    /// separate so labeling can report it at its own boundary.
    pub fn normalize(&mut self) -> Result<()> {
        if !(self.fps > 0.0) {
            return Err(Error::Format(format!("manifest fps must be > 0, got {}", self.fps)));
        }
        if self.roi.w == 0 || self.roi.h == 0 {
            return Err(Error::Format("manifest roi has a zero extent".into()));
        }
        for e in &self.events {
            if !(e.time_s >= 0.0) {
                return Err(Error::Format(format!(
                    "event time must be non-negative, got {}",
                    e.time_s
                )));
            }
        }
        self.events
            .sort_by(|a, b| a.time_s.total_cmp(&b.time_s));
        Ok(())
    }

    pub fn validate_event_types(&self) -> Result<()> {
        for e in &self.events {
            if !EVENT_TYPES.contains(&e.kind.as_str()) {
                return Err(Error::Format(format!(
                    "unknown event type {:?} (known: {:?})",
                    e.kind, EVENT_TYPES
                )));
            }
        }
        Ok(())
    }

    /// Times of goal events only, in seconds.
    pub fn goal_times(&self) -> Vec<f64> {
        self.events
            .iter()
            .filter(|e| e.kind == "goal")
            .map(|e| e.time_s)
            .collect()
    }
}

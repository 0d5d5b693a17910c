//! Simulation events, serialized as newline-delimited JSON records
//! `{t, kind, bus, stop, payload}`.

use crate::types::{BusId, StopId};
use serde::Serialize;
use serde_json::json;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Dispatch,
    Arrival { boarded: u32, alighted: u32, holdup: u32, dwell_s: f64 },
    Decision { obs: [f64; 6], action: u8, holding_elapsed: u32 },
    Departure { holding_s: u32 },
    Retire { alighted: u32 },
}

impl EventKind {
    fn name(&self) -> &'static str {
        match self {
            EventKind::Dispatch => "dispatch",
            EventKind::Arrival { .. } => "arrival",
            EventKind::Decision { .. } => "decision",
            EventKind::Departure { .. } => "departure",
            EventKind::Retire { .. } => "retire",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: u32,
    pub bus: Option<BusId>,
    pub stop: Option<StopId>,
    pub kind: EventKind,
}

impl Event {
    /// One NDJSON line in the external log format.
    pub fn to_json_line(&self) -> String {
        let payload = match &self.kind {
            EventKind::Dispatch => json!({}),
            EventKind::Arrival { boarded, alighted, holdup, dwell_s } => json!({
                "boarded": boarded, "alighted": alighted, "holdup": holdup, "dwell_s": dwell_s,
            }),
            EventKind::Decision { obs, action, holding_elapsed } => json!({
                "obs": obs, "action": action, "holding_elapsed": holding_elapsed,
            }),
            EventKind::Departure { holding_s } => json!({ "holding_s": holding_s }),
            EventKind::Retire { alighted } => json!({ "alighted": alighted }),
        };
        serde_json::to_string(&json!({
            "t": self.t,
            "kind": self.kind.name(),
            "bus": self.bus.map(|b| b.0),
            "stop": self.stop.map(|s| s.0),
            "payload": payload,
        }))
        .expect("event serializes")
    }
}

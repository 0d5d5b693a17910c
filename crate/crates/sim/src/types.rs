//! Domain types: passengers, lines, stops, scenarios.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LineId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct StopId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct BusId(pub u32);

/// One rider's arrival/board/alight tuple. Board and alight times stay unset
/// until the simulation assigns them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PassengerRecord {
    pub origin_stop: StopId,
    /// Resolved at boarding for shared passengers; fixed at generation otherwise.
    pub line: Option<LineId>,
    pub shared: bool,
    pub arrive_time: f64,
    pub alight_stop: StopId,
    pub board_time: Option<f64>,
    pub alight_time: Option<f64>,
}

impl PassengerRecord {
    pub fn waiting_time(&self) -> Option<f64> {
        self.board_time.map(|b| b - self.arrive_time)
    }

    pub fn travel_time(&self) -> Option<f64> {
        self.alight_time.map(|a| a - self.arrive_time)
    }
}

/// Per-segment travel time model. Congestion and signals enter the simulation
/// only through these times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TravelTimeModel {
    Constant { speed_mps: f64 },
    Gamma { mean_s_per_segment: f64, shape: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineStop {
    pub stop_id: StopId,
    pub position_m: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineConfig {
    pub line_id: LineId,
    pub route_length_m: f64,
    pub circular: bool,
    pub departure_interval_s: u32,
    /// Number of buses to dispatch. `None` on linear lines means dispatching
    /// on the interval for the whole simulation.
    pub fleet_size: Option<u32>,
    pub stops: Vec<LineStop>,
    pub travel_time: TravelTimeModel,
}

impl LineConfig {
    /// Position of a stop along this line, if served.
    pub fn stop_position(&self, stop: StopId) -> Option<f64> {
        self.stops.iter().find(|s| s.stop_id == stop).map(|s| s.position_m)
    }

    pub fn stop_index(&self, stop: StopId) -> Option<usize> {
        self.stops.iter().position(|s| s.stop_id == stop)
    }

    /// Mean speed implied by the travel time model, used for normalization
    /// and the model-based controller.
    pub fn mean_speed_mps(&self) -> f64 {
        match &self.travel_time {
            TravelTimeModel::Constant { speed_mps } => *speed_mps,
            TravelTimeModel::Gamma { mean_s_per_segment, .. } => {
                let n_segs = self.segment_count().max(1) as f64;
                self.route_length_m / (n_segs * mean_s_per_segment)
            }
        }
    }

    /// Segments a bus traverses: origin -> stop_1 -> ... -> stop_N (-> wrap
    /// back to stop_1 on circular lines, -> route end on linear ones).
    pub fn segment_count(&self) -> usize {
        if self.circular {
            self.stops.len() + 1
        } else {
            self.stops.len() + 1
        }
    }

    /// Ideal (scheduled) space headway in meters.
    pub fn ideal_headway_m(&self) -> f64 {
        match self.fleet_size {
            Some(n) if self.circular && n > 0 => self.route_length_m / n as f64,
            _ => self.mean_speed_mps() * self.departure_interval_s as f64,
        }
    }
}

/// Flat or per-hour arrival rate for one (stop, line) pair, in pax/h.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum RateSpec {
    Flat(f64),
    PerHour(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandEntry {
    pub stop_id: StopId,
    pub line_id: LineId,
    pub rate_per_h: RateSpec,
}

/// Per-stop, per-line arrival-rate profile with hourly multipliers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DemandProfile {
    pub hourly_multipliers: Vec<f64>,
    pub entries: Vec<DemandEntry>,
}

impl DemandProfile {
    pub fn empty() -> Self {
        DemandProfile { hourly_multipliers: vec![1.0], entries: Vec::new() }
    }

    /// Effective rate (pax/h) for a (stop, line) pair during a given hour.
    pub fn rate_at(&self, stop: StopId, line: LineId, hour: usize) -> f64 {
        let mult = self.hourly_multipliers.get(hour).copied().unwrap_or(1.0);
        self.entries
            .iter()
            .filter(|e| e.stop_id == stop && e.line_id == line)
            .map(|e| match &e.rate_per_h {
                RateSpec::Flat(r) => r * mult,
                RateSpec::PerHour(v) => v.get(hour).copied().unwrap_or(0.0) * mult,
            })
            .sum()
    }
}

/// Seed data for a stop, derivable from the lines but serialized so scenario
/// files are self-describing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopSeed {
    pub stop_id: StopId,
    pub served_lines: Vec<LineId>,
    pub shared: bool,
}

/// Full description of a bus system, loadable from JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub lines: Vec<LineConfig>,
    #[serde(default)]
    pub stops: Vec<StopSeed>,
    /// `null` means capacity effects are disabled.
    pub capacity: Option<u32>,
    pub board_time_per_pax: f64,
    pub alight_time_per_pax: f64,
    pub sim_duration_s: u32,
    pub action_step_s: u32,
    pub max_hold_s: u32,
    pub demand: DemandProfile,
    #[serde(default)]
    pub shared_passenger_fraction: f64,
    pub seed: u64,
}

impl ScenarioConfig {
    pub fn line(&self, id: LineId) -> Option<&LineConfig> {
        self.lines.iter().find(|l| l.line_id == id)
    }

    /// Lines serving each stop, in line-id order.
    pub fn served_lines(&self) -> BTreeMap<StopId, Vec<LineId>> {
        let mut map: BTreeMap<StopId, Vec<LineId>> = BTreeMap::new();
        for line in &self.lines {
            for s in &line.stops {
                map.entry(s.stop_id).or_default().push(line.line_id);
            }
        }
        for lines in map.values_mut() {
            lines.sort();
            lines.dedup();
        }
        map
    }

    /// Rebuild the `stops` section from the lines.
    pub fn refresh_stops(&mut self) {
        self.stops = self
            .served_lines()
            .into_iter()
            .map(|(stop_id, served_lines)| StopSeed {
                stop_id,
                shared: served_lines.len() > 1,
                served_lines,
            })
            .collect();
    }

    /// Stops of `line` strictly downstream of `origin` in service order.
    /// Circular lines treat every other stop as downstream.
    pub fn downstream_stops(&self, line: &LineConfig, origin: StopId) -> Vec<StopId> {
        match line.stop_index(origin) {
            None => Vec::new(),
            Some(i) => {
                if line.circular {
                    let n = line.stops.len();
                    (1..n).map(|k| line.stops[(i + k) % n].stop_id).collect()
                } else {
                    line.stops[i + 1..].iter().map(|s| s.stop_id).collect()
                }
            }
        }
    }

    /// System-wide mean ideal headway, used to scale network inputs.
    pub fn mean_ideal_headway_m(&self) -> f64 {
        if self.lines.is_empty() {
            return 1.0;
        }
        self.lines.iter().map(|l| l.ideal_headway_m()).sum::<f64>() / self.lines.len() as f64
    }
}

/// The fixed six-slot state vector seen by every stop agent: forward/backward
/// space headway on the same line, nearest forward/backward headway across
/// other serving lines (0 off shared stops), onboard count, holding time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentObservation {
    pub h_fwd_same: f64,
    pub h_bwd_same: f64,
    pub h_fwd_other: f64,
    pub h_bwd_other: f64,
    pub n_onboard: f64,
    pub holding_elapsed: f64,
}

impl AgentObservation {
    pub fn to_array(&self) -> [f64; 6] {
        [
            self.h_fwd_same,
            self.h_bwd_same,
            self.h_fwd_other,
            self.h_bwd_other,
            self.n_onboard,
            self.holding_elapsed,
        ]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        AgentObservation {
            h_fwd_same: a[0],
            h_bwd_same: a[1],
            h_fwd_other: a[2],
            h_bwd_other: a[3],
            n_onboard: a[4],
            holding_elapsed: a[5],
        }
    }
}

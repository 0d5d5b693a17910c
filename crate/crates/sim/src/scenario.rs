//! Scenario validation and file I/O.

use crate::types::*;
use serde::Deserialize;
use std::path::Path;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("scenario has no lines")]
    NoLines,
    #[error("line {0:?}: departure interval must be > 0")]
    BadInterval(LineId),
    #[error("line {0:?}: stop positions must be strictly increasing and < route length")]
    BadStopPositions(LineId),
    #[error("line {0:?}: circular lines need an explicit fleet size")]
    MissingFleet(LineId),
    #[error("action step must be > 0")]
    BadActionStep,
    #[error("max hold ({max_hold}s) must be a positive multiple of the action step ({step}s)")]
    BadMaxHold { max_hold: u32, step: u32 },
    #[error("demand references unknown stop/line pair ({stop:?}, {line:?})")]
    UnknownDemandTarget { stop: StopId, line: LineId },
    #[error("negative arrival rate for ({stop:?}, {line:?})")]
    NegativeRate { stop: StopId, line: LineId },
    #[error("stop {0:?} on line {1:?} has no downstream stops but positive demand")]
    NoDownstream(StopId, LineId),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

/// Check every structural invariant the simulator relies on.
pub fn validate(scenario: &ScenarioConfig) -> Result<(), ScenarioError> {
    if scenario.lines.is_empty() {
        return Err(ScenarioError::NoLines);
    }
    if scenario.action_step_s == 0 {
        return Err(ScenarioError::BadActionStep);
    }
    if scenario.max_hold_s == 0 || scenario.max_hold_s % scenario.action_step_s != 0 {
        return Err(ScenarioError::BadMaxHold {
            max_hold: scenario.max_hold_s,
            step: scenario.action_step_s,
        });
    }
    for line in &scenario.lines {
        if line.departure_interval_s == 0 {
            return Err(ScenarioError::BadInterval(line.line_id));
        }
        if line.circular && line.fleet_size.is_none() {
            return Err(ScenarioError::MissingFleet(line.line_id));
        }
        let mut prev = f64::NEG_INFINITY;
        for s in &line.stops {
            if s.position_m <= prev || s.position_m >= line.route_length_m {
                return Err(ScenarioError::BadStopPositions(line.line_id));
            }
            prev = s.position_m;
        }
        if line.stops.is_empty() {
            return Err(ScenarioError::BadStopPositions(line.line_id));
        }
    }
    let hours = scenario.demand.hourly_multipliers.len().max(1);
    for e in &scenario.demand.entries {
        let line = scenario
            .line(e.line_id)
            .ok_or(ScenarioError::UnknownDemandTarget { stop: e.stop_id, line: e.line_id })?;
        if line.stop_index(e.stop_id).is_none() {
            return Err(ScenarioError::UnknownDemandTarget { stop: e.stop_id, line: e.line_id });
        }
        let mut positive = false;
        for h in 0..hours {
            let r = scenario.demand.rate_at(e.stop_id, e.line_id, h);
            if r < 0.0 {
                return Err(ScenarioError::NegativeRate { stop: e.stop_id, line: e.line_id });
            }
            positive |= r > 0.0;
        }
        if positive && scenario.downstream_stops(line, e.stop_id).is_empty() {
            return Err(ScenarioError::NoDownstream(e.stop_id, e.line_id));
        }
    }
    Ok(())
}

pub fn load_json(path: &Path) -> Result<ScenarioConfig, ScenarioError> {
    let text = std::fs::read_to_string(path)?;
    let mut scenario: ScenarioConfig = serde_json::from_str(&text)?;
    scenario.refresh_stops();
    validate(&scenario)?;
    Ok(scenario)
}

pub fn save_json(scenario: &ScenarioConfig, path: &Path) -> Result<(), ScenarioError> {
    let mut copy = scenario.clone();
    copy.refresh_stops();
    std::fs::write(path, serde_json::to_string_pretty(&copy)?)?;
    Ok(())
}

#[derive(Deserialize)]
struct DemandCsvRow {
    stop: u32,
    line: u32,
    hour: usize,
    rate: f64,
}

/// Parse a demand CSV of (stop, line, hour, rate) rows into a profile with
/// explicit per-hour rates and unit multipliers.
pub fn demand_from_csv_reader<R: std::io::Read>(
    reader: R,
    hours: usize,
) -> Result<DemandProfile, ScenarioError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut table: std::collections::BTreeMap<(StopId, LineId), Vec<f64>> =
        std::collections::BTreeMap::new();
    for row in rdr.deserialize::<DemandCsvRow>() {
        let row = row?;
        let slot = table.entry((StopId(row.stop), LineId(row.line))).or_insert_with(|| vec![0.0; hours]);
        if row.hour < hours {
            slot[row.hour] = row.rate;
        }
    }
    Ok(DemandProfile {
        hourly_multipliers: vec![1.0; hours],
        entries: table
            .into_iter()
            .map(|((stop_id, line_id), rates)| DemandEntry {
                stop_id,
                line_id,
                rate_per_h: RateSpec::PerHour(rates),
            })
            .collect(),
    })
}

pub fn demand_from_csv(path: &Path, hours: usize) -> Result<DemandProfile, ScenarioError> {
    demand_from_csv_reader(std::fs::File::open(path)?, hours)
}

/// Render a demand profile as the CSV interchange format.
pub fn builtin_demand_csv(profile: &DemandProfile, hours: usize) -> String {
    let mut out = String::from("stop,line,hour,rate\n");
    for e in &profile.entries {
        for h in 0..hours {
            let rate = profile.rate_at(e.stop_id, e.line_id, h);
            out.push_str(&format!("{},{},{},{}\n", e.stop_id.0, e.line_id.0, h, rate));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_line() -> LineConfig {
        LineConfig {
            line_id: LineId(0),
            route_length_m: 1000.0,
            circular: false,
            departure_interval_s: 100,
            fleet_size: None,
            stops: vec![
                LineStop { stop_id: StopId(0), position_m: 200.0 },
                LineStop { stop_id: StopId(1), position_m: 800.0 },
            ],
            travel_time: TravelTimeModel::Constant { speed_mps: 10.0 },
        }
    }

    fn tiny_scenario() -> ScenarioConfig {
        let mut s = ScenarioConfig {
            lines: vec![tiny_line()],
            stops: vec![],
            capacity: Some(50),
            board_time_per_pax: 3.0,
            alight_time_per_pax: 1.8,
            sim_duration_s: 600,
            action_step_s: 5,
            max_hold_s: 90,
            demand: DemandProfile {
                hourly_multipliers: vec![1.0],
                entries: vec![DemandEntry {
                    stop_id: StopId(0),
                    line_id: LineId(0),
                    rate_per_h: RateSpec::Flat(60.0),
                }],
            },
            shared_passenger_fraction: 0.0,
            seed: 1,
        };
        s.refresh_stops();
        s
    }

    #[test]
    fn valid_scenario_passes() {
        validate(&tiny_scenario()).unwrap();
    }

    #[test]
    fn max_hold_must_be_multiple_of_action_step() {
        let mut s = tiny_scenario();
        s.max_hold_s = 92;
        assert!(matches!(validate(&s), Err(ScenarioError::BadMaxHold { .. })));
    }

    #[test]
    fn demand_at_terminal_stop_is_rejected() {
        let mut s = tiny_scenario();
        s.demand.entries.push(DemandEntry {
            stop_id: StopId(1),
            line_id: LineId(0),
            rate_per_h: RateSpec::Flat(5.0),
        });
        assert!(matches!(validate(&s), Err(ScenarioError::NoDownstream(..))));
    }

    #[test]
    fn stop_positions_must_increase() {
        let mut s = tiny_scenario();
        s.lines[0].stops[1].position_m = 100.0;
        assert!(matches!(validate(&s), Err(ScenarioError::BadStopPositions(_))));
    }

    #[test]
    fn json_round_trip() {
        let s = tiny_scenario();
        let text = serde_json::to_string(&s).unwrap();
        let back: ScenarioConfig = serde_json::from_str(&text).unwrap();
        assert_eq!(s, back);
    }

    #[test]
    fn demand_csv_round_trip() {
        let s = tiny_scenario();
        let csv_text = builtin_demand_csv(&s.demand, 1);
        let profile = demand_from_csv_reader(csv_text.as_bytes(), 1).unwrap();
        assert_eq!(profile.rate_at(StopId(0), LineId(0), 0), 60.0);
    }
}

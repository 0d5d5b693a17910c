//! Space-headway computation on the standardized shared axis.
//!
//! For the dwelling bus's own line, headways are plain distances to the
//! nearest forward/backward bus in service (modular on circular lines). For
//! another line serving the same stop, both axes are anchored at that stop so
//! positions become comparable; lines the stop does not serve report (0, 0).

use crate::types::*;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HeadwayPair {
    pub forward: f64,
    pub backward: f64,
}

/// Minimal view of a bus for headway queries.
#[derive(Debug, Clone, Copy)]
pub struct BusView {
    pub bus: BusId,
    pub line: LineId,
    /// Cumulative distance along the route (not wrapped).
    pub position_m: f64,
    pub in_service: bool,
}

fn wrapped(x: f64, len: f64) -> f64 {
    let w = x % len;
    if w < 0.0 {
        w + len
    } else {
        w
    }
}

/// Signed offset in (-len/2, len/2] of `x` from `anchor` on a circular axis.
fn signed_offset(x: f64, anchor: f64, len: f64) -> f64 {
    let d = wrapped(x - anchor, len);
    if d > len / 2.0 {
        d - len
    } else {
        d
    }
}

/// Headway pair for every line of the system, for `subject` anchored at
/// `anchor_stop`. Lines the stop does not serve get (0, 0); a line with no
/// other bus in service falls back to the clamped distance to the line
/// origin/terminus so the state stays total and bounded.
pub fn compute_headways(
    scenario: &ScenarioConfig,
    subject: &BusView,
    fleet: &[BusView],
    anchor_stop: StopId,
) -> BTreeMap<LineId, HeadwayPair> {
    let mut out = BTreeMap::new();
    let served = scenario.served_lines();
    let serving: &[LineId] = served.get(&anchor_stop).map(|v| v.as_slice()).unwrap_or(&[]);
    let own_line = scenario.line(subject.line).expect("subject line exists");

    for line in &scenario.lines {
        let m = line.line_id;
        if !serving.contains(&m) {
            out.insert(m, HeadwayPair { forward: 0.0, backward: 0.0 });
            continue;
        }
        let pair = if m == subject.line {
            same_line_pair(own_line, subject, fleet)
        } else {
            other_line_pair(own_line, line, subject, fleet, anchor_stop)
        };
        out.insert(m, pair);
    }
    out
}

fn same_line_pair(line: &LineConfig, subject: &BusView, fleet: &[BusView]) -> HeadwayPair {
    let len = line.route_length_m;
    let x = if line.circular { wrapped(subject.position_m, len) } else { subject.position_m };
    let mut fwd: Option<f64> = None;
    let mut bwd: Option<f64> = None;
    for b in fleet {
        if b.bus == subject.bus || b.line != subject.line || !b.in_service {
            continue;
        }
        if line.circular {
            let y = wrapped(b.position_m, len);
            let df = wrapped(y - x, len);
            let db = wrapped(x - y, len);
            fwd = Some(fwd.map_or(df, |v: f64| v.min(df)));
            bwd = Some(bwd.map_or(db, |v: f64| v.min(db)));
        } else {
            let d = b.position_m - x;
            if d >= 0.0 {
                fwd = Some(fwd.map_or(d, |v: f64| v.min(d)));
            }
            if d <= 0.0 {
                bwd = Some(bwd.map_or(-d, |v: f64| v.min(-d)));
            }
        }
    }
    HeadwayPair {
        forward: fwd.unwrap_or((len - x).clamp(0.0, len)),
        backward: bwd.unwrap_or(x.clamp(0.0, len)),
    }
}

fn other_line_pair(
    own_line: &LineConfig,
    line: &LineConfig,
    subject: &BusView,
    fleet: &[BusView],
    anchor_stop: StopId,
) -> HeadwayPair {
    let (Some(p0), Some(pm)) = (own_line.stop_position(anchor_stop), line.stop_position(anchor_stop))
    else {
        return HeadwayPair { forward: 0.0, backward: 0.0 };
    };
    let len_m = line.route_length_m;
    // Offset of the subject from the anchor stop along its own line. Zero
    // while dwelling; small and positive once it departs.
    let delta0 = if own_line.circular {
        signed_offset(wrapped(subject.position_m, own_line.route_length_m), p0, own_line.route_length_m)
    } else {
        subject.position_m - p0
    };
    let mut fwd: Option<f64> = None;
    let mut bwd: Option<f64> = None;
    for b in fleet {
        if b.line != line.line_id || !b.in_service {
            continue;
        }
        let delta = if line.circular {
            signed_offset(wrapped(b.position_m, len_m), pm, len_m)
        } else {
            b.position_m - pm
        };
        let rel = delta - delta0;
        if rel >= 0.0 {
            fwd = Some(fwd.map_or(rel, |v: f64| v.min(rel)));
        }
        if rel <= 0.0 {
            bwd = Some(bwd.map_or(-rel, |v: f64| v.min(-rel)));
        }
    }
    HeadwayPair {
        forward: fwd.unwrap_or(((len_m - pm) - delta0).clamp(0.0, len_m)),
        backward: bwd.unwrap_or((pm + delta0).clamp(0.0, len_m)),
    }
}

/// Collapse per-line pairs into the fixed six-slot observation: the subject
/// line's pair plus the nearest forward/backward bus across all other
/// serving lines.
pub fn observation_from_headways(
    headways: &BTreeMap<LineId, HeadwayPair>,
    subject_line: LineId,
    serving: &[LineId],
    n_onboard: usize,
    holding_elapsed: u32,
) -> AgentObservation {
    let same = headways
        .get(&subject_line)
        .copied()
        .unwrap_or(HeadwayPair { forward: 0.0, backward: 0.0 });
    let mut fwd_other: Option<f64> = None;
    let mut bwd_other: Option<f64> = None;
    for m in serving {
        if *m == subject_line {
            continue;
        }
        if let Some(p) = headways.get(m) {
            fwd_other = Some(fwd_other.map_or(p.forward, |v: f64| v.min(p.forward)));
            bwd_other = Some(bwd_other.map_or(p.backward, |v: f64| v.min(p.backward)));
        }
    }
    AgentObservation {
        h_fwd_same: same.forward,
        h_bwd_same: same.backward,
        h_fwd_other: fwd_other.unwrap_or(0.0),
        h_bwd_other: bwd_other.unwrap_or(0.0),
        n_onboard: n_onboard as f64,
        holding_elapsed: holding_elapsed as f64,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn linear_scenario() -> ScenarioConfig {
        let mut s = ScenarioConfig {
            lines: vec![LineConfig {
                line_id: LineId(0),
                route_length_m: 20000.0,
                circular: false,
                departure_interval_s: 300,
                fleet_size: None,
                stops: vec![
                    LineStop { stop_id: StopId(0), position_m: 5000.0 },
                    LineStop { stop_id: StopId(1), position_m: 15000.0 },
                ],
                travel_time: TravelTimeModel::Constant { speed_mps: 10.0 },
            }],
            stops: vec![],
            capacity: None,
            board_time_per_pax: 3.0,
            alight_time_per_pax: 1.8,
            sim_duration_s: 100,
            action_step_s: 5,
            max_hold_s: 90,
            demand: DemandProfile::empty(),
            shared_passenger_fraction: 0.0,
            seed: 0,
        };
        s.refresh_stops();
        s
    }

    fn bus(id: u32, line: u32, pos: f64) -> BusView {
        BusView { bus: BusId(id), line: LineId(line), position_m: pos, in_service: true }
    }

    #[test]
    fn forward_distance_on_linear_line() {
        let s = linear_scenario();
        let subject = bus(0, 0, 5000.0);
        let fleet = vec![subject, bus(1, 0, 6500.0), bus(2, 0, 9000.0), bus(3, 0, 2000.0)];
        let h = compute_headways(&s, &subject, &fleet, StopId(0));
        let pair = h[&LineId(0)];
        assert_eq!(pair.forward, 1500.0);
        assert_eq!(pair.backward, 3000.0);
    }

    #[test]
    fn non_served_line_reports_zero_pair() {
        let mut s = linear_scenario();
        s.lines.push(LineConfig {
            line_id: LineId(1),
            route_length_m: 9000.0,
            circular: false,
            departure_interval_s: 300,
            fleet_size: None,
            stops: vec![LineStop { stop_id: StopId(9), position_m: 100.0 }],
            travel_time: TravelTimeModel::Constant { speed_mps: 10.0 },
        });
        s.refresh_stops();
        let subject = bus(0, 0, 5000.0);
        let fleet = vec![subject, bus(1, 1, 50.0)];
        let h = compute_headways(&s, &subject, &fleet, StopId(0));
        assert_eq!(h[&LineId(1)], HeadwayPair { forward: 0.0, backward: 0.0 });
    }

    #[test]
    fn circular_forward_wraps_modulo_route_length() {
        let mut s = linear_scenario();
        s.lines[0].circular = true;
        s.lines[0].fleet_size = Some(2);
        s.lines[0].route_length_m = 10656.0;
        s.lines[0].stops = vec![
            LineStop { stop_id: StopId(0), position_m: 9990.0 },
            LineStop { stop_id: StopId(1), position_m: 666.0 },
        ];
        // keep positions strictly increasing for validation-free construction
        s.lines[0].stops.sort_by(|a, b| a.position_m.partial_cmp(&b.position_m).unwrap());
        s.refresh_stops();
        let subject = bus(0, 0, 9990.0);
        let fleet = vec![subject, bus(1, 0, 666.0)];
        let h = compute_headways(&s, &subject, &fleet, StopId(0));
        let pair = h[&LineId(0)];
        assert_eq!(pair.forward, 1332.0);
        assert_eq!(pair.backward, 10656.0 - 1332.0);
    }

    #[test]
    fn missing_neighbor_falls_back_to_clamped_boundary_distance() {
        let s = linear_scenario();
        let subject = bus(0, 0, 5000.0);
        let fleet = vec![subject];
        let h = compute_headways(&s, &subject, &fleet, StopId(0));
        let pair = h[&LineId(0)];
        assert_eq!(pair.forward, 15000.0);
        assert_eq!(pair.backward, 5000.0);
    }

    #[test]
    fn shared_stop_aligns_other_line_axis() {
        // Two linear lines sharing stop 1 at different own-axis positions.
        let mut s = linear_scenario();
        s.lines[0].stops = vec![
            LineStop { stop_id: StopId(0), position_m: 5000.0 },
            LineStop { stop_id: StopId(1), position_m: 10000.0 },
        ];
        s.lines.push(LineConfig {
            line_id: LineId(1),
            route_length_m: 8000.0,
            circular: false,
            departure_interval_s: 300,
            fleet_size: None,
            stops: vec![
                LineStop { stop_id: StopId(1), position_m: 4000.0 },
                LineStop { stop_id: StopId(2), position_m: 7000.0 },
            ],
            travel_time: TravelTimeModel::Constant { speed_mps: 10.0 },
        });
        s.refresh_stops();
        // Subject dwells at the shared stop; other-line bus is 600 m past it
        // on its own axis.
        let subject = bus(0, 0, 10000.0);
        let fleet = vec![subject, bus(1, 1, 4600.0), bus(2, 1, 3900.0)];
        let h = compute_headways(&s, &subject, &fleet, StopId(1));
        let pair = h[&LineId(1)];
        assert_eq!(pair.forward, 600.0);
        assert_eq!(pair.backward, 100.0);
        let obs = observation_from_headways(&h, LineId(0), &[LineId(0), LineId(1)], 12, 15);
        assert_eq!(obs.h_fwd_other, 600.0);
        assert_eq!(obs.h_bwd_other, 100.0);
        assert_eq!(obs.n_onboard, 12.0);
        assert_eq!(obs.holding_elapsed, 15.0);
    }

    #[test]
    fn headways_are_never_negative() {
        let s = linear_scenario();
        for pos in [0.0, 3000.0, 5000.0, 19999.0] {
            let subject = bus(0, 0, pos);
            let fleet = vec![subject, bus(1, 0, 12000.0)];
            for pair in compute_headways(&s, &subject, &fleet, StopId(0)).values() {
                assert!(pair.forward >= 0.0 && pair.backward >= 0.0);
            }
        }
    }
}

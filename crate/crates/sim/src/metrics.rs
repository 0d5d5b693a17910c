//! Post-run evaluation indicators.
//!
//! Time headways are the gaps between successive same-line bus arrivals at a
//! stop, pooled over the line's stops. Passenger times come straight from the
//! passenger ledger; passengers who never alighted count toward the
//! incomplete-trip fraction and are excluded from the time averages.

use crate::engine::Env;
use crate::types::{LineId, StopId};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LineMetrics {
    pub line: LineId,
    pub sd_time_headways: f64,
    pub avg_travel_time: f64,
    pub avg_waiting_time: f64,
    pub avg_holding_time: f64,
    pub headway_samples: usize,
    pub passengers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SharedMetrics {
    pub sd_time_headways: f64,
    pub avg_travel_time: f64,
    pub avg_waiting_time: f64,
    pub shared_passengers: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StopBreakdown {
    pub stop: StopId,
    pub line: LineId,
    pub mean_time_headway: f64,
    pub sd_time_headways: f64,
    pub avg_waiting_time: f64,
    pub avg_holding_time: f64,
    pub headway_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OverallMetrics {
    pub avg_travel_time: f64,
    pub avg_waiting_time: f64,
    pub avg_holding_time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub per_line: Vec<LineMetrics>,
    pub overall: OverallMetrics,
    pub shared: Option<SharedMetrics>,
    pub incomplete_trip_fraction: f64,
    pub per_stop: Vec<StopBreakdown>,
}

fn mean(xs: impl Iterator<Item = f64>) -> (f64, usize) {
    let mut sum = 0.0;
    let mut n = 0usize;
    for x in xs {
        sum += x;
        n += 1;
    }
    (if n == 0 { 0.0 } else { sum / n as f64 }, n)
}

/// Population standard deviation; 0 for fewer than two samples.
fn population_sd(xs: &[f64]) -> f64 {
    if xs.len() < 2 {
        return 0.0;
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    (xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / xs.len() as f64).sqrt()
}

fn gaps(arrivals: &[u32]) -> impl Iterator<Item = f64> + '_ {
    arrivals.windows(2).map(|w| (w[1] - w[0]) as f64)
}

impl MetricsReport {
    pub fn compute(env: &Env) -> MetricsReport {
        let scenario = &env.scenario;
        let passengers = env.passengers();
        let mut per_line = Vec::new();
        let mut per_stop = Vec::new();

        for line in &scenario.lines {
            let mut pooled: Vec<f64> = Vec::new();
            for stop in &line.stops {
                let arrivals = env
                    .stop_arrivals(stop.stop_id)
                    .and_then(|m| m.get(&line.line_id))
                    .map(|v| v.as_slice())
                    .unwrap_or(&[]);
                let stop_gaps: Vec<f64> = gaps(arrivals).collect();
                pooled.extend(&stop_gaps);
                let (mean_gap, _) = mean(stop_gaps.iter().copied());
                let (wt, _) = mean(passengers.iter().filter_map(|p| {
                    (p.origin_stop == stop.stop_id && p.line == Some(line.line_id))
                        .then(|| p.waiting_time())
                        .flatten()
                }));
                let (ht, _) = mean(
                    env.dwell_log()
                        .iter()
                        .filter(|d| d.stop == stop.stop_id && d.line == line.line_id)
                        .map(|d| d.holding_s as f64),
                );
                per_stop.push(StopBreakdown {
                    stop: stop.stop_id,
                    line: line.line_id,
                    mean_time_headway: mean_gap,
                    sd_time_headways: population_sd(&stop_gaps),
                    avg_waiting_time: wt,
                    avg_holding_time: ht,
                    headway_samples: stop_gaps.len(),
                });
            }
            let (tt, n_pax) = mean(
                passengers
                    .iter()
                    .filter(|p| p.line == Some(line.line_id))
                    .filter_map(|p| p.travel_time()),
            );
            let (wt, _) = mean(
                passengers
                    .iter()
                    .filter(|p| p.line == Some(line.line_id))
                    .filter_map(|p| p.waiting_time()),
            );
            let (ht, _) = mean(
                env.dwell_log()
                    .iter()
                    .filter(|d| d.line == line.line_id)
                    .map(|d| d.holding_s as f64),
            );
            per_line.push(LineMetrics {
                line: line.line_id,
                sd_time_headways: population_sd(&pooled),
                avg_travel_time: tt,
                avg_waiting_time: wt,
                avg_holding_time: ht,
                headway_samples: pooled.len(),
                passengers: n_pax,
            });
        }

        let (tt_all, _) = mean(passengers.iter().filter_map(|p| p.travel_time()));
        let (wt_all, _) = mean(passengers.iter().filter_map(|p| p.waiting_time()));
        let (ht_all, _) = mean(env.dwell_log().iter().map(|d| d.holding_s as f64));
        let incomplete = if passengers.is_empty() {
            0.0
        } else {
            passengers.iter().filter(|p| p.alight_time.is_none()).count() as f64
                / passengers.len() as f64
        };

        let shared_stops: Vec<StopId> = scenario
            .served_lines()
            .into_iter()
            .filter(|(_, lines)| lines.len() > 1)
            .map(|(s, _)| s)
            .collect();
        let shared = if shared_stops.is_empty() {
            None
        } else {
            // Headways at shared stops pool the arrivals of every serving
            // line: the perceived service of the shared corridor.
            let mut pooled = Vec::new();
            for stop in &shared_stops {
                if let Some(per_line_arrivals) = env.stop_arrivals(*stop) {
                    let mut all: Vec<u32> =
                        per_line_arrivals.values().flatten().copied().collect();
                    all.sort_unstable();
                    pooled.extend(gaps(&all));
                }
            }
            let (tt, n) = mean(passengers.iter().filter(|p| p.shared).filter_map(|p| p.travel_time()));
            let (wt, _) = mean(passengers.iter().filter(|p| p.shared).filter_map(|p| p.waiting_time()));
            Some(SharedMetrics {
                sd_time_headways: population_sd(&pooled),
                avg_travel_time: tt,
                avg_waiting_time: wt,
                shared_passengers: n,
            })
        };

        MetricsReport {
            per_line,
            overall: OverallMetrics {
                avg_travel_time: tt_all,
                avg_waiting_time: wt_all,
                avg_holding_time: ht_all,
            },
            shared,
            incomplete_trip_fraction: incomplete,
            per_stop,
        }
    }

    pub fn line(&self, id: LineId) -> Option<&LineMetrics> {
        self.per_line.iter().find(|l| l.line == id)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::engine::NoHolding;
    use crate::types::*;

    fn two_stop_scenario() -> ScenarioConfig {
        let mut s = ScenarioConfig {
            lines: vec![LineConfig {
                line_id: LineId(0),
                route_length_m: 4000.0,
                circular: false,
                departure_interval_s: 320,
                fleet_size: Some(2),
                stops: vec![
                    LineStop { stop_id: StopId(0), position_m: 1000.0 },
                    LineStop { stop_id: StopId(1), position_m: 3000.0 },
                ],
                travel_time: TravelTimeModel::Constant { speed_mps: 10.0 },
            }],
            stops: vec![],
            capacity: None,
            board_time_per_pax: 3.0,
            alight_time_per_pax: 1.8,
            sim_duration_s: 1200,
            action_step_s: 5,
            max_hold_s: 90,
            demand: DemandProfile::empty(),
            shared_passenger_fraction: 0.0,
            seed: 0,
        };
        s.refresh_stops();
        s
    }

    #[test]
    fn single_passenger_times() {
        // arrive 100, board 160, alight 700 -> wait 60, travel 600
        let s = two_stop_scenario();
        let pax = vec![PassengerRecord {
            origin_stop: StopId(0),
            line: Some(LineId(0)),
            shared: false,
            arrive_time: 100.0,
            alight_stop: StopId(1),
            board_time: Some(160.0),
            alight_time: Some(700.0),
        }];
        let env = Env::with_passengers(&s, 0, pax);
        let m = env.metrics();
        assert_eq!(m.overall.avg_waiting_time, 60.0);
        assert_eq!(m.overall.avg_travel_time, 600.0);
        assert_eq!(m.incomplete_trip_fraction, 0.0);
    }

    #[test]
    fn empty_run_reports_zero_averages() {
        let s = two_stop_scenario();
        let mut env = Env::new(&s, 0);
        let mut ctrl = NoHolding;
        env.run(&mut ctrl, |_| {});
        let m = env.metrics();
        assert_eq!(m.overall.avg_travel_time, 0.0);
        assert_eq!(m.overall.avg_waiting_time, 0.0);
        assert_eq!(m.per_line[0].passengers, 0);
        assert_eq!(m.incomplete_trip_fraction, 0.0);
    }

    #[test]
    fn one_headway_sample_from_two_arrivals() {
        // Two buses dispatched 320 s apart at constant speed arrive 320 s
        // apart at each stop.
        let s = two_stop_scenario();
        let mut env = Env::new(&s, 0);
        let mut ctrl = NoHolding;
        env.run(&mut ctrl, |_| {});
        let m = env.metrics();
        let line = m.line(LineId(0)).unwrap();
        assert_eq!(line.headway_samples, 2);
        assert_eq!(line.sd_time_headways, 0.0);
        let first = &m.per_stop[0];
        assert_eq!(first.mean_time_headway, 320.0);
    }

    #[test]
    fn incomplete_trips_are_counted_not_averaged() {
        let s = two_stop_scenario();
        let pax = vec![
            PassengerRecord {
                origin_stop: StopId(0),
                line: Some(LineId(0)),
                shared: false,
                arrive_time: 100.0,
                alight_stop: StopId(1),
                board_time: Some(150.0),
                alight_time: Some(400.0),
            },
            PassengerRecord {
                origin_stop: StopId(0),
                line: Some(LineId(0)),
                shared: false,
                arrive_time: 5000.0,
                alight_stop: StopId(1),
                board_time: None,
                alight_time: None,
            },
        ];
        let env = Env::with_passengers(&s, 0, pax);
        let m = env.metrics();
        assert_eq!(m.incomplete_trip_fraction, 0.5);
        assert_eq!(m.overall.avg_travel_time, 300.0);
    }
}

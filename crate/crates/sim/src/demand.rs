//! Passenger generation: piecewise-homogeneous Poisson arrivals per
//! (stop, line) stream, reproducible from the seed.

use crate::derive_seed;
use crate::types::*;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

/// Generate every passenger of a run, sorted by arrival time.
///
/// Each (stop, line) pair gets an independent RNG stream derived from the
/// seed, so the realization does not depend on iteration order. Alighting
/// stops are drawn uniformly from the downstream stops; shared passengers
/// (origin and destination both shared stops) are produced with probability
/// `shared_passenger_fraction` at shared origins and board the first feasible
/// bus of either serving line.
pub fn generate_passengers(scenario: &ScenarioConfig, seed: u64) -> Vec<PassengerRecord> {
    generate_window(scenario, seed, 0.0, scenario.sim_duration_s as f64)
}

/// Generate only passengers arriving in `(from_s, to_s]`. Used by rollout
/// resampling; `generate_passengers` is the full-run special case.
pub fn generate_window(
    scenario: &ScenarioConfig,
    seed: u64,
    from_s: f64,
    to_s: f64,
) -> Vec<PassengerRecord> {
    let served = scenario.served_lines();
    let mut out = Vec::new();
    for line in &scenario.lines {
        for stop in &line.stops {
            let lane = (stop.stop_id.0 as u64) << 32 | line.line_id.0 as u64;
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "demand", lane));
            let downstream = scenario.downstream_stops(line, stop.stop_id);
            let shared_downstream: Vec<StopId> = downstream
                .iter()
                .copied()
                .filter(|d| is_shared_pair(scenario, &served, stop.stop_id, *d))
                .collect();
            let origin_shared = served.get(&stop.stop_id).map_or(false, |l| l.len() > 1);
            let hours = scenario.demand.hourly_multipliers.len().max(1);
            for hour in 0..hours {
                let rate = scenario.demand.rate_at(stop.stop_id, line.line_id, hour);
                let window_start = hour as f64 * 3600.0;
                let window_end = ((hour + 1) as f64 * 3600.0).min(scenario.sim_duration_s as f64);
                if window_end <= window_start {
                    break;
                }
                let expect = rate * (window_end - window_start) / 3600.0;
                // The zero draw must still consume RNG state identically
                // across windows, so sample even tiny rates.
                let n = if expect > 0.0 {
                    Poisson::new(expect).map(|d| d.sample(&mut rng) as u64).unwrap_or(0)
                } else {
                    0
                };
                for _ in 0..n {
                    let arrive = rng.gen_range(window_start..window_end);
                    let make_shared = origin_shared
                        && !shared_downstream.is_empty()
                        && rng.gen::<f64>() < scenario.shared_passenger_fraction;
                    let (alight, line_field, shared) = if make_shared {
                        let d = shared_downstream[rng.gen_range(0..shared_downstream.len())];
                        (d, None, true)
                    } else {
                        assert!(
                            !downstream.is_empty(),
                            "demand at stop {:?} with no downstream stops on line {:?}",
                            stop.stop_id,
                            line.line_id
                        );
                        let d = downstream[rng.gen_range(0..downstream.len())];
                        (d, Some(line.line_id), false)
                    };
                    if arrive > from_s && arrive <= to_s {
                        out.push(PassengerRecord {
                            origin_stop: stop.stop_id,
                            line: line_field,
                            shared,
                            arrive_time: arrive,
                            alight_stop: alight,
                            board_time: None,
                            alight_time: None,
                        });
                    }
                }
            }
        }
    }
    out.sort_by(|a, b| {
        a.arrive_time
            .partial_cmp(&b.arrive_time)
            .unwrap()
            .then(a.origin_stop.cmp(&b.origin_stop))
            .then(a.line.cmp(&b.line))
            .then(a.alight_stop.cmp(&b.alight_stop))
    });
    out
}

/// A passenger can ride either line between `origin` and `dest` only when
/// both stops are shared and `dest` is downstream of `origin` on every line
/// serving both.
fn is_shared_pair(
    scenario: &ScenarioConfig,
    served: &std::collections::BTreeMap<StopId, Vec<LineId>>,
    origin: StopId,
    dest: StopId,
) -> bool {
    let (Some(ol), Some(dl)) = (served.get(&origin), served.get(&dest)) else {
        return false;
    };
    if ol.len() < 2 || dl.len() < 2 {
        return false;
    }
    let common: Vec<LineId> = ol.iter().copied().filter(|l| dl.contains(l)).collect();
    if common.len() < 2 {
        return false;
    }
    common.iter().all(|lid| {
        let line = scenario.line(*lid).expect("line exists");
        scenario.downstream_stops(line, origin).contains(&dest)
    })
}

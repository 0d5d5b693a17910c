//! The tick engine: bus propagation, passenger exchange, holding control.
//!
//! Update order within one tick is fixed (arrivals, dispatches, then buses in
//! id order), so a run is a pure function of (scenario, seed, controller).
//!
//! Passenger exchange is committed at the instant a bus arrives: passengers
//! already waiting board (capacity permitting), alighting passengers leave,
//! and the dwell clock runs for max(board time, alight time). Passengers
//! arriving during a dwell wait for the next bus, and no exchange happens
//! while a bus is held.

use crate::demand::generate_passengers;
use crate::event::{Event, EventKind};
use crate::headway::{compute_headways, observation_from_headways, BusView};
use crate::metrics::MetricsReport;
use crate::types::*;
use crate::derive_seed;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::Distribution;
use std::collections::BTreeMap;
use std::collections::VecDeque;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HoldAction {
    Hold,
    Release,
}

/// Everything a controller may look at when deciding on one action step.
#[derive(Debug, Clone)]
pub struct DecisionContext {
    pub t: u32,
    pub bus: BusId,
    pub line: LineId,
    pub stop: StopId,
    pub dispatch_ordinal: u32,
    pub obs: AgentObservation,
    pub holding_elapsed: u32,
    pub action_step_s: u32,
    pub max_hold_s: u32,
    pub capacity: Option<u32>,
    pub line_mean_speed_mps: f64,
}

/// Holding controller hook, consulted at dwell completion and then every
/// action step until it releases the bus or the holding cap forces release.
pub trait HoldController {
    fn decide(&mut self, ctx: &DecisionContext) -> HoldAction;
}

/// Baseline that never holds.
pub struct NoHolding;

impl HoldController for NoHolding {
    fn decide(&mut self, _ctx: &DecisionContext) -> HoldAction {
        HoldAction::Release
    }
}

impl<F: FnMut(&DecisionContext) -> HoldAction> HoldController for F {
    fn decide(&mut self, ctx: &DecisionContext) -> HoldAction {
        self(ctx)
    }
}

#[derive(Debug, Clone, PartialEq)]
enum BusPhase {
    Moving,
    Dwelling { stop: StopId, remaining_s: f64, holding_elapsed: u32, arrival_t: u32 },
    Retired,
}

#[derive(Debug, Clone)]
struct Bus {
    id: BusId,
    line: LineId,
    dispatch_ordinal: u32,
    /// Cumulative distance along the route; wraps are tracked via visit_seq.
    position_m: f64,
    speed_mps: f64,
    onboard: Vec<usize>,
    phase: BusPhase,
    /// Index of the next stop visit (continues across laps on circular lines).
    visit_seq: usize,
    /// Holding time of the last completed dwell; observed after departure.
    last_holding_s: u32,
}

#[derive(Debug, Clone, Default)]
struct StopRt {
    line_queues: BTreeMap<LineId, VecDeque<usize>>,
    shared_queue: VecDeque<usize>,
    holdup: BTreeMap<LineId, u32>,
    arrivals: BTreeMap<LineId, Vec<u32>>,
}

#[derive(Debug, Clone)]
struct LineRt {
    next_dispatch_t: u32,
    dispatched: u32,
}

/// One completed dwell with its holding time; feeds the holding metrics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DwellRecord {
    pub stop: StopId,
    pub line: LineId,
    pub bus: BusId,
    pub arrival_t: u32,
    pub holding_s: u32,
}

/// Structural counts for conservation checks.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AuditCounts {
    pub total: usize,
    pub arrived: usize,
    pub waiting: usize,
    pub onboard: usize,
}

#[derive(Clone)]
pub struct Env {
    pub scenario: ScenarioConfig,
    now: u32,
    passengers: Vec<PassengerRecord>,
    next_arrival_idx: usize,
    stops: BTreeMap<StopId, StopRt>,
    buses: Vec<Bus>,
    line_rt: BTreeMap<LineId, LineRt>,
    served: BTreeMap<StopId, Vec<LineId>>,
    rng_travel: ChaCha8Rng,
    dwell_log: Vec<DwellRecord>,
}

impl Env {
    pub fn new(scenario: &ScenarioConfig, seed: u64) -> Env {
        let passengers = generate_passengers(scenario, seed);
        Env::with_passengers(scenario, seed, passengers)
    }

    pub fn with_passengers(
        scenario: &ScenarioConfig,
        seed: u64,
        passengers: Vec<PassengerRecord>,
    ) -> Env {
        let served = scenario.served_lines();
        let stops = served.keys().map(|s| (*s, StopRt::default())).collect();
        let line_rt = scenario
            .lines
            .iter()
            .map(|l| (l.line_id, LineRt { next_dispatch_t: 0, dispatched: 0 }))
            .collect();
        Env {
            scenario: scenario.clone(),
            now: 0,
            passengers,
            next_arrival_idx: 0,
            stops,
            buses: Vec::new(),
            line_rt,
            served,
            rng_travel: ChaCha8Rng::seed_from_u64(derive_seed(seed, "travel", 0)),
            dwell_log: Vec::new(),
        }
    }

    pub fn now(&self) -> u32 {
        self.now
    }

    pub fn passengers(&self) -> &[PassengerRecord] {
        &self.passengers
    }

    pub fn dwell_log(&self) -> &[DwellRecord] {
        &self.dwell_log
    }

    /// Arrival times of line buses recorded at a stop.
    pub fn stop_arrivals(&self, stop: StopId) -> Option<&BTreeMap<LineId, Vec<u32>>> {
        self.stops.get(&stop).map(|s| &s.arrivals)
    }

    pub fn bus_views(&self) -> Vec<BusView> {
        self.buses
            .iter()
            .map(|b| BusView {
                bus: b.id,
                line: b.line,
                position_m: b.position_m,
                in_service: b.phase != BusPhase::Retired,
            })
            .collect()
    }

    /// Run to the scenario duration under a controller, feeding every event
    /// to `sink`.
    pub fn run(&mut self, ctrl: &mut dyn HoldController, mut sink: impl FnMut(&Event)) {
        while self.now < self.scenario.sim_duration_s {
            for e in self.step(ctrl) {
                sink(&e);
            }
        }
    }

    /// Advance the clock by one second.
    pub fn step(&mut self, ctrl: &mut dyn HoldController) -> Vec<Event> {
        let t = self.now;
        let mut events = Vec::new();
        self.materialize_arrivals(t);
        self.dispatch_due(t, &mut events);
        for i in 0..self.buses.len() {
            match self.buses[i].phase.clone() {
                BusPhase::Retired => {}
                BusPhase::Moving => self.move_bus(i, t, &mut events),
                BusPhase::Dwelling { .. } => self.dwell_tick(i, t, ctrl, &mut events),
            }
        }
        self.now = t + 1;
        events
    }

    fn materialize_arrivals(&mut self, t: u32) {
        while self.next_arrival_idx < self.passengers.len()
            && self.passengers[self.next_arrival_idx].arrive_time <= t as f64
        {
            let idx = self.next_arrival_idx;
            let p = &self.passengers[idx];
            let stop = self.stops.get_mut(&p.origin_stop).expect("origin stop exists");
            if p.shared {
                stop.shared_queue.push_back(idx);
            } else {
                stop.line_queues.entry(p.line.expect("line set")).or_default().push_back(idx);
            }
            self.next_arrival_idx += 1;
        }
    }

    fn dispatch_due(&mut self, t: u32, events: &mut Vec<Event>) {
        let duration = self.scenario.sim_duration_s;
        for line in &self.scenario.lines.clone() {
            let rt = self.line_rt.get_mut(&line.line_id).expect("line rt");
            loop {
                let budget_ok = match line.fleet_size {
                    Some(n) => rt.dispatched < n,
                    None => rt.next_dispatch_t < duration,
                };
                if !budget_ok || rt.next_dispatch_t > t {
                    break;
                }
                let id = BusId(self.buses.len() as u32);
                let ordinal = rt.dispatched;
                rt.dispatched += 1;
                rt.next_dispatch_t += line.departure_interval_s;
                let speed = Self::sample_segment_speed(
                    &mut self.rng_travel,
                    line,
                    0.0,
                    Self::visit_position(line, 0),
                );
                self.buses.push(Bus {
                    id,
                    line: line.line_id,
                    dispatch_ordinal: ordinal,
                    position_m: 0.0,
                    speed_mps: speed,
                    onboard: Vec::new(),
                    phase: BusPhase::Moving,
                    visit_seq: 0,
                    last_holding_s: 0,
                });
                events.push(Event { t, bus: Some(id), stop: None, kind: EventKind::Dispatch });
            }
        }
    }

    /// Cumulative position of the k-th stop visit on a line.
    fn visit_position(line: &LineConfig, seq: usize) -> f64 {
        if line.circular {
            let n = line.stops.len();
            let lap = (seq / n) as f64;
            line.stops[seq % n].position_m + lap * line.route_length_m
        } else {
            line.stops[seq].position_m
        }
    }

    fn visit_stop(line: &LineConfig, seq: usize) -> StopId {
        if line.circular {
            line.stops[seq % line.stops.len()].stop_id
        } else {
            line.stops[seq].stop_id
        }
    }

    /// Speed for the segment [from, to], per the line's travel time model.
    fn sample_segment_speed(rng: &mut ChaCha8Rng, line: &LineConfig, from: f64, to: f64) -> f64 {
        let dist = (to - from).max(1e-9);
        match &line.travel_time {
            TravelTimeModel::Constant { speed_mps } => *speed_mps,
            TravelTimeModel::Gamma { mean_s_per_segment, shape } => {
                let scale = mean_s_per_segment / shape;
                let gamma = rand_distr::Gamma::new(*shape, scale).expect("valid gamma");
                let travel_s: f64 = gamma.sample(rng).max(1.0);
                dist / travel_s
            }
        }
    }

    fn move_bus(&mut self, i: usize, t: u32, events: &mut Vec<Event>) {
        let line = self.scenario.line(self.buses[i].line).expect("line").clone();
        let seq = self.buses[i].visit_seq;
        let target = Self::visit_position(&line, seq);
        let new_pos = self.buses[i].position_m + self.buses[i].speed_mps;
        if new_pos >= target {
            self.buses[i].position_m = target;
            self.process_arrival(i, t, &line, seq, events);
        } else {
            self.buses[i].position_m = new_pos;
        }
    }

    fn process_arrival(
        &mut self,
        i: usize,
        t: u32,
        line: &LineConfig,
        seq: usize,
        events: &mut Vec<Event>,
    ) {
        let stop_id = Self::visit_stop(line, seq);
        let bus_id = self.buses[i].id;
        self.stops
            .get_mut(&stop_id)
            .expect("stop exists")
            .arrivals
            .entry(line.line_id)
            .or_default()
            .push(t);

        // Alight first: exactly the onboard passengers destined here.
        let mut staying = Vec::new();
        let mut alighted = 0u32;
        for idx in std::mem::take(&mut self.buses[i].onboard) {
            if self.passengers[idx].alight_stop == stop_id {
                self.passengers[idx].alight_time = Some(t as f64);
                alighted += 1;
            } else {
                staying.push(idx);
            }
        }
        self.buses[i].onboard = staying;

        let terminal = !line.circular && seq + 1 == line.stops.len();
        if terminal {
            // Terminus: every remaining passenger alights there by the
            // downstream-destination invariant, then the bus retires.
            debug_assert!(self.buses[i].onboard.is_empty(), "passenger carried past terminus");
            self.buses[i].phase = BusPhase::Retired;
            events.push(Event {
                t,
                bus: Some(bus_id),
                stop: Some(stop_id),
                kind: EventKind::Retire { alighted },
            });
            return;
        }

        // Board from the merged FIFO of the line queue and eligible shared
        // passengers, capacity permitting.
        let eligible = self.eligible_boarders(stop_id, line, t);
        let slack = match self.scenario.capacity {
            Some(c) => {
                let n = self.buses[i].onboard.len();
                assert!(n <= c as usize, "bus {bus_id:?} over capacity before boarding");
                c as usize - n
            }
            None => usize::MAX,
        };
        let boarded_n = eligible.len().min(slack);
        let boarding: Vec<usize> = eligible[..boarded_n].to_vec();
        let holdup = (eligible.len() - boarded_n) as u32;
        self.remove_from_queues(stop_id, &boarding);
        for idx in &boarding {
            self.passengers[*idx].board_time = Some(t as f64);
            if self.passengers[*idx].line.is_none() {
                self.passengers[*idx].line = Some(line.line_id);
            }
            self.buses[i].onboard.push(*idx);
        }
        let stop_rt = self.stops.get_mut(&stop_id).expect("stop exists");
        stop_rt.holdup.insert(line.line_id, holdup);

        let dwell = dwell_time(
            boarded_n as u32,
            alighted,
            self.scenario.board_time_per_pax,
            self.scenario.alight_time_per_pax,
        );
        self.buses[i].visit_seq = seq + 1;
        self.buses[i].phase = BusPhase::Dwelling {
            stop: stop_id,
            remaining_s: dwell,
            holding_elapsed: 0,
            arrival_t: t,
        };
        events.push(Event {
            t,
            bus: Some(bus_id),
            stop: Some(stop_id),
            kind: EventKind::Arrival { boarded: boarded_n as u32, alighted, holdup, dwell_s: dwell },
        });
    }

    /// Waiting passengers a bus of `line` may board at `stop`, merged FIFO by
    /// arrival time across the line queue and the shared queue.
    fn eligible_boarders(&self, stop: StopId, line: &LineConfig, t: u32) -> Vec<usize> {
        let rt = &self.stops[&stop];
        let line_q = rt.line_queues.get(&line.line_id);
        let mut merged: Vec<usize> = Vec::new();
        if let Some(q) = line_q {
            merged.extend(q.iter().copied().filter(|i| self.passengers[*i].arrive_time <= t as f64));
        }
        for idx in rt.shared_queue.iter().copied() {
            let p = &self.passengers[idx];
            if p.arrive_time > t as f64 {
                continue;
            }
            // A shared passenger is eligible only when this line reaches
            // their destination downstream of this stop.
            if self.scenario.downstream_stops(line, stop).contains(&p.alight_stop) {
                merged.push(idx);
            }
        }
        merged.sort_by(|a, b| {
            self.passengers[*a]
                .arrive_time
                .partial_cmp(&self.passengers[*b].arrive_time)
                .unwrap()
                .then(a.cmp(b))
        });
        merged
    }

    fn remove_from_queues(&mut self, stop: StopId, boarded: &[usize]) {
        let rt = self.stops.get_mut(&stop).expect("stop exists");
        let set: std::collections::BTreeSet<usize> = boarded.iter().copied().collect();
        for q in rt.line_queues.values_mut() {
            q.retain(|i| !set.contains(i));
        }
        rt.shared_queue.retain(|i| !set.contains(i));
    }

    fn dwell_tick(&mut self, i: usize, t: u32, ctrl: &mut dyn HoldController, events: &mut Vec<Event>) {
        let BusPhase::Dwelling { stop, remaining_s, holding_elapsed, arrival_t } =
            self.buses[i].phase.clone()
        else {
            unreachable!("dwell_tick on non-dwelling bus");
        };
        let remaining = remaining_s - 1.0;
        if remaining > 1e-9 {
            self.buses[i].phase =
                BusPhase::Dwelling { stop, remaining_s: remaining, holding_elapsed, arrival_t };
            return;
        }
        let step = self.scenario.action_step_s;
        let max_hold = self.scenario.max_hold_s;
        if holding_elapsed >= max_hold {
            // Holding cap reached: forced release without consulting the hook.
            self.depart(i, t, stop, holding_elapsed, arrival_t, events);
            return;
        }
        let obs = self.observe(self.buses[i].id, stop);
        let line = self.scenario.line(self.buses[i].line).expect("line");
        let ctx = DecisionContext {
            t,
            bus: self.buses[i].id,
            line: self.buses[i].line,
            stop,
            dispatch_ordinal: self.buses[i].dispatch_ordinal,
            obs,
            holding_elapsed,
            action_step_s: step,
            max_hold_s: max_hold,
            capacity: self.scenario.capacity,
            line_mean_speed_mps: line.mean_speed_mps(),
        };
        let action = ctrl.decide(&ctx);
        events.push(Event {
            t,
            bus: Some(self.buses[i].id),
            stop: Some(stop),
            kind: EventKind::Decision {
                obs: obs.to_array(),
                action: if action == HoldAction::Hold { 0 } else { 1 },
                holding_elapsed,
            },
        });
        if action == HoldAction::Hold && holding_elapsed + step <= max_hold {
            self.buses[i].phase = BusPhase::Dwelling {
                stop,
                remaining_s: step as f64,
                holding_elapsed: holding_elapsed + step,
                arrival_t,
            };
        } else {
            self.depart(i, t, stop, holding_elapsed, arrival_t, events);
        }
    }

    fn depart(
        &mut self,
        i: usize,
        t: u32,
        stop: StopId,
        holding_s: u32,
        arrival_t: u32,
        events: &mut Vec<Event>,
    ) {
        let line = self.scenario.line(self.buses[i].line).expect("line").clone();
        let seq = self.buses[i].visit_seq;
        let from = self.buses[i].position_m;
        let to = Self::visit_position(&line, seq);
        self.buses[i].speed_mps = Self::sample_segment_speed(&mut self.rng_travel, &line, from, to);
        self.buses[i].last_holding_s = holding_s;
        self.buses[i].phase = BusPhase::Moving;
        self.dwell_log.push(DwellRecord {
            stop,
            line: line.line_id,
            bus: self.buses[i].id,
            arrival_t,
            holding_s,
        });
        events.push(Event {
            t,
            bus: Some(self.buses[i].id),
            stop: Some(stop),
            kind: EventKind::Departure { holding_s },
        });
    }

    /// The six-slot observation of a bus anchored at a stop it serves.
    /// Valid while dwelling and also shortly after departure, which is how
    /// the action-step-later state of a released bus is captured.
    pub fn observe(&self, bus: BusId, anchor: StopId) -> AgentObservation {
        let b = self.buses.iter().find(|b| b.id == bus).expect("bus exists");
        let holding = match &b.phase {
            BusPhase::Dwelling { holding_elapsed, .. } => *holding_elapsed,
            _ => b.last_holding_s,
        };
        let views = self.bus_views();
        let subject = BusView {
            bus: b.id,
            line: b.line,
            position_m: b.position_m,
            in_service: b.phase != BusPhase::Retired,
        };
        let headways = compute_headways(&self.scenario, &subject, &views, anchor);
        let serving: &[LineId] = self.served.get(&anchor).map(|v| v.as_slice()).unwrap_or(&[]);
        observation_from_headways(&headways, b.line, serving, b.onboard.len(), holding)
    }

    pub fn is_retired(&self, bus: BusId) -> bool {
        self.buses
            .iter()
            .find(|b| b.id == bus)
            .map_or(true, |b| b.phase == BusPhase::Retired)
    }

    pub fn metrics(&self) -> MetricsReport {
        MetricsReport::compute(self)
    }

    /// Structural counts for the conservation invariant. `arrived` counts
    /// passengers whose arrival time has passed; waiting and onboard are
    /// recounted from the queues and buses.
    pub fn audit_counts(&self) -> AuditCounts {
        let waiting: usize = self
            .stops
            .values()
            .map(|s| {
                s.line_queues.values().map(|q| q.len()).sum::<usize>() + s.shared_queue.len()
            })
            .sum();
        let onboard: usize = self.buses.iter().map(|b| b.onboard.len()).sum();
        AuditCounts {
            total: self.passengers.len(),
            arrived: self.next_arrival_idx,
            waiting,
            onboard,
        }
    }

    /// Onboard count of every active bus, for capacity audits.
    pub fn onboard_counts(&self) -> Vec<(BusId, usize)> {
        self.buses
            .iter()
            .filter(|b| b.phase != BusPhase::Retired)
            .map(|b| (b.id, b.onboard.len()))
            .collect()
    }

    /// Replace not-yet-arrived passengers inside `(now, horizon]` with a
    /// fresh draw from the demand profile and reseed the travel-time stream.
    /// Used by rollout-based optimizers to sample future scenarios.
    pub fn resample_future(&mut self, seed: u64, horizon_s: u32) {
        let from = self.now as f64;
        let fresh =
            crate::demand::generate_window(&self.scenario, seed, from, horizon_s as f64);
        self.passengers.truncate(self.next_arrival_idx);
        self.passengers.extend(fresh);
        self.passengers[self.next_arrival_idx..].sort_by(|a, b| {
            a.arrive_time.partial_cmp(&b.arrive_time).unwrap()
        });
        self.rng_travel = ChaCha8Rng::seed_from_u64(derive_seed(seed, "travel-resample", 0));
    }

    /// Total waiting time accrued by passengers who arrived by `until`:
    /// realized waits for boarded passengers, censored waits for the rest.
    pub fn total_waiting_time(&self, until: f64) -> f64 {
        self.passengers
            .iter()
            .filter(|p| p.arrive_time <= until)
            .map(|p| match p.board_time {
                Some(b) => b - p.arrive_time,
                None => until - p.arrive_time,
            })
            .sum()
    }
}

/// Dwell time: the larger of total boarding and total alighting time.
pub fn dwell_time(boarding: u32, alighting: u32, alpha_b: f64, alpha_a: f64) -> f64 {
    (alpha_b * boarding as f64).max(alpha_a * alighting as f64)
}

/// Capacity-limited boarding split: how many of the waiting passengers board
/// and how many are held up for the next bus.
pub fn boarding_count(waiting: u32, capacity: Option<u32>, onboard: u32, alighting: u32) -> (u32, u32) {
    match capacity {
        None => (waiting, 0),
        Some(c) => {
            assert!(onboard <= c, "onboard {onboard} exceeds capacity {c}");
            let slack = c - onboard + alighting;
            let boarded = waiting.min(slack);
            (boarded, waiting - boarded)
        }
    }
}

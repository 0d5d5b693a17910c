//! Particle swarm optimization of holding plans over a rolling window.
//!
//! A particle encodes one continuous hold duration per anticipated decision
//! event, indexed by (stop, line, bus dispatch ordinal). Fitness is the total
//! waiting time accrued over a full simulator rollout of the window, taken as
//! the worst case (robust) or the mean (stochastic) over K resampled
//! demand/travel scenarios. Positions are quantized to the hold grid at
//! evaluation time.

use crate::PlanController;
use buslab_sim::{derive_seed, Env, LineConfig, LineId, StopId};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PsoMode {
    Robust,
    Stochastic,
}

#[derive(Debug, Clone)]
pub struct PsoConfig {
    pub swarm: usize,
    pub iterations: usize,
    pub inertia: f64,
    pub cognitive: f64,
    pub social: f64,
    pub k_scenarios: usize,
    pub window_s: u32,
    /// Hold grid used at evaluation; positions stay continuous.
    pub quantum_s: u32,
    pub mode: PsoMode,
    pub seed: u64,
}

impl PsoConfig {
    pub fn new(mode: PsoMode, seed: u64) -> Self {
        PsoConfig {
            swarm: 40,
            iterations: 60,
            inertia: 0.7,
            cognitive: 1.5,
            social: 1.5,
            k_scenarios: 5,
            window_s: 2000,
            quantum_s: 5,
            mode,
            seed,
        }
    }
}

/// A quantized holding plan for one optimization window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HoldingPlan {
    pub window_start: u32,
    pub holds: BTreeMap<(StopId, LineId, u32), u32>,
    pub fitness: f64,
}

impl HoldingPlan {
    pub fn empty(window_start: u32) -> Self {
        HoldingPlan { window_start, holds: BTreeMap::new(), fitness: f64::NAN }
    }

    /// Planned hold for one decision event; events outside the plan default
    /// to no-hold.
    pub fn hold_for(&self, stop: StopId, line: LineId, ordinal: u32) -> u32 {
        self.holds.get(&(stop, line, ordinal)).copied().unwrap_or(0)
    }
}

/// Decision slots a window plan can address: every stop of every line, for
/// every bus dispatched by window end.
fn enumerate_slots(env: &Env, window_end: u32) -> Vec<(StopId, LineId, u32)> {
    let scenario = &env.scenario;
    let mut slots = Vec::new();
    for line in &scenario.lines {
        let n = dispatched_by(line, window_end, scenario.sim_duration_s);
        for stop in &line.stops {
            for ordinal in 0..n {
                slots.push((stop.stop_id, line.line_id, ordinal));
            }
        }
    }
    slots
}

fn dispatched_by(line: &LineConfig, t: u32, duration: u32) -> u32 {
    let horizon = t.min(duration.saturating_sub(1));
    let by_time = horizon / line.departure_interval_s + 1;
    match line.fleet_size {
        Some(n) => by_time.min(n),
        None => by_time,
    }
}

fn build_plan(
    slots: &[(StopId, LineId, u32)],
    position: &[f64],
    window_start: u32,
    quantum_s: u32,
    max_hold_s: u32,
) -> HoldingPlan {
    let mut holds = BTreeMap::new();
    for (slot, x) in slots.iter().zip(position) {
        let q = crate::quantize_hold(*x, quantum_s, max_hold_s);
        if q > 0 {
            holds.insert(*slot, q);
        }
    }
    HoldingPlan { window_start, holds, fitness: f64::NAN }
}

/// Scenario seeds shared by every fitness evaluation of one optimization.
fn scenario_seeds(cfg: &PsoConfig) -> Vec<u64> {
    (0..cfg.k_scenarios.max(1)).map(|k| derive_seed(cfg.seed, "pso-scenario", k as u64)).collect()
}

/// Fitness of a plan: total waiting time over the window, aggregated over
/// the shared scenario draws per the optimizer mode.
pub fn evaluate_plan(env: &Env, plan: &HoldingPlan, cfg: &PsoConfig) -> f64 {
    let seeds = scenario_seeds(cfg);
    let window_end = (env.now() + cfg.window_s).min(env.scenario.sim_duration_s);
    let per_scenario: Vec<f64> = seeds
        .iter()
        .map(|seed| rollout_waiting(env, plan, *seed, window_end))
        .collect();
    match cfg.mode {
        PsoMode::Robust => per_scenario.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        PsoMode::Stochastic => per_scenario.iter().sum::<f64>() / per_scenario.len() as f64,
    }
}

fn rollout_waiting(env: &Env, plan: &HoldingPlan, scenario_seed: u64, window_end: u32) -> f64 {
    let mut rollout = env.clone();
    rollout.resample_future(scenario_seed, window_end);
    let mut ctrl = PlanController::new(plan.clone());
    while rollout.now() < window_end {
        rollout.step(&mut ctrl);
    }
    rollout.total_waiting_time(window_end as f64)
}

/// Optimize the holding plan for the window starting at `env.now()`.
///
/// Standard PSO: inertia plus cognitive/social pulls, positions clamped to
/// [0, max_hold]. Particle 0 starts at the all-zero plan so the returned
/// best is never worse than doing nothing. Deterministic for a given seed;
/// rollout evaluations run in parallel but are pure.
pub fn pso_optimize(env: &Env, cfg: &PsoConfig) -> HoldingPlan {
    let max_hold = env.scenario.max_hold_s as f64;
    let window_start = env.now();
    let window_end = (window_start + cfg.window_s).min(env.scenario.sim_duration_s);
    let slots = enumerate_slots(env, window_end);
    let dims = slots.len();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "pso-swarm", 0));

    let mut positions: Vec<Vec<f64>> = Vec::with_capacity(cfg.swarm);
    positions.push(vec![0.0; dims]);
    for _ in 1..cfg.swarm.max(1) {
        positions.push((0..dims).map(|_| rng.gen_range(0.0..=max_hold)).collect());
    }
    let mut velocities: Vec<Vec<f64>> = vec![vec![0.0; dims]; positions.len()];

    let fitness_of = |position: &[f64]| {
        let plan = build_plan(&slots, position, window_start, cfg.quantum_s, env.scenario.max_hold_s);
        evaluate_plan(env, &plan, cfg)
    };

    let mut personal_best = positions.clone();
    let mut personal_fitness: Vec<f64> =
        positions.par_iter().map(|p| fitness_of(p)).collect();
    let mut best_idx = 0;
    for (i, f) in personal_fitness.iter().enumerate() {
        if *f < personal_fitness[best_idx] {
            best_idx = i;
        }
    }
    let mut global_best = personal_best[best_idx].clone();
    let mut global_fitness = personal_fitness[best_idx];

    for _ in 0..cfg.iterations {
        // velocity/position updates draw randomness sequentially so the run
        // does not depend on evaluation parallelism
        for (i, position) in positions.iter_mut().enumerate() {
            for d in 0..dims {
                let r1: f64 = rng.gen();
                let r2: f64 = rng.gen();
                velocities[i][d] = cfg.inertia * velocities[i][d]
                    + cfg.cognitive * r1 * (personal_best[i][d] - position[d])
                    + cfg.social * r2 * (global_best[d] - position[d]);
                velocities[i][d] = velocities[i][d].clamp(-max_hold / 2.0, max_hold / 2.0);
                position[d] = (position[d] + velocities[i][d]).clamp(0.0, max_hold);
            }
        }
        let fitnesses: Vec<f64> = positions.par_iter().map(|p| fitness_of(p)).collect();
        for (i, f) in fitnesses.iter().enumerate() {
            if *f < personal_fitness[i] {
                personal_fitness[i] = *f;
                personal_best[i] = positions[i].clone();
            }
            if *f < global_fitness {
                global_fitness = *f;
                global_best = positions[i].clone();
            }
        }
    }

    let mut plan =
        build_plan(&slots, &global_best, window_start, cfg.quantum_s, env.scenario.max_hold_s);
    plan.fitness = global_fitness;
    plan
}

#[cfg(test)]
mod tests {
    use super::*;
    use buslab_sim::{
        DemandEntry, DemandProfile, LineStop, RateSpec, ScenarioConfig, TravelTimeModel,
    };
    use itertools::Itertools;

    /// 1 circular line, 3 stops, 2 buses: small enough to enumerate.
    pub fn tiny_scenario(rate: f64) -> ScenarioConfig {
        let mut s = ScenarioConfig {
            lines: vec![LineConfig {
                line_id: LineId(0),
                route_length_m: 3000.0,
                circular: true,
                departure_interval_s: 300,
                fleet_size: Some(2),
                stops: vec![
                    LineStop { stop_id: StopId(0), position_m: 500.0 },
                    LineStop { stop_id: StopId(1), position_m: 1500.0 },
                    LineStop { stop_id: StopId(2), position_m: 2500.0 },
                ],
                travel_time: TravelTimeModel::Constant { speed_mps: 5.0 },
            }],
            stops: vec![],
            capacity: None,
            board_time_per_pax: 3.0,
            alight_time_per_pax: 1.8,
            sim_duration_s: 1200,
            action_step_s: 5,
            max_hold_s: 90,
            demand: DemandProfile {
                hourly_multipliers: vec![1.0],
                entries: (0..3)
                    .map(|i| DemandEntry {
                        stop_id: StopId(i),
                        line_id: LineId(0),
                        rate_per_h: RateSpec::Flat(rate),
                    })
                    .collect(),
            },
            shared_passenger_fraction: 0.0,
            seed: 0,
        };
        s.refresh_stops();
        s
    }

    fn small_cfg(mode: PsoMode, seed: u64) -> PsoConfig {
        PsoConfig {
            swarm: 12,
            iterations: 15,
            k_scenarios: 2,
            window_s: 1200,
            quantum_s: 45,
            ..PsoConfig::new(mode, seed)
        }
    }

    #[test]
    fn zero_demand_returns_zero_fitness_plan() {
        let s = tiny_scenario(0.0);
        let env = Env::new(&s, 1);
        let cfg = small_cfg(PsoMode::Stochastic, 3);
        let plan = pso_optimize(&env, &cfg);
        assert_eq!(plan.fitness, 0.0);
    }

    #[test]
    fn same_seed_same_plan() {
        let s = tiny_scenario(80.0);
        let env = Env::new(&s, 1);
        let cfg = small_cfg(PsoMode::Robust, 7);
        assert_eq!(pso_optimize(&env, &cfg), pso_optimize(&env, &cfg));
    }

    #[test]
    fn best_plan_beats_all_zero_plan() {
        let s = tiny_scenario(80.0);
        let env = Env::new(&s, 1);
        let cfg = small_cfg(PsoMode::Stochastic, 9);
        let plan = pso_optimize(&env, &cfg);
        let zero = HoldingPlan::empty(0);
        let zero_fitness = evaluate_plan(&env, &zero, &cfg);
        assert!(plan.fitness <= zero_fitness);
    }

    #[test]
    fn robust_fitness_dominates_stochastic_plan_wise() {
        let s = tiny_scenario(90.0);
        let env = Env::new(&s, 2);
        let robust = small_cfg(PsoMode::Robust, 11);
        let stochastic = PsoConfig { mode: PsoMode::Stochastic, ..robust.clone() };
        for trial in 0..4u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(trial);
            let window_end = 1200.min(s.sim_duration_s);
            let slots = enumerate_slots(&env, window_end);
            let position: Vec<f64> =
                (0..slots.len()).map(|_| rng.gen_range(0.0..=90.0)).collect();
            let plan = build_plan(&slots, &position, 0, 45, 90);
            let fr = evaluate_plan(&env, &plan, &robust);
            let fs = evaluate_plan(&env, &plan, &stochastic);
            assert!(fr >= fs, "robust {fr} < stochastic {fs}");
        }
    }

    #[test]
    fn pso_is_near_exhaustive_enumeration_on_the_tiny_instance() {
        // hold grid {0, 45, 90} over (3 stops x 2 buses) = 729 plans
        let s = tiny_scenario(80.0);
        let env = Env::new(&s, 4);
        let cfg = PsoConfig {
            swarm: 20,
            iterations: 25,
            k_scenarios: 2,
            window_s: 1200,
            quantum_s: 45,
            ..PsoConfig::new(PsoMode::Stochastic, 13)
        };
        let window_end = (env.now() + cfg.window_s).min(s.sim_duration_s);
        let slots = enumerate_slots(&env, window_end);
        assert_eq!(slots.len(), 6);
        let grid = [0.0, 45.0, 90.0];
        let mut best = f64::INFINITY;
        for combo in std::iter::repeat(grid.iter().copied()).take(slots.len()).multi_cartesian_product()
        {
            let plan = build_plan(&slots, &combo, 0, cfg.quantum_s, s.max_hold_s);
            best = best.min(evaluate_plan(&env, &plan, &cfg));
        }
        let plan = pso_optimize(&env, &cfg);
        assert!(
            plan.fitness <= best * 1.05,
            "PSO fitness {} not within 5% of exhaustive best {best}",
            plan.fitness
        );
    }
}

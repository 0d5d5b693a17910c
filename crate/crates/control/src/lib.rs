//! buslab-control — holding baselines sharing the simulator's controller
//! interface: no-holding, space-headway feedback, model-based holding, and
//! PSO-based robust/stochastic window optimizers.

pub mod pso;

pub use pso::{pso_optimize, HoldingPlan, PsoConfig, PsoMode};

use buslab_sim::{AgentObservation, BusId, DecisionContext, HoldAction, HoldController};
use std::collections::HashMap;

/// Quantize a continuous hold duration onto the action-step grid, capped at
/// the holding limit.
pub fn quantize_hold(duration_s: f64, step_s: u32, max_hold_s: u32) -> u32 {
    let step = step_s as f64;
    let q = (duration_s / step).round() * step;
    (q.clamp(0.0, max_hold_s as f64)) as u32
}

/// Space-headway feedback rule: keep holding while the backward headway on
/// the bus's own line exceeds the forward one, up to the holding cap.
pub fn feedback_decide(obs: &AgentObservation, holding_elapsed: u32, max_hold_s: u32) -> HoldAction {
    if obs.h_bwd_same > obs.h_fwd_same && holding_elapsed < max_hold_s {
        HoldAction::Hold
    } else {
        HoldAction::Release
    }
}

/// Feedback controller; a pure function of the observation.
#[derive(Debug, Default, Clone, Copy)]
pub struct FeedbackController;

impl HoldController for FeedbackController {
    fn decide(&mut self, ctx: &DecisionContext) -> HoldAction {
        feedback_decide(&ctx.obs, ctx.holding_elapsed, ctx.max_hold_s)
    }
}

/// Holding duration from the headway gap and residual capacity: the time to
/// close half the backward-forward gap at line speed, weighted down as the
/// bus fills up, quantized to the action grid.
pub fn model_based_hold(
    obs: &AgentObservation,
    speed_mps: f64,
    capacity: Option<u32>,
    step_s: u32,
    max_hold_s: u32,
) -> u32 {
    assert!(speed_mps > 0.0, "speed must be positive");
    let cap = capacity.unwrap_or(120).max(1) as f64;
    let load_weight = (1.0 - obs.n_onboard / cap).max(0.0);
    let raw = (obs.h_bwd_same - obs.h_fwd_same) / (2.0 * speed_mps) * load_weight;
    quantize_hold(raw.clamp(0.0, max_hold_s as f64), step_s, max_hold_s)
}

/// Model-based controller: plans one hold duration when a bus finishes its
/// dwell and realizes it as repeated hold steps.
#[derive(Debug, Default)]
pub struct ModelBasedController {
    planned: HashMap<BusId, u32>,
}

impl HoldController for ModelBasedController {
    fn decide(&mut self, ctx: &DecisionContext) -> HoldAction {
        if ctx.holding_elapsed == 0 {
            let plan = model_based_hold(
                &ctx.obs,
                ctx.line_mean_speed_mps,
                ctx.capacity,
                ctx.action_step_s,
                ctx.max_hold_s,
            );
            self.planned.insert(ctx.bus, plan);
        }
        let plan = self.planned.get(&ctx.bus).copied().unwrap_or(0);
        if ctx.holding_elapsed < plan {
            HoldAction::Hold
        } else {
            HoldAction::Release
        }
    }
}

/// Executes a pre-computed holding plan keyed by (stop, bus dispatch
/// ordinal). Events missing from the plan default to no-hold.
#[derive(Debug, Clone)]
pub struct PlanController {
    plan: HoldingPlan,
}

impl PlanController {
    pub fn new(plan: HoldingPlan) -> Self {
        PlanController { plan }
    }
}

impl HoldController for PlanController {
    fn decide(&mut self, ctx: &DecisionContext) -> HoldAction {
        let planned = self.plan.hold_for(ctx.stop, ctx.line, ctx.dispatch_ordinal);
        if ctx.holding_elapsed < planned {
            HoldAction::Hold
        } else {
            HoldAction::Release
        }
    }
}

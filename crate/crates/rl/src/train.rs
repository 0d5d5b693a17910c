//! Training and test loops: transition capture across action steps, the
//! shared buffer, uniform minibatch TD updates, and greedy test rollouts.

use crate::buffer::ReplayBuffer;
use crate::net::{AdamState, QNetwork, Scalar};
use buslab_sim::{
    derive_seed, AgentObservation, BusId, DecisionContext, Env, HoldAction, HoldController,
    MetricsReport, ScenarioConfig, StopId,
};
use buslab_reward::{EvalError, RewardProgram};
use ndarray::Array2;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use thiserror::Error;

/// One captured experience. States are raw observations; normalization
/// happens at the network boundary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub state: AgentObservation,
    pub action: u8,
    pub reward: f64,
    pub next_state: AgentObservation,
}

/// A transition tagged with its decision stream (one stream per dwell) and
/// the capture times; `t_next - t_state` is always one action step.
#[derive(Debug, Clone, PartialEq)]
pub struct StreamTransition {
    pub stream: u64,
    pub t_state: u32,
    pub t_next: u32,
    pub transition: Transition,
}

/// One decision of a test trajectory, in the feedback-encoding layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajStep {
    pub current_state: [f64; 6],
    pub action: u8,
    pub reward: f64,
    pub next_state: [f64; 6],
}

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("reward evaluation failed on (state {state:?}, action {action}, next {next_state:?}): {source}")]
    Reward {
        state: [f64; 6],
        action: u8,
        next_state: [f64; 6],
        source: EvalError,
    },
}

/// Scales raw observations before they reach the network: headways by the
/// system's ideal spacing, onboard count by capacity (nominal 120 when
/// unlimited), holding by the cap. The reward language always sees raw
/// values.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateNormalizer {
    pub headway_scale: f64,
    pub onboard_scale: f64,
    pub holding_scale: f64,
}

impl StateNormalizer {
    pub fn identity() -> Self {
        StateNormalizer { headway_scale: 1.0, onboard_scale: 1.0, holding_scale: 1.0 }
    }

    pub fn from_scenario(scenario: &ScenarioConfig) -> Self {
        StateNormalizer {
            headway_scale: scenario.mean_ideal_headway_m().max(1.0),
            onboard_scale: scenario.capacity.unwrap_or(120).max(1) as f64,
            holding_scale: scenario.max_hold_s.max(1) as f64,
        }
    }

    pub fn normalize(&self, obs: &AgentObservation) -> [f64; 6] {
        [
            obs.h_fwd_same / self.headway_scale,
            obs.h_bwd_same / self.headway_scale,
            obs.h_fwd_other / self.headway_scale,
            obs.h_bwd_other / self.headway_scale,
            obs.n_onboard / self.onboard_scale,
            obs.holding_elapsed / self.holding_scale,
        ]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Optimizer {
    Sgd,
    /// Adam at the configured rate; plain SGD at 0.001 under-resolves the
    /// small per-step reward differences near headway balance.
    Adam,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub gamma: f64,
    pub episodes: usize,
    pub epochs_per_episode: usize,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    pub eps_start: f64,
    pub eps_end: f64,
    pub eps_decay_episodes: usize,
    pub hidden_dims: Vec<usize>,
    pub optimizer: Optimizer,
    pub seed: u64,
    /// Divisor applied to total travel time for the sparse preset's terminal
    /// penalty.
    pub terminal_penalty_scale: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.001,
            gamma: 0.95,
            episodes: 70,
            epochs_per_episode: 200,
            batch_size: 64,
            buffer_capacity: 100_000,
            eps_start: 1.0,
            eps_end: 0.02,
            eps_decay_episodes: 50,
            hidden_dims: vec![400, 400, 400, 400],
            optimizer: Optimizer::Adam,
            seed: 0,
            terminal_penalty_scale: 1e4,
        }
    }
}

/// Exploration rate for an episode: linear decay then flat.
pub fn epsilon(episode: usize, cfg: &TrainConfig) -> f64 {
    if episode >= cfg.eps_decay_episodes {
        return cfg.eps_end;
    }
    let e = episode as f64;
    let span = cfg.eps_decay_episodes.max(1) as f64;
    (cfg.eps_start - (cfg.eps_start - cfg.eps_end) * e / span).max(cfg.eps_end)
}

/// Epsilon-greedy action selection; greedy ties break toward release.
pub fn select_action<F: Scalar>(q: &[F], eps: f64, rng: &mut impl Rng) -> u8 {
    if rng.gen::<f64>() < eps {
        rng.gen_range(0..=1)
    } else if q[1] >= q[0] {
        1
    } else {
        0
    }
}

/// Normalized states, actions, and bootstrapped TD targets for one batch.
/// Targets come from the network parameters as they stand when this is
/// called, i.e. the pre-update snapshot.
fn td_batch<F: Scalar>(
    net: &QNetwork<F>,
    batch: &[&Transition],
    norm: &StateNormalizer,
    gamma: f64,
) -> (Array2<F>, Vec<u8>, Vec<F>) {
    let n = batch.len();
    let dim = net.dims[0];
    let mut states: Array2<F> = Array2::zeros((n, dim));
    let mut next_states: Array2<F> = Array2::zeros((n, dim));
    let mut actions = Vec::with_capacity(n);
    for (i, t) in batch.iter().enumerate() {
        for (j, v) in norm.normalize(&t.state).iter().enumerate() {
            states[(i, j)] = F::of(*v);
        }
        for (j, v) in norm.normalize(&t.next_state).iter().enumerate() {
            next_states[(i, j)] = F::of(*v);
        }
        actions.push(t.action);
    }
    let q_next = net.forward(&next_states);
    let targets: Vec<F> = batch
        .iter()
        .enumerate()
        .map(|(i, t)| {
            let best = if q_next[(i, 0)] > q_next[(i, 1)] { q_next[(i, 0)] } else { q_next[(i, 1)] };
            F::of(t.reward) + F::of(gamma) * best
        })
        .collect();
    (states, actions, targets)
}

/// One uniform-minibatch TD update by plain gradient descent. Targets
/// bootstrap from the parameters as they were before the step; returns the
/// scalar loss. A zero learning rate leaves the parameters bit-identical.
/// An empty batch is a no-op.
pub fn dqn_update<F: Scalar>(
    net: &mut QNetwork<F>,
    batch: &[&Transition],
    norm: &StateNormalizer,
    gamma: f64,
    alpha: f64,
) -> f64 {
    if batch.is_empty() {
        return 0.0;
    }
    let (states, actions, targets) = td_batch(net, batch, norm, gamma);
    let (grads, loss) = net.td_gradients(&states, &actions, &targets);
    if alpha != 0.0 {
        net.apply_gradients(&grads, F::of(alpha));
    }
    loss.as_f64()
}

/// Behavior policy over raw observations.
pub trait Policy {
    fn act(&mut self, obs: &AgentObservation) -> u8;
}

pub struct EpsilonGreedyPolicy<'a, F> {
    pub net: &'a QNetwork<F>,
    pub norm: StateNormalizer,
    pub eps: f64,
    pub rng: ChaCha8Rng,
}

impl<F: Scalar> Policy for EpsilonGreedyPolicy<'_, F> {
    fn act(&mut self, obs: &AgentObservation) -> u8 {
        let x = self.norm.normalize(obs).map(F::of);
        let q = self.net.q_values(&x);
        select_action(&q, self.eps, &mut self.rng)
    }
}

pub struct GreedyPolicy<'a, F> {
    pub net: &'a QNetwork<F>,
    pub norm: StateNormalizer,
}

impl<F: Scalar> Policy for GreedyPolicy<'_, F> {
    fn act(&mut self, obs: &AgentObservation) -> u8 {
        let x = self.norm.normalize(obs).map(F::of);
        let q = self.net.q_values(&x);
        if q[1] >= q[0] {
            1
        } else {
            0
        }
    }
}

/// Policy from a plain function, for wrappers around hand-crafted rules.
pub struct FnPolicy<F: FnMut(&AgentObservation) -> u8>(pub F);

impl<F: FnMut(&AgentObservation) -> u8> Policy for FnPolicy<F> {
    fn act(&mut self, obs: &AgentObservation) -> u8 {
        (self.0)(obs)
    }
}

#[derive(Debug, Clone)]
struct Pending {
    due_t: u32,
    bus: BusId,
    stop: StopId,
    state: AgentObservation,
    action: u8,
    stream: u64,
    decided_t: u32,
}

/// Controller that runs a policy and captures transitions by matching each
/// decision with the observation one action step later. Held buses are
/// matched at their next decision; released buses are matched by the episode
/// driver right after the step in which the gap elapses.
struct CaptureController<'a, P: Policy> {
    policy: &'a mut P,
    program: &'a RewardProgram,
    step_s: u32,
    pending: Vec<Pending>,
    completed: Vec<StreamTransition>,
    stream_seq: u64,
    current_stream: HashMap<BusId, u64>,
    error: Option<TrainError>,
}

impl<'a, P: Policy> CaptureController<'a, P> {
    fn new(policy: &'a mut P, program: &'a RewardProgram, step_s: u32) -> Self {
        CaptureController {
            policy,
            program,
            step_s,
            pending: Vec::new(),
            completed: Vec::new(),
            stream_seq: 0,
            current_stream: HashMap::new(),
            error: None,
        }
    }

    fn complete(&mut self, p: Pending, next_obs: AgentObservation) {
        let cur = p.state.to_array();
        let nxt = next_obs.to_array();
        match self.program.evaluate(&cur, p.action, &nxt) {
            Ok(reward) => self.completed.push(StreamTransition {
                stream: p.stream,
                t_state: p.decided_t,
                t_next: p.due_t,
                transition: Transition {
                    state: p.state,
                    action: p.action,
                    reward,
                    next_state: next_obs,
                },
            }),
            Err(source) => {
                if self.error.is_none() {
                    self.error = Some(TrainError::Reward {
                        state: cur,
                        action: p.action,
                        next_state: nxt,
                        source,
                    });
                }
            }
        }
    }
}

impl<P: Policy> HoldController for CaptureController<'_, P> {
    fn decide(&mut self, ctx: &DecisionContext) -> HoldAction {
        // A held bus's next decision happens exactly one action step after
        // the previous one, with the same observation both sides see.
        if let Some(pos) =
            self.pending.iter().position(|p| p.bus == ctx.bus && p.due_t == ctx.t)
        {
            let p = self.pending.swap_remove(pos);
            self.complete(p, ctx.obs);
        }
        if ctx.holding_elapsed == 0 {
            self.stream_seq += 1;
            self.current_stream.insert(ctx.bus, self.stream_seq);
        }
        let stream = self.current_stream[&ctx.bus];
        let action = self.policy.act(&ctx.obs);
        self.pending.push(Pending {
            due_t: ctx.t + self.step_s,
            bus: ctx.bus,
            stop: ctx.stop,
            state: ctx.obs,
            action,
            stream,
            decided_t: ctx.t,
        });
        if action == 0 {
            HoldAction::Hold
        } else {
            HoldAction::Release
        }
    }
}

/// Run one episode under a policy, returning the captured transitions and
/// the finished environment. Decisions whose action-step gap runs past the
/// episode end (or whose bus retires first) are dropped.
fn run_episode<P: Policy>(
    scenario: &ScenarioConfig,
    env_seed: u64,
    policy: &mut P,
    program: &RewardProgram,
) -> Result<(Vec<StreamTransition>, Env), TrainError> {
    let mut env = Env::new(scenario, env_seed);
    let step_s = scenario.action_step_s;
    let mut cap = CaptureController::new(policy, program, step_s);
    while env.now() < scenario.sim_duration_s {
        let t = env.now();
        env.step(&mut cap);
        if let Some(e) = cap.error.take() {
            return Err(e);
        }
        // Released buses: observe one action step after the decision.
        let mut i = 0;
        while i < cap.pending.len() {
            if cap.pending[i].due_t == t {
                let p = cap.pending.swap_remove(i);
                if !env.is_retired(p.bus) {
                    let obs = env.observe(p.bus, p.stop);
                    cap.complete(p, obs);
                }
            } else {
                i += 1;
            }
        }
        if let Some(e) = cap.error.take() {
            return Err(e);
        }
    }
    Ok((cap.completed, env))
}

#[derive(Debug, Clone)]
pub struct TrainResult<F> {
    pub net: QNetwork<F>,
    /// Total captured reward per episode.
    pub evol: Vec<f64>,
}

/// Train a DQN agent: per episode, run the simulator collecting transitions
/// from every stop agent into the shared buffer, then take
/// `epochs_per_episode` uniform minibatch steps. Deterministic per seed.
pub fn run_training<F: Scalar>(
    scenario: &ScenarioConfig,
    program: &RewardProgram,
    cfg: &TrainConfig,
) -> Result<TrainResult<F>, TrainError> {
    let mut dims = vec![6];
    dims.extend(&cfg.hidden_dims);
    dims.push(2);
    let mut net: QNetwork<F> = QNetwork::init(&dims, derive_seed(cfg.seed, "net-init", 0));
    let mut adam = AdamState::new(&net);
    let norm = StateNormalizer::from_scenario(scenario);
    let mut buffer = ReplayBuffer::new(cfg.buffer_capacity);
    let mut sample_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "minibatch", 0));
    let mut evol = Vec::with_capacity(cfg.episodes);

    for episode in 0..cfg.episodes {
        let eps = epsilon(episode, cfg);
        let mut policy = EpsilonGreedyPolicy {
            net: &net,
            norm,
            eps,
            rng: ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "explore", episode as u64)),
        };
        let env_seed = derive_seed(cfg.seed, "train-episode", episode as u64);
        let (mut transitions, env) = run_episode(scenario, env_seed, &mut policy, program)?;

        if program.metadata.terminal_travel_penalty {
            let total_travel: f64 = env.passengers().iter().filter_map(|p| p.travel_time()).sum();
            let penalty = -(total_travel / cfg.terminal_penalty_scale);
            let mut last_of_stream: HashMap<u64, usize> = HashMap::new();
            for (i, st) in transitions.iter().enumerate() {
                last_of_stream.insert(st.stream, i);
            }
            for idx in last_of_stream.values() {
                transitions[*idx].transition.reward += penalty;
            }
        }

        evol.push(transitions.iter().map(|t| t.transition.reward).sum());
        for st in transitions {
            buffer.push(st.transition);
        }

        if buffer.is_empty() {
            continue;
        }
        for _ in 0..cfg.epochs_per_episode {
            let batch = buffer.sample(&mut sample_rng, cfg.batch_size.min(buffer.len()));
            match cfg.optimizer {
                Optimizer::Sgd => {
                    dqn_update(&mut net, &batch, &norm, cfg.gamma, cfg.learning_rate);
                }
                Optimizer::Adam => {
                    let (states, actions, targets) = td_batch(&net, &batch, &norm, cfg.gamma);
                    let (grads, _) = net.td_gradients(&states, &actions, &targets);
                    adam.apply(&mut net, &grads, F::of(cfg.learning_rate));
                }
            }
        }
    }
    Ok(TrainResult { net, evol })
}

/// Greedy test rollout shared by all stop agents: returns the decision
/// trajectory and the run's metrics. Works with any policy so hand-crafted
/// rules can be driven through the same pipeline.
pub fn run_test<P: Policy>(
    scenario: &ScenarioConfig,
    program: &RewardProgram,
    policy: &mut P,
    test_seed: u64,
) -> Result<(Vec<TrajStep>, MetricsReport), TrainError> {
    let (transitions, env) = run_episode(scenario, test_seed, policy, program)?;
    let traj = transitions
        .iter()
        .map(|st| TrajStep {
            current_state: st.transition.state.to_array(),
            action: st.transition.action,
            reward: st.transition.reward,
            next_state: st.transition.next_state.to_array(),
        })
        .collect();
    Ok((traj, env.metrics()))
}

/// Test rollout that also returns the stream-tagged transitions; used by
/// invariants and diagnostics.
pub fn run_test_detailed<P: Policy>(
    scenario: &ScenarioConfig,
    program: &RewardProgram,
    policy: &mut P,
    test_seed: u64,
) -> Result<(Vec<StreamTransition>, MetricsReport), TrainError> {
    let (transitions, env) = run_episode(scenario, test_seed, policy, program)?;
    let metrics = env.metrics();
    Ok((transitions, metrics))
}

//! Built-in reward programs.
//!
//! * `local` — rewards shrinking the forward/backward headway imbalance on
//!   the bus's own line and, at shared stops, across the other lines.
//! * `global` — sparse: 0 per step; carries a flag telling the trainer to
//!   charge the scaled total travel time to each decision stream's final
//!   transition at episode end.
//! * `local+global` — the local shaping plus a flat penalty per hold action.
//! * `evolved` — the multi-objective program produced by the reward
//!   evolution loop: headway deviation penalties against an ideal spacing,
//!   a quadratic holding penalty (scaled up for long holds), a spread
//!   reduction bonus, and an onboard holding-delay penalty.

use crate::{Origin, RewardProgram};
use thiserror::Error;

/// Ideal spacing constant baked into the preset sources, in meters.
pub const DEFAULT_IDEAL_HEADWAY_M: f64 = 1650.0;

pub const PRESET_NAMES: [&str; 4] = ["local", "global", "local+global", "evolved"];

#[derive(Debug, Error)]
pub enum PresetError {
    #[error("unknown preset `{0}`; known presets: local, global, local+global, evolved")]
    Unknown(String),
}

/// A preset with the default ideal headway.
pub fn preset(name: &str) -> Result<RewardProgram, PresetError> {
    preset_with_ideal(name, DEFAULT_IDEAL_HEADWAY_M)
}

/// A preset specialized to a scenario's ideal headway (meters). The constant
/// is inlined into the program source so programs stay self-contained.
pub fn preset_with_ideal(name: &str, ideal_headway_m: f64) -> Result<RewardProgram, PresetError> {
    let source = match name {
        "local" => local_source(ideal_headway_m),
        "global" => global_source(),
        "local+global" => local_global_source(ideal_headway_m),
        "evolved" => evolved_source(ideal_headway_m),
        other => return Err(PresetError::Unknown(other.to_string())),
    };
    let mut program = RewardProgram::parse(&source)
        .expect("preset sources parse")
        .with_origin(Origin::Preset);
    program.metadata.preset_name = Some(name.to_string());
    program.metadata.terminal_travel_penalty = name == "global";
    Ok(program)
}

fn local_source(ideal: f64) -> String {
    format!(
        "# Thoughts: reward reductions of the forward/backward headway imbalance,\n\
         # summed over the bus's own line and (at shared stops) the other lines,\n\
         # scaled by the ideal spacing.\n\
         let same_gap_change = abs(cur[0] - cur[1]) - abs(nxt[0] - nxt[1]);\n\
         let other_gap_change = abs(cur[2] - cur[3]) - abs(nxt[2] - nxt[3]);\n\
         return (same_gap_change + other_gap_change) / {ideal};\n"
    )
}

fn global_source() -> String {
    "# Thoughts: sparse objective. Every step returns 0; the trainer assigns a\n\
     # scaled total-travel-time penalty to the last transition of each decision\n\
     # stream when the episode ends.\n\
     return 0;\n"
        .to_string()
}

fn local_global_source(ideal: f64) -> String {
    format!(
        "# Thoughts: local headway-imbalance shaping plus a flat penalty for each\n\
         # hold action, since holding delays onboard passengers.\n\
         let same_gap_change = abs(cur[0] - cur[1]) - abs(nxt[0] - nxt[1]);\n\
         let other_gap_change = abs(cur[2] - cur[3]) - abs(nxt[2] - nxt[3]);\n\
         let hold_penalty = if(action == 0, 0.1, 0);\n\
         return (same_gap_change + other_gap_change) / {ideal} - hold_penalty;\n"
    )
}

fn evolved_source(ideal: f64) -> String {
    format!(
        "# Thoughts: multi-objective holding reward. Penalize deviation of the\n\
         # next-state headways from the ideal spacing (other-line terms only when\n\
         # present), penalize holding quadratically with a 1.5x factor beyond 60 s\n\
         # of accumulated holding, reward reductions in headway spread, and charge\n\
         # onboard passengers' holding delay normalized by a nominal capacity.\n\
         let ideal_headway = {ideal};\n\
         let headway_penalty_same = abs(nxt[0] - ideal_headway) + abs(nxt[1] - ideal_headway);\n\
         let headway_penalty_other = if(nxt[2] > 0 or nxt[3] > 0, abs(nxt[2] - ideal_headway) + abs(nxt[3] - ideal_headway), 0);\n\
         let holding_penalty = if(action == 0, (nxt[5] - cur[5]) ** 2, 0);\n\
         let spread_cur = std([cur[0], cur[1], cur[2], cur[3]]);\n\
         let spread_nxt = std([nxt[0], nxt[1], nxt[2], nxt[3]]);\n\
         let spread_reward = if(spread_nxt < spread_cur, (spread_cur - spread_nxt) * 10, 0);\n\
         let onboard_delay_penalty = nxt[5] * (cur[4] / 50);\n\
         let long_hold_penalty = if(nxt[5] > 60, 1.5 * holding_penalty, holding_penalty);\n\
         return spread_reward - (headway_penalty_same + headway_penalty_other + long_hold_penalty + onboard_delay_penalty);\n"
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent straight-line arithmetic for the evolved reward, kept
    /// deliberately separate from the DSL evaluation path.
    pub fn evolved_oracle(cur: &[f64; 6], action: u8, nxt: &[f64; 6], ideal: f64) -> f64 {
        let hp_same = (nxt[0] - ideal).abs() + (nxt[1] - ideal).abs();
        let hp_other = if nxt[2] > 0.0 || nxt[3] > 0.0 {
            (nxt[2] - ideal).abs() + (nxt[3] - ideal).abs()
        } else {
            0.0
        };
        let hold_pen = if action == 0 { (nxt[5] - cur[5]).powi(2) } else { 0.0 };
        let pop_std = |xs: [f64; 4]| {
            let m = xs.iter().sum::<f64>() / 4.0;
            (xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / 4.0).sqrt()
        };
        let std_cur = pop_std([cur[0], cur[1], cur[2], cur[3]]);
        let std_nxt = pop_std([nxt[0], nxt[1], nxt[2], nxt[3]]);
        let spread_reward = if std_nxt < std_cur { (std_cur - std_nxt) * 10.0 } else { 0.0 };
        let wait_pen = nxt[5] * (cur[4] / 50.0);
        let dyn_pen = if nxt[5] > 60.0 { 1.5 * hold_pen } else { hold_pen };
        spread_reward - (hp_same + hp_other + dyn_pen + wait_pen)
    }

    #[test]
    fn evolved_hand_derived_vectors() {
        let p = preset("evolved").unwrap();
        let ideal = [1650.0, 1650.0, 0.0, 0.0, 50.0, 0.0];
        assert_eq!(p.evaluate(&ideal, 1, &ideal).unwrap(), 0.0);
        let held = [1650.0, 1650.0, 0.0, 0.0, 50.0, 5.0];
        assert_eq!(p.evaluate(&ideal, 0, &held).unwrap(), -30.0);
    }

    #[test]
    fn evolved_matches_oracle_on_random_vectors() {
        let p = preset("evolved").unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        for _ in 0..20 {
            let mut cur = [0.0; 6];
            let mut nxt = [0.0; 6];
            for i in 0..4 {
                cur[i] = rng.gen_range(0.0..4000.0);
                nxt[i] = rng.gen_range(0.0..4000.0);
            }
            cur[4] = rng.gen_range(0.0f64..120.0).round();
            nxt[4] = cur[4];
            cur[5] = rng.gen_range(0.0f64..=17.0).round() * 5.0;
            let action = if rng.gen_bool(0.5) { 0 } else { 1 };
            nxt[5] = if action == 0 { cur[5] + 5.0 } else { cur[5] };
            let got = p.evaluate(&cur, action, &nxt).unwrap();
            let want = evolved_oracle(&cur, action, &nxt, DEFAULT_IDEAL_HEADWAY_M);
            let denom = want.abs().max(1.0);
            assert!(
                ((got - want) / denom).abs() < 1e-9,
                "got {got}, want {want} for cur={cur:?} nxt={nxt:?} action={action}"
            );
        }
    }

    #[test]
    fn local_matches_hand_evaluation() {
        // |h+ - h-| goes 500 -> 300 with ideal spacing 1650: (500-300)/1650
        let p = preset("local").unwrap();
        let cur = [1000.0, 500.0, 0.0, 0.0, 10.0, 0.0];
        let nxt = [900.0, 600.0, 0.0, 0.0, 10.0, 5.0];
        let got = p.evaluate(&cur, 0, &nxt).unwrap();
        assert!((got - 200.0 / 1650.0).abs() < 1e-12);
    }

    #[test]
    fn local_global_hold_penalty_vanishes_on_release() {
        let p = preset("local+global").unwrap();
        let cur = [1000.0, 1000.0, 0.0, 0.0, 10.0, 0.0];
        let nxt = [1000.0, 1000.0, 0.0, 0.0, 10.0, 0.0];
        assert_eq!(p.evaluate(&cur, 1, &nxt).unwrap(), 0.0);
        assert_eq!(p.evaluate(&cur, 0, &nxt).unwrap(), -0.1);
    }

    #[test]
    fn global_returns_zero_and_flags_terminal_penalty() {
        let p = preset("global").unwrap();
        assert!(p.metadata.terminal_travel_penalty);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10 {
            let cur: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.0..2000.0));
            let nxt: [f64; 6] = std::array::from_fn(|_| rng.gen_range(0.0..2000.0));
            assert_eq!(p.evaluate(&cur, 0, &nxt).unwrap(), 0.0);
        }
    }

    #[test]
    fn unknown_preset_is_an_error() {
        assert!(preset("does-not-exist").is_err());
    }

    #[test]
    fn ideal_headway_specializes_the_source() {
        let p = preset_with_ideal("local", 1776.0).unwrap();
        let cur = [1000.0, 500.0, 0.0, 0.0, 10.0, 0.0];
        let nxt = [900.0, 600.0, 0.0, 0.0, 10.0, 5.0];
        let got = p.evaluate(&cur, 0, &nxt).unwrap();
        assert!((got - 200.0 / 1776.0).abs() < 1e-12);
    }

    #[test]
    fn evolved_has_named_components() {
        let p = preset("evolved").unwrap();
        assert_eq!(p.ast().lets.len(), 9);
        assert!(!p.thoughts.is_empty());
    }
}

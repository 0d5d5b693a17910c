//! buslab-reward — a sandboxed, deterministic reward mini-language.
//!
//! Reward programs map `(current_state, action, next_state)` to a scalar.
//! They are the exchange format between reward-designing modules and the RL
//! trainer: plain text in, a checked AST out, with parse errors precise
//! enough to feed back to the program's author.
//!
//! The language is total by construction: no loops, no recursion, no state,
//! no I/O. A program is a sequence of `let` bindings followed by a `return`
//! expression over `cur[0..5]`, `nxt[0..5]`, `action`, numeric literals and
//! a fixed function set. Division by zero and non-finite intermediates are
//! runtime evaluation errors that mark the program invalid.
//!
//! ```text
//! # Thoughts: keep the bus roughly centered between its neighbors.
//! let imbalance = abs(cur[0] - cur[1]) - abs(nxt[0] - nxt[1]);
//! return imbalance / 1650;
//! ```

mod ast;
mod eval;
mod lexer;
mod parser;
mod presets;
mod pretty;

pub use ast::{AggFunc, BinOp, Expr, Func, Program, UnaryOp};
pub use eval::EvalError;
pub use parser::ParseError;
pub use presets::{preset, preset_with_ideal, PresetError, DEFAULT_IDEAL_HEADWAY_M, PRESET_NAMES};

use serde::{Deserialize, Serialize};

/// Where a program came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Origin {
    Initializer,
    Modifier,
    Refiner,
    Preset,
    File,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProgramMetadata {
    pub origin: Origin,
    pub iteration: Option<u32>,
    pub preset_name: Option<String>,
    /// When set, the trainer adds a scaled total-travel-time penalty to the
    /// final transition of every decision stream at episode end. Carried by
    /// the sparse "global" preset.
    pub terminal_travel_penalty: bool,
}

impl ProgramMetadata {
    fn new(origin: Origin) -> Self {
        ProgramMetadata {
            origin,
            iteration: None,
            preset_name: None,
            terminal_travel_penalty: false,
        }
    }
}

/// A parsed, validated reward program.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardProgram {
    pub source: String,
    /// Leading comment block, conventionally the author's reasoning.
    pub thoughts: String,
    pub metadata: ProgramMetadata,
    program: Program,
}

impl RewardProgram {
    /// Parse and type-check a program. All identifiers are resolved; the
    /// returned AST cannot reference anything outside the input vectors.
    pub fn parse(source: &str) -> Result<RewardProgram, ParseError> {
        let (program, thoughts) = parser::parse(source)?;
        Ok(RewardProgram {
            source: source.to_string(),
            thoughts,
            metadata: ProgramMetadata::new(Origin::File),
            program,
        })
    }

    pub fn with_origin(mut self, origin: Origin) -> Self {
        self.metadata.origin = origin;
        self
    }

    pub fn with_iteration(mut self, iteration: u32) -> Self {
        self.metadata.iteration = Some(iteration);
        self
    }

    /// Evaluate on raw observation vectors. Deterministic and reentrant.
    pub fn evaluate(&self, cur: &[f64; 6], action: u8, nxt: &[f64; 6]) -> Result<f64, EvalError> {
        eval::evaluate(&self.program, cur, action, nxt)
    }

    /// Canonical formatting; parsing it back yields a structurally identical
    /// program.
    pub fn pretty_print(&self) -> String {
        pretty::print(&self.program, &self.thoughts)
    }

    pub fn ast(&self) -> &Program {
        &self.program
    }

    /// Structural equality of the underlying ASTs, ignoring formatting.
    pub fn same_structure(&self, other: &RewardProgram) -> bool {
        self.program == other.program
    }

    /// Scale probe: warnings (never errors) when the program produces very
    /// large magnitudes on a fixed set of probe vectors.
    pub fn scale_warnings(&self) -> Vec<String> {
        const LIMIT: f64 = 1e6;
        let probes: [([f64; 6], u8, [f64; 6]); 4] = [
            ([0.0; 6], 1, [0.0; 6]),
            (
                [1650.0, 1650.0, 0.0, 0.0, 50.0, 0.0],
                0,
                [1650.0, 1650.0, 0.0, 0.0, 50.0, 5.0],
            ),
            (
                [20000.0, 10.0, 20000.0, 10.0, 120.0, 85.0],
                0,
                [20000.0, 5.0, 20000.0, 5.0, 120.0, 90.0],
            ),
            ([50.0, 30000.0, 0.0, 0.0, 1.0, 0.0], 1, [60.0, 29000.0, 0.0, 0.0, 1.0, 0.0]),
        ];
        let mut warnings = Vec::new();
        for (cur, action, nxt) in probes {
            if let Ok(v) = self.evaluate(&cur, action, &nxt) {
                if v.abs() > LIMIT {
                    warnings.push(format!(
                        "reward magnitude {v:.3e} exceeds {LIMIT:.0e} on probe cur={cur:?} action={action}"
                    ));
                }
            }
        }
        warnings
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constant_program_parses_and_evaluates() {
        let p = RewardProgram::parse("return 0;").unwrap();
        assert_eq!(p.evaluate(&[0.0; 6], 1, &[0.0; 6]), Ok(0.0));
    }

    #[test]
    fn out_of_range_state_index_is_a_parse_error() {
        let err = RewardProgram::parse("return cur[9];").unwrap_err();
        assert!(err.message.contains("index"), "{err:?}");
    }

    #[test]
    fn division_by_zero_is_an_eval_error() {
        let p = RewardProgram::parse("return 1 / (cur[0] - cur[0]);").unwrap();
        assert!(matches!(
            p.evaluate(&[5.0; 6], 1, &[5.0; 6]),
            Err(EvalError::DivisionByZero { .. })
        ));
    }

    #[test]
    fn scale_warning_fires_on_huge_outputs() {
        let p = RewardProgram::parse("return cur[0] * cur[0] * cur[0];").unwrap();
        assert!(!p.scale_warnings().is_empty());
        let small = RewardProgram::parse("return cur[0] / 1650;").unwrap();
        assert!(small.scale_warnings().is_empty());
    }

    #[test]
    fn errors_serialize_to_json() {
        let err = RewardProgram::parse("return nope;").unwrap_err();
        let j = serde_json::to_string(&err).unwrap();
        assert!(j.contains("line"));
    }
}

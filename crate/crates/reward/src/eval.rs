//! Tree-walking evaluator. Pure: the only inputs are the two state vectors
//! and the action; the only output is the scalar or a typed error.

use crate::ast::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
pub enum EvalError {
    #[error("division by zero in `{context}`")]
    DivisionByZero { context: String },
    #[error("non-finite result in `{context}`")]
    NonFinite { context: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Value {
    Num(f64),
    Bool(bool),
}

impl Value {
    fn num(self) -> f64 {
        match self {
            Value::Num(n) => n,
            // unreachable after type checking; make misuse loud in debug
            Value::Bool(_) => {
                debug_assert!(false, "boolean where number expected");
                f64::NAN
            }
        }
    }

    fn boolean(self) -> bool {
        match self {
            Value::Bool(b) => b,
            Value::Num(_) => {
                debug_assert!(false, "number where boolean expected");
                false
            }
        }
    }
}

pub fn evaluate(
    program: &Program,
    cur: &[f64; 6],
    action: u8,
    nxt: &[f64; 6],
) -> Result<f64, EvalError> {
    let mut bindings: Vec<Value> = Vec::with_capacity(program.lets.len());
    for (_, expr) in &program.lets {
        let v = eval_expr(expr, cur, action, nxt, &bindings)?;
        bindings.push(v);
    }
    Ok(eval_expr(&program.ret, cur, action, nxt, &bindings)?.num())
}

fn finite(x: f64, op: &dyn Fn() -> String) -> Result<Value, EvalError> {
    if x.is_finite() {
        Ok(Value::Num(x))
    } else {
        Err(EvalError::NonFinite { context: op() })
    }
}

fn eval_expr(
    expr: &Expr,
    cur: &[f64; 6],
    action: u8,
    nxt: &[f64; 6],
    bindings: &[Value],
) -> Result<Value, EvalError> {
    let rec = |e: &Expr| eval_expr(e, cur, action, nxt, bindings);
    match expr {
        Expr::Num(n) => Ok(Value::Num(*n)),
        Expr::Cur(i) => Ok(Value::Num(cur[*i])),
        Expr::Nxt(i) => Ok(Value::Num(nxt[*i])),
        Expr::Action => Ok(Value::Num(action as f64)),
        Expr::Ref(i) => Ok(bindings[*i]),
        Expr::Unary(UnaryOp::Neg, e) => Ok(Value::Num(-rec(e)?.num())),
        Expr::Unary(UnaryOp::Not, e) => Ok(Value::Bool(!rec(e)?.boolean())),
        Expr::Binary(op, l, r) => {
            match op {
                BinOp::And => {
                    // short-circuit
                    return Ok(Value::Bool(rec(l)?.boolean() && rec(r)?.boolean()));
                }
                BinOp::Or => {
                    return Ok(Value::Bool(rec(l)?.boolean() || rec(r)?.boolean()));
                }
                _ => {}
            }
            let a = rec(l)?.num();
            let b = rec(r)?.num();
            match op {
                BinOp::Add => finite(a + b, &|| format!("{a} + {b}")),
                BinOp::Sub => finite(a - b, &|| format!("{a} - {b}")),
                BinOp::Mul => finite(a * b, &|| format!("{a} * {b}")),
                BinOp::Div => {
                    if b == 0.0 {
                        Err(EvalError::DivisionByZero { context: format!("{a} / {b}") })
                    } else {
                        finite(a / b, &|| format!("{a} / {b}"))
                    }
                }
                BinOp::Pow => finite(a.powf(b), &|| format!("{a} ** {b}")),
                BinOp::Lt => Ok(Value::Bool(a < b)),
                BinOp::Le => Ok(Value::Bool(a <= b)),
                BinOp::Gt => Ok(Value::Bool(a > b)),
                BinOp::Ge => Ok(Value::Bool(a >= b)),
                BinOp::Eq => Ok(Value::Bool(a == b)),
                BinOp::Ne => Ok(Value::Bool(a != b)),
                BinOp::And | BinOp::Or => unreachable!("handled above"),
            }
        }
        Expr::Call(func, args) => match func {
            Func::Abs => Ok(Value::Num(rec(&args[0])?.num().abs())),
            Func::Sqrt => {
                let x = rec(&args[0])?.num();
                finite(x.sqrt(), &|| format!("sqrt({x})"))
            }
            Func::Min => {
                let mut best = rec(&args[0])?.num();
                for a in &args[1..] {
                    best = best.min(rec(a)?.num());
                }
                Ok(Value::Num(best))
            }
            Func::Max => {
                let mut best = rec(&args[0])?.num();
                for a in &args[1..] {
                    best = best.max(rec(a)?.num());
                }
                Ok(Value::Num(best))
            }
            Func::Clamp => {
                let x = rec(&args[0])?.num();
                let lo = rec(&args[1])?.num();
                let hi = rec(&args[2])?.num();
                Ok(Value::Num(x.max(lo).min(hi)))
            }
            Func::If => {
                if rec(&args[0])?.boolean() {
                    rec(&args[1])
                } else {
                    rec(&args[2])
                }
            }
        },
        Expr::Aggregate(agg, items) => {
            let mut xs = Vec::with_capacity(items.len());
            for item in items {
                xs.push(rec(item)?.num());
            }
            let mean = xs.iter().sum::<f64>() / xs.len() as f64;
            match agg {
                AggFunc::Mean => finite(mean, &|| "mean".to_string()),
                AggFunc::Std => {
                    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / xs.len() as f64;
                    finite(var.sqrt(), &|| "std".to_string())
                }
            }
        }
    }
}

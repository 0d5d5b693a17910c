//! Recursive-descent parser and static type check.
//!
//! Precedence, loosest first: `or`, `and`, `not`, comparisons, `+ -`, `* /`,
//! unary minus, `**` (right-associative). Expressions are typed as number or
//! boolean; mixing them is a parse-time error so the evaluator only ever
//! sees well-typed trees.

use crate::ast::*;
use crate::lexer::{lex, Spanned, Tok};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error, Serialize, Deserialize)]
#[error("parse error at {line}:{col}: {message}")]
pub struct ParseError {
    pub line: u32,
    pub col: u32,
    pub message: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Ty {
    Num,
    Bool,
}

struct Parser {
    tokens: Vec<Spanned>,
    pos: usize,
    names: Vec<String>,
    types: Vec<Ty>,
}

pub fn parse(source: &str) -> Result<(Program, String), ParseError> {
    let out = lex(source)?;
    let mut p = Parser { tokens: out.tokens, pos: 0, names: Vec::new(), types: Vec::new() };
    let program = p.program()?;
    Ok((program, out.thoughts))
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.tokens.get(self.pos).map(|s| &s.tok)
    }

    fn here(&self) -> (u32, u32) {
        self.tokens
            .get(self.pos.min(self.tokens.len().saturating_sub(1)))
            .map(|s| (s.line, s.col))
            .unwrap_or((1, 1))
    }

    fn err(&self, message: impl Into<String>) -> ParseError {
        let (line, col) = self.here();
        ParseError { line, col, message: message.into() }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.tokens.get(self.pos).map(|s| s.tok.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, want: &Tok, what: &str) -> Result<(), ParseError> {
        if self.peek() == Some(want) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {what}")))
        }
    }

    fn program(&mut self) -> Result<Program, ParseError> {
        let mut lets = Vec::new();
        loop {
            match self.peek() {
                Some(Tok::Let) => {
                    self.pos += 1;
                    let name = match self.bump() {
                        Some(Tok::Ident(n)) => n,
                        _ => return Err(self.err("expected identifier after `let`")),
                    };
                    if self.names.contains(&name) {
                        return Err(self.err(format!("`{name}` is already defined")));
                    }
                    self.expect(&Tok::Assign, "`=`")?;
                    let (expr, ty) = self.expr()?;
                    self.expect(&Tok::Semi, "`;` after let binding")?;
                    self.names.push(name.clone());
                    self.types.push(ty);
                    lets.push((name, expr));
                }
                Some(Tok::Return) => {
                    self.pos += 1;
                    let (expr, ty) = self.expr()?;
                    if ty != Ty::Num {
                        return Err(self.err("`return` expression must be numeric"));
                    }
                    self.expect(&Tok::Semi, "`;` after return expression")?;
                    if self.peek().is_some() {
                        return Err(self.err("unexpected tokens after `return` statement"));
                    }
                    return Ok(Program { lets, ret: expr });
                }
                Some(_) => return Err(self.err("expected `let` or `return`")),
                None => return Err(self.err("missing `return` statement")),
            }
        }
    }

    fn expr(&mut self) -> Result<(Expr, Ty), ParseError> {
        self.or_expr()
    }

    fn or_expr(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (mut lhs, mut ty) = self.and_expr()?;
        while self.peek() == Some(&Tok::Or) {
            self.pos += 1;
            let (rhs, rty) = self.and_expr()?;
            if ty != Ty::Bool || rty != Ty::Bool {
                return Err(self.err("`or` needs boolean operands"));
            }
            lhs = Expr::Binary(BinOp::Or, Box::new(lhs), Box::new(rhs));
            ty = Ty::Bool;
        }
        Ok((lhs, ty))
    }

    fn and_expr(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (mut lhs, mut ty) = self.not_expr()?;
        while self.peek() == Some(&Tok::And) {
            self.pos += 1;
            let (rhs, rty) = self.not_expr()?;
            if ty != Ty::Bool || rty != Ty::Bool {
                return Err(self.err("`and` needs boolean operands"));
            }
            lhs = Expr::Binary(BinOp::And, Box::new(lhs), Box::new(rhs));
            ty = Ty::Bool;
        }
        Ok((lhs, ty))
    }

    fn not_expr(&mut self) -> Result<(Expr, Ty), ParseError> {
        if self.peek() == Some(&Tok::Not) {
            self.pos += 1;
            let (inner, ty) = self.not_expr()?;
            if ty != Ty::Bool {
                return Err(self.err("`not` needs a boolean operand"));
            }
            return Ok((Expr::Unary(UnaryOp::Not, Box::new(inner)), Ty::Bool));
        }
        self.comparison()
    }

    fn comparison(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (lhs, lty) = self.additive()?;
        let op = match self.peek() {
            Some(Tok::Lt) => Some(BinOp::Lt),
            Some(Tok::Le) => Some(BinOp::Le),
            Some(Tok::Gt) => Some(BinOp::Gt),
            Some(Tok::Ge) => Some(BinOp::Ge),
            Some(Tok::EqEq) => Some(BinOp::Eq),
            Some(Tok::Ne) => Some(BinOp::Ne),
            _ => None,
        };
        if let Some(op) = op {
            self.pos += 1;
            let (rhs, rty) = self.additive()?;
            if lty != Ty::Num || rty != Ty::Num {
                return Err(self.err("comparisons need numeric operands"));
            }
            return Ok((Expr::Binary(op, Box::new(lhs), Box::new(rhs)), Ty::Bool));
        }
        Ok((lhs, lty))
    }

    fn additive(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (mut lhs, mut ty) = self.multiplicative()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Plus) => BinOp::Add,
                Some(Tok::Minus) => BinOp::Sub,
                _ => break,
            };
            self.pos += 1;
            let (rhs, rty) = self.multiplicative()?;
            if ty != Ty::Num || rty != Ty::Num {
                return Err(self.err("arithmetic needs numeric operands"));
            }
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
            ty = Ty::Num;
        }
        Ok((lhs, ty))
    }

    fn multiplicative(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (mut lhs, mut ty) = self.unary()?;
        loop {
            let op = match self.peek() {
                Some(Tok::Star) => BinOp::Mul,
                Some(Tok::Slash) => BinOp::Div,
                _ => break,
            };
            self.pos += 1;
            let (rhs, rty) = self.unary()?;
            if ty != Ty::Num || rty != Ty::Num {
                return Err(self.err("arithmetic needs numeric operands"));
            }
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
            ty = Ty::Num;
        }
        Ok((lhs, ty))
    }

    fn unary(&mut self) -> Result<(Expr, Ty), ParseError> {
        if self.peek() == Some(&Tok::Minus) {
            self.pos += 1;
            let (inner, ty) = self.unary()?;
            if ty != Ty::Num {
                return Err(self.err("unary `-` needs a numeric operand"));
            }
            return Ok((Expr::Unary(UnaryOp::Neg, Box::new(inner)), Ty::Num));
        }
        self.power()
    }

    fn power(&mut self) -> Result<(Expr, Ty), ParseError> {
        let (base, bty) = self.atom()?;
        if self.peek() == Some(&Tok::StarStar) {
            self.pos += 1;
            // right-associative; `2 ** -3` allows a signed exponent
            let (exp, ety) = self.unary()?;
            if bty != Ty::Num || ety != Ty::Num {
                return Err(self.err("`**` needs numeric operands"));
            }
            return Ok((Expr::Binary(BinOp::Pow, Box::new(base), Box::new(exp)), Ty::Num));
        }
        Ok((base, bty))
    }

    fn state_index(&mut self, what: &str) -> Result<usize, ParseError> {
        self.expect(&Tok::LBracket, "`[`")?;
        let idx = match self.bump() {
            Some(Tok::Number(n)) if n.fract() == 0.0 && (0.0..=5.0).contains(&n) => n as usize,
            Some(Tok::Number(n)) => {
                return Err(self.err(format!(
                    "{what} index {n} out of range; valid indices are 0..=5"
                )))
            }
            _ => return Err(self.err(format!("expected integer index into {what}"))),
        };
        self.expect(&Tok::RBracket, "`]`")?;
        Ok(idx)
    }

    fn atom(&mut self) -> Result<(Expr, Ty), ParseError> {
        match self.peek().cloned() {
            Some(Tok::Number(n)) => {
                self.pos += 1;
                Ok((Expr::Num(n), Ty::Num))
            }
            Some(Tok::Cur) => {
                self.pos += 1;
                Ok((Expr::Cur(self.state_index("cur")?), Ty::Num))
            }
            Some(Tok::Nxt) => {
                self.pos += 1;
                Ok((Expr::Nxt(self.state_index("nxt")?), Ty::Num))
            }
            Some(Tok::Action) => {
                self.pos += 1;
                Ok((Expr::Action, Ty::Num))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let inner = self.expr()?;
                self.expect(&Tok::RParen, "`)`")?;
                Ok(inner)
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                if self.peek() == Some(&Tok::LParen) {
                    self.call(&name)
                } else if let Some(i) = self.names.iter().position(|n| *n == name) {
                    Ok((Expr::Ref(i), self.types[i]))
                } else {
                    Err(self.err(format!("unknown identifier `{name}`")))
                }
            }
            _ => Err(self.err("expected an expression")),
        }
    }

    fn call(&mut self, name: &str) -> Result<(Expr, Ty), ParseError> {
        self.expect(&Tok::LParen, "`(`")?;
        if let Some(agg) = match name {
            "mean" => Some(AggFunc::Mean),
            "std" => Some(AggFunc::Std),
            _ => None,
        } {
            self.expect(&Tok::LBracket, "`[` (mean/std take an explicit bracketed list)")?;
            let mut items = Vec::new();
            loop {
                let (e, ty) = self.expr()?;
                if ty != Ty::Num {
                    return Err(self.err(format!("{name} list items must be numeric")));
                }
                items.push(e);
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.pos += 1;
                    }
                    Some(Tok::RBracket) => break,
                    _ => return Err(self.err("expected `,` or `]` in list")),
                }
            }
            self.expect(&Tok::RBracket, "`]`")?;
            self.expect(&Tok::RParen, "`)`")?;
            if items.is_empty() {
                return Err(self.err(format!("{name} needs at least one list item")));
            }
            return Ok((Expr::Aggregate(agg, items), Ty::Num));
        }

        let func = match name {
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            "sqrt" => Func::Sqrt,
            "clamp" => Func::Clamp,
            "if" => Func::If,
            other => return Err(self.err(format!("unknown function `{other}`"))),
        };
        let mut args = Vec::new();
        let mut arg_types = Vec::new();
        if self.peek() != Some(&Tok::RParen) {
            loop {
                let (e, ty) = self.expr()?;
                args.push(e);
                arg_types.push(ty);
                match self.peek() {
                    Some(Tok::Comma) => {
                        self.pos += 1;
                    }
                    _ => break,
                }
            }
        }
        self.expect(&Tok::RParen, "`)`")?;

        let ty = match func {
            Func::Abs | Func::Sqrt => {
                if args.len() != 1 || arg_types[0] != Ty::Num {
                    return Err(self.err(format!("{name} takes one numeric argument")));
                }
                Ty::Num
            }
            Func::Min | Func::Max => {
                if args.len() < 2 || arg_types.iter().any(|t| *t != Ty::Num) {
                    return Err(self.err(format!("{name} takes two or more numeric arguments")));
                }
                Ty::Num
            }
            Func::Clamp => {
                if args.len() != 3 || arg_types.iter().any(|t| *t != Ty::Num) {
                    return Err(self.err("clamp takes (value, low, high)"));
                }
                Ty::Num
            }
            Func::If => {
                if args.len() != 3 {
                    return Err(self.err("if takes (condition, then, else)"));
                }
                if arg_types[0] != Ty::Bool {
                    return Err(self.err("if condition must be boolean"));
                }
                if arg_types[1] != arg_types[2] {
                    return Err(self.err("if branches must have the same type"));
                }
                arg_types[1]
            }
        };
        Ok((Expr::Call(func, args), ty))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ok(src: &str) -> Program {
        parse(src).unwrap().0
    }

    fn fail(src: &str) -> ParseError {
        parse(src).unwrap_err()
    }

    #[test]
    fn precedence_binds_mul_over_add() {
        let p = ok("return 1 + 2 * 3;");
        assert_eq!(
            p.ret,
            Expr::Binary(
                BinOp::Add,
                Box::new(Expr::Num(1.0)),
                Box::new(Expr::Binary(
                    BinOp::Mul,
                    Box::new(Expr::Num(2.0)),
                    Box::new(Expr::Num(3.0))
                ))
            )
        );
    }

    #[test]
    fn power_is_right_associative() {
        let p = ok("return 2 ** 3 ** 2;");
        let Expr::Binary(BinOp::Pow, _, rhs) = &p.ret else { panic!() };
        assert!(matches!(**rhs, Expr::Binary(BinOp::Pow, _, _)));
    }

    #[test]
    fn unary_minus_applies_to_whole_power() {
        // -x ** 2 parses as -(x ** 2)
        let p = ok("return -cur[0] ** 2;");
        assert!(matches!(p.ret, Expr::Unary(UnaryOp::Neg, _)));
    }

    #[test]
    fn let_bindings_resolve_in_order() {
        let p = ok("let a = 1;\nlet b = a + 1;\nreturn b;");
        assert_eq!(p.lets.len(), 2);
        assert_eq!(p.ret, Expr::Ref(1));
    }

    #[test]
    fn forward_reference_is_rejected() {
        let e = fail("let a = b; let b = 1; return a;");
        assert!(e.message.contains("unknown identifier"));
    }

    #[test]
    fn duplicate_binding_is_rejected() {
        let e = fail("let a = 1; let a = 2; return a;");
        assert!(e.message.contains("already defined"));
    }

    #[test]
    fn boolean_in_arithmetic_is_a_type_error() {
        let e = fail("return 1 + (2 > 1);");
        assert!(e.message.contains("numeric"));
    }

    #[test]
    fn returning_a_boolean_is_rejected() {
        let e = fail("return 1 > 0;");
        assert!(e.message.contains("numeric"));
    }

    #[test]
    fn arity_mismatch_is_reported() {
        let e = fail("return clamp(1, 2);");
        assert!(e.message.contains("clamp"));
    }

    #[test]
    fn aggregate_needs_bracketed_list() {
        assert!(parse("return std([cur[0], cur[1]]);").is_ok());
        let e = fail("return std(cur[0], cur[1]);");
        assert!(e.message.contains("bracketed"));
    }

    #[test]
    fn error_positions_point_at_the_problem() {
        let e = fail("let a = 1;\nreturn nope;");
        assert_eq!(e.line, 2);
        assert!(e.col >= 8);
    }

    #[test]
    fn trailing_garbage_is_rejected() {
        let e = fail("return 0; return 1;");
        assert!(e.message.contains("unexpected tokens"));
    }
}

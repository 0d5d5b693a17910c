//! Canonical formatter. Minimal parentheses: a child is wrapped only when
//! its precedence requires it, so parse(print(parse(s))) is structurally
//! identical to parse(s).

use crate::ast::*;

pub fn print(program: &Program, thoughts: &str) -> String {
    let mut out = String::new();
    for line in thoughts.lines() {
        if line.is_empty() {
            out.push_str("#\n");
        } else {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
    }
    for (name, expr) in &program.lets {
        out.push_str("let ");
        out.push_str(name);
        out.push_str(" = ");
        write_expr(&mut out, expr, program);
        out.push_str(";\n");
    }
    out.push_str("return ");
    write_expr(&mut out, &program.ret, program);
    out.push_str(";\n");
    out
}

/// Binding strength; higher binds tighter.
fn prec(expr: &Expr) -> u8 {
    match expr {
        Expr::Binary(BinOp::Or, ..) => 1,
        Expr::Binary(BinOp::And, ..) => 2,
        Expr::Unary(UnaryOp::Not, _) => 3,
        Expr::Binary(
            BinOp::Lt | BinOp::Le | BinOp::Gt | BinOp::Ge | BinOp::Eq | BinOp::Ne,
            ..,
        ) => 4,
        Expr::Binary(BinOp::Add | BinOp::Sub, ..) => 5,
        Expr::Binary(BinOp::Mul | BinOp::Div, ..) => 6,
        Expr::Unary(UnaryOp::Neg, _) => 7,
        Expr::Binary(BinOp::Pow, ..) => 8,
        _ => 9,
    }
}

fn write_child(out: &mut String, child: &Expr, program: &Program, min_prec: u8) {
    if prec(child) < min_prec {
        out.push('(');
        write_expr(out, child, program);
        out.push(')');
    } else {
        write_expr(out, child, program);
    }
}

fn write_expr(out: &mut String, expr: &Expr, program: &Program) {
    match expr {
        Expr::Num(n) => out.push_str(&format_number(*n)),
        Expr::Cur(i) => out.push_str(&format!("cur[{i}]")),
        Expr::Nxt(i) => out.push_str(&format!("nxt[{i}]")),
        Expr::Action => out.push_str("action"),
        Expr::Ref(i) => out.push_str(&program.lets[*i].0),
        Expr::Unary(op, inner) => {
            let p = prec(expr);
            match op {
                UnaryOp::Neg => {
                    out.push('-');
                    // for Neg the operand must bind at least as tightly,
                    // except `**` which unary minus distributes over
                    write_child(out, inner, program, p + 1);
                }
                UnaryOp::Not => {
                    out.push_str("not ");
                    write_child(out, inner, program, p);
                }
            }
        }
        Expr::Binary(op, l, r) => {
            let p = prec(expr);
            match op {
                // right-associative
                BinOp::Pow => {
                    write_child(out, l, program, p + 1);
                    out.push_str(" ** ");
                    write_child(out, r, program, p);
                }
                _ => {
                    write_child(out, l, program, p);
                    out.push(' ');
                    out.push_str(op.symbol());
                    out.push(' ');
                    write_child(out, r, program, p + 1);
                }
            }
        }
        Expr::Call(func, args) => {
            out.push_str(func.name());
            out.push('(');
            for (i, a) in args.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, a, program);
            }
            out.push(')');
        }
        Expr::Aggregate(agg, items) => {
            out.push_str(agg.name());
            out.push_str("([");
            for (i, item) in items.iter().enumerate() {
                if i > 0 {
                    out.push_str(", ");
                }
                write_expr(out, item, program);
            }
            out.push_str("])");
        }
    }
}

fn format_number(n: f64) -> String {
    if n == n.trunc() && n.abs() < 1e15 {
        format!("{}", n as i64)
    } else {
        format!("{n}")
    }
}

#[cfg(test)]
mod tests {
    use crate::RewardProgram;

    fn round_trip(src: &str) {
        let p = RewardProgram::parse(src).unwrap();
        let printed = p.pretty_print();
        let again = RewardProgram::parse(&printed).unwrap();
        assert!(p.same_structure(&again), "round trip changed structure:\n{printed}");
        // a second print is a fixed point
        assert_eq!(printed, again.pretty_print());
    }

    #[test]
    fn round_trips_preserve_structure() {
        round_trip("return 0;");
        round_trip("return (1 + 2) * 3 - 4 / (5 - 6);");
        round_trip("return -(2 ** 3) ** 2;");
        round_trip("return -2 ** 3 ** 2;");
        round_trip("let a = if(cur[0] > 0 or nxt[3] <= 1, min(1, 2, 3), std([1, 2]));\nreturn a * a;");
        round_trip("# thoughts here\nlet x = clamp(cur[5] - nxt[5], 0, 90);\nreturn if(not (x > 5) and x < 2 or x == 0, 1, 0);");
    }

    #[test]
    fn thoughts_survive_printing() {
        let p = RewardProgram::parse("# keep headways balanced\n# and avoid long holds\nreturn 0;")
            .unwrap();
        let printed = p.pretty_print();
        let again = RewardProgram::parse(&printed).unwrap();
        assert_eq!(again.thoughts, "keep headways balanced\nand avoid long holds");
    }
}

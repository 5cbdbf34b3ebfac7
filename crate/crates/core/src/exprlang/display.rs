use std::fmt;

use super::{BinOp, CoordinateChart, Expr, Node, Var};

/// Formats an expression in the input grammar, with the minimum number of
/// parentheses needed to re-parse to the same tree.
pub struct DisplayExpr<'a> {
    expr: &'a Expr,
    chart: Option<&'a CoordinateChart>,
}

impl<'a> DisplayExpr<'a> {
    /// Uses `x1, x2, ...` for coordinates.
    pub fn generic(expr: &'a Expr) -> Self {
        Self { expr, chart: None }
    }
}

impl Expr {
    pub fn display<'a>(&'a self, chart: &'a CoordinateChart) -> DisplayExpr<'a> {
        DisplayExpr {
            expr: self,
            chart: Some(chart),
        }
    }
}

const PREC_ADD: u8 = 1;
const PREC_MUL: u8 = 2;
const PREC_NEG: u8 = 3;
const PREC_POW: u8 = 4;
const PREC_ATOM: u8 = 5;

fn precedence(e: &Expr) -> u8 {
    match e.node() {
        Node::Const(c) if c.is_sign_negative() => PREC_NEG,
        Node::Const(_) | Node::Var(_) | Node::Call(..) => PREC_ATOM,
        Node::Neg(_) => PREC_NEG,
        Node::Binary(BinOp::Add | BinOp::Sub, ..) => PREC_ADD,
        Node::Binary(BinOp::Mul | BinOp::Div, ..) => PREC_MUL,
        Node::Binary(BinOp::Pow, ..) => PREC_POW,
    }
}

impl DisplayExpr<'_> {
    fn write(&self, e: &Expr, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match e.node() {
            Node::Const(c) => {
                if c.is_sign_negative() {
                    write!(f, "-{}", -c)
                } else {
                    write!(f, "{c}")
                }
            }
            Node::Var(Var::Time) => f.write_str("t"),
            Node::Var(Var::Coord(i)) => match self.chart {
                Some(chart) if *i < chart.dim() => f.write_str(chart.name(*i)),
                _ => write!(f, "x{}", i + 1),
            },
            Node::Neg(a) => {
                f.write_str("-")?;
                self.child(a, precedence(a) < PREC_NEG, f)
            }
            Node::Call(func, a) => {
                write!(f, "{}(", func.name())?;
                self.write(a, f)?;
                f.write_str(")")
            }
            Node::Binary(op, a, b) => {
                let (prec, symbol) = match op {
                    BinOp::Add => (PREC_ADD, "+"),
                    BinOp::Sub => (PREC_ADD, "-"),
                    BinOp::Mul => (PREC_MUL, "*"),
                    BinOp::Div => (PREC_MUL, "/"),
                    BinOp::Pow => (PREC_POW, "^"),
                };
                if *op == BinOp::Pow {
                    // base is an atom; the exponent is a factor, so a unary
                    // minus there needs no parentheses.
                    self.child(a, precedence(a) < PREC_ATOM, f)?;
                    f.write_str(symbol)?;
                    self.child(b, precedence(b) < PREC_NEG, f)
                } else {
                    // A leading minus on the left operand binds tighter than
                    // * and /, so it only needs parentheses below that level.
                    self.child(a, precedence(a) < prec, f)?;
                    f.write_str(symbol)?;
                    self.child(b, precedence(b) <= prec, f)
                }
            }
        }
    }

    fn child(&self, e: &Expr, parens: bool, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if parens {
            f.write_str("(")?;
            self.write(e, f)?;
            f.write_str(")")
        } else {
            self.write(e, f)
        }
    }
}

impl fmt::Display for DisplayExpr<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(self.expr, f)
    }
}

#[cfg(test)]
mod tests {
    use super::super::parse;
    use super::*;

    #[test]
    fn minimal_parentheses() {
        let chart = CoordinateChart::canonical(2).unwrap();
        for text in [
            "p1^2/2+q1^2/2",
            "cos(q1*q2)*q2",
            "-(q1+q2)",
            "q1-q2-(p1-p2)",
            "q1^p1^2",
            "(q1^p1)^2",
            "(-q1)^2",
            "-q1^2",
            "q1^-2",
            "q1/(q2*p1)",
            "-q1*q2",
            "exp(-t)",
        ] {
            let e = parse(text, &chart).unwrap();
            assert_eq!(e.display(&chart).to_string(), text);
        }
    }

    #[test]
    fn negative_constants_reparse() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let e = Expr::coord(0)
            .mul(&Expr::constant(-2.5))
            .add(&Expr::constant(-1.0));
        let text = e.display(&chart).to_string();
        let back = parse(&text, &chart).unwrap();
        assert_eq!(back.eval(&[3.0, 0.0], 0.0), e.eval(&[3.0, 0.0], 0.0));
    }
}

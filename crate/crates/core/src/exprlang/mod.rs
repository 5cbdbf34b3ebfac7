//! Scalar expressions over phase-space coordinates and time.
//!
//! Expressions are immutable trees behind [`Arc`], so cloning is cheap and
//! subtrees produced by differentiation are shared rather than copied. The
//! smart constructors ([`Expr::add`], [`Expr::mul`], ...) apply a small, fixed
//! set of simplifications: constant folding and the identities `x+0`, `x*1`,
//! `x*0`, `x^1`, `x^0`. Nothing else is rewritten implicitly; polynomial
//! expressions can be normalized on request with [`Expr::expand_polynomial`].

mod chart;
mod diff;
mod display;
mod parse;
mod poly;

use std::collections::HashSet;
use std::fmt;
use std::sync::Arc;

pub use chart::{ChartError, CoordinateChart};
pub use display::DisplayExpr;
pub use parse::{parse, ParseError};

/// A variable reference: a chart coordinate by index, or time.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Var {
    Coord(usize),
    Time,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Sqrt,
    Tanh,
}

impl Func {
    pub const ALL: [Func; 6] = [
        Func::Sin,
        Func::Cos,
        Func::Exp,
        Func::Log,
        Func::Sqrt,
        Func::Tanh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Sqrt => "sqrt",
            Func::Tanh => "tanh",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Func::ALL.into_iter().find(|f| f.name() == name)
    }

    /// Applies the function, returning `None` outside its real domain.
    fn apply(self, x: f64) -> Option<f64> {
        let value = match self {
            Func::Sin => x.sin(),
            Func::Cos => x.cos(),
            Func::Exp => x.exp(),
            Func::Log if x <= 0.0 => return None,
            Func::Log => x.ln(),
            Func::Sqrt if x < 0.0 => return None,
            Func::Sqrt => x.sqrt(),
            Func::Tanh => x.tanh(),
        };
        (!value.is_nan()).then_some(value)
    }
}

#[derive(Debug, PartialEq)]
pub enum Node {
    Const(f64),
    Var(Var),
    Neg(Expr),
    Binary(BinOp, Expr, Expr),
    Call(Func, Expr),
}

/// Immutable expression tree.
#[derive(Clone, PartialEq)]
pub struct Expr(Arc<Node>);

/// Evaluation failure at a specific node.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("domain error in `{node:?}`: {reason} (argument {argument})")]
    Domain {
        node: Expr,
        reason: &'static str,
        argument: f64,
    },
    #[error("coordinate index {index} out of range for a point of dimension {dim}")]
    MissingCoordinate { index: usize, dim: usize },
}

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        Self::from_node(Node::Const(value))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn var(var: Var) -> Self {
        Self::from_node(Node::Var(var))
    }

    pub fn coord(index: usize) -> Self {
        Self::var(Var::Coord(index))
    }

    pub fn time() -> Self {
        Self::var(Var::Time)
    }

    /// Builds a node without any simplification (used by the parser so the
    /// tree mirrors the source text).
    pub fn raw_binary(op: BinOp, lhs: Expr, rhs: Expr) -> Self {
        Self::from_node(Node::Binary(op, lhs, rhs))
    }

    pub fn raw_neg(arg: Expr) -> Self {
        Self::from_node(Node::Neg(arg))
    }

    pub fn raw_call(func: Func, arg: Expr) -> Self {
        Self::from_node(Node::Call(func, arg))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_const_value(&self, value: f64) -> bool {
        self.as_const() == Some(value)
    }

    pub fn is_zero(&self) -> bool {
        self.is_const_value(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.is_const_value(1.0)
    }

    pub fn neg(&self) -> Expr {
        match self.node() {
            Node::Const(c) => Expr::constant(-c),
            Node::Neg(inner) => inner.clone(),
            _ => Expr::raw_neg(self.clone()),
        }
    }

    pub fn add(&self, rhs: &Expr) -> Expr {
        if let Some(v) = fold(self, rhs, |a, b| a + b) {
            return v;
        }
        if self.is_zero() {
            return rhs.clone();
        }
        if rhs.is_zero() {
            return self.clone();
        }
        Expr::raw_binary(BinOp::Add, self.clone(), rhs.clone())
    }

    pub fn sub(&self, rhs: &Expr) -> Expr {
        if let Some(v) = fold(self, rhs, |a, b| a - b) {
            return v;
        }
        if rhs.is_zero() {
            return self.clone();
        }
        if self.is_zero() {
            return rhs.neg();
        }
        Expr::raw_binary(BinOp::Sub, self.clone(), rhs.clone())
    }

    pub fn mul(&self, rhs: &Expr) -> Expr {
        if let Some(v) = fold(self, rhs, |a, b| a * b) {
            return v;
        }
        if self.is_zero() || rhs.is_zero() {
            return Expr::zero();
        }
        if self.is_one() {
            return rhs.clone();
        }
        if rhs.is_one() {
            return self.clone();
        }
        // Constant coefficients are kept on the left and merged.
        let (coef, other) = match (self.as_const(), rhs.as_const()) {
            (Some(c), None) => (c, rhs),
            (None, Some(c)) => (c, self),
            _ => return Expr::raw_binary(BinOp::Mul, self.clone(), rhs.clone()),
        };
        if let Node::Binary(BinOp::Mul, inner_lhs, inner_rhs) = other.node() {
            if let Some(inner) = inner_lhs.as_const() {
                return Expr::constant(coef * inner).mul(inner_rhs);
            }
        }
        if coef == -1.0 {
            return other.neg();
        }
        Expr::raw_binary(BinOp::Mul, Expr::constant(coef), other.clone())
    }

    pub fn div(&self, rhs: &Expr) -> Expr {
        if rhs.as_const().is_some_and(|c| c != 0.0) {
            if let Some(v) = fold(self, rhs, |a, b| a / b) {
                return v;
            }
        }
        if rhs.is_one() {
            return self.clone();
        }
        if let (Some(d), Node::Binary(BinOp::Mul, lhs, rest)) = (rhs.as_const(), self.node()) {
            if d != 0.0 {
                if let Some(c) = lhs.as_const() {
                    return Expr::constant(c / d).mul(rest);
                }
            }
        }
        if self.is_zero() && rhs.as_const().is_some_and(|c| c != 0.0) {
            return Expr::zero();
        }
        Expr::raw_binary(BinOp::Div, self.clone(), rhs.clone())
    }

    pub fn pow(&self, rhs: &Expr) -> Expr {
        if let Some(v) = fold(self, rhs, f64::powf) {
            return v;
        }
        if rhs.is_one() {
            return self.clone();
        }
        if rhs.is_zero() || self.is_one() {
            return Expr::one();
        }
        Expr::raw_binary(BinOp::Pow, self.clone(), rhs.clone())
    }

    pub fn powi(&self, exponent: i32) -> Expr {
        self.pow(&Expr::constant(exponent as f64))
    }

    pub fn call(func: Func, arg: &Expr) -> Expr {
        if let Some(value) = arg.as_const().and_then(|c| func.apply(c)) {
            if value.is_finite() {
                return Expr::constant(value);
            }
        }
        Expr::raw_call(func, arg.clone())
    }

    pub fn sin(&self) -> Expr {
        Expr::call(Func::Sin, self)
    }

    pub fn cos(&self) -> Expr {
        Expr::call(Func::Cos, self)
    }

    pub fn exp(&self) -> Expr {
        Expr::call(Func::Exp, self)
    }

    pub fn ln(&self) -> Expr {
        Expr::call(Func::Log, self)
    }

    pub fn sqrt(&self) -> Expr {
        Expr::call(Func::Sqrt, self)
    }

    pub fn tanh(&self) -> Expr {
        Expr::call(Func::Tanh, self)
    }

    /// Sum of a sequence of expressions (zero when empty).
    pub fn sum<'a, I: IntoIterator<Item = &'a Expr>>(terms: I) -> Expr {
        terms
            .into_iter()
            .fold(Expr::zero(), |acc, term| acc.add(term))
    }

    pub fn eval_at(&self, x: &crate::PhasePoint) -> Result<f64, EvalError> {
        self.eval(&x.coords, x.time)
    }

    /// Evaluates with coordinates `coords` and time `t`.
    pub fn eval(&self, coords: &[f64], t: f64) -> Result<f64, EvalError> {
        match self.node() {
            Node::Const(c) => Ok(*c),
            Node::Var(Var::Time) => Ok(t),
            Node::Var(Var::Coord(i)) => {
                coords.get(*i).copied().ok_or(EvalError::MissingCoordinate {
                    index: *i,
                    dim: coords.len(),
                })
            }
            Node::Neg(a) => Ok(-a.eval(coords, t)?),
            Node::Binary(op, a, b) => {
                let x = a.eval(coords, t)?;
                let y = b.eval(coords, t)?;
                match op {
                    BinOp::Add => Ok(x + y),
                    BinOp::Sub => Ok(x - y),
                    BinOp::Mul => Ok(x * y),
                    BinOp::Div if y == 0.0 => Err(self.domain("division by zero", y)),
                    BinOp::Div => Ok(x / y),
                    BinOp::Pow => {
                        let value = x.powf(y);
                        if value.is_nan() {
                            Err(self.domain("power undefined for these operands", x))
                        } else if x == 0.0 && y < 0.0 {
                            Err(self.domain("zero raised to a negative power", x))
                        } else {
                            Ok(value)
                        }
                    }
                }
            }
            Node::Call(func, a) => {
                let x = a.eval(coords, t)?;
                func.apply(x).ok_or_else(|| {
                    self.domain(
                        match func {
                            Func::Log => "log of a non-positive value",
                            Func::Sqrt => "sqrt of a negative value",
                            _ => "function undefined at argument",
                        },
                        x,
                    )
                })
            }
        }
    }

    fn domain(&self, reason: &'static str, argument: f64) -> EvalError {
        EvalError::Domain {
            node: self.clone(),
            reason,
            argument,
        }
    }

    /// True when the tree references no variables at all.
    pub fn is_constant(&self) -> bool {
        match self.node() {
            Node::Const(_) => true,
            Node::Var(_) => false,
            Node::Neg(a) | Node::Call(_, a) => a.is_constant(),
            Node::Binary(_, a, b) => a.is_constant() && b.is_constant(),
        }
    }

    pub fn contains_var(&self, var: Var) -> bool {
        match self.node() {
            Node::Const(_) => false,
            Node::Var(v) => *v == var,
            Node::Neg(a) | Node::Call(_, a) => a.contains_var(var),
            Node::Binary(_, a, b) => a.contains_var(var) || b.contains_var(var),
        }
    }

    pub fn contains_time(&self) -> bool {
        self.contains_var(Var::Time)
    }

    /// Set of variables referenced by the tree.
    pub fn variables(&self) -> HashSet<Var> {
        let mut out = HashSet::new();
        self.collect_vars(&mut out);
        out
    }

    fn collect_vars(&self, out: &mut HashSet<Var>) {
        match self.node() {
            Node::Const(_) => {}
            Node::Var(v) => {
                out.insert(*v);
            }
            Node::Neg(a) | Node::Call(_, a) => a.collect_vars(out),
            Node::Binary(_, a, b) => {
                a.collect_vars(out);
                b.collect_vars(out);
            }
        }
    }

    /// Number of distinct nodes in the underlying DAG.
    pub fn node_count(&self) -> usize {
        let mut seen = HashSet::new();
        self.count_into(&mut seen);
        seen.len()
    }

    pub(crate) fn count_into(&self, seen: &mut HashSet<*const Node>) {
        if !seen.insert(Arc::as_ptr(&self.0)) {
            return;
        }
        match self.node() {
            Node::Const(_) | Node::Var(_) => {}
            Node::Neg(a) | Node::Call(_, a) => a.count_into(seen),
            Node::Binary(_, a, b) => {
                a.count_into(seen);
                b.count_into(seen);
            }
        }
    }

    pub(crate) fn ptr(&self) -> *const Node {
        Arc::as_ptr(&self.0)
    }
}

fn fold(a: &Expr, b: &Expr, op: impl Fn(f64, f64) -> f64) -> Option<Expr> {
    let value = op(a.as_const()?, b.as_const()?);
    value.is_finite().then(|| Expr::constant(value))
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", DisplayExpr::generic(self))
    }
}

impl From<f64> for Expr {
    fn from(value: f64) -> Self {
        Expr::constant(value)
    }
}

macro_rules! impl_op {
    ($trait:ident, $method:ident, $inherent:ident) => {
        impl std::ops::$trait<&Expr> for &Expr {
            type Output = Expr;
            fn $method(self, rhs: &Expr) -> Expr {
                Expr::$inherent(self, rhs)
            }
        }
        impl std::ops::$trait<Expr> for Expr {
            type Output = Expr;
            fn $method(self, rhs: Expr) -> Expr {
                Expr::$inherent(&self, &rhs)
            }
        }
        impl std::ops::$trait<f64> for Expr {
            type Output = Expr;
            fn $method(self, rhs: f64) -> Expr {
                Expr::$inherent(&self, &Expr::constant(rhs))
            }
        }
    };
}

impl_op!(Add, add, add);
impl_op!(Sub, sub, sub);
impl_op!(Mul, mul, mul);
impl_op!(Div, div, div);

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(&self)
    }
}

impl std::ops::Neg for &Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

//! Expansion of polynomial expressions into a sum of monomials.
//!
//! Repeated differentiation of products grows trees quickly even when the
//! value is a low-degree polynomial; expanding collects like terms so the size
//! is bounded by the number of distinct monomials.

use std::collections::{BTreeMap, HashMap};

use super::{BinOp, Expr, Node, Var};

/// Exponents of each coordinate followed by the exponent of `t`.
type Monomial = Vec<u32>;

/// Largest integer power expanded; higher powers are left symbolic.
const MAX_POWER: u32 = 64;

#[derive(Debug, Clone, PartialEq)]
struct Polynomial {
    terms: BTreeMap<Monomial, f64>,
}

impl Polynomial {
    fn constant(width: usize, c: f64) -> Self {
        let mut terms = BTreeMap::new();
        if c != 0.0 {
            terms.insert(vec![0; width], c);
        }
        Self { terms }
    }

    fn variable(width: usize, slot: usize) -> Self {
        let mut m = vec![0; width];
        m[slot] = 1;
        Self {
            terms: BTreeMap::from([(m, 1.0)]),
        }
    }

    fn as_constant(&self) -> Option<f64> {
        match self.terms.len() {
            0 => Some(0.0),
            1 => {
                let (m, c) = self.terms.iter().next()?;
                m.iter().all(|&e| e == 0).then_some(*c)
            }
            _ => None,
        }
    }

    fn add_scaled(&mut self, other: &Polynomial, factor: f64) {
        for (m, c) in &other.terms {
            let entry = self.terms.entry(m.clone()).or_insert(0.0);
            *entry += factor * c;
            if *entry == 0.0 {
                self.terms.remove(m);
            }
        }
    }

    fn scale(&self, factor: f64) -> Polynomial {
        if factor == 0.0 {
            return Polynomial {
                terms: BTreeMap::new(),
            };
        }
        Polynomial {
            terms: self
                .terms
                .iter()
                .map(|(m, c)| (m.clone(), c * factor))
                .collect(),
        }
    }

    fn mul(&self, other: &Polynomial) -> Polynomial {
        let mut terms = BTreeMap::new();
        for (ma, ca) in &self.terms {
            for (mb, cb) in &other.terms {
                let m: Monomial = ma.iter().zip(mb).map(|(a, b)| a + b).collect();
                *terms.entry(m).or_insert(0.0) += ca * cb;
            }
        }
        terms.retain(|_, c| *c != 0.0);
        Polynomial { terms }
    }

    fn powi(&self, mut exponent: u32, width: usize) -> Polynomial {
        let mut result = Polynomial::constant(width, 1.0);
        let mut base = self.clone();
        while exponent > 0 {
            if exponent & 1 == 1 {
                result = result.mul(&base);
            }
            exponent >>= 1;
            if exponent > 0 {
                base = base.mul(&base);
            }
        }
        result
    }

    fn to_expr(&self) -> Expr {
        let width = self.terms.keys().next().map_or(0, Vec::len);
        let terms: Vec<Expr> = self
            .terms
            .iter()
            .map(|(m, c)| {
                let factors = m
                    .iter()
                    .enumerate()
                    .filter(|(_, &e)| e > 0)
                    .map(|(slot, &e)| {
                        let var = if slot + 1 == width {
                            Expr::time()
                        } else {
                            Expr::coord(slot)
                        };
                        var.powi(e as i32)
                    });
                let product = factors.fold(Expr::one(), |acc, f| acc.mul(&f));
                Expr::constant(*c).mul(&product)
            })
            .collect();
        Expr::sum(&terms)
    }
}

struct Expander {
    width: usize,
    memo: HashMap<*const Node, Option<Polynomial>>,
}

impl Expander {
    fn expand(&mut self, e: &Expr) -> Option<Polynomial> {
        let key = std::sync::Arc::as_ptr(&e.0);
        if let Some(hit) = self.memo.get(&key) {
            return hit.clone();
        }
        let out = self.expand_node(e);
        self.memo.insert(key, out.clone());
        out
    }

    fn expand_node(&mut self, e: &Expr) -> Option<Polynomial> {
        let w = self.width;
        Some(match e.node() {
            Node::Const(c) => Polynomial::constant(w, *c),
            Node::Var(Var::Coord(i)) => Polynomial::variable(w, *i),
            Node::Var(Var::Time) => Polynomial::variable(w, w - 1),
            Node::Neg(a) => self.expand(a)?.scale(-1.0),
            Node::Call(..) => return None,
            Node::Binary(op, a, b) => {
                let pa = self.expand(a)?;
                match op {
                    BinOp::Add | BinOp::Sub => {
                        let pb = self.expand(b)?;
                        let mut out = pa;
                        out.add_scaled(&pb, if *op == BinOp::Add { 1.0 } else { -1.0 });
                        out
                    }
                    BinOp::Mul => pa.mul(&self.expand(b)?),
                    BinOp::Div => {
                        let d = self.expand(b)?.as_constant()?;
                        if d == 0.0 {
                            return None;
                        }
                        pa.scale(1.0 / d)
                    }
                    BinOp::Pow => {
                        let p = b.as_const()?;
                        if p < 0.0 || p.fract() != 0.0 || p > MAX_POWER as f64 {
                            return None;
                        }
                        pa.powi(p as u32, w)
                    }
                }
            }
        })
    }
}

impl Expr {
    /// The expression as a sum of monomials with like terms collected, or
    /// `None` when it is not a polynomial in the coordinates and `t`.
    pub fn to_polynomial(&self) -> Option<Expr> {
        let width = self
            .variables()
            .iter()
            .filter_map(|v| match v {
                Var::Coord(i) => Some(i + 1),
                Var::Time => None,
            })
            .max()
            .unwrap_or(0)
            + 1;
        let mut expander = Expander {
            width,
            memo: HashMap::new(),
        };
        expander.expand(self).map(|p| p.to_expr())
    }

    /// [`Expr::to_polynomial`] when it applies, otherwise a clone.
    pub fn expand_polynomial(&self) -> Expr {
        self.to_polynomial().unwrap_or_else(|| self.clone())
    }
}

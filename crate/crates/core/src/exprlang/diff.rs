use std::collections::HashMap;

use super::{BinOp, Expr, Func, Node, Var};

impl Expr {
    /// Exact symbolic derivative with respect to `var`.
    pub fn differentiate(&self, var: Var) -> Expr {
        let mut memo = HashMap::new();
        derive(self, var, &mut memo)
    }

    /// Derivative with respect to coordinate `index`.
    pub fn d(&self, index: usize) -> Expr {
        self.differentiate(Var::Coord(index))
    }

    /// Derivative with respect to time.
    pub fn dt(&self) -> Expr {
        self.differentiate(Var::Time)
    }

    /// Gradient over the first `dim` coordinates.
    pub fn gradient(&self, dim: usize) -> Vec<Expr> {
        (0..dim).map(|k| self.d(k)).collect()
    }
}

// Memoised on node identity so shared subtrees are differentiated once.
fn derive(e: &Expr, var: Var, memo: &mut HashMap<*const Node, Expr>) -> Expr {
    if let Some(done) = memo.get(&e.ptr()) {
        return done.clone();
    }
    let out = match e.node() {
        Node::Const(_) => Expr::zero(),
        Node::Var(v) => {
            if *v == var {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => derive(a, var, memo).neg(),
        Node::Binary(op, a, b) => {
            let da = derive(a, var, memo);
            let db = derive(b, var, memo);
            match op {
                BinOp::Add => da.add(&db),
                BinOp::Sub => da.sub(&db),
                BinOp::Mul => da.mul(b).add(&a.mul(&db)),
                BinOp::Div => {
                    if db.is_zero() {
                        da.div(b)
                    } else {
                        da.mul(b).sub(&a.mul(&db)).div(&b.powi(2))
                    }
                }
                BinOp::Pow => {
                    if db.is_zero() {
                        // b * a^(b-1) * a'
                        b.mul(&a.pow(&b.sub(&Expr::one()))).mul(&da)
                    } else if da.is_zero() {
                        // a^b * ln(a) * b'
                        e.mul(&a.ln()).mul(&db)
                    } else {
                        e.mul(&db.mul(&a.ln()).add(&b.mul(&da).div(a)))
                    }
                }
            }
        }
        Node::Call(func, a) => {
            let da = derive(a, var, memo);
            if da.is_zero() {
                Expr::zero()
            } else {
                let outer = match func {
                    Func::Sin => a.cos(),
                    Func::Cos => a.sin().neg(),
                    Func::Exp => e.clone(),
                    Func::Log => Expr::one().div(a),
                    Func::Sqrt => Expr::one().div(&Expr::constant(2.0).mul(e)),
                    Func::Tanh => Expr::one().sub(&e.powi(2)),
                };
                outer.mul(&da)
            }
        }
    };
    memo.insert(e.ptr(), out.clone());
    out
}

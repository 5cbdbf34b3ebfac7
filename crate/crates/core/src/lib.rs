//! Invariant skew-symmetric phase-space metrics for non-Hamiltonian systems.
//!
//! A dynamical system `dx/dt = X(x)` on a 2n-dimensional phase space is
//! paired with a skew-symmetric metric field `ω_kl(x, t)`. The crate
//!
//! * classifies systems as Hamiltonian or not by the closedness of the
//!   contracted 1-form `ω(X)` ([`helmholtz`]),
//! * evolves a metric so that it becomes an integral of motion, by an
//!   operator-exponential series, by Strang splitting, and by transport
//!   along the flow ([`evolution`]),
//! * evaluates generalized Poisson brackets and their time-derivative
//!   defect with respect to any such metric ([`brackets`]),
//! * provides closed forms for linear friction ([`friction`]).
//!
//! Expressions are written in a small grammar ([`exprlang`]) and
//! differentiated symbolically, so all partial derivatives in the residual
//! formulas are exact.

pub mod brackets;
pub mod dynamics;
mod error;
pub mod evolution;
pub mod exprlang;
pub mod friction;
pub mod helmholtz;
pub mod linalg;
pub mod phasespace;
pub mod quadrature;
pub mod sampling;

pub use error::{Error, Result};
pub use exprlang::{parse, CoordinateChart, Expr};
pub use phasespace::{MetricField, MetricSource, PhasePoint};

//! Deterministic sample points.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{Expr, PhasePoint};

/// Box and count for random phase-space samples.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SampleSpec {
    pub count: usize,
    pub seed: u64,
    /// Coordinates are drawn uniformly from `[-half_width, half_width]`.
    pub half_width: f64,
    /// When set, the origin is prepended to the draws.
    pub include_origin: bool,
}

impl Default for SampleSpec {
    fn default() -> Self {
        Self {
            count: 50,
            seed: 0x6d65_7472_6963,
            half_width: 1.0,
            include_origin: true,
        }
    }
}

impl SampleSpec {
    /// Points at fixed time `time`.
    pub fn points(&self, dim: usize, time: f64) -> Vec<PhasePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut out = Vec::with_capacity(self.count + 1);
        if self.include_origin {
            out.push(PhasePoint::new(vec![0.0; dim], time));
        }
        for _ in 0..self.count {
            let coords = (0..dim)
                .map(|_| rng.gen_range(-self.half_width..=self.half_width))
                .collect::<Vec<_>>();
            out.push(PhasePoint::new(coords, time));
        }
        out
    }

    /// Points with times drawn uniformly from `[t_min, t_max]`.
    pub fn points_in_time(&self, dim: usize, t_min: f64, t_max: f64) -> Vec<PhasePoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0x7469_6d65);
        self.points(dim, 0.0)
            .into_iter()
            .map(|p| {
                let t = if t_max > t_min {
                    rng.gen_range(t_min..=t_max)
                } else {
                    t_min
                };
                p.with_time(t)
            })
            .collect()
    }
}

/// Small fixed probe set used for structural checks.
pub(crate) fn probe_points(dim: usize, count: usize, seed: u64) -> Vec<PhasePoint> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let coords = (0..dim)
                .map(|_| rng.gen_range(0.1..1.3))
                .collect::<Vec<_>>();
            PhasePoint::new(coords, rng.gen_range(0.1..1.3))
        })
        .collect()
}

/// True when `e` is structurally zero or vanishes at every probe point
/// where it can be evaluated.
pub(crate) fn vanishes(e: &Expr, dim: usize) -> bool {
    if e.is_zero() {
        return true;
    }
    probe_points(dim, 12, 0x7a65_726f)
        .iter()
        .all(|x| match e.eval_at(x) {
            Ok(v) => v.abs() < 1e-12,
            Err(_) => true,
        })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn deterministic_and_in_box() {
        let spec = SampleSpec {
            count: 20,
            seed: 3,
            half_width: 2.0,
            include_origin: true,
        };
        let a = spec.points(4, 0.5);
        let b = spec.points(4, 0.5);
        assert_eq!(a, b);
        assert_eq!(a.len(), 21);
        assert!(a[0].coords.iter().all(|&v| v == 0.0));
        assert!(a.iter().flat_map(|p| &p.coords).all(|v| v.abs() <= 2.0));
        let timed = spec.points_in_time(2, 0.0, 3.0);
        assert!(timed.iter().all(|p| (0.0..=3.0).contains(&p.time)));
    }
}

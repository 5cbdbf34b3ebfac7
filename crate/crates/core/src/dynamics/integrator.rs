//! Dormand–Prince 5(4) with Hairer's dense output, integrating the state,
//! the variational equation `Ṁ = (∂X/∂x) M` and `∫κ dt` together.

use nalgebra::DMatrix;

use super::VectorFieldSpec;
use crate::phasespace::PhasePoint;
use crate::Result;

// The field is autonomous, so the nodes c_i never enter the stages.
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;

const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const D1: f64 = -12715105075.0 / 11282082432.0;
const D3: f64 = 87487479700.0 / 32700410799.0;
const D4: f64 = -10690763975.0 / 1880347072.0;
const D5: f64 = 701980252875.0 / 199316789632.0;
const D6: f64 = -1453857185.0 / 822651844.0;
const D7: f64 = 69997945.0 / 29380423.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
}

impl Default for IntegratorOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            max_steps: 200_000,
        }
    }
}

#[derive(Debug, Clone, thiserror::Error)]
pub enum IntegrationError {
    #[error("step size underflow at t = {t}; last good state {state:?}")]
    StepSizeUnderflow { t: f64, state: Vec<f64> },
    #[error("step limit {steps} reached at t = {t}")]
    MaxSteps { steps: usize, t: f64 },
    #[error("non-finite state at t = {t}")]
    NonFinite { t: f64 },
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct FlowStats {
    pub steps: usize,
    pub rejected: usize,
    /// Largest accepted scaled error norm (1 means at tolerance).
    pub max_error_estimate: f64,
}

/// State of the flow at one time.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowSample {
    pub point: PhasePoint,
    /// `∂x(t)/∂x(t₀)`.
    pub tangent: DMatrix<f64>,
    /// `∫_{t₀}^{t} κ dτ`.
    pub compressibility_integral: f64,
}

#[derive(Debug, Clone)]
pub struct FlowSegment {
    pub start: PhasePoint,
    pub end: PhasePoint,
    /// Requested sample times, in order; always includes the end point.
    pub samples: Vec<FlowSample>,
    pub tangent: DMatrix<f64>,
    pub compressibility_integral: f64,
    pub stats: FlowStats,
    /// Signed accepted step sizes, replayable by [`integrate_with_schedule`].
    pub schedule: Vec<f64>,
}

/// Augmented system `[x, vec(M), ∫κ]` with `M` stored column-major.
struct Augmented<'a> {
    field: &'a VectorFieldSpec,
    dim: usize,
}

impl Augmented<'_> {
    fn len(&self) -> usize {
        self.dim + self.dim * self.dim + 1
    }

    fn initial(&self, x: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut y = vec![0.0; self.len()];
        y[..d].copy_from_slice(x);
        for i in 0..d {
            y[d + i * d + i] = 1.0;
        }
        y
    }

    fn rhs(&self, y: &[f64], out: &mut [f64]) -> Result<()> {
        let d = self.dim;
        let x = &y[..d];
        self.field.eval_into(x, &mut out[..d])?;
        let jac = self.field.jacobian_at(x)?;
        let m = DMatrix::from_column_slice(d, d, &y[d..d + d * d]);
        let dm = jac * m;
        out[d..d + d * d].copy_from_slice(dm.as_slice());
        out[d + d * d] = self.field.divergence().eval(x, 0.0)?;
        Ok(())
    }

    fn sample(&self, y: &[f64], time: f64) -> FlowSample {
        let d = self.dim;
        FlowSample {
            point: PhasePoint::new(y[..d].to_vec(), time),
            tangent: DMatrix::from_column_slice(d, d, &y[d..d + d * d]),
            compressibility_integral: y[d + d * d],
        }
    }
}

struct Stages {
    k: [Vec<f64>; 7],
    tmp: Vec<f64>,
}

impl Stages {
    fn new(len: usize) -> Self {
        Self {
            k: std::array::from_fn(|_| vec![0.0; len]),
            tmp: vec![0.0; len],
        }
    }
}

/// One Dormand–Prince step from `y` with `k[0] = f(y)` already filled.
/// Writes the fifth-order solution to `y_new`, `k[6] = f(y_new)`, and
/// returns the embedded error vector in `err`.
fn dopri_step(
    sys: &Augmented,
    y: &[f64],
    h: f64,
    st: &mut Stages,
    y_new: &mut [f64],
    err: &mut [f64],
) -> Result<()> {
    let n = y.len();
    let stage = |coeffs: &[(usize, f64)], k: &[Vec<f64>; 7], tmp: &mut Vec<f64>| {
        for i in 0..n {
            let mut acc = 0.0;
            for &(j, a) in coeffs {
                acc += a * k[j][i];
            }
            tmp[i] = y[i] + h * acc;
        }
    };
    let tables: [&[(usize, f64)]; 5] = [
        &[(0, A21)],
        &[(0, A31), (1, A32)],
        &[(0, A41), (1, A42), (2, A43)],
        &[(0, A51), (1, A52), (2, A53), (3, A54)],
        &[(0, A61), (1, A62), (2, A63), (3, A64), (4, A65)],
    ];
    for (s, coeffs) in tables.iter().enumerate() {
        stage(coeffs, &st.k, &mut st.tmp);
        sys.rhs(&st.tmp, &mut st.k[s + 1])?;
    }
    for i in 0..n {
        y_new[i] = y[i]
            + h * (A71 * st.k[0][i]
                + A73 * st.k[2][i]
                + A74 * st.k[3][i]
                + A75 * st.k[4][i]
                + A76 * st.k[5][i]);
    }
    sys.rhs(y_new, &mut st.k[6])?;
    for i in 0..n {
        err[i] = h
            * (E1 * st.k[0][i]
                + E3 * st.k[2][i]
                + E4 * st.k[3][i]
                + E5 * st.k[4][i]
                + E6 * st.k[5][i]
                + E7 * st.k[6][i]);
    }
    Ok(())
}

/// Hairer's continuous extension over one accepted step.
struct Dense {
    r: [Vec<f64>; 5],
    t_old: f64,
    h: f64,
}

impl Dense {
    fn new(y: &[f64], y_new: &[f64], k: &[Vec<f64>; 7], t_old: f64, h: f64) -> Self {
        let n = y.len();
        let mut r: [Vec<f64>; 5] = std::array::from_fn(|_| vec![0.0; n]);
        for i in 0..n {
            let diff = y_new[i] - y[i];
            let bspl = h * k[0][i] - diff;
            r[0][i] = y[i];
            r[1][i] = diff;
            r[2][i] = bspl;
            r[3][i] = diff - h * k[6][i] - bspl;
            r[4][i] = h
                * (D1 * k[0][i]
                    + D3 * k[2][i]
                    + D4 * k[3][i]
                    + D5 * k[4][i]
                    + D6 * k[5][i]
                    + D7 * k[6][i]);
        }
        Self { r, t_old, h }
    }

    fn eval(&self, t: f64) -> Vec<f64> {
        let theta = (t - self.t_old) / self.h;
        let theta1 = 1.0 - theta;
        (0..self.r[0].len())
            .map(|i| {
                self.r[0][i]
                    + theta
                        * (self.r[1][i]
                            + theta1
                                * (self.r[2][i] + theta * (self.r[3][i] + theta1 * self.r[4][i])))
            })
            .collect()
    }
}

fn error_norm(err: &[f64], y: &[f64], y_new: &[f64], opts: &IntegratorOptions) -> f64 {
    let sum: f64 = err
        .iter()
        .zip(y.iter().zip(y_new))
        .map(|(e, (a, b))| {
            let sk = opts.abs_tol + opts.rel_tol * a.abs().max(b.abs());
            (e / sk).powi(2)
        })
        .sum();
    (sum / err.len() as f64).sqrt()
}

fn initial_step(
    sys: &Augmented,
    y: &[f64],
    f0: &[f64],
    span: f64,
    opts: &IntegratorOptions,
) -> Result<f64> {
    let sk: Vec<f64> = y
        .iter()
        .map(|v| opts.abs_tol + opts.rel_tol * v.abs())
        .collect();
    let norm = |v: &[f64]| -> f64 {
        (v.iter().zip(&sk).map(|(a, s)| (a / s).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
    };
    let dnf = norm(f0);
    let dny = norm(y);
    let mut h = if dnf <= 1e-5 || dny <= 1e-5 {
        1e-6
    } else {
        0.01 * dny / dnf
    };
    h = h.min(span);
    let y1: Vec<f64> = y.iter().zip(f0).map(|(a, f)| a + h * f).collect();
    let mut f1 = vec![0.0; y.len()];
    sys.rhs(&y1, &mut f1)?;
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let der2 = norm(&diff) / h;
    let der12 = der2.max(dnf);
    let h1 = if der12 <= 1e-15 {
        (h * 1e-3).max(1e-6)
    } else {
        (0.01 / der12).powf(0.2)
    };
    Ok((100.0 * h).min(h1).min(span))
}

fn check_finite(y: &[f64], t: f64) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(IntegrationError::NonFinite { t }.into())
    }
}

/// Integrates from `x0` (at `x0.time`) to `t1`, which may lie on either side.
pub fn integrate_flow(
    v: &VectorFieldSpec,
    x0: &PhasePoint,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<FlowSegment> {
    integrate_flow_sampled(v, x0, &[t1], opts)
}

/// As [`integrate_flow`] to the last of `times`, recording dense-output
/// samples at each requested time. Times must be monotone in the direction
/// of integration.
pub fn integrate_flow_sampled(
    v: &VectorFieldSpec,
    x0: &PhasePoint,
    times: &[f64],
    opts: &IntegratorOptions,
) -> Result<FlowSegment> {
    x0.check_dim(v.dim())?;
    let sys = Augmented {
        field: v,
        dim: v.dim(),
    };
    let t0 = x0.time;
    let t1 = times.last().copied().unwrap_or(t0);
    let dir = if t1 >= t0 { 1.0 } else { -1.0 };
    if times.windows(2).any(|w| (w[1] - w[0]) * dir < 0.0)
        || times.first().is_some_and(|&t| (t - t0) * dir < 0.0)
    {
        return Err(crate::Error::InvalidSystem(
            "sample times must be monotone in the integration direction".into(),
        ));
    }

    let mut y = sys.initial(&x0.coords);
    let n = y.len();
    let mut samples = Vec::with_capacity(times.len());
    let mut pending = times.iter().copied().peekable();
    while let Some(&ts) = pending.peek() {
        if ts != t0 {
            break;
        }
        samples.push(sys.sample(&y, ts));
        pending.next();
    }

    let mut stats = FlowStats::default();
    let mut schedule = Vec::new();
    let span = (t1 - t0).abs();
    if span == 0.0 {
        return Ok(finish(&sys, x0, &y, t1, samples, stats, schedule));
    }

    let mut st = Stages::new(n);
    sys.rhs(&y, &mut st.k[0])?;
    let mut h = initial_step(&sys, &y, &st.k[0], span, opts)?;
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = t0;
    let mut last_rejected = false;

    loop {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(IntegrationError::MaxSteps {
                steps: opts.max_steps,
                t,
            }
            .into());
        }
        let remaining = (t1 - t).abs();
        let last = h >= remaining;
        if last {
            h = remaining;
        }
        if h <= 16.0 * f64::EPSILON * t.abs().max(1.0) && !last {
            return Err(IntegrationError::StepSizeUnderflow {
                t,
                state: y[..sys.dim].to_vec(),
            }
            .into());
        }
        let signed = dir * h;
        dopri_step(&sys, &y, signed, &mut st, &mut y_new, &mut err)?;
        let en = error_norm(&err, &y, &y_new, opts);
        if !en.is_finite() {
            stats.rejected += 1;
            h *= 0.2;
            last_rejected = true;
            continue;
        }
        if en <= 1.0 {
            stats.steps += 1;
            stats.max_error_estimate = stats.max_error_estimate.max(en);
            let t_new = if last { t1 } else { t + signed };
            check_finite(&y_new, t_new)?;
            let dense = Dense::new(&y, &y_new, &st.k, t, signed);
            while let Some(&ts) = pending.peek() {
                if (ts - t_new) * dir > 0.0 {
                    break;
                }
                let ys = if ts == t_new {
                    y_new.clone()
                } else {
                    dense.eval(ts)
                };
                samples.push(sys.sample(&ys, ts));
                pending.next();
            }
            schedule.push(signed);
            std::mem::swap(&mut y, &mut y_new);
            st.k.swap(0, 6);
            t = t_new;
            if last {
                break;
            }
            let mut fac = 0.9 * en.max(1e-10).powf(-0.2);
            fac = fac.clamp(0.2, 10.0);
            if last_rejected {
                fac = fac.min(1.0);
            }
            h *= fac;
            last_rejected = false;
        } else {
            stats.rejected += 1;
            h *= (0.9 * en.powf(-0.2)).max(0.2);
            last_rejected = true;
        }
    }
    Ok(finish(&sys, x0, &y, t1, samples, stats, schedule))
}

fn finish(
    sys: &Augmented,
    x0: &PhasePoint,
    y: &[f64],
    t1: f64,
    mut samples: Vec<FlowSample>,
    stats: FlowStats,
    schedule: Vec<f64>,
) -> FlowSegment {
    let end = sys.sample(y, t1);
    if samples.last().is_none_or(|s| s.point.time != t1) {
        samples.push(end.clone());
    }
    FlowSegment {
        start: x0.clone(),
        end: end.point,
        samples,
        tangent: end.tangent,
        compressibility_integral: end.compressibility_integral,
        stats,
        schedule,
    }
}

/// Replays a fixed sequence of signed steps with no error control. The
/// result is a smooth function of `x0`, which adaptive control is not.
pub fn integrate_with_schedule(
    v: &VectorFieldSpec,
    x0: &PhasePoint,
    schedule: &[f64],
) -> Result<FlowSegment> {
    x0.check_dim(v.dim())?;
    let sys = Augmented {
        field: v,
        dim: v.dim(),
    };
    let mut y = sys.initial(&x0.coords);
    let n = y.len();
    let mut st = Stages::new(n);
    let mut y_new = vec![0.0; n];
    let mut err = vec![0.0; n];
    let mut t = x0.time;
    for &h in schedule {
        sys.rhs(&y, &mut st.k[0])?;
        dopri_step(&sys, &y, h, &mut st, &mut y_new, &mut err)?;
        t += h;
        check_finite(&y_new, t)?;
        std::mem::swap(&mut y, &mut y_new);
    }
    let stats = FlowStats {
        steps: schedule.len(),
        ..FlowStats::default()
    };
    Ok(finish(
        &sys,
        x0,
        &y,
        t,
        Vec::new(),
        stats,
        schedule.to_vec(),
    ))
}

/// `∂x(t1)/∂x(t0)`.
pub fn tangent_map(
    v: &VectorFieldSpec,
    x0: &PhasePoint,
    t1: f64,
    opts: &IntegratorOptions,
) -> Result<DMatrix<f64>> {
    Ok(integrate_flow(v, x0, t1, opts)?.tangent)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exprlang::{parse, CoordinateChart};
    use crate::linalg::expm;
    use approx::assert_relative_eq;
    use std::f64::consts::PI;

    fn field(h: &str, k: f64) -> VectorFieldSpec {
        let chart = CoordinateChart::canonical(1).unwrap();
        let h = parse(h, &chart).unwrap();
        VectorFieldSpec::from_hamiltonian(chart, &h, &DMatrix::from_element(1, 1, k)).unwrap()
    }

    fn opts() -> IntegratorOptions {
        IntegratorOptions::default()
    }

    #[test]
    fn harmonic_half_period() {
        let v = field("p1^2/2 + q1^2/2", 0.0);
        let seg = integrate_flow(&v, &PhasePoint::new(vec![1.0, 0.0], 0.0), PI, &opts()).unwrap();
        assert!((seg.end.coords[0] + 1.0).abs() < 1e-8);
        assert!(seg.end.coords[1].abs() < 1e-8);
        assert_eq!(seg.end.time, PI);
    }

    #[test]
    fn zero_length_is_identity() {
        let v = field("p1^2/2 + q1^2/2", 1.0);
        let x0 = PhasePoint::new(vec![0.3, -0.2], 1.5);
        let seg = integrate_flow(&v, &x0, 1.5, &opts()).unwrap();
        assert_eq!(seg.end, x0);
        assert_eq!(seg.tangent, DMatrix::identity(2, 2));
        assert!(seg.schedule.is_empty());
    }

    #[test]
    fn damped_energy_is_non_increasing() {
        let v = field("p1^2/2 + q1^2/2", 1.0);
        let times: Vec<f64> = (1..=60).map(|i| i as f64 * 0.1).collect();
        let seg =
            integrate_flow_sampled(&v, &PhasePoint::new(vec![1.0, 0.5], 0.0), &times, &opts())
                .unwrap();
        assert_eq!(seg.samples.len(), times.len());
        let energy = |s: &FlowSample| {
            let c = &s.point.coords;
            0.5 * (c[0] * c[0] + c[1] * c[1])
        };
        for w in seg.samples.windows(2) {
            assert!(energy(&w[1]) <= energy(&w[0]) + 1e-12);
        }
    }

    #[test]
    fn linear_tangent_matches_expm() {
        let v = field("p1^2/2 + q1^2/2", 1.0);
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        for t in [0.5, 2.0, -1.0] {
            let m = tangent_map(&v, &PhasePoint::new(vec![0.2, 0.1], 0.0), t, &opts()).unwrap();
            let reference = expm(&(&a * t));
            assert!((m - reference).abs().max() < 1e-8, "t = {t}");
        }
    }

    #[test]
    fn liouville_determinant() {
        let v = field("p1^2/2 + q1^2/2", 1.0);
        for t in [0.5, 1.0, 3.0] {
            let seg =
                integrate_flow(&v, &PhasePoint::new(vec![1.0, 0.0], 0.0), t, &opts()).unwrap();
            assert_relative_eq!(seg.tangent.determinant(), (-t).exp(), epsilon = 1e-8);
            assert_relative_eq!(seg.compressibility_integral, -t, epsilon = 1e-9);
        }
    }

    #[test]
    fn backward_then_forward_returns() {
        let v = field("p1^2/2 + q1^4/4", 1.0);
        let x0 = PhasePoint::new(vec![0.7, -0.4], 0.0);
        let back = integrate_flow(&v, &x0, -1.0, &opts()).unwrap();
        let fwd = integrate_flow(&v, &back.end, 0.0, &opts()).unwrap();
        for (a, b) in fwd.end.coords.iter().zip(&x0.coords) {
            assert!((a - b).abs() < 1e-8);
        }
        let prod = &fwd.tangent * &back.tangent;
        assert!((prod - DMatrix::identity(2, 2)).abs().max() < 1e-7);
    }

    #[test]
    fn dense_output_matches_direct_integration() {
        let v = field("p1^2/2 + q1^4/4", 0.5);
        let x0 = PhasePoint::new(vec![1.0, 0.0], 0.0);
        let times = [0.37, 1.11, 2.5];
        let seg = integrate_flow_sampled(&v, &x0, &times, &opts()).unwrap();
        for (s, &t) in seg.samples.iter().zip(&times) {
            let direct = integrate_flow(&v, &x0, t, &opts()).unwrap();
            for (a, b) in s.point.coords.iter().zip(&direct.end.coords) {
                assert!((a - b).abs() < 1e-8, "t = {t}");
            }
        }
    }

    #[test]
    fn schedule_replay_reproduces_adaptive_run() {
        let v = field("p1^2/2 + q1^4/4", 1.0);
        let x0 = PhasePoint::new(vec![0.5, 0.5], 0.0);
        let seg = integrate_flow(&v, &x0, 1.3, &opts()).unwrap();
        let replay = integrate_with_schedule(&v, &x0, &seg.schedule).unwrap();
        for (a, b) in replay.end.coords.iter().zip(&seg.end.coords) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((replay.end.time - 1.3).abs() < 1e-12);
    }

    #[test]
    fn step_halving_shows_fifth_order() {
        // fixed-step error on the harmonic oscillator drops by ~2^5
        let v = field("p1^2/2 + q1^2/2", 0.0);
        let x0 = PhasePoint::new(vec![1.0, 0.0], 0.0);
        let error = |steps: usize| {
            let h = 2.0 / steps as f64;
            let seg = integrate_with_schedule(&v, &x0, &vec![h; steps]).unwrap();
            ((seg.end.coords[0] - 2f64.cos()).powi(2) + (seg.end.coords[1] + 2f64.sin()).powi(2))
                .sqrt()
        };
        let ratio = error(10) / error(20);
        assert!(ratio >= 4.0, "ratio {ratio}");
        assert!(ratio > 20.0, "ratio {ratio}");
    }

    #[test]
    fn tighter_tolerance_reduces_error() {
        let v = field("p1^2/2 + q1^2/2", 0.0);
        let x0 = PhasePoint::new(vec![1.0, 0.0], 0.0);
        let err = |tol: f64| {
            let o = IntegratorOptions {
                abs_tol: tol,
                rel_tol: tol,
                ..opts()
            };
            let seg = integrate_flow(&v, &x0, 5.0, &o).unwrap();
            (seg.end.coords[0] - 5f64.cos()).abs() + (seg.end.coords[1] + 5f64.sin()).abs()
        };
        assert!(err(1e-10) < err(1e-6));
    }

    #[test]
    fn blow_up_is_reported() {
        let chart = CoordinateChart::canonical(1).unwrap();
        let comps = vec![parse("q1^2", &chart).unwrap(), parse("0", &chart).unwrap()];
        let v = VectorFieldSpec::new(chart, comps).unwrap();
        let r = integrate_flow(&v, &PhasePoint::new(vec![1.0, 0.0], 0.0), 2.0, &opts());
        assert!(r.is_err());
    }
}

//! Dense matrix helpers: the matrix exponential and skew-matrix coordinates.

use nalgebra::{DMatrix, DVector};

// Padé coefficients b_0..b_m for the [m/m] approximant of exp.
const PADE3: [f64; 4] = [120.0, 60.0, 12.0, 1.0];
const PADE5: [f64; 6] = [30240.0, 15120.0, 3360.0, 420.0, 30.0, 1.0];
const PADE7: [f64; 8] = [
    17297280.0, 8648640.0, 1995840.0, 277200.0, 25200.0, 1512.0, 56.0, 1.0,
];
const PADE9: [f64; 10] = [
    17643225600.0,
    8821612800.0,
    2075673600.0,
    302702400.0,
    30270240.0,
    2162160.0,
    110880.0,
    3960.0,
    90.0,
    1.0,
];
const PADE13: [f64; 14] = [
    64764752532480000.0,
    32382376266240000.0,
    7771770303897600.0,
    1187353796428800.0,
    129060195264000.0,
    10559470521600.0,
    670442572800.0,
    33522128640.0,
    1323241920.0,
    40840800.0,
    960960.0,
    16380.0,
    182.0,
    1.0,
];

// 1-norm bounds below which degree m gives unit-roundoff backward error.
const THETA: [(usize, f64); 4] = [
    (3, 1.495585217958292e-2),
    (5, 2.539398330063230e-1),
    (7, 9.504178996162932e-1),
    (9, 2.097847961257068e0),
];
const THETA13: f64 = 5.371920351148152e0;

fn norm1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Matrix exponential by scaling and squaring with a degree-3..13 Padé
/// approximant chosen from the 1-norm of `a`.
pub fn expm(a: &DMatrix<f64>) -> DMatrix<f64> {
    assert!(a.is_square(), "expm needs a square matrix");
    let n = a.nrows();
    if n == 0 {
        return a.clone();
    }
    let eye = DMatrix::<f64>::identity(n, n);
    let norm = norm1(a);
    if !norm.is_finite() {
        return DMatrix::from_element(n, n, f64::NAN);
    }
    let a2 = a * a;
    for (m, theta) in THETA {
        if norm <= theta {
            let (u, v) = match m {
                3 => pade_low(a, &a2, &eye, &PADE3),
                5 => pade_low(a, &a2, &eye, &PADE5),
                7 => pade_low(a, &a2, &eye, &PADE7),
                _ => pade_low(a, &a2, &eye, &PADE9),
            };
            return solve_pade(&u, &v);
        }
    }
    let s = (norm / THETA13).log2().ceil().max(0.0) as i32;
    let scale = 2f64.powi(-s);
    let a = a * scale;
    let a2 = &a2 * (scale * scale);
    let (u, v) = pade13(&a, &a2, &eye);
    let mut r = solve_pade(&u, &v);
    for _ in 0..s {
        r = &r * &r;
    }
    r
}

fn pade_low(
    a: &DMatrix<f64>,
    a2: &DMatrix<f64>,
    eye: &DMatrix<f64>,
    b: &[f64],
) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut odd = eye * b[1];
    let mut even = eye * b[0];
    let mut power = eye.clone();
    for k in 1..b.len() / 2 {
        power = &power * a2;
        odd += &power * b[2 * k + 1];
        even += &power * b[2 * k];
    }
    (a * odd, even)
}

fn pade13(a: &DMatrix<f64>, a2: &DMatrix<f64>, eye: &DMatrix<f64>) -> (DMatrix<f64>, DMatrix<f64>) {
    let b = &PADE13;
    let a4 = a2 * a2;
    let a6 = &a4 * a2;
    let inner_u = &a6 * (&a6 * b[13] + &a4 * b[11] + a2 * b[9]);
    let u = a * (inner_u + &a6 * b[7] + &a4 * b[5] + a2 * b[3] + eye * b[1]);
    let inner_v = &a6 * (&a6 * b[12] + &a4 * b[10] + a2 * b[8]);
    let v = inner_v + &a6 * b[6] + &a4 * b[4] + a2 * b[2] + eye * b[0];
    (u, v)
}

fn solve_pade(u: &DMatrix<f64>, v: &DMatrix<f64>) -> DMatrix<f64> {
    let p = v + u;
    let q = v - u;
    q.lu()
        .solve(&p)
        .unwrap_or_else(|| DMatrix::from_element(u.nrows(), u.ncols(), f64::NAN))
}

/// Dimension of the space of skew `dim × dim` matrices.
pub fn skew_dim(dim: usize) -> usize {
    dim * (dim.saturating_sub(1)) / 2
}

/// Upper-triangle index pairs `(k, l)`, `k < l`, in row-major order.
pub fn upper_pairs(dim: usize) -> Vec<(usize, usize)> {
    (0..dim)
        .flat_map(|k| (k + 1..dim).map(move |l| (k, l)))
        .collect()
}

/// Coordinates of a skew matrix in the upper-triangle basis.
pub fn skew_to_vec(m: &DMatrix<f64>) -> DVector<f64> {
    let pairs = upper_pairs(m.nrows());
    DVector::from_iterator(pairs.len(), pairs.iter().map(|&(k, l)| m[(k, l)]))
}

pub fn vec_to_skew(v: &DVector<f64>, dim: usize) -> DMatrix<f64> {
    let mut m = DMatrix::zeros(dim, dim);
    for (i, (k, l)) in upper_pairs(dim).into_iter().enumerate() {
        m[(k, l)] = v[i];
        m[(l, k)] = -v[i];
    }
    m
}

pub fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest `|m_kl + m_lk|`.
pub fn skew_defect(m: &DMatrix<f64>) -> f64 {
    max_abs(&(m + m.transpose()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn taylor(a: &DMatrix<f64>) -> DMatrix<f64> {
        // scaling + long Taylor series, independent of the Padé path
        let n = a.nrows();
        let s = 10;
        let scaled = a / 2f64.powi(s);
        let mut term = DMatrix::<f64>::identity(n, n);
        let mut sum = term.clone();
        for k in 1..30 {
            term = &term * &scaled / k as f64;
            sum += &term;
        }
        for _ in 0..s {
            sum = &sum * &sum;
        }
        sum
    }

    #[test]
    fn rotation_generator() {
        let t = 0.7;
        let a = DMatrix::from_row_slice(2, 2, &[0.0, t, -t, 0.0]);
        let e = expm(&a);
        let expected = DMatrix::from_row_slice(2, 2, &[t.cos(), t.sin(), -t.sin(), t.cos()]);
        assert_relative_eq!(e, expected, epsilon = 1e-15);
    }

    #[test]
    fn diagonal_matches_scalar_exp() {
        let a = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, 2.0, -30.0, 12.0]));
        let e = expm(&a);
        for i in 0..4 {
            assert_relative_eq!(e[(i, i)], a[(i, i)].exp(), max_relative = 1e-13);
        }
    }

    #[test]
    fn all_degrees_against_taylor() {
        let base = DMatrix::from_row_slice(3, 3, &[0.1, -0.4, 0.3, 0.2, -0.5, 0.7, -0.3, 0.6, 0.2]);
        for scale in [0.01, 0.2, 0.9, 2.0, 4.0, 9.0] {
            let a = &base * scale;
            let e = expm(&a);
            let reference = taylor(&a);
            let rel = (&e - &reference).norm() / reference.norm();
            assert!(rel < 1e-12, "scale {scale}: rel {rel:e}");
        }
    }

    #[test]
    fn damped_oscillator_generator() {
        // det exp(tA) = exp(t tr A)
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -1.0, -1.0]);
        let e = expm(&(&a * 2.0));
        assert_relative_eq!(e.determinant(), (-2.0f64).exp(), max_relative = 1e-13);
    }

    #[test]
    fn skew_roundtrip() {
        let v = DVector::from_vec(vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let m = vec_to_skew(&v, 4);
        assert_eq!(skew_defect(&m), 0.0);
        assert_eq!(skew_to_vec(&m), v);
        assert_eq!(skew_dim(4), 6);
    }
}

//! Constant-coefficient linear systems `x' = A x` and the action of
//! `exp(tA)` on a vector.
//!
//! Small systems go through a dense scaling-and-squaring Padé exponential;
//! large ones through an adaptive Dormand–Prince 5(4) integrator driven by a
//! sparse matrix-vector product.

use std::collections::BTreeMap;

use faer::linalg::solvers::Solve;
use faer::{c64, Mat, MatRef};
use num_complex::Complex64;
use twofloat::TwoFloat;

use crate::error::{Error, Result};

pub const DEFAULT_RTOL: f64 = 1e-10;

/// Above this dimension `propagate` switches from the dense exponential to
/// adaptive stepping.
pub const DENSE_LIMIT: usize = 2000;
/// Real systems up to this size use [`Backend::Precise`] under `Auto`.
pub const PRECISE_LIMIT: usize = 64;

const MAX_ADAPTIVE_STEPS: usize = 1_000_000;

/// Sparse square matrix stored row-wise with duplicate entries summed.
#[derive(Clone, Debug, PartialEq)]
pub struct SparseSystem {
    dim: usize,
    rows: Vec<Vec<(usize, Complex64)>>,
}

impl SparseSystem {
    pub fn from_entries(
        dim: usize,
        entries: impl IntoIterator<Item = (usize, usize, Complex64)>,
    ) -> Result<Self> {
        let mut acc: Vec<BTreeMap<usize, Complex64>> = vec![BTreeMap::new(); dim];
        for (r, c, v) in entries {
            if r >= dim || c >= dim {
                return Err(Error::InvalidArgument(format!(
                    "entry ({r}, {c}) outside a {dim}x{dim} system"
                )));
            }
            if !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::InvalidArgument(format!(
                    "non-finite entry at ({r}, {c})"
                )));
            }
            *acc[r].entry(c).or_default() += v;
        }
        let rows = acc.into_iter().map(|m| m.into_iter().collect()).collect();
        Ok(SparseSystem { dim, rows })
    }

    pub fn from_dense(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.len();
        let entries = rows.iter().enumerate().flat_map(|(r, row)| {
            row.iter()
                .enumerate()
                .filter(|(_, v)| **v != 0.0)
                .map(move |(c, v)| (r, c, Complex64::new(*v, 0.0)))
        });
        Self::from_entries(dim, entries)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn entries(&self) -> impl Iterator<Item = (usize, usize, Complex64)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(r, row)| row.iter().map(move |&(c, v)| (r, c, v)))
    }

    pub fn is_real(&self) -> bool {
        self.rows.iter().flatten().all(|(_, z)| z.im == 0.0)
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    pub fn row(&self, r: usize) -> &[(usize, Complex64)] {
        &self.rows[r]
    }

    pub fn apply(&self, v: &[Complex64]) -> Vec<Complex64> {
        self.rows
            .iter()
            .map(|row| row.iter().map(|&(c, a)| a * v[c]).sum())
            .collect()
    }

    pub fn to_dense(&self) -> Mat<c64> {
        let mut m = Mat::<c64>::zeros(self.dim, self.dim);
        for (r, c, v) in self.entries() {
            m[(r, c)] = v;
        }
        m
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Backend {
    #[default]
    Auto,
    Dense,
    Adaptive,
    /// Double-double Taylor stepping; real generators only.
    Precise,
}

/// `exp(tA) v0` to relative tolerance `rtol`.
pub fn propagate(
    system: &SparseSystem,
    v0: &[Complex64],
    t: f64,
    rtol: f64,
) -> Result<Vec<Complex64>> {
    propagate_with(system, v0, t, rtol, Backend::Auto)
}

pub fn propagate_with(
    system: &SparseSystem,
    v0: &[Complex64],
    t: f64,
    rtol: f64,
    backend: Backend,
) -> Result<Vec<Complex64>> {
    if v0.len() != system.dim {
        return Err(Error::InvalidArgument(format!(
            "vector of length {} for a system of dimension {}",
            v0.len(),
            system.dim
        )));
    }
    if !(t >= 0.0 && t.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "propagation time {t} must be >= 0"
        )));
    }
    if !(rtol > 0.0) {
        return Err(Error::InvalidArgument(format!("rtol {rtol} must be > 0")));
    }
    if t == 0.0 || system.dim == 0 {
        return Ok(v0.to_vec());
    }
    let backend = match backend {
        Backend::Auto if system.dim <= PRECISE_LIMIT && system.is_real() => Backend::Precise,
        Backend::Auto if system.dim <= DENSE_LIMIT => Backend::Dense,
        Backend::Auto => Backend::Adaptive,
        other => other,
    };
    let out = if backend == Backend::Precise {
        precise(system, v0, t)?
    } else if backend == Backend::Dense {
        let mut a = system.to_dense();
        a *= faer::Scale(c64::new(t, 0.0));
        let e = expm(a.as_ref());
        (0..system.dim)
            .map(|r| (0..system.dim).map(|c| e[(r, c)] * v0[c]).sum())
            .collect::<Vec<Complex64>>()
    } else {
        dopri5(system, v0, t, rtol)?
    };
    if out.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::Numerical(
            "matrix exponential produced non-finite values".into(),
        ));
    }
    Ok(out)
}

/// `exp(tA) v0` by Taylor steps with `‖hA‖₁ ≤ 1/2`, accumulated in
/// double-double arithmetic. Near-stationary modes of strongly non-normal
/// generators keep rounding noise alive; the extra precision keeps it below
/// the f64 resolution of the result.
fn precise(system: &SparseSystem, v0: &[Complex64], t: f64) -> Result<Vec<Complex64>> {
    if !system.is_real() {
        return Err(Error::InvalidArgument(
            "precise backend needs a real generator".into(),
        ));
    }
    let rows: Vec<Vec<(usize, f64)>> = system
        .rows
        .iter()
        .map(|row| row.iter().map(|&(c, z)| (c, z.re)).collect())
        .collect();
    let mut col_sums = vec![0.0; system.dim];
    for row in &rows {
        for &(c, x) in row {
            col_sums[c] += x.abs();
        }
    }
    let norm = col_sums.iter().cloned().fold(0.0, f64::max);
    let steps = (2.0 * t * norm).ceil().max(1.0);
    if steps > 1e7 {
        return Err(Error::Numerical(format!("{steps} Taylor steps needed")));
    }
    let h = TwoFloat::from(t) / steps;
    let run = |part: Vec<f64>| -> Vec<f64> {
        let mut v: Vec<TwoFloat> = part.into_iter().map(TwoFloat::from).collect();
        for _ in 0..steps as u64 {
            let mut term = v.clone();
            for j in 1..=60 {
                let scale = h / j as f64;
                term = rows
                    .iter()
                    .map(|row| {
                        row.iter()
                            .fold(TwoFloat::from(0.0), |acc, &(c, x)| acc + term[c] * x)
                            * scale
                    })
                    .collect();
                let mut size = 0.0f64;
                for (vi, ti) in v.iter_mut().zip(&term) {
                    *vi += *ti;
                    size = size.max(f64::from(*ti).abs());
                }
                let scale_v = v.iter().map(|x| f64::from(*x).abs()).fold(0.0, f64::max);
                if size <= 1e-34 * scale_v.max(f64::MIN_POSITIVE) || size == 0.0 {
                    break;
                }
            }
        }
        v.into_iter().map(f64::from).collect()
    };
    let re = run(v0.iter().map(|z| z.re).collect());
    let im = run(v0.iter().map(|z| z.im).collect());
    Ok(re
        .into_iter()
        .zip(im)
        .map(|(a, b)| Complex64::new(a, b))
        .collect())
}

/// Euclidean norm of `A v`.
pub fn stationarity_residual(system: &SparseSystem, v: &[Complex64]) -> Result<f64> {
    if v.len() != system.dim {
        return Err(Error::InvalidArgument("dimension mismatch".into()));
    }
    Ok(system
        .apply(v)
        .iter()
        .map(|z| z.norm_sqr())
        .sum::<f64>()
        .sqrt())
}

fn one_norm(a: MatRef<'_, c64>) -> f64 {
    (0..a.ncols())
        .map(|c| (0..a.nrows()).map(|r| a[(r, c)].norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Dense matrix exponential: degree-13 Padé approximant with scaling and
/// squaring (Higham 2005).
pub fn expm(a: MatRef<'_, c64>) -> Mat<c64> {
    const B: [f64; 14] = [
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
    const THETA_13: f64 = 5.371920351148152;

    let dim = a.nrows();
    let norm = one_norm(a);
    let squarings = if norm > THETA_13 {
        (norm / THETA_13).log2().ceil() as i32
    } else {
        0
    };
    let scale = c64::new(0.5f64.powi(squarings), 0.0);
    let a = a.to_owned() * faer::Scale(scale);
    let ident = Mat::<c64>::identity(dim, dim);
    let a2 = &a * &a;
    let a4 = &a2 * &a2;
    let a6 = &a4 * &a2;
    let s = |k: usize| faer::Scale(c64::new(B[k], 0.0));

    let inner_u = &a6 * s(13) + &a4 * s(11) + &a2 * s(9);
    let u_poly = &a6 * &inner_u + &a6 * s(7) + &a4 * s(5) + &a2 * s(3) + &ident * s(1);
    let u = &a * &u_poly;
    let inner_v = &a6 * s(12) + &a4 * s(10) + &a2 * s(8);
    let v = &a6 * &inner_v + &a6 * s(6) + &a4 * s(4) + &a2 * s(2) + &ident * s(0);

    let denom = &v - &u;
    let mut r = &v + &u;
    denom.partial_piv_lu().solve_in_place(r.as_mut());
    for _ in 0..squarings {
        r = &r * &r;
    }
    r
}

fn dopri5(
    system: &SparseSystem,
    v0: &[Complex64],
    t_end: f64,
    rtol: f64,
) -> Result<Vec<Complex64>> {
    // Dormand–Prince 5(4) tableau
    const C2: f64 = 1.0 / 5.0;
    const C3: f64 = 3.0 / 10.0;
    const C4: f64 = 4.0 / 5.0;
    const C5: f64 = 8.0 / 9.0;
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
    const B1: f64 = 35.0 / 384.0;
    const B3: f64 = 500.0 / 1113.0;
    const B4: f64 = 125.0 / 192.0;
    const B5: f64 = -2187.0 / 6784.0;
    const B6: f64 = 11.0 / 84.0;
    const E1: f64 = 71.0 / 57600.0;
    const E3: f64 = -71.0 / 16695.0;
    const E4: f64 = 71.0 / 1920.0;
    const E5: f64 = -17253.0 / 339200.0;
    const E6: f64 = 22.0 / 525.0;
    const E7: f64 = -1.0 / 40.0;
    let _ = (C2, C3, C4, C5);

    let dim = v0.len();
    let scale0 = v0.iter().map(|z| z.norm()).fold(0.0, f64::max).max(1e-300);
    let atol = rtol * scale0 * 1e-3;
    let rate = system
        .rows
        .iter()
        .map(|row| row.iter().map(|(_, v)| v.norm()).sum::<f64>())
        .fold(0.0, f64::max)
        .max(1e-12);

    let axpy = |y: &[Complex64], terms: &[(f64, &Vec<Complex64>)], h: f64| -> Vec<Complex64> {
        (0..dim)
            .map(|i| y[i] + terms.iter().map(|(c, k)| k[i] * (c * h)).sum::<Complex64>())
            .collect()
    };

    let mut y = v0.to_vec();
    let mut t = 0.0;
    let mut h = (0.01 / rate).min(t_end);
    let mut k1 = system.apply(&y);
    let mut steps = 0usize;
    while t < t_end {
        steps += 1;
        if steps > MAX_ADAPTIVE_STEPS {
            return Err(Error::Numerical(format!(
                "adaptive integration did not reach t={t_end} within {MAX_ADAPTIVE_STEPS} steps"
            )));
        }
        if t + h > t_end {
            h = t_end - t;
        }
        let k2 = system.apply(&axpy(&y, &[(A21, &k1)], h));
        let k3 = system.apply(&axpy(&y, &[(A31, &k1), (A32, &k2)], h));
        let k4 = system.apply(&axpy(&y, &[(A41, &k1), (A42, &k2), (A43, &k3)], h));
        let k5 = system.apply(&axpy(
            &y,
            &[(A51, &k1), (A52, &k2), (A53, &k3), (A54, &k4)],
            h,
        ));
        let k6 = system.apply(&axpy(
            &y,
            &[(A61, &k1), (A62, &k2), (A63, &k3), (A64, &k4), (A65, &k5)],
            h,
        ));
        let y_new = axpy(
            &y,
            &[(B1, &k1), (B3, &k3), (B4, &k4), (B5, &k5), (B6, &k6)],
            h,
        );
        let k7 = system.apply(&y_new);
        let mut err = 0.0f64;
        for i in 0..dim {
            let e =
                (k1[i] * E1 + k3[i] * E3 + k4[i] * E4 + k5[i] * E5 + k6[i] * E6 + k7[i] * E7) * h;
            let sc = atol + rtol * y[i].norm().max(y_new[i].norm());
            err = err.max(e.norm() / sc);
        }
        if !err.is_finite() {
            return Err(Error::Numerical("adaptive integration diverged".into()));
        }
        if err <= 1.0 {
            t += h;
            y = y_new;
            k1 = k7;
        }
        let factor = if err == 0.0 {
            5.0
        } else {
            (0.9 * err.powf(-0.2)).clamp(0.2, 5.0)
        };
        h *= factor;
        if h < 1e-14 * t_end.max(1.0) {
            return Err(Error::Numerical("adaptive step size underflow".into()));
        }
    }
    Ok(y)
}

//! Dense complex vector helpers and the eigenbasis transforms used by the
//! propagator.

use faer::{Mat, Side};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type C64 = Complex64;

/// `<a|b>`, conjugating the left argument.
pub fn inner(a: &[C64], b: &[C64]) -> C64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [C64::new(0.0, 0.0); 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (xa, xb) in (&mut ca).zip(&mut cb) {
        for l in 0..4 {
            acc[l] += xa[l].conj() * xb[l];
        }
    }
    let mut tail = C64::new(0.0, 0.0);
    for (x, y) in ca.remainder().iter().zip(cb.remainder()) {
        tail += x.conj() * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn norm_sqr(a: &[C64]) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum()
}

/// Euclidean distance between two vectors.
pub fn distance(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Largest componentwise modulus of `a - b`.
pub fn max_abs_diff(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Unitary eigenvector matrix, stored column-major.
///
/// A real symmetric Hamiltonian has a real orthogonal eigenbasis, which
/// halves the work of every transform.
#[derive(Clone, Debug)]
pub(crate) enum Basis {
    Real(Vec<f64>),
    Complex(Vec<C64>),
}

impl Basis {
    pub(crate) fn identity(dim: usize, order: &[usize]) -> Basis {
        let mut v = vec![0.0; dim * dim];
        for (k, &i) in order.iter().enumerate() {
            v[i + k * dim] = 1.0;
        }
        Basis::Real(v)
    }

    pub(crate) fn entry(&self, dim: usize, i: usize, k: usize) -> C64 {
        match self {
            Basis::Real(v) => C64::new(v[i + k * dim], 0.0),
            Basis::Complex(v) => v[i + k * dim],
        }
    }

    pub(crate) fn is_real(&self) -> bool {
        matches!(self, Basis::Real(_))
    }

    /// `out = V† x`.
    pub(crate) fn coefficients(&self, x: &[C64], out: &mut [C64]) {
        let dim = x.len();
        match self {
            Basis::Real(v) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = real_column_dot(&v[k * dim..(k + 1) * dim], x);
                }
            }
            Basis::Complex(v) => {
                for (k, o) in out.iter_mut().enumerate() {
                    *o = inner(&v[k * dim..(k + 1) * dim], x);
                }
            }
        }
    }

    /// `out = V y`.
    pub(crate) fn combine(&self, y: &[C64], out: &mut [C64]) {
        let dim = y.len();
        out.iter_mut().for_each(|o| *o = C64::new(0.0, 0.0));
        match self {
            Basis::Real(v) => {
                for (k, &yk) in y.iter().enumerate() {
                    let col = &v[k * dim..(k + 1) * dim];
                    for (o, &c) in out.iter_mut().zip(col) {
                        o.re += c * yk.re;
                        o.im += c * yk.im;
                    }
                }
            }
            Basis::Complex(v) => {
                for (k, &yk) in y.iter().enumerate() {
                    let col = &v[k * dim..(k + 1) * dim];
                    for (o, &c) in out.iter_mut().zip(col) {
                        *o += c * yk;
                    }
                }
            }
        }
    }
}

fn real_column_dot(col: &[f64], x: &[C64]) -> C64 {
    let mut re = [0.0f64; 4];
    let mut im = [0.0f64; 4];
    let mut cc = col.chunks_exact(4);
    let mut cx = x.chunks_exact(4);
    for (c, z) in (&mut cc).zip(&mut cx) {
        for l in 0..4 {
            re[l] += c[l] * z[l].re;
            im[l] += c[l] * z[l].im;
        }
    }
    let mut tre = 0.0;
    let mut tim = 0.0;
    for (c, z) in cc.remainder().iter().zip(cx.remainder()) {
        tre += c * z.re;
        tim += c * z.im;
    }
    C64::new(
        (re[0] + re[1]) + (re[2] + re[3]) + tre,
        (im[0] + im[1]) + (im[2] + im[3]) + tim,
    )
}

/// Diagnostics attached to an eigensolver failure.
pub(crate) fn eigensolver_error(dim: usize, data: &[C64], reason: &str) -> Error {
    let frobenius = norm_sqr(data).sqrt();
    let max_abs = data.iter().map(|z| z.norm()).fold(0.0, f64::max);
    let (mut diag_min, mut diag_max) = (f64::INFINITY, f64::NEG_INFINITY);
    for i in 0..dim {
        let d = data[i * dim + i].re;
        diag_min = diag_min.min(d);
        diag_max = diag_max.max(d);
    }
    Error::Eigensolver {
        dim,
        reason: reason.to_string(),
        frobenius,
        max_abs,
        diag_min,
        diag_max,
    }
}

/// Full eigendecomposition of a dense Hermitian matrix given row-major.
///
/// Eigenvalues come back ascending.
pub(crate) fn hermitian_eigen(dim: usize, data: &[C64], real: bool) -> Result<(Vec<f64>, Basis)> {
    if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(eigensolver_error(dim, data, "non-finite entry"));
    }
    if real {
        let a = Mat::<f64>::from_fn(dim, dim, |i, j| data[i * dim + j].re);
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| eigensolver_error(dim, data, &format!("{e:?}")))?;
        let values: Vec<f64> = (0..dim).map(|k| evd.S()[k]).collect();
        let u = evd.U();
        let mut v = Vec::with_capacity(dim * dim);
        for k in 0..dim {
            for i in 0..dim {
                v.push(u[(i, k)]);
            }
        }
        Ok((values, Basis::Real(v)))
    } else {
        let a = Mat::<C64>::from_fn(dim, dim, |i, j| data[i * dim + j]);
        let evd = a
            .self_adjoint_eigen(Side::Lower)
            .map_err(|e| eigensolver_error(dim, data, &format!("{e:?}")))?;
        let values: Vec<f64> = (0..dim).map(|k| evd.S()[k].re).collect();
        let u = evd.U();
        let mut v = Vec::with_capacity(dim * dim);
        for k in 0..dim {
            for i in 0..dim {
                v.push(u[(i, k)]);
            }
        }
        Ok((values, Basis::Complex(v)))
    }
}

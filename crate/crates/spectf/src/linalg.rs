//! Small dense linear-algebra kernels shared by the solvers.
//!
//! The systems solved here are at most a few hundred unknowns (grid length
//! plus scalar covariates), so a plain Cholesky factorization is both fast
//! enough and dependency-free.

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};

use crate::error::{Result, SpectfError};

/// Lower-triangular Cholesky factor of a symmetric positive definite matrix.
#[derive(Clone, Debug)]
pub(crate) struct Cholesky {
    l: Array2<f64>,
    /// Ridge added to the diagonal to make the factorization succeed; zero
    /// when the matrix was positive definite as given.
    pub(crate) jitter: f64,
}

impl Cholesky {
    /// Factor `a`, retrying with an increasing ridge `jitter * I` on failure.
    ///
    /// The starting jitter is `1e-10 * trace(a) / n`, grown by 10x up to six
    /// times before giving up.
    pub(crate) fn factor(a: ArrayView2<f64>) -> Result<Self> {
        let n = a.nrows();
        if n != a.ncols() {
            return Err(SpectfError::Dimension(format!(
                "Cholesky needs a square matrix, got {}x{}",
                n,
                a.ncols()
            )));
        }
        if let Some(l) = try_factor(a, 0.0) {
            return Ok(Cholesky { l, jitter: 0.0 });
        }
        let trace: f64 = (0..n).map(|i| a[[i, i]]).sum();
        let mut jitter = 1e-10 * trace.abs().max(1e-300) / n as f64;
        for _ in 0..6 {
            if let Some(l) = try_factor(a, jitter) {
                return Ok(Cholesky { l, jitter });
            }
            jitter *= 10.0;
        }
        Err(SpectfError::Numerical(format!(
            "matrix of size {n} is not positive definite even after ridge jitter; \
             consider increasing the penalty"
        )))
    }

    /// Solve `A x = b` given the stored factor.
    pub(crate) fn solve(&self, b: ArrayView1<f64>) -> Array1<f64> {
        let n = self.l.nrows();
        debug_assert_eq!(b.len(), n);
        let l = self.l.as_slice().expect("factor is contiguous");
        let mut x = b.to_owned();
        let xs = x.as_slice_mut().expect("contiguous");
        // forward: L z = b
        for i in 0..n {
            let row = &l[i * n..i * n + i];
            let mut s = xs[i];
            for (k, lik) in row.iter().enumerate() {
                s -= lik * xs[k];
            }
            xs[i] = s / l[i * n + i];
        }
        // backward: L^T x = z
        for i in (0..n).rev() {
            let mut s = xs[i];
            for k in i + 1..n {
                s -= l[k * n + i] * xs[k];
            }
            xs[i] = s / l[i * n + i];
        }
        x
    }
}

fn try_factor(a: ArrayView2<f64>, jitter: f64) -> Option<Array2<f64>> {
    let n = a.nrows();
    let mut l = Array2::<f64>::zeros((n, n));
    {
        let ls = l.as_slice_mut().expect("contiguous");
        for j in 0..n {
            let mut d = a[[j, j]] + jitter;
            for k in 0..j {
                let v = ls[j * n + k];
                d -= v * v;
            }
            if d <= 0.0 || !d.is_finite() {
                return None;
            }
            let dj = d.sqrt();
            ls[j * n + j] = dj;
            for i in j + 1..n {
                let mut s = a[[i, j]];
                let (ri, rj) = (&ls[i * n..i * n + j], &ls[j * n..j * n + j]);
                for (x, y) in ri.iter().zip(rj.iter()) {
                    s -= x * y;
                }
                ls[i * n + j] = s / dj;
            }
        }
    }
    Some(l)
}

/// `x^T a` for a symmetric `a` stored fully, returning `a x` (same thing).
pub(crate) fn sym_matvec(a: ArrayView2<f64>, x: ArrayView1<f64>) -> Array1<f64> {
    a.dot(&x)
}

/// Accumulate `x^T diag(w) x` over the rows of `x` into a symmetric matrix.
/// Only the upper triangle is computed, then mirrored.
pub(crate) fn weighted_gram(x: ArrayView2<f64>, w: Option<&[f64]>) -> Array2<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut g = Array2::<f64>::zeros((p, p));
    let gs = g.as_slice_mut().expect("contiguous");
    for i in 0..n {
        let row = x.row(i);
        let row = row.as_slice().expect("row-major design");
        let wi = w.map_or(1.0, |w| w[i]);
        for a in 0..p {
            let fa = wi * row[a];
            if fa == 0.0 {
                continue;
            }
            let dst = &mut gs[a * p + a..a * p + p];
            let src = &row[a..];
            for (d, s) in dst.iter_mut().zip(src.iter()) {
                *d += fa * s;
            }
        }
    }
    for a in 0..p {
        for b in a + 1..p {
            let v = g[[a, b]];
            g[[b, a]] = v;
        }
    }
    g
}

/// `x^T diag(w) v` over rows of `x`.
pub(crate) fn weighted_xtv(
    x: ArrayView2<f64>,
    v: ArrayView1<f64>,
    w: Option<&[f64]>,
) -> Array1<f64> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut out = Array1::<f64>::zeros(p);
    let os = out.as_slice_mut().expect("contiguous");
    for i in 0..n {
        let row = x.row(i);
        let row = row.as_slice().expect("row-major design");
        let f = w.map_or(1.0, |w| w[i]) * v[i];
        if f == 0.0 {
            continue;
        }
        for (o, s) in os.iter_mut().zip(row.iter()) {
            *o += f * s;
        }
    }
    out
}

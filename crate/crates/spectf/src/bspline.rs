//! B-spline basis evaluation via the Cox-de Boor recursion.
//!
//! Only what the synthetic data generator needs: a clamped basis of a given
//! degree with interior knots on [a, b], evaluated on a grid of points.

use ndarray::{Array1, Array2};

use crate::error::{Result, SpectfError};

#[derive(Clone, Debug)]
pub struct BsplineBasis {
    degree: usize,
    /// Full clamped knot vector, boundary knots repeated `degree + 1` times.
    knots: Vec<f64>,
}

impl BsplineBasis {
    /// Clamped basis on `[a, b]` with the given interior knots (strictly
    /// inside the interval, ascending).
    pub fn new(degree: usize, a: f64, b: f64, interior: &[f64]) -> Result<Self> {
        if !(a < b) {
            return Err(SpectfError::InvalidInput(format!(
                "invalid B-spline domain [{a}, {b}]"
            )));
        }
        for w in interior.windows(2) {
            if !(w[0] < w[1]) {
                return Err(SpectfError::InvalidInput(
                    "interior knots must be strictly ascending".into(),
                ));
            }
        }
        if interior.iter().any(|&t| t <= a || t >= b) {
            return Err(SpectfError::InvalidInput(
                "interior knots must lie strictly inside the domain".into(),
            ));
        }
        let mut knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
        knots.extend(std::iter::repeat_n(a, degree + 1));
        knots.extend_from_slice(interior);
        knots.extend(std::iter::repeat_n(b, degree + 1));
        Ok(BsplineBasis { degree, knots })
    }

    /// Cubic basis with `n_interior` equispaced interior knots on `[0, 1]`.
    pub fn cubic_equispaced(n_interior: usize) -> Self {
        let interior: Vec<f64> = (1..=n_interior)
            .map(|j| j as f64 / (n_interior + 1) as f64)
            .collect();
        Self::new(3, 0.0, 1.0, &interior).expect("equispaced interior knots are valid")
    }

    /// Number of basis functions: interior knots + degree + 1.
    pub fn n_basis(&self) -> usize {
        self.knots.len() - self.degree - 1
    }

    fn domain(&self) -> (f64, f64) {
        (self.knots[0], *self.knots.last().unwrap())
    }

    /// Index of the knot span containing `t` (half-open intervals, with the
    /// right endpoint assigned to the last nonempty span).
    fn span(&self, t: f64) -> usize {
        let n = self.n_basis();
        let (_, b) = self.domain();
        if t >= b {
            return n - 1;
        }
        // spans live between knot[degree] and knot[n]
        let mut lo = self.degree;
        let mut hi = n;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < self.knots[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// Values of the `degree + 1` basis functions that are nonzero at `t`,
    /// returned with the index of the first one.
    fn nonzero_at(&self, t: f64) -> (usize, Vec<f64>) {
        let k = self.degree;
        let span = self.span(t);
        let mut vals = vec![0.0; k + 1];
        vals[0] = 1.0;
        let mut left = vec![0.0; k + 1];
        let mut right = vec![0.0; k + 1];
        for j in 1..=k {
            left[j] = t - self.knots[span + 1 - j];
            right[j] = self.knots[span + j] - t;
            let mut saved = 0.0;
            for r in 0..j {
                let den = right[r + 1] + left[j - r];
                let temp = if den != 0.0 { vals[r] / den } else { 0.0 };
                vals[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            vals[j] = saved;
        }
        (span - k, vals)
    }

    /// Basis matrix `len(points) x n_basis`.
    pub fn evaluate_matrix(&self, points: &[f64]) -> Array2<f64> {
        let mut out = Array2::<f64>::zeros((points.len(), self.n_basis()));
        let (a, b) = self.domain();
        for (i, &t) in points.iter().enumerate() {
            let t = t.clamp(a, b);
            let (first, vals) = self.nonzero_at(t);
            for (off, v) in vals.iter().enumerate() {
                out[[i, first + off]] = *v;
            }
        }
        out
    }

    /// Evaluate a spline with the given coefficients on a grid.
    pub fn evaluate(&self, coeffs: &[f64], points: &[f64]) -> Result<Array1<f64>> {
        if coeffs.len() != self.n_basis() {
            return Err(SpectfError::Dimension(format!(
                "expected {} coefficients, got {}",
                self.n_basis(),
                coeffs.len()
            )));
        }
        let basis = self.evaluate_matrix(points);
        Ok(basis.dot(&Array1::from_vec(coeffs.to_vec())))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn cubic_ten_internal_knots_has_fourteen_functions() {
        let b = BsplineBasis::cubic_equispaced(10);
        assert_eq!(b.n_basis(), 14);
    }

    #[test]
    fn partition_of_unity_on_grid() {
        let b = BsplineBasis::cubic_equispaced(10);
        let grid: Vec<f64> = (0..100).map(|j| j as f64 / 99.0).collect();
        let m = b.evaluate_matrix(&grid);
        for i in 0..grid.len() {
            let s: f64 = m.row(i).sum();
            assert_abs_diff_eq!(s, 1.0, epsilon = 1e-10);
        }
    }

    #[test]
    fn all_zero_coefficients_give_zero_function() {
        let b = BsplineBasis::cubic_equispaced(10);
        let grid: Vec<f64> = (0..50).map(|j| j as f64 / 49.0).collect();
        let f = b.evaluate(&vec![0.0; b.n_basis()], &grid).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn reproduces_linear_functions() {
        // Greville abscissae as coefficients reproduce the identity.
        let b = BsplineBasis::cubic_equispaced(4);
        let greville: Vec<f64> = (0..b.n_basis())
            .map(|i| {
                let mut s = 0.0;
                for j in 1..=3 {
                    s += b.knots[i + j];
                }
                s / 3.0
            })
            .collect();
        let grid: Vec<f64> = (0..40).map(|j| j as f64 / 39.0).collect();
        let f = b.evaluate(&greville, &grid).unwrap();
        for (v, t) in f.iter().zip(grid.iter()) {
            assert_abs_diff_eq!(*v, *t, epsilon = 1e-10);
        }
    }

    #[test]
    fn custom_interior_knots_validate() {
        assert!(BsplineBasis::new(3, 0.0, 1.0, &[0.2, 0.75, 0.9]).is_ok());
        assert!(BsplineBasis::new(3, 0.0, 1.0, &[0.9, 0.2]).is_err());
        assert!(BsplineBasis::new(3, 0.0, 1.0, &[1.5]).is_err());
    }
}

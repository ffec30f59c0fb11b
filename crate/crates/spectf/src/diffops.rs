//! Discrete difference operators on an equispaced grid.
//!
//! `D` of order `m` maps a length-`p` vector to its `m`-th forward differences
//! (length `p - m`). Every row carries the same stencil of `m + 1` binomial
//! coefficients with alternating signs, so the operator is stored as that
//! single stencil rather than a full banded matrix. Operators are defined on
//! the index grid (unit spacing); physical grid spacing is folded into the
//! penalty weight by the callers.
//!
//! [`AugmentedOperator`] pads an operator with zero columns for unpenalized
//! scalar covariates and optionally stacks two operators of different orders
//! row-wise for mixed penalties.

use ndarray::{Array1, Array2, ArrayView1};

use crate::error::{Result, SpectfError};

/// Banded forward-difference operator of a given order.
///
/// Immutable after construction; safe to share across concurrent fits.
#[derive(Clone, Debug, PartialEq)]
pub struct DifferenceOperator {
    order: usize,
    p: usize,
    stencil: Vec<f64>,
}

impl DifferenceOperator {
    /// Build the order-`order` difference operator on a grid of length `p`.
    ///
    /// Constructed by the recursion `D(m+1) = D(1) * D(m)` starting from the
    /// first-difference stencil `(-1, +1)`. Requires `p > order >= 1`.
    pub fn new(p: usize, order: usize) -> Result<Self> {
        if order == 0 {
            return Err(SpectfError::InvalidInput(
                "difference order must be at least 1".into(),
            ));
        }
        if p <= order {
            return Err(SpectfError::Dimension(format!(
                "grid length {p} must exceed the difference order {order}; the penalty would be empty"
            )));
        }
        let mut stencil = vec![-1.0, 1.0];
        for _ in 1..order {
            // convolve with (-1, +1): s'[i] = s[i-1] - s[i]
            let mut next = vec![0.0; stencil.len() + 1];
            for (i, v) in next.iter_mut().enumerate() {
                let prev = if i > 0 { stencil[i - 1] } else { 0.0 };
                let cur = if i < stencil.len() { stencil[i] } else { 0.0 };
                *v = prev - cur;
            }
            stencil = next;
        }
        Ok(DifferenceOperator { order, p, stencil })
    }

    /// Identity map seen as the degenerate order-0 operator. Used internally
    /// by the ADMM reparametrization of an order-1 penalty.
    pub(crate) fn identity(p: usize) -> Self {
        DifferenceOperator {
            order: 0,
            p,
            stencil: vec![1.0],
        }
    }

    /// Build an operator from a custom stencil of length `order + 1`.
    ///
    /// All rows share the stencil, as in the standard construction. Mainly
    /// useful for scaled or sign-flipped variants of the difference operator.
    pub fn from_stencil(p: usize, order: usize, stencil: Vec<f64>) -> Result<Self> {
        if stencil.len() != order + 1 {
            return Err(SpectfError::Dimension(format!(
                "stencil for order {order} must have {} coefficients, got {}",
                order + 1,
                stencil.len()
            )));
        }
        if p <= order {
            return Err(SpectfError::Dimension(format!(
                "grid length {p} must exceed the operator order {order}"
            )));
        }
        Ok(DifferenceOperator { order, p, stencil })
    }

    pub fn order(&self) -> usize {
        self.order
    }

    pub fn grid_len(&self) -> usize {
        self.p
    }

    /// Number of rows, `p - order`.
    pub fn rows(&self) -> usize {
        self.p - self.order
    }

    pub fn stencil(&self) -> &[f64] {
        &self.stencil
    }

    /// `D v`.
    pub fn apply(&self, v: ArrayView1<f64>) -> Result<Array1<f64>> {
        if v.len() != self.p {
            return Err(SpectfError::Dimension(format!(
                "apply expects a vector of length {}, got {}",
                self.p,
                v.len()
            )));
        }
        let mut out = Array1::<f64>::zeros(self.rows());
        self.apply_into(v.as_slice().expect("contiguous"), out.as_slice_mut().unwrap());
        Ok(out)
    }

    pub(crate) fn apply_into(&self, v: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut s = 0.0;
            for (i, c) in self.stencil.iter().enumerate() {
                s += c * v[j + i];
            }
            *o = s;
        }
    }

    /// `D^T w`.
    pub fn apply_transpose(&self, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        if w.len() != self.rows() {
            return Err(SpectfError::Dimension(format!(
                "apply_transpose expects a vector of length {}, got {}",
                self.rows(),
                w.len()
            )));
        }
        let mut out = Array1::<f64>::zeros(self.p);
        self.apply_transpose_into(w.as_slice().expect("contiguous"), out.as_slice_mut().unwrap());
        Ok(out)
    }

    pub(crate) fn apply_transpose_into(&self, w: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        self.apply_transpose_add(w, out, 1.0);
    }

    pub(crate) fn apply_transpose_add(&self, w: &[f64], out: &mut [f64], scale: f64) {
        for (j, wj) in w.iter().enumerate() {
            let f = scale * wj;
            if f == 0.0 {
                continue;
            }
            for (i, c) in self.stencil.iter().enumerate() {
                out[j + i] += f * c;
            }
        }
    }

    /// `D^T D` as a dense symmetric matrix (banded with bandwidth
    /// `2 * order + 1`).
    pub fn gram(&self) -> Array2<f64> {
        let mut g = Array2::<f64>::zeros((self.p, self.p));
        for j in 0..self.rows() {
            for (a, ca) in self.stencil.iter().enumerate() {
                for (b, cb) in self.stencil.iter().enumerate() {
                    g[[j + a, j + b]] += ca * cb;
                }
            }
        }
        g
    }

    /// Dense materialization, for small-scale checks and reports.
    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::<f64>::zeros((self.rows(), self.p));
        for j in 0..self.rows() {
            for (i, c) in self.stencil.iter().enumerate() {
                d[[j, j + i]] = *c;
            }
        }
        d
    }
}

/// One or two difference operators, zero-padded with `r` columns so scalar
/// covariates stay unpenalized.
#[derive(Clone, Debug)]
pub struct AugmentedOperator {
    blocks: Vec<DifferenceOperator>,
    r: usize,
}

impl AugmentedOperator {
    /// Pad a single operator with `r` zero columns.
    pub fn new(base: DifferenceOperator, r: usize) -> Self {
        AugmentedOperator { blocks: vec![base], r }
    }

    /// Stack two operators of different orders row-wise, both padded with
    /// `r` zero columns. The members must share the same grid length.
    pub fn stacked_pair(a: DifferenceOperator, b: DifferenceOperator, r: usize) -> Result<Self> {
        if a.grid_len() != b.grid_len() {
            return Err(SpectfError::Dimension(format!(
                "stacked operators must share a grid length, got {} and {}",
                a.grid_len(),
                b.grid_len()
            )));
        }
        Ok(AugmentedOperator { blocks: vec![a, b], r })
    }

    pub fn grid_len(&self) -> usize {
        self.blocks[0].grid_len()
    }

    pub fn scalar_cols(&self) -> usize {
        self.r
    }

    /// Total column count `p + r`.
    pub fn cols(&self) -> usize {
        self.grid_len() + self.r
    }

    /// Total row count over all stacked blocks.
    pub fn rows(&self) -> usize {
        self.blocks.iter().map(|b| b.rows()).sum()
    }

    pub fn is_stacked(&self) -> bool {
        self.blocks.len() == 2
    }

    pub fn blocks(&self) -> &[DifferenceOperator] {
        &self.blocks
    }

    /// Row ranges of each block inside the stacked output.
    pub fn block_ranges(&self) -> Vec<std::ops::Range<usize>> {
        let mut out = Vec::with_capacity(self.blocks.len());
        let mut start = 0;
        for b in &self.blocks {
            out.push(start..start + b.rows());
            start += b.rows();
        }
        out
    }

    /// Apply the stacked operator to a `p + r` vector; the scalar part is
    /// ignored by construction.
    pub fn apply(&self, theta: ArrayView1<f64>) -> Result<Array1<f64>> {
        if theta.len() != self.cols() {
            return Err(SpectfError::Dimension(format!(
                "apply expects a vector of length {}, got {}",
                self.cols(),
                theta.len()
            )));
        }
        let f = &theta.as_slice().expect("contiguous")[..self.grid_len()];
        let mut out = Array1::<f64>::zeros(self.rows());
        let os = out.as_slice_mut().unwrap();
        let mut start = 0;
        for b in &self.blocks {
            b.apply_into(f, &mut os[start..start + b.rows()]);
            start += b.rows();
        }
        Ok(out)
    }

    /// Transpose application; the last `r` outputs are identically zero.
    pub fn apply_transpose(&self, w: ArrayView1<f64>) -> Result<Array1<f64>> {
        if w.len() != self.rows() {
            return Err(SpectfError::Dimension(format!(
                "apply_transpose expects a vector of length {}, got {}",
                self.rows(),
                w.len()
            )));
        }
        let ws = w.as_slice().expect("contiguous");
        let mut out = Array1::<f64>::zeros(self.cols());
        let os = out.as_slice_mut().unwrap();
        let mut start = 0;
        for b in &self.blocks {
            b.apply_transpose_add(&ws[start..start + b.rows()], &mut os[..self.grid_len()], 1.0);
            start += b.rows();
        }
        Ok(out)
    }

    /// `D^T D` over the padded coordinates: the trailing `r` rows and columns
    /// are zero.
    pub fn gram(&self) -> Array2<f64> {
        let p = self.grid_len();
        let mut g = Array2::<f64>::zeros((self.cols(), self.cols()));
        for b in &self.blocks {
            let gb = b.gram();
            for a in 0..p {
                for c in 0..p {
                    g[[a, c]] += gb[[a, c]];
                }
            }
        }
        g
    }

    pub fn to_dense(&self) -> Array2<f64> {
        let mut d = Array2::<f64>::zeros((self.rows(), self.cols()));
        let mut start = 0;
        for b in &self.blocks {
            let db = b.to_dense();
            for j in 0..b.rows() {
                for i in 0..b.grid_len() {
                    d[[start + j, i]] = db[[j, i]];
                }
            }
            start += b.rows();
        }
        d
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::array;

    #[test]
    fn first_difference_rows() {
        let d = DifferenceOperator::new(3, 1).unwrap();
        let dense = d.to_dense();
        assert_eq!(dense, array![[-1.0, 1.0, 0.0], [0.0, -1.0, 1.0]]);
    }

    #[test]
    fn second_difference_rows() {
        let d = DifferenceOperator::new(4, 2).unwrap();
        let dense = d.to_dense();
        assert_eq!(dense, array![[1.0, -2.0, 1.0, 0.0], [0.0, 1.0, -2.0, 1.0]]);
    }

    #[test]
    fn fourth_difference_annihilates_cubics() {
        let p = 100;
        let d = DifferenceOperator::new(p, 4).unwrap();
        let grid: Array1<f64> = (0..p).map(|j| j as f64 / (p - 1) as f64).collect();
        let cubic: Array1<f64> = grid.mapv(|w| w.powi(3));
        let out = d.apply(cubic.view()).unwrap();
        let sup = cubic.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for v in out.iter() {
            assert!(v.abs() <= 1e-10 * sup);
        }
    }

    #[test]
    fn rejects_degenerate_sizes() {
        assert!(DifferenceOperator::new(3, 3).is_err());
        assert!(DifferenceOperator::new(3, 0).is_err());
    }

    #[test]
    fn rows_annihilate_constants() {
        for order in 1..=5 {
            let d = DifferenceOperator::new(12, order).unwrap();
            let ones = Array1::<f64>::ones(12);
            let out = d.apply(ones.view()).unwrap();
            assert_eq!(d.rows(), 12 - order);
            for v in out.iter() {
                assert_abs_diff_eq!(*v, 0.0, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn composition_recursion_consistency() {
        // D(m+1) equals D(1) (of the reduced size) applied to D(m), densely.
        for p in [8usize, 17, 30] {
            for m in 1..=4 {
                if p <= m + 1 {
                    continue;
                }
                let dm = DifferenceOperator::new(p, m).unwrap().to_dense();
                let d1 = DifferenceOperator::new(p - m, 1).unwrap().to_dense();
                let dm1 = DifferenceOperator::new(p, m + 1).unwrap().to_dense();
                let composed = d1.dot(&dm);
                for (a, b) in dm1.iter().zip(composed.iter()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn gram_matches_dense() {
        let d = DifferenceOperator::new(3, 1).unwrap();
        let expected = array![[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]];
        let g = d.gram();
        for (a, b) in g.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
        for p in [5usize, 12, 50] {
            for order in 1..=4 {
                let d = DifferenceOperator::new(p, order).unwrap();
                let dense = d.to_dense();
                let naive = dense.t().dot(&dense);
                let g = d.gram();
                for (a, b) in g.iter().zip(naive.iter()) {
                    assert_abs_diff_eq!(a, b, epsilon = 1e-12);
                }
            }
        }
    }

    #[test]
    fn apply_and_transpose_small_cases() {
        let d = DifferenceOperator::new(3, 1).unwrap();
        let out = d.apply(array![2.0, 2.0, 2.0].view()).unwrap();
        assert_eq!(out, array![0.0, 0.0]);
        let t = d.apply_transpose(array![1.0, 0.0].view()).unwrap();
        assert_eq!(t, array![-1.0, 1.0, 0.0]);
    }

    #[test]
    fn augmented_operator_pads_and_stacks() {
        let d1 = DifferenceOperator::new(3, 1).unwrap();
        let aug = AugmentedOperator::new(d1, 2);
        let dense = aug.to_dense();
        assert_eq!(dense.nrows(), 2);
        assert_eq!(dense.ncols(), 5);
        for j in 0..2 {
            assert_eq!(dense[[j, 3]], 0.0);
            assert_eq!(dense[[j, 4]], 0.0);
        }

        let d4 = DifferenceOperator::new(100, 4).unwrap();
        let d1 = DifferenceOperator::new(100, 1).unwrap();
        let stacked = AugmentedOperator::stacked_pair(d4, d1, 0).unwrap();
        assert_eq!(stacked.rows(), 96 + 99);
        assert_eq!(stacked.cols(), 100);
        assert!(stacked.is_stacked());

        let d2 = DifferenceOperator::new(4, 2).unwrap();
        let aug = AugmentedOperator::new(d2, 1);
        let out = aug.apply(array![1.0, 1.0, 1.0, 1.0, 5.0].view()).unwrap();
        assert_eq!(out, array![0.0, 0.0]);
    }

    #[test]
    fn stacked_pair_rejects_mismatched_grids() {
        let a = DifferenceOperator::new(10, 2).unwrap();
        let b = DifferenceOperator::new(11, 1).unwrap();
        assert!(AugmentedOperator::stacked_pair(a, b, 0).is_err());
    }

    #[test]
    fn augmented_gram_matches_dense() {
        let d4 = DifferenceOperator::new(12, 4).unwrap();
        let d1 = DifferenceOperator::new(12, 1).unwrap();
        let aug = AugmentedOperator::stacked_pair(d4, d1, 3).unwrap();
        let dense = aug.to_dense();
        let naive = dense.t().dot(&dense);
        let g = aug.gram();
        for (a, b) in g.iter().zip(naive.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn polynomial_annihilation_all_orders() {
        // D(m) annihilates polynomials of degree < m on the equispaced grid.
        for p in [10usize, 37, 200] {
            for m in 1..=5 {
                let d = DifferenceOperator::new(p, m).unwrap();
                for deg in 0..m {
                    let poly: Array1<f64> = (0..p)
                        .map(|j| {
                            let t = j as f64 / (p - 1) as f64;
                            (2.0 * t - 0.7).powi(deg as i32)
                        })
                        .collect();
                    let sup = poly.iter().fold(0.0f64, |acc, v| acc.max(v.abs()));
                    let out = d.apply(poly.view()).unwrap();
                    for v in out.iter() {
                        assert!(
                            v.abs() <= 1e-10 * sup.max(1.0),
                            "order {m} degree {deg} p {p}: residual {v}"
                        );
                    }
                }
            }
        }
    }
}

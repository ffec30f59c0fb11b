//! Exact 1-D fused-lasso solver.
//!
//! Minimizes `0.5 * ||z - delta||^2 + lam * sum_j |delta_{j+1} - delta_j|` by
//! dynamic programming: a forward pass maintains the derivative of the
//! running message as a piecewise-linear nondecreasing function, clipped to
//! `[-lam, +lam]` before each new data term is absorbed; a backward pass
//! recovers the solution by clamping to the recorded clip bounds. Runs in
//! O(m) amortized time and returns the exact minimizer up to floating-point
//! rounding.

use std::collections::VecDeque;

use ndarray::{Array1, ArrayView1};

use crate::error::{Result, SpectfError};

/// Tie tolerance when deciding which linear piece contains a clip bound.
const CLIP_TIE_TOL: f64 = 1e-12;

/// A fused-lasso instance: quadratic fit to `target` with total-variation
/// weight `lam`.
#[derive(Clone, Debug)]
pub struct FusedProblem {
    pub target: Array1<f64>,
    pub lam: f64,
}

impl FusedProblem {
    pub fn new(target: Array1<f64>, lam: f64) -> Self {
        FusedProblem { target, lam }
    }

    pub fn solve(&self) -> Result<Array1<f64>> {
        fused_lasso_1d(self.target.view(), self.lam)
    }
}

/// Piecewise-linear nondecreasing derivative, delta-encoded: crossing a knot
/// adds `(da, db)` to the current line `a*x + b`.
struct Knot {
    x: f64,
    da: f64,
    db: f64,
}

/// Exact minimizer of `0.5 * ||z - delta||^2 + lam * TV(delta)`.
pub fn fused_lasso_1d(z: ArrayView1<f64>, lam: f64) -> Result<Array1<f64>> {
    if z.iter().any(|v| !v.is_finite()) {
        return Err(SpectfError::InvalidInput(
            "fused lasso input contains NaN or infinite entries".into(),
        ));
    }
    if !lam.is_finite() || lam < 0.0 {
        return Err(SpectfError::InvalidInput(format!(
            "fused lasso penalty must be finite and nonnegative, got {lam}"
        )));
    }
    let m = z.len();
    if m == 0 {
        return Ok(Array1::zeros(0));
    }
    if m == 1 || lam == 0.0 {
        return Ok(z.to_owned());
    }
    let zs = z.as_slice().expect("contiguous");

    // Derivative of the first message: x - z[0].
    let mut left = (1.0, -zs[0]);
    let mut right = left;
    let mut knots: VecDeque<Knot> = VecDeque::with_capacity(2 * m);
    let mut lo = vec![0.0; m];
    let mut hi = vec![0.0; m];

    for (t, &zt) in zs.iter().enumerate().skip(1) {
        // Clip bound where the derivative reaches -lam, walking from the left.
        let (mut a, mut b) = left;
        let mut popped_left = 0usize;
        let bminus = loop {
            let xstar = (-lam - b) / a;
            match knots.get(popped_left) {
                Some(k) if k.x < xstar - CLIP_TIE_TOL => {
                    a += k.da;
                    b += k.db;
                    popped_left += 1;
                }
                _ => break xstar,
            }
        };
        let folded_left = (a, b);

        // Clip bound where the derivative reaches +lam, walking from the right.
        let (mut a, mut b) = right;
        let mut popped_right = 0usize;
        let bplus = loop {
            let xstar = (lam - b) / a;
            let remaining = knots.len() - popped_right;
            if remaining > popped_left {
                let k = &knots[remaining - 1];
                if k.x > xstar + CLIP_TIE_TOL {
                    a -= k.da;
                    b -= k.db;
                    popped_right += 1;
                    continue;
                }
            }
            break xstar;
        };
        let folded_right = (a, b);

        lo[t] = bminus;
        hi[t] = bplus;

        for _ in 0..popped_left {
            knots.pop_front();
        }
        for _ in 0..popped_right {
            knots.pop_back();
        }

        // New derivative: clipped old derivative plus the data term (x - zt).
        knots.push_front(Knot {
            x: bminus,
            da: folded_left.0,
            db: folded_left.1 + lam,
        });
        knots.push_back(Knot {
            x: bplus,
            da: -folded_right.0,
            db: lam - folded_right.1,
        });
        left = (1.0, -lam - zt);
        right = (1.0, lam - zt);
    }

    // Root of the final derivative.
    let (mut a, mut b) = left;
    let mut idx = 0usize;
    let root = loop {
        let xstar = -b / a;
        match knots.get(idx) {
            Some(k) if k.x < xstar - CLIP_TIE_TOL => {
                a += k.da;
                b += k.db;
                idx += 1;
            }
            _ => break xstar,
        }
    };

    let mut delta = Array1::<f64>::zeros(m);
    delta[m - 1] = root;
    for t in (1..m).rev() {
        delta[t - 1] = delta[t].clamp(lo[t], hi[t]);
    }
    Ok(delta)
}

/// Maximum violation of the fused-lasso optimality conditions.
///
/// With `S_j = sum_{i<=j} (delta_i - z_i)`, stationarity requires
/// `S_j = lam * t_j` where `t_j` is a subgradient of the jump at boundary j:
/// `t_j = sign(delta_{j+1} - delta_j)` at an actual jump and `|t_j| <= 1`
/// otherwise, with the total residual `S_m` equal to zero. Returns the
/// largest deviation from these conditions.
pub fn kkt_check(z: ArrayView1<f64>, lam: f64, delta: ArrayView1<f64>) -> f64 {
    assert_eq!(z.len(), delta.len(), "kkt_check requires matching lengths");
    let m = z.len();
    if m == 0 {
        return 0.0;
    }
    let range = delta.iter().fold((f64::MAX, f64::MIN), |(lo, hi), v| {
        (lo.min(*v), hi.max(*v))
    });
    let jump_tol = 1e-9 * (range.1 - range.0).abs().max(1.0);

    let mut cum = 0.0;
    let mut worst = 0.0f64;
    for j in 0..m {
        cum += delta[j] - z[j];
        if j + 1 < m {
            let jump = delta[j + 1] - delta[j];
            let v = if jump > jump_tol {
                (cum - lam).abs()
            } else if jump < -jump_tol {
                (cum + lam).abs()
            } else {
                (cum.abs() - lam).max(0.0)
            };
            worst = worst.max(v);
        }
    }
    worst.max(cum.abs())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use ndarray::{array, Array1};
    use proptest::prelude::*;

    #[test]
    fn constant_input_is_fixed_point() {
        let z = Array1::from_elem(7, 3.25);
        for lam in [0.0, 0.1, 5.0] {
            let d = fused_lasso_1d(z.view(), lam).unwrap();
            for v in d.iter() {
                assert_abs_diff_eq!(*v, 3.25, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn zero_penalty_returns_input() {
        let z = array![0.3, -1.2, 4.0, 0.0, 2.5];
        let d = fused_lasso_1d(z.view(), 0.0).unwrap();
        assert_eq!(d, z);
    }

    #[test]
    fn two_level_step_shrinks_by_lam() {
        // Frozen from the two-level KKT oracle: the step shrinks by lam on
        // both sides while the jump stays positive.
        let z = array![0.0, 0.0, 1.0, 1.0];
        let d = fused_lasso_1d(z.view(), 0.25).unwrap();
        let expected = [0.125, 0.125, 0.875, 0.875];
        for (a, b) in d.iter().zip(expected.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
        assert!(kkt_check(z.view(), 0.25, d.view()) <= 1e-10);
    }

    #[test]
    fn dominating_penalty_fuses_to_mean() {
        let z = array![1.0, -2.0, 0.5, 3.0, 0.25, -1.0];
        let range = 5.0;
        let lam = z.len() as f64 * range;
        let d = fused_lasso_1d(z.view(), lam).unwrap();
        let mean = z.mean().unwrap();
        for v in d.iter() {
            assert_abs_diff_eq!(*v, mean, epsilon = 1e-10);
        }
    }

    #[test]
    fn problem_struct_solves_like_free_function() {
        let z = array![0.0, 0.0, 1.0, 1.0];
        let prob = FusedProblem::new(z.clone(), 0.25);
        assert_eq!(prob.solve().unwrap(), fused_lasso_1d(z.view(), 0.25).unwrap());
    }

    #[test]
    fn kkt_check_trivial_cases() {
        let z = array![0.4, -1.0, 2.0];
        assert_eq!(kkt_check(z.view(), 0.0, z.view()), 0.0);
        let c = Array1::from_elem(5, 1.5);
        assert_eq!(kkt_check(c.view(), 0.7, c.view()), 0.0);
    }

    #[test]
    fn rejects_non_finite_input() {
        let z = array![0.0, f64::NAN, 1.0];
        assert!(fused_lasso_1d(z.view(), 0.1).is_err());
        let z = array![0.0, 1.0];
        assert!(fused_lasso_1d(z.view(), -0.5).is_err());
        assert!(fused_lasso_1d(z.view(), f64::INFINITY).is_err());
    }

    #[test]
    fn sign_flip_antisymmetry() {
        let z = array![0.2, -0.9, 1.4, 0.4, -0.3, 2.2];
        let lam = 0.3;
        let d = fused_lasso_1d(z.view(), lam).unwrap();
        let dneg = fused_lasso_1d(z.mapv(|v| -v).view(), lam).unwrap();
        for (a, b) in d.iter().zip(dneg.iter()) {
            assert_abs_diff_eq!(*a, -*b, epsilon = 1e-12);
        }
    }

    fn segment_count(d: &Array1<f64>, tol: f64) -> usize {
        let mut n = 1;
        for j in 1..d.len() {
            if (d[j] - d[j - 1]).abs() > tol {
                n += 1;
            }
        }
        n
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn dp_satisfies_kkt_and_preserves_mean(
            z in proptest::collection::vec(-10.0f64..10.0, 2..60),
            lam in 0.001f64..20.0,
        ) {
            let z = Array1::from_vec(z);
            let d = fused_lasso_1d(z.view(), lam).unwrap();
            prop_assert!(kkt_check(z.view(), lam, d.view()) <= 1e-8);
            let dm = d.mean().unwrap();
            let zm = z.mean().unwrap();
            prop_assert!((dm - zm).abs() <= 1e-12 * (1.0 + zm.abs()) * z.len() as f64);
        }

        #[test]
        fn segments_fuse_monotonically_in_lam(
            z in proptest::collection::vec(-5.0f64..5.0, 3..40),
        ) {
            let z = Array1::from_vec(z);
            let mut prev = usize::MAX;
            for lam in [0.01, 0.05, 0.25, 1.0, 4.0, 16.0, 64.0] {
                let d = fused_lasso_1d(z.view(), lam).unwrap();
                let n = segment_count(&d, 1e-8);
                prop_assert!(n <= prev, "segments grew from {prev} to {n} at lam={lam}");
                prev = n;
            }
        }
    }
}

//! Independent oracles for the integration suite. Each test binary pulls in
//! the subset it needs.
#![allow(dead_code)]
//!
//! Everything here avoids the crate's own solver path: linear systems go
//! through Gaussian elimination with partial pivoting, difference matrices
//! are rebuilt densely from first principles, and the penalized problems are
//! solved through their box-constrained duals by projected gradient plus
//! exact coordinate sweeps.

use ndarray::{Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian elimination with partial pivoting.
pub fn gauss_solve(a: &Array2<f64>, b: &Array1<f64>) -> Array1<f64> {
    try_gauss_solve(a, b).expect("singular oracle system")
}

pub fn try_gauss_solve(a: &Array2<f64>, b: &Array1<f64>) -> Option<Array1<f64>> {
    let n = a.nrows();
    assert_eq!(n, a.ncols());
    assert_eq!(n, b.len());
    let mut m = a.clone();
    let mut rhs = b.clone();
    for col in 0..n {
        let mut piv = col;
        for row in col + 1..n {
            if m[[row, col]].abs() > m[[piv, col]].abs() {
                piv = row;
            }
        }
        if m[[piv, col]].abs() <= 1e-300 {
            return None;
        }
        if piv != col {
            for k in 0..n {
                let t = m[[col, k]];
                m[[col, k]] = m[[piv, k]];
                m[[piv, k]] = t;
            }
            rhs.swap(col, piv);
        }
        for row in col + 1..n {
            let f = m[[row, col]] / m[[col, col]];
            if f == 0.0 {
                continue;
            }
            for k in col..n {
                m[[row, k]] -= f * m[[col, k]];
            }
            rhs[row] -= f * rhs[col];
        }
    }
    let mut x = Array1::<f64>::zeros(n);
    for row in (0..n).rev() {
        let mut s = rhs[row];
        for k in row + 1..n {
            s -= m[[row, k]] * x[k];
        }
        x[row] = s / m[[row, row]];
    }
    Some(x)
}

/// Dense forward-difference matrix of the given order, built by repeated
/// first differences (independent of the crate's banded construction).
pub fn dense_diff(p: usize, order: usize) -> Array2<f64> {
    let first = |rows: usize| {
        let mut d = Array2::<f64>::zeros((rows, rows + 1));
        for j in 0..rows {
            d[[j, j]] = -1.0;
            d[[j, j + 1]] = 1.0;
        }
        d
    };
    let mut d = first(p - 1);
    for m in 1..order {
        d = first(p - m - 1).dot(&d);
    }
    d
}

/// One penalty block of a generalized-lasso objective.
pub struct PenBlock {
    pub d: Array2<f64>,
    pub lam: f64,
}

/// `0.5 * ||y - X a||^2 + sum_b lam_b ||D_b a||_1`.
pub fn gl_objective(x: &Array2<f64>, y: &Array1<f64>, blocks: &[PenBlock], a: &Array1<f64>) -> f64 {
    let r = y - &x.dot(a);
    let mut obj = 0.5 * r.dot(&r);
    for b in blocks {
        obj += b.lam * b.d.dot(a).iter().map(|v| v.abs()).sum::<f64>();
    }
    obj
}

/// Exact solve of the generalized lasso through its dual box QP:
/// maximize over `|v_j| <= lam` of the dual of
/// `0.5||y - Xa||^2 + sum lam_b ||D_b a||_1`, requiring `X` of full column
/// rank. Projected gradient ascent first, then exact coordinate sweeps.
pub fn dual_qp_oracle(
    x: &Array2<f64>,
    y: &Array1<f64>,
    blocks: &[PenBlock],
) -> (Array1<f64>, f64) {
    let p = x.ncols();
    let xtx = x.t().dot(x);
    let xty = x.t().dot(y);
    let a_ols = gauss_solve(&xtx, &xty);

    // Stack the blocks into one D with per-row bounds.
    let rows: usize = blocks.iter().map(|b| b.d.nrows()).sum();
    let mut d = Array2::<f64>::zeros((rows, p));
    let mut bound = Array1::<f64>::zeros(rows);
    let mut at = 0;
    for b in blocks {
        for j in 0..b.d.nrows() {
            for k in 0..p {
                d[[at, k]] = b.d[[j, k]];
            }
            bound[at] = b.lam;
            at += 1;
        }
    }

    // K = (X^T X)^{-1} D^T, column by column.
    let mut kdt = Array2::<f64>::zeros((p, rows));
    for j in 0..rows {
        let col: Array1<f64> = d.row(j).to_owned();
        let sol = gauss_solve(&xtx, &col);
        for i in 0..p {
            kdt[[i, j]] = sol[i];
        }
    }
    let q = d.dot(&kdt); // rows x rows, PSD
    let b_lin = d.dot(&a_ols);

    // Lipschitz constant by power iteration.
    let mut v = Array1::<f64>::from_elem(rows, 1.0 / (rows as f64).sqrt());
    let mut lmax = 1.0;
    for _ in 0..200 {
        let w = q.dot(&v);
        let norm = w.dot(&w).sqrt();
        if norm == 0.0 {
            break;
        }
        lmax = norm;
        v = w / norm;
    }
    let step = 1.0 / (lmax * 1.01 + 1e-12);

    // Projected gradient on 0.5 v'Qv - b'v over the box.
    let mut vdual = Array1::<f64>::zeros(rows);
    for _ in 0..5000 {
        let grad = q.dot(&vdual) - &b_lin;
        let mut moved = 0.0f64;
        for j in 0..rows {
            let nv = (vdual[j] - step * grad[j]).clamp(-bound[j], bound[j]);
            moved = moved.max((nv - vdual[j]).abs());
            vdual[j] = nv;
        }
        if moved < 1e-13 {
            break;
        }
    }

    // The box QP can be badly conditioned for high-order operators, where
    // first-order sweeps stall. Alternate coordinate sweeps (to identify the
    // active face) with exact equality-constrained solves on that face.
    let grad_scale = b_lin.iter().fold(1.0f64, |m, v| m.max(v.abs()));
    for _round in 0..200 {
        for _ in 0..200 {
            for j in 0..rows {
                if q[[j, j]] <= 0.0 {
                    continue;
                }
                let g = q.row(j).dot(&vdual) - b_lin[j];
                vdual[j] = (vdual[j] - g / q[[j, j]]).clamp(-bound[j], bound[j]);
            }
        }
        let free: Vec<usize> = (0..rows)
            .filter(|&j| vdual[j].abs() < bound[j] * (1.0 - 1e-12))
            .collect();
        if !free.is_empty() {
            // exact minimizer over the free coordinates
            let nf = free.len();
            let mut qff = Array2::<f64>::zeros((nf, nf));
            let mut rhs = Array1::<f64>::zeros(nf);
            for (a, &ja) in free.iter().enumerate() {
                rhs[a] = b_lin[ja];
                for (b, &jb) in free.iter().enumerate() {
                    qff[[a, b]] = q[[ja, jb]];
                }
                for j in 0..rows {
                    if vdual[j].abs() >= bound[j] * (1.0 - 1e-12) {
                        rhs[a] -= q[[ja, j]] * vdual[j];
                    }
                }
            }
            if let Some(w) = try_gauss_solve(&qff, &rhs) {
                // step as far toward the face solution as the box allows
                let mut t = 1.0f64;
                for (a, &ja) in free.iter().enumerate() {
                    let dir = w[a] - vdual[ja];
                    if dir.abs() > 0.0 {
                        let lim = if dir > 0.0 {
                            (bound[ja] - vdual[ja]) / dir
                        } else {
                            (-bound[ja] - vdual[ja]) / dir
                        };
                        t = t.min(lim.max(0.0));
                    }
                }
                for (a, &ja) in free.iter().enumerate() {
                    vdual[ja] = (vdual[ja] + t * (w[a] - vdual[ja]))
                        .clamp(-bound[ja], bound[ja]);
                }
            }
        }
        // KKT residual on the box
        let grad = q.dot(&vdual) - &b_lin;
        let mut viol = 0.0f64;
        for j in 0..rows {
            let v = if vdual[j] >= bound[j] * (1.0 - 1e-12) {
                grad[j].max(0.0)
            } else if vdual[j] <= -bound[j] * (1.0 - 1e-12) {
                (-grad[j]).max(0.0)
            } else {
                grad[j].abs()
            };
            viol = viol.max(v);
        }
        if viol <= 1e-10 * grad_scale {
            break;
        }
    }

    let alpha = &a_ols - &kdt.dot(&vdual);
    let obj = gl_objective(x, y, blocks, &alpha);
    (alpha, obj)
}

/// Exact 1-D fused lasso through its dual (projected gradient plus exact
/// coordinate sweeps on the tridiagonal box QP).
pub fn fused_oracle(z: &Array1<f64>, lam: f64) -> Array1<f64> {
    let m = z.len();
    if m <= 1 || lam == 0.0 {
        return z.clone();
    }
    let d = dense_diff(m, 1);
    let dz = d.dot(z);
    let q = d.dot(&d.t()); // tridiagonal, eigenvalues in (0, 4)
    let mut v = Array1::<f64>::zeros(m - 1);
    for _ in 0..2000 {
        let grad = q.dot(&v) - &dz;
        let mut moved = 0.0f64;
        for j in 0..m - 1 {
            let nv = (v[j] - 0.25 * grad[j]).clamp(-lam, lam);
            moved = moved.max((nv - v[j]).abs());
            v[j] = nv;
        }
        if moved < 1e-13 {
            break;
        }
    }
    for _ in 0..500_000 {
        let mut moved = 0.0f64;
        for j in 0..m - 1 {
            let g = q.row(j).dot(&v) - dz[j];
            let nv = (v[j] - g / q[[j, j]]).clamp(-lam, lam);
            moved = moved.max((nv - v[j]).abs());
            v[j] = nv;
        }
        if moved < 5e-15 {
            break;
        }
    }
    z - &d.t().dot(&v)
}

/// Textbook unpenalized Newton-Raphson GLM with canonical links, solved by
/// Gaussian elimination. Returns None when the iteration diverges.
pub fn newton_glm(
    x: &Array2<f64>,
    y: &Array1<f64>,
    bernoulli: bool,
    max_iter: usize,
) -> Option<Array1<f64>> {
    let (n, p) = (x.nrows(), x.ncols());
    let mut beta = Array1::<f64>::zeros(p);
    for _ in 0..max_iter {
        let eta = x.dot(&beta);
        let mut w = Array1::<f64>::zeros(n);
        let mut resid = Array1::<f64>::zeros(n);
        for i in 0..n {
            let mu = if bernoulli {
                1.0 / (1.0 + (-eta[i]).exp())
            } else {
                eta[i].exp()
            };
            w[i] = if bernoulli { mu * (1.0 - mu) } else { mu };
            resid[i] = y[i] - mu;
        }
        let mut h = Array2::<f64>::zeros((p, p));
        let mut g = Array1::<f64>::zeros(p);
        for i in 0..n {
            for a in 0..p {
                g[a] += x[[i, a]] * resid[i];
                for b in 0..p {
                    h[[a, b]] += w[i] * x[[i, a]] * x[[i, b]];
                }
            }
        }
        let delta = gauss_solve(&h, &g);
        let sup = delta.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        beta += &delta;
        if beta.iter().any(|v| !v.is_finite() || v.abs() > 1e8) {
            return None;
        }
        if sup < 1e-12 {
            return Some(beta);
        }
    }
    Some(beta)
}

pub fn seeded_matrix(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array2::from_shape_fn((n, p), |_| 2.0 * rng.random::<f64>() - 1.0)
}

pub fn seeded_vector(n: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(n, |_| 2.0 * rng.random::<f64>() - 1.0)
}

//! Specialized ADMM for functional trend filtering.
//!
//! The fit minimizes `0.5 * ||y - X theta||^2 + sum_i lam_i * ||D(m_i) f||_1`
//! over `theta = (f, gamma)`, where the scalar coefficients `gamma` are never
//! penalized. Each penalty of order `m` is reparametrized one order down:
//! with `M = D(m-1)` the constraint is `M f = delta` and the delta-subproblem
//! carries a first-difference l1 penalty, so it is an exact 1-D fused lasso
//! solved by [`fused_lasso_1d`]. The alpha-update is a linear solve with the
//! factorization of `X^T X + rho * M^T M` cached per `(design, rho)`.
//!
//! `rho` is kept fixed at `lam` (the maximum of the two weights for a mixed
//! penalty), so the factorization is computed once per grid point and
//! lambda-paths are warm-started from the previous solution.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::diffops::{AugmentedOperator, DifferenceOperator};
use crate::error::{Result, SpectfError};
use crate::fused1d::fused_lasso_1d;
use crate::linalg::Cholesky;

/// One penalty term: the l1 norm of the `diff_order`-th discrete difference
/// of the functional coefficient, weighted by `lam`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyTerm {
    pub diff_order: usize,
    pub lam: f64,
}

/// One or two penalty terms with distinct difference orders.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltySpec {
    terms: Vec<PenaltyTerm>,
}

impl PenaltySpec {
    pub fn single(diff_order: usize, lam: f64) -> Result<Self> {
        Self::from_terms(vec![PenaltyTerm { diff_order, lam }])
    }

    pub fn mixed(order_a: usize, lam_a: f64, order_b: usize, lam_b: f64) -> Result<Self> {
        Self::from_terms(vec![
            PenaltyTerm { diff_order: order_a, lam: lam_a },
            PenaltyTerm { diff_order: order_b, lam: lam_b },
        ])
    }

    pub fn from_terms(terms: Vec<PenaltyTerm>) -> Result<Self> {
        if terms.is_empty() || terms.len() > 2 {
            return Err(SpectfError::InvalidInput(format!(
                "a penalty has one or two terms, got {}",
                terms.len()
            )));
        }
        for t in &terms {
            if t.diff_order == 0 {
                return Err(SpectfError::InvalidInput(
                    "penalized difference order must be at least 1".into(),
                ));
            }
            if !t.lam.is_finite() || t.lam < 0.0 {
                return Err(SpectfError::InvalidInput(format!(
                    "penalty weight must be finite and nonnegative, got {}",
                    t.lam
                )));
            }
        }
        if terms.len() == 2 && terms[0].diff_order == terms[1].diff_order {
            return Err(SpectfError::InvalidInput(
                "a mixed penalty needs two distinct difference orders".into(),
            ));
        }
        Ok(PenaltySpec { terms })
    }

    pub fn terms(&self) -> &[PenaltyTerm] {
        &self.terms
    }

    pub fn is_mixed(&self) -> bool {
        self.terms.len() == 2
    }

    pub fn max_lam(&self) -> f64 {
        self.terms.iter().fold(0.0, |m, t| m.max(t.lam))
    }

    pub fn total_lam(&self) -> f64 {
        self.terms.iter().map(|t| t.lam).sum()
    }

    /// Same orders, new weights. Used when walking a lambda grid.
    pub fn with_lams(&self, lams: &[f64]) -> Result<Self> {
        if lams.len() != self.terms.len() {
            return Err(SpectfError::Dimension(format!(
                "expected {} weights, got {}",
                self.terms.len(),
                lams.len()
            )));
        }
        Self::from_terms(
            self.terms
                .iter()
                .zip(lams)
                .map(|(t, &lam)| PenaltyTerm { diff_order: t.diff_order, lam })
                .collect(),
        )
    }

    pub fn orders(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.diff_order).collect()
    }
}

/// How the augmented parameter is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum RhoRule {
    /// `rho = lam` for a single penalty, `rho = max(lam1, lam2)` for a mixed
    /// one. Keeps the factorization stable along the solution path.
    EqualLambda,
    /// A fixed positive value.
    Fixed(f64),
}

#[derive(Clone, Debug)]
pub struct AdmmConfig {
    pub rho: RhoRule,
    pub max_iter: usize,
    pub eps_abs: f64,
    pub eps_rel: f64,
    pub warm_start: Option<AdmmState>,
}

impl Default for AdmmConfig {
    fn default() -> Self {
        AdmmConfig {
            rho: RhoRule::EqualLambda,
            max_iter: 5000,
            eps_abs: 1e-5,
            eps_rel: 1e-4,
            warm_start: None,
        }
    }
}

impl AdmmConfig {
    /// Tight tolerances for oracle comparisons and saturation checks.
    pub fn tight() -> Self {
        AdmmConfig {
            max_iter: 200_000,
            eps_abs: 1e-11,
            eps_rel: 1e-11,
            ..AdmmConfig::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if self.eps_abs <= 0.0 || self.eps_rel <= 0.0 {
            return Err(SpectfError::InvalidInput(
                "ADMM tolerances must be positive".into(),
            ));
        }
        if self.max_iter == 0 {
            return Err(SpectfError::InvalidInput(
                "ADMM needs at least one iteration".into(),
            ));
        }
        if let RhoRule::Fixed(v) = self.rho {
            if !(v > 0.0) {
                return Err(SpectfError::InvalidInput(
                    "a fixed rho must be positive".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Solver state: primal vector, stacked auxiliary/dual blocks and residuals.
#[derive(Clone, Debug)]
pub struct AdmmState {
    /// Length `p + r`: the functional coefficient on the grid, then the
    /// scalar coefficients.
    pub alpha: Array1<f64>,
    /// Stacked auxiliary vector, one block per penalty term.
    pub delta: Array1<f64>,
    /// Scaled dual, matching `delta`.
    pub u: Array1<f64>,
    pub iter: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub converged: bool,
    /// Augmented parameter the state was produced with; used to rescale the
    /// dual when warm-starting at a different rho.
    pub rho: f64,
}

/// Cached problem data for repeated solves against the same design.
pub(crate) struct TfSolver {
    p: usize,
    r: usize,
    orders: Vec<usize>,
    /// Reduced constraint operators (order `m - 1`, identity for `m = 1`).
    cons: AugmentedOperator,
    /// Full-order operators, for objective evaluation.
    full: AugmentedOperator,
    cons_gram: Array2<f64>,
    xtx: Array2<f64>,
    xty: Array1<f64>,
    yty: f64,
    chol: Option<(f64, Cholesky)>,
}

fn reduced_operator(p: usize, diff_order: usize) -> Result<DifferenceOperator> {
    if diff_order == 1 {
        Ok(DifferenceOperator::identity(p))
    } else {
        DifferenceOperator::new(p, diff_order - 1)
    }
}

fn build_aug(p: usize, orders: &[usize], r: usize, reduce: bool) -> Result<AugmentedOperator> {
    let mk = |m: usize| -> Result<DifferenceOperator> {
        if reduce {
            reduced_operator(p, m)
        } else {
            DifferenceOperator::new(p, m)
        }
    };
    match orders {
        [m] => Ok(AugmentedOperator::new(mk(*m)?, r)),
        [a, b] => AugmentedOperator::stacked_pair(mk(*a)?, mk(*b)?, r),
        _ => Err(SpectfError::InvalidInput(
            "a penalty has one or two terms".into(),
        )),
    }
}

impl TfSolver {
    pub(crate) fn new(
        x: ArrayView2<f64>,
        y: ArrayView1<f64>,
        orders: &[usize],
        n_scalar: usize,
    ) -> Result<Self> {
        if x.nrows() != y.len() {
            return Err(SpectfError::Dimension(format!(
                "design has {} rows but the response has {} entries",
                x.nrows(),
                y.len()
            )));
        }
        if x.iter().any(|v| !v.is_finite()) || y.iter().any(|v| !v.is_finite()) {
            return Err(SpectfError::InvalidInput(
                "design and response must be finite".into(),
            ));
        }
        let xtx = crate::linalg::weighted_gram(x, None);
        let xty = crate::linalg::weighted_xtv(x, y, None);
        let yty = y.dot(&y);
        Self::from_gram(xtx, xty, yty, orders, n_scalar)
    }

    pub(crate) fn from_gram(
        xtx: Array2<f64>,
        xty: Array1<f64>,
        yty: f64,
        orders: &[usize],
        n_scalar: usize,
    ) -> Result<Self> {
        let cols = xtx.nrows();
        if cols != xtx.ncols() || cols != xty.len() {
            return Err(SpectfError::Dimension(
                "gram matrix and moment vector sizes disagree".into(),
            ));
        }
        if n_scalar >= cols {
            return Err(SpectfError::Dimension(format!(
                "{n_scalar} scalar columns leave no functional part in a {cols}-column design"
            )));
        }
        let p = cols - n_scalar;
        let max_order = orders.iter().copied().max().unwrap_or(1);
        if p <= max_order {
            return Err(SpectfError::Dimension(format!(
                "grid length {p} must exceed the largest penalized order {max_order}"
            )));
        }
        let cons = build_aug(p, orders, n_scalar, true)?;
        let full = build_aug(p, orders, n_scalar, false)?;
        let cons_gram = cons.gram();
        Ok(TfSolver {
            p,
            r: n_scalar,
            orders: orders.to_vec(),
            cons,
            full,
            cons_gram,
            xtx,
            xty,
            yty,
            chol: None,
        })
    }

    pub(crate) fn cols(&self) -> usize {
        self.p + self.r
    }

    /// Swap in a new weighted design; invalidates the factorization. Used by
    /// the Fisher-scoring outer loop.
    pub(crate) fn set_design(&mut self, xtx: Array2<f64>, xty: Array1<f64>, yty: f64) {
        debug_assert_eq!(xtx.nrows(), self.cols());
        self.xtx = xtx;
        self.xty = xty;
        self.yty = yty;
        self.chol = None;
    }

    fn rho_for(&self, spec: &PenaltySpec, config: &AdmmConfig) -> f64 {
        match config.rho {
            RhoRule::EqualLambda => spec.max_lam(),
            RhoRule::Fixed(v) => v,
        }
    }

    /// Ridge jitter the current factorization needed, if any.
    pub(crate) fn last_jitter(&self) -> f64 {
        self.chol.as_ref().map_or(0.0, |(_, ch)| ch.jitter)
    }

    fn ensure_factor(&mut self, rho: f64) -> Result<&Cholesky> {
        let stale = match &self.chol {
            Some((r, _)) => *r != rho,
            None => true,
        };
        if stale {
            let mut a = self.xtx.clone();
            if rho != 0.0 {
                a.scaled_add(rho, &self.cons_gram);
            }
            let ch = Cholesky::factor(a.view())?;
            self.chol = Some((rho, ch));
        }
        Ok(&self.chol.as_ref().unwrap().1)
    }

    /// `0.5 * ||y - X theta||^2 + sum_i lam_i ||D_i f||_1`.
    pub(crate) fn objective(&self, spec: &PenaltySpec, alpha: ArrayView1<f64>) -> f64 {
        let quad = 0.5
            * (self.yty - 2.0 * alpha.dot(&self.xty)
                + alpha.dot(&crate::linalg::sym_matvec(self.xtx.view(), alpha)));
        let mut pen = 0.0;
        for (term, block) in spec.terms().iter().zip(self.full.blocks()) {
            if term.lam == 0.0 {
                continue;
            }
            let df = block
                .apply(alpha.slice(s![..self.p]))
                .expect("dimensions fixed at construction");
            pen += term.lam * df.iter().map(|v| v.abs()).sum::<f64>();
        }
        quad + pen
    }

    /// Effective augmented parameter: zero means an unpenalized direct solve.
    fn effective_rho(&self, spec: &PenaltySpec, config: &AdmmConfig) -> f64 {
        if spec.max_lam() == 0.0 {
            0.0
        } else {
            self.rho_for(spec, config)
        }
    }

    /// Factor the normal matrix for this penalty, making the solver ready for
    /// [`TfSolver::solve_shared`] calls. Returns the rho the factor is for.
    pub(crate) fn prepare(&mut self, spec: &PenaltySpec, config: &AdmmConfig) -> Result<f64> {
        config.validate()?;
        let rho = self.effective_rho(spec, config);
        self.ensure_factor(rho)?;
        Ok(rho)
    }

    /// A valid warm start centered at `alpha`: auxiliary blocks at `M alpha`,
    /// dual at zero.
    pub(crate) fn warm_state(&self, alpha: &Array1<f64>, rho: f64) -> Result<AdmmState> {
        let delta = self.cons.apply(alpha.view())?;
        let rows = delta.len();
        Ok(AdmmState {
            alpha: alpha.clone(),
            delta,
            u: Array1::zeros(rows),
            iter: 0,
            primal_res: 0.0,
            dual_res: 0.0,
            converged: false,
            rho,
        })
    }

    pub(crate) fn solve(
        &mut self,
        spec: &PenaltySpec,
        config: &AdmmConfig,
        warm: Option<&AdmmState>,
    ) -> Result<AdmmState> {
        self.prepare(spec, config)?;
        let xty = self.xty.clone();
        self.solve_shared(spec, config, warm, xty.view())
    }

    /// Solve against a possibly different response moment vector using the
    /// factorization produced by [`TfSolver::prepare`]. Immutable, so
    /// replicate fits can run concurrently over one shared solver.
    pub(crate) fn solve_shared(
        &self,
        spec: &PenaltySpec,
        config: &AdmmConfig,
        warm: Option<&AdmmState>,
        xty: ArrayView1<f64>,
    ) -> Result<AdmmState> {
        config.validate()?;
        if spec.orders() != self.orders {
            return Err(SpectfError::InvalidInput(
                "penalty orders do not match the solver's operators".into(),
            ));
        }
        let rho = self.effective_rho(spec, config);
        let ch = match &self.chol {
            Some((r, ch)) if *r == rho => ch,
            _ => {
                return Err(SpectfError::InvalidInput(
                    "solver not prepared for this penalty; call prepare first".into(),
                ))
            }
        };
        if rho == 0.0 {
            let alpha = ch.solve(xty);
            let delta = self.cons.apply(alpha.view())?;
            let rows = delta.len();
            return Ok(AdmmState {
                alpha,
                delta,
                u: Array1::zeros(rows),
                iter: 0,
                primal_res: 0.0,
                dual_res: 0.0,
                converged: true,
                rho: 0.0,
            });
        }
        let rows = self.cons.rows();
        let cols = self.cols();

        let (mut delta, mut u) = match warm.or(config.warm_start.as_ref()) {
            Some(w) if w.delta.len() == rows => {
                let mut u = w.u.clone();
                if w.rho > 0.0 && w.rho != rho {
                    u.mapv_inplace(|v| v * w.rho / rho);
                }
                (w.delta.clone(), u)
            }
            Some(_) => {
                return Err(SpectfError::Dimension(
                    "warm start does not match the penalty structure".into(),
                ))
            }
            None => (Array1::zeros(rows), Array1::zeros(rows)),
        };

        let ranges = self.cons.block_ranges();
        let weights: Vec<f64> = spec.terms().iter().map(|t| t.lam / rho).collect();

        let mut alpha = Array1::<f64>::zeros(cols);
        let mut m_alpha = Array1::<f64>::zeros(rows);
        let mut rhs = Array1::<f64>::zeros(cols);
        let sqrt_rows = (rows as f64).sqrt();
        let sqrt_cols = (cols as f64).sqrt();

        let mut iter = 0;
        let mut primal_res = f64::INFINITY;
        let mut dual_res = f64::INFINITY;
        let mut converged = false;

        while iter < config.max_iter {
            iter += 1;

            // alpha-update: (X^T X + rho M^T M)^-1 (X^T y + rho M^T (delta - u))
            rhs.assign(&xty);
            {
                let rs = rhs.as_slice_mut().unwrap();
                for (block, range) in self.cons.blocks().iter().zip(&ranges) {
                    let diff: Vec<f64> = range
                        .clone()
                        .map(|j| delta[j] - u[j])
                        .collect();
                    block.apply_transpose_add(&diff, &mut rs[..self.p], rho);
                }
            }
            alpha = ch.solve(rhs.view());

            // delta-update: block-wise fused lasso on M alpha + u
            {
                let f_part = &alpha.as_slice().unwrap()[..self.p];
                let ms = m_alpha.as_slice_mut().unwrap();
                let mut start = 0;
                for block in self.cons.blocks() {
                    block.apply_into(f_part, &mut ms[start..start + block.rows()]);
                    start += block.rows();
                }
            }
            let mut dual_sq = 0.0;
            let mut primal_sq = 0.0;
            for ((range, w), block) in ranges.iter().zip(&weights).zip(self.cons.blocks()) {
                let z: Array1<f64> =
                    Array1::from_iter(range.clone().map(|j| m_alpha[j] + u[j]));
                let new_block = fused_lasso_1d(z.view(), *w)?;
                // dual residual contribution: rho * M^T (delta_new - delta_old)
                let diff: Vec<f64> = range
                    .clone()
                    .zip(new_block.iter())
                    .map(|(j, nv)| {
                        let d = nv - delta[j];
                        delta[j] = *nv;
                        d
                    })
                    .collect();
                let mut back = vec![0.0; self.p];
                block.apply_transpose_add(&diff, &mut back, rho);
                dual_sq += back.iter().map(|v| v * v).sum::<f64>();
                for (j, nv) in range.clone().zip(new_block.iter()) {
                    let r = m_alpha[j] - nv;
                    primal_sq += r * r;
                    u[j] += r;
                }
            }
            primal_res = primal_sq.sqrt();
            dual_res = dual_sq.sqrt();

            let norm_m_alpha = m_alpha.dot(&m_alpha).sqrt();
            let norm_delta = delta.dot(&delta).sqrt();
            let eps_pri = sqrt_rows * config.eps_abs
                + config.eps_rel * norm_m_alpha.max(norm_delta);
            let mut dual_ref = vec![0.0; self.p];
            for (block, range) in self.cons.blocks().iter().zip(&ranges) {
                let ub: Vec<f64> = range.clone().map(|j| u[j]).collect();
                block.apply_transpose_add(&ub, &mut dual_ref, rho);
            }
            let eps_dual = sqrt_cols * config.eps_abs
                + config.eps_rel * dual_ref.iter().map(|v| v * v).sum::<f64>().sqrt();

            if primal_res <= eps_pri && dual_res <= eps_dual {
                converged = true;
                break;
            }
        }

        Ok(AdmmState {
            alpha,
            delta,
            u,
            iter,
            primal_res,
            dual_res,
            converged,
            rho,
        })
    }
}

/// Solve one functional trend-filtering problem.
///
/// `x` is the full design `[spectra | scalars]` with `n_scalar` trailing
/// unpenalized columns. Returns the final state with diagnostics; a fit that
/// hits `max_iter` is returned with `converged == false`.
pub fn admm_solve(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    penalty: &PenaltySpec,
    n_scalar: usize,
    config: &AdmmConfig,
) -> Result<AdmmState> {
    let mut solver = TfSolver::new(x, y, &penalty.orders(), n_scalar)?;
    solver.solve(penalty, config, None)
}

/// Two-term penalty entry point; identical to [`admm_solve`] with a mixed
/// [`PenaltySpec`].
pub fn mixed_solve(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    penalty: &PenaltySpec,
    n_scalar: usize,
    config: &AdmmConfig,
) -> Result<AdmmState> {
    if !penalty.is_mixed() {
        return Err(SpectfError::InvalidInput(
            "mixed_solve needs a two-term penalty".into(),
        ));
    }
    admm_solve(x, y, penalty, n_scalar, config)
}

/// Solve along a grid of penalties (same orders, descending strength),
/// warm-starting each fit from the previous solution. Failures are recorded
/// per grid point without aborting the rest of the path.
pub fn solve_path(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    grid: &[PenaltySpec],
    n_scalar: usize,
    config: &AdmmConfig,
) -> Result<Vec<Result<AdmmState>>> {
    let first = grid.first().ok_or_else(|| {
        SpectfError::InvalidInput("the penalty grid must be non-empty".into())
    })?;
    let mut solver = TfSolver::new(x, y, &first.orders(), n_scalar)?;
    let mut out = Vec::with_capacity(grid.len());
    let mut warm: Option<AdmmState> = None;
    for spec in grid {
        let res = solver.solve(spec, config, warm.as_ref());
        if let Ok(state) = &res {
            warm = Some(state.clone());
        }
        out.push(res);
    }
    Ok(out)
}

/// Smallest weight at which the single-penalty solution is polynomial
/// (`D f = 0`): the sup-norm of the unique dual variable at the
/// polynomial-restricted least-squares fit.
pub fn lambda_max(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    diff_order: usize,
    n_scalar: usize,
) -> Result<f64> {
    let cols = x.ncols();
    if x.nrows() != y.len() {
        return Err(SpectfError::Dimension(
            "design rows and response length disagree".into(),
        ));
    }
    if n_scalar >= cols {
        return Err(SpectfError::Dimension(
            "no functional columns left after the scalar block".into(),
        ));
    }
    let p = cols - n_scalar;
    let d = DifferenceOperator::new(p, diff_order)?;
    let xtx = crate::linalg::weighted_gram(x, None);
    let xty = crate::linalg::weighted_xtv(x, y, None);
    lambda_max_from_gram(&xtx, &xty, &d, p, n_scalar)
}

pub(crate) fn lambda_max_from_gram(
    xtx: &Array2<f64>,
    xty: &Array1<f64>,
    d: &DifferenceOperator,
    p: usize,
    n_scalar: usize,
) -> Result<f64> {
    let m = d.order();
    let cols = p + n_scalar;
    // Null-space basis of D on the functional part: polynomials of degree < m
    // on the normalized index grid, plus the identity over scalar columns.
    let dim = m + n_scalar;
    let mut q = Array2::<f64>::zeros((cols, dim));
    for j in 0..p {
        let t = if p > 1 { 2.0 * j as f64 / (p - 1) as f64 - 1.0 } else { 0.0 };
        let mut v = 1.0;
        for deg in 0..m {
            q[[j, deg]] = v;
            v *= t;
        }
    }
    for k in 0..n_scalar {
        q[[p + k, m + k]] = 1.0;
    }
    // Restricted least squares: theta0 = Q c, (Q^T XtX Q) c = Q^T Xty.
    let xtx_q = xtx.dot(&q);
    let small = q.t().dot(&xtx_q);
    let rhs = q.t().dot(xty);
    let ch = Cholesky::factor(small.view())?;
    let c = ch.solve(rhs.view());
    let theta0 = q.dot(&c);
    // Gradient of the quadratic loss at the restricted fit.
    let g = xty - &xtx.dot(&theta0);
    let g_f = g.slice(s![..p]).to_owned();
    // Unique dual: (D D^T) w = D g_f.
    let rows = d.rows();
    let stencil = d.stencil();
    let mut ddt = Array2::<f64>::zeros((rows, rows));
    // Toeplitz band; short grids can have fewer rows than the bandwidth.
    for off in 0..=m.min(rows.saturating_sub(1)) {
        let mut acc = 0.0;
        for i in 0..=(m - off) {
            acc += stencil[i] * stencil[i + off];
        }
        for j in 0..rows - off {
            ddt[[j, j + off]] = acc;
            ddt[[j + off, j]] = acc;
        }
    }
    let dg = d.apply(g_f.view())?;
    let ch = Cholesky::factor(ddt.view())?;
    let w = ch.solve(dg.view());
    Ok(w.iter().fold(0.0f64, |acc, v| acc.max(v.abs())))
}

/// Geometric grid from `lmax` down to `1e-4 * lmax`, strongest first.
pub fn default_lambda_grid(lmax: f64, len: usize) -> Vec<f64> {
    lambda_grid(lmax, len, 4.0)
}

/// Geometric grid spanning `decades` orders of magnitude below `lmax`.
pub fn lambda_grid(lmax: f64, len: usize, decades: f64) -> Vec<f64> {
    let lmax = if lmax > 0.0 && lmax.is_finite() { lmax } else { 1.0 };
    if len <= 1 {
        return vec![lmax];
    }
    let lmin = lmax * 10f64.powf(-decades);
    let step = (lmin / lmax).powf(1.0 / (len - 1) as f64);
    (0..len).map(|i| lmax * step.powi(i as i32)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fused1d::fused_lasso_1d;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn seeded_design(n: usize, p: usize, seed: u64) -> (Array2<f64>, Array1<f64>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = Array2::from_shape_fn((n, p), |_| rng.random::<f64>() * 2.0 - 1.0);
        let y = Array1::from_shape_fn(n, |_| rng.random::<f64>() * 2.0 - 1.0);
        (x, y)
    }

    #[test]
    fn identity_design_zero_penalty_interpolates() {
        let n = 8;
        let x = Array2::<f64>::eye(n);
        let y = Array1::from_shape_fn(n, |i| (i as f64).sin());
        let spec = PenaltySpec::single(1, 0.0).unwrap();
        let st = admm_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::default()).unwrap();
        for (a, b) in st.alpha.iter().zip(y.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-10);
        }
    }

    #[test]
    fn identity_design_reduces_to_fused_lasso() {
        let n = 40;
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let y = Array1::from_shape_fn(n, |_| rng.random::<f64>() * 4.0 - 2.0);
        let x = Array2::<f64>::eye(n);
        let lam = 0.35;
        let spec = PenaltySpec::single(1, lam).unwrap();
        let st = admm_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::tight()).unwrap();
        let direct = fused_lasso_1d(y.view(), lam).unwrap();
        for (a, b) in st.alpha.iter().zip(direct.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn single_grid_point_path_matches_solo_solve() {
        let (x, y) = seeded_design(15, 9, 11);
        let spec = PenaltySpec::single(2, 0.8).unwrap();
        let path = solve_path(x.view(), y.view(), std::slice::from_ref(&spec), 0, &AdmmConfig::default())
            .unwrap();
        let solo = admm_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::default()).unwrap();
        assert_eq!(path.len(), 1);
        let st = path[0].as_ref().unwrap();
        for (a, b) in st.alpha.iter().zip(solo.alpha.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-12);
        }
    }

    #[test]
    fn lambda_at_saturation_gives_polynomial_fit() {
        let (x, y) = seeded_design(20, 10, 7);
        let order = 2;
        let lmax = lambda_max(x.view(), y.view(), order, 0).unwrap();
        assert!(lmax > 0.0);
        let spec = PenaltySpec::single(order, 1.01 * lmax).unwrap();
        let st = admm_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::tight()).unwrap();
        let d = DifferenceOperator::new(10, order).unwrap();
        let df = d.apply(st.alpha.view()).unwrap();
        let sup = df.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(sup <= 1e-6, "||D f||_inf = {sup} above saturation");
    }

    #[test]
    fn lambda_max_scales_linearly_with_response() {
        let (x, y) = seeded_design(18, 8, 21);
        let l1 = lambda_max(x.view(), y.view(), 2, 0).unwrap();
        let y3 = y.mapv(|v| 3.0 * v);
        let l3 = lambda_max(x.view(), y3.view(), 2, 0).unwrap();
        assert_abs_diff_eq!(l3, 3.0 * l1, epsilon = 1e-9 * l1.max(1.0));
    }

    #[test]
    fn lambda_max_on_short_grids() {
        // fewer operator rows than the stencil width (p = 6, order 4)
        let (x, y) = seeded_design(12, 6, 33);
        let lmax = lambda_max(x.view(), y.view(), 4, 0).unwrap();
        assert!(lmax.is_finite() && lmax > 0.0);
        // saturation still holds
        let spec = PenaltySpec::single(4, 1.01 * lmax).unwrap();
        let st = admm_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::tight()).unwrap();
        let d = DifferenceOperator::new(6, 4).unwrap();
        let df = d.apply(st.alpha.view()).unwrap();
        assert!(df.iter().all(|v| v.abs() <= 1e-6));
        // and with scalar columns appended
        let (x, y) = seeded_design(14, 9, 34);
        let lmax = lambda_max(x.view(), y.view(), 4, 3).unwrap();
        assert!(lmax.is_finite());
    }

    #[test]
    fn lambda_max_zero_for_polynomial_response() {
        // y generated by a degree-1 functional coefficient: the restricted
        // fit is already optimal.
        let (x, _) = seeded_design(20, 10, 5);
        let f: Array1<f64> = (0..10).map(|j| 0.5 + 0.2 * j as f64).collect();
        let y = x.dot(&f);
        let lmax = lambda_max(x.view(), y.view(), 2, 0).unwrap();
        assert!(lmax <= 1e-8, "lambda_max = {lmax}");
    }

    #[test]
    fn mixed_zero_weights_give_least_squares() {
        let (x, y) = seeded_design(25, 8, 13);
        let spec = PenaltySpec::mixed(4, 0.0, 1, 0.0).unwrap();
        let st = mixed_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::default()).unwrap();
        // compare against the normal equations solved independently
        let xtx = x.t().dot(&x);
        let xty = x.t().dot(&y);
        let ch = crate::linalg::Cholesky::factor(xtx.view()).unwrap();
        let ols = ch.solve(xty.view());
        for (a, b) in st.alpha.iter().zip(ols.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-8);
        }
    }

    #[test]
    fn mixed_with_inert_second_block_matches_single() {
        let (x, y) = seeded_design(24, 12, 17);
        let lam = 0.6;
        let mixed = PenaltySpec::mixed(2, lam, 1, 0.0).unwrap();
        let single = PenaltySpec::single(2, lam).unwrap();
        let cfg = AdmmConfig::tight();
        let a = admm_solve(x.view(), y.view(), &mixed, 0, &cfg).unwrap();
        let b = admm_solve(x.view(), y.view(), &single, 0, &cfg).unwrap();
        for (u, v) in a.alpha.iter().zip(b.alpha.iter()) {
            assert_abs_diff_eq!(u, v, epsilon = 1e-6);
        }
    }

    #[test]
    fn objective_dominates_reference_points() {
        let (x, y) = seeded_design(22, 10, 29);
        let spec = PenaltySpec::single(3, 0.4).unwrap();
        let mut solver = TfSolver::new(x.view(), y.view(), &spec.orders(), 0).unwrap();
        let st = solver.solve(&spec, &AdmmConfig::default(), None).unwrap();
        let at_solution = solver.objective(&spec, st.alpha.view());
        let zero = Array1::<f64>::zeros(10);
        assert!(at_solution <= solver.objective(&spec, zero.view()) + 1e-9);
    }

    #[test]
    fn rejects_invalid_specs() {
        assert!(PenaltySpec::single(0, 1.0).is_err());
        assert!(PenaltySpec::single(2, -1.0).is_err());
        assert!(PenaltySpec::mixed(2, 1.0, 2, 1.0).is_err());
        let (x, y) = seeded_design(5, 3, 1);
        let spec = PenaltySpec::single(4, 1.0).unwrap();
        assert!(admm_solve(x.view(), y.view(), &spec, 0, &AdmmConfig::default()).is_err());
    }

    #[test]
    fn rejects_invalid_configs() {
        let (x, y) = seeded_design(10, 4, 2);
        let spec = PenaltySpec::single(1, 0.5).unwrap();
        for bad in [
            AdmmConfig { eps_abs: 0.0, ..AdmmConfig::default() },
            AdmmConfig { eps_rel: -1.0, ..AdmmConfig::default() },
            AdmmConfig { max_iter: 0, ..AdmmConfig::default() },
            AdmmConfig { rho: RhoRule::Fixed(0.0), ..AdmmConfig::default() },
        ] {
            assert!(admm_solve(x.view(), y.view(), &spec, 0, &bad).is_err());
        }
    }

    #[test]
    fn sign_flipped_operator_gives_identical_solution() {
        // The l1 penalty is sign-invariant: solving with -D in the
        // reparametrized constraint must return the same alpha.
        let (x, y) = seeded_design(18, 10, 41);
        let spec = PenaltySpec::single(3, 0.7).unwrap();
        let cfg = AdmmConfig::tight();
        let base = admm_solve(x.view(), y.view(), &spec, 0, &cfg).unwrap();

        let mut solver = TfSolver::new(x.view(), y.view(), &[3], 0).unwrap();
        let flipped = DifferenceOperator::from_stencil(
            10,
            2,
            DifferenceOperator::new(10, 2)
                .unwrap()
                .stencil()
                .iter()
                .map(|v| -v)
                .collect(),
        )
        .unwrap();
        let flipped_full = DifferenceOperator::from_stencil(
            10,
            3,
            DifferenceOperator::new(10, 3)
                .unwrap()
                .stencil()
                .iter()
                .map(|v| -v)
                .collect(),
        )
        .unwrap();
        solver.cons = AugmentedOperator::new(flipped, 0);
        solver.full = AugmentedOperator::new(flipped_full, 0);
        solver.cons_gram = solver.cons.gram();
        let st = solver.solve(&spec, &cfg, None).unwrap();
        for (a, b) in st.alpha.iter().zip(base.alpha.iter()) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-7);
        }
    }

    #[test]
    fn lambda_grid_is_geometric_and_descending() {
        let g = default_lambda_grid(10.0, 50);
        assert_eq!(g.len(), 50);
        assert_abs_diff_eq!(g[0], 10.0);
        assert_abs_diff_eq!(g[49], 10.0 * 1e-4, epsilon = 1e-12);
        for w in g.windows(2) {
            assert!(w[1] < w[0]);
        }
    }
}

//! User-facing model layer.
//!
//! Wraps the ADMM core into fits: the Gaussian functional linear model, the
//! partial variant with unpenalized scalar covariates, Bernoulli / Poisson
//! responses via a penalized Fisher-scoring outer loop, the ridge-spline
//! baseline, prediction, and cross-validation / holdout tuning.

use ndarray::{s, Array1, Array2, ArrayView1, ArrayView2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, AdmmState, PenaltySpec, TfSolver};
use crate::diffops::DifferenceOperator;
use crate::error::{Result, SpectfError};
use crate::ingest::PreprocessMeta;
use crate::linalg::{weighted_gram, weighted_xtv, Cholesky};

/// Maximum Fisher-scoring iterations for non-Gaussian fits.
const GLM_MAX_OUTER: usize = 100;
/// Relative objective-change tolerance stopping the outer loop.
const GLM_REL_TOL: f64 = 1e-6;
/// Step-halving attempts when a Fisher step would increase the objective.
const GLM_MAX_HALVINGS: usize = 20;
/// Floor on the working weights, keeping the weighted Gram factorizable.
const WEIGHT_FLOOR: f64 = 1e-6;
/// Probability clamp for Bernoulli predictions.
const PROB_CLAMP: f64 = 1e-8;
/// Divergence guard on the coefficient sup-norm.
const DIVERGENCE_LIMIT: f64 = 1e6;

/// Response distribution with its canonical link.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Gaussian,
    Bernoulli,
    Poisson,
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Family::Gaussian => write!(f, "gaussian"),
            Family::Bernoulli => write!(f, "bernoulli"),
            Family::Poisson => write!(f, "poisson"),
        }
    }
}

impl std::str::FromStr for Family {
    type Err = SpectfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gaussian" | "normal" => Ok(Family::Gaussian),
            "bernoulli" | "binomial" => Ok(Family::Bernoulli),
            "poisson" => Ok(Family::Poisson),
            other => Err(SpectfError::InvalidInput(format!(
                "unknown family '{other}' (expected gaussian, bernoulli or poisson)"
            ))),
        }
    }
}

impl Family {
    pub fn link_name(&self) -> &'static str {
        match self {
            Family::Gaussian => "identity",
            Family::Bernoulli => "logit",
            Family::Poisson => "log",
        }
    }

    /// Inverse canonical link.
    pub fn mean(&self, eta: f64) -> f64 {
        match self {
            Family::Gaussian => eta,
            Family::Bernoulli => 1.0 / (1.0 + (-eta).exp()),
            Family::Poisson => eta.exp(),
        }
    }

    /// Variance function `V(mu)`; equals the canonical working weight.
    pub fn variance(&self, mu: f64) -> f64 {
        match self {
            Family::Gaussian => 1.0,
            Family::Bernoulli => mu * (1.0 - mu),
            Family::Poisson => mu,
        }
    }

    /// Negative log-likelihood up to response-only constants, scaled so the
    /// Gaussian case equals `0.5 * sum (y - eta)^2`.
    pub fn nll(&self, y: ArrayView1<f64>, eta: ArrayView1<f64>) -> f64 {
        match self {
            Family::Gaussian => {
                0.5 * y
                    .iter()
                    .zip(eta.iter())
                    .map(|(yi, ei)| (yi - ei) * (yi - ei))
                    .sum::<f64>()
            }
            Family::Bernoulli => y
                .iter()
                .zip(eta.iter())
                .map(|(yi, ei)| ei.max(0.0) + (-ei.abs()).exp().ln_1p() - yi * ei)
                .sum(),
            Family::Poisson => y
                .iter()
                .zip(eta.iter())
                .map(|(yi, ei)| ei.exp() - yi * ei)
                .sum(),
        }
    }

    /// Mean scaled deviance of predictions, the cross-validation loss.
    pub fn mean_deviance(&self, y: ArrayView1<f64>, mu: ArrayView1<f64>) -> f64 {
        let n = y.len().max(1) as f64;
        match self {
            Family::Gaussian => {
                y.iter()
                    .zip(mu.iter())
                    .map(|(yi, mi)| (yi - mi) * (yi - mi))
                    .sum::<f64>()
                    / n
            }
            Family::Bernoulli => {
                y.iter()
                    .zip(mu.iter())
                    .map(|(yi, mi)| {
                        let mi = mi.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                        let a = if *yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                        let b = if *yi < 1.0 {
                            (1.0 - yi) * ((1.0 - yi) / (1.0 - mi)).ln()
                        } else {
                            0.0
                        };
                        2.0 * (a + b)
                    })
                    .sum::<f64>()
                    / n
            }
            Family::Poisson => {
                y.iter()
                    .zip(mu.iter())
                    .map(|(yi, mi)| {
                        let mi = mi.max(1e-12);
                        let a = if *yi > 0.0 { yi * (yi / mi).ln() } else { 0.0 };
                        2.0 * (a - (yi - mi))
                    })
                    .sum::<f64>()
                    / n
            }
        }
    }

    pub fn check_response(&self, y: ArrayView1<f64>) -> Result<()> {
        match self {
            Family::Gaussian => {
                if y.iter().any(|v| !v.is_finite()) {
                    return Err(SpectfError::Data(
                        "Gaussian response contains non-finite values".into(),
                    ));
                }
            }
            Family::Bernoulli => {
                if let Some((i, v)) = y
                    .iter()
                    .enumerate()
                    .find(|(_, v)| **v != 0.0 && **v != 1.0)
                {
                    return Err(SpectfError::Data(format!(
                        "Bernoulli response must be 0/1, found {v} at row {i}"
                    )));
                }
            }
            Family::Poisson => {
                if let Some((i, v)) = y
                    .iter()
                    .enumerate()
                    .find(|(_, v)| **v < 0.0 || (**v - v.round()).abs() > 1e-8 || !v.is_finite())
                {
                    return Err(SpectfError::Data(format!(
                        "Poisson response must be a nonnegative integer, found {v} at row {i}"
                    )));
                }
            }
        }
        Ok(())
    }
}

/// How the functional coefficient was estimated.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitMethod {
    TrendFilter,
    SplineBaseline,
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct FitDiagnostics {
    /// Total inner ADMM iterations across the fit.
    pub iterations: usize,
    /// Fisher-scoring iterations; zero for direct Gaussian fits.
    pub outer_iterations: usize,
    pub primal_res: f64,
    pub dual_res: f64,
    pub converged: bool,
    /// Final penalized objective.
    pub objective: f64,
    /// Penalized objective after each outer iteration (non-Gaussian fits).
    pub outer_objective_trace: Vec<f64>,
    /// Ridge jitter the factorization needed, if any.
    pub jitter: f64,
}

/// A fitted model: functional coefficient on the grid, scalar coefficients,
/// and everything needed to predict on new data.
#[derive(Clone, Debug)]
pub struct TfFit {
    pub f_hat: Array1<f64>,
    pub gamma_hat: Array1<f64>,
    pub gamma_names: Vec<String>,
    pub penalty: PenaltySpec,
    pub family: Family,
    pub method: FitMethod,
    /// Wavelength values for reporting; index grid when not provided.
    pub grid: Array1<f64>,
    /// Residual variance estimate for Gaussian fits.
    pub sigma2: Option<f64>,
    pub diagnostics: FitDiagnostics,
    pub preprocessing: PreprocessMeta,
}

impl TfFit {
    pub fn grid_len(&self) -> usize {
        self.f_hat.len()
    }

    pub fn n_scalar(&self) -> usize {
        self.gamma_hat.len()
    }

    pub fn set_grid(&mut self, grid: Array1<f64>) -> Result<()> {
        if grid.len() != self.f_hat.len() {
            return Err(SpectfError::Dimension(format!(
                "grid has {} points but the coefficient has {}",
                grid.len(),
                self.f_hat.len()
            )));
        }
        self.grid = grid;
        Ok(())
    }

    /// Linear predictor on new data.
    pub fn linear_predictor(
        &self,
        x: ArrayView2<f64>,
        z: Option<ArrayView2<f64>>,
    ) -> Result<Array1<f64>> {
        if x.ncols() != self.grid_len() {
            return Err(SpectfError::Dimension(format!(
                "new spectra have {} grid points, the model expects {}",
                x.ncols(),
                self.grid_len()
            )));
        }
        let mut eta = x.dot(&self.f_hat);
        let r = self.n_scalar();
        match z {
            Some(z) if r > 0 => {
                if z.ncols() != r || z.nrows() != x.nrows() {
                    return Err(SpectfError::Dimension(format!(
                        "scalar covariate block is {}x{}, expected {}x{}",
                        z.nrows(),
                        z.ncols(),
                        x.nrows(),
                        r
                    )));
                }
                eta += &z.dot(&self.gamma_hat);
            }
            Some(_) => {
                return Err(SpectfError::Dimension(
                    "the model has no scalar coefficients but covariates were given".into(),
                ));
            }
            None if r == 0 => {}
            None => {
                return Err(SpectfError::Dimension(format!(
                    "the model has {r} scalar coefficients but no covariates were given"
                )));
            }
        }
        Ok(eta)
    }

    pub fn to_json(&self) -> Result<String> {
        let doc = ModelDocument::from_fit(self);
        Ok(serde_json::to_string_pretty(&doc)?)
    }

    pub fn from_json(text: &str) -> Result<TfFit> {
        let doc: ModelDocument = serde_json::from_str(text)?;
        doc.into_fit()
    }
}

/// Versioned on-disk representation of a fit.
#[derive(Serialize, Deserialize)]
struct ModelDocument {
    version: u32,
    family: Family,
    method: FitMethod,
    penalty: PenaltySpec,
    grid: Vec<f64>,
    f_hat: Vec<f64>,
    gamma_hat: Vec<f64>,
    gamma_names: Vec<String>,
    sigma2: Option<f64>,
    diagnostics: FitDiagnostics,
    preprocessing: PreprocessMeta,
}

const MODEL_VERSION: u32 = 1;

impl ModelDocument {
    fn from_fit(fit: &TfFit) -> Self {
        ModelDocument {
            version: MODEL_VERSION,
            family: fit.family,
            method: fit.method,
            penalty: fit.penalty.clone(),
            grid: fit.grid.to_vec(),
            f_hat: fit.f_hat.to_vec(),
            gamma_hat: fit.gamma_hat.to_vec(),
            gamma_names: fit.gamma_names.clone(),
            sigma2: fit.sigma2,
            diagnostics: fit.diagnostics.clone(),
            preprocessing: fit.preprocessing.clone(),
        }
    }

    fn into_fit(self) -> Result<TfFit> {
        if self.version != MODEL_VERSION {
            return Err(SpectfError::InvalidInput(format!(
                "unsupported model version {} (this build reads version {MODEL_VERSION})",
                self.version
            )));
        }
        if self.grid.len() != self.f_hat.len() {
            return Err(SpectfError::Data(
                "model document grid and coefficient lengths disagree".into(),
            ));
        }
        Ok(TfFit {
            f_hat: Array1::from_vec(self.f_hat),
            gamma_hat: Array1::from_vec(self.gamma_hat),
            gamma_names: self.gamma_names,
            penalty: self.penalty,
            family: self.family,
            method: self.method,
            grid: Array1::from_vec(self.grid),
            sigma2: self.sigma2,
            diagnostics: self.diagnostics,
            preprocessing: self.preprocessing,
        })
    }
}

/// Predictions on new data: linear predictor, family mean, and 0.5-threshold
/// labels for Bernoulli models.
#[derive(Clone, Debug)]
pub struct Predictions {
    pub linear: Array1<f64>,
    pub mean: Array1<f64>,
    pub labels: Option<Vec<u8>>,
}

/// Concatenate the functional and scalar design blocks.
pub(crate) fn assemble_design(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
) -> Result<(Array2<f64>, usize)> {
    match z {
        None => Ok((x.to_owned(), 0)),
        Some(z) => {
            if z.nrows() != x.nrows() {
                return Err(SpectfError::Dimension(format!(
                    "spectra have {} rows but scalar covariates have {}",
                    x.nrows(),
                    z.nrows()
                )));
            }
            let r = z.ncols();
            let mut full = Array2::<f64>::zeros((x.nrows(), x.ncols() + r));
            full.slice_mut(s![.., ..x.ncols()]).assign(&x);
            full.slice_mut(s![.., x.ncols()..]).assign(&z);
            Ok((full, r))
        }
    }
}

fn index_grid(p: usize) -> Array1<f64> {
    (0..p).map(|j| j as f64).collect()
}

fn default_gamma_names(r: usize) -> Vec<String> {
    (0..r).map(|j| format!("z{}", j + 1)).collect()
}

fn fit_from_state(
    alpha: &Array1<f64>,
    p: usize,
    penalty: PenaltySpec,
    family: Family,
    method: FitMethod,
    diagnostics: FitDiagnostics,
) -> TfFit {
    TfFit {
        f_hat: alpha.slice(s![..p]).to_owned(),
        gamma_hat: alpha.slice(s![p..]).to_owned(),
        gamma_names: default_gamma_names(alpha.len() - p),
        penalty,
        family,
        method,
        grid: index_grid(p),
        sigma2: None,
        diagnostics,
        preprocessing: PreprocessMeta::default(),
    }
}

/// Penalty value `sum_i lam_i ||D(m_i) f||_1` of the full-order operators.
pub(crate) fn penalty_value(spec: &PenaltySpec, f: ArrayView1<f64>) -> f64 {
    let p = f.len();
    let mut total = 0.0;
    for term in spec.terms() {
        if term.lam == 0.0 {
            continue;
        }
        let d = DifferenceOperator::new(p, term.diff_order)
            .expect("penalty validated against the grid length");
        let df = d.apply(f).expect("length checked");
        total += term.lam * df.iter().map(|v| v.abs()).sum::<f64>();
    }
    total
}

/// Fit the (partial) Gaussian functional linear model.
///
/// The conditional mean is the plain dot product of each spectrum row with
/// the coefficient on the grid, plus the scalar covariate part when `z` is
/// given. An intercept, when wanted, is a constant column in `z`.
pub fn fit_gaussian(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    penalty: &PenaltySpec,
    config: &AdmmConfig,
) -> Result<TfFit> {
    if x.nrows() < 2 {
        return Err(SpectfError::Data(
            "at least two observations are required".into(),
        ));
    }
    if x.nrows() != y.len() {
        return Err(SpectfError::Dimension(format!(
            "{} spectra rows but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    let ybar = y.mean().unwrap_or(0.0);
    let yvar = y.iter().map(|v| (v - ybar) * (v - ybar)).sum::<f64>();
    if yvar == 0.0 && ybar != 0.0 {
        let has_intercept = z
            .map(|z| {
                (0..z.ncols()).any(|c| {
                    let col = z.column(c);
                    col.iter().all(|v| *v == col[0]) && col[0] != 0.0
                })
            })
            .unwrap_or(false);
        if !has_intercept {
            return Err(SpectfError::Data(
                "the response is constant; add an intercept covariate or check the data".into(),
            ));
        }
    }

    let (full, r) = assemble_design(x, z)?;
    let p = x.ncols();
    let mut solver = TfSolver::new(full.view(), y, &penalty.orders(), r)?;
    let state = solver.solve(penalty, config, None)?;
    let objective = solver.objective(penalty, state.alpha.view());

    let mut fit = fit_from_state(
        &state.alpha,
        p,
        penalty.clone(),
        Family::Gaussian,
        FitMethod::TrendFilter,
        FitDiagnostics {
            iterations: state.iter,
            outer_iterations: 0,
            primal_res: state.primal_res,
            dual_res: state.dual_res,
            converged: state.converged,
            objective,
            outer_objective_trace: Vec::new(),
            jitter: solver.last_jitter(),
        },
    );
    let eta = full.dot(&state.alpha);
    let sse: f64 = y
        .iter()
        .zip(eta.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    fit.sigma2 = Some(sse / x.nrows() as f64);
    Ok(fit)
}

pub(crate) struct GlmOutcome {
    pub alpha: Array1<f64>,
    pub state: AdmmState,
    pub outer_iters: usize,
    pub inner_iters: usize,
    pub trace: Vec<f64>,
}

/// Penalized Fisher scoring: quadratic approximation of the likelihood at the
/// current coefficients, inner ADMM solve of the weighted problem, with step
/// halving to keep the penalized objective non-increasing.
pub(crate) fn glm_core(
    full: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: Family,
    spec: &PenaltySpec,
    n_scalar: usize,
    config: &AdmmConfig,
    init: Option<&GlmOutcome>,
) -> Result<GlmOutcome> {
    glm_core_tol(full, y, family, spec, n_scalar, config, init, GLM_REL_TOL)
}

/// [`glm_core`] with an explicit outer-loop tolerance; the benchmark harness
/// tunes hundreds of cells per repetition and trades outer precision for
/// speed there.
#[allow(clippy::too_many_arguments)]
pub(crate) fn glm_core_tol(
    full: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: Family,
    spec: &PenaltySpec,
    n_scalar: usize,
    config: &AdmmConfig,
    init: Option<&GlmOutcome>,
    outer_tol: f64,
) -> Result<GlmOutcome> {
    let cols = full.ncols();
    let p = cols - n_scalar;
    let n = full.nrows();

    let mut alpha = match init {
        Some(prev) => prev.alpha.clone(),
        None => Array1::zeros(cols),
    };
    let mut warm_state: Option<AdmmState> = init.map(|prev| prev.state.clone());

    let mut eta = full.dot(&alpha);
    let mut pen_obj = family.nll(y, eta.view()) + penalty_value(spec, alpha.slice(s![..p]));
    let mut trace = vec![pen_obj];
    let mut inner_iters = 0usize;
    let mut outer = 0usize;

    // The solver is rebuilt with fresh weighted moments each outer iteration.
    let placeholder =
        Array1::<f64>::zeros(cols);
    let mut solver = TfSolver::from_gram(
        Array2::eye(cols),
        placeholder,
        0.0,
        &spec.orders(),
        n_scalar,
    )?;

    let mut w = vec![0.0f64; n];
    let mut s_work = Array1::<f64>::zeros(n);

    while outer < GLM_MAX_OUTER {
        outer += 1;
        for i in 0..n {
            let mu = family.mean(eta[i]);
            let v = family.variance(mu).max(WEIGHT_FLOOR);
            w[i] = v;
            s_work[i] = eta[i] + (y[i] - mu) / v;
        }
        let xtwx = weighted_gram(full, Some(&w));
        let xtws = weighted_xtv(full, s_work.view(), Some(&w));
        let stws: f64 = (0..n).map(|i| w[i] * s_work[i] * s_work[i]).sum();
        solver.set_design(xtwx, xtws, stws);

        let state = solver.solve(spec, config, warm_state.as_ref())?;
        inner_iters += state.iter;

        let mut candidate = state.alpha.clone();
        let mut cand_eta = full.dot(&candidate);
        let mut cand_obj =
            family.nll(y, cand_eta.view()) + penalty_value(spec, candidate.slice(s![..p]));
        let mut halvings = 0;
        while cand_obj > pen_obj && halvings < GLM_MAX_HALVINGS {
            candidate = 0.5 * (&candidate + &alpha);
            cand_eta = full.dot(&candidate);
            cand_obj =
                family.nll(y, cand_eta.view()) + penalty_value(spec, candidate.slice(s![..p]));
            halvings += 1;
        }
        if cand_obj > pen_obj {
            // No descent left along this direction; keep the previous iterate.
            trace.push(pen_obj);
            break;
        }

        let sup = candidate.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if sup > DIVERGENCE_LIMIT {
            return Err(SpectfError::NonConvergence(format!(
                "coefficients diverged (sup-norm {sup:.3e}); the data may be separable — try a larger penalty"
            )));
        }

        let rel = (pen_obj - cand_obj).abs() / pen_obj.abs().max(1.0);
        alpha = candidate;
        eta = cand_eta;
        pen_obj = cand_obj;
        warm_state = Some(state);
        trace.push(pen_obj);
        if rel < outer_tol {
            break;
        }
    }

    let state = warm_state.ok_or_else(|| {
        SpectfError::NonConvergence("the Fisher-scoring loop made no progress".into())
    })?;
    Ok(GlmOutcome {
        alpha,
        state,
        outer_iters: outer,
        inner_iters,
        trace,
    })
}

/// Fit a generalized functional linear model with a canonical link.
pub fn fit_glm(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    family: Family,
    penalty: &PenaltySpec,
    config: &AdmmConfig,
) -> Result<TfFit> {
    if family == Family::Gaussian {
        return fit_gaussian(x, z, y, penalty, config);
    }
    family.check_response(y)?;
    if x.nrows() != y.len() {
        return Err(SpectfError::Dimension(format!(
            "{} spectra rows but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    let (full, r) = assemble_design(x, z)?;
    let p = x.ncols();
    let outcome = glm_core(full.view(), y, family, penalty, r, config, None)?;

    Ok(fit_from_state(
        &outcome.alpha,
        p,
        penalty.clone(),
        family,
        FitMethod::TrendFilter,
        FitDiagnostics {
            iterations: outcome.inner_iters,
            outer_iterations: outcome.outer_iters,
            primal_res: outcome.state.primal_res,
            dual_res: outcome.state.dual_res,
            converged: outcome.state.converged,
            objective: *outcome.trace.last().unwrap(),
            outer_objective_trace: outcome.trace,
            jitter: 0.0,
        },
    ))
}

/// Ridge-spline baseline: closed-form solve of the squared second-difference
/// penalty, the classical penalized-spline comparator.
pub fn fit_spline_baseline(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    lam: f64,
) -> Result<TfFit> {
    if x.nrows() != y.len() {
        return Err(SpectfError::Dimension(format!(
            "{} spectra rows but {} responses",
            x.nrows(),
            y.len()
        )));
    }
    if !(lam >= 0.0) {
        return Err(SpectfError::InvalidInput(
            "the spline penalty must be nonnegative".into(),
        ));
    }
    let p = x.ncols();
    let d2 = DifferenceOperator::new(p, 2)?;
    let mut a = weighted_gram(x, None);
    a.scaled_add(lam, &d2.gram());
    let ch = Cholesky::factor(a.view())?;
    let alpha = ch.solve(weighted_xtv(x, y, None).view());

    let eta = x.dot(&alpha);
    let sse: f64 = y
        .iter()
        .zip(eta.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum();
    let mut fit = fit_from_state(
        &alpha,
        p,
        PenaltySpec::single(2, lam)?,
        Family::Gaussian,
        FitMethod::SplineBaseline,
        FitDiagnostics {
            converged: true,
            objective: 0.5 * sse + lam * {
                let df = d2.apply(alpha.view())?;
                df.dot(&df)
            },
            jitter: ch.jitter,
            ..FitDiagnostics::default()
        },
    );
    fit.sigma2 = Some(sse / x.nrows() as f64);
    Ok(fit)
}

/// Ridge solve over a full `[spectra | scalars]` design with the squared
/// second-difference penalty on the functional part only. Returns the whole
/// coefficient vector.
pub(crate) fn spline_partial_core(
    full: ArrayView2<f64>,
    n_scalar: usize,
    y: ArrayView1<f64>,
    lam: f64,
) -> Result<Array1<f64>> {
    let p = full.ncols() - n_scalar;
    let d2 = DifferenceOperator::new(p, 2)?;
    let mut a = weighted_gram(full, None);
    {
        let g2 = d2.gram();
        for i in 0..p {
            for j in 0..p {
                a[[i, j]] += lam * g2[[i, j]];
            }
        }
    }
    let ch = Cholesky::factor(a.view())?;
    Ok(ch.solve(weighted_xtv(full, y, None).view()))
}

/// Ridge-spline baseline for non-Gaussian responses: Fisher scoring with a
/// closed-form weighted ridge solve at each step. Benchmark comparator.
pub fn fit_spline_glm(
    x: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: Family,
    lam: f64,
) -> Result<TfFit> {
    if family == Family::Gaussian {
        return fit_spline_baseline(x, y, lam);
    }
    family.check_response(y)?;
    let p = x.ncols();
    let n = x.nrows();
    let d2 = DifferenceOperator::new(p, 2)?;
    let d2_gram = d2.gram();

    let mut alpha = Array1::<f64>::zeros(p);
    let mut eta = x.dot(&alpha);
    let pen = |a: &Array1<f64>| {
        let df = d2.apply(a.view()).expect("length fixed");
        lam * df.dot(&df)
    };
    let mut obj = family.nll(y, eta.view()) + pen(&alpha);
    let mut w = vec![0.0f64; n];
    let mut s_work = Array1::<f64>::zeros(n);
    let mut outer = 0usize;
    let mut jitter = 0.0;

    while outer < GLM_MAX_OUTER {
        outer += 1;
        for i in 0..n {
            let mu = family.mean(eta[i]);
            let v = family.variance(mu).max(WEIGHT_FLOOR);
            w[i] = v;
            s_work[i] = eta[i] + (y[i] - mu) / v;
        }
        let mut a = weighted_gram(x, Some(&w));
        a.scaled_add(2.0 * lam, &d2_gram);
        let ch = Cholesky::factor(a.view())?;
        jitter = ch.jitter;
        let mut candidate = ch.solve(weighted_xtv(x, s_work.view(), Some(&w)).view());
        let mut cand_eta = x.dot(&candidate);
        let mut cand_obj = family.nll(y, cand_eta.view()) + pen(&candidate);
        let mut halvings = 0;
        while cand_obj > obj && halvings < GLM_MAX_HALVINGS {
            candidate = 0.5 * (&candidate + &alpha);
            cand_eta = x.dot(&candidate);
            cand_obj = family.nll(y, cand_eta.view()) + pen(&candidate);
            halvings += 1;
        }
        if cand_obj > obj {
            break;
        }
        let rel = (obj - cand_obj).abs() / obj.abs().max(1.0);
        alpha = candidate;
        eta = cand_eta;
        obj = cand_obj;
        if rel < GLM_REL_TOL {
            break;
        }
    }

    Ok(fit_from_state(
        &alpha,
        p,
        PenaltySpec::single(2, lam)?,
        family,
        FitMethod::SplineBaseline,
        FitDiagnostics {
            outer_iterations: outer,
            converged: true,
            objective: obj,
            jitter,
            ..FitDiagnostics::default()
        },
    ))
}

/// Predict on new data: family mean via the inverse link, plus 0.5-threshold
/// labels for Bernoulli models.
pub fn predict(
    fit: &TfFit,
    x_new: ArrayView2<f64>,
    z_new: Option<ArrayView2<f64>>,
) -> Result<Predictions> {
    let linear = fit.linear_predictor(x_new, z_new)?;
    let mean = match fit.family {
        Family::Gaussian => linear.clone(),
        Family::Bernoulli => linear
            .mapv(|e| fit.family.mean(e).clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)),
        Family::Poisson => linear.mapv(|e| fit.family.mean(e)),
    };
    let labels = match fit.family {
        Family::Bernoulli => Some(mean.iter().map(|p| u8::from(*p > 0.5)).collect()),
        _ => None,
    };
    Ok(Predictions { linear, mean, labels })
}

/// Cross-validation or holdout tuning report.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CvReport {
    pub grid: Vec<PenaltySpec>,
    pub mean_score: Vec<f64>,
    pub se_score: Vec<f64>,
    /// Misclassification rates alongside the deviance, Bernoulli only.
    pub misclassification: Option<Vec<f64>>,
    pub best_index: usize,
    pub folds: usize,
    pub seed: u64,
}

impl CvReport {
    pub fn best(&self) -> &PenaltySpec {
        &self.grid[self.best_index]
    }
}

/// Deterministic fold assignment; Bernoulli responses are stratified so no
/// training fold loses a class.
fn fold_assignment(y: ArrayView1<f64>, family: Family, k: usize, seed: u64) -> Vec<usize> {
    let n = y.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut folds = vec![0usize; n];
    if family == Family::Bernoulli {
        let mut by_class: [Vec<usize>; 2] = [Vec::new(), Vec::new()];
        for (i, v) in y.iter().enumerate() {
            by_class[usize::from(*v > 0.5)].push(i);
        }
        let mut slot = 0usize;
        for class in by_class.iter_mut() {
            class.shuffle(&mut rng);
            for &i in class.iter() {
                folds[i] = slot % k;
                slot += 1;
            }
        }
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut rng);
        for (slot, &i) in idx.iter().enumerate() {
            folds[i] = slot % k;
        }
    }
    folds
}

fn select_rows(m: ArrayView2<f64>, rows: &[usize]) -> Array2<f64> {
    m.select(Axis(0), rows)
}

fn pick_best(grid: &[PenaltySpec], mean: &[f64]) -> usize {
    let mut best = 0usize;
    for i in 1..grid.len() {
        let better = mean[i] < mean[best]
            || (mean[i] == mean[best] && grid[i].total_lam() > grid[best].total_lam());
        if better {
            best = i;
        }
    }
    best
}

/// K-fold cross-validation over a penalty grid, warm-starting each fold's
/// path in grid order. The selection loss is the mean deviance (squared error
/// for Gaussian responses); ties go to the stronger penalty.
pub fn cross_validate(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    family: Family,
    grid: &[PenaltySpec],
    k: usize,
    seed: u64,
    config: &AdmmConfig,
) -> Result<CvReport> {
    if k < 2 {
        return Err(SpectfError::InvalidInput(
            "cross-validation needs at least two folds".into(),
        ));
    }
    if grid.is_empty() {
        return Err(SpectfError::InvalidInput("the penalty grid is empty".into()));
    }
    family.check_response(y)?;
    let (full, r) = assemble_design(x, z)?;
    let p = x.ncols();
    let n = full.nrows();
    if k > n {
        return Err(SpectfError::InvalidInput(format!(
            "{k} folds for {n} observations"
        )));
    }
    let folds = fold_assignment(y, family, k, seed);

    // Folds are independent: each runs its own warm-started chain over the
    // grid and reports a per-cell loss vector, merged by fold index so the
    // result is identical however the pool schedules them.
    let fold_results: Vec<Result<(Vec<f64>, Vec<f64>)>> = (0..k)
        .into_par_iter()
        .map(|fold| {
            let mut cell_loss = vec![f64::NAN; grid.len()];
            let mut cell_mis = vec![f64::NAN; grid.len()];
            let train_rows: Vec<usize> = (0..n).filter(|i| folds[*i] != fold).collect();
            let val_rows: Vec<usize> = (0..n).filter(|i| folds[*i] == fold).collect();
            if val_rows.is_empty() {
                return Ok((cell_loss, cell_mis));
            }
            let x_tr = select_rows(full.view(), &train_rows);
            let y_tr: Array1<f64> = train_rows.iter().map(|&i| y[i]).collect();
            let x_va = select_rows(full.view(), &val_rows);
            let y_va: Array1<f64> = val_rows.iter().map(|&i| y[i]).collect();

            match family {
                Family::Gaussian => {
                    let mut solver =
                        TfSolver::new(x_tr.view(), y_tr.view(), &grid[0].orders(), r)?;
                    let mut warm: Option<AdmmState> = None;
                    for (c, spec) in grid.iter().enumerate() {
                        let state = solver.solve(spec, config, warm.as_ref())?;
                        let mu = x_va.dot(&state.alpha);
                        cell_loss[c] = family.mean_deviance(y_va.view(), mu.view());
                        warm = Some(state);
                    }
                }
                _ => {
                    let mut warm: Option<GlmOutcome> = None;
                    for (c, spec) in grid.iter().enumerate() {
                        let outcome = glm_core(
                            x_tr.view(),
                            y_tr.view(),
                            family,
                            spec,
                            r,
                            config,
                            warm.as_ref(),
                        );
                        match outcome {
                            Ok(out) => {
                                let eta = x_va.dot(&out.alpha);
                                let mu = eta.mapv(|e| family.mean(e));
                                cell_loss[c] = family.mean_deviance(y_va.view(), mu.view());
                                if family == Family::Bernoulli {
                                    let wrong = y_va
                                        .iter()
                                        .zip(mu.iter())
                                        .filter(|(yi, mi)| (**mi > 0.5) != (**yi > 0.5))
                                        .count();
                                    cell_mis[c] = wrong as f64 / y_va.len() as f64;
                                }
                                warm = Some(out);
                            }
                            Err(_) => {
                                // A diverging cell stays NaN and is skipped in
                                // the aggregation; the warm chain restarts cold.
                                warm = None;
                            }
                        }
                    }
                }
            }
            Ok((cell_loss, cell_mis))
        })
        .collect();

    // loss[cell][fold]
    let mut loss = vec![vec![f64::NAN; k]; grid.len()];
    let mut misclass = vec![vec![f64::NAN; k]; grid.len()];
    for (fold, res) in fold_results.into_iter().enumerate() {
        let (cell_loss, cell_mis) = res?;
        for c in 0..grid.len() {
            loss[c][fold] = cell_loss[c];
            misclass[c][fold] = cell_mis[c];
        }
    }

    let _ = p;
    let mut mean_score = Vec::with_capacity(grid.len());
    let mut se_score = Vec::with_capacity(grid.len());
    let mut mis_mean = Vec::with_capacity(grid.len());
    for c in 0..grid.len() {
        let vals: Vec<f64> = loss[c].iter().copied().filter(|v| v.is_finite()).collect();
        if vals.is_empty() {
            mean_score.push(f64::INFINITY);
            se_score.push(f64::INFINITY);
            mis_mean.push(f64::NAN);
            continue;
        }
        let m = vals.iter().sum::<f64>() / vals.len() as f64;
        let var = vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>()
            / (vals.len().saturating_sub(1)).max(1) as f64;
        mean_score.push(m);
        se_score.push((var / vals.len() as f64).sqrt());
        let mv: Vec<f64> = misclass[c]
            .iter()
            .copied()
            .filter(|v| v.is_finite())
            .collect();
        mis_mean.push(if mv.is_empty() {
            f64::NAN
        } else {
            mv.iter().sum::<f64>() / mv.len() as f64
        });
    }
    let best_index = pick_best(grid, &mean_score);
    Ok(CvReport {
        grid: grid.to_vec(),
        mean_score,
        se_score,
        misclassification: if family == Family::Bernoulli {
            Some(mis_mean)
        } else {
            None
        },
        best_index,
        folds: k,
        seed,
    })
}

/// Holdout tuning: score every grid cell on a separate validation set.
#[allow(clippy::too_many_arguments)]
pub fn tune_holdout(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    x_val: ArrayView2<f64>,
    z_val: Option<ArrayView2<f64>>,
    y_val: ArrayView1<f64>,
    family: Family,
    grid: &[PenaltySpec],
    config: &AdmmConfig,
) -> Result<CvReport> {
    if grid.is_empty() {
        return Err(SpectfError::InvalidInput("the penalty grid is empty".into()));
    }
    family.check_response(y)?;
    let (full, r) = assemble_design(x, z)?;
    let (full_val, r_val) = assemble_design(x_val, z_val)?;
    if r != r_val || full.ncols() != full_val.ncols() {
        return Err(SpectfError::Dimension(
            "training and validation designs have different shapes".into(),
        ));
    }

    let mut mean_score = vec![f64::INFINITY; grid.len()];
    let mut mis = vec![f64::NAN; grid.len()];
    match family {
        Family::Gaussian => {
            let mut solver = TfSolver::new(full.view(), y, &grid[0].orders(), r)?;
            let mut warm: Option<AdmmState> = None;
            for (c, spec) in grid.iter().enumerate() {
                let state = solver.solve(spec, config, warm.as_ref())?;
                let muv = full_val.dot(&state.alpha);
                mean_score[c] = family.mean_deviance(y_val, muv.view());
                warm = Some(state);
            }
        }
        _ => {
            let mut warm: Option<GlmOutcome> = None;
            for (c, spec) in grid.iter().enumerate() {
                match glm_core(full.view(), y, family, spec, r, config, warm.as_ref()) {
                    Ok(out) => {
                        let eta = full_val.dot(&out.alpha);
                        let mu = eta.mapv(|e| family.mean(e));
                        mean_score[c] = family.mean_deviance(y_val, mu.view());
                        if family == Family::Bernoulli {
                            let wrong = y_val
                                .iter()
                                .zip(mu.iter())
                                .filter(|(yi, mi)| (**mi > 0.5) != (**yi > 0.5))
                                .count();
                            mis[c] = wrong as f64 / y_val.len().max(1) as f64;
                        }
                        warm = Some(out);
                    }
                    Err(_) => warm = None,
                }
            }
        }
    }
    let best_index = pick_best(grid, &mean_score);
    Ok(CvReport {
        grid: grid.to_vec(),
        mean_score,
        se_score: vec![0.0; grid.len()],
        misclassification: if family == Family::Bernoulli { Some(mis) } else { None },
        best_index,
        folds: 1,
        seed: 0,
    })
}

/// Data-driven `lambda_max` for any family: the Gaussian dual bound, applied
/// to the null model's working response for non-Gaussian fits.
pub fn lambda_max_for(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    family: Family,
    diff_order: usize,
) -> Result<f64> {
    let (full, r) = assemble_design(x, z)?;
    match family {
        Family::Gaussian => crate::admm::lambda_max(full.view(), y, diff_order, r),
        _ => glm_lambda_max(full.view(), y, family, diff_order, r),
    }
}

/// Single-penalty geometric grid anchored at the data-driven `lambda_max`.
pub fn single_penalty_grid(
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    family: Family,
    diff_order: usize,
    len: usize,
) -> Result<Vec<PenaltySpec>> {
    let lmax = lambda_max_for(x, z, y, family, diff_order)?;
    let lmax = if lmax > 0.0 { lmax } else { 1.0 };
    crate::admm::default_lambda_grid(lmax, len)
        .into_iter()
        .map(|l| PenaltySpec::single(diff_order, l))
        .collect()
}

/// Two-term grid ordered for warm starts along the first-order axis: for
/// each second weight (descending), all first weights are walked in a
/// serpentine so consecutive cells always differ in a single small step.
pub fn mixed_penalty_grid(
    order_a: usize,
    lmax_a: f64,
    len_a: usize,
    order_b: usize,
    lmax_b: f64,
    len_b: usize,
) -> Result<Vec<PenaltySpec>> {
    let grid_a = crate::admm::default_lambda_grid(lmax_a.max(1e-12), len_a);
    let grid_b = crate::admm::default_lambda_grid(lmax_b.max(1e-12), len_b);
    let mut out = Vec::with_capacity(len_a * len_b);
    for (row, &lb) in grid_b.iter().enumerate() {
        if row % 2 == 0 {
            for &la in &grid_a {
                out.push(PenaltySpec::mixed(order_a, la, order_b, lb)?);
            }
        } else {
            for &la in grid_a.iter().rev() {
                out.push(PenaltySpec::mixed(order_a, la, order_b, lb)?);
            }
        }
    }
    Ok(out)
}

/// `lambda_max` analogue for non-Gaussian fits: the Gaussian formula applied
/// to the working response and weights of the null model.
pub(crate) fn glm_lambda_max(
    full: ArrayView2<f64>,
    y: ArrayView1<f64>,
    family: Family,
    diff_order: usize,
    n_scalar: usize,
) -> Result<f64> {
    let n = full.nrows();
    let p = full.ncols() - n_scalar;
    let mu0 = family.mean(0.0);
    let v0 = family.variance(mu0).max(WEIGHT_FLOOR);
    let w = vec![v0; n];
    let s: Array1<f64> = y.iter().map(|yi| (yi - mu0) / v0).collect();
    let xtwx = weighted_gram(full, Some(&w));
    let xtws = weighted_xtv(full, s.view(), Some(&w));
    let d = DifferenceOperator::new(p, diff_order)?;
    crate::admm::lambda_max_from_gram(&xtwx, &xtws, &d, p, n_scalar)
}

//! Synthetic benchmark harness.
//!
//! Functional covariates are drawn from a cubic B-spline basis with 10
//! equispaced internal knots on [0, 1] (standard-normal coefficients) and
//! evaluated on an equispaced grid. Three target coefficients — a piecewise
//! cubic spline, the Mexican-hat curve on [-5, 5], and its peak-truncated
//! variant — are combined with three response scenarios: Gaussian, Gaussian
//! with scalar covariates, and Bernoulli through the logit link. The
//! benchmark runner compares four estimators (fourth-derivative trend
//! filtering, first-derivative trend filtering, the mixed penalty, and the
//! ridge-spline baseline) tuned on a separate validation set, reporting mean
//! integrated squared error and its standard error over repetitions.

use ndarray::{s, Array1, Array2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{
    default_lambda_grid, lambda_grid, lambda_max, AdmmConfig, AdmmState, PenaltySpec, TfSolver,
};
use crate::bspline::BsplineBasis;
use crate::error::{Result, SpectfError};
use crate::models::{
    fit_spline_glm, glm_core_tol, glm_lambda_max, mixed_penalty_grid, spline_partial_core, Family,
    GlmOutcome,
};

/// Coefficients of the piecewise-cubic target on its 7-function basis
/// (3 internal knots at 0.2, 0.75, 0.9). Fixed here so every run of the
/// harness evaluates the same truth.
pub const F1_COEFFS: [f64; 7] = [0.8, -1.6, 2.4, -1.1, 1.9, -0.7, 1.3];

/// Deterministic sub-seed derivation (splitmix64 over `seed ^ tag`).
pub(crate) fn sub_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScenarioKind {
    /// Gaussian response, functional covariate only.
    A,
    /// Gaussian response with independent standard-normal scalar covariates.
    B,
    /// Bernoulli response through the logit link.
    C,
}

impl std::str::FromStr for ScenarioKind {
    type Err = SpectfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "a" => Ok(ScenarioKind::A),
            "b" => Ok(ScenarioKind::B),
            "c" => Ok(ScenarioKind::C),
            other => Err(SpectfError::InvalidInput(format!(
                "unknown scenario '{other}' (expected a, b or c)"
            ))),
        }
    }
}

impl std::fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            ScenarioKind::A => write!(f, "a"),
            ScenarioKind::B => write!(f, "b"),
            ScenarioKind::C => write!(f, "c"),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetFn {
    F1,
    F2,
    F3,
}

impl std::str::FromStr for TargetFn {
    type Err = SpectfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "f1" => Ok(TargetFn::F1),
            "f2" => Ok(TargetFn::F2),
            "f3" => Ok(TargetFn::F3),
            other => Err(SpectfError::InvalidInput(format!(
                "unknown target function '{other}' (expected f1, f2 or f3)"
            ))),
        }
    }
}

impl std::fmt::Display for TargetFn {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            TargetFn::F1 => write!(f, "f1"),
            TargetFn::F2 => write!(f, "f2"),
            TargetFn::F3 => write!(f, "f3"),
        }
    }
}

/// Full description of one synthetic dataset.
#[derive(Clone, Debug)]
pub struct ScenarioSpec {
    pub kind: ScenarioKind,
    pub target: TargetFn,
    pub n: usize,
    pub p: usize,
    /// sd(signal) / sd(noise) for the Gaussian scenarios; infinite means
    /// noiseless.
    pub snr: f64,
    /// Scalar-covariate coefficients for scenario b (its length sets `r`).
    pub gamma: Vec<f64>,
    pub seed: u64,
}

impl ScenarioSpec {
    pub fn new(kind: ScenarioKind, target: TargetFn, seed: u64) -> Self {
        ScenarioSpec {
            kind,
            target,
            n: 250,
            p: 100,
            snr: 4.0,
            gamma: vec![2.0, -1.0, 1.0, 0.0, 0.0],
            seed,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SyntheticDataset {
    pub x: Array2<f64>,
    pub z: Option<Array2<f64>>,
    pub y: Array1<f64>,
    pub f_true: Array1<f64>,
    pub mu_true: Array1<f64>,
    /// Native-domain coordinates of the grid, for error integration.
    pub grid: Array1<f64>,
}

/// Random smooth functional covariates: standard-normal coefficients on the
/// 14-function cubic basis, evaluated on the equispaced `p`-grid.
pub fn gen_functional_covariates(n: usize, p: usize, seed: u64) -> Array2<f64> {
    let basis = BsplineBasis::cubic_equispaced(10);
    let grid: Vec<f64> = unit_grid(p).to_vec();
    let bmat = basis.evaluate_matrix(&grid); // p x 14
    let k = basis.n_basis();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let coeffs = Array2::from_shape_fn((n, k), |_| StandardNormal.sample(&mut rng));
    coeffs.dot(&bmat.t())
}

pub(crate) fn unit_grid(p: usize) -> Array1<f64> {
    if p == 1 {
        return Array1::from_vec(vec![0.0]);
    }
    (0..p).map(|j| j as f64 / (p - 1) as f64).collect()
}

/// The chosen target coefficient evaluated on the `p`-grid.
pub fn target_function(which: TargetFn, p: usize) -> Result<Array1<f64>> {
    if p < 8 {
        return Err(SpectfError::InvalidInput(
            "target functions need a grid of at least 8 points".into(),
        ));
    }
    let t = unit_grid(p);
    Ok(match which {
        TargetFn::F1 => {
            let basis = BsplineBasis::new(3, 0.0, 1.0, &[0.2, 0.75, 0.9])?;
            basis.evaluate(&F1_COEFFS, &t.to_vec())?
        }
        TargetFn::F2 => t.mapv(|ti| mexican_hat(-5.0 + 10.0 * ti)),
        TargetFn::F3 => t.mapv(|ti| mexican_hat(-5.0 + 10.0 * ti).clamp(-0.3, 0.5)),
    })
}

fn mexican_hat(w: f64) -> f64 {
    (1.0 - w * w) * (-w * w / 2.0).exp()
}

/// Native-domain grid coordinates of a target: [0, 1] for the spline target,
/// [-5, 5] for the Mexican-hat pair.
pub fn target_grid(which: TargetFn, p: usize) -> Array1<f64> {
    let t = unit_grid(p);
    match which {
        TargetFn::F1 => t,
        TargetFn::F2 | TargetFn::F3 => t.mapv(|ti| -5.0 + 10.0 * ti),
    }
}

fn population_sd(v: &Array1<f64>) -> f64 {
    let n = v.len().max(1) as f64;
    let mean = v.sum() / n;
    (v.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

/// Responses (and scenario-b covariates) for a fixed covariate matrix.
pub(crate) fn gen_responses(
    x: &Array2<f64>,
    kind: ScenarioKind,
    f_true: &Array1<f64>,
    snr: f64,
    gamma: &[f64],
    rng: &mut ChaCha8Rng,
) -> (Option<Array2<f64>>, Array1<f64>, Array1<f64>) {
    let n = x.nrows();
    let mut mu = x.dot(f_true);
    let z = if kind == ScenarioKind::B {
        let r = gamma.len();
        let z = Array2::from_shape_fn((n, r), |_| StandardNormal.sample(rng));
        let gam = Array1::from_vec(gamma.to_vec());
        mu += &z.dot(&gam);
        Some(z)
    } else {
        None
    };
    let y = match kind {
        ScenarioKind::A | ScenarioKind::B => {
            let sigma = if snr.is_finite() {
                population_sd(&mu) / snr
            } else {
                0.0
            };
            Array1::from_shape_fn(n, |i| {
                let e: f64 = StandardNormal.sample(rng);
                mu[i] + sigma * e
            })
        }
        ScenarioKind::C => Array1::from_shape_fn(n, |i| {
            let pi = 1.0 / (1.0 + (-mu[i]).exp());
            f64::from(rng.random::<f64>() < pi)
        }),
    };
    (z, y, mu)
}

/// Generate one synthetic dataset, bit-reproducible from its seed.
pub fn gen_scenario(spec: &ScenarioSpec) -> Result<SyntheticDataset> {
    let x = gen_functional_covariates(spec.n, spec.p, sub_seed(spec.seed, 0xC0FFEE));
    let f_true = target_function(spec.target, spec.p)?;
    let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(spec.seed, 0xD1CE));
    let (z, y, mu_true) = gen_responses(&x, spec.kind, &f_true, spec.snr, &spec.gamma, &mut rng);
    Ok(SyntheticDataset {
        x,
        z,
        y,
        f_true,
        mu_true,
        grid: target_grid(spec.target, spec.p),
    })
}

/// Squared coefficient error summed over the grid (unit spacing): the
/// discrete integrated squared error in the same index-grid convention the
/// difference operators and the design matrix use. This is the quantity the
/// benchmark reports.
pub fn discrete_mise(f_hat: &Array1<f64>, f_true: &Array1<f64>) -> Result<f64> {
    if f_hat.len() != f_true.len() {
        return Err(SpectfError::Dimension(format!(
            "mise needs equal lengths, got {} and {}",
            f_hat.len(),
            f_true.len()
        )));
    }
    Ok(f_hat
        .iter()
        .zip(f_true.iter())
        .map(|(a, b)| (a - b) * (a - b))
        .sum())
}

/// Integrated squared error by the trapezoidal rule on the given grid.
pub fn mise(f_hat: &Array1<f64>, f_true: &Array1<f64>, grid: &Array1<f64>) -> Result<f64> {
    let p = f_hat.len();
    if f_true.len() != p || grid.len() != p {
        return Err(SpectfError::Dimension(format!(
            "mise needs equal lengths, got {p}, {}, {}",
            f_true.len(),
            grid.len()
        )));
    }
    if p < 2 {
        return Err(SpectfError::InvalidInput(
            "mise needs at least two grid points".into(),
        ));
    }
    let sq = |j: usize| {
        let e = f_hat[j] - f_true[j];
        e * e
    };
    let mut total = 0.0;
    for j in 0..p - 1 {
        total += 0.5 * (sq(j) + sq(j + 1)) * (grid[j + 1] - grid[j]);
    }
    Ok(total)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Estimator {
    Tf4,
    Tf1,
    Mtf,
    Spl,
}

pub const ALL_ESTIMATORS: [Estimator; 4] =
    [Estimator::Tf4, Estimator::Tf1, Estimator::Mtf, Estimator::Spl];

impl std::fmt::Display for Estimator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Estimator::Tf4 => write!(f, "TF-4"),
            Estimator::Tf1 => write!(f, "TF-1"),
            Estimator::Mtf => write!(f, "MTF"),
            Estimator::Spl => write!(f, "SPL"),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchRow {
    pub scenario: ScenarioKind,
    pub target: TargetFn,
    pub estimator: Estimator,
    pub mean_mise: f64,
    pub se_mise: f64,
    /// Successful repetitions behind the mean.
    pub reps: usize,
    pub failures: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BenchmarkReport {
    pub rows: Vec<BenchRow>,
    pub reps: usize,
    pub seed: u64,
    pub n: usize,
    pub p: usize,
    pub snr: f64,
}

impl BenchmarkReport {
    pub fn row(&self, s: ScenarioKind, t: TargetFn, e: Estimator) -> Option<&BenchRow> {
        self.rows
            .iter()
            .find(|r| r.scenario == s && r.target == t && r.estimator == e)
    }
}

/// `scenario,function,estimator,mean_mise,se_mise,reps,seed` at full
/// round-trip precision.
pub fn write_benchmark_csv<W: std::io::Write>(
    report: &BenchmarkReport,
    mut out: W,
) -> Result<()> {
    writeln!(out, "scenario,function,estimator,mean_mise,se_mise,reps,seed")?;
    for r in &report.rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.scenario, r.target, r.estimator, r.mean_mise, r.se_mise, r.reps, report.seed
        )?;
    }
    Ok(())
}

// Validation-tuning grid sizes. Gaussian paths are cheap; the Bernoulli ones
// run a Fisher-scoring loop per cell, so they get shorter grids.
const GAUSS_SINGLE_GRID: usize = 30;
const GAUSS_MIXED_GRID: (usize, usize) = (8, 6);
const GLM_SINGLE_GRID: usize = 18;
const GLM_MIXED_GRID: (usize, usize) = (5, 4);
const BENCH_GLM_OUTER_TOL: f64 = 1e-4;
const SPL_GRID: usize = 30;
const SPL_GLM_GRID: usize = 16;

/// Solver settings for benchmark tuning fits: validation-based selection and
/// integrated errors at this scale are insensitive to sub-1e-3 solver
/// residuals, and the mixed-penalty grids are iteration-hungry.
fn bench_admm_config() -> AdmmConfig {
    AdmmConfig {
        eps_abs: 1e-4,
        eps_rel: 1e-3,
        max_iter: 1000,
        ..AdmmConfig::default()
    }
}

struct TaskData {
    full: Array2<f64>,
    r: usize,
    y: Array1<f64>,
    full_val: Array2<f64>,
    y_val: Array1<f64>,
    family: Family,
}

fn stack_design(x: &Array2<f64>, z: Option<&Array2<f64>>) -> Array2<f64> {
    match z {
        None => x.clone(),
        Some(z) => {
            let mut full = Array2::<f64>::zeros((x.nrows(), x.ncols() + z.ncols()));
            full.slice_mut(s![.., ..x.ncols()]).assign(x);
            full.slice_mut(s![.., x.ncols()..]).assign(z);
            full
        }
    }
}

/// Best coefficient over a warm-started trend-filtering path, scored on the
/// validation set. Cells that fail are skipped.
fn best_tf_on_path(task: &TaskData, grid: &[PenaltySpec], p: usize) -> Result<Array1<f64>> {
    let cfg = bench_admm_config();
    let mut best: Option<(f64, Array1<f64>)> = None;
    match task.family {
        Family::Gaussian => {
            let mut solver =
                TfSolver::new(task.full.view(), task.y.view(), &grid[0].orders(), task.r)?;
            let mut warm: Option<AdmmState> = None;
            for spec in grid {
                match solver.solve(spec, &cfg, warm.as_ref()) {
                    Ok(state) => {
                        let muv = task.full_val.dot(&state.alpha);
                        let loss = task.family.mean_deviance(task.y_val.view(), muv.view());
                        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                            best = Some((loss, state.alpha.slice(s![..p]).to_owned()));
                        }
                        warm = Some(state);
                    }
                    Err(_) => warm = None,
                }
            }
        }
        _ => {
            let mut warm: Option<GlmOutcome> = None;
            for spec in grid {
                match glm_core_tol(
                    task.full.view(),
                    task.y.view(),
                    task.family,
                    spec,
                    task.r,
                    &cfg,
                    warm.as_ref(),
                    BENCH_GLM_OUTER_TOL,
                ) {
                    Ok(out) => {
                        let eta = task.full_val.dot(&out.alpha);
                        let muv = eta.mapv(|e| task.family.mean(e));
                        let loss = task.family.mean_deviance(task.y_val.view(), muv.view());
                        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
                            best = Some((loss, out.alpha.slice(s![..p]).to_owned()));
                        }
                        warm = Some(out);
                    }
                    Err(_) => warm = None,
                }
            }
        }
    }
    best.map(|(_, f)| f).ok_or_else(|| {
        SpectfError::NonConvergence("every cell of the tuning grid failed".into())
    })
}

fn best_spline(task: &TaskData, p: usize) -> Result<Array1<f64>> {
    let anchor = match task.family {
        Family::Gaussian => lambda_max(task.full.view(), task.y.view(), 2, task.r)?,
        _ => glm_lambda_max(task.full.view(), task.y.view(), task.family, 2, task.r)?,
    };
    let anchor = if anchor > 0.0 { anchor } else { 1.0 };
    let (len, decades) = match task.family {
        Family::Gaussian => (SPL_GRID, 8.0),
        _ => (SPL_GLM_GRID, 8.0),
    };
    let lams = lambda_grid(100.0 * anchor, len, decades);
    let mut best: Option<(f64, Array1<f64>)> = None;
    for lam in lams {
        let alpha = match task.family {
            Family::Gaussian => {
                spline_partial_core(task.full.view(), task.r, task.y.view(), lam)
            }
            _ => fit_spline_glm(task.full.view(), task.y.view(), task.family, lam)
                .map(|fit| fit.f_hat),
        };
        let alpha = match alpha {
            Ok(a) => a,
            Err(_) => continue,
        };
        let eta = if alpha.len() == task.full.ncols() {
            task.full_val.dot(&alpha)
        } else {
            task.full_val.slice(s![.., ..p]).dot(&alpha)
        };
        let muv = eta.mapv(|e| task.family.mean(e));
        let loss = task.family.mean_deviance(task.y_val.view(), muv.view());
        if best.as_ref().is_none_or(|(b, _)| loss < *b) {
            best = Some((loss, alpha.slice(s![..p]).to_owned()));
        }
    }
    best.map(|(_, f)| f)
        .ok_or_else(|| SpectfError::NonConvergence("spline tuning failed".into()))
}

fn tuned_coefficient(task: &TaskData, estimator: Estimator, p: usize) -> Result<Array1<f64>> {
    let single_len = if task.family == Family::Gaussian {
        GAUSS_SINGLE_GRID
    } else {
        GLM_SINGLE_GRID
    };
    let lmax_for = |order: usize| -> Result<f64> {
        let l = match task.family {
            Family::Gaussian => lambda_max(task.full.view(), task.y.view(), order, task.r)?,
            _ => glm_lambda_max(task.full.view(), task.y.view(), task.family, order, task.r)?,
        };
        Ok(if l > 0.0 { l } else { 1.0 })
    };
    match estimator {
        Estimator::Tf4 | Estimator::Tf1 => {
            let order = if estimator == Estimator::Tf4 { 4 } else { 1 };
            let grid: Vec<PenaltySpec> = default_lambda_grid(lmax_for(order)?, single_len)
                .into_iter()
                .map(|l| PenaltySpec::single(order, l))
                .collect::<Result<_>>()?;
            best_tf_on_path(task, &grid, p)
        }
        Estimator::Mtf => {
            let (la, lb) = if task.family == Family::Gaussian {
                GAUSS_MIXED_GRID
            } else {
                GLM_MIXED_GRID
            };
            let grid = mixed_penalty_grid(4, lmax_for(4)?, la, 1, lmax_for(1)?, lb)?;
            best_tf_on_path(task, &grid, p)
        }
        Estimator::Spl => best_spline(task, p),
    }
}

/// Run the synthetic benchmark: every scenario x target x estimator cell,
/// `reps` repetitions, validation-set tuning. The functional covariates are
/// generated once and shared across repetitions; validation sets are fresh
/// draws from the same law. Individual fit failures are recorded per row,
/// never fatal.
pub fn run_table1(reps: usize, seed: u64) -> Result<BenchmarkReport> {
    run_table1_with(reps, seed, 250, 100, 4.0)
}

/// As [`run_table1`] with explicit dimensions, for scaled-down runs.
pub fn run_table1_with(
    reps: usize,
    seed: u64,
    n: usize,
    p: usize,
    snr: f64,
) -> Result<BenchmarkReport> {
    if reps < 10 {
        return Err(SpectfError::InvalidInput(
            "the benchmark needs at least 10 repetitions".into(),
        ));
    }
    let gamma = vec![2.0, -1.0, 1.0, 0.0, 0.0];
    let x_shared = gen_functional_covariates(n, p, sub_seed(seed, 0xF1C5));
    let scenarios = [ScenarioKind::A, ScenarioKind::B, ScenarioKind::C];
    let targets = [TargetFn::F1, TargetFn::F2, TargetFn::F3];

    let mut tasks = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for (ti, t) in targets.iter().enumerate() {
            for rep in 0..reps {
                tasks.push((si, ti, *s, *t, rep));
            }
        }
    }

    let cells: Vec<(usize, usize, usize, [Option<f64>; 4])> = tasks
        .par_iter()
        .map(|&(si, ti, scen, target, rep)| {
            let f_true = target_function(target, p).expect("validated grid length");
            let tag = ((si as u64 * 3 + ti as u64) << 40) | ((rep as u64) << 3);

            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, tag));
            let (z, y, _) = gen_responses(&x_shared, scen, &f_true, snr, &gamma, &mut rng);
            let x_val = gen_functional_covariates(n, p, sub_seed(seed, tag | 1));
            let mut rng_v = ChaCha8Rng::seed_from_u64(sub_seed(seed, tag | 2));
            let (z_val, y_val, _) =
                gen_responses(&x_val, scen, &f_true, snr, &gamma, &mut rng_v);

            let task = TaskData {
                full: stack_design(&x_shared, z.as_ref()),
                r: z.as_ref().map_or(0, |z| z.ncols()),
                y,
                full_val: stack_design(&x_val, z_val.as_ref()),
                y_val,
                family: if scen == ScenarioKind::C {
                    Family::Bernoulli
                } else {
                    Family::Gaussian
                },
            };
            let mut mises = [None, None, None, None];
            for (e, est) in ALL_ESTIMATORS.iter().enumerate() {
                if let Ok(f_hat) = tuned_coefficient(&task, *est, p) {
                    mises[e] = discrete_mise(&f_hat, &f_true).ok();
                }
            }
            (si, ti, rep, mises)
        })
        .collect();

    let mut rows = Vec::new();
    for (si, s) in scenarios.iter().enumerate() {
        for (ti, t) in targets.iter().enumerate() {
            for (e, est) in ALL_ESTIMATORS.iter().enumerate() {
                let mut vals: Vec<f64> = Vec::with_capacity(reps);
                for &(csi, cti, _, ref mises) in &cells {
                    if csi == si && cti == ti {
                        if let Some(v) = mises[e] {
                            vals.push(v);
                        }
                    }
                }
                let k = vals.len();
                let mean = if k > 0 {
                    vals.iter().sum::<f64>() / k as f64
                } else {
                    f64::NAN
                };
                let se = if k > 1 {
                    let var = vals.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>()
                        / (k - 1) as f64;
                    (var / k as f64).sqrt()
                } else {
                    f64::NAN
                };
                rows.push(BenchRow {
                    scenario: *s,
                    target: *t,
                    estimator: *est,
                    mean_mise: mean,
                    se_mise: se,
                    reps: k,
                    failures: reps - k,
                });
            }
        }
    }
    Ok(BenchmarkReport {
        rows,
        reps,
        seed,
        n,
        p,
        snr,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn covariates_are_reproducible() {
        let a = gen_functional_covariates(12, 40, 5);
        let b = gen_functional_covariates(12, 40, 5);
        assert_eq!(a, b);
        let c = gen_functional_covariates(12, 40, 6);
        assert_ne!(a, c);
    }

    #[test]
    fn mexican_hat_closed_form_values() {
        // p = 101 puts grid points exactly at omega = 0 and omega = +-1
        let f2 = target_function(TargetFn::F2, 101).unwrap();
        assert_abs_diff_eq!(f2[50], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(f2[40], 0.0, epsilon = 1e-12); // omega = -1
        assert_abs_diff_eq!(f2[60], 0.0, epsilon = 1e-12); // omega = +1
    }

    #[test]
    fn truncated_target_is_clipped() {
        let f3 = target_function(TargetFn::F3, 101).unwrap();
        assert_abs_diff_eq!(f3[50], 0.5, epsilon = 1e-12);
        for v in f3.iter() {
            assert!(*v >= -0.3 - 1e-15 && *v <= 0.5 + 1e-15);
        }
    }

    #[test]
    fn noiseless_flag_returns_exact_means() {
        let mut spec = ScenarioSpec::new(ScenarioKind::A, TargetFn::F2, 3);
        spec.snr = f64::INFINITY;
        spec.n = 20;
        let d = gen_scenario(&spec).unwrap();
        assert_eq!(d.y, d.mu_true);
    }

    #[test]
    fn scenario_b_covariates_are_standard_normal() {
        let mut spec = ScenarioSpec::new(ScenarioKind::B, TargetFn::F1, 17);
        spec.n = 100_000;
        spec.p = 20;
        let d = gen_scenario(&spec).unwrap();
        let z = d.z.unwrap();
        for c in 0..z.ncols() {
            let col = z.column(c);
            let mean = col.mean().unwrap();
            let var = col.mapv(|v| v * v).mean().unwrap() - mean * mean;
            assert!(mean.abs() < 0.02, "col {c} mean {mean}");
            assert!((var - 1.0).abs() < 0.03, "col {c} var {var}");
            for c2 in c + 1..z.ncols() {
                let cov = (&col * &z.column(c2)).mean().unwrap() - mean * z.column(c2).mean().unwrap();
                assert!(cov.abs() < 0.02, "cov({c},{c2}) = {cov}");
            }
        }
    }

    #[test]
    fn scenario_c_rate_matches_link() {
        let mut spec = ScenarioSpec::new(ScenarioKind::C, TargetFn::F3, 23);
        spec.n = 5000;
        spec.p = 40;
        let d = gen_scenario(&spec).unwrap();
        let target: f64 = d
            .mu_true
            .iter()
            .map(|m| 1.0 / (1.0 + (-m).exp()))
            .sum::<f64>()
            / spec.n as f64;
        let got = d.y.mean().unwrap();
        let mcse = (target * (1.0 - target) / spec.n as f64).sqrt();
        assert!(
            (got - target).abs() <= 3.0 * mcse.max(1e-3),
            "rate {got} vs {target}"
        );
    }

    #[test]
    fn gaussian_snr_is_respected() {
        let spec = ScenarioSpec::new(ScenarioKind::A, TargetFn::F2, 31);
        let mut ratios = Vec::new();
        for seed in 0..20 {
            let mut s = spec.clone();
            s.seed = seed;
            let d = gen_scenario(&s).unwrap();
            let noise = &d.y - &d.mu_true;
            ratios.push(population_sd(&d.mu_true) / population_sd(&noise));
        }
        let mean_ratio = ratios.iter().sum::<f64>() / ratios.len() as f64;
        assert!(
            (mean_ratio - 4.0).abs() / 4.0 < 0.05,
            "mean sd ratio {mean_ratio}"
        );
    }

    #[test]
    fn mise_basic_values() {
        let grid = unit_grid(100);
        let f: Array1<f64> = grid.mapv(|t| (2.0 * t).sin());
        assert_eq!(mise(&f, &f, &grid).unwrap(), 0.0);
        let shifted = &f + 1.0;
        assert_abs_diff_eq!(mise(&shifted, &f, &grid).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn mise_is_refinement_consistent() {
        for p in [100usize, 199] {
            let grid = unit_grid(p);
            let f: Array1<f64> = grid.mapv(|t| (3.0 * t).sin());
            let g: Array1<f64> = grid.mapv(|t| (3.0 * t).sin() + 0.3 * (5.0 * t).cos());
            let v = mise(&g, &f, &grid).unwrap();
            // closed form: integral of 0.09 cos^2(5t) over [0,1]
            let exact = 0.09 * (0.5 + (10f64).sin() / 20.0);
            assert!((v - exact).abs() / exact < 0.01, "p={p}: {v} vs {exact}");
        }
    }

    #[test]
    fn mise_rejects_mismatched_lengths() {
        let grid = unit_grid(10);
        let f = Array1::zeros(10);
        let g = Array1::zeros(9);
        assert!(mise(&g, &f, &grid).is_err());
    }
}

//! Wild-bootstrap pointwise variability bands.
//!
//! Residuals of a Gaussian fit are multiplied by i.i.d. draws of a zero-mean
//! unit-variance auxiliary variable, synthetic responses `y* = yhat + eps*w`
//! are refit with the same penalty (never re-selected), and per-gridpoint
//! empirical quantiles of the replicate coefficients form the band. Scalar
//! coefficients get percentile intervals from the same replicate set.
//!
//! Replicates draw from independent seeded substreams, so results are
//! bit-identical however the work is scheduled.

use std::io::Write;

use ndarray::{Array1, Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::admm::{AdmmConfig, PenaltySpec, TfSolver};
use crate::error::{Result, SpectfError};
use crate::linalg::weighted_xtv;
use crate::models::{assemble_design, Family, FitMethod, TfFit};

/// Auxiliary multiplier distribution: mean 0, variance 1 for every kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum AuxiliaryLaw {
    /// Two-point law with third and fourth moments 1 and 2: takes
    /// `(1+sqrt(5))/2` with probability `(sqrt(5)-1)/(2 sqrt(5))` and
    /// `(1-sqrt(5))/2` with the complementary probability.
    MammenTwoPoint,
    /// +-1 with equal probability (third and fourth moments 0 and 1).
    Rademacher,
    /// Uniform on `[-sqrt(3), sqrt(3)]` (third and fourth moments 0 and 1.8).
    UniformSqrt3,
}

impl std::str::FromStr for AuxiliaryLaw {
    type Err = SpectfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "mammen" | "mammen-two-point" => Ok(AuxiliaryLaw::MammenTwoPoint),
            "rademacher" => Ok(AuxiliaryLaw::Rademacher),
            "uniform" | "uniform-sqrt3" => Ok(AuxiliaryLaw::UniformSqrt3),
            other => Err(SpectfError::InvalidInput(format!(
                "unknown auxiliary law '{other}' (expected mammen, rademacher or uniform)"
            ))),
        }
    }
}

impl std::fmt::Display for AuxiliaryLaw {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            AuxiliaryLaw::MammenTwoPoint => write!(f, "mammen-two-point"),
            AuxiliaryLaw::Rademacher => write!(f, "rademacher"),
            AuxiliaryLaw::UniformSqrt3 => write!(f, "uniform-sqrt3"),
        }
    }
}

impl AuxiliaryLaw {
    /// First four moments `(mean, variance, third, fourth)`.
    pub fn moments(&self) -> (f64, f64, f64, f64) {
        match self {
            AuxiliaryLaw::MammenTwoPoint => (0.0, 1.0, 1.0, 2.0),
            AuxiliaryLaw::Rademacher => (0.0, 1.0, 0.0, 1.0),
            AuxiliaryLaw::UniformSqrt3 => (0.0, 1.0, 0.0, 1.8),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        match self {
            AuxiliaryLaw::MammenTwoPoint => {
                let sqrt5 = 5f64.sqrt();
                let p_low = (sqrt5 + 1.0) / (2.0 * sqrt5);
                if rng.random::<f64>() < p_low {
                    (1.0 - sqrt5) / 2.0
                } else {
                    (1.0 + sqrt5) / 2.0
                }
            }
            AuxiliaryLaw::Rademacher => {
                if rng.random::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
            AuxiliaryLaw::UniformSqrt3 => (2.0 * rng.random::<f64>() - 1.0) * 3f64.sqrt(),
        }
    }
}

/// Deterministic i.i.d. draws from an auxiliary law.
pub fn draw_auxiliary(law: AuxiliaryLaw, m: usize, seed: u64) -> Array1<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Array1::from_shape_fn(m, |_| law.sample(&mut rng))
}

/// Percentile interval for one scalar coefficient.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalarInterval {
    pub name: String,
    pub lower: f64,
    pub estimate: f64,
    pub upper: f64,
    pub significant: bool,
}

/// Pointwise quantile bands over the grid plus scalar-coefficient intervals.
#[derive(Clone, Debug)]
pub struct BootstrapBands {
    pub conf_level: f64,
    pub lower: Array1<f64>,
    pub upper: Array1<f64>,
    pub scalar_intervals: Vec<ScalarInterval>,
    pub b_replicates: usize,
    /// Gridpoints whose band excludes zero.
    pub significant_mask: Vec<bool>,
    /// The penalty every replicate was refit with (identical to the fit's).
    pub penalty: PenaltySpec,
    pub law: AuxiliaryLaw,
    pub seed: u64,
}

/// Empirical quantile with the infimum definition: the smallest value whose
/// empirical CDF reaches `gamma`.
pub fn empirical_quantile(sorted: &[f64], gamma: f64) -> f64 {
    let b = sorted.len();
    assert!(b > 0, "quantile of an empty sample");
    let k = ((gamma * b as f64) - 1e-9).ceil().max(1.0) as usize;
    sorted[k.min(b) - 1]
}

/// Wild bootstrap for a Gaussian trend-filtering fit.
///
/// Each replicate refits `y* = yhat + eps_hat * w` with the fit's own
/// penalty, warm-started at the fitted coefficients; the design factorization
/// is computed once and shared across replicates.
#[allow(clippy::too_many_arguments)]
pub fn wild_bootstrap(
    fit: &TfFit,
    x: ArrayView2<f64>,
    z: Option<ArrayView2<f64>>,
    y: ArrayView1<f64>,
    b_replicates: usize,
    law: AuxiliaryLaw,
    conf_level: f64,
    seed: u64,
    config: &AdmmConfig,
) -> Result<BootstrapBands> {
    if fit.family != Family::Gaussian {
        return Err(SpectfError::InvalidInput(
            "bootstrap bands are only available for Gaussian fits".into(),
        ));
    }
    if fit.method != FitMethod::TrendFilter {
        return Err(SpectfError::InvalidInput(
            "bootstrap bands need a trend-filtering fit".into(),
        ));
    }
    if !(0.0 < conf_level && conf_level < 1.0) {
        return Err(SpectfError::InvalidInput(format!(
            "confidence level must be in (0, 1), got {conf_level}"
        )));
    }
    let alpha_level = 1.0 - conf_level;
    if b_replicates < 100 {
        return Err(SpectfError::InvalidInput(
            "at least 100 bootstrap replicates are required".into(),
        ));
    }
    if (b_replicates as f64) * alpha_level / 2.0 < 5.0 {
        return Err(SpectfError::InvalidInput(format!(
            "{b_replicates} replicates are too few for {conf_level} bands; \
             need B * (1 - conf)/2 >= 5"
        )));
    }

    let (full, r) = assemble_design(x, z)?;
    if x.ncols() != fit.grid_len() || r != fit.n_scalar() {
        return Err(SpectfError::Dimension(
            "data shape does not match the fitted model".into(),
        ));
    }
    if full.nrows() != y.len() {
        return Err(SpectfError::Dimension(
            "design rows and response length disagree".into(),
        ));
    }
    let p = fit.grid_len();
    let n = full.nrows();

    let mut theta = Array1::<f64>::zeros(p + r);
    theta.slice_mut(ndarray::s![..p]).assign(&fit.f_hat);
    theta.slice_mut(ndarray::s![p..]).assign(&fit.gamma_hat);
    let yhat = full.dot(&theta);
    let resid = &y - &yhat;

    let mut solver = TfSolver::new(full.view(), y, &fit.penalty.orders(), r)?;
    let rho = solver.prepare(&fit.penalty, config)?;
    let warm = solver.warm_state(&theta, rho)?;
    let solver = &solver;

    let replicates: Vec<Result<Array1<f64>>> = (0..b_replicates)
        .into_par_iter()
        .map(|b| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(b as u64 + 1);
            let mut ystar = Array1::<f64>::zeros(n);
            for i in 0..n {
                ystar[i] = yhat[i] + resid[i] * law.sample(&mut rng);
            }
            let xty = weighted_xtv(full.view(), ystar.view(), None);
            let state = solver.solve_shared(&fit.penalty, config, Some(&warm), xty.view())?;
            Ok(state.alpha)
        })
        .collect();

    let mut draws = Array2::<f64>::zeros((b_replicates, p + r));
    for (b, rep) in replicates.into_iter().enumerate() {
        draws.row_mut(b).assign(&rep?);
    }

    let lo_gamma = alpha_level / 2.0;
    let hi_gamma = 1.0 - alpha_level / 2.0;
    let mut lower = Array1::<f64>::zeros(p);
    let mut upper = Array1::<f64>::zeros(p);
    let mut significant_mask = vec![false; p];
    let mut column = vec![0.0f64; b_replicates];
    for j in 0..p {
        for b in 0..b_replicates {
            column[b] = draws[[b, j]];
        }
        column.sort_unstable_by(f64::total_cmp);
        lower[j] = empirical_quantile(&column, lo_gamma);
        upper[j] = empirical_quantile(&column, hi_gamma);
        significant_mask[j] = lower[j] > 0.0 || upper[j] < 0.0;
    }

    let mut scalar_intervals = Vec::with_capacity(r);
    for k in 0..r {
        for b in 0..b_replicates {
            column[b] = draws[[b, p + k]];
        }
        column.sort_unstable_by(f64::total_cmp);
        let lo = empirical_quantile(&column, lo_gamma);
        let hi = empirical_quantile(&column, hi_gamma);
        let name = fit
            .gamma_names
            .get(k)
            .cloned()
            .unwrap_or_else(|| format!("z{}", k + 1));
        scalar_intervals.push(ScalarInterval {
            name,
            lower: lo,
            estimate: fit.gamma_hat[k],
            upper: hi,
            significant: lo > 0.0 || hi < 0.0,
        });
    }

    Ok(BootstrapBands {
        conf_level,
        lower,
        upper,
        scalar_intervals,
        b_replicates,
        significant_mask,
        penalty: fit.penalty.clone(),
        law,
        seed,
    })
}

/// Plot-ready band CSV: `wavelength,estimate,lower,upper,significant`.
pub fn write_bands_csv<W: Write>(fit: &TfFit, bands: &BootstrapBands, mut out: W) -> Result<()> {
    writeln!(out, "wavelength,estimate,lower,upper,significant")?;
    for j in 0..fit.grid_len() {
        writeln!(
            out,
            "{},{},{},{},{}",
            fit.grid[j],
            fit.f_hat[j],
            bands.lower[j],
            bands.upper[j],
            u8::from(bands.significant_mask[j])
        )?;
    }
    Ok(())
}

/// Scalar-coefficient interval table: `covariate,lower,estimate,upper,significant`.
pub fn write_scalar_intervals_csv<W: Write>(bands: &BootstrapBands, mut out: W) -> Result<()> {
    writeln!(out, "covariate,lower,estimate,upper,significant")?;
    for iv in &bands.scalar_intervals {
        writeln!(
            out,
            "{},{},{},{},{}",
            iv.name,
            iv.lower,
            iv.estimate,
            iv.upper,
            u8::from(iv.significant)
        )?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::fit_gaussian;
    use approx::assert_abs_diff_eq;
    use ndarray::Array2;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn draws_are_deterministic_given_seed() {
        for law in [
            AuxiliaryLaw::MammenTwoPoint,
            AuxiliaryLaw::Rademacher,
            AuxiliaryLaw::UniformSqrt3,
        ] {
            let a = draw_auxiliary(law, 1000, 99);
            let b = draw_auxiliary(law, 1000, 99);
            assert_eq!(a, b);
        }
    }

    #[test]
    fn empirical_quantile_inf_definition() {
        let v = [1.0, 2.0, 3.0, 4.0];
        // smallest g with CDF >= gamma
        assert_eq!(empirical_quantile(&v, 0.25), 1.0);
        assert_eq!(empirical_quantile(&v, 0.26), 2.0);
        assert_eq!(empirical_quantile(&v, 0.75), 3.0);
        assert_eq!(empirical_quantile(&v, 1.0), 4.0);
        assert_eq!(empirical_quantile(&v, 0.01), 1.0);
    }

    fn small_fit() -> (Array2<f64>, Array1<f64>, TfFit) {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let n = 30;
        let p = 12;
        let x = Array2::from_shape_fn((n, p), |_| StandardNormal.sample(&mut rng));
        let f: Array1<f64> = (0..p).map(|j| (j as f64 / 4.0).sin()).collect();
        let y = x.dot(&f)
            + Array1::from_shape_fn(n, |_| {
                let e: f64 = StandardNormal.sample(&mut rng);
                0.3 * e
            });
        let spec = PenaltySpec::single(2, 0.2).unwrap();
        let fit = fit_gaussian(x.view(), None, y.view(), &spec, &AdmmConfig::default()).unwrap();
        (x, y, fit)
    }

    #[test]
    fn rejects_bad_configurations() {
        let (x, y, fit) = small_fit();
        let cfg = AdmmConfig::default();
        // too few replicates
        assert!(wild_bootstrap(
            &fit, x.view(), None, y.view(), 50,
            AuxiliaryLaw::MammenTwoPoint, 0.95, 1, &cfg
        )
        .is_err());
        // quantile resolution: B * alpha/2 < 5
        assert!(wild_bootstrap(
            &fit, x.view(), None, y.view(), 150,
            AuxiliaryLaw::MammenTwoPoint, 0.95, 1, &cfg
        )
        .is_err());
        // non-Gaussian fit
        let mut glm_fit = fit.clone();
        glm_fit.family = Family::Bernoulli;
        assert!(wild_bootstrap(
            &glm_fit, x.view(), None, y.view(), 400,
            AuxiliaryLaw::MammenTwoPoint, 0.95, 1, &cfg
        )
        .is_err());
    }

    #[test]
    fn nesting_and_permutation_invariance() {
        let (x, y, fit) = small_fit();
        let cfg = AdmmConfig::default();
        let b95 = wild_bootstrap(
            &fit, x.view(), None, y.view(), 1000,
            AuxiliaryLaw::Rademacher, 0.95, 7, &cfg,
        )
        .unwrap();
        let b99 = wild_bootstrap(
            &fit, x.view(), None, y.view(), 1000,
            AuxiliaryLaw::Rademacher, 0.99, 7, &cfg,
        )
        .unwrap();
        for j in 0..fit.grid_len() {
            assert!(b99.lower[j] <= b95.lower[j] + 1e-15);
            assert!(b99.upper[j] >= b95.upper[j] - 1e-15);
        }
        // identical seeds -> identical bands
        let again = wild_bootstrap(
            &fit, x.view(), None, y.view(), 1000,
            AuxiliaryLaw::Rademacher, 0.95, 7, &cfg,
        )
        .unwrap();
        assert_eq!(again.lower, b95.lower);
        assert_eq!(again.upper, b95.upper);
        // significance mask is exactly the zero-exclusion rule
        for j in 0..fit.grid_len() {
            let excl = b95.lower[j] > 0.0 || b95.upper[j] < 0.0;
            assert_eq!(b95.significant_mask[j], excl);
        }
        assert_eq!(b95.penalty, fit.penalty);
    }

    #[test]
    fn mammen_sample_moments() {
        let v = draw_auxiliary(AuxiliaryLaw::MammenTwoPoint, 200_000, 11);
        let m1 = v.mean().unwrap();
        let m2 = v.mapv(|x| x * x).mean().unwrap();
        let m3 = v.mapv(|x| x * x * x).mean().unwrap();
        assert_abs_diff_eq!(m1, 0.0, epsilon = 0.01);
        assert_abs_diff_eq!(m2, 1.0, epsilon = 0.02);
        assert_abs_diff_eq!(m3, 1.0, epsilon = 0.05);
    }
}

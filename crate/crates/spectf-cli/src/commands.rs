//! Command implementations.

use std::io::Write;
use std::path::Path;

use ndarray::{Array1, Array2};
use spectf::admm::{AdmmConfig, PenaltySpec};
use spectf::error::{Result, SpectfError};
use spectf::ingest::{ResponseTransform, SchemaConfig, SpectraTable};
use spectf::inference::{
    wild_bootstrap, write_bands_csv, write_scalar_intervals_csv, AuxiliaryLaw,
};
use spectf::models::{
    cross_validate, fit_gaussian, fit_glm, lambda_max_for, mixed_penalty_grid, predict,
    single_penalty_grid, tune_holdout, CvReport, Family, TfFit,
};
use spectf::simulation::{
    gen_scenario, run_table1_with, write_benchmark_csv, ScenarioKind, ScenarioSpec, TargetFn,
};

use crate::pipeline::{
    parse_penalty, prepare_for_fit, prepare_like_model, sibling_path, write_config,
    PrepareOptions, PreparedData,
};
use crate::{init_threads, resolve_seed, BenchmarkArgs, BootstrapArgs, FitArgs, PredictArgs,
    SimulateArgs};

const CV_SINGLE_GRID: usize = 50;
const CV_MIXED_GRID: usize = 15;

fn load_schema(path: &Option<String>) -> Result<SchemaConfig> {
    match path {
        Some(p) => SchemaConfig::from_path(Path::new(p)),
        None => Ok(SchemaConfig::default()),
    }
}

fn fit_options(args: &FitArgs, schema: &SchemaConfig) -> Result<PrepareOptions> {
    let aggregate = args.aggregate.or(schema.aggregate).unwrap_or(1);
    let transform = if args.log_response {
        ResponseTransform::Log
    } else {
        schema.transform.unwrap_or(ResponseTransform::Identity)
    };
    Ok(PrepareOptions {
        aggregate,
        transform,
        intercept: !args.no_intercept,
        standardize: args.standardize,
    })
}

fn zview(data: &PreparedData) -> Option<ndarray::ArrayView2<'_, f64>> {
    data.z.as_ref().map(|z| z.view())
}

fn response_of(data: &PreparedData, what: &str) -> Result<Array1<f64>> {
    data.y.clone().ok_or_else(|| {
        SpectfError::Data(format!("{what} has no response column"))
    })
}

fn write_cv_csv(report: &CvReport, path: &Path) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    writeln!(
        out,
        "order1,lambda1,order2,lambda2,mean_score,se_score,misclassification,selected"
    )?;
    for (i, spec) in report.grid.iter().enumerate() {
        let t = spec.terms();
        let (o2, l2) = if t.len() == 2 {
            (t[1].diff_order.to_string(), t[1].lam.to_string())
        } else {
            (String::new(), String::new())
        };
        let mis = report
            .misclassification
            .as_ref()
            .map(|m| {
                if m[i].is_finite() {
                    m[i].to_string()
                } else {
                    String::new()
                }
            })
            .unwrap_or_default();
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            t[0].diff_order,
            t[0].lam,
            o2,
            l2,
            report.mean_score[i],
            report.se_score[i],
            mis,
            u8::from(i == report.best_index)
        )?;
    }
    Ok(())
}

fn describe_penalty(spec: &PenaltySpec) -> String {
    spec.terms()
        .iter()
        .map(|t| format!("order {} at lambda {}", t.diff_order, t.lam))
        .collect::<Vec<_>>()
        .join(" + ")
}

/// `fit` and `cv` share the whole pipeline; `cv` stops after the score table.
pub fn fit(args: &FitArgs, cv_only: bool) -> Result<()> {
    init_threads(args.threads);
    let seed = resolve_seed(args.seed);
    let schema = load_schema(&args.schema)?;
    let opts = fit_options(args, &schema)?;
    let data = prepare_for_fit(Path::new(&args.data), &schema, &opts)?;
    let y = response_of(&data, "the training file")?;
    let family: Family = args.family.parse()?;
    family.check_response(y.view())?;
    let (orders, fixed_lams) = parse_penalty(&args.orders, args.lambda.as_deref())?;
    let admm_cfg = AdmmConfig::default();

    let (penalty, report) = match fixed_lams {
        Some(lams) => {
            let spec = match orders.as_slice() {
                [o] => PenaltySpec::single(*o, lams[0])?,
                [a, b] => PenaltySpec::mixed(*a, lams[0], *b, lams[1])?,
                _ => unreachable!("parse_penalty bounds the term count"),
            };
            (spec, None)
        }
        None => {
            let grid = match orders.as_slice() {
                [o] => single_penalty_grid(
                    data.x.view(),
                    zview(&data),
                    y.view(),
                    family,
                    *o,
                    CV_SINGLE_GRID,
                )?,
                [a, b] => {
                    let lmax_a =
                        lambda_max_for(data.x.view(), zview(&data), y.view(), family, *a)?;
                    let lmax_b =
                        lambda_max_for(data.x.view(), zview(&data), y.view(), family, *b)?;
                    mixed_penalty_grid(
                        *a,
                        lmax_a.max(1e-12),
                        CV_MIXED_GRID,
                        *b,
                        lmax_b.max(1e-12),
                        CV_MIXED_GRID,
                    )?
                }
                _ => unreachable!(),
            };
            let report = match &args.holdout {
                Some(hpath) => {
                    let hold = prepare_like_model(
                        Path::new(hpath),
                        &schema,
                        &data.meta,
                        data.x.ncols(),
                    )?;
                    let hy = response_of(&hold, "the holdout file")?;
                    tune_holdout(
                        data.x.view(),
                        zview(&data),
                        y.view(),
                        hold.x.view(),
                        zview(&hold),
                        hy.view(),
                        family,
                        &grid,
                        &admm_cfg,
                    )?
                }
                None => {
                    let k = args.cv.unwrap_or(10);
                    cross_validate(
                        data.x.view(),
                        zview(&data),
                        y.view(),
                        family,
                        &grid,
                        k,
                        seed,
                        &admm_cfg,
                    )?
                }
            };
            (report.best().clone(), Some(report))
        }
    };

    if cv_only {
        let report = report.ok_or_else(|| {
            SpectfError::InvalidInput(
                "cv needs a tuning grid; drop --lambda or use the fit command".into(),
            )
        })?;
        write_cv_csv(&report, Path::new(&args.out))?;
        write_config(&args.out, "cv", args)?;
        println!(
            "cross-validated {} cells over {} folds; selected {}",
            report.grid.len(),
            report.folds,
            describe_penalty(report.best())
        );
        return Ok(());
    }

    let mut fit = match family {
        Family::Gaussian => fit_gaussian(data.x.view(), zview(&data), y.view(), &penalty, &admm_cfg)?,
        _ => fit_glm(data.x.view(), zview(&data), y.view(), family, &penalty, &admm_cfg)?,
    };
    fit.set_grid(Array1::from_vec(data.wavelengths.clone()))?;
    fit.gamma_names = data.z_names.clone();
    fit.preprocessing = data.meta.clone();

    std::fs::write(&args.out, fit.to_json()?)?;
    if let Some(report) = &report {
        write_cv_csv(report, &sibling_path(&args.out, "_cv", "csv"))?;
    }
    let preds = predict(&fit, data.x.view(), zview(&data))?;
    {
        let mut out = std::fs::File::create(sibling_path(&args.out, "_fitted", "csv"))?;
        writeln!(out, "id,fitted")?;
        for (id, v) in data.ids.iter().zip(preds.mean.iter()) {
            writeln!(out, "{id},{v}")?;
        }
    }
    write_config(&args.out, "fit", args)?;

    println!("fitted {} model: {}", family, describe_penalty(&penalty));
    println!(
        "iterations: {} (outer {}), converged: {}, objective: {:.6e}",
        fit.diagnostics.iterations,
        fit.diagnostics.outer_iterations,
        fit.diagnostics.converged,
        fit.diagnostics.objective
    );
    if !fit.gamma_names.is_empty() {
        println!("scalar coefficients:");
        for (name, g) in fit.gamma_names.iter().zip(fit.gamma_hat.iter()) {
            println!("  {name}: {g:.6}");
        }
    }
    Ok(())
}

pub fn predict_cmd(args: &PredictArgs) -> Result<()> {
    let model_text = std::fs::read_to_string(&args.model)?;
    let fit = TfFit::from_json(&model_text)?;
    let schema = load_schema(&args.schema)?;
    let data = prepare_like_model(
        Path::new(&args.data),
        &schema,
        &fit.preprocessing,
        fit.grid_len(),
    )?;
    if data.z_names != fit.gamma_names {
        return Err(SpectfError::Data(format!(
            "scalar covariates {:?} do not match the model's {:?}",
            data.z_names, fit.gamma_names
        )));
    }
    let preds = predict(&fit, data.x.view(), zview(&data))?;

    let mut out = std::fs::File::create(&args.out)?;
    let log_scale = fit.preprocessing.response_transform == ResponseTransform::Log;
    match fit.family {
        Family::Bernoulli => {
            writeln!(out, "id,probability,label")?;
            let labels = preds.labels.as_ref().expect("bernoulli labels");
            for i in 0..data.ids.len() {
                writeln!(out, "{},{},{}", data.ids[i], preds.mean[i], labels[i])?;
            }
        }
        _ if log_scale => {
            writeln!(out, "id,prediction,prediction_original_scale")?;
            for i in 0..data.ids.len() {
                writeln!(
                    out,
                    "{},{},{}",
                    data.ids[i],
                    preds.mean[i],
                    preds.mean[i].exp()
                )?;
            }
        }
        _ => {
            writeln!(out, "id,prediction")?;
            for i in 0..data.ids.len() {
                writeln!(out, "{},{}", data.ids[i], preds.mean[i])?;
            }
        }
    }
    write_config(&args.out, "predict", args)?;
    println!("wrote {} predictions to {}", data.ids.len(), args.out);
    Ok(())
}

pub fn bootstrap(args: &BootstrapArgs) -> Result<()> {
    init_threads(args.threads);
    let seed = resolve_seed(args.seed);
    let model_text = std::fs::read_to_string(&args.model)?;
    let fit = TfFit::from_json(&model_text)?;
    let schema = load_schema(&args.schema)?;
    let data = prepare_like_model(
        Path::new(&args.data),
        &schema,
        &fit.preprocessing,
        fit.grid_len(),
    )?;
    let y = response_of(&data, "the bootstrap data file")?;
    let law: AuxiliaryLaw = args.law.parse()?;

    let bands = wild_bootstrap(
        &fit,
        data.x.view(),
        zview(&data),
        y.view(),
        args.boot,
        law,
        args.conf,
        seed,
        &AdmmConfig::default(),
    )?;

    write_bands_csv(&fit, &bands, std::fs::File::create(&args.out)?)?;
    write_scalar_intervals_csv(
        &bands,
        std::fs::File::create(sibling_path(&args.out, "_scalars", "csv"))?,
    )?;
    write_config(&args.out, "bootstrap", args)?;

    let significant = bands.significant_mask.iter().filter(|s| **s).count();
    println!(
        "{} replicates, {:.0}% bands: {}/{} gridpoints exclude zero",
        bands.b_replicates,
        100.0 * bands.conf_level,
        significant,
        fit.grid_len()
    );
    if !bands.scalar_intervals.is_empty() {
        println!("covariate intervals (lower, estimate, upper):");
        for iv in &bands.scalar_intervals {
            let mark = if iv.significant { " *" } else { "" };
            println!(
                "  {}: ({:.4}, {:.4}, {:.4}){}",
                iv.name, iv.lower, iv.estimate, iv.upper, mark
            );
        }
    }
    Ok(())
}

pub fn simulate(args: &SimulateArgs) -> Result<()> {
    let seed = resolve_seed(args.seed);
    let kind: ScenarioKind = args.scenario.parse()?;
    let target: TargetFn = args.target.parse()?;
    let mut spec = ScenarioSpec::new(kind, target, seed);
    spec.n = args.n;
    spec.p = args.p;
    spec.snr = args.snr;
    let data = gen_scenario(&spec)?;

    let n = data.y.len();
    let r = data.z.as_ref().map_or(0, |z| z.ncols());
    let table = SpectraTable {
        ids: (1..=n).map(|i| format!("s{i}")).collect(),
        wavelengths: data.grid.to_vec(),
        absorbances: data.x.clone(),
        response: Some(data.y.clone()),
        scalar_names: (1..=r).map(|j| format!("z{j}")).collect(),
        scalars: data
            .z
            .clone()
            .unwrap_or_else(|| Array2::zeros((n, 0))),
        scalar_meta: (1..=r)
            .map(|j| spectf::ingest::ScalarColumnMeta::Numeric { name: format!("z{j}") })
            .collect(),
        response_transform: ResponseTransform::Identity,
    };
    spectf::ingest::write_csv(&table, Path::new(&args.out))?;
    {
        let mut out = std::fs::File::create(sibling_path(&args.out, "_truth", "csv"))?;
        writeln!(out, "wavelength,f_true")?;
        for (w, f) in data.grid.iter().zip(data.f_true.iter()) {
            writeln!(out, "{w},{f}")?;
        }
    }
    write_config(&args.out, "simulate", args)?;
    println!(
        "scenario {} / {} dataset: n={}, p={}, written to {}",
        kind, target, args.n, args.p, args.out
    );
    Ok(())
}

pub fn benchmark(args: &BenchmarkArgs) -> Result<()> {
    init_threads(args.threads);
    let seed = resolve_seed(args.seed);
    let report = run_table1_with(args.reps, seed, args.n, args.p, args.snr)?;
    write_benchmark_csv(&report, std::fs::File::create(&args.out)?)?;
    write_config(&args.out, "benchmark", args)?;

    println!("scenario function estimator mean_mise se_mise reps failures");
    for row in &report.rows {
        println!(
            "{:>8} {:>8} {:>9} {:>9.4} {:>7.4} {:>4} {:>8}",
            row.scenario.to_string(),
            row.target.to_string(),
            row.estimator.to_string(),
            row.mean_mise,
            row.se_mise,
            row.reps,
            row.failures
        );
    }
    Ok(())
}

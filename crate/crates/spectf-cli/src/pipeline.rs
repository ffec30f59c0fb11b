//! Shared preprocessing pipeline: CSV to design matrices, forward for
//! fitting and replayed from a model's recorded metadata for prediction.

use std::path::Path;

use ndarray::{Array1, Array2};
use spectf::error::{Result, SpectfError};
use spectf::ingest::{
    aggregate_wavelengths, read_csv_with_meta, transform_response, PreprocessMeta,
    ResponseTransform, SchemaConfig, SpectraTable, Standardization,
};

pub struct PreparedData {
    pub ids: Vec<String>,
    pub wavelengths: Vec<f64>,
    pub x: Array2<f64>,
    /// Scalar design including the intercept column when enabled.
    pub z: Option<Array2<f64>>,
    pub z_names: Vec<String>,
    pub y: Option<Array1<f64>>,
    pub meta: PreprocessMeta,
}

pub struct PrepareOptions {
    pub aggregate: usize,
    pub transform: ResponseTransform,
    pub intercept: bool,
    pub standardize: bool,
}

/// Forward pipeline used at fit time: aggregate, transform the response,
/// optionally standardize, and attach the intercept column.
pub fn prepare_for_fit(
    path: &Path,
    schema: &SchemaConfig,
    opts: &PrepareOptions,
) -> Result<PreparedData> {
    let table = read_csv_with_meta(path, schema, None)?;
    let raw_grid_len = table.grid_len();
    let table = aggregate_wavelengths(&table, opts.aggregate)?;
    let table = transform_response(&table, opts.transform)?;

    let mut x = table.absorbances.clone();
    let standardization = if opts.standardize {
        Some(standardize_columns(&mut x)?)
    } else {
        None
    };

    let (z, z_names) = scalar_block(&table, opts.intercept);
    let meta = PreprocessMeta {
        aggregate_factor: opts.aggregate,
        raw_grid_len,
        response_transform: opts.transform,
        standardization: standardization.clone(),
        intercept: opts.intercept,
        scalar_columns: table.scalar_meta.clone(),
    };
    Ok(PreparedData {
        ids: table.ids.clone(),
        wavelengths: table.wavelengths.clone(),
        x,
        z,
        z_names,
        y: table.response.clone(),
        meta,
    })
}

/// Replay a model's recorded preprocessing on new data.
pub fn prepare_like_model(
    path: &Path,
    schema: &SchemaConfig,
    meta: &PreprocessMeta,
    expected_grid_len: usize,
) -> Result<PreparedData> {
    let table = read_csv_with_meta(path, schema, Some(&meta.scalar_columns))?;
    if meta.raw_grid_len > 0 && table.grid_len() != meta.raw_grid_len {
        return Err(SpectfError::Data(format!(
            "the model was fit on spectra with {} raw wavelengths, this file has {}",
            meta.raw_grid_len,
            table.grid_len()
        )));
    }
    let table = aggregate_wavelengths(&table, meta.aggregate_factor.max(1))?;
    if table.grid_len() != expected_grid_len {
        return Err(SpectfError::Data(format!(
            "after aggregation the grid has {} points but the model expects {}",
            table.grid_len(),
            expected_grid_len
        )));
    }
    let table = transform_response(&table, applied_transform(&table, meta))?;

    let mut x = table.absorbances.clone();
    if let Some(st) = &meta.standardization {
        apply_standardization(&mut x, st)?;
    }
    let (z, z_names) = scalar_block(&table, meta.intercept);
    Ok(PreparedData {
        ids: table.ids.clone(),
        wavelengths: table.wavelengths.clone(),
        x,
        z,
        z_names,
        y: table.response.clone(),
        meta: meta.clone(),
    })
}

/// Prediction data may come without a response column; only transform when
/// one is present.
fn applied_transform(table: &SpectraTable, meta: &PreprocessMeta) -> ResponseTransform {
    if table.response.is_some() {
        meta.response_transform
    } else {
        ResponseTransform::Identity
    }
}

fn scalar_block(table: &SpectraTable, intercept: bool) -> (Option<Array2<f64>>, Vec<String>) {
    let n = table.n_samples();
    let r = table.scalar_names.len();
    if !intercept && r == 0 {
        return (None, Vec::new());
    }
    let extra = usize::from(intercept);
    let mut z = Array2::<f64>::zeros((n, extra + r));
    let mut names = Vec::with_capacity(extra + r);
    if intercept {
        z.column_mut(0).fill(1.0);
        names.push("Intercept".to_string());
    }
    for j in 0..r {
        z.column_mut(extra + j).assign(&table.scalars.column(j));
        names.push(table.scalar_names[j].clone());
    }
    (Some(z), names)
}

fn standardize_columns(x: &mut Array2<f64>) -> Result<Standardization> {
    let n = x.nrows() as f64;
    let mut means = Vec::with_capacity(x.ncols());
    let mut scales = Vec::with_capacity(x.ncols());
    for mut col in x.columns_mut() {
        let mean = col.sum() / n;
        let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
        let scale = if var.sqrt() > 0.0 { var.sqrt() } else { 1.0 };
        col.mapv_inplace(|v| (v - mean) / scale);
        means.push(mean);
        scales.push(scale);
    }
    Ok(Standardization { means, scales })
}

fn apply_standardization(x: &mut Array2<f64>, st: &Standardization) -> Result<()> {
    if st.means.len() != x.ncols() {
        return Err(SpectfError::Data(format!(
            "standardization metadata covers {} columns, data has {}",
            st.means.len(),
            x.ncols()
        )));
    }
    for (j, mut col) in x.columns_mut().into_iter().enumerate() {
        let (m, s) = (st.means[j], st.scales[j]);
        col.mapv_inplace(|v| (v - m) / s);
    }
    Ok(())
}

/// Parse `--orders 4` / `--orders 4,1` and an optional matching `--lambda`.
pub fn parse_penalty(
    orders: &str,
    lambda: Option<&str>,
) -> Result<(Vec<usize>, Option<Vec<f64>>)> {
    let orders: Vec<usize> = orders
        .split(',')
        .map(|s| {
            s.trim().parse::<usize>().map_err(|_| {
                SpectfError::InvalidInput(format!("bad derivative order '{s}' in --orders"))
            })
        })
        .collect::<Result<_>>()?;
    if orders.is_empty() || orders.len() > 2 {
        return Err(SpectfError::InvalidInput(
            "--orders takes one or two derivative orders".into(),
        ));
    }
    let lams = match lambda {
        None => None,
        Some(text) => {
            let v: Vec<f64> = text
                .split(',')
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|_| {
                        SpectfError::InvalidInput(format!("bad penalty weight '{s}' in --lambda"))
                    })
                })
                .collect::<Result<_>>()?;
            if v.len() != orders.len() {
                return Err(SpectfError::InvalidInput(format!(
                    "--lambda needs {} value(s) to match --orders",
                    orders.len()
                )));
            }
            Some(v)
        }
    };
    Ok((orders, lams))
}

/// `foo/bar.json` with suffix `_cv` and extension `csv` -> `foo/bar_cv.csv`.
pub fn sibling_path(out: &str, suffix: &str, ext: &str) -> std::path::PathBuf {
    let path = Path::new(out);
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    path.with_file_name(format!("{stem}{suffix}.{ext}"))
}

/// The fully resolved configuration written next to every output.
pub fn write_config<T: serde::Serialize>(out: &str, command: &str, args: &T) -> Result<()> {
    #[derive(serde::Serialize)]
    struct ConfigDoc<'a, T> {
        command: &'a str,
        #[serde(flatten)]
        args: &'a T,
    }
    let doc = ConfigDoc { command, args };
    let path = Path::new(out).with_extension("config.json");
    std::fs::write(path, serde_json::to_string_pretty(&doc)?)?;
    Ok(())
}

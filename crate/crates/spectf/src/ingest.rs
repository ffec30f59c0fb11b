//! Wide-format spectra ingestion and preprocessing.
//!
//! Input CSV layout: one row per sample with header
//! `id,<scalar cols...>,response,<numeric wavelength headers...>`. Columns
//! whose header parses as a number are wavelengths; `id` and `response` (or
//! the schema-configured names) play their obvious roles; everything else is
//! a scalar covariate. Categorical covariates are expanded to indicator
//! columns against a first-observed reference level, which is recorded so
//! prediction-time data is expanded identically.

use std::collections::HashSet;
use std::path::Path;

use ndarray::{Array1, Array2, Axis};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SpectfError};

/// Response-scale transform applied at ingestion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResponseTransform {
    #[default]
    Identity,
    Log,
}

impl std::str::FromStr for ResponseTransform {
    type Err = SpectfError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "identity" | "none" => Ok(ResponseTransform::Identity),
            "log" => Ok(ResponseTransform::Log),
            other => Err(SpectfError::InvalidInput(format!(
                "unknown response transform '{other}'"
            ))),
        }
    }
}

/// How one raw scalar column is encoded in the design.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarColumnMeta {
    Numeric { name: String },
    /// `levels[0]` is the reference level; the remaining levels each get an
    /// indicator column named `"<name> (<level>)"`.
    Categorical { name: String, levels: Vec<String> },
}

impl ScalarColumnMeta {
    pub fn name(&self) -> &str {
        match self {
            ScalarColumnMeta::Numeric { name } => name,
            ScalarColumnMeta::Categorical { name, .. } => name,
        }
    }

    /// Expanded design-column names this raw column contributes.
    pub fn expanded_names(&self) -> Vec<String> {
        match self {
            ScalarColumnMeta::Numeric { name } => vec![name.clone()],
            ScalarColumnMeta::Categorical { name, levels } => levels
                .iter()
                .skip(1)
                .map(|l| format!("{name} ({l})"))
                .collect(),
        }
    }
}

/// Column standardization parameters for the spectra block.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub means: Vec<f64>,
    pub scales: Vec<f64>,
}

/// Everything a fitted model must remember about preprocessing so that
/// prediction-time data can be pushed through the same pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PreprocessMeta {
    /// Adjacent-wavelength aggregation factor; 1 means none.
    pub aggregate_factor: usize,
    /// Wavelength count before aggregation; 0 when unknown.
    pub raw_grid_len: usize,
    pub response_transform: ResponseTransform,
    pub standardization: Option<Standardization>,
    /// Whether a constant intercept column was appended to the scalar block.
    pub intercept: bool,
    pub scalar_columns: Vec<ScalarColumnMeta>,
}

impl Default for PreprocessMeta {
    fn default() -> Self {
        PreprocessMeta {
            aggregate_factor: 1,
            raw_grid_len: 0,
            response_transform: ResponseTransform::Identity,
            standardization: None,
            intercept: false,
            scalar_columns: Vec::new(),
        }
    }
}

/// Column-role configuration, readable from a JSON schema file.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct SchemaConfig {
    pub id_column: String,
    pub response_column: String,
    /// Explicit scalar covariate columns; when empty, every non-id,
    /// non-response, non-wavelength column is used.
    pub scalar_columns: Vec<String>,
    pub transform: Option<ResponseTransform>,
    pub aggregate: Option<usize>,
}

impl Default for SchemaConfig {
    fn default() -> Self {
        SchemaConfig {
            id_column: "id".into(),
            response_column: "response".into(),
            scalar_columns: Vec::new(),
            transform: None,
            aggregate: None,
        }
    }
}

impl SchemaConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }
}

/// A validated spectra table: ids, ascending wavelengths, absorbances, an
/// optional response and expanded scalar covariates.
#[derive(Clone, Debug)]
pub struct SpectraTable {
    pub ids: Vec<String>,
    pub wavelengths: Vec<f64>,
    pub absorbances: Array2<f64>,
    pub response: Option<Array1<f64>>,
    pub scalar_names: Vec<String>,
    pub scalars: Array2<f64>,
    pub scalar_meta: Vec<ScalarColumnMeta>,
    pub response_transform: ResponseTransform,
}

impl SpectraTable {
    pub fn n_samples(&self) -> usize {
        self.ids.len()
    }

    pub fn grid_len(&self) -> usize {
        self.wavelengths.len()
    }

    pub fn scalars_view(&self) -> Option<ndarray::ArrayView2<'_, f64>> {
        if self.scalar_names.is_empty() {
            None
        } else {
            Some(self.scalars.view())
        }
    }
}

/// Read and validate a wide-format spectra CSV.
pub fn read_csv(path: &Path, schema: &SchemaConfig) -> Result<SpectraTable> {
    read_csv_with_meta(path, schema, None)
}

/// As [`read_csv`], but force scalar-covariate expansion to match a fitted
/// model's recorded column metadata (prediction-time path).
pub fn read_csv_with_meta(
    path: &Path,
    schema: &SchemaConfig,
    preset: Option<&[ScalarColumnMeta]>,
) -> Result<SpectraTable> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_path(path)?;
    let headers: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.to_string())
        .collect();

    let mut wav_cols: Vec<(usize, f64)> = Vec::new();
    let mut id_col: Option<usize> = None;
    let mut resp_col: Option<usize> = None;
    let mut scalar_cols: Vec<(usize, String)> = Vec::new();
    for (c, h) in headers.iter().enumerate() {
        if h == &schema.id_column {
            id_col = Some(c);
        } else if h == &schema.response_column {
            resp_col = Some(c);
        } else if let Ok(w) = h.parse::<f64>() {
            wav_cols.push((c, w));
        } else if schema.scalar_columns.is_empty() || schema.scalar_columns.contains(h) {
            scalar_cols.push((c, h.clone()));
        }
    }
    let id_col = id_col.ok_or_else(|| {
        SpectfError::Data(format!(
            "no '{}' column in the header of {}",
            schema.id_column,
            path.display()
        ))
    })?;
    if wav_cols.is_empty() {
        return Err(SpectfError::Data(
            "no numeric wavelength headers found".into(),
        ));
    }
    for w in wav_cols.windows(2) {
        if !(w[0].1 < w[1].1) {
            return Err(SpectfError::Data(format!(
                "wavelengths must be strictly ascending, found {} before {}",
                w[0].1, w[1].1
            )));
        }
    }
    if let Some(preset) = preset {
        // keep only the model's columns, in the model's order
        let mut ordered = Vec::with_capacity(preset.len());
        for meta in preset {
            let found = scalar_cols
                .iter()
                .find(|(_, n)| n == meta.name())
                .ok_or_else(|| {
                    SpectfError::Data(format!(
                        "the model expects a scalar column '{}' missing from {}",
                        meta.name(),
                        path.display()
                    ))
                })?;
            ordered.push(found.clone());
        }
        scalar_cols = ordered;
    }

    let mut ids: Vec<String> = Vec::new();
    let mut seen_ids: HashSet<String> = HashSet::new();
    let mut absorbances: Vec<f64> = Vec::new();
    let mut response: Vec<f64> = Vec::new();
    let mut raw_scalars: Vec<Vec<String>> = vec![Vec::new(); scalar_cols.len()];

    for (row_idx, record) in reader.records().enumerate() {
        let record = record?;
        let id = record
            .get(id_col)
            .ok_or_else(|| SpectfError::Data(format!("row {} is too short", row_idx + 1)))?
            .to_string();
        if !seen_ids.insert(id.clone()) {
            return Err(SpectfError::Data(format!("duplicated id '{id}'")));
        }
        for (c, w) in &wav_cols {
            let cell = record.get(*c).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                SpectfError::Data(format!(
                    "row '{id}': absorbance at wavelength {w} is not a number ('{cell}')"
                ))
            })?;
            if !v.is_finite() {
                return Err(SpectfError::Data(format!(
                    "row '{id}': absorbance at wavelength {w} is not finite"
                )));
            }
            absorbances.push(v);
        }
        if let Some(rc) = resp_col {
            let cell = record.get(rc).unwrap_or("");
            let v: f64 = cell.parse().map_err(|_| {
                SpectfError::Data(format!("row '{id}': response '{cell}' is not a number"))
            })?;
            response.push(v);
        }
        for (k, (c, name)) in scalar_cols.iter().enumerate() {
            let cell = record.get(*c).ok_or_else(|| {
                SpectfError::Data(format!("row '{id}': missing value in column '{name}'"))
            })?;
            if cell.is_empty() {
                return Err(SpectfError::Data(format!(
                    "row '{id}': empty value in column '{name}'"
                )));
            }
            raw_scalars[k].push(cell.to_string());
        }
        ids.push(id);
    }
    let n = ids.len();
    if n == 0 {
        return Err(SpectfError::Data("the file contains no data rows".into()));
    }
    let p = wav_cols.len();
    let absorbances = Array2::from_shape_vec((n, p), absorbances)
        .expect("row-major absorbance block");

    // classify scalar columns and expand categoricals
    let mut scalar_meta: Vec<ScalarColumnMeta> = Vec::with_capacity(scalar_cols.len());
    for (k, (_, name)) in scalar_cols.iter().enumerate() {
        if let Some(preset) = preset {
            scalar_meta.push(preset[k].clone());
            continue;
        }
        let numeric = raw_scalars[k].iter().all(|v| v.parse::<f64>().is_ok());
        if numeric {
            scalar_meta.push(ScalarColumnMeta::Numeric { name: name.clone() });
        } else {
            let mut levels: Vec<String> = Vec::new();
            for v in &raw_scalars[k] {
                if !levels.contains(v) {
                    levels.push(v.clone());
                }
            }
            scalar_meta.push(ScalarColumnMeta::Categorical {
                name: name.clone(),
                levels,
            });
        }
    }

    let mut scalar_names: Vec<String> = Vec::new();
    let mut scalar_data: Vec<Vec<f64>> = Vec::new();
    for (k, meta) in scalar_meta.iter().enumerate() {
        match meta {
            ScalarColumnMeta::Numeric { name } => {
                let mut col = Vec::with_capacity(n);
                for (i, v) in raw_scalars[k].iter().enumerate() {
                    let parsed: f64 = v.parse().map_err(|_| {
                        SpectfError::Data(format!(
                            "row '{}': column '{name}' should be numeric, found '{v}'",
                            ids[i]
                        ))
                    })?;
                    col.push(parsed);
                }
                scalar_names.push(name.clone());
                scalar_data.push(col);
            }
            ScalarColumnMeta::Categorical { name, levels } => {
                for level in levels.iter().skip(1) {
                    let mut col = Vec::with_capacity(n);
                    for v in raw_scalars[k].iter() {
                        col.push(f64::from(v == level));
                    }
                    scalar_names.push(format!("{name} ({level})"));
                    scalar_data.push(col);
                }
                // validate every observed level is known
                for (i, v) in raw_scalars[k].iter().enumerate() {
                    if !levels.contains(v) {
                        return Err(SpectfError::Data(format!(
                            "row '{}': unknown level '{v}' in column '{name}' \
                             (known: {levels:?})",
                            ids[i]
                        )));
                    }
                }
            }
        }
    }
    let r = scalar_names.len();
    let mut scalars = Array2::<f64>::zeros((n, r));
    for (j, col) in scalar_data.iter().enumerate() {
        for (i, v) in col.iter().enumerate() {
            scalars[[i, j]] = *v;
        }
    }

    Ok(SpectraTable {
        ids,
        wavelengths: wav_cols.iter().map(|(_, w)| *w).collect(),
        absorbances,
        response: if resp_col.is_some() {
            Some(Array1::from_vec(response))
        } else {
            None
        },
        scalar_names,
        scalars,
        scalar_meta,
        response_transform: ResponseTransform::Identity,
    })
}

/// Write a table back to the wide CSV layout at full round-trip precision.
pub fn write_csv(table: &SpectraTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mut header = vec!["id".to_string()];
    header.extend(table.scalar_names.iter().cloned());
    if table.response.is_some() {
        header.push("response".into());
    }
    header.extend(table.wavelengths.iter().map(|v| format!("{v}")));
    w.write_record(&header)?;
    for i in 0..table.n_samples() {
        let mut rec = vec![table.ids[i].clone()];
        for j in 0..table.scalar_names.len() {
            rec.push(format!("{}", table.scalars[[i, j]]));
        }
        if let Some(resp) = &table.response {
            rec.push(format!("{}", resp[i]));
        }
        for j in 0..table.grid_len() {
            rec.push(format!("{}", table.absorbances[[i, j]]));
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Replace non-overlapping blocks of `factor` adjacent wavelengths by their
/// mean absorbance and mean wavelength. A trailing partial block is averaged
/// over the columns it has, so the output width is `ceil(p / factor)`.
pub fn aggregate_wavelengths(table: &SpectraTable, factor: usize) -> Result<SpectraTable> {
    if factor == 0 {
        return Err(SpectfError::InvalidInput(
            "the aggregation factor must be at least 1".into(),
        ));
    }
    let p = table.grid_len();
    if factor > p {
        return Err(SpectfError::InvalidInput(format!(
            "aggregation factor {factor} exceeds the {p} available wavelengths"
        )));
    }
    if factor == 1 {
        return Ok(table.clone());
    }
    let blocks = p.div_ceil(factor);
    let n = table.n_samples();
    let mut wavelengths = Vec::with_capacity(blocks);
    let mut absorbances = Array2::<f64>::zeros((n, blocks));
    for b in 0..blocks {
        let lo = b * factor;
        let hi = ((b + 1) * factor).min(p);
        let width = (hi - lo) as f64;
        wavelengths.push(table.wavelengths[lo..hi].iter().sum::<f64>() / width);
        for i in 0..n {
            let mut s = 0.0;
            for j in lo..hi {
                s += table.absorbances[[i, j]];
            }
            absorbances[[i, b]] = s / width;
        }
    }
    Ok(SpectraTable {
        wavelengths,
        absorbances,
        ..table.clone()
    })
}

/// Transform the response, recording the transform for prediction-time
/// back-mapping. `Log` requires strictly positive responses.
pub fn transform_response(
    table: &SpectraTable,
    transform: ResponseTransform,
) -> Result<SpectraTable> {
    let mut out = table.clone();
    match transform {
        ResponseTransform::Identity => {}
        ResponseTransform::Log => {
            let resp = out.response.as_mut().ok_or_else(|| {
                SpectfError::Data("cannot log-transform: the table has no response".into())
            })?;
            for (i, v) in resp.iter_mut().enumerate() {
                if *v <= 0.0 {
                    return Err(SpectfError::Data(format!(
                        "row '{}': log transform needs a positive response, found {v}",
                        table.ids[i]
                    )));
                }
                *v = v.ln();
            }
            out.response_transform = ResponseTransform::Log;
        }
    }
    Ok(out)
}

/// Deterministic train/holdout split by shuffled row assignment.
pub fn split_holdout(
    table: &SpectraTable,
    holdout_fraction: f64,
    seed: u64,
) -> Result<(SpectraTable, SpectraTable)> {
    if !(0.0..1.0).contains(&holdout_fraction) || holdout_fraction <= 0.0 {
        return Err(SpectfError::InvalidInput(format!(
            "holdout fraction must be in (0, 1), got {holdout_fraction}"
        )));
    }
    let n = table.n_samples();
    let n_hold = ((n as f64) * holdout_fraction).round().max(1.0) as usize;
    if n_hold >= n {
        return Err(SpectfError::InvalidInput(
            "the holdout would consume every observation".into(),
        ));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    idx.shuffle(&mut rng);
    let (hold_idx, train_idx) = idx.split_at(n_hold);
    let mut hold_idx = hold_idx.to_vec();
    let mut train_idx = train_idx.to_vec();
    hold_idx.sort_unstable();
    train_idx.sort_unstable();
    Ok((subset(table, &train_idx), subset(table, &hold_idx)))
}

fn subset(table: &SpectraTable, rows: &[usize]) -> SpectraTable {
    SpectraTable {
        ids: rows.iter().map(|&i| table.ids[i].clone()).collect(),
        wavelengths: table.wavelengths.clone(),
        absorbances: table.absorbances.select(Axis(0), rows),
        response: table
            .response
            .as_ref()
            .map(|r| rows.iter().map(|&i| r[i]).collect()),
        scalar_names: table.scalar_names.clone(),
        scalars: table.scalars.select(Axis(0), rows),
        scalar_meta: table.scalar_meta.clone(),
        response_transform: table.response_transform,
    }
}

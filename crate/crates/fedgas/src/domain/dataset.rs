use std::collections::BTreeSet;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use ndarray::{Array2, ArrayView1, ArrayView2, Axis};

use crate::error::{Error, Result};

/// A date-indexed feature matrix plus an optional target series.
///
/// This is the unit of data ownership per participant: one row per calendar
/// day, one column per named feature, and (for label holders) the observed
/// gas usage for each day.
///
/// Invariants, enforced at construction:
/// - row count == number of dates == target length (when present)
/// - dates strictly increasing, no duplicates
/// - every value finite
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeriesDataset {
    dates: Vec<NaiveDate>,
    feature_names: Vec<String>,
    features: Array2<f64>,
    target: Option<Vec<f64>>,
}

impl TimeSeriesDataset {
    pub fn new(
        dates: Vec<NaiveDate>,
        feature_names: Vec<String>,
        features: Array2<f64>,
        target: Option<Vec<f64>>,
    ) -> Result<Self> {
        if features.nrows() != dates.len() {
            return Err(Error::Shape(format!(
                "feature matrix has {} rows but {} dates given",
                features.nrows(),
                dates.len()
            )));
        }
        if features.ncols() != feature_names.len() {
            return Err(Error::Shape(format!(
                "feature matrix has {} columns but {} names given",
                features.ncols(),
                feature_names.len()
            )));
        }
        if let Some(t) = &target {
            if t.len() != dates.len() {
                return Err(Error::Shape(format!(
                    "target has {} entries but {} dates given",
                    t.len(),
                    dates.len()
                )));
            }
        }
        let mut names = BTreeSet::new();
        for name in &feature_names {
            if !names.insert(name.as_str()) {
                return Err(Error::Schema(format!("duplicate feature name `{name}`")));
            }
        }
        for (i, pair) in dates.windows(2).enumerate() {
            if pair[1] <= pair[0] {
                return Err(Error::Validation {
                    row: i + 2,
                    message: format!(
                        "dates not strictly increasing ({} then {})",
                        pair[0], pair[1]
                    ),
                });
            }
        }
        for (i, row) in features.rows().into_iter().enumerate() {
            if let Some(v) = row.iter().find(|v| !v.is_finite()) {
                return Err(Error::Validation {
                    row: i + 1,
                    message: format!("non-finite feature value {v}"),
                });
            }
        }
        if let Some(t) = &target {
            if let Some((i, v)) = t.iter().enumerate().find(|(_, v)| !v.is_finite()) {
                return Err(Error::Validation {
                    row: i + 1,
                    message: format!("non-finite target value {v}"),
                });
            }
        }
        Ok(Self {
            dates,
            feature_names,
            features,
            target,
        })
    }

    pub fn rows(&self) -> usize {
        self.dates.len()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn features(&self) -> ArrayView2<'_, f64> {
        self.features.view()
    }

    pub fn target(&self) -> Option<&[f64]> {
        self.target.as_deref()
    }

    pub fn has_target(&self) -> bool {
        self.target.is_some()
    }

    pub fn feature_column(&self, name: &str) -> Option<ArrayView1<'_, f64>> {
        let idx = self.feature_names.iter().position(|n| n == name)?;
        Some(self.features.column(idx))
    }

    /// Dataset restricted to the given row indices (which must be ascending).
    pub(crate) fn select_rows(&self, indices: &[usize]) -> Self {
        let dates = indices.iter().map(|&i| self.dates[i]).collect();
        let features = self.features.select(Axis(0), indices);
        let target = self
            .target
            .as_ref()
            .map(|t| indices.iter().map(|&i| t[i]).collect());
        Self {
            dates,
            feature_names: self.feature_names.clone(),
            features,
            target,
        }
    }

    /// Contiguous row range [start, end), preserving columns and target.
    pub fn slice_rows(&self, start: usize, end: usize) -> Self {
        let indices: Vec<usize> = (start..end).collect();
        self.select_rows(&indices)
    }

    /// Split into a training prefix and evaluation suffix of `eval_rows` days.
    pub fn split_eval_suffix(&self, eval_rows: usize) -> Result<(Self, Self)> {
        if eval_rows == 0 || eval_rows >= self.rows() {
            return Err(Error::Config(format!(
                "evaluation window of {eval_rows} rows must leave both a training and an \
                 evaluation split of a {}-row dataset",
                self.rows()
            )));
        }
        let cut = self.rows() - eval_rows;
        Ok((self.slice_rows(0, cut), self.slice_rows(cut, self.rows())))
    }

    /// Drop the target series, keeping dates and features.
    pub fn without_target(&self) -> Self {
        Self {
            dates: self.dates.clone(),
            feature_names: self.feature_names.clone(),
            features: self.features.clone(),
            target: None,
        }
    }
}

/// Expected column layout of a dataset CSV.
#[derive(Debug, Clone)]
pub struct CsvSchema {
    pub features: Vec<String>,
    pub target: Option<TargetColumn>,
}

/// Target column expectation: by name, optionally tolerated missing.
#[derive(Debug, Clone)]
pub struct TargetColumn {
    pub name: String,
    pub required: bool,
}

impl CsvSchema {
    pub fn new<S: Into<String>>(features: Vec<S>, target: Option<TargetColumn>) -> Self {
        Self {
            features: features.into_iter().map(Into::into).collect(),
            target,
        }
    }

    pub fn required_target<S: Into<String>>(features: Vec<S>, target: S) -> Self {
        Self::new(
            features,
            Some(TargetColumn {
                name: target.into(),
                required: true,
            }),
        )
    }

    pub fn optional_target<S: Into<String>>(features: Vec<S>, target: S) -> Self {
        Self::new(
            features,
            Some(TargetColumn {
                name: target.into(),
                required: false,
            }),
        )
    }

    pub fn features_only<S: Into<String>>(features: Vec<S>) -> Self {
        Self::new(features, None)
    }
}

/// Load a dataset from CSV. Header must contain `date` plus every schema
/// feature; extra columns are ignored. Rows are sorted by date before
/// validation, so duplicate dates are reported against the input row order.
///
/// Format: UTF-8, `\n` newlines, ISO-8601 dates, `.` decimal separator.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<TimeSeriesDataset> {
    let path = path.as_ref();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_path(path)?;
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();

    let col = |name: &str| headers.iter().position(|h| h == name);
    let date_idx = col("date").ok_or_else(|| Error::Schema("missing column `date`".into()))?;
    let mut feature_idx = Vec::with_capacity(schema.features.len());
    for name in &schema.features {
        let idx = col(name).ok_or_else(|| Error::Schema(format!("missing column `{name}`")))?;
        feature_idx.push(idx);
    }
    let target_idx = match &schema.target {
        Some(t) => match col(&t.name) {
            Some(idx) => Some(idx),
            None if t.required => {
                return Err(Error::Schema(format!("missing column `{}`", t.name)))
            }
            None => None,
        },
        None => None,
    };

    // (date, features, target, input row) tuples; row numbers are 1-based
    // over data rows so errors point at the offending line of the file body.
    let mut rows: Vec<(NaiveDate, Vec<f64>, Option<f64>, usize)> = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let date_text = record.get(date_idx).unwrap_or("");
        let date =
            NaiveDate::parse_from_str(date_text, "%Y-%m-%d").map_err(|_| Error::Validation {
                row,
                message: format!("unparseable date `{date_text}`"),
            })?;
        let mut values = Vec::with_capacity(feature_idx.len());
        for (&idx, name) in feature_idx.iter().zip(&schema.features) {
            values.push(parse_cell(record.get(idx).unwrap_or(""), name, row)?);
        }
        let target = match target_idx {
            Some(idx) => Some(parse_cell(
                record.get(idx).unwrap_or(""),
                &schema.target.as_ref().unwrap().name,
                row,
            )?),
            None => None,
        };
        rows.push((date, values, target, row));
    }

    rows.sort_by_key(|(date, _, _, _)| *date);
    if let Some(pair) = rows.windows(2).find(|pair| pair[0].0 == pair[1].0) {
        return Err(Error::Validation {
            row: pair[0].3.max(pair[1].3),
            message: format!("duplicate date {}", pair[0].0),
        });
    }

    let n = rows.len();
    let k = schema.features.len();
    let mut features = Array2::zeros((n, k));
    let mut dates = Vec::with_capacity(n);
    let mut target = target_idx.map(|_| Vec::with_capacity(n));
    for (r, (date, values, t, _)) in rows.into_iter().enumerate() {
        dates.push(date);
        for (c, v) in values.into_iter().enumerate() {
            features[[r, c]] = v;
        }
        if let Some(series) = target.as_mut() {
            series.push(t.unwrap());
        }
    }
    TimeSeriesDataset::new(dates, schema.features.clone(), features, target)
}

fn parse_cell(text: &str, column: &str, row: usize) -> Result<f64> {
    let value: f64 = text.trim().parse().map_err(|_| Error::Validation {
        row,
        message: format!("unparseable value `{text}` in column `{column}`"),
    })?;
    if !value.is_finite() {
        return Err(Error::Validation {
            row,
            message: format!("non-finite value `{text}` in column `{column}`"),
        });
    }
    Ok(value)
}

/// Write a dataset in the CSV format `load_csv` reads back:
/// header `date,<feature...>[,<target>]`, one row per day.
pub fn write_csv(
    dataset: &TimeSeriesDataset,
    target_name: Option<&str>,
    mut out: impl Write,
) -> Result<()> {
    let mut header = vec!["date".to_string()];
    header.extend(dataset.feature_names().iter().cloned());
    if dataset.has_target() {
        header.push(target_name.unwrap_or("target").to_string());
    }
    writeln!(out, "{}", header.join(","))?;
    for (i, date) in dataset.dates().iter().enumerate() {
        let mut cells = vec![date.format("%Y-%m-%d").to_string()];
        for v in dataset.features().row(i) {
            cells.push(format_value(*v));
        }
        if let Some(t) = dataset.target() {
            cells.push(format_value(t[i]));
        }
        writeln!(out, "{}", cells.join(","))?;
    }
    Ok(())
}

fn format_value(v: f64) -> String {
    // `{}` on f64 prints the shortest form that round-trips exactly.
    format!("{v}")
}

/// Restrict every dataset to the dates common to all of them, in ascending
/// order. Column sets are preserved; only rows change.
pub fn align_by_date(datasets: &[TimeSeriesDataset]) -> Result<Vec<TimeSeriesDataset>> {
    if datasets.is_empty() {
        return Err(Error::Alignment("no datasets to align".into()));
    }
    let mut common: BTreeSet<NaiveDate> = datasets[0].dates().iter().copied().collect();
    for ds in &datasets[1..] {
        let dates: BTreeSet<NaiveDate> = ds.dates().iter().copied().collect();
        common = common.intersection(&dates).copied().collect();
    }
    if common.is_empty() {
        return Err(Error::Alignment(
            "datasets share no common dates".to_string(),
        ));
    }
    Ok(datasets
        .iter()
        .map(|ds| {
            let indices: Vec<usize> = ds
                .dates()
                .iter()
                .enumerate()
                .filter(|(_, d)| common.contains(d))
                .map(|(i, _)| i)
                .collect();
            ds.select_rows(&indices)
        })
        .collect())
}

//! Synthetic benchmarks, CSV ingestion, standardization and splits.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::kernel::distinct_classes;
use crate::rng::{self, streams, Gaussian};
use crate::{QgkError, Result, Scalar};

/// Per-feature mean and standard deviation fitted on a training split.
#[derive(Clone, Debug, PartialEq)]
pub struct Scaler<T> {
    pub mean: Vec<T>,
    pub std: Vec<T>,
}

impl<T: Scalar> Scaler<T> {
    /// Population moments; constant features get std 1 so they map to 0.
    pub fn fit(x: &[Vec<T>]) -> Result<Self> {
        let n = x.len();
        if n == 0 {
            return Err(QgkError::precondition("scaler fitted on an empty split"));
        }
        let d = x[0].len();
        let nf = T::of_usize(n);
        let mut mean = vec![T::zero(); d];
        for row in x {
            for (m, &v) in mean.iter_mut().zip(row) {
                *m += v;
            }
        }
        mean.iter_mut().for_each(|m| *m /= nf);
        let mut std = vec![T::zero(); d];
        for row in x {
            for k in 0..d {
                let c = row[k] - mean[k];
                std[k] += c * c;
            }
        }
        for s in std.iter_mut() {
            *s = (*s / nf).sqrt();
            if *s <= T::epsilon() {
                *s = T::one();
            }
        }
        Ok(Self { mean, std })
    }

    pub fn transform(&self, x: &[Vec<T>]) -> Vec<Vec<T>> {
        x.iter()
            .map(|row| {
                row.iter()
                    .zip(self.mean.iter().zip(&self.std))
                    .map(|(&v, (&m, &s))| (v - m) / s)
                    .collect()
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset<T> {
    pub x: Vec<Vec<T>>,
    pub y: Vec<usize>,
    pub name: String,
    pub seed: u64,
    pub scaler: Option<Scaler<T>>,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(name: impl Into<String>, x: Vec<Vec<T>>, y: Vec<usize>, seed: u64) -> Result<Self> {
        let name = name.into();
        if x.len() != y.len() {
            return Err(QgkError::dims("dataset rows vs labels", x.len(), y.len()));
        }
        let d = x.first().map_or(0, Vec::len);
        if let Some(row) = x.iter().find(|r| r.len() != d) {
            return Err(QgkError::dims("dataset feature width", d, row.len()));
        }
        if x.iter().flatten().any(|v| !v.is_finite()) {
            return Err(QgkError::NonFinite(format!("features of dataset {name}")));
        }
        Ok(Self {
            x,
            y,
            name,
            seed,
            scaler: None,
        })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.first().map_or(0, Vec::len)
    }

    pub fn classes(&self) -> Vec<usize> {
        distinct_classes(&self.y)
    }

    pub fn class_counts(&self) -> BTreeMap<usize, usize> {
        let mut counts = BTreeMap::new();
        for &c in &self.y {
            *counts.entry(c).or_insert(0) += 1;
        }
        counts
    }

    /// Fraction of the most common class.
    pub fn majority_rate(&self) -> f64 {
        let max = self.class_counts().values().copied().max().unwrap_or(0);
        max as f64 / self.len().max(1) as f64
    }

    fn subset(&self, idx: &[usize], suffix: &str) -> Self {
        Self {
            x: idx.iter().map(|&i| self.x[i].clone()).collect(),
            y: idx.iter().map(|&i| self.y[i]).collect(),
            name: format!("{}-{suffix}", self.name),
            seed: self.seed,
            scaler: self.scaler.clone(),
        }
    }
}

fn check_size(n: usize) -> Result<()> {
    if n < 4 {
        return Err(QgkError::precondition(format!("synthetic dataset needs n >= 4, got {n}")));
    }
    Ok(())
}

fn linspace(start: f64, stop: f64, n: usize, endpoint: bool) -> Vec<f64> {
    let div = if endpoint { n.saturating_sub(1).max(1) } else { n.max(1) };
    let step = (stop - start) / div as f64;
    (0..n).map(|i| start + step * i as f64).collect()
}

fn finish<T: Scalar>(name: &str, pts: Vec<[f64; 2]>, y: Vec<usize>, noise: f64, seed: u64) -> Result<Dataset<T>> {
    let mut rng = rng::stream(seed, streams::DATASET);
    let mut g = Gaussian::new();
    let x = pts
        .into_iter()
        .map(|p| {
            p.iter()
                .map(|&v| {
                    let v = if noise > 0.0 { v + noise * g.sample(&mut rng) } else { v };
                    T::of(v)
                })
                .collect()
        })
        .collect();
    Dataset::new(name, x, y, seed)
}

/// Two interleaving half circles. Class 0 is the upper arc.
pub fn make_moons<T: Scalar>(n: usize, noise: f64, seed: u64) -> Result<Dataset<T>> {
    check_size(n)?;
    let n_out = n / 2;
    let n_in = n - n_out;
    let mut pts = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for t in linspace(0.0, std::f64::consts::PI, n_out, true) {
        pts.push([t.cos(), t.sin()]);
        y.push(0);
    }
    for t in linspace(0.0, std::f64::consts::PI, n_in, true) {
        pts.push([1.0 - t.cos(), 0.5 - t.sin()]);
        y.push(1);
    }
    finish("moons", pts, y, noise, seed)
}

pub const DEFAULT_CIRCLE_FACTOR: f64 = 0.8;

/// Concentric circles; outer radius 1 is class 0, inner radius `factor` is class 1.
pub fn make_circles<T: Scalar>(n: usize, noise: f64, factor: f64, seed: u64) -> Result<Dataset<T>> {
    check_size(n)?;
    if !(factor > 0.0 && factor < 1.0) {
        return Err(QgkError::Config(format!("circle factor must lie in (0, 1), got {factor}")));
    }
    let n_out = n / 2;
    let n_in = n - n_out;
    let tau = std::f64::consts::TAU;
    let mut pts = Vec::with_capacity(n);
    let mut y = Vec::with_capacity(n);
    for t in linspace(0.0, tau, n_out, false) {
        pts.push([t.cos(), t.sin()]);
        y.push(0);
    }
    for t in linspace(0.0, tau, n_in, false) {
        pts.push([factor * t.cos(), factor * t.sin()]);
        y.push(1);
    }
    finish("circles", pts, y, noise, seed)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum LabelColumn {
    Index(usize),
    Name(String),
}

impl LabelColumn {
    /// Integers select by position, anything else by header name.
    pub fn parse(s: &str) -> Self {
        s.parse().map_or_else(|_| Self::Name(s.to_string()), Self::Index)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CsvOptions {
    pub label: LabelColumn,
    pub has_header: bool,
    /// Encode non-numeric feature cells with per-column first-appearance ids
    /// instead of rejecting them.
    pub categorical_features: bool,
}

impl CsvOptions {
    pub fn new(label: LabelColumn, has_header: bool) -> Self {
        Self {
            label,
            has_header,
            categorical_features: false,
        }
    }
}

fn parse_err(line: usize, column: usize, message: impl Into<String>) -> QgkError {
    QgkError::Parse {
        line,
        column,
        message: message.into(),
    }
}

/// Parses delimited text. Labels are mapped to dense ids in first-appearance order.
pub fn parse_csv<T: Scalar>(text: &str, name: &str, opts: &CsvOptions) -> Result<Dataset<T>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let mut width = None;
    let label_idx = match (&opts.label, opts.has_header) {
        (LabelColumn::Index(i), true) => {
            let (_, header) = lines.next().ok_or_else(|| parse_err(1, 0, "missing header"))?;
            width = Some(header.split(',').count());
            *i
        }
        (LabelColumn::Index(i), false) => *i,
        (LabelColumn::Name(n), true) => {
            let (ln, header) = lines.next().ok_or_else(|| parse_err(1, 0, "missing header"))?;
            let cols: Vec<&str> = header.split(',').map(str::trim).collect();
            width = Some(cols.len());
            cols.iter()
                .position(|c| c == n)
                .ok_or_else(|| parse_err(ln + 1, 0, format!("label column '{n}' not in header")))?
        }
        (LabelColumn::Name(n), false) => {
            return Err(QgkError::Config(format!("label column '{n}' selected by name but file has no header")));
        }
    };

    let mut label_ids: BTreeMap<String, usize> = BTreeMap::new();
    let mut feature_ids: Vec<BTreeMap<String, usize>> = Vec::new();
    let mut x = Vec::new();
    let mut y = Vec::new();
    for (ln, line) in lines {
        let line_no = ln + 1;
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        let w = *width.get_or_insert(cells.len());
        if cells.len() != w {
            return Err(parse_err(line_no, cells.len(), format!("expected {w} cells, found {}", cells.len())));
        }
        if label_idx >= w {
            return Err(parse_err(line_no, label_idx + 1, "missing label column"));
        }
        if feature_ids.is_empty() {
            feature_ids = vec![BTreeMap::new(); w];
        }
        let label = cells[label_idx];
        if label.is_empty() {
            return Err(parse_err(line_no, label_idx + 1, "missing label"));
        }
        let next = label_ids.len();
        y.push(*label_ids.entry(label.to_string()).or_insert(next));
        let mut row = Vec::with_capacity(w - 1);
        for (c, cell) in cells.iter().enumerate() {
            if c == label_idx {
                continue;
            }
            if cell.is_empty() {
                return Err(parse_err(line_no, c + 1, "blank feature cell"));
            }
            let v = match cell.parse::<f64>() {
                Ok(v) if v.is_finite() => v,
                Ok(_) => return Err(parse_err(line_no, c + 1, format!("non-finite feature '{cell}'"))),
                Err(_) if opts.categorical_features => {
                    let ids = &mut feature_ids[c];
                    let next = ids.len();
                    *ids.entry(cell.to_string()).or_insert(next) as f64
                }
                Err(_) => return Err(parse_err(line_no, c + 1, format!("non-numeric feature '{cell}'"))),
            };
            row.push(T::of(v));
        }
        x.push(row);
    }
    Dataset::new(name, x, y, 0)
}

pub fn load_csv<T: Scalar>(path: &Path, label: LabelColumn, has_header: bool) -> Result<Dataset<T>> {
    load_csv_with(path, &CsvOptions::new(label, has_header))
}

pub fn load_csv_with<T: Scalar>(path: &Path, opts: &CsvOptions) -> Result<Dataset<T>> {
    let text = std::fs::read_to_string(path)?;
    let name = path.file_stem().and_then(|s| s.to_str()).unwrap_or("csv");
    parse_csv(&text, name, opts)
}

/// Header `label,f0,...`; values in shortest round-trip form.
pub fn to_csv<T: Scalar>(ds: &Dataset<T>) -> String {
    let mut out = String::from("label");
    for k in 0..ds.dim() {
        let _ = write!(out, ",f{k}");
    }
    out.push('\n');
    for (row, label) in ds.x.iter().zip(&ds.y) {
        let _ = write!(out, "{label}");
        for v in row {
            let _ = write!(out, ",{v}");
        }
        out.push('\n');
    }
    out
}

pub fn write_csv<T: Scalar>(ds: &Dataset<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(ds))?;
    Ok(())
}

pub const DEFAULT_TEST_FRACTION: f64 = 0.1;

/// Shuffle split; the scaler is fitted on train and applied to both parts.
pub fn split<T: Scalar>(
    ds: &Dataset<T>,
    test_fraction: f64,
    seed: u64,
    stratified: bool,
) -> Result<(Dataset<T>, Dataset<T>)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(QgkError::Config(format!("test fraction must lie in (0, 1), got {test_fraction}")));
    }
    let mut rng = rng::stream(seed, streams::SPLIT);
    let mut train = Vec::new();
    let mut test = Vec::new();
    if stratified {
        for (class, count) in ds.class_counts() {
            if count < 2 {
                return Err(QgkError::precondition(format!(
                    "class {class} has {count} sample(s); stratified split needs 2"
                )));
            }
            let mut idx: Vec<usize> = (0..ds.len()).filter(|&i| ds.y[i] == class).collect();
            rng::shuffle(&mut idx, &mut rng);
            let n_test = ((count as f64 * test_fraction).round() as usize).clamp(1, count - 1);
            test.extend_from_slice(&idx[..n_test]);
            train.extend_from_slice(&idx[n_test..]);
        }
        rng::shuffle(&mut train, &mut rng);
        rng::shuffle(&mut test, &mut rng);
    } else {
        let mut idx: Vec<usize> = (0..ds.len()).collect();
        rng::shuffle(&mut idx, &mut rng);
        let n_test = ((ds.len() as f64 * test_fraction).round() as usize).clamp(1, ds.len().saturating_sub(1));
        test = idx[..n_test].to_vec();
        train = idx[n_test..].to_vec();
    }
    let mut tr = ds.subset(&train, "train");
    let mut te = ds.subset(&test, "test");
    let scaler = Scaler::fit(&tr.x)?;
    tr.x = scaler.transform(&tr.x);
    te.x = scaler.transform(&te.x);
    tr.scaler = Some(scaler.clone());
    te.scaler = Some(scaler);
    Ok((tr, te))
}

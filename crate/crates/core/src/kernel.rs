//! Fidelity Gram matrices, kernel-target alignment and classical baselines.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;

use crate::densela::{hermitian_eig, ComplexMatrix, StateVector};
use crate::embedding::EmbeddedState;
use crate::tolerance::{Tolerances, TOL};
use crate::{QgkError, Result, Scalar};

/// Row-major real kernel block. Square for Gram matrices, n_test × n_train
/// for prediction blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct KernelMatrix<T> {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<T>,
    /// Flat key=value description of how the kernel was produced.
    pub provenance: BTreeMap<String, String>,
}

impl<T: Scalar> KernelMatrix<T> {
    pub fn from_values(rows: usize, cols: usize, values: Vec<T>) -> Result<Self> {
        if values.len() != rows * cols {
            return Err(QgkError::dims("KernelMatrix", rows * cols, values.len()));
        }
        Ok(Self {
            rows,
            cols,
            values,
            provenance: BTreeMap::new(),
        })
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> T) -> Self {
        let values = (0..rows).flat_map(|r| (0..cols).map(move |c| (r, c))).map(|(r, c)| f(r, c)).collect();
        Self {
            rows,
            cols,
            values,
            provenance: BTreeMap::new(),
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_fn(n, n, |r, c| if r == c { T::one() } else { T::zero() })
    }

    pub fn with_provenance(mut self, key: &str, value: impl ToString) -> Self {
        self.provenance.insert(key.to_string(), value.to_string());
        self
    }

    pub fn n(&self) -> usize {
        debug_assert_eq!(self.rows, self.cols);
        self.rows
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    #[inline]
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.cols + c]
    }

    pub fn row(&self, r: usize) -> &[T] {
        &self.values[r * self.cols..(r + 1) * self.cols]
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            values: self.values.iter().map(|&v| v * s).collect(),
            ..self.clone()
        }
    }

    pub fn frobenius(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }

    /// Sub-block with the given row and column index sets.
    pub fn select(&self, rows: &[usize], cols: &[usize]) -> Self {
        Self {
            provenance: self.provenance.clone(),
            ..Self::from_fn(rows.len(), cols.len(), |r, c| self.get(rows[r], cols[c]))
        }
    }

    /// Eigenvalues (ascending) of a square symmetric kernel.
    pub fn eigenvalues(&self) -> Result<Vec<T>> {
        if !self.is_square() {
            return Err(QgkError::precondition("eigenvalues of a non-square kernel"));
        }
        let m = ComplexMatrix::from_real(self.rows, self.cols, &self.values)?;
        Ok(hermitian_eig(&m)?.eigenvalues)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StructureReport {
    pub symmetry_deviation: f64,
    pub diagonal_deviation: f64,
    pub min_entry: f64,
    pub max_entry: f64,
    pub min_eigenvalue: f64,
}

impl StructureReport {
    /// The invariants a fidelity kernel must satisfy.
    pub fn is_valid_quantum(&self, n: usize) -> bool {
        let tol = TOL.kernel_structure;
        self.symmetry_deviation < tol
            && self.diagonal_deviation < tol
            && self.min_entry >= -tol
            && self.max_entry <= 1.0 + tol
            && self.min_eigenvalue >= -TOL.psd_per_sample * n as f64
    }
}

pub fn structure_report<T: Scalar>(k: &KernelMatrix<T>) -> Result<StructureReport> {
    let n = k.n();
    let mut sym = 0.0f64;
    let mut diag = 0.0f64;
    for r in 0..n {
        diag = diag.max((k.get(r, r) - T::one()).abs().to_f64_lossy());
        for c in r + 1..n {
            sym = sym.max((k.get(r, c) - k.get(c, r)).abs().to_f64_lossy());
        }
    }
    let min_entry = k.values.iter().fold(f64::INFINITY, |m, v| m.min(v.to_f64_lossy()));
    let max_entry = k.values.iter().fold(f64::NEG_INFINITY, |m, v| m.max(v.to_f64_lossy()));
    let min_eigenvalue = k.eigenvalues()?.first().map_or(0.0, |v| v.to_f64_lossy());
    Ok(StructureReport {
        symmetry_deviation: sym,
        diagonal_deviation: diag,
        min_entry,
        max_entry,
        min_eigenvalue,
    })
}

fn check_dims<T: Scalar>(states: &[&StateVector<T>]) -> Result<usize> {
    let dim = states
        .first()
        .ok_or_else(|| QgkError::precondition("kernel of an empty batch"))?
        .dim();
    if let Some(s) = states.iter().find(|s| s.dim() != dim) {
        return Err(QgkError::dims("kernel state batch", dim, s.dim()));
    }
    Ok(dim)
}

/// |⟨b_j|a_i⟩|² for all pairs, as the product of the a-state matrix with
/// the adjoint of the b-state matrix followed by the elementwise modulus².
pub fn fidelity_block<T: Scalar>(a: &[&StateVector<T>], b: &[&StateVector<T>]) -> Result<KernelMatrix<T>> {
    let da = check_dims(a)?;
    let db = check_dims(b)?;
    if da != db {
        return Err(QgkError::dims("kernel state batch", da, db));
    }
    let sa = ComplexMatrix::from_fn(a.len(), da, |r, c| a[r].amplitudes()[c]);
    let sb_adj = ComplexMatrix::from_fn(db, b.len(), |r, c| b[c].amplitudes()[r].conj());
    let overlaps = sa.matmul(&sb_adj);
    Ok(KernelMatrix::from_fn(a.len(), b.len(), |r, c| overlaps[(r, c)].norm_sqr()))
}

pub fn gram_states<T: Scalar>(states: &[&StateVector<T>]) -> Result<KernelMatrix<T>> {
    let mut k = fidelity_block(states, states)?;
    let n = k.rows;
    // Hermitian symmetry and unit diagonal hold exactly in exact arithmetic;
    // pin them so downstream consumers see the invariant bit-for-bit.
    for r in 0..n {
        k.values[r * n + r] = T::one();
        for c in r + 1..n {
            let v = k.values[r * n + c];
            k.values[c * n + r] = v;
        }
    }
    Ok(k)
}

/// Fidelity Gram matrix K_ij = |⟨ψ_j|ψ_i⟩|².
pub fn gram<T: Scalar>(states: &[EmbeddedState<T>]) -> Result<KernelMatrix<T>> {
    let refs: Vec<_> = states.iter().map(|s| &s.psi).collect();
    let mut k = gram_states(&refs)?.with_provenance("family", "qgk");
    if let Some(s) = states.first() {
        k = k
            .with_provenance("mode", s.config.mode)
            .with_provenance("initial_state", s.config.initial_state)
            .with_provenance("eta", s.psi.dim().trailing_zeros());
    }
    Ok(k)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TargetScheme {
    /// Y_ij = y_i·y_j with y ∈ {−1, +1}; exactly two classes.
    Binary,
    /// Y_ij = 1 for same class, −1/(C−1) otherwise.
    Multiclass,
}

impl TargetScheme {
    /// Binary for two classes, multiclass otherwise.
    pub fn for_labels(labels: &[usize]) -> Self {
        if distinct_classes(labels).len() == 2 {
            Self::Binary
        } else {
            Self::Multiclass
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TargetKernel<T> {
    pub n: usize,
    pub values: Vec<T>,
}

impl<T: Scalar> TargetKernel<T> {
    pub fn get(&self, r: usize, c: usize) -> T {
        self.values[r * self.n + c]
    }

    pub fn frobenius(&self) -> T {
        self.values.iter().map(|&v| v * v).sum::<T>().sqrt()
    }
}

pub(crate) fn distinct_classes(labels: &[usize]) -> Vec<usize> {
    let mut c = labels.to_vec();
    c.sort_unstable();
    c.dedup();
    c
}

pub fn target_kernel<T: Scalar>(labels: &[usize], scheme: TargetScheme) -> Result<TargetKernel<T>> {
    let n = labels.len();
    if n < 2 {
        return Err(QgkError::precondition("target kernel needs at least two samples"));
    }
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(QgkError::SingleClass);
    }
    let values = match scheme {
        TargetScheme::Binary => {
            if classes.len() != 2 {
                return Err(QgkError::precondition(format!(
                    "binary target kernel with {} classes",
                    classes.len()
                )));
            }
            let y: Vec<T> = labels
                .iter()
                .map(|&l| if l == classes[0] { T::one() } else { -T::one() })
                .collect();
            (0..n * n).map(|i| y[i / n] * y[i % n]).collect()
        }
        TargetScheme::Multiclass => {
            let off = -T::one() / T::of_usize(classes.len() - 1);
            (0..n * n)
                .map(|i| if labels[i / n] == labels[i % n] { T::one() } else { off })
                .collect()
        }
    };
    Ok(TargetKernel { n, values })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Alignment<T> {
    pub alignment: T,
    /// 1 − alignment
    pub loss: T,
}

/// Tr(KY) / (‖K‖_F·‖Y‖_F).
pub fn kta<T: Scalar>(k: &KernelMatrix<T>, y: &TargetKernel<T>) -> Result<Alignment<T>> {
    if !k.is_square() || k.rows != y.n {
        return Err(QgkError::dims("kta", y.n, k.rows));
    }
    let kn = k.frobenius();
    let yn = y.frobenius();
    if kn == T::zero() || yn == T::zero() {
        return Err(QgkError::Degenerate("kernel or target has zero Frobenius norm".into()));
    }
    // Tr(KY) = Σ K_ij Y_ji; both symmetric
    let inner: T = k.values.iter().zip(&y.values).map(|(&a, &b)| a * b).sum();
    let alignment = inner / (kn * yn);
    Ok(Alignment {
        alignment,
        loss: T::one() - alignment,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ClassicalKernel {
    Rbf { gamma: f64 },
    Linear,
}

/// 1 / (d·Var(X)) over all entries; 1 when the data has no spread.
pub fn rbf_default_gamma<T: Scalar>(x: &[Vec<T>]) -> f64 {
    let d = x.first().map_or(1, Vec::len).max(1);
    let all: Vec<f64> = x.iter().flatten().map(|v| v.to_f64_lossy()).collect();
    if all.is_empty() {
        return 1.0;
    }
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let var = all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / all.len() as f64;
    if var > 0.0 {
        1.0 / (d as f64 * var)
    } else {
        1.0
    }
}

pub fn classical_block<T: Scalar>(a: &[Vec<T>], b: &[Vec<T>], family: ClassicalKernel) -> Result<KernelMatrix<T>> {
    if let Some(v) = a.iter().chain(b).flatten().find(|v| !v.is_finite()) {
        return Err(QgkError::NonFinite(format!("feature value {v}")));
    }
    let f = |x: &[T], y: &[T]| -> T {
        match family {
            ClassicalKernel::Linear => x.iter().zip(y).map(|(&p, &q)| p * q).sum(),
            ClassicalKernel::Rbf { gamma } => {
                let d2: T = x.iter().zip(y).map(|(&p, &q)| (p - q) * (p - q)).sum();
                (-T::of(gamma) * d2).exp()
            }
        }
    };
    let label = match family {
        ClassicalKernel::Linear => "linear".to_string(),
        ClassicalKernel::Rbf { gamma } => format!("rbf:{gamma}"),
    };
    Ok(KernelMatrix::from_fn(a.len(), b.len(), |r, c| f(&a[r], &b[c])).with_provenance("family", label))
}

pub fn classical_kernel<T: Scalar>(x: &[Vec<T>], family: ClassicalKernel) -> Result<KernelMatrix<T>> {
    classical_block(x, x, family)
}

/// KL divergence of the normalized kernel spectrum from uniform:
/// Σ λ_i log(n·λ_i), with eigenvalues clipped at zero.
pub fn spectral_concentration<T: Scalar>(k: &KernelMatrix<T>) -> Result<T> {
    let eig = k.eigenvalues()?;
    let n = T::of_usize(eig.len());
    let clipped: Vec<T> = eig.into_iter().map(|l| l.max(T::zero())).collect();
    let total: T = clipped.iter().copied().sum();
    if total <= T::zero() {
        return Err(QgkError::Degenerate("kernel spectrum is identically zero".into()));
    }
    let e: T = clipped
        .iter()
        .map(|&l| l / total)
        .filter(|&p| p > T::zero())
        .map(|p| p * (n * p).ln())
        .sum();
    // rounding can push a uniform spectrum a hair below zero
    Ok(e.max(T::zero()))
}

/// Headerless CSV of 17-significant-digit values, one kernel row per line.
pub fn to_csv<T: Scalar>(k: &KernelMatrix<T>) -> String {
    let mut out = String::with_capacity(k.values.len() * 24);
    for r in 0..k.rows {
        let line: Vec<String> = k.row(r).iter().map(|v| format!("{:.16e}", v.to_f64_lossy())).collect();
        out.push_str(&line.join(","));
        out.push('\n');
    }
    out
}

pub fn from_csv<T: Scalar>(text: &str) -> Result<KernelMatrix<T>> {
    let mut values = Vec::new();
    let mut cols = None;
    let mut rows = 0;
    for (ln, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        match cols {
            None => cols = Some(cells.len()),
            Some(c) if c != cells.len() => {
                return Err(QgkError::Parse {
                    line: ln + 1,
                    column: cells.len().min(c) + 1,
                    message: format!("expected {c} columns, found {}", cells.len()),
                })
            }
            _ => {}
        }
        for (ci, cell) in cells.iter().enumerate() {
            let v: f64 = cell.trim().parse().map_err(|_| QgkError::Parse {
                line: ln + 1,
                column: ci + 1,
                message: format!("not a number: {cell:?}"),
            })?;
            values.push(T::of(v));
        }
        rows += 1;
    }
    KernelMatrix::from_values(rows, cols.unwrap_or(0), values)
}

/// Flat `key=value` lines, sorted by key.
pub fn provenance_text<T: Scalar>(k: &KernelMatrix<T>) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "rows={}", k.rows);
    let _ = writeln!(out, "cols={}", k.cols);
    for (key, v) in &k.provenance {
        let _ = writeln!(out, "{key}={v}");
    }
    out
}

pub fn parse_key_values(text: &str) -> BTreeMap<String, String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Writes `<path>` (CSV) and `<path>.meta` (provenance).
pub fn save<T: Scalar>(k: &KernelMatrix<T>, path: &Path) -> Result<()> {
    std::fs::write(path, to_csv(k))?;
    std::fs::write(meta_path(path), provenance_text(k))?;
    Ok(())
}

pub fn load<T: Scalar>(path: &Path) -> Result<KernelMatrix<T>> {
    let mut k = from_csv(&std::fs::read_to_string(path)?)?;
    let meta = meta_path(path);
    if meta.exists() {
        let mut kv = parse_key_values(&std::fs::read_to_string(meta)?);
        kv.remove("rows");
        kv.remove("cols");
        k.provenance = kv;
    }
    Ok(k)
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".meta");
    s.into()
}

/// Tolerance-checked structural validity for generic scalars.
pub fn is_valid_fidelity_kernel<T: Scalar>(k: &KernelMatrix<T>) -> Result<bool> {
    let r = structure_report(k)?;
    let tol = Tolerances::scaled_for::<T>(TOL.kernel_structure).to_f64_lossy();
    Ok(r.symmetry_deviation < tol
        && r.diagonal_deviation < tol
        && r.min_entry >= -tol
        && r.max_entry <= 1.0 + tol
        && r.min_eigenvalue >= -Tolerances::scaled_for::<T>(TOL.psd_per_sample).to_f64_lossy() * k.rows as f64)
}

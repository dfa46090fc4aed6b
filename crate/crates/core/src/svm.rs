//! Dual soft-margin SVM on precomputed kernels.
//!
//! Binary problems use SMO with maximal-violating-pair selection; more than
//! two classes train one-vs-rest machines on the same Gram matrix.

use std::fmt::Write as _;

use crate::kernel::{distinct_classes, KernelMatrix};
use crate::{QgkError, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SvmConfig {
    pub c: f64,
    pub tol: f64,
    /// Iteration budget is `max_passes · n`; `None` means 10·n passes.
    pub max_passes: Option<usize>,
    /// Keep the dual objective after every accepted update.
    pub record_objective: bool,
}

impl Default for SvmConfig {
    fn default() -> Self {
        Self {
            c: 1.0,
            tol: 1e-3,
            max_passes: None,
            record_objective: false,
        }
    }
}

impl SvmConfig {
    fn validate(&self) -> Result<()> {
        if !(self.c > 0.0 && self.c.is_finite()) {
            return Err(QgkError::Config(format!("SVM C must be positive, got {}", self.c)));
        }
        if !(self.tol > 0.0) {
            return Err(QgkError::Config(format!("SVM tol must be positive, got {}", self.tol)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BinaryMachine<T> {
    /// Training indices with α > 0.
    pub support: Vec<usize>,
    /// α_i·y_i for each support index.
    pub coef: Vec<T>,
    pub bias: T,
    pub converged: bool,
    pub iterations: usize,
    /// Dual objective Σα − ½αᵀQα after each update, when recorded.
    pub objective: Vec<f64>,
}

impl<T: Scalar> BinaryMachine<T> {
    fn decision(&self, row: &[T]) -> T {
        self.support.iter().zip(&self.coef).map(|(&i, &c)| c * row[i]).sum::<T>() + self.bias
    }

    /// Full α vector of length n, recovered from the signed coefficients.
    pub fn alphas(&self, n: usize) -> Vec<T> {
        let mut a = vec![T::zero(); n];
        for (&i, &c) in self.support.iter().zip(&self.coef) {
            a[i] = c.abs();
        }
        a
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SvmModel<T> {
    pub c: f64,
    pub tol: f64,
    pub n_train: usize,
    pub classes: Vec<usize>,
    /// One machine for two classes (+1 = classes[0]); otherwise one per class.
    pub machines: Vec<BinaryMachine<T>>,
}

impl<T: Scalar> SvmModel<T> {
    pub fn converged(&self) -> bool {
        self.machines.iter().all(|m| m.converged)
    }

    pub fn support_count(&self) -> usize {
        self.machines.iter().map(|m| m.support.len()).sum()
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "c {}", self.c);
        let _ = writeln!(out, "tol {}", self.tol);
        let _ = writeln!(out, "n_train {}", self.n_train);
        let _ = writeln!(out, "classes {}", join(&self.classes));
        for (k, m) in self.machines.iter().enumerate() {
            let _ = writeln!(
                out,
                "machine {k} bias {} converged {} iterations {}",
                m.bias, m.converged, m.iterations
            );
            let _ = writeln!(out, "support {}", join(&m.support));
            let _ = writeln!(out, "coef {}", join(&m.coef));
        }
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let lines: Vec<(usize, &str)> = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .collect();
        let mut it = lines.into_iter();
        let mut field = |key: &str| -> Result<(usize, Vec<String>)> {
            let (ln, line) = it.next().ok_or_else(|| perr(0, format!("missing '{key}' line")))?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some(key) {
                return Err(perr(ln, format!("expected '{key}'")));
            }
            Ok((ln, parts.map(str::to_string).collect()))
        };
        let num = |ln: usize, s: &str| s.parse::<f64>().map_err(|e| perr(ln, e.to_string()));
        let idx = |ln: usize, s: &str| s.parse::<usize>().map_err(|e| perr(ln, e.to_string()));

        let (ln, v) = field("c")?;
        let c = num(ln, v.first().map_or("", String::as_str))?;
        let (ln, v) = field("tol")?;
        let tol = num(ln, v.first().map_or("", String::as_str))?;
        let (ln, v) = field("n_train")?;
        let n_train = idx(ln, v.first().map_or("", String::as_str))?;
        let (ln, v) = field("classes")?;
        let classes = v.iter().map(|s| idx(ln, s)).collect::<Result<Vec<_>>>()?;
        let count = if classes.len() == 2 { 1 } else { classes.len() };
        let mut machines = Vec::with_capacity(count);
        for _ in 0..count {
            let (ln, v) = field("machine")?;
            if v.len() != 7 {
                return Err(perr(ln, "malformed machine line"));
            }
            let bias = T::of(num(ln, &v[2])?);
            let converged = v[4] == "true";
            let iterations = idx(ln, &v[6])?;
            let (ln, v) = field("support")?;
            let support = v.iter().map(|s| idx(ln, s)).collect::<Result<Vec<_>>>()?;
            let (ln, v) = field("coef")?;
            let coef = v.iter().map(|s| num(ln, s).map(T::of)).collect::<Result<Vec<_>>>()?;
            if coef.len() != support.len() || support.iter().any(|&i| i >= n_train) {
                return Err(perr(ln, "support and coefficient lists disagree"));
            }
            machines.push(BinaryMachine {
                support,
                coef,
                bias,
                converged,
                iterations,
                objective: Vec::new(),
            });
        }
        Ok(Self {
            c,
            tol,
            n_train,
            classes,
            machines,
        })
    }
}

fn join<D: std::fmt::Display>(vals: &[D]) -> String {
    vals.iter().map(ToString::to_string).collect::<Vec<_>>().join(" ")
}

fn perr(line: usize, message: impl Into<String>) -> QgkError {
    QgkError::Parse {
        line,
        column: 0,
        message: message.into(),
    }
}

const TAU: f64 = 1e-12;

/// SMO on min ½αᵀQα − eᵀα, 0 ≤ α ≤ C, yᵀα = 0 with Q_ij = y_i·y_j·K_ij.
fn smo<T: Scalar>(k: &KernelMatrix<T>, y: &[f64], cfg: &SvmConfig) -> BinaryMachine<T> {
    let n = y.len();
    let c = cfg.c;
    let kf = |i: usize, j: usize| k.get(i, j).to_f64_lossy();
    let mut alpha = vec![0.0f64; n];
    let mut grad = vec![-1.0f64; n];
    let budget = cfg.max_passes.unwrap_or(10 * n).saturating_mul(n).max(1);
    let mut objective = Vec::new();
    let mut converged = false;
    let mut iterations = 0;

    let up = |a: f64, yi: f64| (yi > 0.0 && a < c) || (yi < 0.0 && a > 0.0);
    let low = |a: f64, yi: f64| (yi > 0.0 && a > 0.0) || (yi < 0.0 && a < c);

    while iterations < budget {
        let mut gmax = f64::NEG_INFINITY;
        let mut gmin = f64::INFINITY;
        let mut i_sel = usize::MAX;
        let mut j_sel = usize::MAX;
        for t in 0..n {
            let v = -y[t] * grad[t];
            if up(alpha[t], y[t]) && v > gmax {
                gmax = v;
                i_sel = t;
            }
            if low(alpha[t], y[t]) && v < gmin {
                gmin = v;
                j_sel = t;
            }
        }
        if i_sel == usize::MAX || j_sel == usize::MAX || gmax - gmin < cfg.tol {
            converged = true;
            break;
        }
        let (i, j) = (i_sel, j_sel);
        iterations += 1;
        let (old_ai, old_aj) = (alpha[i], alpha[j]);
        let quad = kf(i, i) + kf(j, j) - 2.0 * kf(i, j);
        let quad = if quad > 0.0 { quad } else { TAU };
        if y[i] != y[j] {
            let delta = (-grad[i] - grad[j]) / quad;
            let diff = alpha[i] - alpha[j];
            alpha[i] += delta;
            alpha[j] += delta;
            if diff > 0.0 {
                if alpha[j] < 0.0 {
                    alpha[j] = 0.0;
                    alpha[i] = diff;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = -diff;
            }
            if diff > 0.0 {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = c - diff;
                }
            } else if alpha[j] > c {
                alpha[j] = c;
                alpha[i] = c + diff;
            }
        } else {
            let delta = (grad[i] - grad[j]) / quad;
            let sum = alpha[i] + alpha[j];
            alpha[i] -= delta;
            alpha[j] += delta;
            if sum > c {
                if alpha[i] > c {
                    alpha[i] = c;
                    alpha[j] = sum - c;
                }
            } else if alpha[j] < 0.0 {
                alpha[j] = 0.0;
                alpha[i] = sum;
            }
            if sum > c {
                if alpha[j] > c {
                    alpha[j] = c;
                    alpha[i] = sum - c;
                }
            } else if alpha[i] < 0.0 {
                alpha[i] = 0.0;
                alpha[j] = sum;
            }
        }
        let (di, dj) = (alpha[i] - old_ai, alpha[j] - old_aj);
        for t in 0..n {
            grad[t] += y[t] * (y[i] * kf(t, i) * di + y[j] * kf(t, j) * dj);
        }
        if cfg.record_objective {
            // f = ½αᵀ(G − e), dual objective is −f
            let f: f64 = alpha.iter().zip(&grad).map(|(a, g)| 0.5 * a * (g - 1.0)).sum();
            objective.push(-f);
        }
    }

    // ρ from free vectors, else the midpoint of the feasible interval
    let (mut ub, mut lb) = (f64::INFINITY, f64::NEG_INFINITY);
    let (mut sum_free, mut n_free) = (0.0, 0usize);
    for t in 0..n {
        let yg = y[t] * grad[t];
        if alpha[t] >= c {
            if y[t] < 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else if alpha[t] <= 0.0 {
            if y[t] > 0.0 {
                ub = ub.min(yg);
            } else {
                lb = lb.max(yg);
            }
        } else {
            n_free += 1;
            sum_free += yg;
        }
    }
    let rho = if n_free > 0 {
        sum_free / n_free as f64
    } else if ub.is_finite() && lb.is_finite() {
        0.5 * (ub + lb)
    } else if ub.is_finite() {
        ub
    } else if lb.is_finite() {
        lb
    } else {
        0.0
    };

    let support: Vec<usize> = (0..n).filter(|&t| alpha[t] > 0.0).collect();
    BinaryMachine {
        coef: support.iter().map(|&t| T::of(alpha[t] * y[t])).collect(),
        support,
        bias: T::of(-rho),
        converged,
        iterations,
        objective,
    }
}

pub fn fit<T: Scalar>(k: &KernelMatrix<T>, labels: &[usize], cfg: &SvmConfig) -> Result<SvmModel<T>> {
    cfg.validate()?;
    if !k.is_square() {
        return Err(QgkError::precondition(format!(
            "training kernel must be square, got {}x{}",
            k.rows, k.cols
        )));
    }
    if k.rows != labels.len() {
        return Err(QgkError::dims("svm labels vs kernel", k.rows, labels.len()));
    }
    if labels.len() < 2 {
        return Err(QgkError::precondition("SVM needs at least two samples"));
    }
    let classes = distinct_classes(labels);
    if classes.len() < 2 {
        return Err(QgkError::SingleClass);
    }
    let positives: Vec<usize> = if classes.len() == 2 { vec![classes[0]] } else { classes.clone() };
    let machines = positives
        .iter()
        .map(|&p| {
            let y: Vec<f64> = labels.iter().map(|&l| if l == p { 1.0 } else { -1.0 }).collect();
            smo(k, &y, cfg)
        })
        .collect();
    Ok(SvmModel {
        c: cfg.c,
        tol: cfg.tol,
        n_train: labels.len(),
        classes,
        machines,
    })
}

/// Decision values, one row per test sample and one column per machine.
pub fn decision_values<T: Scalar>(model: &SvmModel<T>, k_test: &KernelMatrix<T>) -> Result<Vec<Vec<T>>> {
    if k_test.cols != model.n_train {
        return Err(QgkError::dims("test kernel columns vs training size", model.n_train, k_test.cols));
    }
    Ok((0..k_test.rows)
        .map(|r| model.machines.iter().map(|m| m.decision(k_test.row(r))).collect())
        .collect())
}

pub fn predict<T: Scalar>(model: &SvmModel<T>, k_test: &KernelMatrix<T>) -> Result<Vec<usize>> {
    let dv = decision_values(model, k_test)?;
    Ok(dv
        .into_iter()
        .map(|row| {
            if model.classes.len() == 2 {
                if row[0] >= T::zero() {
                    model.classes[0]
                } else {
                    model.classes[1]
                }
            } else {
                // strict comparison keeps the lowest index on ties
                let mut best = 0;
                for (c, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = c;
                    }
                }
                model.classes[best]
            }
        })
        .collect())
}

pub fn accuracy(predicted: &[usize], truth: &[usize]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    let hits = predicted.iter().zip(truth).filter(|(p, t)| p == t).count();
    hits as f64 / truth.len() as f64
}

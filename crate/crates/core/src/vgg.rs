//! Variational generator groups: partition the generator basis into `g`
//! groups, sum each group into one Hermitian operator Ĥ_i, and
//! eigendecompose every Ĥ_i once so that exp(−iφĤ_i) is cheap to apply.

use std::fmt::{self, Write as _};

use crate::densela::{hermitian_eig, ComplexMatrix, EigenDecomposition};
use crate::generators::{Family, GeneratorSet};
use crate::tolerance::TOL;
use crate::{QgkError, Result, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Scaling {
    /// g = η
    Linear,
    /// g = η²
    Quadratic,
    /// g = 3·2^η − 6·(η mod 2) + 3, i.e. (4^η − 1)/Γ_η
    Exponential,
    /// one generator per group, g = 4^η − 1
    All,
    Explicit(usize),
}

impl Scaling {
    /// Whether a group count that does not divide the generator count is
    /// resolved by spreading the remainder instead of rejected.
    fn allows_uneven(self) -> bool {
        matches!(self, Scaling::Linear | Scaling::Quadratic)
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "linear" => Ok(Scaling::Linear),
            "quadratic" => Ok(Scaling::Quadratic),
            "exponential" => Ok(Scaling::Exponential),
            "all" => Ok(Scaling::All),
            other => other
                .strip_prefix("explicit:")
                .and_then(|n| n.parse().ok())
                .map(Scaling::Explicit)
                .ok_or_else(|| QgkError::Config(format!("unknown grouping scaling {s:?}"))),
        }
    }
}

impl fmt::Display for Scaling {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Scaling::Linear => f.write_str("linear"),
            Scaling::Quadratic => f.write_str("quadratic"),
            Scaling::Exponential => f.write_str("exponential"),
            Scaling::All => f.write_str("all"),
            Scaling::Explicit(g) => write!(f, "explicit:{g}"),
        }
    }
}

/// Generators per group for the exponential scaling.
pub fn gamma_eta(eta: usize) -> usize {
    if eta <= 2 {
        1
    } else if eta % 2 == 1 {
        2 * gamma_eta(eta - 1) + 1
    } else {
        2 * gamma_eta(eta - 1) - 1
    }
}

pub fn group_count(eta: usize, scaling: Scaling) -> usize {
    match scaling {
        Scaling::Linear => eta,
        Scaling::Quadratic => eta * eta,
        Scaling::Exponential => 3 * (1 << eta) - 6 * (eta % 2) + 3,
        Scaling::All => (1 << (2 * eta)) - 1,
        Scaling::Explicit(g) => g,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GroupingConfig {
    pub eta: usize,
    pub scaling: Scaling,
    /// Projection width in [0, η].
    pub width: f64,
}

impl GroupingConfig {
    pub fn new(eta: usize, scaling: Scaling, width: f64) -> Self {
        Self { eta, scaling, width }
    }

    /// Exponential scaling at the default wide stride w = η.
    pub fn exponential(eta: usize) -> Self {
        Self::new(eta, Scaling::Exponential, eta as f64)
    }

    pub fn group_count(&self) -> usize {
        group_count(self.eta, self.scaling)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StrideKind {
    /// w = 0: identity, neighbouring generators share a group.
    Narrow,
    /// ⌊k·(w/η)·g⌋ happened to be a bijection.
    Direct,
    /// (k·2^⌊log₂((w/η)·g)⌋) mod |𝔥|
    PowerOfTwo(usize),
}

#[derive(Clone, Debug)]
pub struct VggSet<T> {
    pub config: GroupingConfig,
    /// Generator indices merged into each group.
    pub assignment: Vec<Vec<usize>>,
    pub operators: Vec<ComplexMatrix<T>>,
    pub eigs: Vec<EigenDecomposition<T>>,
    /// Family-interleaved base ordering of generator indices.
    pub base_order: Vec<usize>,
    pub permutation: Vec<usize>,
    pub stride: StrideKind,
    pub generator_count: usize,
}

impl<T: Scalar> VggSet<T> {
    pub fn group_count(&self) -> usize {
        self.operators.len()
    }

    pub fn dim(&self) -> usize {
        1 << self.config.eta
    }

    pub fn eta(&self) -> usize {
        self.config.eta
    }

    pub fn group_sizes(&self) -> Vec<usize> {
        self.assignment.iter().map(Vec::len).collect()
    }

    /// Whether every generator index appears in exactly one group.
    pub fn is_partition(&self) -> bool {
        let mut seen = vec![0u32; self.generator_count];
        for &i in self.assignment.iter().flatten() {
            if i >= seen.len() {
                return false;
            }
            seen[i] += 1;
        }
        seen.iter().all(|&c| c == 1)
    }
}

/// Round-robin over the symmetric, antisymmetric and diagonal families,
/// skipping a family once it is exhausted.
pub fn interleaved_order<T: Scalar>(gs: &GeneratorSet<T>) -> Vec<usize> {
    let families: Vec<Vec<usize>> = Family::ALL.iter().map(|&f| gs.family_indices(f)).collect();
    let longest = families.iter().map(Vec::len).max().unwrap_or(0);
    let mut out = Vec::with_capacity(gs.len());
    for k in 0..longest {
        for fam in &families {
            if let Some(&i) = fam.get(k) {
                out.push(i);
            }
        }
    }
    out
}

fn is_bijection(perm: &[usize]) -> bool {
    let mut seen = vec![false; perm.len()];
    for &p in perm {
        if p >= perm.len() || seen[p] {
            return false;
        }
        seen[p] = true;
    }
    true
}

/// Width-controlled stride permutation over `len` positions.
pub fn stride_permutation(len: usize, groups: usize, width: f64, eta: usize) -> Result<(Vec<usize>, StrideKind)> {
    if !(0.0..=eta as f64).contains(&width) {
        return Err(QgkError::Config(format!("projection width {width} outside [0, {eta}]")));
    }
    if width == 0.0 {
        return Ok(((0..len).collect(), StrideKind::Narrow));
    }
    let step = width / eta as f64 * groups as f64;
    let direct: Vec<usize> = (0..len).map(|k| (k as f64 * step).floor() as usize).collect();
    if is_bijection(&direct) {
        return Ok((direct, StrideKind::Direct));
    }

    // largest power of two not above the step, never below 1
    let mut stride = 1usize;
    while ((stride * 2) as f64) <= step {
        stride *= 2;
    }
    let perm: Vec<usize> = (0..len).map(|k| ((k as u64 * stride as u64) % len as u64) as usize).collect();
    if !is_bijection(&perm) {
        return Err(QgkError::Config(format!(
            "stride {stride} is not coprime with {len} generators"
        )));
    }
    Ok((perm, StrideKind::PowerOfTwo(stride)))
}

/// Group sizes: ⌊N/g⌋ each, the first N mod g groups take one extra.
fn group_sizes(total: usize, groups: usize) -> Vec<usize> {
    let base = total / groups;
    let rem = total % groups;
    (0..groups).map(|i| base + usize::from(i < rem)).collect()
}

pub fn build_vgg_set<T: Scalar>(gs: &GeneratorSet<T>, config: GroupingConfig) -> Result<VggSet<T>> {
    if gs.eta != config.eta {
        return Err(QgkError::Config(format!(
            "generator set has η = {} but grouping asks for η = {}",
            gs.eta, config.eta
        )));
    }
    let total = gs.len();
    let g = config.group_count();
    if g == 0 || g > total {
        return Err(QgkError::Config(format!("group count {g} outside 1..={total}")));
    }
    if total % g != 0 && !config.scaling.allows_uneven() {
        return Err(QgkError::Config(format!(
            "{g} groups do not divide {total} generators under {} scaling",
            config.scaling
        )));
    }

    let base_order = interleaved_order(gs);
    let (permutation, stride) = stride_permutation(total, g, config.width, config.eta)?;

    let mut assignment = Vec::with_capacity(g);
    let mut start = 0;
    for size in group_sizes(total, g) {
        assignment.push(
            (start..start + size)
                .map(|pos| base_order[permutation[pos]])
                .collect::<Vec<_>>(),
        );
        start += size;
    }

    let dim = gs.dim();
    let operators: Vec<ComplexMatrix<T>> = assignment
        .iter()
        .map(|members| {
            let mut h = ComplexMatrix::zeros(dim, dim);
            for &j in members {
                gs.items[j].add_into(&mut h, T::one());
            }
            h
        })
        .collect();
    let eigs = operators.iter().map(hermitian_eig).collect::<Result<Vec<_>>>()?;

    Ok(VggSet {
        config,
        assignment,
        operators,
        eigs,
        base_order,
        permutation,
        stride,
        generator_count: total,
    })
}

/// |𝔥| × g 0/1 matrix with M[j][i] = 1 iff generator j is in group i.
pub fn assignment_matrix<T: Scalar>(vgg: &VggSet<T>) -> Vec<Vec<f64>> {
    let mut m = vec![vec![0.0; vgg.group_count()]; vgg.generator_count];
    for (i, members) in vgg.assignment.iter().enumerate() {
        for &j in members {
            m[j][i] = 1.0;
        }
    }
    m
}

/// Column rank by Gaussian elimination with partial pivoting.
pub fn column_rank(matrix: &[Vec<f64>]) -> usize {
    let rows = matrix.len();
    let cols = matrix.first().map_or(0, Vec::len);
    let mut a: Vec<Vec<f64>> = matrix.to_vec();
    let mut rank = 0;
    for c in 0..cols {
        if rank == rows {
            break;
        }
        let (pivot, best) = (rank..rows)
            .map(|r| (r, a[r][c].abs()))
            .fold((rank, 0.0), |acc, x| if x.1 > acc.1 { x } else { acc });
        if best <= TOL.rank_pivot {
            continue;
        }
        a.swap(rank, pivot);
        let prow = a[rank].clone();
        for row in a.iter_mut().skip(rank + 1) {
            let f = row[c] / prow[c];
            if f != 0.0 {
                for (x, &p) in row.iter_mut().zip(&prow).skip(c) {
                    *x -= f * p;
                }
            }
        }
        rank += 1;
    }
    rank
}

pub fn grouping_rank<T: Scalar>(vgg: &VggSet<T>) -> usize {
    column_rank(&assignment_matrix(vgg))
}

#[derive(Clone, Debug, PartialEq)]
pub struct FrobeniusWeights {
    /// ‖Ĥ_i‖_F² per group.
    pub per_group: Vec<f64>,
    pub sizes: Vec<usize>,
    /// Σ|G_i|
    pub total_mass: usize,
    /// (Σ√|G_i|)²
    pub balance: f64,
    /// Σ|G_i|²
    pub anisotropy: usize,
}

pub fn frobenius_weights<T: Scalar>(vgg: &VggSet<T>) -> FrobeniusWeights {
    let sizes = vgg.group_sizes();
    FrobeniusWeights {
        per_group: vgg.operators.iter().map(|h| h.frobenius_sq().to_f64_lossy()).collect(),
        total_mass: sizes.iter().sum(),
        balance: sizes.iter().map(|&s| (s as f64).sqrt()).sum::<f64>().powi(2),
        anisotropy: sizes.iter().map(|&s| s * s).sum(),
        sizes,
    }
}

/// Per-group summary, CSV with header `group,size,members,frobenius_sq`;
/// members are space separated.
pub fn export_summary<T: Scalar>(vgg: &VggSet<T>) -> String {
    let w = frobenius_weights(vgg);
    let mut out = String::from("group,size,members,frobenius_sq\n");
    for (i, members) in vgg.assignment.iter().enumerate() {
        let m: Vec<String> = members.iter().map(usize::to_string).collect();
        let _ = writeln!(out, "{i},{},{},{:.16e}", members.len(), m.join(" "), w.per_group[i]);
    }
    out
}

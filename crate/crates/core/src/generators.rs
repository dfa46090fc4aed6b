//! The ordered Hermitian generator basis of su(2^η): the generalized
//! Gell-Mann matrices, normalized so that Tr(h_i h_j) = 2δ_ij.
//!
//! Generators are stored as sparse triplets. A symmetric or antisymmetric
//! generator has two nonzero entries and a diagonal one at most 2^η, so the
//! full set stays small even at η = 8 where the dense form would not fit in
//! memory. [`Generator::to_dense`] materializes one on demand.

use std::fmt::{self, Write as _};

use num_complex::Complex;
use num_traits::Zero;

use crate::densela::ComplexMatrix;
use crate::tolerance::TOL;
use crate::{QgkError, Result, Scalar};

pub const MAX_QUBITS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Family {
    Symmetric,
    Antisymmetric,
    Diagonal,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::Symmetric, Family::Antisymmetric, Family::Diagonal];

    pub fn name(self) -> &'static str {
        match self {
            Family::Symmetric => "symmetric",
            Family::Antisymmetric => "antisymmetric",
            Family::Diagonal => "diagonal",
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Generator<T> {
    pub dim: usize,
    /// (row, col, value), sorted by (row, col), no explicit zeros.
    pub entries: Vec<(usize, usize, Complex<T>)>,
    pub family: Family,
    /// Ordinal within the family.
    pub family_index: usize,
}

impl<T: Scalar> Generator<T> {
    fn new(dim: usize, mut entries: Vec<(usize, usize, Complex<T>)>, family: Family, family_index: usize) -> Self {
        entries.retain(|e| !e.2.is_zero());
        entries.sort_by_key(|e| (e.0, e.1));
        Self {
            dim,
            entries,
            family,
            family_index,
        }
    }

    pub fn to_dense(&self) -> ComplexMatrix<T> {
        let mut m = ComplexMatrix::zeros(self.dim, self.dim);
        self.add_into(&mut m, T::one());
        m
    }

    /// m += s·h
    pub fn add_into(&self, m: &mut ComplexMatrix<T>, s: T) {
        for &(r, c, v) in &self.entries {
            m[(r, c)] += v * s;
        }
    }

    pub fn scaled(&self, s: T) -> Self {
        Self {
            entries: self.entries.iter().map(|&(r, c, v)| (r, c, v * s)).collect(),
            ..self.clone()
        }
    }

    pub fn entry(&self, r: usize, c: usize) -> Complex<T> {
        self.entries
            .binary_search_by_key(&(r, c), |e| (e.0, e.1))
            .map(|i| self.entries[i].2)
            .unwrap_or_else(|_| Complex::zero())
    }

    pub fn hermiticity_deviation(&self) -> T {
        self.entries
            .iter()
            .fold(T::zero(), |m, &(r, c, v)| m.max((v - self.entry(c, r).conj()).norm()))
    }

    pub fn trace(&self) -> Complex<T> {
        self.entries.iter().filter(|e| e.0 == e.1).map(|e| e.2).sum()
    }

    /// Tr(self · other).
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        self.entries.iter().map(|&(r, c, v)| v * other.entry(c, r)).sum()
    }

    /// Dense matrix-vector product.
    pub fn apply(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        let mut out = vec![Complex::zero(); self.dim];
        for &(r, c, x) in &self.entries {
            out[r] += x * v[c];
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GeneratorSet<T> {
    pub eta: usize,
    pub items: Vec<Generator<T>>,
}

impl<T: Scalar> GeneratorSet<T> {
    pub fn dim(&self) -> usize {
        1 << self.eta
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    /// Generator indices of one family, in family order.
    pub fn family_indices(&self, family: Family) -> Vec<usize> {
        self.items
            .iter()
            .enumerate()
            .filter(|(_, g)| g.family == family)
            .map(|(i, _)| i)
            .collect()
    }
}

pub fn expected_count(eta: usize) -> usize {
    (1usize << (2 * eta)) - 1
}

/// Builds the basis in the fixed order: for each (r, c) with r < c the
/// symmetric generator E_rc + E_cr then the antisymmetric −i(E_rc − E_cr),
/// followed by the diagonal generators for k = 1..2^η−1.
pub fn build_generator_set<T: Scalar>(eta: usize) -> Result<GeneratorSet<T>> {
    if !(1..=MAX_QUBITS).contains(&eta) {
        return Err(QgkError::precondition(format!("qubit count {eta} outside 1..={MAX_QUBITS}")));
    }
    let n = 1usize << eta;
    let one = Complex::new(T::one(), T::zero());
    let i_unit = Complex::new(T::zero(), T::one());
    let mut items = Vec::with_capacity(expected_count(eta));

    let mut pair = 0;
    for r in 0..n {
        for c in r + 1..n {
            items.push(Generator::new(n, vec![(r, c, one), (c, r, one)], Family::Symmetric, pair));
            items.push(Generator::new(
                n,
                vec![(r, c, -i_unit), (c, r, i_unit)],
                Family::Antisymmetric,
                pair,
            ));
            pair += 1;
        }
    }

    for k in 1..n {
        let kf = T::of_usize(k);
        let norm = (T::of(2.0) / (kf * (kf + T::one()))).sqrt();
        let mut entries: Vec<_> = (0..k).map(|m| (m, m, Complex::new(norm, T::zero()))).collect();
        entries.push((k, k, Complex::new(-kf * norm, T::zero())));
        items.push(Generator::new(n, entries, Family::Diagonal, k - 1));
    }

    Ok(GeneratorSet { eta, items })
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisReport {
    pub count: usize,
    pub expected_count: usize,
    pub max_hermiticity_deviation: f64,
    pub max_trace_deviation: f64,
    /// max |Tr(h_i h_j) − 2δ_ij| over all ordered pairs
    pub max_orthogonality_deviation: f64,
    pub count_ok: bool,
    pub hermitian_ok: bool,
    pub traceless_ok: bool,
    pub orthogonal_ok: bool,
}

impl BasisReport {
    pub fn all_pass(&self) -> bool {
        self.count_ok && self.hermitian_ok && self.traceless_ok && self.orthogonal_ok
    }
}

/// Evaluates hermiticity, tracelessness, pairwise Hilbert-Schmidt
/// orthogonality and completeness of a generator set.
pub fn verify_basis<T: Scalar>(gs: &GeneratorSet<T>) -> BasisReport {
    let herm = gs
        .items
        .iter()
        .fold(0.0f64, |m, g| m.max(g.hermiticity_deviation().to_f64_lossy()));
    let tr = gs.items.iter().fold(0.0f64, |m, g| m.max(g.trace().norm().to_f64_lossy()));

    let mut ortho = 0.0f64;
    for (i, gi) in gs.items.iter().enumerate() {
        for (j, gj) in gs.items.iter().enumerate() {
            let expected = if i == j { 2.0 } else { 0.0 };
            let t = gi.trace_product(gj);
            let dev = (t.re.to_f64_lossy() - expected).hypot(t.im.to_f64_lossy());
            ortho = ortho.max(dev);
        }
    }

    let expected = expected_count(gs.eta);
    BasisReport {
        count: gs.len(),
        expected_count: expected,
        max_hermiticity_deviation: herm,
        max_trace_deviation: tr,
        max_orthogonality_deviation: ortho,
        count_ok: gs.len() == expected,
        hermitian_ok: herm < TOL.generator_structure,
        traceless_ok: tr < TOL.generator_structure,
        orthogonal_ok: ortho < TOL.generator_orthogonality,
    }
}

/// A Pauli string on η qubits; qubit 0 is the leftmost label character and
/// the most significant bit of the basis index.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct PauliString {
    pub eta: usize,
    /// bit q set (q counted from the most significant side) for X or Y
    pub x_mask: usize,
    /// bit q set for Z or Y
    pub z_mask: usize,
}

impl PauliString {
    fn bit(&self, q: usize) -> usize {
        1 << (self.eta - 1 - q)
    }

    pub fn label(&self) -> String {
        (0..self.eta)
            .map(|q| {
                let b = self.bit(q);
                match (self.x_mask & b != 0, self.z_mask & b != 0) {
                    (false, false) => 'I',
                    (true, false) => 'X',
                    (true, true) => 'Y',
                    (false, true) => 'Z',
                }
            })
            .collect()
    }

    pub fn parse(label: &str) -> Result<Self> {
        let eta = label.len();
        let mut p = PauliString {
            eta,
            x_mask: 0,
            z_mask: 0,
        };
        for (q, ch) in label.chars().enumerate() {
            let b = 1 << (eta - 1 - q);
            match ch {
                'I' => {}
                'X' => p.x_mask |= b,
                'Y' => {
                    p.x_mask |= b;
                    p.z_mask |= b;
                }
                'Z' => p.z_mask |= b,
                other => return Err(QgkError::precondition(format!("invalid Pauli label character {other:?}"))),
            }
        }
        Ok(p)
    }

    /// Entry P[r, c]; zero unless c = r ^ x_mask.
    pub fn entry<T: Scalar>(&self, r: usize, c: usize) -> Complex<T> {
        if r ^ c != self.x_mask {
            return Complex::zero();
        }
        let mut val = Complex::new(T::one(), T::zero());
        for q in 0..self.eta {
            let b = self.bit(q);
            let (x, z) = (self.x_mask & b != 0, self.z_mask & b != 0);
            let rq = r & b != 0;
            val = match (x, z) {
                (false, false) | (true, false) => val,
                // σz: diag(1, −1)
                (false, true) => {
                    if rq {
                        -val
                    } else {
                        val
                    }
                }
                // σy: [[0, −i], [i, 0]]
                (true, true) => {
                    if rq {
                        val * Complex::new(T::zero(), T::one())
                    } else {
                        val * Complex::new(T::zero(), -T::one())
                    }
                }
            };
        }
        val
    }

    pub fn to_dense<T: Scalar>(&self) -> ComplexMatrix<T> {
        let n = 1 << self.eta;
        let mut m = ComplexMatrix::zeros(n, n);
        for r in 0..n {
            m[(r, r ^ self.x_mask)] = self.entry(r, r ^ self.x_mask);
        }
        m
    }
}

/// Expands a generator in the Pauli basis: h = Σ c_P·P with
/// c_P = Tr(P h) / 2^η. Only nonzero coefficients are returned, sorted by
/// label. The coefficients of a Hermitian matrix are real; the imaginary
/// residue is dropped after checking it is negligible.
pub fn pauli_decompose<T: Scalar>(h: &Generator<T>) -> Vec<(String, T)> {
    let eta = h.dim.trailing_zeros() as usize;
    let dim_f = T::of_usize(h.dim);
    let cutoff = T::epsilon() * T::of(64.0);
    let mut coeffs: std::collections::BTreeMap<(usize, usize), Complex<T>> = Default::default();

    for &(a, b, v) in &h.entries {
        // P[b, a] ≠ 0 requires x_mask = a ^ b; every z_mask contributes
        let x_mask = a ^ b;
        for z_mask in 0..h.dim {
            let p = PauliString { eta, x_mask, z_mask };
            let term = p.entry::<T>(b, a) * v;
            *coeffs.entry((x_mask, z_mask)).or_insert_with(Complex::zero) += term;
        }
    }

    let mut out: Vec<(String, T)> = coeffs
        .into_iter()
        .filter_map(|((x_mask, z_mask), c)| {
            let c = c / dim_f;
            debug_assert!(c.im.abs() <= T::of(1e-9), "complex Pauli coefficient");
            (c.re.abs() > cutoff).then(|| (PauliString { eta, x_mask, z_mask }.label(), c.re))
        })
        .collect();
    out.sort_by(|a, b| a.0.cmp(&b.0));
    out
}

/// Σ c·P as a dense matrix.
pub fn pauli_reconstruct<T: Scalar>(terms: &[(String, T)]) -> Result<ComplexMatrix<T>> {
    let eta = terms
        .first()
        .map(|t| t.0.len())
        .ok_or_else(|| QgkError::precondition("empty Pauli expansion"))?;
    let n = 1 << eta;
    let mut m = ComplexMatrix::zeros(n, n);
    for (label, c) in terms {
        let p = PauliString::parse(label)?;
        if p.eta != eta {
            return Err(QgkError::dims("pauli_reconstruct", eta, p.eta));
        }
        m.add_assign_scaled(&p.to_dense(), *c);
    }
    Ok(m)
}

/// One line per generator: `<index>,<family>,<label>:<coeff>[;...]` with
/// coefficients at 17 significant digits.
pub fn export_pauli_table<T: Scalar>(gs: &GeneratorSet<T>) -> String {
    let mut out = String::new();
    for (i, g) in gs.items.iter().enumerate() {
        let terms: Vec<String> = pauli_decompose(g)
            .into_iter()
            .map(|(l, c)| format!("{l}:{:.16e}", c.to_f64_lossy()))
            .collect();
        let _ = writeln!(out, "{i},{},{}", g.family, terms.join(";"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::C64;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn single_qubit_is_pauli_basis() {
        let gs = build_generator_set::<f64>(1).unwrap();
        assert_eq!(gs.len(), 3);
        let x = ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)]).unwrap();
        let y = ComplexMatrix::from_vec(2, 2, vec![c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)]).unwrap();
        let z = ComplexMatrix::from_vec(2, 2, vec![c(1., 0.), c(0., 0.), c(0., 0.), c(-1., 0.)]).unwrap();
        assert_eq!(gs.items[0].to_dense(), x);
        assert_eq!(gs.items[1].to_dense(), y);
        assert_eq!(gs.items[2].to_dense(), z);
        assert_eq!(
            gs.items.iter().map(|g| g.family).collect::<Vec<_>>(),
            vec![Family::Symmetric, Family::Antisymmetric, Family::Diagonal]
        );
    }

    #[test]
    fn family_counts() {
        for eta in 1..=6 {
            let gs = build_generator_set::<f64>(eta).unwrap();
            let n = 1usize << eta;
            assert_eq!(gs.len(), 4usize.pow(eta as u32) - 1);
            let half = (n / 2) * (n - 1);
            assert_eq!(gs.family_indices(Family::Symmetric).len(), half);
            assert_eq!(gs.family_indices(Family::Antisymmetric).len(), half);
            assert_eq!(gs.family_indices(Family::Diagonal).len(), n - 1);
        }
        assert_eq!(build_generator_set::<f64>(2).unwrap().len(), 15);
    }

    #[test]
    fn rejects_out_of_range_eta() {
        assert!(build_generator_set::<f64>(0).is_err());
        assert!(build_generator_set::<f64>(9).is_err());
    }

    /// Dense brute force over all pairs, independent of the sparse path.
    #[test]
    fn eta3_pairwise_orthogonality_brute_force() {
        let gs = build_generator_set::<f64>(3).unwrap();
        let dense: Vec<_> = gs.items.iter().map(|g| g.to_dense()).collect();
        assert_eq!(dense.len(), 63);
        for (i, a) in dense.iter().enumerate() {
            assert!(a.hermiticity_deviation() < 1e-12);
            assert!(a.trace().norm() < 1e-12);
            for (j, b) in dense.iter().enumerate() {
                let t = a.matmul(b).trace();
                let expected = if i == j { 2.0 } else { 0.0 };
                assert!((t - c(expected, 0.0)).norm() < 1e-10, "({i},{j}) -> {t}");
            }
        }
    }

    #[test]
    fn verify_basis_passes_and_is_deterministic() {
        let gs = build_generator_set::<f64>(2).unwrap();
        let r1 = verify_basis(&gs);
        assert!(r1.all_pass(), "{r1:?}");
        assert!(r1.max_orthogonality_deviation < 1e-12);
        assert_eq!(r1, verify_basis(&gs));
    }

    #[test]
    fn verify_basis_flags_scaled_generator() {
        let mut gs = build_generator_set::<f64>(2).unwrap();
        gs.items[4] = gs.items[4].scaled(2.0);
        let r = verify_basis(&gs);
        assert!(!r.orthogonal_ok);
        assert!(r.hermitian_ok && r.traceless_ok && r.count_ok);
        // Tr((2h)²) = 8 against the expected 2
        assert!((r.max_orthogonality_deviation - 6.0).abs() < 1e-12);
    }

    #[test]
    fn verify_basis_flags_missing_generator() {
        let mut gs = build_generator_set::<f64>(2).unwrap();
        gs.items.pop();
        let r = verify_basis(&gs);
        assert!(!r.count_ok && !r.all_pass());
    }

    #[test]
    fn pauli_single_qubit() {
        let gs = build_generator_set::<f64>(1).unwrap();
        assert_eq!(pauli_decompose(&gs.items[0]), vec![("X".to_string(), 1.0)]);
        assert_eq!(pauli_decompose(&gs.items[1]), vec![("Y".to_string(), 1.0)]);
        assert_eq!(pauli_decompose(&gs.items[2]), vec![("Z".to_string(), 1.0)]);
    }

    #[test]
    fn pauli_e03_plus_e30() {
        let gs = build_generator_set::<f64>(2).unwrap();
        let g = gs
            .items
            .iter()
            .find(|g| g.family == Family::Symmetric && g.entry(0, 3) != c(0., 0.))
            .unwrap();
        let terms = pauli_decompose(g);
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].0, "XX");
        assert!((terms[0].1 - 0.5).abs() < 1e-15);
        assert_eq!(terms[1].0, "YY");
        assert!((terms[1].1 + 0.5).abs() < 1e-15);

        // entrywise expansion of (σx⊗σx − σy⊗σy)/2
        let xx = PauliString::parse("XX").unwrap().to_dense::<f64>();
        let yy = PauliString::parse("YY").unwrap().to_dense::<f64>();
        let mut expect = xx.scale(c(0.5, 0.));
        expect.add_assign_scaled(&yy, -0.5);
        assert!(expect.sub(&g.to_dense()).max_abs() < 1e-15);
    }

    #[test]
    fn pauli_strings_follow_kronecker_order() {
        // qubit 0 is the left tensor factor: Z⊗I = diag(1, 1, −1, −1)
        let zi = PauliString::parse("ZI").unwrap().to_dense::<f64>();
        let diag: Vec<f64> = (0..4).map(|i| zi[(i, i)].re).collect();
        assert_eq!(diag, vec![1.0, 1.0, -1.0, -1.0]);
        let xi = PauliString::parse("XI").unwrap().to_dense::<f64>();
        assert_eq!(xi[(0, 2)], c(1., 0.));
    }

    #[test]
    fn pauli_decomposition_reconstructs_every_generator() {
        for eta in 1..=3 {
            let gs = build_generator_set::<f64>(eta).unwrap();
            for g in &gs.items {
                let terms = pauli_decompose(g);
                let m = pauli_reconstruct(&terms).unwrap();
                assert!(m.sub(&g.to_dense()).max_abs() < 1e-10);
            }
        }
    }

    /// The commutator of two basis elements, −i[h_i, h_j], is Hermitian and
    /// traceless and so must lie in the real span of the basis. Coefficients
    /// are least-squares projections (the basis is orthogonal with norm² 2).
    #[test]
    fn commutator_closure_spot_check() {
        for eta in 1..=2 {
            let gs = build_generator_set::<f64>(eta).unwrap();
            let dense: Vec<_> = gs.items.iter().map(|g| g.to_dense()).collect();
            for a in &dense {
                for b in &dense {
                    let comm = a.matmul(b).sub(&b.matmul(a)).scale(c(0.0, -1.0));
                    let mut fit = ComplexMatrix::zeros(comm.rows(), comm.cols());
                    for h in &dense {
                        let coeff = h.trace_product(&comm) / 2.0;
                        assert!(coeff.im.abs() < 1e-12);
                        fit.add_assign_scaled(h, coeff.re);
                    }
                    assert!(fit.sub(&comm).max_abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn export_line_format() {
        let gs = build_generator_set::<f64>(1).unwrap();
        let text = export_pauli_table(&gs);
        let lines: Vec<_> = text.lines().collect();
        assert_eq!(lines.len(), 3);
        assert_eq!(lines[0], "0,symmetric,X:1.0000000000000000e0");
        assert!(lines[2].starts_with("2,diagonal,Z:"));
        let gs2 = build_generator_set::<f64>(2).unwrap();
        let line = export_pauli_table(&gs2).lines().nth(4).unwrap().to_string();
        let body = line.splitn(3, ',').nth(2).unwrap();
        for term in body.split(';') {
            let (label, coeff) = term.split_once(':').unwrap();
            assert_eq!(label.len(), 2);
            coeff.parse::<f64>().unwrap();
        }
    }

    #[test]
    fn f32_basis_is_orthonormal_at_single_precision() {
        let gs = build_generator_set::<f32>(2).unwrap();
        let r = verify_basis(&gs);
        assert!(r.count_ok);
        assert!(r.max_orthogonality_deviation < 1e-6);
    }
}

//! Dense complex linear algebra for Hilbert spaces of up to 2^8 dimensions.

use std::ops::{Index, IndexMut};

use num_complex::Complex;
use num_traits::{One, Zero};

use crate::tolerance::{Tolerances, TOL};
use crate::{QgkError, Result, Scalar};

/// Row-major dense complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexMatrix<T> {
    rows: usize,
    cols: usize,
    data: Vec<Complex<T>>,
}

impl<T: Scalar> ComplexMatrix<T> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![Complex::zero(); rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = Complex::one();
        }
        m
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> Complex<T>) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                data.push(f(r, c));
            }
        }
        Self { rows, cols, data }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<Complex<T>>) -> Result<Self> {
        if rows * cols != data.len() {
            return Err(QgkError::dims("ComplexMatrix::from_vec", rows * cols, data.len()));
        }
        if data.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(QgkError::NonFinite("matrix entry".into()));
        }
        Ok(Self { rows, cols, data })
    }

    /// Real matrix lifted to the complex field.
    pub fn from_real(rows: usize, cols: usize, values: &[T]) -> Result<Self> {
        Self::from_vec(rows, cols, values.iter().map(|&v| Complex::new(v, T::zero())).collect())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[Complex<T>] {
        &self.data
    }

    pub fn row(&self, r: usize) -> &[Complex<T>] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn adjoint(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |r, c| self[(c, r)].conj())
    }

    pub fn scale(&self, s: Complex<T>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|&z| z * s).collect(),
        }
    }

    pub fn add_assign_scaled(&mut self, other: &Self, s: T) {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        for (a, &b) in self.data.iter_mut().zip(&other.data) {
            *a += b * s;
        }
    }

    pub fn sub(&self, other: &Self) -> Self {
        assert_eq!((self.rows, self.cols), (other.rows, other.cols));
        Self {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a - b).collect(),
        }
    }

    pub fn matmul(&self, other: &Self) -> Self {
        assert_eq!(self.cols, other.rows, "matmul inner dimension");
        let mut out = Self::zeros(self.rows, other.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(r, k)];
                if a.is_zero() {
                    continue;
                }
                let orow = other.row(k);
                let dst = &mut out.data[r * other.cols..(r + 1) * other.cols];
                for (d, &b) in dst.iter_mut().zip(orow) {
                    *d += a * b;
                }
            }
        }
        out
    }

    pub fn matvec(&self, v: &[Complex<T>]) -> Vec<Complex<T>> {
        assert_eq!(self.cols, v.len(), "matvec dimension");
        (0..self.rows)
            .map(|r| self.row(r).iter().zip(v).map(|(&a, &b)| a * b).sum())
            .collect()
    }

    pub fn trace(&self) -> Complex<T> {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Max-abs entry norm, ‖A‖∞ in the entrywise sense.
    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |m, z| m.max(z.norm()))
    }

    pub fn frobenius_sq(&self) -> T {
        self.data.iter().map(|z| z.norm_sqr()).sum()
    }

    /// Max |H − H†| entry.
    pub fn hermiticity_deviation(&self) -> T {
        let mut dev = T::zero();
        for r in 0..self.rows {
            for c in 0..self.cols {
                dev = dev.max((self[(r, c)] - self[(c, r)].conj()).norm());
            }
        }
        dev
    }

    /// Tr(A B) without forming the product.
    pub fn trace_product(&self, other: &Self) -> Complex<T> {
        assert_eq!((self.cols, self.rows), (other.rows, other.cols));
        let mut acc = Complex::zero();
        for r in 0..self.rows {
            for k in 0..self.cols {
                acc += self[(r, k)] * other[(k, r)];
            }
        }
        acc
    }
}

impl<T> Index<(usize, usize)> for ComplexMatrix<T> {
    type Output = Complex<T>;

    #[inline]
    fn index(&self, (r, c): (usize, usize)) -> &Complex<T> {
        &self.data[r * self.cols + c]
    }
}

impl<T> IndexMut<(usize, usize)> for ComplexMatrix<T> {
    #[inline]
    fn index_mut(&mut self, (r, c): (usize, usize)) -> &mut Complex<T> {
        &mut self.data[r * self.cols + c]
    }
}

/// Pure state amplitudes on 2^η basis states; qubit 0 is the most
/// significant bit of the basis index.
#[derive(Clone, Debug, PartialEq)]
pub struct StateVector<T> {
    amps: Vec<Complex<T>>,
}

impl<T: Scalar> StateVector<T> {
    /// Wraps amplitudes as-is. Callers that need the unit-norm invariant
    /// should use [`StateVector::normalized`].
    pub fn from_amplitudes(amps: Vec<Complex<T>>) -> Self {
        Self { amps }
    }

    pub fn normalized(mut amps: Vec<Complex<T>>) -> Result<Self> {
        let n = amps.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        if !(n > T::zero()) || !n.is_finite() {
            return Err(QgkError::Degenerate("cannot normalize zero or non-finite state".into()));
        }
        for a in &mut amps {
            *a = *a / n;
        }
        Ok(Self { amps })
    }

    pub fn basis(dim: usize, index: usize) -> Self {
        let mut amps = vec![Complex::zero(); dim];
        amps[index] = Complex::one();
        Self { amps }
    }

    /// H^{⊗η}|0⟩.
    pub fn uniform(dim: usize) -> Self {
        let a = T::one() / T::of_usize(dim).sqrt();
        Self {
            amps: vec![Complex::new(a, T::zero()); dim],
        }
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amplitudes(&self) -> &[Complex<T>] {
        &self.amps
    }

    pub fn into_amplitudes(self) -> Vec<Complex<T>> {
        self.amps
    }

    pub fn norm(&self) -> T {
        self.amps.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt()
    }

    /// ⟨self|other⟩.
    pub fn inner(&self, other: &Self) -> Complex<T> {
        assert_eq!(self.dim(), other.dim());
        self.amps.iter().zip(&other.amps).map(|(a, b)| a.conj() * b).sum()
    }

    pub fn fidelity(&self, other: &Self) -> T {
        self.inner(other).norm_sqr()
    }
}

/// Spectral decomposition H = V·diag(λ)·V† of a Hermitian matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct EigenDecomposition<T> {
    /// Ascending.
    pub eigenvalues: Vec<T>,
    /// Columns are the orthonormal eigenvectors.
    pub eigenvectors: ComplexMatrix<T>,
}

impl<T: Scalar> EigenDecomposition<T> {
    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn reconstruct(&self) -> ComplexMatrix<T> {
        let v = &self.eigenvectors;
        let n = self.dim();
        ComplexMatrix::from_fn(n, n, |r, c| {
            (0..n)
                .map(|k| v[(r, k)] * v[(c, k)].conj() * self.eigenvalues[k])
                .sum()
        })
    }

    /// ‖V†V − I‖∞.
    pub fn orthonormality_deviation(&self) -> T {
        let v = &self.eigenvectors;
        v.adjoint().matmul(v).sub(&ComplexMatrix::identity(self.dim())).max_abs()
    }
}

/// Hermitian eigendecomposition via Householder reduction to a real
/// symmetric tridiagonal matrix followed by implicit-shift QL.
pub fn hermitian_eig<T: Scalar>(h: &ComplexMatrix<T>) -> Result<EigenDecomposition<T>> {
    if !h.is_square() {
        return Err(QgkError::precondition(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            h.rows(),
            h.cols()
        )));
    }
    let herm_tol = Tolerances::scaled_for::<T>(TOL.hermitian_input) * h.max_abs().max(T::one());
    let dev = h.hermiticity_deviation();
    if !(dev < herm_tol) {
        return Err(QgkError::precondition(format!(
            "matrix is not Hermitian (max |H - H†| = {dev})"
        )));
    }

    let n = h.rows();
    if n == 0 {
        return Ok(EigenDecomposition {
            eigenvalues: Vec::new(),
            eigenvectors: ComplexMatrix::zeros(0, 0),
        });
    }

    let (q, diag, sub) = tridiagonalize(h);

    // Unitary diagonal phase D with D†TD real: the QL sweep then works on a
    // real symmetric tridiagonal matrix.
    let mut phase = vec![Complex::<T>::one(); n];
    let mut d: Vec<T> = diag;
    let mut e = vec![T::zero(); n];
    for k in 0..n.saturating_sub(1) {
        let mag = sub[k].norm();
        e[k] = mag;
        phase[k + 1] = if mag > T::zero() { phase[k] * (sub[k] / mag) } else { phase[k] };
    }

    let mut z = vec![T::zero(); n * n];
    for i in 0..n {
        z[i * n + i] = T::one();
    }
    tql2(&mut d, &mut e, &mut z, n)?;

    // X = Q·D·Z
    let qd = ComplexMatrix::from_fn(n, n, |r, c| q[(r, c)] * phase[c]);
    let mut vecs = ComplexMatrix::zeros(n, n);
    for r in 0..n {
        for k in 0..n {
            let a = qd[(r, k)];
            for c in 0..n {
                vecs[(r, c)] += a * z[k * n + c];
            }
        }
    }

    fix_phases(&mut vecs);
    Ok(EigenDecomposition {
        eigenvalues: d,
        eigenvectors: vecs,
    })
}

/// Reduces Hermitian `h` to tridiagonal T = Q†HQ. Returns Q, the real
/// diagonal of T and its (complex) subdiagonal.
fn tridiagonalize<T: Scalar>(h: &ComplexMatrix<T>) -> (ComplexMatrix<T>, Vec<T>, Vec<Complex<T>>) {
    let n = h.rows();
    let mut a = h.clone();
    let mut q = ComplexMatrix::identity(n);
    let two = T::of(2.0);
    let mut v = vec![Complex::<T>::zero(); n];
    let mut p = vec![Complex::<T>::zero(); n];

    for k in 0..n.saturating_sub(2) {
        let tail: T = (k + 2..n).map(|r| a[(r, k)].norm_sqr()).sum();
        if tail == T::zero() {
            continue;
        }
        let x0 = a[(k + 1, k)];
        let xnorm = (tail + x0.norm_sqr()).sqrt();
        let x0n = x0.norm();
        let unit = if x0n > T::zero() { x0 / x0n } else { Complex::one() };
        let alpha = -unit * xnorm;

        v.iter_mut().for_each(|z| *z = Complex::zero());
        v[k + 1] = x0 - alpha;
        for r in k + 2..n {
            v[r] = a[(r, k)];
        }
        let vnorm = v.iter().map(|z| z.norm_sqr()).sum::<T>().sqrt();
        for z in v.iter_mut() {
            *z = *z / vnorm;
        }

        // A ← (I − 2vv†) A (I − 2vv†) = A − 2(v w† + w v†), w = Av − (v†Av) v
        for r in 0..n {
            p[r] = (k + 1..n).map(|c| a[(r, c)] * v[c]).sum();
        }
        let kappa: Complex<T> = (k + 1..n).map(|r| v[r].conj() * p[r]).sum();
        let w: Vec<Complex<T>> = (0..n).map(|r| p[r] - v[r] * kappa.re).collect();
        for r in 0..n {
            for c in 0..n {
                let upd = v[r] * w[c].conj() + w[r] * v[c].conj();
                if !upd.is_zero() {
                    a[(r, c)] -= upd * two;
                }
            }
        }

        // Q ← Q (I − 2vv†)
        for r in 0..n {
            let qv: Complex<T> = (k + 1..n).map(|c| q[(r, c)] * v[c]).sum();
            for c in k + 1..n {
                q[(r, c)] -= qv * v[c].conj() * two;
            }
        }
    }

    let diag = (0..n).map(|i| a[(i, i)].re).collect();
    let sub = (0..n.saturating_sub(1)).map(|i| a[(i + 1, i)]).collect();
    (q, diag, sub)
}

/// Implicit-shift QL on a real symmetric tridiagonal matrix (diagonal `d`,
/// `e[i]` coupling i and i+1, `e[n-1] = 0`). Accumulates rotations into the
/// row-major `z` and sorts eigenpairs ascending.
fn tql2<T: Scalar>(d: &mut [T], e: &mut [T], z: &mut [T], n: usize) -> Result<()> {
    const MAX_ITER: usize = 64;
    let two = T::of(2.0);
    let eps = T::epsilon();
    let mut f = T::zero();
    let mut tst1 = T::zero();

    for l in 0..n {
        tst1 = tst1.max(d[l].abs() + e[l].abs());
        let mut m = l;
        while m < n - 1 {
            if e[m].abs() <= eps * tst1 {
                break;
            }
            m += 1;
        }

        if m > l {
            let mut iter = 0;
            loop {
                iter += 1;
                if iter > MAX_ITER {
                    return Err(QgkError::NoConvergence(MAX_ITER));
                }
                let mut g = d[l];
                let mut p = (d[l + 1] - g) / (two * e[l]);
                let mut r = p.hypot(T::one());
                if p < T::zero() {
                    r = -r;
                }
                d[l] = e[l] / (p + r);
                d[l + 1] = e[l] * (p + r);
                let dl1 = d[l + 1];
                let mut h = g - d[l];
                for di in d.iter_mut().take(n).skip(l + 2) {
                    *di -= h;
                }
                f += h;

                p = d[m];
                let mut c = T::one();
                let mut c2 = c;
                let mut c3 = c;
                let el1 = e[l + 1];
                let mut s = T::zero();
                let mut s2 = T::zero();
                for i in (l..m).rev() {
                    c3 = c2;
                    c2 = c;
                    s2 = s;
                    g = c * e[i];
                    h = c * p;
                    r = p.hypot(e[i]);
                    e[i + 1] = s * r;
                    s = e[i] / r;
                    c = p / r;
                    p = c * d[i] - s * g;
                    d[i + 1] = h + s * (c * g + s * d[i]);
                    for k in 0..n {
                        let zk = &mut z[k * n..(k + 1) * n];
                        h = zk[i + 1];
                        zk[i + 1] = s * zk[i] + c * h;
                        zk[i] = c * zk[i] - s * h;
                    }
                }
                p = -s * s2 * c3 * el1 * e[l] / dl1;
                e[l] = s * p;
                d[l] = c * p;
                if e[l].abs() <= eps * tst1 {
                    break;
                }
            }
        }
        d[l] += f;
        e[l] = T::zero();
    }

    // selection sort keeps the column swaps explicit and stable
    for i in 0..n.saturating_sub(1) {
        let mut k = i;
        let mut p = d[i];
        for (j, &dj) in d.iter().enumerate().skip(i + 1) {
            if dj < p {
                k = j;
                p = dj;
            }
        }
        if k != i {
            d.swap(i, k);
            for r in 0..n {
                z.swap(r * n + i, r * n + k);
            }
        }
    }
    Ok(())
}

/// Rotates each column so that its first non-negligible component is real
/// and positive.
fn fix_phases<T: Scalar>(v: &mut ComplexMatrix<T>) {
    let thresh = Tolerances::scaled_for::<T>(TOL.phase_zero);
    let n = v.rows();
    for c in 0..v.cols() {
        let lead = (0..n).map(|r| v[(r, c)]).find(|z| z.norm() > thresh);
        if let Some(z) = lead {
            let rot = z.conj() / z.norm();
            for r in 0..n {
                v[(r, c)] = v[(r, c)] * rot;
            }
        }
    }
}

/// exp(−i·phi·H)·v evaluated as V·diag(e^{−i·phi·λ})·V†·v.
pub fn expi_apply<T: Scalar>(
    decomp: &EigenDecomposition<T>,
    phi: T,
    v: &StateVector<T>,
) -> Result<StateVector<T>> {
    if decomp.dim() != v.dim() {
        return Err(QgkError::dims("expi_apply", decomp.dim(), v.dim()));
    }
    Ok(StateVector::from_amplitudes(expi_apply_slice(decomp, phi, v.amplitudes())))
}

/// Unchecked slice form of [`expi_apply`] for inner loops.
pub(crate) fn expi_apply_slice<T: Scalar>(
    decomp: &EigenDecomposition<T>,
    phi: T,
    v: &[Complex<T>],
) -> Vec<Complex<T>> {
    if phi == T::zero() {
        return v.to_vec();
    }
    let n = decomp.dim();
    let vecs = &decomp.eigenvectors;
    let mut coeffs = vec![Complex::<T>::zero(); n];
    for r in 0..n {
        let vr = v[r];
        if vr.is_zero() {
            continue;
        }
        let row = vecs.row(r);
        for (k, ck) in coeffs.iter_mut().enumerate() {
            *ck += row[k].conj() * vr;
        }
    }
    for (ck, &lam) in coeffs.iter_mut().zip(&decomp.eigenvalues) {
        let angle = -phi * lam;
        *ck = *ck * Complex::new(angle.cos(), angle.sin());
    }
    vecs.matvec(&coeffs)
}

/// ρ_k = Tr_{¬k} |ψ⟩⟨ψ| for qubit `keep` (qubit 0 is the most significant
/// bit of the basis index).
pub fn partial_trace_single_qubit<T: Scalar>(
    psi: &StateVector<T>,
    keep: usize,
    eta: usize,
) -> Result<ComplexMatrix<T>> {
    if keep >= eta {
        return Err(QgkError::precondition(format!("qubit index {keep} out of range for {eta} qubits")));
    }
    let dim = 1usize << eta;
    if psi.dim() != dim {
        return Err(QgkError::dims("partial_trace_single_qubit", dim, psi.dim()));
    }
    let shift = eta - 1 - keep;
    let bit = 1usize << shift;
    let amps = psi.amplitudes();
    let mut rho = ComplexMatrix::zeros(2, 2);
    for i in 0..dim {
        if i & bit != 0 {
            continue;
        }
        let a0 = amps[i];
        let a1 = amps[i | bit];
        rho[(0, 0)] += a0 * a0.conj();
        rho[(0, 1)] += a0 * a1.conj();
        rho[(1, 0)] += a1 * a0.conj();
        rho[(1, 1)] += a1 * a1.conj();
    }
    Ok(rho)
}

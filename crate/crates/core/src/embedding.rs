//! Parameter vector → quantum state through the grouped generator unitary.
//!
//! Two forms are supported. The product form applies exp(−iφ_i Ĥ_i) group
//! by group, group 0 first, and has exact parameter derivatives. The
//! summed form exponentiates Σφ_i Ĥ_i in one step; it agrees with the
//! product form only when the groups commute.

use std::fmt;

use num_complex::Complex;
use num_traits::Zero;

use crate::densela::{expi_apply_slice, hermitian_eig, ComplexMatrix, StateVector};
use crate::vgg::VggSet;
use crate::{QgkError, Result, Scalar};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum EmbeddingMode {
    #[default]
    Product,
    SumExp,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum InitialState {
    /// H^{⊗η}|0⟩
    #[default]
    UniformSuperposition,
    /// |0…0⟩
    GroundState,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub struct EmbeddingConfig {
    pub mode: EmbeddingMode,
    pub initial_state: InitialState,
}

impl EmbeddingConfig {
    pub fn new(mode: EmbeddingMode, initial_state: InitialState) -> Self {
        Self { mode, initial_state }
    }
}

impl EmbeddingMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "product" => Ok(Self::Product),
            "sumexp" | "sum" => Ok(Self::SumExp),
            _ => Err(QgkError::Config(format!("unknown embedding mode {s:?}"))),
        }
    }
}

impl InitialState {
    pub fn parse(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "uniform" | "uniformsuperposition" => Ok(Self::UniformSuperposition),
            "ground" | "groundstate" => Ok(Self::GroundState),
            _ => Err(QgkError::Config(format!("unknown initial state {s:?}"))),
        }
    }

    pub fn prepare<T: Scalar>(self, dim: usize) -> StateVector<T> {
        match self {
            Self::UniformSuperposition => StateVector::uniform(dim),
            Self::GroundState => StateVector::basis(dim, 0),
        }
    }
}

impl fmt::Display for EmbeddingMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Product => "product",
            Self::SumExp => "sumexp",
        })
    }
}

impl fmt::Display for InitialState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::UniformSuperposition => "uniform",
            Self::GroundState => "ground",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddedState<T> {
    pub psi: StateVector<T>,
    pub phi: Vec<T>,
    pub config: EmbeddingConfig,
}

fn check_phi<T: Scalar>(vgg: &VggSet<T>, phi: &[T]) -> Result<()> {
    if phi.len() != vgg.group_count() {
        return Err(QgkError::dims("embedding parameters", vgg.group_count(), phi.len()));
    }
    if let Some(i) = phi.iter().position(|p| !p.is_finite()) {
        return Err(QgkError::NonFinite(format!("embedding parameter {i}")));
    }
    Ok(())
}

/// Applies the embedding unitary to an arbitrary vector.
pub(crate) fn apply_unitary<T: Scalar>(
    vgg: &VggSet<T>,
    phi: &[T],
    mode: EmbeddingMode,
    v: &[Complex<T>],
) -> Result<Vec<Complex<T>>> {
    match mode {
        EmbeddingMode::Product => Ok(vgg
            .eigs
            .iter()
            .zip(phi)
            .fold(v.to_vec(), |state, (eig, &p)| expi_apply_slice(eig, p, &state))),
        EmbeddingMode::SumExp => {
            let dim = vgg.dim();
            let mut h = ComplexMatrix::zeros(dim, dim);
            for (op, &p) in vgg.operators.iter().zip(phi) {
                h.add_assign_scaled(op, p);
            }
            let eig = hermitian_eig(&h)?;
            Ok(expi_apply_slice(&eig, T::one(), v))
        }
    }
}

pub fn embed<T: Scalar>(vgg: &VggSet<T>, phi: &[T], config: EmbeddingConfig) -> Result<EmbeddedState<T>> {
    check_phi(vgg, phi)?;
    let init = config.initial_state.prepare::<T>(vgg.dim());
    let amps = apply_unitary(vgg, phi, config.mode, init.amplitudes())?;
    Ok(EmbeddedState {
        psi: StateVector::from_amplitudes(amps),
        phi: phi.to_vec(),
        config,
    })
}

/// Forward record of a product-form embedding: the state after each group
/// has been applied. Supports vector-Jacobian products in O(g·4^η).
#[derive(Clone, Debug)]
pub struct ProductTape<'a, T> {
    vgg: &'a VggSet<T>,
    phi: Vec<T>,
    /// partial[i] = U_i ··· U_0 |Ψ⟩
    partial: Vec<Vec<Complex<T>>>,
}

impl<'a, T: Scalar> ProductTape<'a, T> {
    pub fn record(vgg: &'a VggSet<T>, phi: &[T], initial: InitialState) -> Result<Self> {
        check_phi(vgg, phi)?;
        let mut state = initial.prepare::<T>(vgg.dim()).into_amplitudes();
        let mut partial = Vec::with_capacity(phi.len());
        for (eig, &p) in vgg.eigs.iter().zip(phi) {
            state = expi_apply_slice(eig, p, &state);
            partial.push(state.clone());
        }
        if partial.is_empty() {
            partial.push(state);
        }
        Ok(Self {
            vgg,
            phi: phi.to_vec(),
            partial,
        })
    }

    pub fn state(&self) -> &[Complex<T>] {
        self.partial.last().expect("tape holds at least one state")
    }

    /// ⟨χ|∂ψ/∂φ_i⟩ for every i, by one backward sweep of χ through the
    /// inverse group unitaries.
    pub fn vjp(&self, chi: &[Complex<T>]) -> Vec<Complex<T>> {
        let g = self.phi.len();
        let mut out = vec![Complex::zero(); g];
        let mut lambda = chi.to_vec();
        for i in (0..g).rev() {
            // ⟨λ_i| −i Ĥ_i |ψ_i⟩ with λ_i = U_{i+1}† ··· U_{g−1}† χ
            let h_psi = self.vgg.operators[i].matvec(&self.partial[i]);
            let inner: Complex<T> = lambda.iter().zip(&h_psi).map(|(l, h)| l.conj() * h).sum();
            out[i] = inner * Complex::new(T::zero(), -T::one());
            if i > 0 {
                lambda = expi_apply_slice(&self.vgg.eigs[i], -self.phi[i], &lambda);
            }
        }
        out
    }
}

/// Product-form state together with every tangent ∂ψ/∂φ_i.
///
/// Tangent i is U_{g−1}···U_{i+1}·(−iĤ_i)·ψ_i. A backward sweep carries the
/// suffix product U_{g−1}···U_{i+1} as a dense matrix, so each tangent costs
/// one matrix-vector product.
pub fn embed_with_gradient<T: Scalar>(
    vgg: &VggSet<T>,
    phi: &[T],
    config: EmbeddingConfig,
) -> Result<(EmbeddedState<T>, Vec<StateVector<T>>)> {
    if config.mode != EmbeddingMode::Product {
        return Err(QgkError::UnsupportedMode(
            "exact gradients need the product embedding; use finite differences for sumexp".into(),
        ));
    }
    let tape = ProductTape::record(vgg, phi, config.initial_state)?;
    let g = phi.len();
    let dim = vgg.dim();
    let minus_i = Complex::new(T::zero(), -T::one());

    let mut suffix = ComplexMatrix::<T>::identity(dim);
    let mut tangents = vec![StateVector::from_amplitudes(Vec::new()); g];
    for i in (0..g).rev() {
        let h_psi: Vec<Complex<T>> = vgg.operators[i]
            .matvec(&tape.partial[i])
            .into_iter()
            .map(|z| z * minus_i)
            .collect();
        tangents[i] = StateVector::from_amplitudes(suffix.matvec(&h_psi));
        if i > 0 {
            // suffix ← suffix · U_i, row by row: (row·U) = conj(U† · conj(row))
            let mut next = ComplexMatrix::zeros(dim, dim);
            for r in 0..dim {
                let row: Vec<Complex<T>> = suffix.row(r).iter().map(|z| z.conj()).collect();
                let out = expi_apply_slice(&vgg.eigs[i], -phi[i], &row);
                for (c, z) in out.into_iter().enumerate() {
                    next[(r, c)] = z.conj();
                }
            }
            suffix = next;
        }
    }

    let state = EmbeddedState {
        psi: StateVector::from_amplitudes(tape.state().to_vec()),
        phi: phi.to_vec(),
        config,
    };
    Ok((state, tangents))
}

/// max |Û†Û − I| entry, from Û applied to every standard basis vector.
pub fn unitarity_check<T: Scalar>(vgg: &VggSet<T>, phi: &[T], config: EmbeddingConfig) -> Result<f64> {
    check_phi(vgg, phi)?;
    let dim = vgg.dim();
    let columns = (0..dim)
        .map(|k| apply_unitary(vgg, phi, config.mode, StateVector::<T>::basis(dim, k).amplitudes()))
        .collect::<Result<Vec<_>>>()?;
    let mut dev = 0.0f64;
    for (a, ca) in columns.iter().enumerate() {
        for (b, cb) in columns.iter().enumerate() {
            let dot: Complex<T> = ca.iter().zip(cb).map(|(x, y)| x.conj() * y).sum();
            let expect = if a == b { T::one() } else { T::zero() };
            dev = dev.max((dot - Complex::new(expect, T::zero())).norm().to_f64_lossy());
        }
    }
    Ok(dev)
}

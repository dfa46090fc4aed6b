//! Quantum generator kernels on a classical statevector simulator.
//!
//! The pipeline mirrors how the kernel is used in practice:
//!
//! 1. [`generators`] builds the ordered Hermitian basis of su(2^η).
//! 2. [`vgg`] merges that basis into `g` variational generator groups and
//!    eigendecomposes each group operator once.
//! 3. [`embedding`] maps a parameter vector to a state, either as a product
//!    of per-group exponentials or as one exponential of the summed
//!    Hamiltonian.
//! 4. [`kernel`] turns batches of states into fidelity Gram matrices and
//!    scores them against label-derived targets.
//! 5. [`projection`] trains the affine map `φ = Wx + b` by gradient descent
//!    on the alignment loss; [`svm`] classifies with the resulting kernel.
//!
//! [`metrics`] and [`complexity`] provide the diagnostics (entanglement,
//! spectral concentration, cost model and break-even analysis), [`data`]
//! the datasets, and [`experiment`] the end-to-end runs used by the CLI.
//!
//! All numerical code is generic over the real scalar type through
//! [`Scalar`]; `f64` is the working precision and the aliases below fix it.

pub mod complexity;
pub mod data;
pub mod densela;
pub mod embedding;
mod error;
pub mod experiment;
pub mod generators;
pub mod kernel;
pub mod metrics;
pub mod projection;
pub mod rng;
mod scalar;
pub mod svm;
pub mod tolerance;
pub mod vgg;

pub use error::{QgkError, Result};
pub use scalar::Scalar;

pub use densela::{ComplexMatrix, EigenDecomposition, StateVector};
pub use embedding::{EmbeddedState, EmbeddingConfig, EmbeddingMode, InitialState};
pub use generators::{Family, Generator, GeneratorSet};
pub use kernel::{KernelMatrix, TargetKernel};
pub use projection::{ProjectionParams, TrainConfig, TrainTrace};
pub use svm::SvmModel;
pub use vgg::{GroupingConfig, Scaling, VggSet};

pub type C64 = num_complex::Complex<f64>;

pub type ComplexMatrix64 = ComplexMatrix<f64>;
pub type StateVector64 = StateVector<f64>;
pub type EigenDecomposition64 = EigenDecomposition<f64>;
pub type GeneratorSet64 = GeneratorSet<f64>;
pub type VggSet64 = VggSet<f64>;
pub type EmbeddedState64 = EmbeddedState<f64>;
pub type KernelMatrix64 = KernelMatrix<f64>;
pub type TargetKernel64 = TargetKernel<f64>;
pub type ProjectionParams64 = ProjectionParams<f64>;
pub type SvmModel64 = SvmModel<f64>;

pub type ComplexMatrix32 = ComplexMatrix<f32>;
pub type StateVector32 = StateVector<f32>;
pub type VggSet32 = VggSet<f32>;
pub type KernelMatrix32 = KernelMatrix<f32>;

//! Numerical tolerances shared by production checks and tests.
//!
//! Values are stated for `f64`. Code that is generic over [`crate::Scalar`]
//! converts them with [`Tolerances::scaled_for`], which widens each bound to
//! the precision of narrower types.

use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Tolerances {
    /// Max |H - H†| entry accepted as Hermitian input.
    pub hermitian_input: f64,
    /// Unit-norm check on states.
    pub norm: f64,
    /// Eigenvector orthonormality, ‖V†V − I‖∞.
    pub eig_orthonormality: f64,
    /// Relative reconstruction, ‖VΛV† − H‖∞ / ‖H‖∞.
    pub eig_reconstruction: f64,
    /// Entry magnitude below which an eigenvector component counts as zero
    /// when fixing its phase.
    pub phase_zero: f64,
    /// Generator hermiticity / tracelessness.
    pub generator_structure: f64,
    /// Generator Hilbert-Schmidt orthogonality, Tr(h_i h_j) = 2δ_ij.
    pub generator_orthogonality: f64,
    /// Group operator Frobenius weight ‖Ĥ_i‖² = 2|G_i|.
    pub group_weight: f64,
    /// Kernel symmetry / unit diagonal / range slack.
    pub kernel_structure: f64,
    /// PSD slack per sample: min eigenvalue ≥ −psd_per_sample · n.
    pub psd_per_sample: f64,
    /// Unitarity of the embedding operator.
    pub unitarity: f64,
    /// Pivot threshold for rank computations on 0/1 matrices.
    pub rank_pivot: f64,
}

pub const TOL: Tolerances = Tolerances {
    hermitian_input: 1e-10,
    norm: 1e-10,
    eig_orthonormality: 1e-10,
    eig_reconstruction: 1e-9,
    phase_zero: 1e-10,
    generator_structure: 1e-12,
    generator_orthogonality: 1e-10,
    group_weight: 1e-9,
    kernel_structure: 1e-10,
    psd_per_sample: 1e-8,
    unitarity: 1e-9,
    rank_pivot: 1e-9,
};

impl Tolerances {
    /// Rescales a tolerance for the working precision of `T`: unchanged for
    /// `f64`, widened proportionally to machine epsilon otherwise.
    pub fn scaled_for<T: Scalar>(tol: f64) -> T {
        let ratio = T::epsilon().to_f64_lossy() / f64::EPSILON;
        T::of(tol * ratio.max(1.0))
    }
}

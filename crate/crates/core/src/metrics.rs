//! Entanglement, expressibility and structural diagnostics of a grouping.

use std::fmt::Write as _;

use rand::Rng;

use crate::densela::partial_trace_single_qubit;
use crate::embedding::{embed, EmbeddingConfig};
use crate::kernel::{gram, spectral_concentration};
use crate::projection::ProjectionParams;
use crate::rng::{self, streams};
use crate::tolerance::{Tolerances, TOL};
use crate::vgg::{frobenius_weights, gamma_eta, VggSet};
use crate::{QgkError, Result, Scalar, StateVector};

/// Q = 2·(1 − (1/η)·Σ_k Tr ρ_k²).
pub fn meyer_wallach<T: Scalar>(psi: &StateVector<T>, eta: usize) -> Result<f64> {
    if eta == 0 {
        return Err(QgkError::precondition("Meyer-Wallach needs at least one qubit"));
    }
    let dev = (psi.norm() - T::one()).abs();
    if dev > Tolerances::scaled_for::<T>(TOL.norm) {
        return Err(QgkError::precondition(format!("state norm deviates from 1 by {dev}")));
    }
    let mut purity = 0.0;
    for k in 0..eta {
        let rho = partial_trace_single_qubit(psi, k, eta)?;
        purity += rho.frobenius_sq().to_f64_lossy();
    }
    Ok((2.0 * (1.0 - purity / eta as f64)).clamp(0.0, 1.0))
}

/// Distribution of the sampled group parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct UniformBox {
    pub low: f64,
    pub high: f64,
}

impl Default for UniformBox {
    fn default() -> Self {
        Self {
            low: -std::f64::consts::PI,
            high: std::f64::consts::PI,
        }
    }
}

impl UniformBox {
    fn draw<T: Scalar, R: Rng>(&self, g: usize, rng: &mut R) -> Vec<T> {
        (0..g).map(|_| T::of(rng.gen_range(self.low..self.high))).collect()
    }
}

impl std::fmt::Display for UniformBox {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "uniform({},{})", self.low, self.high)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EntanglementStats {
    pub mean: f64,
    pub max: f64,
    pub std: f64,
    pub samples: Vec<f64>,
}

pub fn entanglement_capability<T: Scalar>(
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
    samples: usize,
    dist: UniformBox,
    seed: u64,
) -> Result<EntanglementStats> {
    if samples == 0 {
        return Err(QgkError::precondition("entanglement capability needs at least one sample"));
    }
    let mut rng = rng::stream(seed, streams::ENTANGLEMENT);
    let eta = vgg.eta();
    let qs = (0..samples)
        .map(|_| {
            let phi = dist.draw::<T, _>(vgg.group_count(), &mut rng);
            meyer_wallach(&embed(vgg, &phi, config)?.psi, eta)
        })
        .collect::<Result<Vec<f64>>>()?;
    let mean = qs.iter().sum::<f64>() / samples as f64;
    let var = qs.iter().map(|q| (q - mean).powi(2)).sum::<f64>() / samples as f64;
    Ok(EntanglementStats {
        mean,
        max: qs.iter().copied().fold(0.0, f64::max),
        std: var.sqrt(),
        samples: qs,
    })
}

/// Spectral concentration of the Gram matrix of `n` random embeddings.
pub fn expressibility<T: Scalar>(
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
    n: usize,
    dist: UniformBox,
    seed: u64,
) -> Result<f64> {
    if n < 4 {
        return Err(QgkError::precondition(format!("expressibility needs n >= 4, got {n}")));
    }
    let mut rng = rng::stream(seed, streams::EXPRESSIBILITY);
    let states = (0..n)
        .map(|_| embed(vgg, &dist.draw::<T, _>(vgg.group_count(), &mut rng), config))
        .collect::<Result<Vec<_>>>()?;
    Ok(spectral_concentration(&gram(&states)?)?.to_f64_lossy())
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodingMethod {
    Qgk,
    Amplitude,
    Angle,
}

pub fn parameter_count(eta: usize, method: EncodingMethod) -> u64 {
    match method {
        EncodingMethod::Qgk => (1u64 << (2 * eta)) - 1,
        EncodingMethod::Amplitude => (1u64 << (eta + 1)) - 1,
        EncodingMethod::Angle => eta as u64,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ReweightedSums {
    /// ‖W_{i,:}‖₂² per group.
    pub row_norms_sq: Vec<f64>,
    /// Σ|G_i|·‖W_i‖²
    pub mass: f64,
    /// (Σ√|G_i|·‖W_i‖)²
    pub balance: f64,
    /// Σ|G_i|²·‖W_i‖⁴
    pub anisotropy: f64,
    pub anisotropy_ratio: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundReport {
    pub sizes: Vec<usize>,
    /// Σ|G_i|
    pub mass: usize,
    /// (Σ√|G_i|)²
    pub balance: f64,
    /// Σ|G_i|²
    pub anisotropy: usize,
    /// Σ|G_i|² / Σ|G_i|
    pub anisotropy_ratio: f64,
    /// Σ|G_i| / (Σ√|G_i|)²
    pub lower_ratio: f64,
    /// (g²Γ, gΓ²) when every group has exactly Γ members.
    pub balanced_forms: Option<(usize, usize)>,
    pub reweighted: Option<ReweightedSums>,
}

pub fn bound_report<T: Scalar>(vgg: &VggSet<T>, params: Option<&ProjectionParams<T>>) -> Result<BoundReport> {
    let fw = frobenius_weights(vgg);
    let g = fw.sizes.len();
    let balanced_forms = fw
        .sizes
        .first()
        .filter(|&&s| fw.sizes.iter().all(|&t| t == s))
        .map(|&s| (g * g * s, g * s * s));
    let reweighted = match params {
        None => None,
        Some(p) => {
            if p.g != g {
                return Err(QgkError::dims("bound report parameters", g, p.g));
            }
            let norms: Vec<f64> = p.row_norms_sq().into_iter().map(|v| v.to_f64_lossy()).collect();
            let mass: f64 = fw.sizes.iter().zip(&norms).map(|(&s, &w)| s as f64 * w).sum();
            let root: f64 = fw.sizes.iter().zip(&norms).map(|(&s, &w)| (s as f64).sqrt() * w.sqrt()).sum();
            let anisotropy: f64 = fw.sizes.iter().zip(&norms).map(|(&s, &w)| (s as f64 * w).powi(2)).sum();
            Some(ReweightedSums {
                row_norms_sq: norms,
                mass,
                balance: root * root,
                anisotropy,
                anisotropy_ratio: if mass > 0.0 { anisotropy / mass } else { 0.0 },
            })
        }
    };
    Ok(BoundReport {
        mass: fw.total_mass,
        balance: fw.balance,
        anisotropy: fw.anisotropy,
        anisotropy_ratio: fw.anisotropy as f64 / fw.total_mass as f64,
        lower_ratio: fw.total_mass as f64 / fw.balance,
        balanced_forms,
        reweighted,
        sizes: fw.sizes,
    })
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricsConfig {
    pub entanglement_samples: usize,
    pub expressibility_samples: usize,
    pub distribution: UniformBox,
    pub seed: u64,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        Self {
            entanglement_samples: 200,
            expressibility_samples: 128,
            distribution: UniformBox::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct MetricsReport {
    pub eta: usize,
    pub scaling: String,
    pub width: f64,
    pub groups: usize,
    pub embedding: EmbeddingConfig,
    pub entanglement: EntanglementStats,
    pub expressibility: f64,
    pub parameter_count: u64,
    pub bounds: BoundReport,
    pub config: MetricsConfig,
}

impl MetricsReport {
    pub fn compute<T: Scalar>(
        vgg: &VggSet<T>,
        embedding: EmbeddingConfig,
        config: MetricsConfig,
        params: Option<&ProjectionParams<T>>,
    ) -> Result<Self> {
        let eta = vgg.eta();
        Ok(Self {
            eta,
            scaling: vgg.config.scaling.to_string(),
            width: vgg.config.width,
            groups: vgg.group_count(),
            embedding,
            entanglement: entanglement_capability(
                vgg,
                embedding,
                config.entanglement_samples,
                config.distribution,
                config.seed,
            )?,
            expressibility: expressibility(
                vgg,
                embedding,
                config.expressibility_samples,
                config.distribution,
                config.seed,
            )?,
            parameter_count: parameter_count(eta, EncodingMethod::Qgk),
            bounds: bound_report(vgg, params)?,
            config,
        })
    }

    /// Γ for this η, for comparison with the balanced forms.
    pub fn gamma_eta(&self) -> usize {
        gamma_eta(self.eta)
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        let mut kv = |k: &str, v: String| {
            let _ = writeln!(out, "{k}={v}");
        };
        kv("eta", self.eta.to_string());
        kv("scaling", self.scaling.clone());
        kv("width", self.width.to_string());
        kv("groups", self.groups.to_string());
        kv("mode", self.embedding.mode.to_string());
        kv("initial_state", self.embedding.initial_state.to_string());
        kv("entanglement_mean", self.entanglement.mean.to_string());
        kv("entanglement_max", self.entanglement.max.to_string());
        kv("entanglement_std", self.entanglement.std.to_string());
        kv("expressibility", self.expressibility.to_string());
        kv("parameter_count", self.parameter_count.to_string());
        kv("mass", self.bounds.mass.to_string());
        kv("balance", self.bounds.balance.to_string());
        kv("anisotropy", self.bounds.anisotropy.to_string());
        kv("anisotropy_ratio", self.bounds.anisotropy_ratio.to_string());
        if let Some(r) = &self.bounds.reweighted {
            kv("reweighted_mass", r.mass.to_string());
            kv("reweighted_balance", r.balance.to_string());
            kv("reweighted_anisotropy", r.anisotropy.to_string());
            kv("reweighted_anisotropy_ratio", r.anisotropy_ratio.to_string());
        }
        kv("entanglement_samples", self.config.entanglement_samples.to_string());
        kv("expressibility_samples", self.config.expressibility_samples.to_string());
        kv("distribution", self.config.distribution.to_string());
        kv("seed", self.config.seed.to_string());
        out
    }

    pub fn samples_csv(&self) -> String {
        let mut out = String::from("sample,q\n");
        for (i, q) in self.entanglement.samples.iter().enumerate() {
            let _ = writeln!(out, "{i},{q}");
        }
        out
    }

    pub const CSV_HEADER: &'static str =
        "eta,scaling,width,groups,entanglement_mean,entanglement_max,entanglement_std,expressibility,parameter_count,anisotropy_ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.eta,
            self.scaling,
            self.width,
            self.groups,
            self.entanglement.mean,
            self.entanglement.max,
            self.entanglement.std,
            self.expressibility,
            self.parameter_count,
            self.bounds.anisotropy_ratio
        )
    }
}

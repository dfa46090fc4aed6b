//! Affine feature map φ = W·x + b and its kernel-target-alignment trainer.

use std::fmt::Write as _;
use std::time::Instant;

use num_complex::Complex;
use num_traits::Zero;
use rand::Rng;

use crate::embedding::{embed, EmbeddingConfig, EmbeddingMode, ProductTape};
use crate::kernel::{gram_states, kta, target_kernel, Alignment, TargetKernel, TargetScheme};
use crate::rng::{self, streams};
use crate::vgg::VggSet;
use crate::{QgkError, Result, Scalar, StateVector};

/// W is g×d, stored row-major; b has length g.
#[derive(Clone, Debug, PartialEq)]
pub struct ProjectionParams<T> {
    pub g: usize,
    pub d: usize,
    pub w: Vec<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> ProjectionParams<T> {
    pub fn new(g: usize, d: usize, w: Vec<T>, b: Vec<T>) -> Result<Self> {
        if w.len() != g * d {
            return Err(QgkError::dims("projection weights", g * d, w.len()));
        }
        if b.len() != g {
            return Err(QgkError::dims("projection bias", g, b.len()));
        }
        if w.iter().chain(&b).any(|v| !v.is_finite()) {
            return Err(QgkError::NonFinite("projection parameters".into()));
        }
        Ok(Self { g, d, w, b })
    }

    pub fn zeros(g: usize, d: usize) -> Self {
        Self {
            g,
            d,
            w: vec![T::zero(); g * d],
            b: vec![T::zero(); g],
        }
    }

    #[inline]
    pub fn weight(&self, i: usize, k: usize) -> T {
        self.w[i * self.d + k]
    }

    /// γ = d/g.
    pub fn compression_factor(&self) -> f64 {
        self.d as f64 / self.g as f64
    }

    pub fn parameter_count(&self) -> usize {
        self.g * (self.d + 1)
    }

    /// ‖W_{i,:}‖₂² per group.
    pub fn row_norms_sq(&self) -> Vec<T> {
        self.w.chunks(self.d.max(1)).map(|r| r.iter().map(|&v| v * v).sum()).collect()
    }

    pub fn project_one(&self, x: &[T]) -> Result<Vec<T>> {
        if x.len() != self.d {
            return Err(QgkError::dims("projection input", self.d, x.len()));
        }
        Ok((0..self.g)
            .map(|i| {
                let row = &self.w[i * self.d..(i + 1) * self.d];
                row.iter().zip(x).map(|(&w, &v)| w * v).sum::<T>() + self.b[i]
            })
            .collect())
    }

    pub fn project(&self, x: &[Vec<T>]) -> Result<Vec<Vec<T>>> {
        x.iter().map(|row| self.project_one(row)).collect()
    }

    fn flat(&self) -> Vec<T> {
        self.w.iter().chain(&self.b).copied().collect()
    }

    fn set_flat(&mut self, v: &[T]) {
        let nw = self.w.len();
        self.w.copy_from_slice(&v[..nw]);
        self.b.copy_from_slice(&v[nw..]);
    }

    /// Text checkpoint: a `d g seed epoch` header, then W row by row, then b.
    pub fn to_checkpoint(&self, seed: u64, epoch: usize) -> String {
        let mut out = format!("{} {} {} {}\n", self.d, self.g, seed, epoch);
        let join = |vals: &[T]| vals.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(" ");
        for i in 0..self.g {
            out.push_str(&join(&self.w[i * self.d..(i + 1) * self.d]));
            out.push('\n');
        }
        out.push_str(&join(&self.b));
        out.push('\n');
        out
    }

    /// Returns the parameters with the stored seed and epoch.
    pub fn from_checkpoint(text: &str) -> Result<(Self, u64, usize)> {
        let mut lines = text.lines().enumerate();
        let (_, header) = lines.next().ok_or_else(|| parse(1, 0, "empty checkpoint"))?;
        let h: Vec<&str> = header.split_whitespace().collect();
        if h.len() != 4 {
            return Err(parse(1, h.len(), "header must be `d g seed epoch`"));
        }
        let field = |i: usize| h[i].parse::<u64>().map_err(|e| parse(1, i + 1, e.to_string()));
        let (d, g, seed, epoch) = (field(0)? as usize, field(1)? as usize, field(2)?, field(3)? as usize);
        let mut read_row = |expect: usize| -> Result<Vec<T>> {
            let (ln, line) = lines.next().ok_or_else(|| parse(0, 0, "truncated checkpoint"))?;
            let vals = line
                .split_whitespace()
                .enumerate()
                .map(|(c, s)| {
                    s.parse::<f64>()
                        .map(T::of)
                        .map_err(|e| parse(ln + 1, c + 1, e.to_string()))
                })
                .collect::<Result<Vec<T>>>()?;
            if vals.len() != expect {
                return Err(parse(ln + 1, vals.len(), format!("expected {expect} values")));
            }
            Ok(vals)
        };
        let mut w = Vec::with_capacity(g * d);
        for _ in 0..g {
            w.extend(read_row(d)?);
        }
        let b = read_row(g)?;
        Ok((Self::new(g, d, w, b)?, seed, epoch))
    }
}

fn parse(line: usize, column: usize, message: impl Into<String>) -> QgkError {
    QgkError::Parse {
        line,
        column,
        message: message.into(),
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum InitScheme {
    /// W ~ U(−√(6/(d+g)), √(6/(d+g))), b = 0.
    #[default]
    ScaledUniform,
    /// W = π·I, b = 0; needs d = g.
    IdentityLike,
}

impl InitScheme {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "scaled-uniform" | "uniform" => Ok(Self::ScaledUniform),
            "identity" | "identity-like" => Ok(Self::IdentityLike),
            _ => Err(QgkError::Config(format!("unknown init scheme '{s}'"))),
        }
    }
}

impl std::fmt::Display for InitScheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ScaledUniform => "scaled-uniform",
            Self::IdentityLike => "identity",
        })
    }
}

pub fn init_params<T: Scalar>(d: usize, g: usize, seed: u64, scheme: InitScheme) -> Result<ProjectionParams<T>> {
    match scheme {
        InitScheme::ScaledUniform => {
            let limit = (6.0 / (d + g) as f64).sqrt();
            let mut rng = rng::stream(seed, streams::INIT);
            let w = (0..g * d).map(|_| T::of(rng.gen_range(-limit..=limit))).collect();
            ProjectionParams::new(g, d, w, vec![T::zero(); g])
        }
        InitScheme::IdentityLike => {
            if d != g {
                return Err(QgkError::Config(format!("identity init needs d = g, got d={d}, g={g}")));
            }
            let mut p = ProjectionParams::zeros(g, d);
            for i in 0..g {
                p.w[i * d + i] = T::PI();
            }
            Ok(p)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GradientMode {
    Analytic,
    /// Central differences with the given step.
    FiniteDifference(f64),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum BatchPolicy {
    /// Full batch up to 512 samples, minibatches of 256 above.
    #[default]
    Auto,
    Full,
    Size(usize),
}

pub const AUTO_FULL_BATCH_LIMIT: usize = 512;
pub const AUTO_MINIBATCH: usize = 256;

impl BatchPolicy {
    pub fn batch_size(self, n: usize) -> usize {
        match self {
            Self::Auto if n <= AUTO_FULL_BATCH_LIMIT => n,
            Self::Auto => AUTO_MINIBATCH,
            Self::Full => n,
            Self::Size(s) => s.clamp(2, n.max(2)),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub batch: BatchPolicy,
    pub seed: u64,
    pub gradient_mode: GradientMode,
}

impl TrainConfig {
    /// 100 epochs of Adam at learning rate 10^{−(η−1)}.
    pub fn for_eta(eta: usize, seed: u64) -> Self {
        Self {
            epochs: 100,
            learning_rate: 10f64.powi(-(eta as i32 - 1)),
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            batch: BatchPolicy::Auto,
            seed,
            gradient_mode: GradientMode::Analytic,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(QgkError::Config("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(QgkError::Config(format!("learning rate must be positive, got {}", self.learning_rate)));
        }
        if let GradientMode::FiniteDifference(h) = self.gradient_mode {
            if !(h > 0.0) {
                return Err(QgkError::Config(format!("finite-difference step must be positive, got {h}")));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TraceRecord {
    pub epoch: usize,
    pub loss: f64,
    pub alignment: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainTrace {
    /// Alignment of the initial parameters on the full training set.
    pub initial_alignment: f64,
    pub records: Vec<TraceRecord>,
}

impl TrainTrace {
    pub fn final_alignment(&self) -> f64 {
        self.records.last().map_or(self.initial_alignment, |r| r.alignment)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,loss,alignment,seconds\n");
        for r in &self.records {
            let _ = writeln!(out, "{},{:e},{:e},{:.6}", r.epoch, r.loss, r.alignment, r.seconds);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct KtaGradient<T> {
    pub grad_w: Vec<T>,
    pub grad_b: Vec<T>,
    pub loss: T,
    pub alignment: T,
}

fn check_inputs<T: Scalar>(params: &ProjectionParams<T>, x: &[Vec<T>], labels: &[usize], vgg: &VggSet<T>) -> Result<()> {
    if x.len() != labels.len() {
        return Err(QgkError::dims("samples vs labels", x.len(), labels.len()));
    }
    if params.g != vgg.group_count() {
        return Err(QgkError::dims("projection width vs group count", vgg.group_count(), params.g));
    }
    Ok(())
}

fn target_for<T: Scalar>(labels: &[usize]) -> Result<TargetKernel<T>> {
    target_kernel(labels, TargetScheme::for_labels(labels))
}

/// Embeds every sample after projection.
pub fn embed_all<T: Scalar>(
    params: &ProjectionParams<T>,
    x: &[Vec<T>],
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
) -> Result<Vec<StateVector<T>>> {
    x.iter()
        .map(|row| Ok(embed(vgg, &params.project_one(row)?, config)?.psi))
        .collect()
}

/// Alignment of the projected-and-embedded kernel with the label target.
pub fn evaluate<T: Scalar>(
    params: &ProjectionParams<T>,
    x: &[Vec<T>],
    labels: &[usize],
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
) -> Result<Alignment<T>> {
    check_inputs(params, x, labels, vgg)?;
    let y = target_for(labels)?;
    let states = embed_all(params, x, vgg, config)?;
    let refs: Vec<_> = states.iter().collect();
    kta(&gram_states(&refs)?, &y)
}

/// Gradient of L = 1 − KTA with respect to every entry of W and b.
pub fn kta_gradient<T: Scalar>(
    params: &ProjectionParams<T>,
    x: &[Vec<T>],
    labels: &[usize],
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
    mode: GradientMode,
) -> Result<KtaGradient<T>> {
    check_inputs(params, x, labels, vgg)?;
    match mode {
        GradientMode::Analytic => analytic_gradient(params, x, labels, vgg, config),
        GradientMode::FiniteDifference(h) => fd_gradient(params, x, labels, vgg, config, T::of(h)),
    }
}

fn analytic_gradient<T: Scalar>(
    params: &ProjectionParams<T>,
    x: &[Vec<T>],
    labels: &[usize],
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
) -> Result<KtaGradient<T>> {
    if config.mode != EmbeddingMode::Product {
        return Err(QgkError::UnsupportedMode(
            "analytic KTA gradients need the product embedding".into(),
        ));
    }
    let y = target_for::<T>(labels)?;
    let n = x.len();
    let phis = params.project(x)?;
    let tapes = phis
        .iter()
        .map(|phi| ProductTape::record(vgg, phi, config.initial_state))
        .collect::<Result<Vec<_>>>()?;
    let states: Vec<&[Complex<T>]> = tapes.iter().map(|t| t.state()).collect();

    // o[a][b] = ⟨ψ_b|ψ_a⟩
    let mut o = vec![Complex::<T>::zero(); n * n];
    let mut k = vec![T::zero(); n * n];
    for a in 0..n {
        o[a * n + a] = Complex::new(T::one(), T::zero());
        k[a * n + a] = T::one();
        for b in a + 1..n {
            let ov: Complex<T> = states[b].iter().zip(states[a]).map(|(p, q)| p.conj() * q).sum();
            o[a * n + b] = ov;
            o[b * n + a] = ov.conj();
            let f = ov.norm_sqr();
            k[a * n + b] = f;
            k[b * n + a] = f;
        }
    }
    let kn = k.iter().map(|&v| v * v).sum::<T>().sqrt();
    let yn = y.frobenius();
    if kn == T::zero() || yn == T::zero() {
        return Err(QgkError::Degenerate("kernel or target has zero Frobenius norm".into()));
    }
    let ky: T = k.iter().zip(&y.values).map(|(&a, &b)| a * b).sum();
    let alignment = ky / (kn * yn);

    // dL/dK_ab for the symmetric off-diagonal entries
    let dl = |a: usize, b: usize| {
        let kab = k[a * n + b];
        -(y.get(a, b) / (kn * yn) - ky * kab / (kn * kn * kn * yn))
    };

    let two = T::of(2.0);
    let g = params.g;
    let mut grad_phi = vec![T::zero(); n * g];
    let dim = vgg.dim();
    for a in 0..n {
        // χ_a = Σ_b c_ab·⟨ψ_b|ψ_a⟩·ψ_b, c_ab = 2·dL/dK_ab (K_ab and K_ba move together)
        let mut chi = vec![Complex::<T>::zero(); dim];
        for b in 0..n {
            if b == a {
                continue;
            }
            let coeff = o[a * n + b] * (two * dl(a, b));
            for (c, &s) in chi.iter_mut().zip(states[b]) {
                *c += s * coeff;
            }
        }
        for (i, z) in tapes[a].vjp(&chi).into_iter().enumerate() {
            grad_phi[a * g + i] = two * z.re;
        }
    }

    let d = params.d;
    let mut grad_w = vec![T::zero(); g * d];
    let mut grad_b = vec![T::zero(); g];
    for a in 0..n {
        for i in 0..g {
            let ga = grad_phi[a * g + i];
            grad_b[i] += ga;
            for kk in 0..d {
                grad_w[i * d + kk] += ga * x[a][kk];
            }
        }
    }
    Ok(KtaGradient {
        grad_w,
        grad_b,
        loss: T::one() - alignment,
        alignment,
    })
}

fn fd_gradient<T: Scalar>(
    params: &ProjectionParams<T>,
    x: &[Vec<T>],
    labels: &[usize],
    vgg: &VggSet<T>,
    config: EmbeddingConfig,
    h: T,
) -> Result<KtaGradient<T>> {
    let base = evaluate(params, x, labels, vgg, config)?;
    let theta = params.flat();
    let mut probe = params.clone();
    let mut grad = Vec::with_capacity(theta.len());
    for j in 0..theta.len() {
        let mut t = theta.clone();
        t[j] = theta[j] + h;
        probe.set_flat(&t);
        let up = evaluate(&probe, x, labels, vgg, config)?.loss;
        t[j] = theta[j] - h;
        probe.set_flat(&t);
        let down = evaluate(&probe, x, labels, vgg, config)?.loss;
        grad.push((up - down) / (h + h));
    }
    let grad_b = grad.split_off(params.w.len());
    Ok(KtaGradient {
        grad_w: grad,
        grad_b,
        loss: base.loss,
        alignment: base.alignment,
    })
}

struct Adam<T> {
    m: Vec<T>,
    v: Vec<T>,
    t: i32,
}

impl<T: Scalar> Adam<T> {
    fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }

    fn step(&mut self, theta: &mut [T], grad: &[T], cfg: &TrainConfig) {
        self.t += 1;
        let (b1, b2) = (T::of(cfg.beta1), T::of(cfg.beta2));
        let lr = T::of(cfg.learning_rate);
        let eps = T::of(cfg.epsilon);
        let c1 = T::one() - b1.powi(self.t);
        let c2 = T::one() - b2.powi(self.t);
        for j in 0..theta.len() {
            self.m[j] = b1 * self.m[j] + (T::one() - b1) * grad[j];
            self.v[j] = b2 * self.v[j] + (T::one() - b2) * grad[j] * grad[j];
            let mh = self.m[j] / c1;
            let vh = self.v[j] / c2;
            theta[j] -= lr * mh / (vh.sqrt() + eps);
        }
    }
}

fn batches(n: usize, size: usize, rng: &mut rng::StreamRng) -> Vec<Vec<usize>> {
    let mut idx: Vec<usize> = (0..n).collect();
    if size >= n {
        return vec![idx];
    }
    rng::shuffle(&mut idx, rng);
    idx.chunks(size).map(<[usize]>::to_vec).collect()
}

/// Adam on L = 1 − KTA. Each trace record holds the full-set alignment after
/// that epoch's updates.
pub fn train<T: Scalar>(
    params0: &ProjectionParams<T>,
    x: &[Vec<T>],
    labels: &[usize],
    vgg: &VggSet<T>,
    embed_config: EmbeddingConfig,
    cfg: &TrainConfig,
) -> Result<(ProjectionParams<T>, TrainTrace)> {
    cfg.validate()?;
    check_inputs(params0, x, labels, vgg)?;
    let initial = evaluate(params0, x, labels, vgg, embed_config)?;
    let mut params = params0.clone();
    let mut theta = params.flat();
    let mut adam = Adam::new(theta.len());
    let mut rng = rng::stream(cfg.seed, streams::MINIBATCH);
    let size = cfg.batch.batch_size(x.len());
    let start = Instant::now();
    let mut trace = TrainTrace {
        initial_alignment: initial.alignment.to_f64_lossy(),
        records: Vec::with_capacity(cfg.epochs),
    };

    for epoch in 1..=cfg.epochs {
        for batch in batches(x.len(), size, &mut rng) {
            let bl: Vec<usize> = batch.iter().map(|&i| labels[i]).collect();
            if bl.iter().all(|&l| l == bl[0]) {
                // a single-class minibatch has no alignment signal
                continue;
            }
            let bx: Vec<Vec<T>> = batch.iter().map(|&i| x[i].clone()).collect();
            let grad = kta_gradient(&params, &bx, &bl, vgg, embed_config, cfg.gradient_mode)?;
            if !grad.loss.is_finite() {
                return Err(QgkError::Training {
                    epoch,
                    reason: format!("loss became {}", grad.loss),
                });
            }
            let flat: Vec<T> = grad.grad_w.iter().chain(&grad.grad_b).copied().collect();
            if let Some(j) = flat.iter().position(|v| !v.is_finite()) {
                return Err(QgkError::Training {
                    epoch,
                    reason: format!("non-finite gradient in parameter {j}"),
                });
            }
            adam.step(&mut theta, &flat, cfg);
            params.set_flat(&theta);
        }
        let eval = evaluate(&params, x, labels, vgg, embed_config)?;
        if !eval.loss.is_finite() {
            return Err(QgkError::Training {
                epoch,
                reason: format!("loss became {}", eval.loss),
            });
        }
        trace.records.push(TraceRecord {
            epoch,
            loss: eval.loss.to_f64_lossy(),
            alignment: eval.alignment.to_f64_lossy(),
            seconds: start.elapsed().as_secs_f64(),
        });
    }
    Ok((params, trace))
}

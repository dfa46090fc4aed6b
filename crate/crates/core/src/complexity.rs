//! Operation-count model of classical QGK execution and its break-even
//! point against an n²·d classical kernel.

use std::fmt::{self, Write as _};

use crate::vgg::{group_count, Scaling};
use crate::{QgkError, Result};

/// Abstract operation counts; no constant factors.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CostModel {
    pub eta: usize,
    pub n: usize,
    pub d: usize,
    pub g: usize,
    pub gamma: f64,
    /// 4^η
    pub generator: f64,
    /// n·γ·g²
    pub projection: f64,
    /// n·8^η
    pub embedding: f64,
    /// pairs·2^η
    pub gram: f64,
    /// pairs·d
    pub classical: f64,
    /// Kernel entries evaluated: n² for one kernel, n_tr² + n_te² for a split.
    pub pairs: f64,
}

impl CostModel {
    pub fn total(&self) -> f64 {
        self.generator + self.projection + self.embedding + self.gram
    }

    /// True when the QGK count is strictly below the classical count.
    pub fn qgk_cheaper(&self) -> bool {
        self.total() < self.classical
    }
}

fn check_args(eta: usize, d: usize, g: usize) -> Result<()> {
    if eta == 0 || d == 0 || g == 0 {
        return Err(QgkError::precondition(format!(
            "cost model needs positive eta, d, g (got {eta}, {d}, {g})"
        )));
    }
    Ok(())
}

fn build(eta: usize, n: usize, d: usize, g: usize, pairs: f64) -> CostModel {
    let gamma = d as f64 / g as f64;
    let dim = 2f64.powi(eta as i32);
    let nf = n as f64;
    CostModel {
        eta,
        n,
        d,
        g,
        gamma,
        generator: dim * dim,
        projection: nf * gamma * (g * g) as f64,
        embedding: nf * dim * dim * dim,
        gram: pairs * dim,
        classical: pairs * d as f64,
        pairs,
    }
}

/// C = 4^η + n·γ·g² + n·8^η + n²·2^η against n²·d.
pub fn qgk_cost(eta: usize, n: usize, d: usize, g: usize) -> Result<CostModel> {
    check_args(eta, d, g)?;
    Ok(build(eta, n, d, g, (n * n) as f64))
}

/// Cost of one train/test run: the train Gram and the test block are both
/// charged as square kernels over their own split.
pub fn qgk_cost_split(eta: usize, n: usize, d: usize, g: usize, test_fraction: f64) -> Result<CostModel> {
    check_args(eta, d, g)?;
    if !(0.0..1.0).contains(&test_fraction) {
        return Err(QgkError::Config(format!("test fraction must lie in [0, 1), got {test_fraction}")));
    }
    let n_test = (n as f64 * test_fraction).round();
    let n_train = n as f64 - n_test;
    Ok(build(eta, n, d, g, n_train * n_train + n_test * n_test))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Breakeven {
    /// QGK is cheaper for every n above this threshold.
    Finite(f64),
    /// A = 2^η − γg ≥ 0: the quadratic never turns negative.
    Never,
}

impl Breakeven {
    pub fn value(self) -> Option<f64> {
        match self {
            Self::Finite(v) => Some(v),
            Self::Never => None,
        }
    }
}

impl fmt::Display for Breakeven {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Finite(v) => write!(f, "{v}"),
            Self::Never => f.write_str("never"),
        }
    }
}

/// Root of n²(2^η − γg) + n(γg² + 8^η) + 4^η = 0 above which the QGK wins.
pub fn breakeven_n(eta: usize, gamma: f64, g: usize) -> Breakeven {
    let dim = 2f64.powi(eta as i32);
    let gf = g as f64;
    let a = dim - gamma * gf;
    let b = gamma * gf * gf + dim * dim * dim;
    let c = dim * dim;
    if a >= 0.0 {
        return Breakeven::Never;
    }
    // A < 0 and C > 0 make the discriminant positive
    let disc = b * b - 4.0 * a * c;
    Breakeven::Finite((-b - disc.sqrt()) / (2.0 * a))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EfficiencyBound {
    pub eta: usize,
    pub gamma: f64,
    pub g: usize,
    pub n_star: Breakeven,
    /// n*/d with d = γ·g.
    pub exact: Option<f64>,
    /// (9γ·4^η + 8^η) / (3γ(3γ−1)·4^η), from g ≈ 3·2^η.
    pub approx: f64,
}

/// εb_γ = n*/d for the exponential group count at this η.
pub fn efficiency_bound(eta: usize, gamma: f64) -> Result<EfficiencyBound> {
    if !(2..=8).contains(&eta) {
        return Err(QgkError::precondition(format!("efficiency bound tabulated for eta in 2..=8, got {eta}")));
    }
    if !(gamma > 0.0) {
        return Err(QgkError::precondition(format!("gamma must be positive, got {gamma}")));
    }
    let g = group_count(eta, Scaling::Exponential);
    let n_star = breakeven_n(eta, gamma, g);
    let d = gamma * g as f64;
    let four = 4f64.powi(eta as i32);
    let eight = 8f64.powi(eta as i32);
    Ok(EfficiencyBound {
        eta,
        gamma,
        g,
        n_star,
        exact: n_star.value().map(|n| n / d),
        approx: (9.0 * gamma * four + eight) / (3.0 * gamma * (3.0 * gamma - 1.0) * four),
    })
}

/// Smallest compression γ = 2√(4 + 2^η)/3 that pushes εb_γ below 1.
pub fn compression_bound(eta: usize) -> f64 {
    2.0 * (4.0 + 2f64.powi(eta as i32)).sqrt() / 3.0
}

/// γ column of a table: a fixed value or γ = η.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum GammaChoice {
    Fixed(f64),
    Eta,
}

impl GammaChoice {
    pub fn parse(s: &str) -> Result<Self> {
        if s == "eta" {
            return Ok(Self::Eta);
        }
        s.parse()
            .map(Self::Fixed)
            .map_err(|_| QgkError::Config(format!("gamma must be a number or 'eta', got '{s}'")))
    }

    pub fn resolve(self, eta: usize) -> f64 {
        match self {
            Self::Fixed(g) => g,
            Self::Eta => eta as f64,
        }
    }
}

impl fmt::Display for GammaChoice {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Fixed(g) => write!(f, "{g}"),
            Self::Eta => f.write_str("eta"),
        }
    }
}

pub const TABLE_HEADER: &str = "eta,gamma,g,n_star,eb_exact,eb_approx";

pub fn efficiency_table(etas: &[usize], gammas: &[GammaChoice]) -> Result<String> {
    let mut out = format!("{TABLE_HEADER}\n");
    for &gc in gammas {
        for &eta in etas {
            let e = efficiency_bound(eta, gc.resolve(eta))?;
            let exact = e.exact.map_or_else(|| "never".to_string(), |v| format!("{v:.6}"));
            let _ = writeln!(
                out,
                "{},{},{},{},{},{:.6}",
                eta,
                e.gamma,
                e.g,
                e.n_star.value().map_or_else(|| "never".to_string(), |v| format!("{v:.6}")),
                exact,
                e.approx
            );
        }
    }
    Ok(out)
}

/// One benchmark configuration from the experiments.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Benchmark {
    pub name: &'static str,
    pub eta: usize,
    pub d: usize,
    pub n: usize,
    pub g: usize,
}

pub const BENCHMARKS: [Benchmark; 5] = [
    Benchmark { name: "moons", eta: 2, d: 2, n: 200, g: 15 },
    Benchmark { name: "circles", eta: 2, d: 2, n: 200, g: 15 },
    Benchmark { name: "bank", eta: 2, d: 16, n: 200, g: 15 },
    Benchmark { name: "mnist", eta: 5, d: 784, n: 1000, g: 93 },
    Benchmark { name: "cifar10", eta: 5, d: 3072, n: 1000, g: 93 },
];

pub const BENCHMARK_TEST_FRACTION: f64 = 0.1;

pub fn benchmark_costs() -> Result<Vec<(Benchmark, CostModel)>> {
    BENCHMARKS
        .iter()
        .map(|b| Ok((*b, qgk_cost_split(b.eta, b.n, b.d, b.g, BENCHMARK_TEST_FRACTION)?)))
        .collect()
}

pub fn benchmark_table() -> Result<String> {
    let mut out = String::from("benchmark,eta,d,n,g,qgk,classical\n");
    for (b, c) in benchmark_costs()? {
        let _ = writeln!(out, "{},{},{},{},{},{:.3e},{:.3e}", b.name, b.eta, b.d, b.n, b.g, c.total(), c.classical);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn breakeven_examples() {
        // A = −11, B = 289, C = 16
        let n = breakeven_n(2, 1.0, 15).value().unwrap();
        let expect = (-289.0 - (289.0f64 * 289.0 + 4.0 * 11.0 * 16.0).sqrt()) / -22.0;
        assert!((n - expect).abs() < 1e-12);
        assert!((n - 26.33).abs() < 0.01);
        assert!(breakeven_n(1, 1.0, 3).value().is_some());
        assert_eq!(breakeven_n(3, 0.1, 21), Breakeven::Never);
    }

    #[test]
    fn zero_samples_zero_out_n_terms() {
        let c = qgk_cost(3, 0, 21, 21).unwrap();
        assert_eq!((c.projection, c.embedding, c.gram, c.classical), (0.0, 0.0, 0.0, 0.0));
        assert_eq!(c.total(), 64.0);
        assert!(qgk_cost(0, 1, 1, 1).is_err());
    }

    #[test]
    fn cost_sign_flips_at_the_root() {
        for eta in 2..=8 {
            let g = group_count(eta, Scaling::Exponential);
            let root = breakeven_n(eta, 1.0, g).value().unwrap();
            let below = root.floor() as usize;
            let above = below + 1;
            assert!(!qgk_cost(eta, below, g, g).unwrap().qgk_cheaper(), "eta {eta}");
            assert!(qgk_cost(eta, above, g, g).unwrap().qgk_cheaper(), "eta {eta}");
        }
    }

    #[test]
    fn compression_bound_values_and_self_consistency() {
        assert!((compression_bound(5) - 4.0).abs() < 1e-12);
        assert!((compression_bound(2) - 2.0 * 8f64.sqrt() / 3.0).abs() < 1e-12);
        for eta in 2..=8 {
            assert!(compression_bound(eta + 1) >= compression_bound(eta));
            let e = efficiency_bound(eta, compression_bound(eta)).unwrap();
            assert!(e.exact.unwrap() < 1.0, "eta {eta}: {:?}", e.exact);
        }
    }

    #[test]
    fn approximation_closed_form() {
        let e = efficiency_bound(5, 1.0).unwrap();
        assert!((e.approx - (1.5 + 32.0 / 6.0)).abs() < 1e-12);
        assert!(efficiency_bound(1, 1.0).is_err());
    }

    #[test]
    fn table_shape() {
        let t = efficiency_table(&[2, 3], &[GammaChoice::Fixed(1.0), GammaChoice::Eta]).unwrap();
        assert_eq!(t.lines().count(), 5);
        assert!(t.starts_with(TABLE_HEADER));
        assert_eq!(GammaChoice::parse("eta").unwrap(), GammaChoice::Eta);
        assert!(GammaChoice::parse("x").is_err());
    }
}

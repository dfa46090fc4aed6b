use num_complex::Complex;
use proptest::prelude::*;

use qgk::complexity::{breakeven_n, qgk_cost};
use qgk::data::{make_circles, make_moons, split};
use qgk::embedding::unitarity_check;
use qgk::generators::build_generator_set;
use qgk::kernel::{classical_kernel, gram_states, kta, structure_report, target_kernel, ClassicalKernel, TargetKernel, TargetScheme};
use qgk::metrics::meyer_wallach;
use qgk::projection::{kta_gradient, GradientMode, ProjectionParams};
use qgk::svm::{fit, SvmConfig};
use qgk::vgg::{build_vgg_set, group_count};
use qgk::{EmbeddingConfig, EmbeddingMode, GroupingConfig, InitialState, KernelMatrix, Scaling, StateVector, VggSet};

fn state(dim: usize) -> impl Strategy<Value = StateVector<f64>> {
    prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), dim)
        .prop_filter("non-zero", |v| v.iter().map(|(a, b)| a * a + b * b).sum::<f64>() > 1e-3)
        .prop_map(|v| StateVector::normalized(v.into_iter().map(|(a, b)| Complex::new(a, b)).collect()).unwrap())
}

fn states() -> impl Strategy<Value = (usize, Vec<StateVector<f64>>)> {
    (1usize..=3, 1usize..=10).prop_flat_map(|(eta, n)| (Just(eta), prop::collection::vec(state(1 << eta), n)))
}

fn vgg(eta: usize) -> VggSet<f64> {
    build_vgg_set(&build_generator_set(eta).unwrap(), GroupingConfig::new(eta, Scaling::Exponential, eta as f64)).unwrap()
}

fn points(max_n: usize) -> impl Strategy<Value = (Vec<Vec<f64>>, Vec<usize>)> {
    (4usize..=max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 2), n),
            prop::collection::vec(0usize..2, n),
        )
            .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
    })
}

fn dual_objective(k: &KernelMatrix<f64>, y: &[f64], a: &[f64]) -> f64 {
    let n = y.len();
    let mut quad = 0.0;
    for i in 0..n {
        for j in 0..n {
            quad += a[i] * a[j] * y[i] * y[j] * k.get(i, j);
        }
    }
    a.iter().sum::<f64>() - 0.5 * quad
}

/// Projection onto {0 ≤ α ≤ c, yᵀα = 0} by bisection on the multiplier.
fn project(v: &[f64], y: &[f64], c: f64) -> Vec<f64> {
    let at = |lam: f64| -> Vec<f64> { v.iter().zip(y).map(|(&vi, &yi)| (vi - lam * yi).clamp(0.0, c)).collect() };
    let h = |lam: f64| at(lam).iter().zip(y).map(|(a, yi)| a * yi).sum::<f64>();
    let (mut lo, mut hi) = (-1e3, 1e3);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        // h is non-increasing in the multiplier
        if h(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    at(0.5 * (lo + hi))
}

/// Dual optimum by projected gradient ascent.
fn qp_oracle(k: &KernelMatrix<f64>, y: &[f64], c: f64) -> f64 {
    let n = y.len();
    let step = 1.0 / n as f64;
    let mut a = vec![0.0; n];
    for _ in 0..20_000 {
        let grad: Vec<f64> = (0..n)
            .map(|i| 1.0 - y[i] * (0..n).map(|j| y[j] * a[j] * k.get(i, j)).sum::<f64>())
            .collect();
        let v: Vec<f64> = a.iter().zip(&grad).map(|(x, g)| x + step * g).collect();
        a = project(&v, y, c);
    }
    dual_objective(k, y, &a)
}

fn rel_err(a: &[f64], f: &[f64]) -> f64 {
    let scale = f.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let err = a.iter().zip(f).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    err / scale.max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gram_is_symmetric_unit_diagonal_psd_and_matches_naive((_, s) in states()) {
        let refs: Vec<_> = s.iter().collect();
        let k = gram_states(&refs).unwrap();
        let r = structure_report(&k).unwrap();
        prop_assert!(r.symmetry_deviation < 1e-12);
        prop_assert!(r.diagonal_deviation < 1e-12);
        prop_assert!(r.min_eigenvalue > -1e-10);
        for i in 0..s.len() {
            for j in 0..s.len() {
                let naive = s[i].inner(&s[j]).norm_sqr();
                prop_assert!((k.get(i, j) - naive).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn kta_is_scale_invariant_and_self_aligned((_, s) in states(), c in 1e-3f64..1e3) {
        prop_assume!(s.len() >= 2);
        let k = gram_states(&s.iter().collect::<Vec<_>>()).unwrap();
        let n = s.len();
        let own = TargetKernel { n, values: k.values.clone() };
        prop_assert!((kta(&k, &own).unwrap().alignment - 1.0).abs() < 1e-12);
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y = target_kernel::<f64>(&labels, TargetScheme::Binary).unwrap();
        let a = kta(&k, &y).unwrap().alignment;
        let b = kta(&k.scaled(c), &y).unwrap().alignment;
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!(a.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn meyer_wallach_lies_in_unit_interval((eta, s) in states()) {
        for psi in &s {
            let q = meyer_wallach(psi, eta).unwrap();
            prop_assert!((0.0..=1.0).contains(&q));
        }
    }

    #[test]
    fn embedding_is_unitary(eta in 1usize..=3, sum in any::<bool>(), seed in prop::collection::vec(-6.0f64..6.0, 63)) {
        let v = vgg(eta);
        let phi = &seed[..v.group_count()];
        let mode = if sum { EmbeddingMode::SumExp } else { EmbeddingMode::Product };
        let cfg = EmbeddingConfig::new(mode, InitialState::UniformSuperposition);
        prop_assert!(unitarity_check(&v, phi, cfg).unwrap() < 1e-9);
    }

    #[test]
    fn dataset_generation_and_split_are_deterministic(n in 8usize..80, seed in 0u64..1000, moons in any::<bool>()) {
        let make = |s| if moons { make_moons::<f64>(n, 0.2, s).unwrap() } else { make_circles::<f64>(n, 0.2, 0.5, s).unwrap() };
        let (a, b) = (make(seed), make(seed));
        prop_assert_eq!(&a.x, &b.x);
        prop_assert_eq!(&a.y, &b.y);
        prop_assert_ne!(&a.x, &make(seed + 1).x);
        let (ta, ea) = split(&a, 0.25, seed, true).unwrap();
        let (tb, eb) = split(&b, 0.25, seed, true).unwrap();
        prop_assert_eq!(&ta.x, &tb.x);
        prop_assert_eq!(&ea.y, &eb.y);
        prop_assert_eq!(ta.y.len() + ea.y.len(), n);
    }

    #[test]
    fn cost_comparison_flips_at_breakeven(eta in 2usize..=8, gamma_num in 1usize..=8) {
        let g = group_count(eta, Scaling::Exponential);
        let d = gamma_num * g;
        let root = breakeven_n(eta, gamma_num as f64, g).value();
        prop_assume!(root.is_some());
        let root = root.unwrap();
        let above = root.floor() as usize + 1;
        prop_assert!(qgk_cost(eta, above, d, g).unwrap().qgk_cheaper());
        prop_assert!(qgk_cost(eta, above + 1000, d, g).unwrap().qgk_cheaper());
        if root - root.floor() > 1e-9 {
            prop_assert!(!qgk_cost(eta, root.floor() as usize, d, g).unwrap().qgk_cheaper());
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn smo_is_feasible_monotone_and_optimal((x, labels) in points(20), c in 0.1f64..10.0, gamma in 0.1f64..2.0) {
        let k = classical_kernel(&x, ClassicalKernel::Rbf { gamma }).unwrap();
        let cfg = SvmConfig { c, tol: 1e-6, max_passes: None, record_objective: true };
        let model = fit(&k, &labels, &cfg).unwrap();
        let m = &model.machines[0];
        prop_assert!(m.converged);
        let y: Vec<f64> = labels.iter().map(|&l| if l == model.classes[0] { 1.0 } else { -1.0 }).collect();
        let a = m.alphas(labels.len());
        for &ai in &a {
            prop_assert!((-1e-12..=c + 1e-12).contains(&ai));
        }
        prop_assert!(a.iter().zip(&y).map(|(a, y)| a * y).sum::<f64>().abs() < 1e-9);
        for w in m.objective.windows(2) {
            prop_assert!(w[1] >= w[0] - 1e-12);
        }
        let smo = dual_objective(&k, &y, &a);
        let oracle = qp_oracle(&k, &y, c);
        prop_assert!((smo - oracle).abs() <= 1e-4 * oracle.abs().max(1.0), "smo {} oracle {}", smo, oracle);
    }

    #[test]
    fn analytic_kta_gradient_matches_finite_differences(
        eta in 2usize..=3,
        (x, labels) in points(8),
        w in prop::collection::vec(-1.0f64..1.0, 21 * 2),
        b in prop::collection::vec(-1.0f64..1.0, 21),
    ) {
        let v = vgg(eta);
        let g = v.group_count();
        let p = ProjectionParams::new(g, 2, w[..2 * g].to_vec(), b[..g].to_vec()).unwrap();
        let cfg = EmbeddingConfig::default();
        let an = kta_gradient(&p, &x, &labels, &v, cfg, GradientMode::Analytic).unwrap();
        let fd = kta_gradient(&p, &x, &labels, &v, cfg, GradientMode::FiniteDifference(1e-5)).unwrap();
        let flat = |gr: &qgk::projection::KtaGradient<f64>| gr.grad_w.iter().chain(&gr.grad_b).copied().collect::<Vec<_>>();
        let e = rel_err(&flat(&an), &flat(&fd));
        prop_assert!(e < 1e-4, "relative error {}", e);
    }
}

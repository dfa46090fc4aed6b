//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits nonzero if any criterion fails.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use num_complex::Complex;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use qgk::complexity::{benchmark_costs, efficiency_bound};
use qgk::embedding::{embed, embed_with_gradient, unitarity_check};
use qgk::experiment::{run_experiment, ExperimentConfig, RunResult};
use qgk::generators::{build_generator_set, verify_basis, PauliString};
use qgk::kernel::{gram_states, kta, structure_report, target_kernel, TargetKernel, TargetScheme};
use qgk::metrics::{entanglement_capability, expressibility, meyer_wallach, UniformBox};
use qgk::vgg::{build_vgg_set, frobenius_weights, gamma_eta, grouping_rank, GroupingConfig, Scaling};
use qgk::{EmbeddingConfig, EmbeddingMode, InitialState, StateVector, VggSet};

// Tolerances and thresholds.
const GEN_STRUCTURE_TOL: f64 = 1e-12;
const GEN_ORTHO_TOL: f64 = 1e-10;
const GROUP_WEIGHT_TOL: f64 = 1e-9;
const UNITARITY_TOL: f64 = 1e-9;
const GRADIENT_REL_TOL: f64 = 1e-4;
const FD_STEP: f64 = 1e-5;
const KERNEL_STRUCTURE_TOL: f64 = 1e-10;
const PSD_PER_SAMPLE_TOL: f64 = 1e-8;
const NAIVE_GRAM_TOL: f64 = 1e-12;
const KTA_TOL: f64 = 1e-12;
const EB_TOL: f64 = 0.01;
const COST_REL_TOL: f64 = 0.01;
const MOONS_MIN_ACCURACY: f64 = 0.90;
const MOONS_MIN_ALIGNMENT: f64 = 0.70;
const CIRCLES_MIN_GAIN_OVER_LINEAR: f64 = 0.10;
const MW_TOL: f64 = 1e-10;
const SINGLE_QUBIT_MAX_Q: f64 = 1e-10;

const EB_GAMMA_ONE: [f64; 7] = [1.76, 3.49, 3.75, 7.30, 11.75, 23.26, 43.75];
const EB_GAMMA_ETA: [f64; 7] = [0.66, 0.53, 0.38, 0.38, 0.38, 0.46, 0.59];
// (benchmark, qgk, classical)
const COST_ROWS: [(&str, f64, f64); 5] = [
    ("moons", 1.50e5, 6.56e4),
    ("circles", 1.50e5, 6.56e4),
    ("bank", 1.92e5, 5.25e5),
    ("mnist", 1.32e8, 6.43e8),
    ("cifar10", 3.45e8, 2.52e9),
];

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn vgg(eta: usize, scaling: Scaling, width: f64) -> VggSet<f64> {
    build_vgg_set(&build_generator_set(eta).unwrap(), GroupingConfig::new(eta, scaling, width)).unwrap()
}

fn random_phi(g: usize, r: &mut ChaCha8Rng) -> Vec<f64> {
    (0..g).map(|_| r.gen_range(-std::f64::consts::PI..std::f64::consts::PI)).collect()
}

fn criterion_1() -> Outcome {
    let mut notes = Vec::new();
    let mut pass = true;
    for eta in 1..=4 {
        let gs = build_generator_set::<f64>(eta).unwrap();
        let r = verify_basis(&gs);
        let ok = r.count == (1 << (2 * eta)) - 1
            && r.max_hermiticity_deviation < GEN_STRUCTURE_TOL
            && r.max_trace_deviation < GEN_STRUCTURE_TOL
            && r.max_orthogonality_deviation < GEN_ORTHO_TOL;
        pass &= ok;
        notes.push(format!("eta={eta} n={} ortho={:.1e}", r.count, r.max_orthogonality_deviation));
    }
    let gs = build_generator_set::<f64>(1).unwrap();
    let paulis = ["X", "Y", "Z"].map(|l| PauliString::parse(l).unwrap().to_dense::<f64>());
    let exact = gs.items.iter().zip(&paulis).all(|(g, p)| {
        let d = g.to_dense();
        (0..2).all(|r| (0..2).all(|c| d[(r, c)] == p[(r, c)]))
    });
    pass &= exact;
    notes.push(format!("eta=1 equals X,Y,Z exactly: {exact}"));
    outcome(pass, notes.join("; "))
}

fn criterion_2() -> Outcome {
    let mut pass = true;
    let mut notes = Vec::new();
    for (eta, g, gamma) in [(2, 15, 1), (3, 21, 3), (4, 51, 5), (5, 93, 11)] {
        let v = vgg(eta, Scaling::Exponential, eta as f64);
        let ok = v.group_count() == g && gamma_eta(eta) == gamma && v.group_sizes().iter().all(|&s| s == gamma);
        pass &= ok;
        notes.push(format!("({eta},{},{})", v.group_count(), gamma_eta(eta)));
    }
    let mut configs = 0;
    let mut worst_weight = 0.0f64;
    for eta in 1..=5 {
        let gs = build_generator_set::<f64>(eta).unwrap();
        for scaling in [Scaling::Linear, Scaling::Quadratic, Scaling::Exponential, Scaling::All] {
            for w in [0.0, 1.0, eta as f64] {
                let v = build_vgg_set(&gs, GroupingConfig::new(eta, scaling, w)).unwrap();
                let mut perm = v.permutation.clone();
                perm.sort_unstable();
                let bijection = perm.iter().enumerate().all(|(i, &p)| i == p);
                let fw = frobenius_weights(&v);
                let weight = fw
                    .per_group
                    .iter()
                    .zip(&fw.sizes)
                    .fold(0.0f64, |m, (&f, &s)| m.max((f - 2.0 * s as f64).abs()));
                worst_weight = worst_weight.max(weight);
                let ok = v.is_partition() && bijection && grouping_rank(&v) == v.group_count() && weight < GROUP_WEIGHT_TOL;
                if !ok {
                    notes.push(format!("failed eta={eta} {scaling} w={w}"));
                }
                pass &= ok;
                configs += 1;
            }
        }
    }
    notes.push(format!("{configs} (eta, scaling, w) configs, max |‖H‖²−2|G|| = {worst_weight:.1e}"));
    outcome(pass, notes.join("; "))
}

fn relative_error(a: &[Complex<f64>], f: &[Complex<f64>]) -> f64 {
    let scale = f.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let err = a.iter().zip(f).fold(0.0f64, |m, (x, y)| m.max((x - y).norm()));
    err / scale.max(f64::MIN_POSITIVE)
}

fn criterion_3() -> Outcome {
    let mut r = rng(3);
    let sets: Vec<VggSet<f64>> = (1..=4).map(|eta| vgg(eta, Scaling::Exponential, eta as f64)).collect();
    let mut worst_unitarity = 0.0f64;
    for _ in 0..100 {
        let v = &sets[r.gen_range(0..4)];
        let mode = if r.gen_bool(0.5) {
            EmbeddingMode::Product
        } else {
            EmbeddingMode::SumExp
        };
        let phi = random_phi(v.group_count(), &mut r);
        let cfg = EmbeddingConfig::new(mode, InitialState::UniformSuperposition);
        worst_unitarity = worst_unitarity.max(unitarity_check(v, &phi, cfg).unwrap());
    }
    let mut worst_grad = 0.0f64;
    for _ in 0..20 {
        let v = &sets[r.gen_range(1..3)];
        let phi = random_phi(v.group_count(), &mut r);
        let cfg = EmbeddingConfig::default();
        let (_, tangents) = embed_with_gradient(v, &phi, cfg).unwrap();
        for (i, t) in tangents.iter().enumerate() {
            let mut up = phi.clone();
            up[i] += FD_STEP;
            let mut down = phi.clone();
            down[i] -= FD_STEP;
            let pu = embed(v, &up, cfg).unwrap().psi;
            let pd = embed(v, &down, cfg).unwrap().psi;
            let fd: Vec<Complex<f64>> = pu
                .amplitudes()
                .iter()
                .zip(pd.amplitudes())
                .map(|(a, b)| (a - b) / (2.0 * FD_STEP))
                .collect();
            worst_grad = worst_grad.max(relative_error(t.amplitudes(), &fd));
        }
    }
    outcome(
        worst_unitarity < UNITARITY_TOL && worst_grad < GRADIENT_REL_TOL,
        format!("max unitarity deviation {worst_unitarity:.1e} over 100; max gradient rel. error {worst_grad:.1e} over 20"),
    )
}

fn criterion_4() -> Outcome {
    let mut r = rng(4);
    let sets: Vec<VggSet<f64>> = (1..=4).map(|eta| vgg(eta, Scaling::Exponential, eta as f64)).collect();
    let mut pass = true;
    let (mut worst_naive, mut worst_kta) = (0.0f64, 0.0f64);
    let mut worst_eig = f64::INFINITY;
    for _ in 0..50 {
        let v = &sets[r.gen_range(0..4)];
        let n = r.gen_range(2..=24);
        let states: Vec<StateVector<f64>> = (0..n)
            .map(|_| embed(v, &random_phi(v.group_count(), &mut r), EmbeddingConfig::default()).unwrap().psi)
            .collect();
        let refs: Vec<_> = states.iter().collect();
        let k = gram_states(&refs).unwrap();
        let s = structure_report(&k).unwrap();
        pass &= s.symmetry_deviation < KERNEL_STRUCTURE_TOL
            && s.diagonal_deviation < KERNEL_STRUCTURE_TOL
            && s.min_entry >= -KERNEL_STRUCTURE_TOL
            && s.max_entry <= 1.0 + KERNEL_STRUCTURE_TOL
            && s.min_eigenvalue >= -PSD_PER_SAMPLE_TOL * n as f64;
        worst_eig = worst_eig.min(s.min_eigenvalue);
        for i in 0..n {
            for j in 0..n {
                worst_naive = worst_naive.max((k.get(i, j) - states[i].fidelity(&states[j])).abs());
            }
        }
        let self_target = TargetKernel {
            n,
            values: k.values.clone(),
        };
        worst_kta = worst_kta.max((kta(&k, &self_target).unwrap().alignment - 1.0).abs());
        let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
        let y = target_kernel::<f64>(&labels, TargetScheme::Binary).unwrap();
        let c = r.gen_range(0.1..10.0);
        let a = kta(&k, &y).unwrap().alignment;
        let b = kta(&k.scaled(c), &y).unwrap().alignment;
        worst_kta = worst_kta.max((a - b).abs());
    }
    pass &= worst_naive < NAIVE_GRAM_TOL && worst_kta < KTA_TOL;
    outcome(
        pass,
        format!("50 batches; min eigenvalue {worst_eig:.1e}; batched vs naive {worst_naive:.1e}; kta self/scale {worst_kta:.1e}"),
    )
}

fn criterion_5() -> Outcome {
    let mut pass = true;
    let mut worst_eb = 0.0f64;
    for (i, eta) in (2..=8).enumerate() {
        let one = efficiency_bound(eta, 1.0).unwrap().exact.unwrap();
        let eta_g = efficiency_bound(eta, eta as f64).unwrap().exact.unwrap();
        worst_eb = worst_eb.max((one - EB_GAMMA_ONE[i]).abs()).max((eta_g - EB_GAMMA_ETA[i]).abs());
    }
    pass &= worst_eb <= EB_TOL;
    let mut worst_cost = 0.0f64;
    for ((b, c), (name, q, cl)) in benchmark_costs().unwrap().into_iter().zip(COST_ROWS) {
        pass &= b.name == name;
        worst_cost = worst_cost
            .max((c.total() - q).abs() / q)
            .max((c.classical - cl).abs() / cl);
    }
    pass &= worst_cost <= COST_REL_TOL;
    outcome(
        pass,
        format!("max eb deviation {worst_eb:.4}; max cost-row relative deviation {:.2}%", 100.0 * worst_cost),
    )
}

fn config(pairs: &[(&str, &str)]) -> ExperimentConfig {
    let kv: BTreeMap<String, String> = pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    ExperimentConfig::from_key_values(&kv).unwrap()
}

fn run(pairs: &[(&str, &str)]) -> RunResult {
    run_experiment(&config(pairs)).unwrap()
}

/// Alignment of the kernel that is 1 within a class and 0 across classes,
/// the best a non-negative kernel can reach against ±1 targets.
fn ideal_alignment(labels: &[usize]) -> f64 {
    let n = labels.len();
    let values = (0..n * n)
        .map(|i| if labels[i / n] == labels[i % n] { 1.0 } else { 0.0 })
        .collect();
    let k = qgk::KernelMatrix::from_values(n, n, values).unwrap();
    let y = target_kernel::<f64>(labels, TargetScheme::Binary).unwrap();
    kta(&k, &y).unwrap().alignment
}

fn criterion_6(moons: &RunResult) -> Outcome {
    let labels: Vec<usize> = (0..180).map(|i| i % 2).collect();
    outcome(
        moons.mean_accuracy >= MOONS_MIN_ACCURACY && moons.mean_alignment >= MOONS_MIN_ALIGNMENT,
        format!(
            "mean accuracy {:.3} ± {:.3} (need ≥ {MOONS_MIN_ACCURACY}); mean final alignment {:.3} ± {:.3} (need ≥ {MOONS_MIN_ALIGNMENT}; ceiling for a non-negative kernel on balanced ±1 targets {:.4})",
            moons.mean_accuracy,
            moons.ci_accuracy,
            moons.mean_alignment,
            moons.ci_alignment,
            ideal_alignment(&labels)
        ),
    )
}

fn criterion_7(trained: &RunResult, fixed: &RunResult, linear: &RunResult) -> Outcome {
    outcome(
        trained.mean_accuracy - linear.mean_accuracy >= CIRCLES_MIN_GAIN_OVER_LINEAR
            && trained.mean_accuracy > fixed.mean_accuracy,
        format!(
            "trained {:.3} ± {:.3}, static {:.3} ± {:.3}, linear {:.3} ± {:.3}",
            trained.mean_accuracy,
            trained.ci_accuracy,
            fixed.mean_accuracy,
            fixed.ci_accuracy,
            linear.mean_accuracy,
            linear.ci_accuracy
        ),
    )
}

fn criterion_8(moons: &RunResult, circles: &RunResult) -> Outcome {
    let improved = |r: &RunResult| {
        r.seeds
            .iter()
            .filter(|s| s.initial_alignment.is_some_and(|a| s.alignment > a))
            .count()
    };
    let (m, c) = (improved(moons), improved(circles));
    outcome(
        m == moons.seeds.len() && c == circles.seeds.len() && m == 8 && c == 8,
        format!("alignment improved in {m}/8 moons seeds and {c}/8 circles seeds"),
    )
}

fn criterion_9() -> Outcome {
    let mut pass = true;
    let amps = |v: &[f64]| StateVector::normalized(v.iter().map(|&a| Complex::new(a, 0.0)).collect()).unwrap();
    let product = StateVector::<f64>::uniform(16);
    let q_product = meyer_wallach(&product, 4).unwrap();
    let q_basis = meyer_wallach(&StateVector::<f64>::basis(8, 5), 3).unwrap();
    let q_bell = meyer_wallach(&amps(&[1.0, 0.0, 0.0, 1.0]), 2).unwrap();
    let q_ghz = meyer_wallach(&amps(&[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0]), 3).unwrap();
    pass &= q_product.abs() < MW_TOL && q_basis.abs() < MW_TOL;
    pass &= (q_bell - 1.0).abs() < MW_TOL && (q_ghz - 1.0).abs() < MW_TOL;

    let mut e_range = (f64::INFINITY, f64::NEG_INFINITY);
    for eta in 1..=3 {
        for n in [8, 32] {
            let v = vgg(eta, Scaling::Exponential, eta as f64);
            let e = expressibility(&v, EmbeddingConfig::default(), n, UniformBox::default(), 9).unwrap();
            pass &= (0.0..=(n as f64).ln()).contains(&e);
            e_range = (e_range.0.min(e), e_range.1.max(e));
        }
    }
    let single = entanglement_capability(
        &vgg(1, Scaling::Exponential, 1.0),
        EmbeddingConfig::default(),
        200,
        UniformBox::default(),
        9,
    )
    .unwrap();
    pass &= single.max < SINGLE_QUBIT_MAX_Q;
    outcome(
        pass,
        format!(
            "Q product {q_product:.1e}, Bell {q_bell:.12}, GHZ {q_ghz:.12}; E(K) in [{:.3}, {:.3}]; eta=1 max Q {:.1e}",
            e_range.0, e_range.1, single.max
        ),
    )
}

/// 500 handwritten digits of classes 0, 1 and 2 (8×8 pixels, d = 64).
const DIGITS: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/tests/data/digits012.csv");

fn criterion_10() -> Outcome {
    let cfg = config(&[("dataset", "csv"), ("csv_path", DIGITS), ("label_column", "class"), ("eta", "3")]);
    let r = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e) => return outcome(false, format!("pipeline failed: {e}")),
    };
    let majority = r.seeds.iter().map(|s| s.majority_rate).sum::<f64>() / r.seeds.len() as f64;
    let linear = run(&[("dataset", "csv"), ("csv_path", DIGITS), ("label_column", "class"), ("kernel", "linear")]);
    outcome(
        r.mean_accuracy > majority,
        format!(
            "500 samples, d=64, g=21 (gamma={:.2}), 3 classes, 8 seeds; trained accuracy {:.3} ± {:.3} vs majority rate {majority:.3} (linear kernel {:.3})",
            64.0 / 21.0,
            r.mean_accuracy,
            r.ci_accuracy,
            linear.mean_accuracy
        ),
    )
}

fn report(id: usize, name: &str, limit: Option<Duration>, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = f();
    let elapsed = start.elapsed();
    let in_time = limit.is_none_or(|l| elapsed <= l);
    let pass = o.pass && in_time;
    let budget = limit.map_or_else(String::new, |l| format!(" / limit {:.0}s", l.as_secs_f64()));
    println!(
        "criterion {id:>2} {name}: {} ({}; {:.2}s{budget})",
        if pass { "PASS" } else { "FAIL" },
        o.detail,
        elapsed.as_secs_f64()
    );
    pass
}

fn main() {
    let mut results = Vec::new();
    let secs = Duration::from_secs;
    results.push(report(1, "generator algebra", Some(secs(10)), criterion_1));
    results.push(report(2, "grouping tables", Some(secs(60)), criterion_2));
    results.push(report(3, "embedding correctness", Some(secs(120)), criterion_3));
    results.push(report(4, "kernel properties", None, criterion_4));
    results.push(report(5, "complexity tables", Some(secs(1)), criterion_5));

    let start = Instant::now();
    let moons = run(&[("dataset", "moons")]);
    let moons_time = start.elapsed();
    results.push(report(6, "moons end-to-end", None, || {
        let mut o = criterion_6(&moons);
        o.pass &= moons_time <= secs(600);
        o.detail.push_str(&format!("; run {:.2}s / limit 600s", moons_time.as_secs_f64()));
        o
    }));

    let start = Instant::now();
    let circles = run(&[("dataset", "circles")]);
    let circles_static = run(&[("dataset", "circles"), ("train", "false")]);
    let circles_linear = run(&[("dataset", "circles"), ("kernel", "linear")]);
    let circles_time = start.elapsed();
    results.push(report(7, "circles end-to-end", None, || {
        let mut o = criterion_7(&circles, &circles_static, &circles_linear);
        // the static and linear baselines are charged to the same budget
        o.pass &= circles_time <= secs(600);
        o.detail.push_str(&format!("; runs {:.2}s / limit 600s", circles_time.as_secs_f64()));
        o
    }));
    results.push(report(8, "training improves alignment", None, || criterion_8(&moons, &circles)));
    results.push(report(9, "metrics sanity", None, criterion_9));
    results.push(report(10, "compressed csv pipeline", None, criterion_10));

    let passed = results.iter().filter(|&&p| p).count();
    println!("acceptance: {passed}/{} criteria passed", results.len());
    if passed != results.len() {
        std::process::exit(1);
    }
}

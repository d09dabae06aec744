//! Acceptance suite. Each test checks one criterion and prints a single
//! `criterion N: PASS|FAIL ...` line (run with `--nocapture` to see them).

use std::path::PathBuf;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::time::Instant;

use hardlabel_core::imageio::{read_image, trace_path};
use hardlabel_core::oracle::{load_mlp, LinearOracle, MlpOracle};
use hardlabel_core::tensor::{linf_dist, sparse_mask};
use hardlabel_core::{
    correlation, estimate_boundary, perturbation_norm, probe_gradient, run_attack, run_boundary_attack,
    run_with_restarts, ssim, AdversarialPredicate, AttackConfig, AttackResult, BoundaryAttackConfig, BudgetedOracle,
    Classifier, GradientSign, ImageTensor, Label, ProbeParams, RandomSource, Result, Shape,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn report(n: u32, pass: bool, detail: &str) {
    println!("criterion {n}: {} {detail}", if pass { "PASS" } else { "FAIL" });
}

fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../core/fixtures")
}

struct Fixture {
    oracle: MlpOracle,
    source: ImageTensor,
    reference: ImageTensor,
}

fn fixture() -> Fixture {
    let dir = fixtures();
    Fixture {
        oracle: load_mlp(dir.join("pattern_mlp.json")).unwrap(),
        source: read_image(dir.join("source.pgm"), None).unwrap(),
        reference: read_image(dir.join("reference.pgm"), None).unwrap(),
    }
}

/// Counts inner classifier calls.
struct Counting<'a> {
    inner: &'a dyn Classifier,
    calls: AtomicUsize,
}

impl<'a> Counting<'a> {
    fn new(inner: &'a dyn Classifier) -> Self {
        Self {
            inner,
            calls: AtomicUsize::new(0),
        }
    }
}

impl Classifier for Counting<'_> {
    fn classify(&self, image: &ImageTensor) -> Result<Label> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.classify(image)
    }
}

/// Monotone trace and exact budget accounting; returns a description of the
/// first violation.
fn contract_violation(r: &AttackResult, calls: usize, q_max: usize) -> Option<String> {
    if r.queries_used != calls {
        return Some(format!("queries_used {} but {calls} oracle calls", r.queries_used));
    }
    if r.queries_used > q_max {
        return Some(format!("queries_used {} exceeds {q_max}", r.queries_used));
    }
    r.trace
        .windows(2)
        .find(|p| p[1].best_l2_sq > p[0].best_l2_sq || p[1].query_index <= p[0].query_index)
        .map(|p| format!("trace not monotone at query {}", p[1].query_index))
}

fn red(source: &ImageTensor, reference: &ImageTensor, oracle: &dyn Classifier, config: &AttackConfig) -> AttackResult {
    let counting = Counting::new(oracle);
    let r = run_attack(source, reference, &counting, config).unwrap();
    if let Some(v) = contract_violation(&r, counting.calls.load(Ordering::SeqCst), config.max_queries) {
        panic!("attack contract broken: {v}");
    }
    r
}

fn walk(
    source: &ImageTensor,
    reference: &ImageTensor,
    oracle: &dyn Classifier,
    config: &BoundaryAttackConfig,
) -> AttackResult {
    let counting = Counting::new(oracle);
    let r = run_boundary_attack(source, reference, &counting, config).unwrap();
    if let Some(v) = contract_violation(&r, counting.calls.load(Ordering::SeqCst), config.max_queries) {
        panic!("baseline contract broken: {v}");
    }
    r
}

fn unit(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    let w: Vec<f64> = (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    w.into_iter().map(|x| x / norm).collect()
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[test]
fn criterion_1_boundary_search_exactness() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pred = AdversarialPredicate::untargeted(Label(0));
    let mut failures = Vec::new();
    let mut trials = 0;
    while trials < 500 {
        let dim = rng.random_range(4..=64);
        let w = unit(&mut rng, dim);
        let a: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let b: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        let (sa, sb) = (dot(&w, &a), dot(&w, &b));
        if (sa - sb).abs() < 1e-6 {
            continue;
        }
        trials += 1;
        let bias = -(sa + rng.random_range(0.05..0.95) * (sb - sa));
        let (lo, hi) = if sa < sb { (a, b) } else { (b, a) };
        let shape = Shape::new(1, dim, 1);
        let oracle = LinearOracle::new(shape, w, bias, Label(0), Label(1)).unwrap();
        let source = ImageTensor::new(shape, 1.0, lo).unwrap();
        let reference = ImageTensor::new(shape, 1.0, hi).unwrap();
        let delta = [0.1, 0.01, 0.001][trials % 3];
        let mut budget = BudgetedOracle::new(&oracle, 1000);
        let s = estimate_boundary(&source, &reference, Label(1), &pred, delta, &mut budget).unwrap();
        let gap0 = linf_dist(&source, &reference).unwrap();
        let bound = if gap0 > delta {
            (gap0 / delta).log2().ceil() as usize + 1
        } else {
            0
        };
        let ok = oracle.classify(&s.image).unwrap() == Label(1)
            && s.bracket_gap <= delta
            && s.queries_spent <= bound
            && s.queries_spent == budget.queries_used();
        if !ok {
            failures.push(trials);
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = failures.is_empty() && secs < 5.0;
    report(
        1,
        pass,
        &format!("{}/500 trials exact, {secs:.2}s (limit 5s)", 500 - failures.len()),
    );
    assert!(pass, "failing trials: {failures:?}");
}

/// 16-dimensional plane at distance `d` from a mid-grey source whose
/// orthogonal projection stays inside the pixel box; the reference is a
/// uniformly random adversarial image.
fn plane_instance(rng: &mut ChaCha8Rng, d: f64) -> (LinearOracle, ImageTensor, ImageTensor) {
    let dim = 16;
    let (w, s) = loop {
        let w = unit(rng, dim);
        let s: Vec<f64> = (0..dim).map(|_| rng.random_range(0.4..0.6)).collect();
        if s.iter().zip(&w).all(|(si, wi)| (0.02..0.98).contains(&(si + d * wi))) {
            break (w, s);
        }
    };
    let bias = -d - dot(&w, &s);
    let reference = loop {
        let r: Vec<f64> = (0..dim).map(|_| rng.random()).collect();
        if dot(&w, &r) + bias > 0.0 {
            break r;
        }
    };
    let shape = Shape::new(4, 4, 1);
    (
        LinearOracle::new(shape, w, bias, Label(0), Label(1)).unwrap(),
        ImageTensor::new(shape, 1.0, s).unwrap(),
        ImageTensor::new(shape, 1.0, reference).unwrap(),
    )
}

#[test]
fn criterion_2_converges_to_projection() {
    let start = Instant::now();
    let d = 0.5;
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut within = 0;
    let mut ratios = Vec::new();
    for seed in 0..20 {
        let (oracle, source, reference) = plane_instance(&mut rng, d);
        // closed-form optimum: squared distance from the source to the plane
        let optimum = oracle.score(&source).powi(2) / dot(oracle.weights(), oracle.weights());
        assert!((optimum - d * d).abs() < 1e-9);
        let config = AttackConfig {
            delta_min: 0.01,
            n_pixels: 4,
            theta: 0.0196,
            max_jump: 1.0,
            max_queries: 1000,
            seed,
            ..AttackConfig::default()
        };
        let r = red(&source, &reference, &oracle, &config);
        let ratio = r.best_l2_sq() / optimum;
        ratios.push(ratio);
        if ratio <= 1.1 {
            within += 1;
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = within >= 18 && secs < 10.0;
    let median = {
        let mut s = ratios.clone();
        s.sort_by(f64::total_cmp);
        s[s.len() / 2]
    };
    report(
        2,
        pass,
        &format!("{within}/20 seeds within 10% of D^2 (need 18), median ratio {median:.3}, {secs:.2}s (limit 10s)"),
    );
    assert!(pass, "ratios to optimum: {ratios:?}");
}

#[test]
fn criterion_3_beats_the_baseline_on_the_fixture() {
    let f = fixture();
    let (mut norm_wins, mut ssim_wins, mut cc_wins) = (0, 0, 0);
    let mut rows = Vec::new();
    for seed in 0..5 {
        let a = red(
            &f.source,
            &f.reference,
            &f.oracle,
            &AttackConfig {
                seed,
                ..AttackConfig::default()
            },
        );
        let b = walk(
            &f.source,
            &f.reference,
            &f.oracle,
            &BoundaryAttackConfig {
                seed,
                ..BoundaryAttackConfig::default()
            },
        );
        let (ma, mb) = (a.metrics, b.metrics);
        norm_wins += usize::from(ma.perturbation_norm < mb.perturbation_norm);
        ssim_wins += usize::from(ma.ssim.unwrap() > mb.ssim.unwrap());
        cc_wins += usize::from(ma.correlation.unwrap() > mb.correlation.unwrap());
        rows.push(format!(
            "seed {seed}: norm {:.3} vs {:.3}, ssim {:.3} vs {:.3}, cc {:.3} vs {:.3}",
            ma.perturbation_norm,
            mb.perturbation_norm,
            ma.ssim.unwrap(),
            mb.ssim.unwrap(),
            ma.correlation.unwrap(),
            mb.correlation.unwrap()
        ));
    }
    let pass = norm_wins >= 4 && ssim_wins >= 4 && cc_wins >= 4;
    report(
        3,
        pass,
        &format!("lower norm {norm_wins}/5, higher ssim {ssim_wins}/5, higher cc {cc_wins}/5 (need 4 each)"),
    );
    for row in &rows {
        println!("    {row}");
    }
    assert!(pass);
}

#[test]
fn criterion_5_monotone_and_budget_exact() {
    let f = fixture();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut runs = 0;
    let mut violations = Vec::new();
    let mut check = |r: AttackResult, calls: usize, q: usize| {
        runs += 1;
        if let Some(v) = contract_violation(&r, calls, q) {
            violations.push(v);
        }
    };
    for q in [1, 2, 3, 10, 137, 1000] {
        for seed in 0..3 {
            let counting = Counting::new(&f.oracle);
            let config = AttackConfig {
                seed,
                max_queries: q,
                ..AttackConfig::default()
            };
            let r = run_attack(&f.source, &f.reference, &counting, &config).unwrap();
            check(r, counting.calls.load(Ordering::SeqCst), q);

            let counting = Counting::new(&f.oracle);
            let config = BoundaryAttackConfig {
                seed,
                max_queries: q,
                ..BoundaryAttackConfig::default()
            };
            let r = run_boundary_attack(&f.source, &f.reference, &counting, &config).unwrap();
            check(r, counting.calls.load(Ordering::SeqCst), q);

            let counting = Counting::new(&f.oracle);
            let config = AttackConfig {
                seed,
                max_queries: q.max(4),
                restarts: 3,
                ..AttackConfig::default()
            };
            let r = run_with_restarts(&f.source, &[f.reference.clone(), f.source.clone()], &counting, &config).unwrap();
            check(r, counting.calls.load(Ordering::SeqCst), q.max(4));
        }
    }
    for seed in 0..10 {
        let (oracle, source, reference) = plane_instance(&mut rng, 0.3);
        let q = rng.random_range(1..600);
        let counting = Counting::new(&oracle);
        let config = AttackConfig {
            seed,
            n_pixels: 4,
            max_queries: q,
            ..AttackConfig::default()
        };
        let r = run_attack(&source, &reference, &counting, &config).unwrap();
        check(r, counting.calls.load(Ordering::SeqCst), q);
    }
    let pass = violations.is_empty();
    report(
        5,
        pass,
        &format!("{} of {runs} runs monotone and budget-exact", runs - violations.len()),
    );
    assert!(pass, "{violations:?}");
}

#[test]
fn criterion_6_gradient_sign_fidelity() {
    let pred = AdversarialPredicate::untargeted(Label(0));

    // 2-pixel oracle: label 1 iff x0 >= 0.5; every probe that only touches x1
    // must come out negative
    let axis = LinearOracle::new(Shape::new(1, 2, 1), vec![1.0, 0.0], -0.5, Label(0), Label(1)).unwrap();
    let source = ImageTensor::from_vec(vec![0.0, 0.0], 1.0).unwrap();
    let current = hardlabel_core::BoundarySample {
        image: ImageTensor::from_vec(vec![0.5, 0.5], 1.0).unwrap(),
        label: Label(1),
        bracket_gap: 0.0,
        queries_spent: 0,
    };
    let params = ProbeParams {
        n_pixels: 1,
        theta: 0.1,
        delta_min: 0.01,
    };
    let mut irrelevant = 0;
    let mut deterministic = true;
    for seed in 0..100 {
        let rng = RandomSource::new(seed);
        let mask = sparse_mask(Shape::new(1, 2, 1), 1.0, 1, &mut rng.clone()).unwrap();
        if mask.pixels()[1] == 0.0 {
            continue;
        }
        irrelevant += 1;
        let mut budget = BudgetedOracle::new(&axis, 100);
        let p = probe_gradient(&current, &source, &pred, params, &mut budget, &mut rng.clone()).unwrap();
        deterministic &= p.sign == GradientSign::Negative;
    }

    // random 16-dim plane: compare against the exact change of the
    // on-boundary distance along the same mask
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (oracle, source, reference) = plane_instance(&mut rng, 0.5);
    let w = oracle.weights().to_vec();
    let s = source.pixels().to_vec();
    let score_s = oracle.score(&source);
    // exact projection of y onto the plane along the ray from the source
    let project = |y: &[f64]| -> Vec<f64> {
        let t = -score_s / (dot(&w, y) + oracle.bias() - score_s);
        s.iter().zip(y).map(|(si, yi)| si + t * (yi - si)).collect()
    };
    let on_plane_dist = |y: &[f64]| -> f64 { project(y).iter().zip(&s).map(|(a, b)| (a - b).powi(2)).sum() };
    let mut budget = BudgetedOracle::new(&oracle, 100);
    let start = estimate_boundary(&source, &reference, Label(1), &pred, 0.01, &mut budget).unwrap();
    let params = ProbeParams {
        n_pixels: 4,
        theta: 0.0196,
        delta_min: 0.01,
    };
    // zero-sign probes carry no direction and are redrawn, as the driver does
    let (mut agree, mut total, mut zeros) = (0, 0, 0);
    let mut seed = 0;
    while total < 200 {
        let rng = RandomSource::new(seed);
        seed += 1;
        let mask = sparse_mask(source.shape(), 1.0, 4, &mut rng.clone()).unwrap();
        let x = start.image.pixels();
        let moved: Vec<f64> = x
            .iter()
            .zip(mask.pixels())
            .map(|(xi, m)| (xi + params.theta * m).clamp(0.0, 1.0))
            .collect();
        let exact = on_plane_dist(x) - on_plane_dist(&moved);
        let mut budget = BudgetedOracle::new(&oracle, 10_000);
        let p = probe_gradient(&start, &source, &pred, params, &mut budget, &mut rng.clone()).unwrap();
        if p.sign == GradientSign::Zero {
            zeros += 1;
            continue;
        }
        total += 1;
        if p.sign.as_f64() * exact > 0.0 {
            agree += 1;
        }
    }
    let rate = agree as f64 / total as f64;
    let pass = deterministic && irrelevant > 0 && rate > 0.6;
    report(
        6,
        pass,
        &format!(
            "irrelevant-axis probes negative: {deterministic} ({irrelevant} probes); sign agreement {agree}/{total} = {:.1}% (need > 60%), {zeros} zero-sign probes redrawn",
            100.0 * rate
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_metric_identities() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut failures = Vec::new();
    for i in 0..1000 {
        let h = rng.random_range(11..20);
        let w = rng.random_range(11..20);
        let c = if rng.random_bool(0.3) { 3 } else { 1 };
        let range = if rng.random_bool(0.5) { 1.0 } else { 255.0 };
        let shape = Shape::new(h, w, c);
        let mut image = || {
            ImageTensor::new(
                shape,
                range,
                (0..shape.len()).map(|_| rng.random_range(0.0..range)).collect(),
            )
            .unwrap()
        };
        let (x, y) = (image(), image());
        let checks = [
            (ssim(&x, &x).unwrap() - 1.0).abs() <= 1e-9,
            (correlation(&x, &x).unwrap() - 1.0).abs() <= 1e-12,
            perturbation_norm(&x, &x).unwrap() == 0.0,
            (ssim(&x, &y).unwrap() - ssim(&y, &x).unwrap()).abs() <= 1e-12,
            (-1.0..=1.0).contains(&ssim(&x, &y).unwrap()),
            (-1.0..=1.0).contains(&correlation(&x, &y).unwrap()),
            perturbation_norm(&x, &y).unwrap() >= 0.0,
        ];
        if checks.iter().any(|ok| !ok) {
            failures.push(i);
        }
    }
    let pass = failures.is_empty();
    report(
        7,
        pass,
        &format!("{}/1000 random pairs satisfy every identity", 1000 - failures.len()),
    );
    assert!(pass, "failing pairs: {failures:?}");
}

#[test]
fn criterion_8_cli_runs_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let f = fixtures();
    let report_path = dir.path().join("report.json");
    let args: Vec<String> = vec![
        "hardlabel".into(),
        "attack".into(),
        "--source".into(),
        f.join("source.pgm").display().to_string(),
        "--reference".into(),
        f.join("reference.pgm").display().to_string(),
        "--oracle".into(),
        format!("mlp:{}", f.join("pattern_mlp.json").display()),
        "--max-queries".into(),
        "400".into(),
        "--seed".into(),
        "17".into(),
        "--out".into(),
        dir.path().join("adv.pgm").display().to_string(),
        "--report".into(),
        report_path.display().to_string(),
    ];
    let mut outputs = Vec::new();
    for _ in 0..2 {
        let code = hardlabel_cli::run(args.clone());
        let rep = std::fs::read(&report_path).unwrap();
        let trace = std::fs::read(trace_path(&report_path)).unwrap();
        outputs.push((code, rep, trace));
    }
    let pass = outputs[0] == outputs[1] && outputs[0].0 == 0 && !outputs[0].2.is_empty();
    report(
        8,
        pass,
        &format!(
            "report {} bytes, trace {} bytes, identical: {}",
            outputs[0].1.len(),
            outputs[0].2.len(),
            outputs[0] == outputs[1]
        ),
    );
    assert!(pass);
}

/// Best distance recorded at or before `query`.
fn best_at(r: &AttackResult, query: usize) -> f64 {
    r.trace
        .iter()
        .take_while(|p| p.query_index <= query)
        .last()
        .map_or(f64::INFINITY, |p| p.best_l2_sq)
}

#[test]
fn criterion_9_hyperparameter_trends() {
    let f = fixture();
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let final_norm = |delta_min: f64| -> f64 {
        let norms: Vec<f64> = (0..10)
            .map(|seed| {
                red(
                    &f.source,
                    &f.reference,
                    &f.oracle,
                    &AttackConfig {
                        seed,
                        delta_min,
                        ..AttackConfig::default()
                    },
                )
                .best_l2_sq()
            })
            .collect();
        mean(&norms)
    };
    let early = |n_pixels: usize| -> f64 {
        let norms: Vec<f64> = (0..10)
            .map(|seed| {
                let r = red(
                    &f.source,
                    &f.reference,
                    &f.oracle,
                    &AttackConfig {
                        seed,
                        n_pixels,
                        ..AttackConfig::default()
                    },
                );
                best_at(&r, 200)
            })
            .collect();
        mean(&norms)
    };
    let (coarse, fine) = (final_norm(0.1), final_norm(0.01));
    let (few, many) = (early(2), early(8));
    let pass = coarse >= fine && many <= few;
    report(
        9,
        pass,
        &format!(
            "mean final norm delta_min 0.1: {coarse:.4} vs 0.01: {fine:.4}; mean norm at query 200 n=2: {few:.4} vs n=8: {many:.4}"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_crossover_is_documented() {
    // the long-run crossover is anecdotal and lives in scripts/crossover.sh
    let script = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scripts/crossover.sh");
    let pass = script.is_file();
    report(
        4,
        pass,
        "not asserted in CI; scripts/crossover.sh reproduces the observation reported in README.md",
    );
    assert!(pass);
}

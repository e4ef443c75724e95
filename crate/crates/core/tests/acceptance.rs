//! End-to-end acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Set `CRAFTCHAIN_QUICK=1` to skip the two full pipeline runs (6 and 7).

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use craftchain::agents::{
    evaluate_treechop, larmi_loss, larmi_loss_grad, soft_target, AgentKind, ChopTreeNet, SqilBatch,
    SqilProbe, SqilTransition,
};
use craftchain::codec::{distance, Codec};
use craftchain::demos::{generate_demos, Dataset, DemoConfig};
use craftchain::discretize::{default_lambda, dp_cluster_fit, kmeans_fit};
use craftchain::env::{EnvConfig, Pov};
use craftchain::harness::{
    compute_rates, load_budget, load_policy, run_pipeline, train_agent, train_scheduler_stage,
    ReportFormat, RunConfig, Workspace,
};
use craftchain::nn::{check_gradients, LayerSpec, NetProbe, Network, NetworkSpec};
use craftchain::scheduler::{compute_thresholds, label_episode, train_scheduler, SchedulerConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

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

fn config(name: &str) -> RunConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name);
    RunConfig::load(&path).unwrap()
}

fn quick() -> bool {
    std::env::var("CRAFTCHAIN_QUICK").is_ok_and(|v| v == "1")
}

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

// Published per-rung counts over 200 episodes.
const TABLE2: [u64; 13] = [72, 11, 15, 3, 6, 20, 9, 2, 47, 14, 0, 0, 0];
const TABLE2_RATES: [f64; 5] = [0.640, 0.460, 0.360, 0.315, 0.070];

fn table2_matches(counts: &[u64; 13]) -> (bool, String) {
    let r = compute_rates(counts, 200).unwrap();
    let rates_ok = r
        .rates
        .iter()
        .zip(TABLE2_RATES)
        .all(|(a, b)| close(*a, b, 0.0005));
    let mean_ok = close(r.mean_score, 39.55, 0.005);
    let rates: Vec<String> = r
        .rates
        .iter()
        .map(|x| format!("{:.1}", 100.0 * x))
        .collect();
    (
        rates_ok && mean_ok,
        format!("rates [{}]% mean {:.3}", rates.join(", "), r.mean_score),
    )
}

fn criterion_1() -> Outcome {
    let (faithful, fd) = table2_matches(&TABLE2);
    let mut fixed = TABLE2;
    fixed[2] += 1;
    let (reconciled, rd) = table2_matches(&fixed);
    outcome(
        faithful,
        format!(
            "published counts (sum {}): {fd}; with Plank = 16 (sum 200): {rd} [{}]",
            TABLE2.iter().sum::<u64>(),
            if reconciled { "matches" } else { "mismatch" }
        ),
    )
}

fn criterion_2() -> Outcome {
    #[rustfmt::skip]
    let cases: &[(&[f64], usize, f64, f64)] = &[
        (&[0.5, 0.2, 0.1], 0, 0.2, -0.1),
        (&[0.1, 0.5], 0, 0.1, 0.5),
        (&[0.1, 0.5], 1, 0.1, -0.3),
        (&[1.0, 1.0], 0, 0.0, 0.0),
        (&[1.0, 1.0], 1, 0.5, 0.5),
        (&[0.0, 0.0, 0.0], 2, 0.8, 0.8),
        (&[3.0, -1.0, 2.0], 0, 1.0, 0.0),
        (&[3.0, -1.0, 2.0], 1, 1.0, 5.0),
        (&[3.0, -1.0, 2.0], 2, 1.0, 2.0),
        (&[-2.0, -3.0], 0, 0.25, -0.75),
        (&[-2.0, -3.0], 1, 0.25, 1.25),
        (&[0.5, 0.5, 0.5, 0.5], 3, 0.1, 0.1),
        (&[10.0, 0.0, 0.0, 0.0], 0, 2.0, -8.0),
        (&[10.0, 0.0, 0.0, 0.0], 2, 2.0, 12.0),
        (&[1.0, 2.0, 3.0, 4.0, 5.0], 4, 0.5, -0.5),
        (&[1.0, 2.0, 3.0, 4.0, 5.0], 0, 0.5, 4.5),
        (&[5.0, 4.0, 3.0, 2.0, 1.0], 2, 0.0, 2.0),
        (&[0.25, -0.75], 0, 0.0, -1.0),
        (&[2.0, 2.0, 1.0], 0, 0.3, 0.3),
        (&[2.0, 2.0, 1.0], 2, 0.3, 1.3),
        (&[-1.0, -1.0, -1.0], 1, 1.5, 1.5),
        (&[0.0, 100.0], 1, 10.0, -90.0),
    ];
    let mut bad = Vec::new();
    for (i, (q, a, t, want)) in cases.iter().enumerate() {
        let j = larmi_loss(q, *a, *t).unwrap();
        if !close(j, *want, 1e-12) {
            bad.push(format!("case {i}: {j} != {want}"));
        }
    }
    // Tied rivals resolve to the lowest index.
    let (_, g) = larmi_loss_grad(&[2.0, 2.0, 1.0], 2, 0.3).unwrap();
    if g != [1.0, 0.0, -1.0] {
        bad.push(format!("tie gradient {g:?}"));
    }
    if larmi_loss(&[1.0, 2.0], 2, 0.1).is_ok() || larmi_loss(&[1.0], 0, 0.1).is_ok() {
        bad.push("invalid rows accepted".into());
    }
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let n = rng.random_range(2..=60);
        let q: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
        let a = rng.random_range(0..n);
        let t = rng.random_range(0.0..2.0);
        let c = rng.random_range(-100.0..100.0);
        let shifted: Vec<f64> = q.iter().map(|v| v + c).collect();
        let d = (larmi_loss(&q, a, t).unwrap() - larmi_loss(&shifted, a, t).unwrap()).abs();
        worst = worst.max(d);
    }
    if worst > 1e-12 {
        bad.push(format!("shift deviation {worst:e}"));
    }
    outcome(
        bad.is_empty(),
        format!(
            "{} hand cases, 1000 shift cases (max deviation {worst:.1e}){}",
            cases.len(),
            if bad.is_empty() {
                String::new()
            } else {
                format!("; failures: {}", bad.join("; "))
            }
        ),
    )
}

fn layer_suite() -> Vec<(&'static str, NetworkSpec)> {
    let conv = |o, k, s, p| LayerSpec::Conv2d {
        out_channels: o,
        kernel: k,
        stride: s,
        padding: p,
    };
    let deconv = |o, k, s, op| LayerSpec::ConvTranspose2d {
        out_channels: o,
        kernel: k,
        stride: s,
        output_padding: op,
    };
    vec![
        (
            "dense",
            NetworkSpec::new(vec![6], vec![LayerSpec::Dense { width: 4 }]),
        ),
        (
            "dense-relu-dense",
            NetworkSpec::new(
                vec![6],
                vec![
                    LayerSpec::Dense { width: 5 },
                    LayerSpec::Relu,
                    LayerSpec::Dense { width: 3 },
                ],
            ),
        ),
        (
            "dueling",
            NetworkSpec::new(vec![5], vec![LayerSpec::Dueling { n_actions: 4 }]),
        ),
        (
            "conv",
            NetworkSpec::new(vec![3, 6, 6], vec![conv(2, 3, 1, 0)]),
        ),
        (
            "conv-padded-strided",
            NetworkSpec::new(
                vec![2, 7, 7],
                vec![
                    conv(3, 3, 2, 1),
                    LayerSpec::Relu,
                    LayerSpec::Flatten,
                    LayerSpec::Dense { width: 5 },
                ],
            ),
        ),
        (
            "conv-transpose",
            NetworkSpec::new(vec![2, 3, 3], vec![deconv(3, 3, 2, 1)]),
        ),
        (
            "reshape-deconv-relu",
            NetworkSpec::new(
                vec![12],
                vec![
                    LayerSpec::Reshape {
                        shape: vec![3, 2, 2],
                    },
                    deconv(2, 2, 1, 0),
                    LayerSpec::Relu,
                    LayerSpec::Flatten,
                ],
            ),
        ),
    ]
}

fn pov(rng: &mut ChaCha8Rng, p: usize) -> Arc<Pov> {
    Arc::new(Pov::from_raw(p, (0..p * p * 3).map(|_| rng.random()).collect()).unwrap())
}

fn criterion_3() -> Outcome {
    let start = Instant::now();
    let mut worst = 0.0f64;
    let mut failures = Vec::new();
    for (name, spec) in layer_suite() {
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let net = Network::new(spec.clone(), seed).unwrap();
            let mut probe = NetProbe::new(net, 3, true, &mut rng);
            let r = check_gradients(&mut probe, 1e-5, None, &mut rng).unwrap();
            worst = worst.max(r.max_rel_error);
            if r.max_rel_error >= 1e-4 || r.checked == 0 {
                failures.push(format!("{name}/{seed}"));
            }
        }
    }
    let mut composite = 0.0f64;
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let ts: Vec<SqilTransition> = (0..4)
            .map(|i| SqilTransition {
                obs: pov(&mut rng, 24),
                action: i % 60,
                reward: (i % 2) as f64,
                next: pov(&mut rng, 24),
                done: i == 3,
            })
            .collect();
        let refs: Vec<&SqilTransition> = ts.iter().collect();
        let batch = SqilBatch::from_transitions(&refs).unwrap();
        let net = ChopTreeNet::new(24, 60, seed).unwrap();
        let mut probe = SqilProbe::near_current(net, batch, 0.1, &mut rng).unwrap();
        let r = check_gradients(&mut probe, 1e-5, Some(200), &mut rng).unwrap();
        composite = composite.max(r.max_rel_error);
        if r.max_rel_error >= 1e-4 || r.checked == 0 {
            failures.push(format!("choptree/{seed}"));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        failures.is_empty() && secs < 120.0,
        format!(
            "7 layer stacks x 10 seeds max rel err {worst:.1e}; composite ChopTree x 10 seeds {composite:.1e}; {secs:.1} s{}",
            if failures.is_empty() {
                String::new()
            } else {
                format!("; failing {}", failures.join(", "))
            }
        ),
    )
}

/// Best SSE over every assignment of `points` to `k` non-empty groups.
fn exhaustive_optimum(points: &[Vec<f64>], k: usize) -> f64 {
    let n = points.len();
    let mut best = f64::INFINITY;
    let mut labels = vec![0usize; n];
    loop {
        let mut sse = 0.0;
        let mut ok = true;
        for c in 0..k {
            let members: Vec<&Vec<f64>> = points
                .iter()
                .zip(&labels)
                .filter(|(_, l)| **l == c)
                .map(|(p, _)| p)
                .collect();
            if members.is_empty() {
                ok = false;
                break;
            }
            let dim = members[0].len();
            let mean: Vec<f64> = (0..dim)
                .map(|d| members.iter().map(|m| m[d]).sum::<f64>() / members.len() as f64)
                .collect();
            sse += members
                .iter()
                .map(|m| {
                    m.iter()
                        .zip(&mean)
                        .map(|(a, b)| (a - b).powi(2))
                        .sum::<f64>()
                })
                .sum::<f64>();
        }
        if ok {
            best = best.min(sse);
        }
        let mut i = 0;
        while i < n {
            labels[i] += 1;
            if labels[i] < k {
                break;
            }
            labels[i] = 0;
            i += 1;
        }
        if i == n {
            return best;
        }
    }
}

fn criterion_4() -> Outcome {
    let start = Instant::now();
    let mut notes = Vec::new();
    let mut monotone = true;
    let mut runs = 0;
    let mut check_history = |h: &[f64]| {
        runs += 1;
        if !h.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12) + 1e-12) {
            monotone = false;
        }
    };

    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut optimal = 0;
    let mut instances = 0;
    for n in 2..=8 {
        for k in 1..=3.min(n) {
            for _ in 0..5 {
                let dim = rng.random_range(1..=3);
                let points: Vec<Vec<f64>> = (0..n)
                    .map(|_| (0..dim).map(|_| rng.random_range(-5.0..5.0)).collect())
                    .collect();
                let opt = exhaustive_optimum(&points, k);
                let best = (0..10)
                    .map(|s| {
                        let m = kmeans_fit(&points, k, 100, s).unwrap();
                        check_history(&m.history);
                        m.inertia
                    })
                    .fold(f64::INFINITY, f64::min);
                instances += 1;
                if best <= opt + 1e-9 * opt.max(1.0) {
                    optimal += 1;
                }
            }
        }
    }
    notes.push(format!("optimum on {optimal}/{instances} small instances"));

    let codec = Codec::for_craftworld(9).unwrap();
    let truth = codec.codebook.entries();
    let min_dist = codec.codebook.min_pairwise_distance();
    // Isotropic noise whose expected norm is min_dist / 10.
    let sigma = min_dist / 10.0 / (truth[0].len() as f64).sqrt();
    let normal = Normal::new(0.0, sigma).unwrap();
    let mut points = Vec::new();
    for e in truth {
        for _ in 0..25 {
            points.push(
                e.iter()
                    .map(|v| v + normal.sample(&mut rng))
                    .collect::<Vec<f64>>(),
            );
        }
    }
    let km = (0..5)
        .map(|s| kmeans_fit(&points, truth.len(), 100, s).unwrap())
        .inspect(|m| check_history(&m.history))
        .min_by(|a, b| a.inertia.total_cmp(&b.inertia))
        .unwrap();
    let worst_truth = truth
        .iter()
        .map(|e| {
            km.centroids
                .iter()
                .map(|c| distance(c, e))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    let worst_centroid = km
        .centroids
        .iter()
        .map(|c| {
            truth
                .iter()
                .map(|e| distance(c, e))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0f64, f64::max);
    let recovered = worst_truth.max(worst_centroid) < min_dist / 4.0;
    notes.push(format!(
        "k-means worst centroid offset {:.3} min_dist",
        worst_truth.max(worst_centroid) / min_dist
    ));
    let dp = dp_cluster_fit(&points, default_lambda(&points).unwrap()).unwrap();
    notes.push(format!(
        "DP-means {} clusters for {} actions",
        dp.len(),
        truth.len()
    ));
    let dp_ok = dp.len() == truth.len();
    notes.push(format!("{runs} Lloyd runs monotone: {monotone}"));
    let secs = start.elapsed().as_secs_f64();
    notes.push(format!("{secs:.1} s"));
    outcome(
        monotone && optimal == instances && recovered && dp_ok && secs < 60.0,
        notes.join("; "),
    )
}

fn criterion_5() -> Outcome {
    let mut bad = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..200 {
        let r = rng.random_range(-5.0..5.0);
        let q: Vec<f64> = (0..rng.random_range(1..80))
            .map(|_| rng.random_range(-50.0..50.0))
            .collect();
        if soft_target(r, true, &q, 0.99, 1.0) != r {
            bad.push("terminal target differs from r");
            break;
        }
    }
    let mut worst = 0.0f64;
    for n in [1usize, 2, 3, 7, 60, 512] {
        for &(gamma, alpha) in &[(0.99, 1.0), (0.9, 0.5), (0.5, 2.0)] {
            for r in [0.0, 1.0, -0.5] {
                let t = soft_target(r, false, &vec![0.0; n], gamma, alpha);
                worst = worst.max((t - (r + gamma * alpha * (n as f64).ln())).abs());
            }
        }
    }
    if worst > 1e-12 {
        bad.push("uniform-Q closed form off");
    }
    for _ in 0..1000 {
        let q: Vec<f64> = (0..rng.random_range(1..100))
            .map(|_| rng.random_range(-1e3..=1e3))
            .collect();
        for alpha in [1.0, 0.1] {
            if !soft_target(1.0, false, &q, 0.99, alpha).is_finite() {
                bad.push("non-finite target");
            }
        }
    }
    if !soft_target(0.0, false, &[1e3; 60], 0.99, 1.0).is_finite()
        || !soft_target(0.0, false, &[-1e3; 60], 0.99, 1.0).is_finite()
    {
        bad.push("non-finite at |Q| = 1e3");
    }
    bad.dedup();
    outcome(
        bad.is_empty(),
        format!(
            "terminal = r; uniform-Q max deviation {worst:.1e}; 2000 random |Q| <= 1e3 rows finite{}",
            if bad.is_empty() {
                String::new()
            } else {
                format!("; failures: {}", bad.join(", "))
            }
        ),
    )
}

fn report_bytes(ws: &Workspace) -> Vec<u8> {
    let mut out = Vec::new();
    for p in [
        ws.report(ReportFormat::Markdown),
        ws.report(ReportFormat::Csv),
        ws.scores(),
        ws.baseline_report(ReportFormat::Csv),
        ws.baseline_scores(),
    ] {
        out.extend(std::fs::read(p).unwrap());
    }
    out
}

fn criterion_6(smoke_ws: &Path) -> Outcome {
    let cfg = config("smoke.toml");
    let start = Instant::now();
    let a = Workspace::new(smoke_ws.to_path_buf());
    run_pipeline(&cfg, &a).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let b = Workspace::new(dir.path().to_path_buf());
    run_pipeline(&cfg, &b).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let same = report_bytes(&a) == report_bytes(&b);
    outcome(
        same && secs < 1800.0,
        format!(
            "two smoke runs {} reports; {secs:.0} s for both",
            if same { "byte-identical" } else { "DIFFERENT" }
        ),
    )
}

fn criterion_7() -> Outcome {
    let cfg = config("default.toml");
    let dir = tempfile::tempdir().unwrap();
    let ws = Workspace::new(dir.path().to_path_buf());
    let start = Instant::now();
    let s = run_pipeline(&cfg, &ws).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let wp = s.report.rates[1];
    let ratio = s.report.mean_score / s.baseline.mean_score.max(f64::MIN_POSITIVE);
    let monotone = s.report.is_monotone();
    let policy = load_policy(&cfg, &ws).unwrap();
    let codec = Arc::new(Codec::for_craftworld(cfg.codec.seed).unwrap());
    let seeds: Vec<u64> = (0..20).map(|i| 7_000 + i).collect();
    let logs = evaluate_treechop(&policy.choptree, &cfg.env, codec, &seeds).unwrap();
    let mean_logs = logs.iter().sum::<f64>() / logs.len() as f64;
    let rates: Vec<String> = s
        .report
        .rates
        .iter()
        .map(|x| format!("{:.1}", 100.0 * x))
        .collect();
    outcome(
        wp >= 0.5 && ratio >= 5.0 && monotone,
        format!(
            "{} episodes, rates [{}]%, mean {:.2} vs baseline {:.3} ({:.0}x), monotone {monotone}; \
             {} training frames; ChopTree {mean_logs:.2} logs/TreeChop episode; {secs:.0} s",
            s.report.episodes,
            rates.join(", "),
            s.report.mean_score,
            s.baseline.mean_score,
            ratio,
            s.frames_used,
        ),
    )
}

fn criterion_8(smoke_ws: Option<&Path>) -> Outcome {
    let cfg = config("smoke.toml");
    let owned;
    let root: PathBuf = match smoke_ws {
        Some(p) => p.to_path_buf(),
        None => {
            owned = tempfile::tempdir().unwrap();
            let ws = Workspace::new(owned.path().to_path_buf());
            craftchain::harness::gen_demos(&cfg, &ws).unwrap();
            craftchain::harness::fit_actions(&cfg, &ws).unwrap();
            owned.path().to_path_buf()
        }
    };
    let ws = Workspace::new(root);
    let mut notes = Vec::new();
    let mut pure = true;
    let before = load_budget(&cfg, &ws).unwrap();
    train_scheduler_stage(&cfg, &ws).unwrap();
    let after = load_budget(&cfg, &ws).unwrap();
    pure &= before == after;
    notes.push(format!("scheduler {}", after.used - before.used));
    for kind in [
        AgentKind::CraftWoodenPickaxe,
        AgentKind::DigStone,
        AgentKind::CraftStonePickaxe,
        AgentKind::RandomSearch,
    ] {
        let before = load_budget(&cfg, &ws).unwrap();
        let s = train_agent(&cfg, &ws, kind).unwrap();
        let after = load_budget(&cfg, &ws).unwrap();
        pure &= before == after && s.frames_used == 0;
        notes.push(format!("{} {}", kind.name(), after.used - before.used));
    }
    outcome(
        pure,
        format!("frames consumed by offline trainers: {}", notes.join(", ")),
    )
}

fn demos(count: usize, noise: f64, seed: u64) -> Dataset {
    let cfg = DemoConfig {
        count,
        noise_level: noise,
        seed,
        ..DemoConfig::default()
    };
    generate_demos(
        &EnvConfig::default(),
        Arc::new(Codec::for_craftworld(7).unwrap()),
        &cfg,
    )
    .unwrap()
}

fn criterion_9() -> Outcome {
    let clean = demos(60, 0.0, 1000);
    let th0 = compute_thresholds(&clean).unwrap();
    let thresholds_ok = (th0.log_threshold, th0.stone_threshold) == (3, 11);

    let mut total = 0;
    let mut monotone = 0;
    let sets = [
        clean,
        demos(211, 0.1, 1000),
        demos(100, 0.5, 3000),
        demos(100, 1.0, 4000),
    ];
    for ds in &sets {
        let th = compute_thresholds(ds).unwrap_or(th0);
        for traj in &ds.trajectories {
            total += 1;
            if label_episode(traj, &th).windows(2).all(|w| w[0] <= w[1]) {
                monotone += 1;
            }
        }
    }
    let ds = &sets[1];
    let th = compute_thresholds(ds).unwrap();
    let (_, rep) = train_scheduler(ds, &th, &SchedulerConfig::default()).unwrap();
    let acc = rep.heldout_accuracy.unwrap_or(0.0);
    outcome(
        thresholds_ok && monotone == total && acc >= 0.9,
        format!(
            "no-noise thresholds ({}, {}); monotone labels on {monotone}/{total} trajectories; \
             held-out phase accuracy {:.1}%",
            th0.log_threshold,
            th0.stone_threshold,
            100.0 * acc
        ),
    )
}

#[test]
fn acceptance() {
    let smoke = tempfile::tempdir().unwrap();
    let mut results: Vec<(u32, Option<Outcome>)> = vec![
        (1, Some(criterion_1())),
        (2, Some(criterion_2())),
        (3, Some(criterion_3())),
        (4, Some(criterion_4())),
        (5, Some(criterion_5())),
    ];
    let full = !quick();
    results.push((6, full.then(|| criterion_6(smoke.path()))));
    results.push((7, full.then(criterion_7)));
    results.push((8, Some(criterion_8(full.then(|| smoke.path())))));
    results.push((9, Some(criterion_9())));

    let mut text = String::new();
    for (n, r) in &results {
        match r {
            Some(o) => writeln!(
                text,
                "criterion {n}: {} | {}",
                if o.pass { "PASS" } else { "FAIL" },
                o.detail
            ),
            None => writeln!(text, "criterion {n}: SKIP | CRAFTCHAIN_QUICK=1"),
        }
        .unwrap();
    }
    // Written past the test harness capture so the lines show in plain
    // `cargo test` output.
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes()).unwrap();
    out.flush().unwrap();
    // The published Table-2 counts miss one episode, so criterion 1 cannot
    // pass as stated; every other criterion must.
    let unexpected: Vec<u32> = results
        .iter()
        .filter(|(n, r)| *n != 1 && r.as_ref().is_some_and(|o| !o.pass))
        .map(|(n, _)| *n)
        .collect();
    assert!(unexpected.is_empty(), "failing criteria {unexpected:?}");
}

#[test]
fn table2_with_one_more_plank_episode_reconciles() {
    let mut fixed = TABLE2;
    fixed[2] += 1;
    let (ok, detail) = table2_matches(&fixed);
    assert!(ok, "{detail}");
}

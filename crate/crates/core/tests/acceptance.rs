//! Acceptance suite. Prints one PASS/FAIL line per criterion.
//!
//! Run a subset with `cargo test --test acceptance -- 1 3`.
//!
//! Criterion 3 asks for a limit that disagrees with the analytic value
//! (1/32, computed independently below). It is checked as stated and its
//! failure is expected; the process fails if it ever passes unnoticed or if
//! any other criterion fails.

use std::path::{Path, PathBuf};
use std::time::Instant;

use growthlab::mclab::{self, closed_sites_probe, ExperimentConfig, FluctuationReport};
use growthlab::metrics::{affinity_quadratic_check, hellinger_affinity, tv_distance, DiscreteLaw};
use growthlab::oracle::{check_fpp, check_lpp, check_polymer};
use growthlab::rng::{Lane, StreamKey};

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn load(name: &str) -> ExperimentConfig {
    let text = std::fs::read_to_string(configs().join(name)).unwrap();
    ExperimentConfig::from_json(&text).unwrap()
}

fn run(config: &ExperimentConfig) -> FluctuationReport {
    mclab::run_coupled_experiment(config).unwrap().report
}

fn c1_oracles() -> Outcome {
    let mut fails = Vec::new();
    let mut count = 0usize;
    for seed in 0..100 {
        for r in check_fpp(2, seed).unwrap().into_iter().chain(check_lpp(10, seed).unwrap()) {
            count += 1;
            if !r.pass {
                fails.push(format!("{:?} seed {} {}", r.model, r.seed, r.case));
            }
        }
    }
    for n in 1..=12 {
        for beta in [0.5, 2.0] {
            for seed in 0..10 {
                for r in check_polymer(n, beta, seed).unwrap() {
                    count += 1;
                    if !r.pass {
                        fails.push(format!("polymer n={n} beta={beta} seed {seed} {}", r.case));
                    }
                }
            }
        }
    }
    outcome(fails.is_empty(), format!("{count} comparisons, {} mismatches {:?}", fails.len(), fails.iter().take(3).collect::<Vec<_>>()))
}

/// Random law on `0..k` drawn from a counter stream; some weights are zero.
fn random_law(key: StreamKey, id: u64, k: usize) -> DiscreteLaw {
    let mut rng = key.stream(id, Lane::Scratch, 0);
    loop {
        let w: Vec<f64> = (0..k)
            .map(|_| {
                let u = rng.next_open01();
                if u < 0.2 {
                    0.0
                } else {
                    rng.next_open01()
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            let mut probs: Vec<f64> = w.iter().map(|x| x / total).collect();
            let head: f64 = probs[..k - 1].iter().sum();
            probs[k - 1] = (1.0 - head).max(0.0);
            return DiscreteLaw::new((0..k).map(|i| i as f64).collect(), probs).unwrap();
        }
    }
}

fn c2_distances() -> Outcome {
    let key = StreamKey::new(2);
    let mut worst_tv = f64::NEG_INFINITY;
    let mut worst_prod = 0.0f64;
    for i in 0..1000u64 {
        let k = 1 + (i % 6) as usize;
        let p = random_law(key, 2 * i, k);
        let q = random_law(key, 2 * i + 1, 1 + ((i / 6) % 6) as usize);
        let rho = hellinger_affinity(&p, &q);
        worst_tv = worst_tv.max(tv_distance(&p, &q) - (1.0 - rho * rho).max(0.0).sqrt());

        let k = 2 + (i % 3) as usize;
        let ps: Vec<_> = (0..3).map(|j| random_law(key, 10_000 + 6 * i + j, k)).collect();
        let qs: Vec<_> = (0..3).map(|j| random_law(key, 10_003 + 6 * i + j, k)).collect();
        let lhs = hellinger_affinity(&ps[0].product(&ps[1]).product(&ps[2]), &qs[0].product(&qs[1]).product(&qs[2]));
        let rhs: f64 = (0..3).map(|j| hellinger_affinity(&ps[j], &qs[j])).product();
        worst_prod = worst_prod.max((lhs - rhs).abs());
    }
    outcome(
        worst_tv <= 1e-12 && worst_prod <= 1e-12,
        format!("max(tv - sqrt(1-rho^2)) = {worst_tv:.3e}, max product gap = {worst_prod:.3e} (tol 1e-12)"),
    )
}

fn c3_quadratic() -> Outcome {
    let p = DiscreteLaw::new(vec![0.0, 1.0], vec![0.5, 0.5]).unwrap();
    let q = DiscreteLaw::new(vec![0.0, 1.0], vec![0.75, 0.25]).unwrap();
    let rows = affinity_quadratic_check(&p, &q, &[1e-3, 1e-4]).unwrap();
    let target = 1.0 / 16.0;
    // the Taylor coefficient of 0.5√(1+ε/2) + 0.5√(1−ε/2) is 1/32
    let analytic = 1.0 / 32.0;
    let within: Vec<bool> = rows.iter().map(|r| (r.ratio - target).abs() <= 0.05 * target).collect();
    outcome(
        within.iter().all(|&b| b),
        format!(
            "ratios {:.6} (eps 1e-3), {:.6} (eps 1e-4); target 1/16 = {target:.6} within 5%; analytic limit {analytic:.6}",
            rows[0].ratio, rows[1].ratio
        ),
    )
}

fn c4_pathwise() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (name, expect) in [("pathwise-fpp.json", 100_000u64), ("pathwise-lpp.json", 100_000), ("pathwise-polymer.json", 10_000)] {
        let r = run(&load(&format!("acceptance/{name}")));
        ok &= r.replicas == expect && r.pathwise_violations == 0;
        parts.push(format!("{name}: {} replicas, {} violations", r.replicas, r.pathwise_violations));
    }
    outcome(ok, parts.join("; "))
}

fn c5_desk() -> Outcome {
    let r = run(&load("acceptance/desk-fpp.json"));
    let mut ok = r.cap_violations == 0;
    let mut parts = Vec::new();
    for n in &r.per_n {
        ok &= n.calibration.tv_bound <= 0.25 && n.best_tail.prob >= 0.2 && n.replicas == 1000;
        parts.push(format!(
            "n={} alpha={:.4} tv={:.6} best P(T-T~ >= {:.2} sqrt(log n))={:.3} touches={}",
            n.n, n.calibration.alpha, n.calibration.tv_bound, n.best_tail.kappa, n.best_tail.prob, n.boundary_touches
        ));
    }
    parts.push(format!("interval-cap violations {}", r.cap_violations));
    outcome(ok, parts.join("; "))
}

fn c6_widths() -> Outcome {
    let r = run(&load("acceptance/widths-fpp.json"));
    let w: Vec<(u32, f64, f64)> = r.per_n.iter().map(|n| (n.n, n.widths[1].width, n.widths[1].width_se)).collect();
    let (first, last) = (w[0], w[w.len() - 1]);
    let slack = 3.0 * (first.2 * first.2 + last.2 * last.2).sqrt();
    outcome(
        last.1 - first.1 > slack,
        format!(
            "0.75-width {}; increase {:.4} vs 3 SE {:.4}",
            w.iter().map(|(n, x, s)| format!("n={n}: {x:.4}±{s:.4}")).collect::<Vec<_>>().join(", "),
            last.1 - first.1,
            slack
        ),
    )
}

fn c7_variance() -> Outcome {
    let r = run(&load("acceptance/variance-lpp.json"));
    match &r.variance_fit {
        Some(f) => outcome(
            (0.55..=0.80).contains(&f.exponent),
            format!(
                "variances {}; exponent {:.4} (r2 {:.4}), window [0.55, 0.80]",
                r.per_n.iter().map(|n| format!("n={}: {:.3}", n.n, n.observable.variance)).collect::<Vec<_>>().join(", "),
                f.exponent,
                f.r2
            ),
        ),
        None => outcome(false, "no variance fit"),
    }
}

fn c8_closed_sites() -> Outcome {
    let rows = closed_sites_probe(0.5, 0.02, &[32, 64, 128], 500, 48, 1).unwrap();
    let decreasing = rows.windows(2).all(|w| w[1].prob < w[0].prob);
    outcome(
        decreasing,
        rows.iter()
            .map(|r| format!("n={}: P(min < 0.02 n)={:.3} (mean fraction {:.4})", r.n, r.prob, r.mean_fraction))
            .collect::<Vec<_>>()
            .join(", "),
    )
}

fn c9_determinism() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    let mut polymer = load("acceptance/pathwise-polymer.json");
    polymer.replicas = 1000;
    let mut lpp = load("acceptance/variance-lpp.json");
    lpp.n_list = vec![32, 64, 128];
    lpp.replicas = 300;
    for (name, base) in [("golden.json", load("golden.json")), ("pathwise-polymer.json (1000 replicas)", polymer), ("variance-lpp.json (reduced)", lpp)] {
        let mut reports = Vec::new();
        for w in [1, 2, 4] {
            let mut c = base.clone();
            c.workers = Some(w);
            reports.push(serde_json::to_string(&mclab::run_coupled_experiment(&c).unwrap()).unwrap());
        }
        let same = reports.windows(2).all(|p| p[0] == p[1]);
        ok &= same;
        parts.push(format!("{name}: {}", if same { "identical" } else { "DIFFER" }));
    }
    let a = closed_sites_probe(0.5, 0.02, &[32, 64], 100, 48, 1).unwrap();
    let b = closed_sites_probe(0.5, 0.02, &[32, 64], 100, 48, 4).unwrap();
    ok &= a == b;
    parts.push(format!("closed-sites probe: {}", if a == b { "identical" } else { "DIFFER" }));
    outcome(ok, format!("workers 1/2/4: {}", parts.join("; ")))
}

fn main() {
    let wanted: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    // `cargo test` passes harness flags; listing is not meaningful here
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let criteria: [(u32, &str, fn() -> Outcome); 9] = [
        (1, "oracle equivalence", c1_oracles),
        (2, "distance identities", c2_distances),
        (3, "quadratic affinity law", c3_quadratic),
        (4, "coupling pathwise inequalities", c4_pathwise),
        (5, "desk-scale coupling mechanics", c5_desk),
        (6, "fluctuation growth", c6_widths),
        (7, "lpp variance scaling", c7_variance),
        (8, "directed percolation probe", c8_closed_sites),
        (9, "determinism across workers", c9_determinism),
    ];
    let expected_fail = [3u32];
    let mut unexpected = Vec::new();
    for (id, name, f) in criteria {
        if !wanted.is_empty() && !wanted.contains(&id) {
            continue;
        }
        let t = Instant::now();
        let o = f();
        let status = if o.pass { "PASS" } else { "FAIL" };
        let note = if expected_fail.contains(&id) { " [expected failure]" } else { "" };
        println!("criterion {id} {status}{note}: {name} ({:.1}s) {}", t.elapsed().as_secs_f64(), o.detail);
        if o.pass == expected_fail.contains(&id) {
            unexpected.push(id);
        }
    }
    if !unexpected.is_empty() {
        eprintln!("unexpected outcome for criteria {unexpected:?}");
        std::process::exit(1);
    }
}

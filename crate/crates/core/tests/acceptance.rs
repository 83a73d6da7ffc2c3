//! Acceptance suite. Runs every criterion, prints one line each, and exits
//! nonzero if any failed.

use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use bayesauth::access_log::{discretize_with_readers, generate_log, PopulationSpec};
use bayesauth::bootstrap::stream_rng;
use bayesauth::empirical::{fit_dirichlet, DEFAULT_MAX_ITERATIONS, DEFAULT_TOLERANCE};
use bayesauth::real::{aggregate_fp_fn, run_real, RealConfig};
use bayesauth::rules::{biased_decide_record, discrete_mixture_gap};
use bayesauth::{
    lemma1_gap, run_synthetic, CountVector, DecisionRule, DirichletBelief, PopulationData,
    PriorOdds, SynthConfig,
};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

extern "C" {
    fn lgamma(x: f64) -> f64;
}

fn ln_gamma(x: f64) -> f64 {
    unsafe { lgamma(x) }
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn random_belief(rng: &mut ChaCha8Rng, k: usize, lo: f64, hi: f64) -> DirichletBelief {
    DirichletBelief::new((0..k).map(|_| rng.random_range(lo..=hi)).collect()).unwrap()
}

fn random_counts(rng: &mut ChaCha8Rng, k: usize, n: usize) -> CountVector {
    let seq: Vec<usize> = (0..n).map(|_| rng.random_range(0..k)).collect();
    CountVector::from_sequence(&seq, k).unwrap()
}

/// Polya log-marginal written out directly with the C library's lgamma.
fn polya_reference(phi: &[f64], counts: &[f64]) -> f64 {
    let s: f64 = phi.iter().sum();
    let n: f64 = counts.iter().sum();
    let mut acc = ln_gamma(s) - ln_gamma(s + n);
    for (p, c) in phi.iter().zip(counts) {
        acc += ln_gamma(p + c) - ln_gamma(*p);
    }
    acc
}

fn lemma_sweep_criterion() -> Outcome {
    let mut rng = stream_rng(101, 0);
    let mut min_gap = f64::INFINITY;
    let mut max_reference_error = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=20);
        let n = rng.random_range(1..=30);
        let phi: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-2.0..=2.0))).collect();
        let belief = DirichletBelief::new(phi.clone()).unwrap();
        let x = random_counts(&mut rng, k, n);
        let gap = lemma1_gap(&belief, &x).unwrap();
        let conditioned: Vec<f64> = phi.iter().zip(x.counts()).map(|(p, c)| p + c).collect();
        let reference = polya_reference(&conditioned, x.counts()) - polya_reference(&phi, x.counts());
        max_reference_error = max_reference_error.max((gap - reference).abs() / reference.abs().max(1.0));
        min_gap = min_gap.min(gap);
    }
    let mut min_mixture = f64::INFINITY;
    for _ in 0..1_000 {
        let k = rng.random_range(2..=20);
        let n = rng.random_range(1..=30);
        let m = rng.random_range(2..=10);
        let x = random_counts(&mut rng, k, n);
        let weights: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
        let likelihoods: Vec<f64> = (0..m)
            .map(|_| {
                let w: Vec<f64> = (0..k).map(|_| rng.random_range(0.01..1.0)).collect();
                let z: f64 = w.iter().sum();
                x.counts().iter().zip(&w).map(|(c, p)| (p / z).powf(*c)).product()
            })
            .collect();
        let z: f64 = weights.iter().sum();
        let first: f64 = likelihoods.iter().zip(&weights).map(|(l, w)| l * w / z).sum();
        let second: f64 = likelihoods.iter().zip(&weights).map(|(l, w)| l * l * w / z).sum();
        let appendix = (second / first).ln() - first.ln();
        let library = discrete_mixture_gap(&likelihoods, &weights).unwrap();
        max_reference_error = max_reference_error.max((appendix - library).abs() / appendix.abs().max(1.0));
        min_mixture = min_mixture.min(appendix);
    }
    let overall = min_gap.min(min_mixture);
    outcome(
        overall >= -1e-12 && max_reference_error < 1e-9,
        format!(
            "min gap {overall:.3e} (dirichlet {min_gap:.3e}, mixtures {min_mixture:.3e}); \
             library vs reference {max_reference_error:.1e}"
        ),
    )
}

fn conjugacy_criterion() -> Outcome {
    let mut rng = stream_rng(202, 0);
    let mut worst_quad = 0.0f64;
    for _ in 0..100 {
        let (a, b) = (rng.random_range(1.0..=10.0), rng.random_range(1.0..=10.0));
        let n = rng.random_range(0..=20);
        let x = random_counts(&mut rng, 2, n);
        let (c1, c2) = (x.counts()[0], x.counts()[1]);
        let ln_beta = ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b);
        let steps = 1_000_000usize;
        let h = 1.0 / steps as f64;
        let integral: f64 = (0..steps)
            .map(|i| {
                let t = (i as f64 + 0.5) * h;
                ((a - 1.0 + c1) * t.ln() + (b - 1.0 + c2) * (1.0 - t).ln() - ln_beta).exp()
            })
            .sum::<f64>()
            * h;
        let belief = DirichletBelief::new(vec![a, b]).unwrap();
        let got = belief.log_marginal(&x).unwrap();
        worst_quad = worst_quad.max((got - integral.ln()).abs());
    }
    let mut worst_chain = 0.0f64;
    for _ in 0..10_000 {
        let k = rng.random_range(2..=12);
        let belief = random_belief(&mut rng, k, 0.05, 20.0);
        let (n1, n2) = (rng.random_range(0..=15), rng.random_range(0..=15));
        let x = random_counts(&mut rng, k, n1);
        let y = random_counts(&mut rng, k, n2);
        let joint = belief.log_marginal(&x.add(&y).unwrap()).unwrap();
        let split = belief.log_marginal(&x).unwrap()
            + belief.posterior_update(&x).unwrap().log_marginal(&y).unwrap();
        worst_chain = worst_chain.max((joint - split).abs());
    }
    outcome(
        worst_quad <= 1e-6 && worst_chain <= 1e-9,
        format!("quadrature max |Δ| {worst_quad:.2e} over 100 cases; chain rule max |Δ| {worst_chain:.2e} over 10^4"),
    )
}

fn polya_k2_grid_ll(hist: &[f64], a: f64, b: f64, n: usize) -> f64 {
    let head = ln_gamma(a + b) - ln_gamma(a + b + n as f64) - ln_gamma(a) - ln_gamma(b);
    hist.iter()
        .enumerate()
        .filter(|(_, m)| **m > 0.0)
        .map(|(c, m)| m * (head + ln_gamma(a + c as f64) + ln_gamma(b + (n - c) as f64)))
        .sum()
}

fn minka_criterion() -> Outcome {
    let truth = [3.0, 7.0];
    let prior = DirichletBelief::new(truth.to_vec()).unwrap();
    let mut worst = 0.0f64;
    let mut all_converged = true;
    let mut grid_ok = true;
    let mut grid_detail = String::new();
    for seed in 0..20u64 {
        let mut rng = stream_rng(303, seed);
        let users: Vec<CountVector> = (0..2000)
            .map(|_| prior.sample(&mut rng).sample(50, &mut rng).unwrap().counts)
            .collect();
        let mut hist = vec![0.0; 51];
        for u in &users {
            hist[u.counts()[0] as usize] += 1.0;
        }
        let fit = fit_dirichlet(&PopulationData::new(users).unwrap(), DEFAULT_TOLERANCE, DEFAULT_MAX_ITERATIONS)
            .unwrap();
        all_converged &= fit.converged;
        for (got, want) in fit.belief.phi().iter().zip(truth) {
            worst = worst.max((got - want).abs() / want);
        }
        if seed == 0 {
            let step = 0.01;
            let (mut best, mut best_ll) = ((0.0, 0.0), f64::NEG_INFINITY);
            for i in 0..=400 {
                for j in 0..=800 {
                    let (a, b) = (1.0 + i as f64 * step, 3.0 + j as f64 * step);
                    let ll = polya_k2_grid_ll(&hist, a, b, 50);
                    if ll > best_ll {
                        best_ll = ll;
                        best = (a, b);
                    }
                }
            }
            let phi = fit.belief.phi();
            let (da, db) = ((phi[0] - best.0).abs(), (phi[1] - best.1).abs());
            grid_ok = da <= step && db <= step && fit.log_likelihood >= best_ll - 1e-6;
            grid_detail = format!(
                "fixed point ({:.3}, {:.3}) vs grid ({:.2}, {:.2})",
                phi[0], phi[1], best.0, best.1
            );
        }
    }
    outcome(
        worst < 0.15 && all_converged && grid_ok,
        format!("worst relative error {:.1}% over 20 seeds; {grid_detail}", worst * 100.0),
    )
}

fn synthetic_criterion() -> Outcome {
    let mut pass = true;
    let mut parts = Vec::new();
    for shape in [0.5, 1.0, 2.0] {
        let cfg = SynthConfig {
            runs: 1000,
            degree: 10,
            sequence_length: 10,
            gamma_shape: shape,
            seed: 404,
            ..SynthConfig::default()
        };
        let curve = run_synthetic(&cfg).unwrap();
        let err = |rule: DecisionRule, t: usize| curve.point(rule, t).unwrap();
        let biased = [
            DecisionRule::BiasAllButLast,
            DecisionRule::FullBias,
            DecisionRule::PartialBias(0.5),
            DecisionRule::FirstHalfBias,
        ];
        let mut order_violations = 0;
        for t in 2..=cfg.sequence_length {
            let oracle = err(DecisionRule::Oracle, t).error_rate;
            let world = err(DecisionRule::World, t).error_rate;
            for rule in biased {
                let e = err(rule, t).error_rate;
                if !(oracle <= e && e <= world) {
                    order_violations += 1;
                }
            }
        }
        let n = cfg.sequence_length;
        let world = err(DecisionRule::World, n);
        let full = err(DecisionRule::FullBias, n);
        let partial = err(DecisionRule::PartialBias(0.5), n);
        let margin = |p: &bayesauth::synth::CurvePoint| {
            let half = ((p.bootstrap_hi5 - p.bootstrap_lo5) / 2.0).max((world.bootstrap_hi5 - world.bootstrap_lo5) / 2.0);
            world.error_rate - p.error_rate > half
        };
        let ok = order_violations == 0
            && margin(full)
            && margin(partial)
            && partial.error_rate <= full.error_rate;
        pass &= ok;
        parts.push(format!(
            "shape {shape}: {} ordering violations over t≥2, t=n world {:.3} f-bias {:.3} p-bias {:.3}",
            order_violations, world.error_rate, full.error_rate, partial.error_rate
        ));
    }
    outcome(pass, parts.join("; "))
}

fn real_criterion() -> Outcome {
    let spec = PopulationSpec {
        users: 300,
        readers: 55,
        ..PopulationSpec::default()
    };
    let records = generate_log(&spec, &mut stream_rng(505, 0)).unwrap();
    let dataset = discretize_with_readers(&records, &spec.reader_ids()).unwrap();
    assert_eq!(dataset.degree(), 1320);
    let cfg = RealConfig {
        seed: 505,
        ..RealConfig::default()
    };
    let reports = run_real(&dataset, &cfg).unwrap();
    let err = |r: &bayesauth::RunReport, rule| r.rule(rule).unwrap().error_rate;
    let wins = reports
        .iter()
        .filter(|r| {
            let world = err(r, DecisionRule::World);
            err(r, DecisionRule::FullBias) < world && err(r, DecisionRule::PartialBias(0.5)) < world
        })
        .count();
    let ratio = |rule| aggregate_fp_fn(&reports, rule).2;
    let (w, p, f) = (
        ratio(DecisionRule::World),
        ratio(DecisionRule::PartialBias(0.5)),
        ratio(DecisionRule::FullBias),
    );
    let ratio_ok = matches!((w, p, f), (Some(w), Some(p), Some(f)) if w < p && p < f);
    let mean = |rule| reports.iter().map(|r| err(r, rule)).sum::<f64>() / reports.len() as f64;
    let fmt = |v: Option<f64>| v.map_or_else(|| "undefined".into(), |v| format!("{v:.2}"));
    outcome(
        wins >= 9 && ratio_ok,
        format!(
            "biased rules beat world in {wins}/10 runs (mean err world {:.3}, f-bias {:.3}, p-bias {:.3}); \
             ratio world {} < p-bias {} < f-bias {}: {}",
            mean(DecisionRule::World),
            mean(DecisionRule::FullBias),
            mean(DecisionRule::PartialBias(0.5)),
            fmt(w),
            fmt(p),
            fmt(f),
            if ratio_ok { "holds" } else { "violated" }
        ),
    )
}

fn degeneracy_criterion() -> Outcome {
    let mut rng = stream_rng(606, 0);
    let mut mismatches = 0;
    let cases = 10_000;
    for _ in 0..cases {
        let k = rng.random_range(2..=40);
        let psi = random_belief(&mut rng, k, 0.01, 50.0);
        let xi = random_belief(&mut rng, k, 0.01, 50.0);
        let n = rng.random_range(0..=12);
        let obs = random_counts(&mut rng, k, n);
        let prior = PriorOdds::new(rng.random_range(0.05..0.95)).unwrap();
        let world = biased_decide_record(&psi, &xi, DecisionRule::World, prior, &obs).unwrap();
        for rule in [DecisionRule::BiasAllButLast, DecisionRule::FirstHalfBias] {
            let v = biased_decide_record(&psi, &xi, rule, prior, &obs).unwrap();
            if v.log_odds.to_bits() != world.log_odds.to_bits() || v.p_user.to_bits() != world.p_user.to_bits() {
                mismatches += 1;
            }
        }
    }
    outcome(mismatches == 0, format!("{mismatches} bit mismatches over {cases} records × 2 rules"))
}

fn determinism_criterion() -> Outcome {
    let exe = env!("CARGO_BIN_EXE_bayesauth");
    let dir = tempfile::TempDir::new().unwrap();
    let d = dir.path();
    let run = |args: &[String]| -> bool {
        Command::new(exe)
            .current_dir(d)
            .args(args)
            .output()
            .map(|o| o.status.success())
            .unwrap_or(false)
    };
    let s = |v: &[&str]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>();
    let mut compared = 0;
    let mut differing = Vec::new();
    let mut failed = Vec::new();
    let same = |a: &str, b: &str| -> bool { std::fs::read(d.join(a)).ok() == std::fs::read(d.join(b)).ok() };
    for tag in ["a", "b"] {
        let f = |ext: &str| format!("{tag}.{ext}");
        let steps: Vec<(&str, Vec<String>)> = vec![
            ("synth", s(&["synth", "--runs", "1000", "--seed", "7", "--out", &f("curve"), "--json", &f("curvejson")])),
            ("gen-log", s(&["gen-log", "--users", "60", "--days", "40", "--seed", "7", "--out", &f("log")])),
            ("ingest", s(&["ingest", "--in", &f("log"), "--seed", "7", "--out", &f("ds")])),
            ("real", s(&["real", "--in", &f("ds"), "--runs", "3", "--reps", "300", "--seed", "7", "--out", &f("real"), "--json", &f("realjson")])),
            ("verify-lemma", s(&["verify-lemma", "--trials", "10000", "--seed", "7", "--out", &f("lemma")])),
            ("fit-prior", s(&["fit-prior", "--in", &f("ds"), "--seed", "7", "--out", &f("prior")])),
            ("plot-data", s(&["plot-data", "--in", &f("curve"), "--seed", "7", "--out", &f("wide")])),
        ];
        for (name, args) in steps {
            if !run(&args) {
                failed.push(format!("{name}({tag})"));
            }
        }
    }
    for ext in ["curve", "curvejson", "log", "ds", "real", "realjson", "lemma", "prior", "wide"] {
        compared += 1;
        let (a, b) = (format!("a.{ext}"), format!("b.{ext}"));
        if !Path::new(&d.join(&a)).exists() || !same(&a, &b) {
            differing.push(ext);
        }
    }
    outcome(
        failed.is_empty() && differing.is_empty(),
        format!(
            "7 subcommands, {compared} output files compared; failed runs {:?}, differing files {:?}",
            failed, differing
        ),
    )
}

fn main() {
    type Criterion = (&'static str, fn() -> Outcome, Duration);
    let criteria: [Criterion; 7] = [
        ("1 lemma sweep", lemma_sweep_criterion, Duration::from_secs(10)),
        ("2 conjugacy oracle", conjugacy_criterion, Duration::from_secs(30)),
        ("3 minka recovery", minka_criterion, Duration::from_secs(60)),
        ("4 synthetic ordering", synthetic_criterion, Duration::from_secs(300)),
        ("5 real-protocol ordering", real_criterion, Duration::from_secs(600)),
        ("6 degeneracy", degeneracy_criterion, Duration::from_secs(1)),
        ("7 cli determinism", determinism_criterion, Duration::from_secs(600)),
    ];
    let mut failures = 0;
    for (name, check, budget) in criteria {
        let start = Instant::now();
        let result = check();
        let elapsed = start.elapsed();
        let pass = result.pass && elapsed <= budget;
        if !pass {
            failures += 1;
        }
        println!(
            "criterion {name}: {} [{:.2}s of {}s] {}",
            if pass { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            budget.as_secs(),
            result.detail
        );
    }
    println!("acceptance: {} of 7 criteria passed", 7 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}

//! Acceptance suite. Every test prints one `[PASS]` or `[FAIL]` line, then
//! asserts. Run with `cargo test --test acceptance -- --nocapture
//! --test-threads=1` to see the lines in order.

use std::time::Instant;

use rand::Rng;

use charged_polymer::charges::{ChargeEnvironment, ChargeLaw};
use charged_polymer::config::{Experiment, ExperimentConfig};
use charged_polymer::experiments::{run_experiment, Outcome};
use charged_polymer::hamiltonian::{brute_force_energy, PolymerEnergyState};
use charged_polymer::montecarlo::EnergyWalker;
use charged_polymer::oracles::{
    convolution_return_probabilities, return_probabilities, DEFAULT_MEMORY_BUDGET,
};
use charged_polymer::rng::stream_rng;
use charged_polymer::runner;
use charged_polymer::stats::Verdict;
use charged_polymer::walk::{StepLaw, WalkKind, MAX_DIM};

fn verdict(id: &str, title: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    println!("[{tag}] {id} {title}: {detail}");
}

fn gated(out: &Outcome) -> String {
    out.reports
        .iter()
        .filter(|r| r.verdict != Verdict::Report)
        .map(|r| format!("{} {}={:.4} {}", r.name, r.statistic, r.value, r.verdict))
        .collect::<Vec<_>>()
        .join("; ")
}

fn value(out: &Outcome, name: &str) -> f64 {
    out.report(name)
        .unwrap_or_else(|| panic!("missing report {name}"))
        .value
}

/// Random path `S_1..S_n` from `law`, also as `Point`s for the walkers.
fn random_path(
    law: &StepLaw,
    n: usize,
    rng: &mut impl Rng,
) -> (Vec<Vec<i64>>, Vec<[i64; MAX_DIM]>) {
    let d = law.dim();
    let mut pos = vec![0i64; d];
    let mut path = Vec::with_capacity(n);
    let mut steps = Vec::with_capacity(n);
    for _ in 0..n {
        let s = *law.sample_step(rng);
        for i in 0..d {
            pos[i] += s[i];
        }
        path.push(pos.clone());
        steps.push(s);
    }
    (path, steps)
}

/// `sum_{i<j} |q_i q_j| 1{S_i = S_j}`, the natural scale for relative errors.
fn abs_scale(path: &[Vec<i64>], q: &[f64]) -> f64 {
    let abs: Vec<f64> = q.iter().map(|x| x.abs()).collect();
    brute_force_energy(path, &abs)
}

#[test]
fn c01_incremental_energy_matches_brute_force() {
    let start = Instant::now();
    let mut rng = stream_rng(101, 0);
    let mut worst = [0.0f64; 2];
    for (li, law) in [ChargeLaw::Rademacher, ChargeLaw::Gaussian]
        .into_iter()
        .enumerate()
    {
        for pair in 0..1000u64 {
            let d = 1 + (pair % 3) as usize;
            let walk = StepLaw::srw(d).unwrap();
            let n = rng.random_range(1..=200);
            let env = ChargeEnvironment::generate(law, 1000 * li as u64 + pair, n).unwrap();
            let (path, steps) = random_path(&walk, n, &mut rng);
            let brute = brute_force_energy(&path, env.values());

            let mut state = PolymerEnergyState::new(d, &env).unwrap();
            let mut walker = EnergyWalker::new(d, 1);
            for s in &steps {
                state.apply_step(&s[..d]).unwrap();
                walker.step(s, &[env.values()]);
            }
            assert_eq!(state.walk().position(), &path[n - 1][..]);
            let scale = abs_scale(&path, env.values()).max(f64::MIN_POSITIVE);
            for k in [state.energy(), walker.energy(0)] {
                let err = if law == ChargeLaw::Rademacher {
                    (k - brute).abs()
                } else {
                    (k - brute).abs() / scale
                };
                worst[li] = worst[li].max(err);
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    let pass = worst[0] == 0.0 && worst[1] <= 1e-9 && secs < 10.0;
    verdict(
        "C1",
        "incremental energy vs O(n^2) sum",
        pass,
        &format!(
            "2x1000 paths, n<=200, d=1,2,3; rademacher max err {:e} (exact), gaussian max rel err {:.2e} (<=1e-9), {secs:.2}s (<10s)",
            worst[0], worst[1]
        ),
    );
    assert!(pass);
}

#[test]
fn c02_qv_decomposition_matches_direct_definition() {
    let mut rng = stream_rng(202, 0);
    let mut worst = 0.0f64;
    for p in 0..500u64 {
        let d = 1 + (p % 3) as usize;
        let walk = StepLaw::srw(d).unwrap();
        let n = rng.random_range(1..=100);
        let env = ChargeEnvironment::generate(ChargeLaw::Gaussian, 5000 + p, n).unwrap();
        let q = env.values();
        let (path, steps) = random_path(&walk, n, &mut rng);
        let mut state = PolymerEnergyState::new(d, &env).unwrap();
        for s in &steps {
            state.apply_step(&s[..d]).unwrap();
        }
        let s_n = (n as f64).sqrt();
        // s_n^-2 sum_k (sum_{i<k, S_i = S_k} q_i)^2
        let mut direct = 0.0;
        let mut scale = 0.0;
        for k in 0..n {
            let (mut w, mut a) = (0.0, 0.0);
            for i in 0..k {
                if path[i] == path[k] {
                    w += q[i];
                    a += q[i].abs();
                }
            }
            direct += w * w;
            scale += a * a;
        }
        direct /= s_n * s_n;
        scale = (scale / (s_n * s_n)).max(f64::MIN_POSITIVE);
        let dec = state.qv_decomposition(s_n);
        worst = worst.max((dec.q - direct).abs() / scale);
        worst = worst.max((dec.direct - direct).abs() / scale);
    }
    let pass = worst <= 1e-9;
    verdict(
        "C2",
        "quadratic-variation decomposition vs direct sum",
        pass,
        &format!("500 gaussian paths, n<=100; max rel err {worst:.2e} (<=1e-9)"),
    );
    assert!(pass);
}

fn binomial_return(m: usize) -> f64 {
    if m % 2 == 1 {
        return 0.0;
    }
    // C(m, m/2) / 2^m as a running product
    (1..=m / 2).fold(1.0, |acc, j| acc * (m / 2 + j) as f64 / (4.0 * j as f64))
}

#[test]
fn c03_return_probability_oracles() {
    let law = StepLaw::srw(1).unwrap();
    let conv = convolution_return_probabilities(&law, 40, DEFAULT_MEMORY_BUDGET).unwrap();
    let table = return_probabilities(&law, 40).unwrap();
    let mut err = 0.0f64;
    for m in 1..=40 {
        let exact = binomial_return(m);
        err = err
            .max((conv[m] - exact).abs())
            .max((table.p0[m - 1] - exact).abs());
    }
    let mut pass = err <= 1e-12;
    let mut detail = format!("d=1 max |P - binomial| {err:.1e} (<=1e-12)");
    for d in [3, 4, 5] {
        let cfg = ExperimentConfig::new(Experiment::OracleCheck, d, WalkKind::Srw);
        let out = run_experiment(&cfg, 0).unwrap();
        let chi = out.report("chi_identity").unwrap();
        pass &= out.passed();
        detail += &format!(
            "; d={d} chi={:.6} |lhs-rhs|={:.1e} {}",
            out.oracle["chi"].as_f64().unwrap(),
            chi.value,
            chi.verdict
        );
    }
    verdict("C3", "return-probability oracles", pass, &detail);
    assert!(pass);
}

#[test]
fn c04_partition_decomposition() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, walk) in [(1, WalkKind::Srw), (2, WalkKind::Srw)] {
        for charges in ["rademacher", "gaussian"] {
            let mut cfg = ExperimentConfig::new(Experiment::MomentDecomposition, d, walk);
            cfg.n = 6;
            cfg.charges = charges.into();
            let out = run_experiment(&cfg, 0).unwrap();
            pass &= out.passed();
            detail.push(format!(
                "d={d} {charges} counts {}/{} max rel {:.1e}",
                value(&out, "partition_count[p=1]"),
                value(&out, "partition_count[p=2]"),
                value(&out, "partition_decomposition")
            ));
        }
    }
    verdict(
        "C4",
        "partition decomposition, p=(1),(2),(1,1), n<=6",
        pass,
        &(detail.join("; ") + " (<=1e-9; counts 1 and 7)"),
    );
    assert!(pass);
}

#[test]
fn c05_annealed_variance() {
    let mut pass = true;
    let mut detail = Vec::new();
    for (d, walk) in [
        (1, WalkKind::Srw),
        (2, WalkKind::LazySrw),
        (3, WalkKind::Srw),
    ] {
        let mut cfg = ExperimentConfig::new(Experiment::AnnealedClt, d, walk);
        cfg.n = 10_000;
        cfg.replicas = 10_000;
        cfg.master_seed = 5;
        let out = run_experiment(&cfg, 0).unwrap();
        pass &= out.passed();
        detail.push(format!(
            "d={d} {walk:?} z={:+.2}",
            value(&out, "annealed_variance")
        ));
    }
    verdict(
        "C5",
        "annealed variance vs oracle, n=1e4, 1e4 replicas",
        pass,
        &(detail.join("; ") + " (|z|<=4)"),
    );
    assert!(pass);
}

#[test]
fn c06_quenched_clt_d3_lazy() {
    let mut cfg = ExperimentConfig::new(Experiment::QuenchedCltDge3, 3, WalkKind::LazySrw);
    cfg.n = 100_000;
    cfg.replicas = 10_000;
    cfg.environments = 3;
    cfg.master_seed = 6;
    let out = run_experiment(&cfg, 0).unwrap();
    let pass = out.passed();
    let mut detail: Vec<String> = (0..3)
        .map(|e| {
            let ks = out.report(&format!("ks_gaussian[{e}]")).unwrap();
            format!(
                "env {e}: KS p={:.3}, var rel dev {:.3}",
                ks.p_value.unwrap(),
                value(&out, &format!("quenched_variance[{e}]"))
            )
        })
        .collect();
    detail.push(format!(
        "sigma2={:.4} (KS p>0.01 in >=2/3, var within 10%)",
        out.oracle["sigma2"].as_f64().unwrap()
    ));
    verdict(
        "C6",
        "quenched CLT d=3 lazy, n=1e5",
        pass,
        &detail.join("; "),
    );
    assert!(pass);
}

#[test]
fn c07_quenched_clt_d2_lazy() {
    let mut cfg = ExperimentConfig::new(Experiment::QuenchedCltD2, 2, WalkKind::LazySrw);
    cfg.n = 1 << 16;
    cfg.replicas = 10_000;
    cfg.environments = 3;
    cfg.t_grid = vec![0.5, 1.0];
    cfg.master_seed = 7;
    let out = run_experiment(&cfg, 0).unwrap();
    let pass = out.passed();
    println!("  C7 gated: {}", gated(&out));
    for r in out.reports.iter().filter(|r| r.verdict == Verdict::Report) {
        println!("  C7 report-only: {}", r.line());
    }
    verdict(
        "C7",
        "quenched CLT d=2 lazy, n=2^16",
        pass,
        &format!(
            "oracle/(n log n)={:.4} vs 2/pi; {}",
            out.oracle["annealed_oracle_normalized"]
                .as_f64()
                .unwrap_or(f64::NAN),
            gated(&out)
        ),
    );
    assert!(pass);
}

#[test]
fn c08_d1_annealed_limit() {
    let mut cfg = ExperimentConfig::new(Experiment::D1Annealed, 1, WalkKind::Srw);
    cfg.n = 100_000;
    cfg.replicas = 10_000;
    cfg.charges = "rademacher".into();
    cfg.master_seed = 8;
    let out = run_experiment(&cfg, 0).unwrap();
    let pass = out.passed();
    let ks = out.report("ks_two_sample").unwrap();
    verdict(
        "C8",
        "d=1 annealed law vs limit sampler, n=1e5",
        pass,
        &format!(
            "two-sample KS D={:.4} p={:.3} (>0.01); second moment rel dev {:.4} (<=0.05)",
            ks.value,
            ks.p_value.unwrap(),
            value(&out, "second_moment")
        ),
    );
    assert!(pass);
}

#[test]
fn c09_d1_oscillation() {
    let mut cfg = ExperimentConfig::new(Experiment::D1Oscillation, 1, WalkKind::Srw);
    cfg.n_list = vec![1_000, 10_000, 100_000, 1_000_000];
    cfg.n = 1_000_000;
    cfg.replicas = C9_REPLICAS;
    cfg.environments = 10;
    cfg.master_seed = 9;
    let out = run_experiment(&cfg, 0).unwrap();
    let r = out.report("d1_quenched_oscillation").unwrap();
    let centred = out.report("d1_quenched_oscillation_centred").unwrap();
    println!("  C9 report-only: {}", centred.line());
    let pass = r.value >= 0.8;
    verdict(
        "C9",
        "d=1 quenched laws oscillate, d=2 settle",
        pass,
        &format!(
            "fraction of 10 envs with d1 max pairwise KS > d2: {:.2} (>=0.8), {C9_REPLICAS} walks per env; quenched-mean-centred fraction {:.2} (report)",
            r.value, centred.value
        ),
    );
    assert!(pass);
}

const C9_REPLICAS: usize = 1000;

#[test]
fn c10_truncation_drift() {
    let mut cfg = ExperimentConfig::new(Experiment::TruncationDrift, 2, WalkKind::LazySrw);
    cfg.n = 100_000;
    cfg.charges = "student_like:3".into();
    cfg.alpha = Some(0.75);
    cfg.beta = Some(0.2);
    cfg.environments = 100;
    cfg.master_seed = 10;
    let out = run_experiment(&cfg, 0).unwrap();
    let r = out.report("drift_trend").unwrap();
    let med: Vec<f64> = serde_json::from_value(r.details["median"].clone()).unwrap();
    let pass = out.passed();
    verdict(
        "C10",
        "truncation drift along tau_n",
        pass,
        &format!(
            "median at first tau {:.4}, last {:.4}, peak {:.4} (last < first/2)",
            med[0],
            med.last().unwrap(),
            med.iter().copied().fold(0.0, f64::max)
        ),
    );
    assert!(pass);
}

#[test]
fn c11_results_independent_of_workers() {
    let mut cfg = ExperimentConfig::new(Experiment::QuenchedCltD2, 2, WalkKind::LazySrw);
    cfg.n = 4096;
    cfg.replicas = 1000;
    cfg.environments = 2;
    cfg.t_grid = vec![0.5, 1.0];
    cfg.master_seed = 11;
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    runner::run(&cfg, 1, a.path(), false).unwrap();
    runner::run(&cfg, 8, b.path(), false).unwrap();
    let read = |d: &std::path::Path| std::fs::read_to_string(d.join("results.json")).unwrap();
    let (ja, jb) = (read(a.path()), read(b.path()));
    let same_json =
        runner::without_timestamp(&ja).unwrap() == runner::without_timestamp(&jb).unwrap();
    let samples = |d: &std::path::Path| std::fs::read(d.join("samples.csv")).unwrap();
    let same_samples = samples(a.path()) == samples(b.path());
    let pass = same_json && same_samples;
    verdict(
        "C11",
        "results.json identical at 1 and 8 workers",
        pass,
        &format!("results.json equal modulo timestamp: {same_json}; samples.csv byte-equal: {same_samples}"),
    );
    assert!(pass);
}

//! Acceptance suite. Runs every criterion end to end through the runner and
//! prints one verdict line per criterion; exits non-zero if any fails.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use branchsim::branching::DEAD_BRANCH_FLOOR;
use branchsim::model::{evolve, ModelSpec};
use branchsim::runner::{
    prepare, run_oracle, run_profile, run_sweep, run_trajectory, ExperimentConfig, ExperimentKind, ProfileOutcome,
    SweepAxes,
};
use branchsim::stats::pairwise_epsilon;
use branchsim::Execution;
use tempfile::TempDir;

struct Verdict {
    pass: bool,
    detail: String,
}

type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn config_file(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn profile_config(file: &str, seed: u64, out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::load(&config_file(file), Some(ExperimentKind::Profile)).unwrap();
    config.model.master_seed.0 = seed;
    config.out_dir = out.to_path_buf();
    config
}

fn profile(config: &ExperimentConfig) -> ProfileOutcome {
    run_profile(config).unwrap_or_else(|e| panic!("profile run failed: {e}"))
}

fn model_config(spec: ModelSpec, out: &Path) -> ExperimentConfig {
    let mut config = ExperimentConfig::new(ExperimentKind::Profile, spec, out);
    config.delta_list = vec![0.1];
    config
}

/// Shared weak-coupling L = 250 runs, one per seed.
struct LongRuns {
    seeds: Vec<u64>,
    runs: Vec<ProfileOutcome>,
    seconds: Vec<f64>,
}

fn oracle_equivalence(tmp: &Path) -> Verdict {
    let mut config = ExperimentConfig::load(&config_file("oracle.toml"), Some(ExperimentKind::Oracle)).unwrap();
    config.out_dir = tmp.join("c1");
    let started = Instant::now();
    let report = run_oracle(&config).unwrap();
    let secs = started.elapsed().as_secs_f64();
    let pass = report.dim == 40
        && report.length == 8
        && report.max_grouping_discrepancy <= 1e-12
        && report.max_completeness_residual <= 1e-10
        && report.max_overlap_residual <= 1e-12
        && secs <= 60.0;
    verdict(
        pass,
        format!(
            "grouping {:.2e} (<= 1e-12), completeness {:.2e} (<= 1e-10), overlap identity {:.2e} (<= 1e-12), {secs:.1} s (<= 60 s)",
            report.max_grouping_discrepancy, report.max_completeness_residual, report.max_overlap_residual
        ),
    )
}

fn conservation(long: &LongRuns) -> Verdict {
    let run = &long.runs[0];
    let drift = run.summary.max_weight_drift;
    let pairs = pairwise_epsilon(&run.ensemble, DEAD_BRANCH_FLOOR, Execution::Sequential).unwrap();
    let max_eps = pairs.max_entry().unwrap_or(0.0);
    let secs = long.seconds[0];
    let steps = run.ensemble.steps_done();
    let pass = steps == 250 && drift <= 1e-10 && max_eps <= 1.0 + 1e-12 && secs <= 600.0;
    verdict(
        pass,
        format!(
            "seed {}: {steps} steps, max |sum q - 1| {drift:.2e} (<= 1e-10), max pairwise eps {max_eps:.15} (<= 1 + 1e-12), {secs:.1} s",
            long.seeds[0]
        ),
    )
}

fn single_split(tmp: &Path) -> Verdict {
    let cases = [(125, 125, 0.0025, 1), (125, 125, 0.0025, 2), (150, 100, 0.25, 3), (150, 100, 25.0, 4), (30, 10, 1.0, 5)];
    let mut worst: f64 = 0.0;
    for (i, &(d0, d1, c, seed)) in cases.iter().enumerate() {
        let mut spec = ModelSpec::new(d0, d1, c, 1, seed);
        if c >= 1.0 {
            spec.tau_rescale = 10.0;
        }
        let out = profile(&model_config(spec, &tmp.join(format!("c3_{i}"))));
        for e in &out.stats.eps {
            worst = worst.max(e.unwrap_or(f64::INFINITY));
        }
    }
    verdict(worst <= 1e-14, format!("max eps(0), eps(1) over {} L=1 runs: {worst:.2e} (<= 1e-14)", cases.len()))
}

fn equilibration() -> Verdict {
    let samples = 301;
    let mut worst: f64 = 0.0;
    for seed in 1..=3 {
        let run = prepare(&ModelSpec::new(125, 125, 0.0025, 1, seed), false).unwrap();
        let tau = run.hamiltonian.tau;
        for k in 0..samples {
            let t = tau * (5.0 + 15.0 * k as f64 / (samples - 1) as f64);
            let p1 = evolve(&run.hamiltonian, &run.psi0, t).p1_expectation(125);
            worst = worst.max((p1 - 0.5).abs());
        }
    }
    verdict(
        worst <= 0.1,
        format!("max |<P1> - 0.5| over {samples} times in [5 tau, 20 tau], seeds 1-3: {worst:.4} (<= 0.1)"),
    )
}

fn weak_coupling_profile(long: &LongRuns) -> Verdict {
    let mut held = 0;
    let mut parts = Vec::new();
    for (seed, run) in long.seeds.iter().zip(&long.runs) {
        let s = &run.summary;
        let argmin = s.argmin_eps.map(|n| n as f64);
        let near = argmin.is_some_and(|n| (n - s.n_mean).abs() <= s.n_std);
        let tail = s.mean_eps_tail;
        let high = tail.is_some_and(|t| t > 0.9);
        if near && high {
            held += 1;
        }
        parts.push(format!(
            "seed {seed}: argmin {} ({:+.1} sigma), tail mean {}",
            s.argmin_eps.map_or("-".into(), |n| n.to_string()),
            argmin.map_or(f64::NAN, |n| (n - s.n_mean) / s.n_std),
            tail.map_or("-".into(), |t| format!("{t:.3}"))
        ));
    }
    verdict(
        held >= 2,
        format!("{held}/3 seeds with argmin within 1 sigma and tail mean > 0.9 (need 2); {}", parts.join("; ")),
    )
}

fn finite_size(tmp: &Path) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for seed in 1..=3 {
        let small = profile(&model_config(ModelSpec::new(125, 125, 0.0025, 25, seed), &tmp.join(format!("c6_s{seed}"))));
        let large = profile(&model_config(ModelSpec::new(1000, 1000, 0.0025, 25, seed), &tmp.join(format!("c6_l{seed}"))));
        let (a, b) = (small.summary.tv_distance, large.summary.tv_distance);
        pass &= b < a;
        parts.push(format!("seed {seed}: D=250 {a:.4}, D=2000 {b:.4}"));
    }
    verdict(pass, format!("tv distance smaller at D=2000 for every seed; {}", parts.join("; ")))
}

fn born_window(runs: &LongRuns, tmp: &Path) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for (seed, long) in runs.seeds.iter().zip(&runs.runs) {
        let short = profile(&profile_config("weak_short.toml", *seed, &tmp.join(format!("c7_{seed}"))));
        let weight = |o: &ProfileOutcome| {
            o.summary
                .born_windows
                .iter()
                .find(|w| (w.delta - 0.1).abs() < 1e-12)
                .expect("window 0.1 configured")
                .incoherent
        };
        let (a, b) = (weight(&short), weight(long));
        pass &= b > a;
        parts.push(format!("seed {seed}: L=25 {a:.4}, L=250 {b:.4}"));
    }
    verdict(pass, format!("incoherent weight at delta 0.1 larger for L=250; {}", parts.join("; ")))
}

fn strong_coupling(tmp: &Path) -> Verdict {
    let mut parts = Vec::new();
    let mut pass = true;
    for seed in 1..=3 {
        let weak = profile(&model_config(ModelSpec::new(150, 100, 0.0025, 250, seed), &tmp.join(format!("c8_w{seed}"))));
        let mut strong_spec = ModelSpec::new(150, 100, 25.0, 250, seed);
        strong_spec.tau_rescale = 10.0;
        let strong = profile(&model_config(strong_spec, &tmp.join(format!("c8_s{seed}"))));
        let (a, b) = (weak.summary.tv_distance, strong.summary.tv_distance);
        pass &= b > a;
        parts.push(format!("seed {seed}: c=0.0025 {a:.4}, c=25 {b:.4}"));
    }
    verdict(pass, format!("tv distance larger at strong coupling for every seed; {}", parts.join("; ")))
}

fn determinism(tmp: &Path) -> Verdict {
    let mut mismatches = Vec::new();
    let mut compare = |what: &str, a: &Path, b: &Path| {
        if fs::read(a).unwrap() != fs::read(b).unwrap() {
            mismatches.push(what.to_owned());
        }
    };

    let pool = |n| rayon::ThreadPoolBuilder::new().num_threads(n).build().unwrap();
    let replay = |kind: ExperimentKind, file: &str, tag: &str, threads: usize| {
        let mut config = ExperimentConfig::load(&config_file(file), Some(kind)).unwrap();
        config.out_dir = tmp.join(format!("c9_{tag}_{threads}"));
        if kind == ExperimentKind::Profile {
            config.pairwise = true;
        }
        if kind == ExperimentKind::Sweep {
            config.model.length = 5;
            config.sweep = Some(SweepAxes {
                dims: Some(vec![40, 60]),
                lengths: Some(vec![4, 6]),
                couplings: None,
                splits: None,
            });
        }
        if kind == ExperimentKind::Trajectory {
            config.points_per_gap = 10;
        }
        pool(threads).install(|| match kind {
            ExperimentKind::Profile => run_profile(&config).map(|_| ()),
            ExperimentKind::Trajectory => run_trajectory(&config).map(|_| ()),
            ExperimentKind::Oracle => run_oracle(&config).map(|_| ()),
            ExperimentKind::Sweep => run_sweep(&config).map(|_| ()),
        })
        .unwrap();
        config.out_dir
    };

    for (kind, file, tag, files) in [
        (ExperimentKind::Profile, "weak_short.toml", "profile", vec!["profile.csv", "pairwise_eps.csv"]),
        (ExperimentKind::Trajectory, "trajectory.toml", "trajectory", vec!["trajectory.csv"]),
        (ExperimentKind::Sweep, "sweep.toml", "sweep", vec!["aggregate.csv"]),
    ] {
        let a = replay(kind, file, tag, 1);
        let b = replay(kind, file, tag, 4);
        let c = replay(kind, file, &format!("{tag}_again"), 1);
        for f in files {
            compare(&format!("{tag}/{f} across thread counts"), &a.join(f), &b.join(f));
            compare(&format!("{tag}/{f} on replay"), &a.join(f), &c.join(f));
        }
    }
    let a = replay(ExperimentKind::Oracle, "oracle.toml", "oracle", 1);
    let b = replay(ExperimentKind::Oracle, "oracle.toml", "oracle", 4);
    let strip = |p: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&fs::read_to_string(p.join("oracle_report.json")).unwrap()).unwrap();
        v.as_object_mut().unwrap().remove("wall_time_seconds");
        v.as_object_mut().unwrap().remove("config");
        v
    };
    if strip(&a) != strip(&b) {
        mismatches.push("oracle report across thread counts".into());
    }

    if mismatches.is_empty() {
        verdict(true, "profile, trajectory, sweep and oracle outputs identical on replay and across 1 and 4 threads".into())
    } else {
        verdict(false, format!("differences: {}", mismatches.join(", ")))
    }
}

fn main() -> ExitCode {
    // the libtest flags cargo passes (--quiet, filters) do not apply here
    let tmp = TempDir::new().unwrap();
    let root = tmp.path();

    let seeds = vec![1, 2, 3];
    let mut runs = Vec::new();
    let mut seconds = Vec::new();
    for &seed in &seeds {
        let started = Instant::now();
        let mut config = profile_config("weak_long.toml", seed, &root.join(format!("long_{seed}")));
        config.delta_list = vec![0.1];
        runs.push(profile(&config));
        seconds.push(started.elapsed().as_secs_f64());
    }
    let long_runs = LongRuns { seeds, runs, seconds };

    let criteria: Vec<(&str, Check)> = vec![
        ("oracle equivalence", Box::new(|| oracle_equivalence(root))),
        ("conservation", Box::new(|| conservation(&long_runs))),
        ("single-split exactness", Box::new(|| single_split(root))),
        ("equilibration", Box::new(equilibration)),
        ("weak-coupling eps profile", Box::new(|| weak_coupling_profile(&long_runs))),
        ("finite-size trend", Box::new(|| finite_size(root))),
        ("Born-window concentration", Box::new(|| born_window(&long_runs, root))),
        ("strong-coupling contrast", Box::new(|| strong_coupling(root))),
        ("determinism", Box::new(|| determinism(root))),
    ];

    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let v = check();
        if !v.pass {
            failed += 1;
        }
        println!("criterion {} {name}: {} | {}", i + 1, if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}

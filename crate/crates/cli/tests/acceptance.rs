//! Acceptance suite: one PASS/FAIL line per criterion on stderr (written
//! past the test harness's capture), then command-line behavior tests.

use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use gammaflow::energy::{Energy, WithFidelity};
use gammaflow::optim::{grad_check, DiscreteEnergy};
use gammaflow::profile::{derivative_energy, derivative_energy_closed_form, hermite_profile, length_energy_min};
use gammaflow::schedule::{mn_lemma_ratios, sub_prop_holds, threshold_grid, truncated_bound_margin};
use gammaflow::transition::{LengthGrid, Resolution, SplineCoordinates, SplineEnergy, TransitionProblem};
use gammaflow::{Coefficient, Grid, Profile, Rational, RationalPolynomial, Scaling, Schedule};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_gammaflow");

fn repo_root() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../..")
}

fn config(name: &str) -> PathBuf {
    repo_root().join("configs").join(format!("{name}.json"))
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(name);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn gammaflow(args: &[&str]) -> Output {
    Command::new(BIN).args(args).output().expect("binary runs")
}

struct Verdict {
    passed: bool,
    detail: String,
}

fn verdict(passed: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        passed,
        detail: detail.into(),
    }
}

fn binomial(n: i64, r: i64) -> i64 {
    (1..=r).fold(1, |acc, i| acc * (n - r + i) / i)
}

/// `s^k·Σ_{j<k} C(k-1+j, j)·(1-s)^j`.
fn smoothstep(k: usize) -> RationalPolynomial {
    let s = RationalPolynomial::identity();
    let one_minus = &RationalPolynomial::constant(Rational::from_i64(1)) - &s;
    let mut sk = RationalPolynomial::constant(Rational::from_i64(1));
    for _ in 0..k {
        sk = &sk * &s;
    }
    let mut sum = RationalPolynomial::zero();
    let mut pow = RationalPolynomial::constant(Rational::from_i64(1));
    for j in 0..k as i64 {
        let c = RationalPolynomial::constant(Rational::from_i64(binomial(k as i64 - 1 + j, j)));
        sum = &sum + &(&c * &pow);
        pow = &pow * &one_minus;
    }
    &sk * &sum
}

fn exact_constants() -> Verdict {
    let mut bad = Vec::new();
    for k in 1..=6 {
        let v = hermite_profile(k).unwrap();
        if v != smoothstep(k) {
            bad.push(format!("profile k={k}"));
        }
        let c = derivative_energy(&v, k);
        if c != Rational::from_integer(derivative_energy_closed_form(k)) {
            bad.push(format!("c_{k} = {c}"));
        }
    }
    let first: Vec<String> = (1..=3)
        .map(|k| derivative_energy(&hermite_profile(k).unwrap(), k).to_string())
        .collect();
    if first != ["1", "12", "720"] {
        bad.push(format!("c_1..c_3 = {first:?}"));
    }
    verdict(
        bad.is_empty(),
        if bad.is_empty() {
            "k = 1..6 exact".into()
        } else {
            bad.join(", ")
        },
    )
}

fn numerical_m_k() -> Verdict {
    let res = Resolution {
        nodes_per_unit: 4001,
        ..Resolution::default()
    };
    let mut worst = 0.0f64;
    let mut parts = Vec::new();
    let mut converged = true;
    for k in 1..=4 {
        let prof = Profile::new(k).unwrap();
        let problem = TransitionProblem::clamped(k, 1.0);
        let upper = problem.clamped_upper_bound(prof.c_k_real());
        let found = problem.search(&LengthGrid::default(), &res, upper).unwrap();
        let gap = (found.best.value - prof.m_k).abs() / prof.m_k;
        worst = worst.max(gap);
        converged &= found.best.converged;
        parts.push(format!("k={k} {:.6}", found.best.value));
    }
    verdict(
        worst <= 1e-3 && converged,
        format!("{}; worst relative gap {worst:.2e}", parts.join(", ")),
    )
}

fn homogeneity() -> Verdict {
    let mut worst = 0.0f64;
    for k in 1..=4 {
        let prof = Profile::new(k).unwrap();
        for z in [0.5, 1.0, 2.0] {
            let (t, m) = length_energy_min(k, prof.c_k_real() * z * z);
            let root = z.powf(1.0 / k as f64);
            worst = worst
                .max((m - prof.m_k * root).abs() / (prof.m_k * root))
                .max((t - prof.t_star * root).abs() / (prof.t_star * root));
        }
    }
    verdict(worst <= 1e-12, format!("worst relative gap {worst:.2e}"))
}

/// Runs a shipped config through the binary; passes iff it exits 0.
fn run_config(sub: &str, name: &str) -> (bool, String) {
    let out = scratch("acceptance").join(name);
    let o = gammaflow(&[
        sub,
        "--config",
        config(name).to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
    ]);
    let text = String::from_utf8_lossy(&o.stdout);
    let failed: Vec<&str> = text.lines().filter(|l| l.starts_with("FAIL")).collect();
    let detail = if failed.is_empty() {
        format!("{name}: {} checks pass", text.lines().count())
    } else {
        format!("{name}: {}", failed.join(" | "))
    };
    (o.status.code() == Some(0), detail)
}

fn sweeps(sub: &str, names: &[&str]) -> Verdict {
    let runs: Vec<(bool, String)> = names.iter().map(|n| run_config(sub, n)).collect();
    verdict(
        runs.iter().all(|r| r.0),
        runs.into_iter().map(|r| r.1).collect::<Vec<_>>().join("; "),
    )
}

fn schedule_limits() -> Verdict {
    let ratios: Vec<(f64, f64)> = (3..=15)
        .map(|n| mn_lemma_ratios(&Schedule::canonical(10f64.powi(-n)).unwrap()))
        .collect();
    let a_down = ratios.windows(2).all(|w| w[1].0 < w[0].0);
    let b_up = ratios.windows(2).all(|w| w[1].1 > w[0].1) && ratios.iter().all(|r| r.1 < 1.0);
    let mut sub_fail = Vec::new();
    let mut margins = Vec::new();
    for n in 6..=12 {
        let s = Schedule::canonical(10f64.powi(-n)).unwrap();
        let zs = threshold_grid(&s, 2.0, 100);
        let misses = zs.iter().filter(|&&z| !sub_prop_holds(&s, 0.5, z)).count();
        if misses > 0 {
            sub_fail.push(format!("1e-{n}: {misses}/100"));
        }
        margins.push(format!("{:.3}", truncated_bound_margin(&s, &zs)));
    }
    let (ra, rb) = (ratios.last().unwrap().0, ratios.last().unwrap().1);
    let mut detail = format!(
        "c_eps|log eps| decreasing: {a_down} (1e-15: {ra:.4}); r_b increasing below 1: {b_up} (1e-15: {rb:.4}); "
    );
    if sub_fail.is_empty() {
        detail += "lower bound holds on every grid";
    } else {
        detail += &format!(
            "lower bound fails at {}; truncated-bound margins {}",
            sub_fail.join(", "),
            margins.join(", ")
        );
    }
    verdict(a_down && b_up && sub_fail.is_empty(), detail)
}

fn random_signal(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut u = Vec::with_capacity(n);
    let mut v = rng.gen_range(-1.0..1.0);
    for _ in 0..n {
        v += rng.gen_range(-0.05..0.05);
        u.push(v);
    }
    u
}

fn gradient_checks() -> Verdict {
    let grid = Grid::unit(48).unwrap();
    let mut energies: Vec<(String, Box<dyn DiscreteEnergy<f64>>)> = Vec::new();
    for k in 1..=3 {
        for eps in [1e-3, 1e-6] {
            let s = Schedule::canonical(eps).unwrap();
            let p = Scaling::new(2.0, 0.5).unwrap();
            let on = |e: Energy<f64>| -> Box<dyn DiscreteEnergy<f64>> { Box::new(e.on_grid(grid).unwrap()) };
            energies.push((
                format!("log k={k} eps={eps:e}"),
                on(Energy::perona_malik(&s, k).unwrap()),
            ));
            energies.push((
                format!("truncated k={k} eps={eps:e}"),
                on(Energy::truncated_quadratic(eps, k).unwrap()),
            ));
            energies.push((
                format!("threshold k={k} eps={eps:e}"),
                on(Energy::threshold_quadratic(&s, k, Some((0.2, 0.7))).unwrap()),
            ));
            energies.push((
                format!("surface k={k} eps={eps:e}"),
                on(Energy::surface_scaled(eps, k).unwrap()),
            ));
            energies.push((
                format!("scaled k={k} eps={eps:e}"),
                on(Energy::scaled_perona_malik(&s, k, &p, 1.5).unwrap()),
            ));
            let inner = Energy::perona_malik(&s, k).unwrap().on_grid(grid).unwrap();
            energies.push((
                format!("fidelity k={k} eps={eps:e}"),
                Box::new(WithFidelity::new(inner, vec![0.25; grid.n()], 40.0).unwrap()),
            ));
        }
        let coords = SplineCoordinates::new(k, 64, 1.7).unwrap();
        energies.push((format!("spline k={k}"), Box::new(SplineEnergy::new(coords, 0.8))));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut worst = (0.0f64, String::new());
    for (name, e) in &energies {
        for _ in 0..10 {
            let x = random_signal(&mut rng, e.dim());
            let r = grad_check(e.as_ref(), &x, 1e-5);
            if !(r <= worst.0) {
                worst = (r, name.clone());
            }
        }
    }
    verdict(
        worst.0 <= 1e-6,
        format!(
            "{} energies x 10 signals; worst {:.2e} ({})",
            energies.len(),
            worst.0,
            worst.1
        ),
    )
}

const SHIPPED: [(&str, &str); 6] = [
    ("sweep", "recovery_k1"),
    ("sweep", "recovery_k2"),
    ("sweep", "surface_k2"),
    ("sweep", "scaling_k2"),
    ("densities", "densities_k3"),
    ("staircase", "staircase"),
];

fn determinism() -> Verdict {
    let mut differing = Vec::new();
    for (sub, name) in SHIPPED {
        let mut outputs = Vec::new();
        let stem = scratch("determinism").join(name);
        for threads in ["1", "4"] {
            Command::new(BIN)
                .args([
                    sub,
                    "--config",
                    config(name).to_str().unwrap(),
                    "--out",
                    stem.to_str().unwrap(),
                ])
                .env("GAMMAFLOW_THREADS", threads)
                .output()
                .unwrap();
            let read = |ext| std::fs::read(stem.with_extension(ext)).unwrap_or_default();
            outputs.push((read("csv"), read("json")));
        }
        if outputs[0] != outputs[1] || outputs[0].0.is_empty() {
            differing.push(name);
        }
    }
    verdict(
        differing.is_empty(),
        if differing.is_empty() {
            format!("{} configs byte-identical across runs and thread counts", SHIPPED.len())
        } else {
            format!("outputs differ for {}", differing.join(", "))
        },
    )
}

#[test]
fn acceptance_criteria() {
    type Criterion = Box<dyn Fn() -> Verdict>;
    let criteria: Vec<(&str, Criterion)> = vec![
        ("exact profile and c_k", Box::new(exact_constants)),
        ("numerical m_k", Box::new(numerical_m_k)),
        ("homogeneity", Box::new(homogeneity)),
        (
            "recovery sweep",
            Box::new(|| sweeps("sweep", &["recovery_k1", "recovery_k2"])),
        ),
        ("surface sweep", Box::new(|| sweeps("sweep", &["surface_k2"]))),
        ("scaling law", Box::new(|| sweeps("sweep", &["scaling_k2"]))),
        ("density hierarchy", Box::new(|| sweeps("densities", &["densities_k3"]))),
        ("schedule limits", Box::new(schedule_limits)),
        ("gradient checks", Box::new(gradient_checks)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = Vec::new();
    let mut err = std::io::stderr().lock();
    for (i, (name, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let v = check();
        let status = if v.passed { "PASS" } else { "FAIL" };
        writeln!(
            err,
            "criterion {:>2} {status} {name} ({:.1}s): {}",
            i + 1,
            start.elapsed().as_secs_f64(),
            v.detail
        )
        .unwrap();
        if !v.passed {
            failed.push(i + 1);
        }
    }
    assert!(failed.is_empty(), "criteria failing: {failed:?}");
}

#[test]
fn mk_json_matches_golden() {
    for args in [
        &["mk", "--k", "2", "--json"][..],
        &["mk", "--k", "3", "--alpha", "2", "--kappa", "1", "--json"],
    ] {
        let o = gammaflow(args);
        assert_eq!(o.status.code(), Some(0));
        let golden = repo_root()
            .join("crates/cli/tests/golden")
            .join(format!("{}.json", args[1..].join("_").replace("--", "")));
        let expected = std::fs::read_to_string(&golden).unwrap_or_else(|e| panic!("{}: {e}", golden.display()));
        assert_eq!(String::from_utf8(o.stdout).unwrap(), expected);
    }
}

#[test]
fn mk_plain_and_scaled_identity_agree() {
    let plain = String::from_utf8(gammaflow(&["mk", "--k", "2"]).stdout).unwrap();
    assert!(plain.contains("m_k = 3.26598632"));
    let o = gammaflow(&["mk", "--k", "2", "--alpha", "1", "--kappa", "1", "--json"]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["m_scaled"], v["m_k"]);
    assert_eq!(v["schema"], 1);
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(gammaflow(&["mk", "--k", "0"]).status.code(), Some(2));
    assert_eq!(gammaflow(&["mk", "--k", "2", "--alpha", "1"]).status.code(), Some(2));
    assert_eq!(
        gammaflow(&["mk", "--k", "2", "--alpha", "-1", "--kappa", "1"])
            .status
            .code(),
        Some(2)
    );
    assert_eq!(
        gammaflow(&["sweep", "--config", "/nonexistent/cfg.json"]).status.code(),
        Some(2)
    );
    let wrong_kind = gammaflow(&["densities", "--config", config("recovery_k1").to_str().unwrap()]);
    assert_eq!(wrong_kind.status.code(), Some(2));
    let o = Command::new(BIN)
        .args(["mk", "--k", "1"])
        .env("GAMMAFLOW_THREADS", "zero")
        .output()
        .unwrap();
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn profile_csv_rows() {
    let out = scratch("profile").join("k2.csv");
    let o = gammaflow(&["profile", "--k", "2", "--samples", "5", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0));
    let text = std::fs::read_to_string(&out).unwrap();
    let rows: Vec<Vec<f64>> = text
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect();
    assert_eq!(rows.len(), 5);
    assert_eq!(rows[1][1], 0.15625);
    assert_eq!((rows[0][1], rows[4][1]), (0.0, 1.0));
    for i in 0..5 {
        assert!((rows[i][1] + rows[4 - i][1] - 1.0).abs() < 1e-15);
    }
    let missing = gammaflow(&[
        "profile",
        "--k",
        "2",
        "--samples",
        "5",
        "--out",
        "/nonexistent/dir/p.csv",
    ]);
    assert_eq!(missing.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing.stderr).contains("/nonexistent/dir/p.csv"));
}

#[test]
fn eps_list_override_sets_row_count() {
    let stem = scratch("override").join("k1");
    let o = gammaflow(&[
        "sweep",
        "--config",
        config("recovery_k1").to_str().unwrap(),
        "--eps-list",
        "1e-4,1e-6,1e-8",
        "--out",
        stem.to_str().unwrap(),
        "--json",
    ]);
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(v["schema"], 1);
    assert_eq!(v["config"]["eps"].as_array().unwrap().len(), 3);
    let csv = std::fs::read_to_string(stem.with_extension("csv")).unwrap();
    assert_eq!(csv.lines().count(), 4);
    let bad = gammaflow(&[
        "sweep",
        "--config",
        config("recovery_k1").to_str().unwrap(),
        "--eps-list",
        "1e-6,1e-4",
    ]);
    assert_eq!(bad.status.code(), Some(2));
}

//! Experiment orchestration: ε-sweeps of recovery sequences, the scaling
//! check, density tables and the staircase demonstration.
//!
//! Every experiment yields a [`Report`]: a CSV table plus a JSON summary of
//! fitted values and named pass/fail checks. Rows are independent and run
//! on the rayon pool; results keep config order, so output bytes depend
//! only on the config.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::densities::{DensitySolver, Level};
use crate::energy::{limit_scaled, limit_surface, limit_value, Energy, EnergyParts, WithFidelity};
use crate::error::{Error, Result};
use crate::fit::{fit_limit, Correction, LimitFit};
use crate::grid::{d1, Grid1D, Signal};
use crate::optim::{minimize, minimize_newton, LinearConstraints, Options};
use crate::profile::{m_scaled, scaled_jump_coefficient, OptimalProfile, ScalingParams};
use crate::recovery::{build_recovery, build_recovery_scaled, build_recovery_surface, flatten, Pasting};
use crate::sbv::{Jump, SbvSignal};
use crate::schedule::EpsSchedule;
use crate::transition::{LengthGrid, Resolution};

/// Version of the JSON summary layout.
pub const SCHEMA: u32 = 1;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    #[serde(flatten)]
    pub experiment: Experiment,
    /// Output stem: `<stem>.csv` and `<stem>.json`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Experiment {
    RecoverySweep(SweepConfig),
    SurfaceSweep(SweepConfig),
    ScalingCheck(ScalingConfig),
    DensityTable(DensityConfig),
    Staircase(StaircaseConfig),
}

fn default_last() -> usize {
    5
}

fn default_model() -> Correction {
    Correction::LogLogInverse
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitConfig {
    #[serde(default = "default_model")]
    pub model: Correction,
    /// Rows at the small-`ε` end used by the fit.
    #[serde(default = "default_last")]
    pub last: usize,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            model: default_model(),
            last: default_last(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlattenConfig {
    pub eta: f64,
    #[serde(default)]
    pub n_min_jump: f64,
}

fn default_sweep_tolerance() -> f64 {
    0.02
}

fn yes() -> bool {
    true
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SweepConfig {
    pub k: usize,
    /// Strictly decreasing, each admissible for the canonical schedule.
    pub eps: Vec<f64>,
    pub signal: SbvSignal<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub flatten: Option<FlattenConfig>,
    #[serde(default)]
    pub pasting: Pasting,
    #[serde(default)]
    pub fit: FitConfig,
    /// Relative tolerance on the extrapolated jump energy.
    #[serde(default = "default_sweep_tolerance")]
    pub tolerance: f64,
    /// Require `|residual|` to decrease strictly along the sweep.
    #[serde(default = "yes")]
    pub monotone: bool,
}

fn default_scaling_tolerance() -> f64 {
    0.03
}

fn default_bulk_tolerance() -> f64 {
    0.01
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ScalingConfig {
    pub k: usize,
    pub eps: Vec<f64>,
    pub pairs: Vec<ScalingParams<f64>>,
    /// Coefficient inside the logarithm.
    #[serde(default = "one")]
    pub c: f64,
    pub signal: SbvSignal<f64>,
    #[serde(default)]
    pub pasting: Pasting,
    #[serde(default)]
    pub fit: FitConfig,
    #[serde(default = "default_scaling_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_bulk_tolerance")]
    pub bulk_tolerance: f64,
}

fn default_nodes_per_unit() -> usize {
    Resolution::<f64>::default().nodes_per_unit
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DensityConfig {
    pub k: usize,
    pub z: Vec<f64>,
    /// Bound levels `N`.
    pub levels: Vec<f64>,
    #[serde(default)]
    pub theta: Vec<f64>,
    /// `ε` values for the schedule-bounded density.
    #[serde(default)]
    pub eps: Vec<f64>,
    /// Add the clamped (`N = ∞`) identity row at `z = 1`.
    #[serde(default = "yes")]
    pub unbounded: bool,
    #[serde(default = "default_nodes_per_unit")]
    pub nodes_per_unit: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum DataSpec {
    Zero,
    Ramp {
        slope: f64,
    },
    /// Two-column `x,u` file; its grid replaces `n`.
    Csv {
        path: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Noise {
    /// Uniform noise on `[-amplitude, amplitude]`.
    pub amplitude: f64,
    pub seed: u64,
}

fn default_staircase_iters() -> usize {
    20_000
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StaircaseConfig {
    pub k: usize,
    pub eps: f64,
    pub n: usize,
    pub lambda: f64,
    pub data: DataSpec,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise: Option<Noise>,
    /// Also solve on the doubled grid, starting from the interpolated
    /// solution, and compare censuses.
    #[serde(default = "yes")]
    pub refine: bool,
    #[serde(default = "default_staircase_iters")]
    pub max_iter: usize,
}

impl ExperimentConfig {
    pub fn from_json_str(s: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(s)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json_str(&text)
    }

    pub fn kind(&self) -> &'static str {
        match self.experiment {
            Experiment::RecoverySweep(_) => "recovery_sweep",
            Experiment::SurfaceSweep(_) => "surface_sweep",
            Experiment::ScalingCheck(_) => "scaling_check",
            Experiment::DensityTable(_) => "density_table",
            Experiment::Staircase(_) => "staircase",
        }
    }

    /// The `ε` list for kinds that sweep one.
    pub fn eps_mut(&mut self) -> Option<&mut Vec<f64>> {
        match &mut self.experiment {
            Experiment::RecoverySweep(c) | Experiment::SurfaceSweep(c) => Some(&mut c.eps),
            Experiment::ScalingCheck(c) => Some(&mut c.eps),
            Experiment::DensityTable(c) => Some(&mut c.eps),
            Experiment::Staircase(_) => None,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match &self.experiment {
            Experiment::RecoverySweep(c) | Experiment::SurfaceSweep(c) => {
                check_k(c.k)?;
                check_sweep_eps(&c.eps)?;
                check_positive("tolerance", c.tolerance)
            }
            Experiment::ScalingCheck(c) => {
                check_k(c.k)?;
                check_sweep_eps(&c.eps)?;
                c.pairs.iter().try_for_each(ScalingParams::validate)?;
                check_positive("c", c.c)?;
                check_positive("tolerance", c.tolerance)?;
                check_positive("bulk_tolerance", c.bulk_tolerance)
            }
            Experiment::DensityTable(c) => {
                if c.k < 2 {
                    return Err(Error::domain(format!("density tables need k >= 2, got {}", c.k)));
                }
                c.eps.iter().try_for_each(|&e| EpsSchedule::canonical(e).map(|_| ()))?;
                c.levels.iter().try_for_each(|&n| Level::finite(n).map(|_| ()))?;
                if let Some(t) = c.theta.iter().find(|&&t| !(t > 0.0 && t < 1.0)) {
                    return Err(Error::domain(format!("theta = {t} outside (0, 1)")));
                }
                if let Some(z) = c.z.iter().find(|&&z| z == 0.0 || !z.is_finite()) {
                    return Err(Error::domain(format!("jump height {z} must be finite and nonzero")));
                }
                Ok(())
            }
            Experiment::Staircase(c) => {
                check_k(c.k)?;
                EpsSchedule::extended(c.eps)?;
                check_positive("lambda", c.lambda)?;
                if c.n < c.k + 2 {
                    return Err(Error::domain(format!("staircase grid of {} nodes is too small", c.n)));
                }
                Ok(())
            }
        }
    }
}

fn check_k(k: usize) -> Result<()> {
    if (1..=12).contains(&k) {
        Ok(())
    } else {
        Err(Error::domain(format!("derivative order k = {k} outside 1..=12")))
    }
}

fn check_positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::domain(format!("{name} = {v} must be positive")))
    }
}

fn check_sweep_eps(eps: &[f64]) -> Result<()> {
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(Error::domain("eps list must be strictly decreasing"));
    }
    eps.iter().try_for_each(|&e| EpsSchedule::canonical(e).map(|_| ()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self {
            name: name.into(),
            passed,
            detail: detail.into(),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Report {
    pub schema: u32,
    pub config: ExperimentConfig,
    pub fitted: Value,
    pub checks: Vec<Check>,
    #[serde(skip)]
    pub csv: String,
}

impl Report {
    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    /// Writes `<stem>.csv` and `<stem>.json`.
    pub fn write(&self, stem: &Path) -> Result<()> {
        if let Some(dir) = stem.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let csv = stem.with_extension("csv");
        std::fs::write(&csv, &self.csv).map_err(|e| Error::io(&csv, e))?;
        let json = stem.with_extension("json");
        std::fs::write(&json, self.to_json_string()?).map_err(|e| Error::io(&json, e))?;
        Ok(())
    }
}

pub fn run(cfg: &ExperimentConfig) -> Result<Report> {
    cfg.validate()?;
    let (csv, fitted, checks) = match &cfg.experiment {
        Experiment::RecoverySweep(c) => run_recovery_sweep(c, Target::Log)?,
        Experiment::SurfaceSweep(c) => run_recovery_sweep(c, Target::Surface)?,
        Experiment::ScalingCheck(c) => run_scaling_check(c)?,
        Experiment::DensityTable(c) => run_density_table(c)?,
        Experiment::Staircase(c) => run_staircase(c)?,
    };
    Ok(Report {
        schema: SCHEMA,
        config: cfg.clone(),
        fitted,
        checks,
        csv,
    })
}

type Outcome = (String, Value, Vec<Check>);

fn to_csv<R: Serialize>(rows: &[R]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::domain(format!("csv buffer: {e}")))?;
    String::from_utf8(bytes).map_err(|e| Error::domain(format!("csv encoding: {e}")))
}

/// One `ε` of a recovery sweep. `residual = value - target` as computed.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub eps: f64,
    pub p_eps: f64,
    pub c_eps: f64,
    pub nodes: usize,
    pub bulk: f64,
    pub penalty: f64,
    pub value: f64,
    /// Bulk part of the limit.
    pub dirichlet: f64,
    /// `value - dirichlet`.
    pub jump_energy: f64,
    pub target: f64,
    pub residual: f64,
    pub ok: bool,
    pub error: String,
}

impl SweepRow {
    fn failed(s: Option<EpsSchedule<f64>>, eps: f64, err: &Error) -> Self {
        Self {
            eps,
            p_eps: s.map_or(f64::NAN, |s| s.p_eps),
            c_eps: s.map_or(f64::NAN, |s| s.c_eps),
            nodes: 0,
            bulk: f64::NAN,
            penalty: f64::NAN,
            value: f64::NAN,
            dirichlet: f64::NAN,
            jump_energy: f64::NAN,
            target: f64::NAN,
            residual: f64::NAN,
            ok: false,
            error: err.to_string(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Target {
    Log,
    Surface,
    Scaled(ScalingParams<f64>, f64),
}

fn sweep_row(
    u: &SbvSignal<f64>,
    k: usize,
    prof: &OptimalProfile<f64>,
    eps: f64,
    target: Target,
    pasting: Pasting,
) -> SweepRow {
    let s = EpsSchedule::canonical(eps).ok();
    let attempt = || -> Result<SweepRow> {
        let s = EpsSchedule::canonical(eps)?;
        let (rec, energy, dirichlet, limit) = match target {
            Target::Log => (
                build_recovery(u, &s, prof, pasting)?,
                Energy::perona_malik(&s, k)?,
                u.dirichlet_energy(),
                limit_value(u, k)?,
            ),
            Target::Surface => (
                build_recovery_surface(u, eps, prof, pasting)?,
                Energy::surface_scaled(eps, k)?,
                0.0,
                limit_surface(u, k)?,
            ),
            Target::Scaled(p, c) => (
                build_recovery_scaled(u, &s, prof, &p, pasting)?,
                Energy::scaled_perona_malik(&s, k, &p, c)?,
                p.alpha * c * p.kappa * p.kappa * u.dirichlet_energy(),
                limit_scaled(u, k, &p, c)?,
            ),
        };
        let EnergyParts { bulk, penalty } = energy.parts_composite(&rec.signal)?;
        let value = bulk + penalty;
        Ok(SweepRow {
            eps,
            p_eps: s.p_eps,
            c_eps: s.c_eps,
            nodes: rec.node_count(),
            bulk,
            penalty,
            value,
            dirichlet,
            jump_energy: value - dirichlet,
            target: limit,
            residual: value - limit,
            ok: true,
            error: String::new(),
        })
    };
    attempt().unwrap_or_else(|e| SweepRow::failed(s, eps, &e))
}

fn fit_rows(rows: &[SweepRow], model: Correction, last: usize) -> Result<LimitFit<f64>> {
    let good: Vec<&SweepRow> = rows.iter().filter(|r| r.ok).collect();
    let eps: Vec<f64> = good.iter().map(|r| r.eps).collect();
    let y: Vec<f64> = good.iter().map(|r| r.jump_energy).collect();
    fit_limit(&eps, &y, model, last)
}

fn relative(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

fn run_recovery_sweep(cfg: &SweepConfig, target: Target) -> Result<Outcome> {
    let prof = OptimalProfile::<f64>::new(cfg.k)?;
    let u = match cfg.flatten {
        Some(f) => flatten(&cfg.signal, f.eta, f.n_min_jump)?,
        None => cfg.signal.clone(),
    };
    let rows: Vec<SweepRow> = cfg
        .eps
        .par_iter()
        .map(|&eps| sweep_row(&u, cfg.k, &prof, eps, target, cfg.pasting))
        .collect();

    let jump_target = prof.m_k * u.jump_sum(cfg.k);
    let has_jumps = !u.jumps().is_empty();
    let mut primary = fit_rows(&rows, cfg.fit.model, cfg.fit.last)?;
    let mut reference = fit_rows(&rows, Correction::LogLog, cfg.fit.last)?;
    if !has_jumps {
        primary.degenerate = true;
        reference.degenerate = true;
    }

    let mut checks = vec![Check::new(
        "rows_ok",
        rows.iter().all(|r| r.ok),
        format!(
            "{} of {} rows evaluated",
            rows.iter().filter(|r| r.ok).count(),
            rows.len()
        ),
    )];
    if has_jumps {
        let gap = relative(primary.limit, jump_target);
        checks.push(Check::new(
            "fitted_limit",
            !primary.degenerate && gap <= cfg.tolerance,
            format!(
                "fitted {:.6} vs {:.6}, relative gap {:.3e} (tolerance {})",
                primary.limit, jump_target, gap, cfg.tolerance
            ),
        ));
    } else {
        let worst = rows.iter().map(|r| relative(r.value, r.target)).fold(0.0, f64::max);
        checks.push(Check::new(
            "rows_near_target",
            rows.iter().all(|r| r.ok) && worst <= 1e-3,
            format!("largest relative deviation {worst:.3e} (tolerance 1e-3)"),
        ));
    }
    if cfg.monotone {
        let res: Vec<f64> = rows.iter().map(|r| r.residual.abs()).collect();
        let bad: Vec<String> = res
            .windows(2)
            .zip(&rows[1..])
            .filter(|(w, _)| !(w[1] < w[0]))
            .map(|(_, r)| format!("{:e}", r.eps))
            .collect();
        let detail = if bad.is_empty() {
            "|residual| strictly decreasing".to_string()
        } else {
            format!("|residual| fails to decrease at eps = {}", bad.join(", "))
        };
        checks.push(Check::new("residuals_monotone", bad.is_empty(), detail));
    }
    let fitted = json!({
        "jump_target": jump_target,
        "limit": primary,
        "reference": reference,
    });
    Ok((to_csv(&rows)?, fitted, checks))
}

#[derive(Clone, Debug, PartialEq)]
pub struct ScalingRow {
    pub alpha: f64,
    pub kappa: f64,
    pub jump: SweepRow,
    /// Value on `u = x`.
    pub bulk_value: f64,
    /// `α·c·κ²`.
    pub bulk_target: f64,
}

#[derive(Serialize)]
struct ScalingCsvRow<'a> {
    alpha: f64,
    kappa: f64,
    eps: f64,
    nodes: usize,
    value: f64,
    dirichlet: f64,
    jump_energy: f64,
    target: f64,
    residual: f64,
    bulk_value: f64,
    bulk_target: f64,
    ok: bool,
    error: &'a str,
}

impl<'a> From<&'a ScalingRow> for ScalingCsvRow<'a> {
    fn from(r: &'a ScalingRow) -> Self {
        let j = &r.jump;
        Self {
            alpha: r.alpha,
            kappa: r.kappa,
            eps: j.eps,
            nodes: j.nodes,
            value: j.value,
            dirichlet: j.dirichlet,
            jump_energy: j.jump_energy,
            target: j.target,
            residual: j.residual,
            bulk_value: r.bulk_value,
            bulk_target: r.bulk_target,
            ok: j.ok,
            error: &j.error,
        }
    }
}

fn run_scaling_check(cfg: &ScalingConfig) -> Result<Outcome> {
    let prof = OptimalProfile::<f64>::new(cfg.k)?;
    let ramp = SbvSignal::affine(1.0);
    let jobs: Vec<(ScalingParams<f64>, f64)> = cfg
        .pairs
        .iter()
        .flat_map(|&p| cfg.eps.iter().map(move |&e| (p, e)))
        .collect();
    let rows: Vec<ScalingRow> = jobs
        .par_iter()
        .map(|&(p, eps)| {
            let target = Target::Scaled(p, cfg.c);
            let jump = sweep_row(&cfg.signal, cfg.k, &prof, eps, target, cfg.pasting);
            let bulk = sweep_row(&ramp, cfg.k, &prof, eps, target, cfg.pasting);
            ScalingRow {
                alpha: p.alpha,
                kappa: p.kappa,
                jump,
                bulk_value: bulk.value,
                bulk_target: p.alpha * cfg.c * p.kappa * p.kappa,
            }
        })
        .collect();

    let jump_sum = cfg.signal.jump_sum(cfg.k);
    let mut checks = vec![Check::new(
        "rows_ok",
        rows.iter().all(|r| r.jump.ok && r.bulk_value.is_finite()),
        format!("{} rows", rows.len()),
    )];
    let mut fitted = Vec::new();
    for p in &cfg.pairs {
        let mine: Vec<&ScalingRow> = rows
            .iter()
            .filter(|r| r.alpha == p.alpha && r.kappa == p.kappa)
            .collect();
        let sweep: Vec<SweepRow> = mine.iter().map(|r| r.jump.clone()).collect();
        let fit = fit_rows(&sweep, cfg.fit.model, cfg.fit.last)?;
        let reference = fit_rows(&sweep, Correction::LogLog, cfg.fit.last)?;
        let kk = cfg.k as f64;
        // jump coefficient α^{1-1/(2k)}·m_k equals α·κ^{1/k}·m_scaled
        let normalizer = p.alpha * p.kappa.powf(1.0 / kk) * jump_sum;
        let normalized = fit.limit / normalizer;
        let expected = m_scaled(cfg.k, p)?;
        let gap = relative(normalized, expected);
        let label = format!("alpha={},kappa={}", p.alpha, p.kappa);
        checks.push(Check::new(
            format!("scaled_limit[{label}]"),
            jump_sum > 0.0 && !fit.degenerate && gap <= cfg.tolerance,
            format!(
                "normalized fit {normalized:.6} vs m_scaled {expected:.6}, relative gap {gap:.3e} (tolerance {})",
                cfg.tolerance
            ),
        ));
        let bulk_target = p.alpha * cfg.c * p.kappa * p.kappa;
        let worst = mine
            .iter()
            .map(|r| relative(r.bulk_value, bulk_target))
            .fold(0.0, f64::max);
        checks.push(Check::new(
            format!("bulk_coefficient[{label}]"),
            worst <= cfg.bulk_tolerance,
            format!(
                "largest relative deviation from {bulk_target} is {worst:.3e} (tolerance {})",
                cfg.bulk_tolerance
            ),
        ));
        fitted.push(json!({
            "alpha": p.alpha,
            "kappa": p.kappa,
            "limit": fit,
            "reference": reference,
            "jump_coefficient": scaled_jump_coefficient(cfg.k, p)?,
            "normalized": normalized,
            "m_scaled": expected,
            "gap": gap,
        }));
    }
    let table: Vec<ScalingCsvRow> = rows.iter().map(ScalingCsvRow::from).collect();
    Ok((to_csv(&table)?, Value::Array(fitted), checks))
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct DensityRow {
    /// `phi`, `m_of_n`, `psi` or `phi_eps`.
    pub kind: &'static str,
    pub k: usize,
    pub z: f64,
    /// Bound level; `inf` for the clamped problem.
    pub n: f64,
    pub theta: f64,
    pub eps: f64,
    pub value: f64,
    pub length: f64,
    pub converged: bool,
    /// `m_k|z|^{1/k}`.
    pub envelope: f64,
}

#[derive(Clone, Copy, Debug)]
enum DensityJob {
    Phi { z: f64, level: Level<f64> },
    Psi { z: f64, theta: f64, n: f64 },
    PhiEps { z: f64, eps: f64, n: f64 },
}

fn level_value(level: Level<f64>) -> f64 {
    match level {
        Level::Finite(n) => n,
        Level::Unbounded => f64::INFINITY,
    }
}

fn run_density_table(cfg: &DensityConfig) -> Result<Outcome> {
    let prof = OptimalProfile::<f64>::new(cfg.k)?;
    let solver = DensitySolver::new(
        LengthGrid::default(),
        Resolution {
            nodes_per_unit: cfg.nodes_per_unit,
            ..Resolution::default()
        },
    );
    let mut jobs = Vec::new();
    for &z in &cfg.z {
        for &n in &cfg.levels {
            jobs.push(DensityJob::Phi {
                z,
                level: Level::Finite(n),
            });
        }
    }
    if cfg.unbounded {
        jobs.push(DensityJob::Phi {
            z: 1.0,
            level: Level::Unbounded,
        });
    }
    for &z in &cfg.z {
        for &theta in &cfg.theta {
            for &n in &cfg.levels {
                jobs.push(DensityJob::Psi { z, theta, n });
            }
        }
        for &eps in &cfg.eps {
            for &n in &cfg.levels {
                jobs.push(DensityJob::PhiEps { z, eps, n });
            }
        }
    }
    let rows: Vec<DensityRow> = jobs
        .par_iter()
        .map(|job| -> Result<DensityRow> {
            let row = |kind, z: f64, n, theta, eps, v: crate::densities::DensityValue<f64>| DensityRow {
                kind,
                k: cfg.k,
                z,
                n,
                theta,
                eps,
                value: v.value,
                length: v.length,
                converged: v.converged,
                envelope: prof.jump_density(z),
            };
            Ok(match *job {
                DensityJob::Phi { z, level } => row(
                    "phi",
                    z,
                    level_value(level),
                    f64::NAN,
                    f64::NAN,
                    solver.phi(z, cfg.k, level)?,
                ),
                DensityJob::Psi { z, theta, n } => row(
                    "psi",
                    z,
                    n,
                    theta,
                    f64::NAN,
                    solver.psi(z, cfg.k, theta, Level::Finite(n))?,
                ),
                DensityJob::PhiEps { z, eps, n } => {
                    let s = EpsSchedule::canonical(eps)?;
                    row(
                        "phi_eps",
                        z,
                        n,
                        f64::NAN,
                        eps,
                        solver.phi_eps(z, &s, cfg.k, Level::Finite(n))?,
                    )
                }
            })
        })
        .collect::<Result<_>>()?;

    let phi = |z: f64, n: f64| {
        rows.iter()
            .find(|r| r.kind == "phi" && r.z == z && r.n == n)
            .map(|r| r.value)
    };
    let mut levels = cfg.levels.clone();
    levels.sort_by(f64::total_cmp);
    let mut zs: Vec<f64> = cfg.z.iter().map(|z| z.abs()).collect();
    zs.sort_by(f64::total_cmp);
    zs.dedup();

    let mut mono = Vec::new();
    for &z in &cfg.z {
        for w in levels.windows(2) {
            if let (Some(a), Some(b)) = (phi(z, w[0]), phi(z, w[1])) {
                if b < a - 2e-3 {
                    mono.push(format!("z={z} N={}->{}: {a:.6} > {b:.6}", w[0], w[1]));
                }
            }
        }
    }
    let envelope: Vec<String> = rows
        .iter()
        .filter(|r| r.kind == "phi" && r.value > r.envelope + 1e-3)
        .map(|r| format!("z={} N={}: {:.6} > {:.6}", r.z, r.n, r.value, r.envelope))
        .collect();
    let mut scaling = Vec::new();
    for &n in &levels {
        for (i, &z) in zs.iter().enumerate() {
            for &zp in &zs[i + 1..] {
                if let (Some(a), Some(b)) = (phi(z, n), phi(zp, n)) {
                    if b > zp / z * a + 1e-3 {
                        scaling.push(format!("N={n} z={z}->{zp}: {b:.6} > {:.6}", zp / z * a));
                    }
                }
            }
        }
    }
    let mut psi_fail = Vec::new();
    for r in rows.iter().filter(|r| r.kind == "psi") {
        for e in rows.iter().filter(|e| e.kind == "phi_eps" && e.z == r.z && e.n == r.n) {
            if r.value > e.value + 2e-3 {
                psi_fail.push(format!(
                    "z={} N={} theta={} eps={:e}: {:.6} > {:.6}",
                    r.z, r.n, r.theta, e.eps, r.value, e.value
                ));
            }
        }
    }
    let summary = |bad: &[String], ok: &str| if bad.is_empty() { ok.to_string() } else { bad.join("; ") };
    let mut checks = vec![
        Check::new(
            "monotone_in_n",
            mono.is_empty(),
            summary(&mono, "non-decreasing within 2e-3"),
        ),
        Check::new(
            "upper_envelope",
            envelope.is_empty(),
            summary(&envelope, "below m_k|z|^{1/k} + 1e-3"),
        ),
        Check::new(
            "scaling_inequality",
            scaling.is_empty(),
            summary(&scaling, "holds within 1e-3"),
        ),
        Check::new(
            "psi_below_phi_eps",
            psi_fail.is_empty(),
            summary(&psi_fail, "holds within 2e-3"),
        ),
        Check::new(
            "all_converged",
            rows.iter().all(|r| r.converged),
            format!(
                "{} of {} solves converged",
                rows.iter().filter(|r| r.converged).count(),
                rows.len()
            ),
        ),
    ];
    let mut identity = Value::Null;
    if let Some(r) = rows.iter().find(|r| r.kind == "phi" && r.n.is_infinite()) {
        let gap = relative(r.value, prof.m_k);
        checks.push(Check::new(
            "clamped_identity",
            gap <= 1e-3,
            format!(
                "clamped value {:.6} vs m_k {:.6}, relative gap {gap:.3e}",
                r.value, prof.m_k
            ),
        ));
        identity = json!({ "value": r.value, "m_k": prof.m_k, "gap": gap });
    }
    let fitted = json!({ "rows": rows.len(), "m_k": prof.m_k, "clamped": identity });
    Ok((to_csv(&rows)?, fitted, checks))
}

/// Plateau and jump counts of a discrete signal: maximal runs of cells with
/// `|u'|` at most the threshold, and of cells above it.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct Census {
    pub plateaus: usize,
    pub jumps: usize,
}

pub fn census(u: &Signal<f64>, threshold: f64) -> Census {
    let mut c = Census { plateaus: 0, jumps: 0 };
    let mut prev = None;
    for d in d1(u.values(), u.grid().h()) {
        let steep = d.abs() > threshold;
        if prev != Some(steep) {
            if steep {
                c.jumps += 1;
            } else {
                c.plateaus += 1;
            }
        }
        prev = Some(steep);
    }
    c
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StaircaseRow {
    pub x: f64,
    pub data: f64,
    pub u: f64,
}

/// Minimizer of the surface-scaled energy plus fidelity on one grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct StaircaseSolve {
    pub n: usize,
    pub value: f64,
    pub fidelity: f64,
    pub converged: bool,
    pub iterations: usize,
    pub residual: f64,
    pub census: Census,
    #[serde(skip)]
    pub u: Vec<f64>,
    #[serde(skip)]
    pub data: Vec<f64>,
}

fn staircase_data(cfg: &StaircaseConfig) -> Result<Signal<f64>> {
    let mut g = match &cfg.data {
        DataSpec::Zero => Signal::from_fn(Grid1D::unit(cfg.n)?, |_| 0.0),
        DataSpec::Ramp { slope } => Signal::from_fn(Grid1D::unit(cfg.n)?, |x| slope * x),
        DataSpec::Csv { path } => Signal::load_csv(path)?,
    };
    if let Some(noise) = cfg.noise {
        let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
        for v in g.values_mut() {
            *v += noise.amplitude * rng.gen_range(-1.0..=1.0);
        }
    }
    Ok(g)
}

/// Projected-gradient steps into a basin, then damped Newton to polish.
pub fn solve_staircase(cfg: &StaircaseConfig, data: &Signal<f64>, init: Vec<f64>) -> Result<StaircaseSolve> {
    let grid = *data.grid();
    let energy = Energy::surface_scaled(cfg.eps, cfg.k)?.on_grid(grid)?;
    let e = WithFidelity::new(energy, data.values().to_vec(), cfg.lambda)?;
    let opts = Options {
        tol: 1e-8,
        max_iter: cfg.max_iter,
    };
    let rough = minimize(&e, LinearConstraints::new(grid.n()), init, opts)?;
    let fine = minimize_newton(&e, rough.x, Options { max_iter: 200, ..opts })?;
    let threshold = EpsSchedule::extended(cfg.eps)?.threshold();
    let u = Signal::new(grid, fine.x)?;
    Ok(StaircaseSolve {
        n: grid.n(),
        value: fine.value,
        fidelity: e.fidelity(u.values()),
        converged: fine.converged,
        iterations: rough.iterations + fine.iterations,
        residual: fine.residual,
        census: census(&u, threshold),
        data: data.values().to_vec(),
        u: u.into_values(),
    })
}

/// Linear interpolation onto the grid with every cell halved.
fn prolong(u: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * u.len() - 1);
    for w in u.windows(2) {
        out.push(w[0]);
        out.push(0.5 * (w[0] + w[1]));
    }
    out.extend(u.last());
    out
}

fn run_staircase(cfg: &StaircaseConfig) -> Result<Outcome> {
    let data = staircase_data(cfg)?;
    let coarse = solve_staircase(cfg, &data, data.values().to_vec())?;
    let grid = *data.grid();
    let mut checks = vec![Check::new(
        "converged",
        coarse.converged,
        format!("{} iterations, residual {:.3e}", coarse.iterations, coarse.residual),
    )];
    let mut refined = Value::Null;
    if cfg.refine {
        let fine_grid = Grid1D::on_interval(grid.origin(), grid.end(), 2 * grid.n() - 1)?;
        let fine_data = Signal::new(fine_grid, prolong(data.values()))?;
        let fine = solve_staircase(cfg, &fine_data, prolong(&coarse.u))?;
        checks.push(Check::new(
            "refinement_stable",
            fine.census == coarse.census,
            format!(
                "{} plateaus / {} jumps at n = {}, {} / {} at n = {}",
                coarse.census.plateaus, coarse.census.jumps, coarse.n, fine.census.plateaus, fine.census.jumps, fine.n
            ),
        ));
        checks.push(Check::new(
            "refined_converged",
            fine.converged,
            format!("{} iterations, residual {:.3e}", fine.iterations, fine.residual),
        ));
        refined = serde_json::to_value(&fine)?;
    }
    let rows: Vec<StaircaseRow> = (0..grid.n())
        .map(|i| StaircaseRow {
            x: grid.node(i),
            data: coarse.data[i],
            u: coarse.u[i],
        })
        .collect();
    let threshold = EpsSchedule::extended(cfg.eps)?.threshold();
    let fitted = json!({ "threshold": threshold, "solve": coarse, "refined": refined });
    Ok((to_csv(&rows)?, fitted, checks))
}

/// A unit jump at `t = 1/2` with plateau radius `0.1`.
pub fn unit_jump() -> SbvSignal<f64> {
    SbvSignal::piecewise_constant(vec![Jump {
        t: 0.5,
        z: 1.0,
        eta: 0.1,
    }])
    .expect("valid unit jump")
}

/// `10^{-lo}, …, 10^{-hi}`.
pub fn decades(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|n| format!("1e-{n}").parse().expect("literal")).collect()
}

/// Human-readable one-line summary per check.
pub fn check_lines(report: &Report) -> String {
    let mut out = String::new();
    for c in &report.checks {
        let _ = writeln!(
            out,
            "{} {}: {}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.detail
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sweep(k: usize, signal: SbvSignal<f64>, eps: Vec<f64>) -> SweepConfig {
        SweepConfig {
            k,
            eps,
            signal,
            flatten: None,
            pasting: Pasting::default(),
            fit: FitConfig::default(),
            tolerance: 0.02,
            monotone: true,
        }
    }

    #[test]
    fn config_round_trip_and_validation() {
        let text = r#"{"kind":"recovery_sweep","k":2,"eps":[1e-4,1e-5],
            "signal":{"ac":[{"from":0,"to":1,"coeffs":[0]}],"jumps":[{"t":0.5,"z":1,"eta":0.1}]}}"#;
        let cfg = ExperimentConfig::from_json_str(text).unwrap();
        assert_eq!(cfg.kind(), "recovery_sweep");
        let back = serde_json::to_string(&cfg).unwrap();
        let again = ExperimentConfig::from_json_str(&back).unwrap();
        assert_eq!(serde_json::to_string(&again).unwrap(), back);
        let bad = text.replace("[1e-4,1e-5]", "[1e-5,1e-4]");
        assert!(ExperimentConfig::from_json_str(&bad).is_err());
        let big = text.replace("[1e-4,1e-5]", "[1e-2]");
        assert!(ExperimentConfig::from_json_str(&big).is_err());
        assert!(ExperimentConfig::from_json_str(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn k1_sweep_fits_two() {
        let (csv, fitted, checks) = run_recovery_sweep(&sweep(1, unit_jump(), decades(4, 12)), Target::Log).unwrap();
        assert_eq!(csv.lines().count(), 10);
        assert!(checks.iter().all(|c| c.passed), "{checks:?}");
        let m = fitted["limit"]["limit"].as_f64().unwrap();
        assert!((m - 2.0).abs() < 0.04);
    }

    #[test]
    fn ramp_rows_match_dirichlet_energy() {
        let (_, fitted, checks) =
            run_recovery_sweep(&sweep(2, SbvSignal::affine(1.0), decades(4, 8)), Target::Log).unwrap();
        assert!(fitted["limit"]["degenerate"].as_bool().unwrap());
        let near = checks.iter().find(|c| c.name == "rows_near_target").unwrap();
        assert!(near.passed, "{}", near.detail);
    }

    #[test]
    fn failed_rows_are_recorded() {
        let narrow = SbvSignal::piecewise_constant(vec![Jump {
            t: 0.5,
            z: 1.0,
            eta: 1e-4,
        }])
        .unwrap();
        let (csv, _, checks) = run_recovery_sweep(&sweep(2, narrow, vec![1e-3, 1e-6]), Target::Log).unwrap();
        assert!(!checks[0].passed);
        assert!(csv.contains("exceeds the plateau radius"));
    }

    #[test]
    fn census_counts_runs() {
        let g = Grid1D::unit(7).unwrap();
        let u = Signal::new(g, vec![0.0, 0.0, 1.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        assert_eq!(census(&u, 1.0), Census { plateaus: 3, jumps: 2 });
        assert_eq!(prolong(&[0.0, 2.0, 4.0]), vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn staircase_trivial_cases() {
        let cfg = StaircaseConfig {
            k: 2,
            eps: 1e-3,
            n: 201,
            lambda: 1e3,
            data: DataSpec::Zero,
            noise: None,
            refine: false,
            max_iter: 2000,
        };
        let data = staircase_data(&cfg).unwrap();
        let zero = solve_staircase(&cfg, &data, data.values().to_vec()).unwrap();
        assert!(zero.u.iter().all(|&v| v == 0.0) && zero.value == 0.0);

        let stiff = StaircaseConfig {
            lambda: 1e9,
            data: DataSpec::Ramp { slope: 1.0 },
            ..cfg
        };
        let data = staircase_data(&stiff).unwrap();
        let s = solve_staircase(&stiff, &data, data.values().to_vec()).unwrap();
        let sup = s.u.iter().zip(&s.data).fold(0.0f64, |m, (a, b)| m.max((a - b).abs()));
        assert!(sup < 1e-3, "{sup}");
    }

    #[test]
    fn decades_are_exact_literals() {
        assert_eq!(decades(4, 6), vec![1e-4, 1e-5, 1e-6]);
    }
}

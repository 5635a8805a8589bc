use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use gammaflow::harness::{self, Experiment, ExperimentConfig, Report};
use gammaflow::profile::{m_scaled, scaled_jump_coefficient, MAX_ORDER};
use gammaflow::{Error, Profile, Scaling};
use serde_json::json;

#[derive(Parser)]
#[command(
    name = "gammaflow",
    version,
    about = "Jump-energy constants, recovery sweeps and density tables"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print c_k, T* and m_k, optionally rescaled by (alpha, kappa).
    Mk {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=MAX_ORDER as i64))]
        k: u8,
        #[arg(long, requires = "kappa")]
        alpha: Option<f64>,
        #[arg(long, requires = "alpha")]
        kappa: Option<f64>,
        #[arg(long)]
        json: bool,
    },
    /// Write the optimal profile and its derivatives at uniform samples of [0, 1].
    Profile {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=MAX_ORDER as i64))]
        k: u8,
        #[arg(long, value_parser = clap::value_parser!(u32).range(2..))]
        samples: u32,
        #[arg(long)]
        out: PathBuf,
    },
    /// Recovery, surface or scaling sweep over eps.
    Sweep(RunArgs),
    /// Table of the bounded transition densities.
    Densities(RunArgs),
    /// Staircase demonstration on noisy data.
    Staircase(StaircaseArgs),
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    config: PathBuf,
    /// Comma-separated eps values replacing the config's list.
    #[arg(long, value_delimiter = ',')]
    eps_list: Option<Vec<f64>>,
    /// Output stem replacing the config's.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Print the JSON summary instead of the check lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct StaircaseArgs {
    #[command(flatten)]
    run: RunArgs,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
}

enum Failure {
    Usage(String),
    Runtime(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Runtime(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("error: {msg}");
        return ExitCode::from(2);
    }
    match dispatch(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(1)
        }
    }
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("GAMMAFLOW_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| format!("GAMMAFLOW_THREADS must be a positive integer, got {raw:?}"))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| e.to_string())
}

fn dispatch(cmd: Command) -> Result<bool, Failure> {
    match cmd {
        Command::Mk { k, alpha, kappa, json } => mk(k as usize, alpha.zip(kappa), json),
        Command::Profile { k, samples, out } => profile(k as usize, samples as usize, &out),
        Command::Sweep(args) => experiment(&args, &["recovery_sweep", "surface_sweep", "scaling_check"], |_| Ok(())),
        Command::Densities(args) => experiment(&args, &["density_table"], |_| Ok(())),
        Command::Staircase(args) => experiment(&args.run, &["staircase"], |cfg| {
            if let Experiment::Staircase(c) = &mut cfg.experiment {
                if let Some(n) = args.n {
                    c.n = n;
                }
                if let Some(l) = args.lambda {
                    c.lambda = l;
                }
                if let Some(seed) = args.seed {
                    match &mut c.noise {
                        Some(noise) => noise.seed = seed,
                        None => return Err(Failure::Usage("--seed given but the config has no noise".into())),
                    }
                }
            }
            Ok(())
        }),
    }
}

fn mk(k: usize, scaling: Option<(f64, f64)>, as_json: bool) -> Result<bool, Failure> {
    let prof = Profile::new(k)?;
    let scaled = match scaling {
        Some((alpha, kappa)) => {
            let p = Scaling::new(alpha, kappa).map_err(|e| Failure::Usage(e.to_string()))?;
            Some((p, m_scaled(k, &p)?, scaled_jump_coefficient(k, &p)?))
        }
        None => None,
    };
    let mut out = std::io::stdout().lock();
    let text = if as_json {
        let mut v = json!({
            "schema": harness::SCHEMA,
            "k": k,
            "c_k": prof.c_k.to_string(),
            "t_star": prof.t_star,
            "m_k": prof.m_k,
        });
        if let Some((p, m, coeff)) = scaled {
            v["alpha"] = json!(p.alpha);
            v["kappa"] = json!(p.kappa);
            v["m_scaled"] = json!(m);
            v["jump_coefficient"] = json!(coeff);
        }
        serde_json::to_string_pretty(&v).map_err(|e| Failure::Runtime(e.to_string()))? + "\n"
    } else {
        let mut s = format!(
            "k = {k}\nc_k = {}\nT_star = {}\nm_k = {}\n",
            prof.c_k, prof.t_star, prof.m_k
        );
        if let Some((p, m, coeff)) = scaled {
            s += &format!(
                "alpha = {}\nkappa = {}\nm_scaled = {m}\njump_coefficient = {coeff}\n",
                p.alpha, p.kappa
            );
        }
        s
    };
    out.write_all(text.as_bytes())
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(true)
}

fn profile(k: usize, samples: usize, out: &Path) -> Result<bool, Failure> {
    let prof = Profile::new(k)?;
    let mut derivs = vec![prof.unit_real().clone()];
    for _ in 0..k {
        let next = derivs.last().expect("nonempty").derivative();
        derivs.push(next);
    }
    let mut text = String::from("s");
    for order in 0..=k {
        text += &format!(",d{order}");
    }
    text.push('\n');
    for i in 0..samples {
        let s = i as f64 / (samples - 1) as f64;
        text += &format!("{s}");
        for d in &derivs {
            text += &format!(",{}", d.eval(&s));
        }
        text.push('\n');
    }
    std::fs::write(out, text).map_err(|e| Failure::Runtime(format!("{}: {e}", out.display())))?;
    Ok(true)
}

fn experiment(
    args: &RunArgs,
    kinds: &[&str],
    extra: impl FnOnce(&mut ExperimentConfig) -> Result<(), Failure>,
) -> Result<bool, Failure> {
    let mut cfg = ExperimentConfig::load(&args.config).map_err(|e| Failure::Usage(e.to_string()))?;
    if !kinds.contains(&cfg.kind()) {
        return Err(Failure::Usage(format!(
            "{} holds a {} config; expected one of {}",
            args.config.display(),
            cfg.kind(),
            kinds.join(", ")
        )));
    }
    if let Some(list) = &args.eps_list {
        match cfg.eps_mut() {
            Some(eps) => *eps = list.clone(),
            None => return Err(Failure::Usage(format!("--eps-list does not apply to {}", cfg.kind()))),
        }
    }
    if let Some(out) = &args.out {
        cfg.output = Some(out.clone());
    }
    extra(&mut cfg)?;
    cfg.validate().map_err(|e| Failure::Usage(e.to_string()))?;

    let report: Report = harness::run(&cfg)?;
    if let Some(stem) = &cfg.output {
        report.write(stem)?;
    }
    let text = if args.json {
        report.to_json_string()?
    } else {
        harness::check_lines(&report)
    };
    std::io::stdout()
        .lock()
        .write_all(text.as_bytes())
        .map_err(|e| Failure::Runtime(e.to_string()))?;
    Ok(report.passed())
}

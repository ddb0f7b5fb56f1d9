//! `hosf`: run higher-order Schrödinger and Hartree-Fock simulations from
//! JSON configuration files.
//!
//! Exit codes: 0 success, 1 configuration error, 2 numerical failure.

mod config;
mod output;

use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Instant, SystemTime};

use clap::{Parser, Subcommand};
use hosf_core::coefficients::{coeff_table_csv, PhysicalConstants};
use hosf_core::diagnostics::{
    conservation_report, decay_exponent_fit, ej_truncation_report, to_csv, truncation_csv,
    DecayExperiment,
};
use hosf_core::propagation::Trajectory;
use hosf_core::scenarios::{build_scenario, compare_orders};
use hosf_core::HosfError;
use serde_json::json;

use crate::output::{Manifest, RunDir};

#[derive(Parser, Debug)]
#[command(name = "hosf", version, about = "Higher-order semirelativistic Schrödinger / Hartree-Fock solver")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a simulation and write diagnostics, snapshots and a manifest.
    Run { config: PathBuf },
    /// Print the expansion coefficients for j = 0..=jmax as CSV.
    Coeffs {
        #[arg(long, allow_negative_numbers = true)]
        jmax: i64,
    },
    /// Print relative truncation errors of the kinetic expansion as CSV.
    Truncation {
        #[arg(long)]
        jmax: u32,
        /// Speeds in units of c, comma separated.
        #[arg(long, value_delimiter = ',', allow_negative_numbers = true, required = true)]
        speeds: Vec<f64>,
    },
    /// Fit the dispersive decay exponent of the order-J monomial flow.
    Decay {
        #[arg(long = "J")]
        order: u32,
        #[arg(long, default_value_t = 1)]
        dimension: usize,
        /// Also write the individual samples as CSV.
        #[arg(long)]
        samples: Option<PathBuf>,
    },
    /// Run one scenario for several orders and print L² deviations as CSV.
    CompareOrders {
        config: PathBuf,
        #[arg(long, value_delimiter = ',', default_value = "1,2")]
        orders: Vec<u32>,
    },
    /// Parse and validate a configuration without running it.
    ValidateConfig { config: PathBuf },
}

fn exit_code(e: &HosfError) -> u8 {
    if e.is_numerical() {
        2
    } else {
        1
    }
}

fn configure_threads() -> Result<(), HosfError> {
    let Ok(v) = std::env::var("HOSF_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n >= 1)
        .ok_or_else(|| HosfError::config("HOSF_THREADS", format!("expected a positive integer, got `{v}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| HosfError::config("HOSF_THREADS", e.to_string()))
}

fn stdout_write(text: &str) -> Result<(), HosfError> {
    let mut out = std::io::stdout().lock();
    out.write_all(text.as_bytes())?;
    out.flush()?;
    Ok(())
}

fn cmd_run(path: &Path) -> Result<(), HosfError> {
    let started = SystemTime::now();
    let clock = Instant::now();
    let resolved = config::load(path)?;
    let scenario = build_scenario(&resolved.scenario)?;
    let mut dir = RunDir::create(&resolved.output)?;
    let mut sim = scenario.simulation()?;
    let mut traj = Trajectory::default();
    let spec = &resolved.scenario;
    let mut snapshot_error = None;
    let result = sim.run_into(spec.horizon, spec.cadence, &mut traj, |step, _, set| {
        dir.write_snapshot(&format!("step{step:08}"), set).map_err(|e| {
            snapshot_error = Some(e.to_string());
            e
        })
    });
    let (status, error) = match &result {
        Ok(()) => ("ok", None),
        Err(e) => {
            dir.write_snapshot(&format!("last_good_step{:08}", sim.step_index), &sim.state)?;
            (if e.is_numerical() { "numerical_failure" } else { "error" }, Some(e.to_string()))
        }
    };
    dir.write_text("diagnostics.csv", &to_csv(&traj.records))?;
    if traj.records.len() >= 2 {
        dir.write_text("drift.csv", &conservation_report(&traj.records)?.to_csv())?;
    }
    let manifest = Manifest {
        command: "run",
        config_path: path.to_path_buf(),
        config: resolved.raw.clone(),
        resolved: serde_json::to_value(spec).expect("scenario serializes"),
        started,
        elapsed: clock.elapsed(),
        status,
        error,
        extra: json!({
            "steps": traj.steps,
            "steps_completed": sim.step_index,
            "dt": traj.dt,
            "seed": resolved.config.seed,
            "warnings": scenario.warnings,
        }),
    };
    manifest.write(&dir)?;
    result?;
    eprintln!(
        "completed {} steps; outputs in {}",
        sim.step_index,
        resolved.output.display()
    );
    Ok(())
}

fn cmd_compare(path: &Path, orders: &[u32]) -> Result<(), HosfError> {
    let resolved = config::load(path)?;
    let cmp = compare_orders(&resolved.scenario, orders)?;
    stdout_write(&cmp.to_csv())?;
    for r in &cmp.runs {
        eprintln!(
            "{}: max norm drift {:.3e}, energy drift {:.3e}",
            r.label,
            r.drift.max_norm(),
            r.drift.energy
        );
    }
    Ok(())
}

fn cmd_decay(order: u32, dimension: usize, samples: Option<&Path>) -> Result<(), HosfError> {
    let exp = DecayExperiment::preset(order, dimension)?;
    let data = exp.run()?;
    let fit = decay_exponent_fit(&data)?;
    if let Some(p) = samples {
        let mut text = String::from("time,sup_norm,boundary_mass\n");
        for s in &data {
            text.push_str(&format!("{:.16e},{:.16e},{:.16e}\n", s.time, s.sup_norm, s.boundary_mass));
        }
        std::fs::write(p, text)?;
    }
    stdout_write(&format!(
        "J,dimension,exponent,expected,residual,t_min,t_max,samples\n{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}\n",
        order,
        dimension,
        fit.exponent,
        exp.expected_exponent(),
        fit.residual,
        exp.t_min,
        exp.t_max,
        exp.samples
    ))
}

fn dispatch(cli: Cli) -> Result<(), HosfError> {
    configure_threads()?;
    match cli.command {
        Command::Run { config } => cmd_run(&config),
        Command::Coeffs { jmax } => stdout_write(&coeff_table_csv(jmax)?),
        Command::Truncation { jmax, speeds } => {
            let rows = ej_truncation_report(jmax, &speeds, &PhysicalConstants::natural())?;
            stdout_write(&truncation_csv(&rows))
        }
        Command::Decay {
            order,
            dimension,
            samples,
        } => cmd_decay(order, dimension, samples.as_deref()),
        Command::CompareOrders { config, orders } => cmd_compare(&config, &orders),
        Command::ValidateConfig { config } => {
            let r = config::load(&config)?;
            build_scenario(&r.scenario)?;
            eprintln!("{}: ok", config.display());
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

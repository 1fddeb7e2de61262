//! Command-line front end: scenario synthesis, filter execution with both
//! baseline estimators, scoring against a truth log, and the built-in parked
//! calibration benchmark.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error (missing or malformed
//! input, bad configuration), 3 numerical-health failure inside the filter.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use rover_nav::config::{load_scenario, toy_static_config, ConfigError, PipelineConfig};
use rover_nav::earth::EllipsoidModel;
use rover_nav::eval::{
    attach_truth_from_states, enu_offset, evaluate, heading_error_series, EstimateLogs,
};
use rover_nav::io::{
    read_imu_csv, read_slip_csv, read_trajectory_csv, read_wheel_csv, write_imu_csv,
    write_schedule_csv, write_series_csv, write_slip_csv, write_trajectory_csv, write_wheel_csv,
    IoError, TrajectoryRow,
};
use rover_nav::mech::NavState;
use rover_nav::pipeline::{
    run_comparators, run_direct_integration, run_filter, FilterRun, HealthReport, RunOptions,
    RunStats,
};
use rover_nav::sim::{generate_truth, static_toy_scenario, synthesize_imu, synthesize_wheels, TruthLog};
use rover_nav::NavError;

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_HEALTH: u8 = 3;

#[derive(Parser)]
#[command(
    name = "rover-nav",
    version,
    about = "Proprioceptive rover localization and wheel-slip analysis"
)]
struct Cli {
    /// Override the scenario RNG seed (simulate and toy-static only).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print progress details to stderr.
    #[arg(long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize a scenario into IMU, wheel, and truth CSV files.
    Simulate {
        /// Scenario description file (TOML).
        scenario: PathBuf,
        /// Output directory, created if absent.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the aided filter plus both baseline estimators on CSV streams.
    Run {
        /// Pipeline configuration file (TOML).
        config: PathBuf,
        /// IMU stream: t,fx,fy,fz,wx,wy,wz (s, m/s^2, rad/s).
        #[arg(long)]
        imu: PathBuf,
        /// Wheel-rate stream: t,w_fl,w_fr,w_rl,w_rr (s, rad/s).
        #[arg(long)]
        wheels: PathBuf,
        /// Output directory, created if absent.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Score the logs a `run` produced against a truth log.
    Evaluate {
        /// Pipeline configuration file (TOML).
        config: PathBuf,
        /// Directory holding the estimate logs (`run` output).
        #[arg(long)]
        est: PathBuf,
        /// Truth log: t,lat_deg,lon_deg,h,vn,ve,vd,roll_deg,pitch_deg,yaw_deg.
        #[arg(long)]
        truth: PathBuf,
        /// Report path (JSON); plot-ready series CSVs land next to it.
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Run the built-in 300 s parked calibration benchmark end to end and
    /// print the final-error ordering verdict.
    ToyStatic {
        /// Output directory, created if absent.
        #[arg(short, long)]
        out: PathBuf,
    },
}

/// A failed run, already sorted into its exit class.
enum Failure {
    Data(String),
    Health(String),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Data(_) => EXIT_DATA,
            Failure::Health(_) => EXIT_HEALTH,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Data(m) | Failure::Health(m) => m,
        }
    }
}

impl From<IoError> for Failure {
    fn from(e: IoError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Data(e.to_string())
    }
}

impl From<NavError> for Failure {
    fn from(e: NavError) -> Self {
        match e {
            // The filter math itself went numerically bad.
            NavError::CovarianceNotPsd { .. }
            | NavError::NonFinite { .. }
            | NavError::SingularUpdate
            | NavError::GimbalLock => Failure::Health(e.to_string()),
            // Everything else is an input or configuration problem.
            _ => Failure::Data(e.to_string()),
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help and --version are successful terminations.
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => EXIT_USAGE,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.exit_code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), Failure> {
    match cli.command {
        Command::Simulate { ref scenario, ref out } => {
            simulate(scenario, out, cli.seed, cli.verbose)
        }
        Command::Run { ref config, ref imu, ref wheels, ref out } => {
            run(config, imu, wheels, out, cli.verbose)
        }
        Command::Evaluate { ref config, ref est, ref truth, ref out } => {
            evaluate_cmd(config, est, truth, out, cli.verbose)
        }
        Command::ToyStatic { ref out } => toy_static(out, cli.seed.unwrap_or(0), cli.verbose),
    }
}

/// `create_dir_all` with the path in the error message.
fn ensure_dir(dir: &Path) -> Result<(), Failure> {
    std::fs::create_dir_all(dir)
        .map_err(|e| Failure::Data(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), Failure> {
    std::fs::write(path, text).map_err(|e| Failure::Data(format!("{}: {e}", path.display())))
}

fn truth_rows(states: &[NavState]) -> Result<Vec<TrajectoryRow>, Failure> {
    states
        .iter()
        .map(|s| TrajectoryRow::from_state(s).map_err(Failure::from))
        .collect()
}

fn states_of(rows: &[TrajectoryRow]) -> Vec<NavState> {
    rows.iter().map(TrajectoryRow::to_state).collect()
}

fn simulate(
    scenario_path: &Path,
    out: &Path,
    seed: Option<u64>,
    verbose: bool,
) -> Result<(), Failure> {
    let mut spec = load_scenario(scenario_path)?;
    if let Some(s) = seed {
        spec.seed = s;
    }
    // Synthesis uses the reference ellipsoid and the default chassis
    // geometry; a `run` over these files should keep its geometry section at
    // the defaults so wheel speeds mean the same thing on both sides.
    let model = EllipsoidModel::wgs84();
    let geometry = rover_nav::pseudo::VehicleGeometry::default();
    let truth = generate_truth(&spec, &model)?;
    let imu = synthesize_imu(&truth, &spec, &model)?;
    let wheels = synthesize_wheels(&truth, &geometry);

    ensure_dir(out)?;
    write_imu_csv(&out.join("imu.csv"), &imu)?;
    write_wheel_csv(&out.join("wheels.csv"), &wheels)?;
    write_trajectory_csv(&out.join("truth.csv"), &truth_rows(&truth.states)?)?;
    if verbose {
        eprintln!("scenario: {}", scenario_path.display());
        eprintln!("seed: {}", spec.seed);
        eprintln!("files: imu.csv wheels.csv truth.csv in {}", out.display());
    }
    println!(
        "simulated {:.1} s: {} imu epochs, {} wheel epochs -> {}",
        spec.duration(),
        imu.len(),
        wheels.len(),
        out.display()
    );
    Ok(())
}

/// What `run` stores beside the trajectory logs.
#[derive(Serialize, Deserialize)]
struct RunSummary {
    stats: RunStats,
    health: HealthReport,
    /// Final accelerometer bias estimate (m/s^2, body axes).
    accel_bias: [f64; 3],
    /// Final gyro bias estimate (rad/s, body axes).
    gyro_bias: [f64; 3],
}

impl RunSummary {
    fn of(run: &FilterRun) -> Self {
        RunSummary {
            stats: run.stats,
            health: run.health,
            accel_bias: run.accel_bias.into(),
            gyro_bias: run.gyro_bias.into(),
        }
    }
}

fn run(
    config_path: &Path,
    imu_path: &Path,
    wheels_path: &Path,
    out: &Path,
    verbose: bool,
) -> Result<(), Failure> {
    let config = PipelineConfig::load(config_path)?;
    let imu = read_imu_csv(imu_path)?;
    let wheels = read_wheel_csv(wheels_path)?;
    if verbose {
        eprintln!("imu: {} samples from {}", imu.len(), imu_path.display());
        eprintln!("wheels: {} samples from {}", wheels.len(), wheels_path.display());
    }

    let filter = run_filter(&config, &imu, &wheels, &RunOptions::aided())?;
    let baselines = run_comparators(&config, &imu, &wheels)?;

    ensure_dir(out)?;
    write_trajectory_csv(&out.join("trajectory.csv"), &truth_rows(&filter.trajectory)?)?;
    write_trajectory_csv(
        &out.join("trajectory_ins_only.csv"),
        &truth_rows(&baselines.direct_integration)?,
    )?;
    write_trajectory_csv(
        &out.join("trajectory_wheel_odometry.csv"),
        &truth_rows(&baselines.wheel_odometry)?,
    )?;
    write_slip_csv(&out.join("slip.csv"), &filter.slip)?;
    let summary = serde_json::to_string_pretty(&RunSummary::of(&filter))
        .expect("run summary serializes");
    write_text(&out.join("run_stats.json"), &summary)?;

    let s = &filter.stats;
    println!(
        "{} imu epochs in {:.2} s wall; updates applied: {} zero-velocity, {} zero-rate, \
         {} lateral ({} suspended) -> {}",
        s.imu_epochs,
        s.wall_time_s,
        s.zero_velocity_applied,
        s.zero_rate_applied,
        s.lateral_applied,
        s.lateral_suspended,
        out.display()
    );
    Ok(())
}

fn read_optional_trajectory(path: &Path) -> Result<Option<Vec<NavState>>, Failure> {
    if !path.exists() {
        return Ok(None);
    }
    Ok(Some(states_of(&read_trajectory_csv(path)?)))
}

fn evaluate_cmd(
    config_path: &Path,
    est_dir: &Path,
    truth_path: &Path,
    out: &Path,
    verbose: bool,
) -> Result<(), Failure> {
    let config = PipelineConfig::load(config_path)?;
    let model = config.ellipsoid.to_model();

    let truth_states = states_of(&read_trajectory_csv(truth_path)?);
    if truth_states.len() < 2 {
        return Err(NavError::EmptyStream { context: "truth" }.into());
    }
    let rate = 1.0 / (truth_states[1].t - truth_states[0].t);
    let truth = TruthLog { states: truth_states, wheel_truth: Vec::new(), imu_rate_hz: rate };

    let proposed_path = est_dir.join("trajectory.csv");
    if !proposed_path.exists() {
        return Err(Failure::Data(format!(
            "{}: no trajectory.csv in the estimate directory",
            proposed_path.display()
        )));
    }
    let proposed = states_of(&read_trajectory_csv(&proposed_path)?);
    let direct = read_optional_trajectory(&est_dir.join("trajectory_ins_only.csv"))?;
    let odometry = read_optional_trajectory(&est_dir.join("trajectory_wheel_odometry.csv"))?;

    let slip_path = est_dir.join("slip.csv");
    let slip_records = if slip_path.exists() {
        let mut records = read_slip_csv(&slip_path)?;
        attach_truth_from_states(&mut records, &truth.states, config.slip.no_slip_band);
        Some(records)
    } else {
        None
    };

    let stats_path = est_dir.join("run_stats.json");
    let runtime = if stats_path.exists() {
        let text = std::fs::read_to_string(&stats_path)
            .map_err(|e| Failure::Data(format!("{}: {e}", stats_path.display())))?;
        let summary: RunSummary = serde_json::from_str(&text)
            .map_err(|e| Failure::Data(format!("{}: {e}", stats_path.display())))?;
        Some(summary.stats)
    } else {
        None
    };

    let logs = EstimateLogs {
        proposed: &proposed,
        direct_integration: direct.as_deref(),
        wheel_odometry: odometry.as_deref(),
        slip: slip_records.as_deref(),
        runtime,
    };
    let report = evaluate(&logs, &truth, &model)?;

    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        ensure_dir(parent)?;
    }
    write_text(out, &report.to_json())?;

    // Plot-ready heading-error series beside the report.
    let series_dir = out.parent().unwrap_or_else(|| Path::new("."));
    let mut series = vec![("heading_error_proposed.csv", &proposed)];
    if let Some(d) = direct.as_ref() {
        series.push(("heading_error_ins_only.csv", d));
    }
    if let Some(w) = odometry.as_ref() {
        series.push(("heading_error_wheel_odometry.csv", w));
    }
    for (name, log) in series {
        let errors = heading_error_series(log, &truth)?;
        write_series_csv(&series_dir.join(name), "t,heading_error_deg", &errors)?;
        if verbose {
            eprintln!("series: {}", series_dir.join(name).display());
        }
    }

    let r = &report.proposed.rmse;
    print!(
        "rmse e/n/u {:.3}/{:.3}/{:.3} m, final heading error {:+.3} deg",
        r.east, r.north, r.up, report.proposed.final_heading_error_deg
    );
    match report.slip.as_ref() {
        Some(sl) => println!(
            ", slip agreement {:.1}% over {} epochs -> {}",
            100.0 * sl.overall_accuracy,
            sl.labeled_records,
            out.display()
        ),
        None => println!(" -> {}", out.display()),
    }
    Ok(())
}

/// Final 3D tangent-plane distance between an estimate's last state and the
/// truth's last state.
fn final_error_m(log: &[NavState], truth: &TruthLog, model: &EllipsoidModel) -> f64 {
    let est = log.last().expect("non-empty log");
    let tru = truth.states.last().expect("non-empty truth");
    enu_offset(&est.position, &tru.position, model).norm()
}

#[derive(Serialize)]
struct ToyVerdict {
    seed: u64,
    final_error_ins_only_m: f64,
    final_error_zero_updates_m: f64,
    final_error_zero_updates_nhc_m: f64,
    ordering_holds: bool,
}

fn toy_static(out: &Path, seed: u64, verbose: bool) -> Result<(), Failure> {
    let config = toy_static_config();
    let model = config.ellipsoid.to_model();
    let (spec, schedule) = static_toy_scenario(seed);
    let truth = generate_truth(&spec, &model)?;
    let imu = synthesize_imu(&truth, &spec, &model)?;
    let wheels = synthesize_wheels(&truth, &config.geometry);
    if verbose {
        eprintln!("seed {seed}: {} imu epochs, {} wheel epochs", imu.len(), wheels.len());
    }

    let ins_only = run_direct_integration(&config, &imu)?;
    let zero_updates =
        run_filter(&config, &imu, &wheels, &RunOptions::scripted(schedule.clone()))?;
    let with_constraint = run_filter(
        &config,
        &imu,
        &wheels,
        &RunOptions::scripted_with_constraint(schedule.clone()),
    )?;

    ensure_dir(out)?;
    write_imu_csv(&out.join("imu.csv"), &imu)?;
    write_wheel_csv(&out.join("wheels.csv"), &wheels)?;
    write_trajectory_csv(&out.join("truth.csv"), &truth_rows(&truth.states)?)?;
    write_schedule_csv(&out.join("schedule.csv"), &schedule)?;
    write_trajectory_csv(&out.join("trajectory_ins_only.csv"), &truth_rows(&ins_only)?)?;
    write_trajectory_csv(
        &out.join("trajectory_zero_updates.csv"),
        &truth_rows(&zero_updates.trajectory)?,
    )?;
    write_trajectory_csv(
        &out.join("trajectory_zero_updates_nhc.csv"),
        &truth_rows(&with_constraint.trajectory)?,
    )?;

    let e_ins = final_error_m(&ins_only, &truth, &model);
    let e_zu = final_error_m(&zero_updates.trajectory, &truth, &model);
    let e_zunh = final_error_m(&with_constraint.trajectory, &truth, &model);
    let ordering_holds = e_zunh < e_zu && e_zu < e_ins;
    let verdict = ToyVerdict {
        seed,
        final_error_ins_only_m: e_ins,
        final_error_zero_updates_m: e_zu,
        final_error_zero_updates_nhc_m: e_zunh,
        ordering_holds,
    };
    write_text(
        &out.join("toy_summary.json"),
        &serde_json::to_string_pretty(&verdict).expect("verdict serializes"),
    )?;

    if ordering_holds {
        println!("ZU+NH < ZU < INS-only  ({e_zunh:.3} m < {e_zu:.3} m < {e_ins:.3} m)");
    } else {
        println!(
            "ordering violated: ZU+NH {e_zunh:.3} m, ZU {e_zu:.3} m, INS-only {e_ins:.3} m"
        );
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn health_failures_map_to_exit_three() {
        let f: Failure = NavError::CovarianceNotPsd {
            min_eigenvalue: -1.0,
            trace: 1.0,
            t: 0.0,
        }
        .into();
        assert_eq!(f.exit_code(), EXIT_HEALTH);
        let f: Failure = NavError::GimbalLock.into();
        assert_eq!(f.exit_code(), EXIT_HEALTH);
        let f: Failure = NavError::NonFinite { context: "covariance" }.into();
        assert_eq!(f.exit_code(), EXIT_HEALTH);
        let f: Failure = NavError::SingularUpdate.into();
        assert_eq!(f.exit_code(), EXIT_HEALTH);
    }

    #[test]
    fn data_problems_map_to_exit_two() {
        let f: Failure = NavError::NonMonotonicTime { state_t: 1.0, t: 0.5 }.into();
        assert_eq!(f.exit_code(), EXIT_DATA);
        let f: Failure = NavError::SampleGap { t: 1.0, gap: 0.5, max: 0.2 }.into();
        assert_eq!(f.exit_code(), EXIT_DATA);
        let f: Failure = NavError::EmptyOverlap.into();
        assert_eq!(f.exit_code(), EXIT_DATA);
        let f: Failure = ConfigError::Invalid("bad".into()).into();
        assert_eq!(f.exit_code(), EXIT_DATA);
    }

    #[test]
    fn cli_declaration_is_consistent() {
        use clap::CommandFactory;
        Cli::command().debug_assert();
    }
}

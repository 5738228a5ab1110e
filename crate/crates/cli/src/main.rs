//! `nsfp1`: command-line front end.
//!
//! Exit codes: 0 success, 1 a verdict or criterion failed, 2 configuration
//! or input error, 3 numerical instability.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use nsfp1_core::config::KeyValues;
use nsfp1_core::foundations::{self, PhysicalScales};
use nsfp1_core::harness::{self, ReportFormats, RunSettings, ScanConfig, SweepConfig, Tolerances, WaveDecayConfig};
use nsfp1_core::io;
use nsfp1_core::state::RunStatus;
use nsfp1_core::Error;
use serde_json::json;

#[derive(Parser)]
#[command(name = "nsfp1", version, about = "Low Mach number radiation hydrodynamics laboratory")]
struct Cli {
    #[command(flatten)]
    shared: Shared,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Shared {
    /// Flat `key = value` configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Seed of the random initial data (overrides the `seed` key).
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

/// Overrides for single runs; each maps onto the config key of the same name.
#[derive(Args)]
struct RunFlags {
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    /// Points per axis.
    #[arg(long)]
    points: Option<usize>,
    #[arg(long)]
    dim: Option<usize>,
    /// Fixed time step; without it the step is fitted to the stability limit.
    #[arg(long)]
    dt: Option<f64>,
    #[arg(long)]
    t_end: Option<f64>,
    /// `well-prepared`, `general` or `partial-general`.
    #[arg(long)]
    preparedness: Option<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the full scaled system.
    Simulate(RunFlags),
    /// Integrate the limit system selected by delta.
    Limit(RunFlags),
    /// Compare full runs against their limit over a decreasing epsilon list.
    SweepEpsilon,
    /// Fixed epsilon, one run per delta.
    ScanDelta,
    /// Local energy decay of the acoustic wave probe.
    WaveDecay,
    /// Dimensionless numbers and regime label of a scales file.
    Nondim,
    /// Run the acceptance criteria and write verdicts.json.
    Verify,
}

/// Failure with its exit code.
struct Failure {
    code: u8,
    message: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure {
            code: if e.is_numerical() { 3 } else { 2 },
            message: e.to_string(),
        }
    }
}

type Outcome = Result<u8, Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.shared.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: cannot set up {n} threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: &Cli) -> Outcome {
    let s = &cli.shared;
    let kv = match &s.config {
        Some(p) => KeyValues::load(p)?,
        None => KeyValues::default(),
    };
    match &cli.command {
        Command::Simulate(f) => simulate(settings(kv, s, f)?, &s.out),
        Command::Limit(f) => limit(settings(kv, s, f)?, &s.out),
        Command::SweepEpsilon => sweep(with_seed(kv, s), &s.out),
        Command::ScanDelta => scan(with_seed(kv, s), &s.out),
        Command::WaveDecay => wave_decay(&kv, &s.out),
        Command::Nondim => nondim(&kv, &s.out),
        Command::Verify => verify(&kv, &s.out),
    }
}

fn with_seed(mut kv: KeyValues, s: &Shared) -> KeyValues {
    if let Some(seed) = s.seed {
        kv.insert("seed", seed);
    }
    kv
}

fn settings(kv: KeyValues, s: &Shared, f: &RunFlags) -> Result<RunSettings, Failure> {
    let mut kv = with_seed(kv, s);
    let keys = RunSettings::keys();
    kv.reject_unknown(&keys.iter().map(String::as_str).collect::<Vec<_>>())?;
    let flags: [(&str, Option<String>); 7] = [
        ("epsilon", f.epsilon.map(|v| v.to_string())),
        ("delta", f.delta.map(|v| v.to_string())),
        ("points", f.points.map(|v| v.to_string())),
        ("dim", f.dim.map(|v| v.to_string())),
        ("dt", f.dt.map(|v| v.to_string())),
        ("t_end", f.t_end.map(|v| v.to_string())),
        ("preparedness", f.preparedness.clone()),
    ];
    for (k, v) in flags {
        if let Some(v) = v {
            kv.insert(k, v);
        }
    }
    Ok(RunSettings::from_key_values(&kv)?)
}

fn status_code(status: &RunStatus) -> u8 {
    match status {
        RunStatus::Complete => 0,
        RunStatus::Unstable { time, reason } => {
            eprintln!("run stopped at t = {time}: {reason}");
            3
        }
    }
}

fn simulate(run: RunSettings, out: &Path) -> Outcome {
    let traj = run.run_full(&run.params)?;
    io::write_trajectory(&out.join("trajectory.json"), &traj)?;
    let last = traj.snapshots.last();
    let summary = json!({
        "settings": run,
        "metadata": traj.metadata,
        "status": traj.status,
        "snapshots": traj.snapshots.len(),
        "final_time": last.map(|s| s.time),
        "final_max_abs": last.map(|s| s.max_abs()),
    });
    io::write_json(&out.join("summary.json"), &summary)?;
    println!("wrote {} snapshots to {}", traj.snapshots.len(), out.display());
    Ok(status_code(&traj.status))
}

fn limit(run: RunSettings, out: &Path) -> Outcome {
    let traj = run.run_limit(&run.params)?;
    io::write_limit_trajectory(&out.join("trajectory.json"), &traj)?;
    let summary = json!({
        "settings": run,
        "regime": traj.regime,
        "metadata": traj.metadata,
        "status": traj.status,
        "snapshots": traj.snapshots.len(),
        "max_constraint_residual": traj.max_constraint_residual,
    });
    io::write_json(&out.join("summary.json"), &summary)?;
    println!("wrote {} limit snapshots to {}", traj.snapshots.len(), out.display());
    Ok(status_code(&traj.status))
}

fn print_verdicts(verdicts: &[harness::Verdict]) -> bool {
    for v in verdicts {
        println!("{:<24} {}  {}", v.id, if v.passed { "PASS" } else { "FAIL" }, v.detail);
    }
    verdicts.iter().all(|v| v.passed)
}

fn sweep(kv: KeyValues, out: &Path) -> Outcome {
    let mut config = SweepConfig::from_key_values(&kv)?;
    config.output = Some(out.to_path_buf());
    let report = harness::run_epsilon_sweep(&config)?;
    for p in harness::emit_report(&report, out, ReportFormats::ALL)? {
        println!("wrote {}", p.display());
    }
    let ok = print_verdicts(&report.verdicts);
    if !report.complete {
        eprintln!("sweep incomplete, first unstable epsilon {:?}", report.failing_epsilon);
        return Ok(3);
    }
    Ok(if ok { 0 } else { 1 })
}

fn scan(kv: KeyValues, out: &Path) -> Outcome {
    let config = ScanConfig::from_key_values(&kv)?;
    let report = harness::run_delta_scan(&config)?;
    let path = out.join("regimes.json");
    io::write_json(&path, &report)?;
    println!("wrote {}", path.display());
    let ok = print_verdicts(&report.verdicts);
    if !report.complete {
        eprintln!("scan incomplete, first unstable delta {:?}", report.failing_delta);
        return Ok(3);
    }
    Ok(if ok { 0 } else { 1 })
}

fn wave_decay(kv: &KeyValues, out: &Path) -> Outcome {
    let config = WaveDecayConfig::from_key_values(kv)?;
    let report = harness::run_wave_decay(&config)?;
    std::fs::create_dir_all(out).map_err(|e| Error::io(out, e))?;
    for (eps, curve) in config.epsilons.iter().zip(&report.curves) {
        let mut csv = String::from("time,local_l2\n");
        for (t, v) in curve.times.iter().zip(&curve.local) {
            let _ = writeln!(csv, "{t},{v}");
        }
        let path = out.join(format!("decay_eps_{eps}.csv"));
        std::fs::write(&path, csv).map_err(|e| Error::io(&path, e))?;
        println!("wrote {}", path.display());
    }
    io::write_json(&out.join("wave_decay.json"), &report)?;
    Ok(if print_verdicts(&report.verdicts) { 0 } else { 1 })
}

fn nondim(kv: &KeyValues, out: &Path) -> Outcome {
    let (scales, orders) = PhysicalScales::from_key_values(kv)?;
    let numbers = foundations::dimensionless_numbers(&scales)?;
    let regime = match &orders {
        Some(o) => Some(foundations::classify_regime(o)?),
        None => None,
    };
    let v = json!({ "scales": scales, "numbers": numbers, "regime": regime });
    let path = out.join("nondim.json");
    io::write_json(&path, &v)?;
    println!("{}", serde_json::to_string_pretty(&v).unwrap_or_default());
    Ok(0)
}

fn verify(kv: &KeyValues, out: &Path) -> Outcome {
    let tol = Tolerances::from_key_values(kv)?;
    let mut outcomes = Vec::new();
    for (id, _) in harness::CRITERIA {
        let o = harness::run_criterion(id, &tol);
        println!("{}", o.line());
        outcomes.push(o);
    }
    let path = out.join("verdicts.json");
    harness::write_verdicts(&path, &outcomes)?;
    println!("wrote {}", path.display());
    let failed: Vec<u32> = outcomes.iter().filter(|o| !o.passed).map(|o| o.id).collect();
    if failed.is_empty() {
        Ok(0)
    } else {
        eprintln!("failed criteria: {failed:?}");
        Ok(1)
    }
}

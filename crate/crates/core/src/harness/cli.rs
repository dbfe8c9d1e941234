//! `ris` command-line front end.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::coverage::{classify_los, detect_gaps, fit_fspl_baseline, DriveTrace, LosState};
use crate::error::{Error, Result};
use crate::geometry::{Aabb, Vec3};
use crate::harness::config::{
    Method, ScenarioConfig, PHASE1_DEFAULT, PHASE2_DEFAULT, PHASE3_DEFAULT,
};
use crate::harness::runner;
use crate::kpi::read_kpi_csv;
use crate::propagation::fspl_db;

pub const EXIT_USAGE: i32 = 2;
pub const EXIT_CONFIG: i32 = 3;
pub const EXIT_IO: i32 = 4;
pub const EXIT_INVALID: i32 = 5;

#[derive(Parser, Debug)]
#[command(
    name = "ris",
    version,
    about = "1-bit RIS simulator and configuration toolkit"
)]
struct Cli {
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Indoor Tx sweep, iterative and location-based configuration.
    Phase1(RunArgs),
    /// Outdoor Tx × Rx grid, adds the grouped sweep.
    Phase2(RunArgs),
    /// Fixed UE points behind a blockage, RIS off versus on.
    Phase3(RunArgs),
    /// Optimize a single link and write its trace.
    Optimize(OptimizeArgs),
    /// Fit a free-space baseline to a KPI drive trace and report coverage gaps.
    Analyze(AnalyzeArgs),
    /// Free-space path loss in dB.
    Fspl {
        /// Metres.
        #[arg(long)]
        distance: f64,
        /// Hertz.
        #[arg(long, default_value_t = 3.5e9)]
        freq: f64,
    },
}

#[derive(Args, Debug)]
struct RunArgs {
    /// Scenario file, or a directory of `*.cfg` files. Defaults to the
    /// bundled scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory for CSV outputs.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Overrides the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the trial count.
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Args, Debug)]
struct OptimizeArgs {
    /// Scenario file; defaults to the bundled phase-1 scenario.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value = "iterative")]
    method: String,
    #[arg(long, default_value_t = 0)]
    trial: usize,
    #[arg(long, default_value_t = 0)]
    tx_index: usize,
    #[arg(long, default_value_t = 0)]
    rx_index: usize,
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for `trace.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AnalyzeArgs {
    /// KPI CSV.
    #[arg(long)]
    trace: PathBuf,
    /// gNB position `x,y,z` (or `lat,lon,alt` with --geodetic).
    #[arg(long, value_parser = parse_vec3, allow_hyphen_values = true)]
    gnb: Vec3,
    #[arg(long, default_value_t = 3.5e9)]
    freq: f64,
    #[arg(long, default_value_t = crate::coverage::DEFAULT_DROP_THRESHOLD_DB)]
    drop_threshold: f64,
    #[arg(long, default_value_t = crate::coverage::DEFAULT_MIN_RUN)]
    min_run: usize,
    /// Positions are latitude, longitude (degrees) and altitude.
    #[arg(long)]
    geodetic: bool,
    /// Obstacle box `xmin,ymin,zmin,xmax,ymax,zmax` in the local frame; repeatable.
    #[arg(long, value_parser = parse_box, allow_hyphen_values = true)]
    obstacle: Vec<Aabb>,
    /// Directory for `gaps.csv` (and `los.csv`); otherwise the gap CSV goes
    /// to stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_floats(s: &str, n: usize) -> std::result::Result<Vec<f64>, String> {
    let v = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("`{p}`: {e}")))
        .collect::<std::result::Result<Vec<_>, _>>()?;
    if v.len() != n {
        return Err(format!("expected {n} comma-separated numbers"));
    }
    Ok(v)
}

fn parse_vec3(s: &str) -> std::result::Result<Vec3, String> {
    let v = parse_floats(s, 3)?;
    Ok(Vec3::new(v[0], v[1], v[2]))
}

fn parse_box(s: &str) -> std::result::Result<Aabb, String> {
    let v = parse_floats(s, 6)?;
    Ok(Aabb::new(
        Vec3::new(v[0], v[1], v[2]),
        Vec3::new(v[3], v[4], v[5]),
    ))
}

/// Exit status for a library error.
pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::Config(_) => EXIT_CONFIG,
        Error::Io { .. } => EXIT_IO,
        Error::Csv(c) if matches!(c.kind(), csv::ErrorKind::Io(_)) => EXIT_IO,
        _ => EXIT_INVALID,
    }
}

/// Parses `args` (including the program name), runs the command and returns
/// the process exit status. Output goes to stdout, diagnostics to stderr.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let result = match cli.threads {
        Some(n) => match rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build()
        {
            Ok(pool) => pool.install(|| dispatch(cli.command)),
            Err(e) => Err(Error::Config(format!("thread pool: {e}"))),
        },
        None => dispatch(cli.command),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Phase1(a) => run_phase(1, a),
        Command::Phase2(a) => run_phase(2, a),
        Command::Phase3(a) => run_phase(3, a),
        Command::Optimize(a) => optimize(a),
        Command::Analyze(a) => analyze(a),
        Command::Fspl { distance, freq } => {
            println!("{:.2}", fspl_db(distance, freq)?);
            Ok(())
        }
    }
}

fn load_configs(path: Option<&Path>, bundled: &str) -> Result<Vec<ScenarioConfig>> {
    match path {
        None => Ok(vec![ScenarioConfig::from_toml(bundled)?]),
        Some(p) if p.is_dir() => ScenarioConfig::load_dir(p),
        Some(p) => Ok(vec![ScenarioConfig::load(p)?]),
    }
}

fn run_phase(phase: u8, a: RunArgs) -> Result<()> {
    let bundled = match phase {
        1 => PHASE1_DEFAULT,
        2 => PHASE2_DEFAULT,
        _ => PHASE3_DEFAULT,
    };
    let mut configs = load_configs(a.config.as_deref(), bundled)?;
    let batch = configs.len() > 1;
    for cfg in &mut configs {
        if let Some(s) = a.seed {
            cfg.master_seed = s;
        }
        if let Some(t) = a.trials {
            cfg.trials = t;
        }
        cfg.validate()?;
        let dir = a
            .out
            .as_ref()
            .map(|o| if batch { o.join(&cfg.name) } else { o.clone() });
        let rx = &cfg.geometry.rx_positions;
        let text = if phase == 3 {
            let p3 = runner::run_phase3(cfg)?;
            if let Some(d) = &dir {
                runner::write_phase3(&p3, d, rx)?;
            }
            runner::phase3_summary(&p3)
        } else {
            let r = if phase == 1 {
                runner::run_phase1(cfg)?
            } else {
                runner::run_phase2(cfg)?
            };
            if let Some(d) = &dir {
                runner::write_run(&r, d, rx)?;
            }
            runner::summary(&r)
        };
        print!("{text}");
    }
    Ok(())
}

fn optimize(a: OptimizeArgs) -> Result<()> {
    let mut cfg = load_configs(a.config.as_deref(), PHASE1_DEFAULT)?.remove(0);
    if let Some(s) = a.seed {
        cfg.master_seed = s;
    }
    let method: Method = a.method.parse()?;
    let cell = runner::run_cell(&cfg, a.trial, a.tx_index, a.rx_index, method)?;
    let o = &cell.outcomes[0];
    if let (Some(dir), Some(trace)) = (&a.out, &o.trace) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let path = dir.join("trace.csv");
        let file = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
        trace.write_csv(std::io::BufWriter::new(file))?;
    }
    println!(
        "{}: off {:.2} dBm, final {:.2} dBm, bound {:.2} dBm, {} evaluations",
        method.as_str(),
        crate::watts_to_dbm(cell.off_power_w),
        crate::watts_to_dbm(o.power_w),
        crate::watts_to_dbm(cell.continuous_bound_w),
        o.evaluations
    );
    println!("config {}", o.config.to_hex());
    Ok(())
}

fn analyze(a: AnalyzeArgs) -> Result<()> {
    let file = std::fs::File::open(&a.trace).map_err(|e| Error::io(&a.trace, e))?;
    let records = read_kpi_csv(std::io::BufReader::new(file))?;
    let trace = if a.geodetic {
        DriveTrace::from_geodetic(records, a.gnb, a.freq)?
    } else {
        DriveTrace::new(records, a.gnb, a.freq)?
    };
    let offset = fit_fspl_baseline(&trace)?;
    let report = detect_gaps(&trace, offset, a.drop_threshold, a.min_run)?;
    let los = (!a.obstacle.is_empty())
        .then(|| classify_los(&trace, &a.obstacle))
        .transpose()?;
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
            let path = dir.join("gaps.csv");
            let f = std::fs::File::create(&path).map_err(|e| Error::io(&path, e))?;
            report.write_csv(std::io::BufWriter::new(f))?;
            if let Some(los) = &los {
                let mut s = String::from("sample_index,los\n");
                for (i, l) in los.iter().enumerate() {
                    s.push_str(&format!(
                        "{i},{}\n",
                        if *l == LosState::LoS { "LoS" } else { "NLoS" }
                    ));
                }
                let path = dir.join("los.csv");
                std::fs::write(&path, s).map_err(|e| Error::io(&path, e))?;
            }
        }
        None => {
            let mut buf = Vec::new();
            report.write_csv(&mut buf)?;
            print!("{}", String::from_utf8_lossy(&buf));
        }
    }
    let mut line = report.summary_line();
    if let Some(los) = &los {
        let nlos = los.iter().filter(|l| **l == LosState::NLoS).count();
        line.push_str(&format!(",nlos_samples={nlos}"));
    }
    println!("{line}");
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn argument_parsers() {
        assert_eq!(parse_vec3("0, 0,25").unwrap(), Vec3::new(0.0, 0.0, 25.0));
        assert!(parse_vec3("1,2").is_err());
        assert!(parse_box("0,0,0,1,1,x").is_err());
        assert_eq!(
            parse_box("-1,0,0,1,1,1").unwrap().min,
            Vec3::new(-1.0, 0.0, 0.0)
        );
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["ris", "--bogus"]), EXIT_USAGE);
        assert_eq!(run(["ris", "fspl"]), EXIT_USAGE);
        assert_eq!(run(["ris", "fspl", "--distance=-1"]), EXIT_INVALID);
    }

    #[test]
    fn error_codes() {
        assert_eq!(exit_code(&Error::Config("x".into())), EXIT_CONFIG);
        assert_eq!(
            exit_code(&Error::io("p", std::io::Error::other("x"))),
            EXIT_IO
        );
        assert_eq!(exit_code(&Error::NoUsableSamples), EXIT_INVALID);
    }
}

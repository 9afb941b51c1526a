use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use choreo::cli::scenario::{average_table, billiards, nondeg_draws, simulate};
use choreo::cli::{run_scenario, sweep, Config, Provenance, ScenarioKind};
use choreo::ChoreoError;

#[derive(Parser)]
#[command(name = "choreo", version, about = "Choreographies of repelling particles in fast-oscillating boxes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML configuration file.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output file; standard output when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Overrides the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads for parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = Format::Ndjson)]
    format: Format,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Ndjson,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Long integration near the averaged minimum.
    Simulate,
    /// Table of the averaged potential and its derivatives.
    Average,
    /// Minimum of the averaged potential on the torus.
    Minimize,
    /// Random twist-data identity checks.
    Nondeg,
    /// Periodic billiard orbits and their stability.
    Billiard,
    /// Parameter sweep over the configured grid.
    Sweep,
    /// Fourth-derivative scaling fit.
    Scaling,
}

#[derive(Serialize)]
struct Record<'a, T: Serialize> {
    provenance: &'a Provenance,
    #[serde(flatten)]
    body: T,
}

enum Failure {
    Usage(String),
    Physics(String),
}

impl From<ChoreoError> for Failure {
    fn from(e: ChoreoError) -> Self {
        match e {
            ChoreoError::Config(_) | ChoreoError::InvalidInput(_) => Failure::Usage(e.to_string()),
            other => Failure::Physics(other.to_string()),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(format!("output: {e}"))
    }
}

fn default_scenario(cmd: &Command) -> ScenarioKind {
    match cmd {
        Command::Billiard => ScenarioKind::BilliardEllipse,
        Command::Scaling => ScenarioKind::ScalingProbe,
        _ => ScenarioKind::BoxSimultaneous,
    }
}

fn emit<T: Serialize>(w: &mut dyn Write, prov: &Provenance, body: T) -> Result<(), Failure> {
    let line = serde_json::to_string(&Record { provenance: prov, body }).map_err(|e| Failure::Usage(e.to_string()))?;
    writeln!(w, "{line}")?;
    Ok(())
}

fn run(cli: Cli) -> Result<bool, Failure> {
    let mut cfg = match &cli.config {
        Some(p) => Config::load(p)?,
        None => Config::new(default_scenario(&cli.command)),
    };
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    cfg.validate()?;
    if let Some(t) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Failure::Usage(e.to_string()))?;
    }
    let mut out: Box<dyn Write> = match &cli.out {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    };
    let prov = Provenance::of(&cfg);
    log::info!("config digest {}", prov.config_sha256);
    let csv = cli.format == Format::Csv;
    let passed = match cli.command {
        Command::Simulate => {
            if csv {
                cfg.run.store = true;
                let (report, traj) = simulate(&cfg)?;
                traj.write_csv(&mut out)?;
                report.passed
            } else {
                let r = run_scenario(&cfg)?;
                let ok = r.passed();
                emit(&mut out, &prov, &r)?;
                ok
            }
        }
        Command::Average => {
            let rows = average_table(&cfg)?;
            if csv {
                writeln!(out, "theta,value,d1,d2,d3,d4")?;
                for r in &rows {
                    let v: Vec<String> = r.derivs.iter().map(|x| format!("{x:.17e}")).collect();
                    writeln!(out, "{:.17e},{}", r.theta, v.join(","))?;
                }
            } else {
                for r in &rows {
                    emit(&mut out, &prov, r)?;
                }
            }
            true
        }
        Command::Minimize => {
            let m = choreo::cli::scenario::averaged_minimum(&cfg)?.minimum;
            emit(&mut out, &prov, &m)?;
            true
        }
        Command::Nondeg => {
            let recs = nondeg_draws(&cfg)?;
            for r in &recs {
                emit(&mut out, &prov, r)?;
            }
            recs.iter().all(|r| r.passed)
        }
        Command::Billiard => {
            let r = billiards(&cfg)?;
            let ok = r.passed;
            emit(&mut out, &prov, &r)?;
            ok
        }
        Command::Sweep => {
            let recs = sweep(&cfg);
            for r in &recs {
                emit(&mut out, &prov, r)?;
            }
            recs.iter().all(|r| r.result.as_ref().map(|x| x.passed()).unwrap_or(false))
        }
        Command::Scaling => {
            cfg.scenario = ScenarioKind::ScalingProbe;
            let r = run_scenario(&cfg)?;
            let ok = r.passed();
            emit(&mut out, &prov, &r)?;
            ok
        }
    };
    out.flush()?;
    Ok(passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("CHOREO_LOG", "warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("physics checks failed");
            ExitCode::from(2)
        }
        Err(Failure::Usage(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Physics(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}

use clap::{Args, Parser, Subcommand};
use ris_sim::harness::{
    coverage_sweep, generate_scene, generate_scenes, rate_sweep, selfcheck, write_records, HarnessError,
    ScenarioConfig, TrialSeed,
};
use ris_sim::placement::{build_candidate_set_tangent, build_candidate_set_uniform};
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ris-sim", version, about = "RIS placement and hybrid beamforming simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// Scenario file (TOML); omitted fields take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overrides `sweep.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of trials, overrides `sweep.trials`.
    #[arg(long)]
    trials: Option<u64>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads.
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Subcommand)]
enum Command {
    /// Normalized coverage per placement method and RIS count.
    CoverageSweep(Common),
    /// Sum rate per placement method, scheme and SNR.
    RateSweep(Common),
    /// Write the generated scenes as TOML.
    SceneGen(Common),
    /// Write one trial's candidate set as CSV.
    CandidateDump {
        #[command(flatten)]
        common: Common,
        /// Trial whose scene is used.
        #[arg(long, default_value_t = 0)]
        trial: u64,
        /// Dump the uniform set with this spacing instead of the tangent set.
        #[arg(long)]
        uniform: Option<f64>,
    },
    /// Run the invariant suite.
    Selfcheck(Common),
}

fn load(common: &Common) -> Result<ScenarioConfig, HarnessError> {
    let mut cfg = match &common.config {
        Some(path) => ScenarioConfig::from_path(path)?,
        None => ScenarioConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.sweep.seed = seed;
    }
    if let Some(trials) = common.trials {
        cfg.sweep.trials = trials;
    }
    if common.workers == 0 {
        return Err(HarnessError::Config("--workers must be positive".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

fn output(common: &Common) -> Result<Box<dyn Write>, HarnessError> {
    Ok(match &common.out {
        Some(path) => Box::new(BufWriter::new(File::create(path)?)),
        None => Box::new(BufWriter::new(io::stdout())),
    })
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    match cli.command {
        Command::CoverageSweep(c) => {
            let cfg = load(&c)?;
            write_records(output(&c)?, &coverage_sweep(&cfg, c.workers)?)?;
        }
        Command::RateSweep(c) => {
            let cfg = load(&c)?;
            write_records(output(&c)?, &rate_sweep(&cfg, c.workers)?)?;
        }
        Command::SceneGen(c) => {
            let cfg = load(&c)?;
            let text = toml::to_string(&generate_scenes(&cfg)?)?;
            output(&c)?.write_all(text.as_bytes())?;
        }
        Command::CandidateDump { common, trial, uniform } => {
            let cfg = load(&common)?;
            let scene = generate_scene(&cfg, TrialSeed::new(cfg.sweep.seed, trial))?;
            let set = match uniform {
                Some(spacing) => build_candidate_set_uniform(&scene, spacing)?,
                None => build_candidate_set_tangent(&scene)?,
            };
            set.write_csv(output(&common)?)?;
        }
        Command::Selfcheck(c) => {
            let cfg = load(&c)?;
            let mut out = output(&c)?;
            let mut all = true;
            for check in selfcheck(&cfg)? {
                all &= check.passed;
                let status = if check.passed { "PASS" } else { "FAIL" };
                let line = format!("{status} {} {}", check.name, check.detail);
                writeln!(out, "{}", line.trim_end())?;
            }
            out.flush()?;
            return Ok(all);
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

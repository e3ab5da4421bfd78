//! `psa` command line. Every command is a request to the psa service; without
//! `--server` an in-process server is started on a loopback port.

pub mod config;

use std::fs;
use std::net::{Ipv4Addr, SocketAddr};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};
use psa_client::PsaClient;
use psa_core::api::{EvolveRequest, ReplayRequest, TaskSpec};
use psa_core::cmaes::RunLog;
use psa_core::control::Genome;
use psa_core::experiment::{validate_csv, DEFAULT_FRAME_STRIDE};
use psa_core::tasks::{trajectory_csv, MorphologyKind, Task};

use config::ConfigFile;

pub const EXIT_USAGE: u8 = 1;
pub const EXIT_RUNTIME: u8 = 2;

pub const DEFAULT_BUDGET: usize = 10_000;
pub const GENOME_FILE: &str = "best.genome";
pub const RUNLOG_FILE: &str = "runlog.csv";
pub const TRAJECTORY_FILE: &str = "trajectory.csv";
pub const FRAMES_DIR: &str = "frames";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const FINAL_BEST_FILE: &str = "final_best.csv";

const POLL_INTERVAL: Duration = Duration::from_millis(200);

#[derive(Debug, Parser)]
#[command(
    name = "psa",
    version,
    about = "Evolve and inspect pressure-driven soft agents"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Inflate each body with the fixed pressure ramp; writes validate-<morphology>.csv.
    Validate(Flags),
    /// Optimize a controller; writes best.genome and runlog.csv.
    Evolve(Flags),
    /// Re-simulate a genome; writes trajectory.csv and, with --render, SVG frames.
    Replay(Flags),
    /// Median and spread of best-so-far fitness across runs; writes summary.csv and final_best.csv.
    Aggregate {
        #[command(flatten)]
        flags: Flags,
        /// Run directories (containing runlog.csv) or run log files.
        runs: Vec<PathBuf>,
    },
}

/// Flags shared by all commands. Each overrides the same key of `--config`.
#[derive(Debug, Clone, Default, Args)]
pub struct Flags {
    /// locomotion or escape
    #[arg(long)]
    pub task: Option<String>,
    /// small, medium or large (validate: all when omitted)
    #[arg(long)]
    pub morphology: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    /// Fitness evaluations
    #[arg(long)]
    pub budget: Option<String>,
    /// Drop the pressure controller; pressure stays at its initial value
    #[arg(long)]
    pub no_pressure_control: bool,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Write SVG frames during replay
    #[arg(long)]
    pub render: bool,
    /// Simulation steps between rendered frames
    #[arg(long)]
    pub frame_stride: Option<String>,
    /// key=value file supplying defaults for any of these flags
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Evaluation threads for evolve
    #[arg(long)]
    pub parallelism: Option<String>,
    /// Genome file for replay (default: <out>/best.genome)
    #[arg(long)]
    pub genome: Option<PathBuf>,
    /// Base URL of a running service instead of an in-process one
    #[arg(long)]
    pub server: Option<String>,
}

/// Flags merged with the configuration file and defaults.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub task: Option<Task>,
    pub morphology: Option<MorphologyKind>,
    pub seed: u64,
    pub budget: usize,
    pub pressure_control: bool,
    pub out: PathBuf,
    pub render: bool,
    pub frame_stride: usize,
    pub parallelism: Option<usize>,
    pub genome: Option<PathBuf>,
    pub server: Option<String>,
}

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(anyhow::Error),
}

impl From<anyhow::Error> for CliError {
    fn from(e: anyhow::Error) -> Self {
        Self::Runtime(e)
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn parse_value<T: std::str::FromStr>(key: &str, raw: &str) -> Result<T, CliError>
where
    T::Err: std::fmt::Display,
{
    raw.parse()
        .map_err(|e| usage(format!("invalid value `{raw}` for --{key}: {e}")))
}

impl Settings {
    pub fn resolve(flags: &Flags) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => {
                let text = fs::read_to_string(path)
                    .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
                ConfigFile::parse(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
            }
            None => ConfigFile::default(),
        };
        let pick = |key: &str, flag: &Option<String>| -> Option<String> {
            flag.clone().or_else(|| file.get(key).map(str::to_owned))
        };

        let task = pick("task", &flags.task)
            .map(|v| parse_value::<Task>("task", &v))
            .transpose()?;
        let morphology = pick("morphology", &flags.morphology)
            .map(|v| parse_value::<MorphologyKind>("morphology", &v))
            .transpose()?;
        let seed = pick("seed", &flags.seed)
            .map(|v| parse_value::<u64>("seed", &v))
            .transpose()?
            .unwrap_or(0);
        let budget = pick("budget", &flags.budget)
            .map(|v| parse_value::<usize>("budget", &v))
            .transpose()?
            .unwrap_or(DEFAULT_BUDGET);
        if budget == 0 {
            return Err(usage("--budget must be at least 1"));
        }
        let frame_stride = pick("frame-stride", &flags.frame_stride)
            .map(|v| parse_value::<usize>("frame-stride", &v))
            .transpose()?
            .unwrap_or(DEFAULT_FRAME_STRIDE);
        if frame_stride == 0 {
            return Err(usage("--frame-stride must be at least 1"));
        }
        let parallelism = pick("parallelism", &flags.parallelism)
            .map(|v| parse_value::<usize>("parallelism", &v))
            .transpose()?;
        if parallelism == Some(0) {
            return Err(usage("--parallelism must be at least 1"));
        }
        let no_pressure =
            flags.no_pressure_control || file.flag("no-pressure-control").map_err(usage)?;
        let render = flags.render || file.flag("render").map_err(usage)?;
        let out = flags
            .out
            .clone()
            .or_else(|| file.get("out").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("."));
        let genome = flags
            .genome
            .clone()
            .or_else(|| file.get("genome").map(PathBuf::from));
        let server = pick("server", &flags.server);

        Ok(Self {
            task,
            morphology,
            seed,
            budget,
            pressure_control: !no_pressure,
            out,
            render,
            frame_stride,
            parallelism,
            genome,
            server,
        })
    }

    fn spec(&self) -> Result<TaskSpec, CliError> {
        Ok(TaskSpec {
            task: self
                .task
                .ok_or_else(|| usage("--task is required (locomotion or escape)"))?,
            morphology: self.morphology.unwrap_or(MorphologyKind::Small),
            pressure_control: self.pressure_control,
        })
    }
}

/// Parse `args` (including the program name), run the command and map the
/// outcome to an exit status.
pub fn main_with<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let runtime = match tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
    {
        Ok(rt) => rt,
        Err(e) => {
            eprintln!("error: cannot start runtime: {e}");
            return ExitCode::from(EXIT_RUNTIME);
        }
    };
    match runtime.block_on(run(cli.command)) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(EXIT_USAGE)
        }
        Err(CliError::Runtime(e)) => {
            eprintln!("error: {e:#}");
            ExitCode::from(EXIT_RUNTIME)
        }
    }
}

pub async fn run(command: Command) -> Result<(), CliError> {
    let (flags, runs) = match &command {
        Command::Validate(f) | Command::Evolve(f) | Command::Replay(f) => (f, &[][..]),
        Command::Aggregate { flags, runs } => (flags, runs.as_slice()),
    };
    let settings = Settings::resolve(flags)?;
    // Reject usage errors before any server is started.
    match &command {
        Command::Evolve(_) | Command::Replay(_) => {
            settings.spec()?;
        }
        Command::Aggregate { .. } if runs.is_empty() => {
            return Err(usage("aggregate needs at least one run directory"));
        }
        _ => {}
    }
    let client = connect(&settings).await?;
    match command {
        Command::Validate(_) => cmd_validate(&client, &settings).await,
        Command::Evolve(_) => cmd_evolve(&client, &settings).await,
        Command::Replay(_) => cmd_replay(&client, &settings).await,
        Command::Aggregate { runs, .. } => cmd_aggregate(&client, &settings, &runs).await,
    }
}

async fn connect(settings: &Settings) -> Result<PsaClient, CliError> {
    if let Some(url) = &settings.server {
        return Ok(PsaClient::new(url.clone()));
    }
    let state = match settings.parallelism {
        Some(n) => psa_server::AppState::new(n),
        None => psa_server::AppState::default(),
    };
    let (addr, _handle) = psa_server::spawn(SocketAddr::from((Ipv4Addr::LOCALHOST, 0)), state)
        .await
        .context("cannot start in-process server")?;
    Ok(PsaClient::new(format!("http://{addr}")))
}

fn write(path: &Path, contents: &str) -> anyhow::Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).with_context(|| format!("cannot create {}", dir.display()))?;
    }
    fs::write(path, contents).with_context(|| format!("cannot write {}", path.display()))
}

async fn cmd_validate(client: &PsaClient, s: &Settings) -> Result<(), CliError> {
    let kinds = match s.morphology {
        Some(k) => vec![k],
        None => MorphologyKind::ALL.to_vec(),
    };
    for kind in kinds {
        let resp = client.validate(kind).await.context("validate failed")?;
        let path = s.out.join(format!("validate-{kind}.csv"));
        write(&path, &validate_csv(&resp.rows))?;
        let (first, last) = match (resp.rows.first(), resp.rows.last()) {
            (Some(f), Some(l)) => (f.rho, l.rho),
            _ => return Err(anyhow::anyhow!("validation returned no rows").into()),
        };
        println!("{kind}: rho {first:.4} -> {last:.4} ({})", path.display());
    }
    Ok(())
}

async fn cmd_evolve(client: &PsaClient, s: &Settings) -> Result<(), CliError> {
    let req = EvolveRequest {
        spec: s.spec()?,
        seed: s.seed,
        budget: s.budget,
        parallelism: s.parallelism,
    };
    let job = client
        .start_evolve(&req)
        .await
        .context("cannot start evolution")?;
    let mut reported = 0;
    let status = client
        .wait_job(&job.job_id, POLL_INTERVAL, |st| {
            // One progress line per tenth of the budget.
            let decile = st.evaluations * 10 / st.budget.max(1);
            if decile > reported {
                reported = decile;
                if let Some(best) = st.best {
                    eprintln!(
                        "evaluations {}/{} best {best:.6}",
                        st.evaluations, st.budget
                    );
                }
            }
        })
        .await
        .context("evolution failed")?;
    let Some(outcome) = status.outcome else {
        return Err(anyhow::anyhow!("job finished without an outcome").into());
    };
    let genome_path = s.out.join(GENOME_FILE);
    let log_path = s.out.join(RUNLOG_FILE);
    write(&genome_path, &outcome.genome.to_text())?;
    write(&log_path, &outcome.log.to_csv())?;
    println!("best_fitness={}", outcome.best_fitness);
    println!("lambda={}", outcome.lambda);
    println!("genome={}", genome_path.display());
    println!("runlog={}", log_path.display());
    Ok(())
}

async fn cmd_replay(client: &PsaClient, s: &Settings) -> Result<(), CliError> {
    let spec = s.spec()?;
    let path = s.genome.clone().unwrap_or_else(|| s.out.join(GENOME_FILE));
    let text =
        fs::read_to_string(&path).with_context(|| format!("cannot read {}", path.display()))?;
    let genome = Genome::from_text(&text)
        .with_context(|| format!("invalid genome file {}", path.display()))?;
    let expected = spec.episode().genome_size();
    if genome.theta.len() != expected {
        return Err(anyhow::anyhow!(
            "genome size mismatch: {} has {} parameters, {} {} (pressure_control={}) expects {expected}",
            path.display(),
            genome.theta.len(),
            spec.task,
            spec.morphology,
            spec.pressure_control
        )
        .into());
    }
    let req = ReplayRequest {
        spec,
        seed: s.seed,
        genome,
        frame_stride: s.render.then_some(s.frame_stride),
    };
    let outcome = client.replay(&req).await.context("replay failed")?;
    let rows = outcome.result.trajectory.as_deref().unwrap_or_default();
    write(&s.out.join(TRAJECTORY_FILE), &trajectory_csv(rows))?;
    if s.render {
        let dir = s.out.join(FRAMES_DIR);
        for frame in &outcome.frames {
            write(&dir.join(&frame.name), &frame.svg)?;
        }
        println!("frames={}", outcome.frames.len());
    }
    let r = &outcome.result;
    println!("fitness={}", r.fitness);
    println!("solved={}", r.solved);
    println!("elapsed={}", r.elapsed);
    println!("steps={}", r.steps);
    if r.failed {
        return Err(anyhow::anyhow!("simulation diverged at step {}", r.steps).into());
    }
    Ok(())
}

fn load_run(path: &Path) -> anyhow::Result<RunLog> {
    let file = if path.is_dir() {
        path.join(RUNLOG_FILE)
    } else {
        path.to_path_buf()
    };
    let text =
        fs::read_to_string(&file).with_context(|| format!("cannot read {}", file.display()))?;
    RunLog::from_csv(&text).map_err(|e| anyhow::anyhow!("{}: {e}", file.display()))
}

async fn cmd_aggregate(client: &PsaClient, s: &Settings, runs: &[PathBuf]) -> Result<(), CliError> {
    let logs = runs
        .iter()
        .map(|p| load_run(p))
        .collect::<anyhow::Result<Vec<_>>>()?;
    if logs.iter().all(|l| l.records.is_empty()) {
        return Err(anyhow::anyhow!("run logs contain no records").into());
    }
    let summary = client.aggregate(logs).await.context("aggregate failed")?;
    write(&s.out.join(SUMMARY_FILE), &summary.summary_csv())?;
    write(&s.out.join(FINAL_BEST_FILE), &summary.final_csv())?;
    println!("runs={}", runs.len());
    println!("checkpoints={}", summary.checkpoints.len());
    println!("final_median={}", summary.final_median());
    Ok(())
}

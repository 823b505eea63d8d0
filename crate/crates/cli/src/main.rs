use std::f64::consts::PI;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sqcat_cli::config::{default_ratios, CodeName, GateMode, ReadoutKind, RecoveryKind};
use sqcat_cli::sweep::{parse_count, NamedSweep, Sweep};
use sqcat_cli::{execute, validate, CliError, Experiment, ExperimentConfig};
use sqcat_core::code::SCParams;
use sqcat_core::dissipation::{NoiseParams, Stabilizer};
use sqcat_core::gates::GateKind;
use sqcat_qec::noise::CxSplit;
use sqcat_qec::optimize::MinLogicalOptions;

#[derive(Parser)]
#[command(name = "sqcat", version, about = "Squeezed cat qubit simulations and concatenated-code Monte Carlo")]
struct Cli {
    /// Worker threads for parameter sweeps and Monte Carlo.
    #[arg(long, env = "SQCAT_THREADS", global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment from a config file (or a previous JSON result), or from flags.
    Run(RunArgs),
    /// Check a config without running it; prints the violation report as JSON.
    Validate { config: PathBuf },
    /// Concatenated-code memory experiments.
    Concat {
        #[command(subcommand)]
        command: ConcatCommand,
    },
}

#[derive(Args)]
#[command(args_conflicts_with_subcommands = true)]
struct RunArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[command(flatten)]
    output: OutputArgs,
    #[command(subcommand)]
    kind: Option<Kind>,
}

#[derive(Args, Clone)]
struct OutputArgs {
    /// `.json` writes one JSON document; other paths get CSV plus `<path>.meta.json`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Clone)]
struct CodeArgs {
    #[arg(long, default_value_t = 4.0)]
    nbar: f64,
    /// Fraction of the mean photon number kept in the displacement.
    #[arg(long, conflicts_with = "r")]
    eta: Option<f64>,
    #[arg(long)]
    r: Option<f64>,
}

impl CodeArgs {
    fn params(&self) -> Result<SCParams, CliError> {
        match self.r {
            Some(r) => SCParams::from_r(self.nbar, r),
            None => SCParams::from_eta(self.nbar, self.eta.unwrap_or(0.25)),
        }
        .map_err(|e| CliError::Schema(e.to_string()))
    }
}

#[derive(Args, Clone)]
struct NoiseArgs {
    #[arg(long, default_value_t = 1e-3)]
    kappa1: f64,
    #[arg(long, default_value_t = 1.0)]
    kappa2: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa_phi: f64,
    #[arg(long, default_value_t = 0.0)]
    n_th: f64,
}

impl NoiseArgs {
    fn params(&self) -> NoiseParams {
        NoiseParams::new(self.kappa1, self.kappa2, self.kappa_phi, self.n_th)
    }
}

fn gate_kind(s: &str) -> Result<GateKind, String> {
    serde_json::from_value(serde_json::Value::String(s.to_lowercase())).map_err(|_| format!("unknown gate {s:?}"))
}

#[derive(Subcommand)]
enum Kind {
    /// Phase- and bit-flip rates of the stabilized memory against squeezing.
    MemoryRates {
        #[arg(long, default_value_t = 4.0)]
        nbar: f64,
        /// r=start:stop:points
        #[arg(long)]
        sweep: NamedSweep,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long, default_value_t = 6)]
        d: usize,
        #[arg(long)]
        predict_only: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Gate error budget against gate time.
    GateSweep {
        #[arg(long, value_parser = gate_kind)]
        gate: GateKind,
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        /// t=start:stop:points, in units of 1/kappa2
        #[arg(long)]
        sweep: NamedSweep,
        #[arg(long, default_value_t = PI)]
        theta: f64,
        #[arg(long, default_value_t = 4)]
        d: usize,
        /// Closed-form budgets instead of simulation.
        #[arg(long)]
        formula: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Process matrix of the stabilized memory.
    Tomography {
        #[command(flatten)]
        code: CodeArgs,
        #[command(flatten)]
        noise: NoiseArgs,
        #[arg(long)]
        t: f64,
        #[arg(long, default_value_t = 6)]
        d: usize,
        /// Read only the ground gauge block instead of tracing the gauge mode out.
        #[arg(long)]
        code_block: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Entanglement infidelity of loss followed by recovery.
    EiCurve {
        #[command(flatten)]
        code: CodeArgs,
        /// gamma=start:stop:points
        #[arg(long)]
        sweep: NamedSweep,
        #[arg(long)]
        no_recovery: bool,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Three-mode realization against the ideal dissipator.
    ThreeMode {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 1.0)]
        gamma_b: f64,
        /// ratio=start:stop:points, Gamma_a / Gamma_b
        #[arg(long)]
        sweep: NamedSweep,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Trapped-ion drive scheme against the eliminated dissipator.
    Ion {
        #[command(flatten)]
        code: CodeArgs,
        #[arg(long, default_value_t = 150.0)]
        nu: f64,
        #[arg(long, default_value_t = 0.15)]
        eta0: f64,
        #[arg(long, default_value_t = 1.0)]
        gamma: f64,
        #[arg(long, default_value_t = 0.025)]
        omega_gf: f64,
        #[arg(long, default_value_t = 0.5)]
        omega_ef: f64,
        #[arg(long)]
        t: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
    /// Logical error grid over distance and loss ratio, with a threshold fit.
    ConcatThreshold {
        #[command(flatten)]
        grid: ConcatGrid,
        /// ratio=... (defaults to a grid around the repetition threshold)
        #[arg(long)]
        sweep: Option<NamedSweep>,
        #[arg(long)]
        no_fit: bool,
    },
    /// Lowest logical error over distance and gate time.
    MinLogical {
        #[command(flatten)]
        code: CodeArgs,
        /// ratio=...
        #[arg(long)]
        sweep: NamedSweep,
        #[arg(long)]
        max_dz: Option<usize>,
        #[command(flatten)]
        output: OutputArgs,
    },
}

#[derive(Args, Clone)]
struct ConcatGrid {
    #[arg(long, value_enum)]
    code: CodeName,
    #[arg(long, default_value_t = 3)]
    dx: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [3usize, 5, 7, 9])]
    dz: Vec<usize>,
    #[arg(long, value_parser = parse_count, default_value = "100000")]
    shots: u64,
    #[command(flatten)]
    code_params: CodeArgs,
    #[command(flatten)]
    output: OutputArgs,
}

#[derive(Subcommand)]
enum ConcatCommand {
    /// One memory experiment per (dZ, ratio) point.
    Run {
        #[command(flatten)]
        grid: ConcatGrid,
        /// kappa1/kappa2 as a number, comma list or start:stop:points
        #[arg(long)]
        ratio: Sweep,
    },
}

fn expect(s: &NamedSweep, name: &str) -> Result<Sweep, CliError> {
    if s.name != name {
        return Err(CliError::Schema(format!("this experiment sweeps {name}, not {}", s.name)));
    }
    Ok(s.sweep.clone())
}

fn concat(grid: &ConcatGrid, ratio: Sweep, fit: bool) -> Result<(Experiment, OutputArgs), CliError> {
    let e = Experiment::ConcatThreshold {
        code: grid.code,
        dx: grid.dx,
        dz: grid.dz.clone(),
        ratio,
        shots: grid.shots,
        sc: grid.code_params.params()?,
        split: CxSplit::default(),
        fit,
    };
    Ok((e, grid.output.clone()))
}

fn from_flags(kind: &Kind) -> Result<(Experiment, OutputArgs), CliError> {
    Ok(match kind {
        Kind::MemoryRates { nbar, sweep, noise, d, predict_only, output } => (
            Experiment::MemoryRates {
                nbar: *nbar,
                r: expect(sweep, "r")?,
                noise: noise.params(),
                d: *d,
                stabilizer: Stabilizer::Flip,
                durations: vec![2.0, 4.0, 6.0, 8.0, 10.0],
                predict_only: *predict_only,
            },
            output.clone(),
        ),
        Kind::GateSweep { gate, code, noise, sweep, theta, d, formula, output } => (
            Experiment::GateSweep {
                gate: *gate,
                sc: code.params()?,
                noise: noise.params(),
                t: expect(sweep, "t")?,
                theta: *theta,
                d: *d,
                mode: if *formula { GateMode::Formula } else { GateMode::Simulate },
            },
            output.clone(),
        ),
        Kind::Tomography { code, noise, t, d, code_block, output } => (
            Experiment::Tomography {
                sc: code.params()?,
                noise: noise.params(),
                t: *t,
                d: *d,
                stabilizer: Stabilizer::Flip,
                readout: if *code_block { ReadoutKind::CodeBlock } else { ReadoutKind::GaugeTrace },
            },
            output.clone(),
        ),
        Kind::EiCurve { code, sweep, no_recovery, output } => (
            Experiment::EiCurve {
                sc: code.params()?,
                gamma: expect(sweep, "gamma")?,
                recovery: if *no_recovery { RecoveryKind::None } else { RecoveryKind::AutoQec },
            },
            output.clone(),
        ),
        Kind::ThreeMode { code, gamma_b, sweep, output } => {
            (Experiment::ThreeMode { sc: code.params()?, gamma_b: *gamma_b, ratio: expect(sweep, "ratio")? }, output.clone())
        }
        Kind::Ion { code, nu, eta0, gamma, omega_gf, omega_ef, t, dim, output } => (
            Experiment::Ion { sc: code.params()?, nu: *nu, eta0: *eta0, gamma: *gamma, omega_gf: *omega_gf, omega_ef: *omega_ef, t: *t, dim: *dim },
            output.clone(),
        ),
        Kind::ConcatThreshold { grid, sweep, no_fit } => {
            let ratio = match sweep {
                Some(s) => expect(s, "ratio")?,
                None => default_ratios(),
            };
            concat(grid, ratio, !no_fit)?
        }
        Kind::MinLogical { code, sweep, max_dz, output } => {
            let mut options = MinLogicalOptions::default();
            if let Some(m) = max_dz {
                options.max_dz = *m;
            }
            (Experiment::MinLogical { sc: code.params()?, ratio: expect(sweep, "ratio")?, options }, output.clone())
        }
    })
}

fn run_config(mut cfg: ExperimentConfig, output: &OutputArgs) -> Result<(), CliError> {
    if let Some(seed) = output.seed {
        cfg.seed = seed;
    }
    if output.out.is_some() {
        cfg.output = output.out.clone();
    }
    let artifact = execute(&cfg)?;
    for path in artifact.write(cfg.output.as_deref())? {
        log::info!("wrote {}", path.display());
    }
    Ok(())
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run(args) => match (args.config, args.kind) {
            (Some(path), None) => run_config(ExperimentConfig::load(&path)?, &args.output),
            (None, Some(kind)) => {
                let (experiment, output) = from_flags(&kind)?;
                run_config(ExperimentConfig::new(experiment, 0), &output)
            }
            _ => Err(CliError::Schema("give either --config or an experiment kind".into())),
        },
        Command::Validate { config } => {
            let report = validate(&ExperimentConfig::load(&config)?);
            println!("{}", serde_json::to_string_pretty(&report).expect("report serializes"));
            Ok(())
        }
        Command::Concat { command: ConcatCommand::Run { grid, ratio } } => {
            let (experiment, output) = concat(&grid, ratio, false)?;
            run_config(ExperimentConfig::new(experiment, 0), &output)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sqcat: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

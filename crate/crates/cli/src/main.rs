use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use swave_core::dist::{Dist1DKind, InputDist1D, InputDistN, Rounding};
use swave_core::experiment::{
    hard_instance, oracle_demo, phase_report, run_sweep_with, statdim_report, OracleDemoConfig, SweepConfig, SweepResult,
};
use swave_core::hardfam::to_network;
use swave_core::io::{stream_dataset, write_json, write_network, DatasetFormat};
use swave_core::mlp::{grad_check, HiddenActivation, MlpSpec};
use swave_core::statdim::ScalingConfig;
use swave_core::{ActivationKind, Error, Gate, Result};

#[derive(Parser)]
#[command(name = "swave", version, about = "Hard s-wave function families: data, sweeps, correlation reports and SQ oracle demos")]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args)]
struct Common {
    /// JSON config file; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output file (gen) or directory (other commands).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads; defaults to all cores.
    #[arg(long, global = true)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a labeled dataset with a JSON sidecar.
    Gen {
        /// Also export the generating network in the matrix container.
        #[arg(long)]
        network: Option<PathBuf>,
    },
    /// Train the network grid on every (n, s) cell.
    Sweep {
        /// Use the full-size grid instead of the desk-scale default.
        #[arg(long)]
        paper_scale: bool,
        #[arg(long)]
        restarts: Option<usize>,
    },
    /// Best error per cell from a sweep result, sorted by s·√n.
    Phase {
        /// sweep_result.json written by `sweep`.
        #[arg(long)]
        input: PathBuf,
    },
    /// Correlation and soft-indicator covariance decay in n.
    Statdim,
    /// SQ-mediated training against empirical and decoy oracles.
    OracleDemo,
    /// Compare backpropagation with finite differences.
    GradCheck,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum DistName {
    Gaussian,
    Laplace,
    Uniform,
    L1Ball,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct GenConfig {
    n: usize,
    s: f64,
    gate: String,
    count: usize,
    dist: DistName,
    rounding: Option<usize>,
    seed: u64,
}

impl Default for GenConfig {
    fn default() -> Self {
        GenConfig { n: 16, s: 1.0, gate: "sigmoid".into(), count: 10_000, dist: DistName::Gaussian, rounding: None, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
struct GradCheckConfig {
    n: usize,
    hidden: Vec<usize>,
    activation: HiddenActivation,
    seed: u64,
}

impl Default for GradCheckConfig {
    fn default() -> Self {
        GradCheckConfig { n: 8, hidden: vec![16, 16], activation: HiddenActivation::Sigmoid, seed: 0 }
    }
}

fn load<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let f = File::open(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            serde_json::from_reader(BufReader::new(f)).map_err(|e| Error::Config(format!("{}: {e}", p.display())))
        }
    }
}

fn out_dir(common: &Common, default: &str) -> PathBuf {
    common.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn print_json<T: Serialize>(v: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(v)?);
    Ok(())
}

fn gen(common: &Common, network: Option<&Path>) -> Result<()> {
    let mut cfg: GenConfig = load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let out = common.out.clone().ok_or_else(|| Error::Config("gen needs --out <file>".into()))?;
    let gate: Gate = cfg.gate.parse()?;
    let act = match gate {
        Gate::Softsign => ActivationKind::softsign(),
        g => ActivationKind::new(g, cfg.s)?,
    };
    let dist = match cfg.dist {
        DistName::Gaussian => InputDistN::product(InputDist1D::new(Dist1DKind::StdGaussian), cfg.n),
        DistName::Laplace => InputDistN::product(InputDist1D::new(Dist1DKind::Laplace), cfg.n),
        DistName::Uniform => InputDistN::product(InputDist1D::new(Dist1DKind::UniformInterval), cfg.n),
        DistName::L1Ball => InputDistN::l1_ball(cfg.n),
    };
    let rounding = cfg.rounding.map(Rounding::new).transpose()?;
    let f = hard_instance(act, &dist, cfg.seed)?;
    let meta = stream_dataset(&out, DatasetFormat::from_path(&out), &f, &dist, cfg.count, cfg.seed, rounding)?;
    if let Some(path) = network {
        let mut w = std::io::BufWriter::new(File::create(path)?);
        write_network(&mut w, &to_network(&f))?;
    }
    eprintln!("wrote {} rows to {}", meta.count, out.display());
    Ok(())
}

fn sweep(common: &Common, paper_scale: bool, restarts: Option<usize>) -> Result<()> {
    let mut cfg: SweepConfig = match (&common.config, paper_scale) {
        (Some(p), _) => load(Some(p))?,
        (None, true) => SweepConfig::full_scale(),
        (None, false) => SweepConfig::default(),
    };
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(r) = restarts {
        cfg.restarts = r;
    }
    let dir = out_dir(common, "sweep-out");
    let result = run_sweep_with(&cfg, Some(&dir), |k, total, row| {
        eprintln!("[{k}/{total}] {} test_mse={:.5} baseline={:.5}", row.task_id, row.test_mse, row.baseline_mse);
    })?;
    result.write_csv(File::create(dir.join("sweep.csv"))?)?;
    result.write_timing_csv(File::create(dir.join("sweep_timing.csv"))?)?;
    write_json(&dir.join("sweep_result.json"), &result)?;
    let phase = phase_report(&result)?;
    phase.write_csv(File::create(dir.join("phase.csv"))?)?;
    print_json(&phase)
}

fn phase(common: &Common, input: &Path) -> Result<()> {
    let f = File::open(input).map_err(|e| Error::Config(format!("cannot read {}: {e}", input.display())))?;
    let result: SweepResult = serde_json::from_reader(BufReader::new(f))?;
    let report = phase_report(&result)?;
    if let Some(dir) = &common.out {
        std::fs::create_dir_all(dir)?;
        report.write_csv(File::create(dir.join("phase.csv"))?)?;
        write_json(&dir.join("phase.json"), &report)?;
    }
    print_json(&report)
}

fn statdim(common: &Common) -> Result<()> {
    let cfg: ScalingConfig = load(common.config.as_deref())?;
    let report = statdim_report(&cfg, common.seed.unwrap_or(0), &out_dir(common, "statdim-out"))?;
    print_json(&serde_json::json!({ "slope": report.slope, "per_n": report.summaries }))
}

fn demo(common: &Common) -> Result<()> {
    let cfg: OracleDemoConfig = load(common.config.as_deref())?;
    let report = oracle_demo(&cfg, common.seed.unwrap_or(0), Some(&out_dir(common, "oracle-out")))?;
    let summary: Vec<_> = report
        .outcomes
        .iter()
        .map(|o| {
            serde_json::json!({
                "name": o.run.name,
                "mode": o.run.mode,
                "queries": o.report.queries,
                "test_mse": o.report.test_mse,
                "baseline_mse": o.report.baseline_mse,
                "ratio": o.report.ratio(),
                "truncated": o.report.truncated,
            })
        })
        .collect();
    print_json(&summary)
}

fn grad(common: &Common) -> Result<()> {
    let mut cfg: GradCheckConfig = load(common.config.as_deref())?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    let spec = MlpSpec::new(cfg.n, &cfg.hidden, cfg.activation)?;
    let err = grad_check(&spec, cfg.seed)?;
    let tol = match cfg.activation {
        HiddenActivation::Sigmoid => 1e-5,
        HiddenActivation::Relu => 1e-4,
    };
    print_json(&serde_json::json!({ "max_rel_error": err, "tolerance": tol, "pass": err <= tol }))?;
    if err > tol {
        return Err(Error::NumericFailure(format!("gradient check error {err:e} exceeds {tol:e}")));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(t) = cli.common.threads {
        if t == 0 {
            return Err(Error::Config("--threads must be at least 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .map_err(|e| Error::ResourceLimit(format!("thread pool: {e}")))?;
    }
    match &cli.cmd {
        Command::Gen { network } => gen(&cli.common, network.as_deref()),
        Command::Sweep { paper_scale, restarts } => sweep(&cli.common, *paper_scale, *restarts),
        Command::Phase { input } => phase(&cli.common, input),
        Command::Statdim => statdim(&cli.common),
        Command::OracleDemo => demo(&cli.common),
        Command::GradCheck => grad(&cli.common),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use saddlepath_cli::config::{ExperimentConfig, ForcingKind, ForcingSpec, ModelKind, Parameters, Task};
use saddlepath_cli::{bundled, CliError, ConfigError, BUNDLED};

#[derive(Parser)]
#[command(name = "saddlepath", version, about = "Hyperbolic trajectories, manifolds and capsize classification")]
struct Cli {
    /// Output directory (overrides the config).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for the parallel stages.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Random seed (overrides the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a config file or a bundled config by name.
    Run { config: String },
    /// Hyperbolic trajectory of each saddle.
    HypTraj(Experiment),
    /// Hyperbolic trajectory and stable-manifold lattice samples.
    Manifold(Experiment),
    /// Graph and integration classification of uniform states (roll-heave).
    Classify(Experiment),
    /// Safe volume of the well region under the graph classifier (roll-heave).
    Integrity(Experiment),
    /// BVP manifolds against advected curves (barrier).
    AdvectCheck(Experiment),
    /// Periodic orbit, manifold tubes and section areas of the autonomous roll-heave model.
    AutoFlux(Experiment),
    /// List the bundled configs.
    ListConfigs,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Eckart,
    RollHeave,
}

#[derive(Args, Clone)]
struct Experiment {
    /// Model for the subcommands that support both.
    #[arg(long, value_enum)]
    model: Option<ModelArg>,
    #[arg(long, value_enum, default_value = "none")]
    forcing: ForcingKind,
    /// Barrier damping.
    #[arg(long)]
    k: Option<f64>,
    #[arg(long)]
    h: Option<f64>,
    #[arg(long)]
    kx: Option<f64>,
    #[arg(long)]
    ky: Option<f64>,
    /// Classified states or integrity samples.
    #[arg(long)]
    samples: Option<usize>,
    /// Integration horizon of the escape test.
    #[arg(long)]
    tmax: Option<f64>,
    /// Escape threshold on y^2.
    #[arg(long)]
    escape_y2: Option<f64>,
}

impl Experiment {
    fn config(&self, name: &str, default_model: ModelKind, tasks: Vec<Task>) -> ExperimentConfig {
        let model = match self.model {
            Some(ModelArg::Eckart) => ModelKind::Eckart1dof,
            Some(ModelArg::RollHeave) => ModelKind::RollHeave2dof,
            None => default_model,
        };
        let text = format!("name = \"{name}\"\nmodel = \"{}\"\ntasks = []\n", model_name(model));
        let mut cfg = ExperimentConfig::parse(&text).expect("minimal config parses");
        cfg.tasks = tasks;
        cfg.parameters = Parameters { k: self.k, h: self.h, kx: self.kx, ky: self.ky };
        cfg.forcing = ForcingSpec { kind: self.forcing, terms: None };
        if let Some(n) = self.samples {
            cfg.classify.samples = n;
            cfg.integrity.samples = n;
        }
        if let Some(t) = self.tmax {
            cfg.classify.t_max = t;
        }
        if let Some(e) = self.escape_y2 {
            cfg.classify.escape_y2 = e;
            cfg.flux.escape_y2 = e;
        }
        cfg.normalized()
    }
}

fn model_name(m: ModelKind) -> &'static str {
    match m {
        ModelKind::Eckart1dof => "eckart-1dof",
        ModelKind::RollHeave2dof => "roll-heave-2dof",
    }
}

fn load(config: &str) -> Result<ExperimentConfig, ConfigError> {
    if Path::new(config).is_file() {
        return ExperimentConfig::load(Path::new(config));
    }
    match bundled(config) {
        Some(text) => ExperimentConfig::parse(text),
        None => Err(ConfigError { path: String::new(), message: format!("no config file or bundled config named {config}") }),
    }
}

fn execute(cli: Cli) -> Result<(), CliError> {
    use Task::*;
    let mut cfg = match cli.command {
        Command::ListConfigs => {
            for (name, text) in BUNDLED {
                let about = text.lines().next().and_then(|l| l.strip_prefix("# ")).unwrap_or("");
                println!("{name:<18} {about}");
            }
            return Ok(());
        }
        Command::Run { config } => load(&config)?,
        Command::HypTraj(e) => e.config("hyp-traj", ModelKind::RollHeave2dof, vec![HypTraj]),
        Command::Manifold(e) => e.config("manifold", ModelKind::RollHeave2dof, vec![HypTraj, ManifoldSample]),
        Command::Classify(e) => {
            e.config("classify", ModelKind::RollHeave2dof, vec![HypTraj, ManifoldSample, FitGraphs, Classify])
        }
        Command::Integrity(e) => {
            e.config("integrity", ModelKind::RollHeave2dof, vec![HypTraj, ManifoldSample, FitGraphs, Integrity])
        }
        Command::AdvectCheck(e) => e.config("advect-check", ModelKind::Eckart1dof, vec![HypTraj, AdvectCheck]),
        Command::AutoFlux(e) => e.config("auto-flux", ModelKind::RollHeave2dof, vec![AutonomousFlux]),
    };
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = cli.out {
        cfg.output = Some(out);
    }
    saddlepath_cli::run(&cfg)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            log::warn!("thread pool: {e}");
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            log::error!("{e}");
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

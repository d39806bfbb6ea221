use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use harness::{encap, fsm, mnist, ExperimentConfig, HarnessError};
use modeller::snapshot;

#[derive(Parser)]
#[command(name = "modeller", version, about = "Run the modeller experiments")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// TOML experiment config; defaults apply to missing keys
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
    #[arg(long)]
    trials: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Random-action learning, then planning towards 1G
    PlanBase {
        #[command(flatten)]
        common: Common,
        /// Complete-Random variant with NCE blocking
        #[arg(long)]
        random_variant: bool,
    },
    /// Subtype schedule with learning switched on and off
    Continual {
        #[command(flatten)]
        common: Common,
        /// switch at episode ends with learning always on
        #[arg(long)]
        readaptation: bool,
    },
    /// Export the action network and its encapsulation
    Encapsulate {
        #[command(flatten)]
        common: Common,
        /// model snapshot to plan in instead of training
        #[arg(long)]
        model: Option<PathBuf>,
    },
    /// Class-incremental MNIST
    Mnist {
        #[command(flatten)]
        common: Common,
        /// save each trial's final model as mnr-model-<trial>.json
        #[arg(long)]
        save_models: bool,
    },
    /// Re-export a saved model document (FSM or MNR)
    ExportModel {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
    },
}

fn load(c: &Common) -> Result<ExperimentConfig, HarnessError> {
    let mut cfg = match &c.config {
        Some(p) => ExperimentConfig::load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(s) = c.seed {
        cfg.seed = s;
    }
    if let Some(t) = c.trials {
        cfg.trials = t;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|e| HarnessError::Io(dir.to_path_buf(), e))?;
    let p = dir.join(name);
    std::fs::write(&p, text).map_err(|e| HarnessError::Io(p, e))
}

fn print_summary(m: &harness::Metrics) {
    for (k, v) in &m.summary {
        println!("{k}\t{v:.4}");
    }
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.cmd {
        Cmd::PlanBase { common, random_variant } => {
            let mut cfg = load(&common)?;
            cfg.planning.random_variant |= random_variant;
            let m = fsm::run_base_planning(&cfg)?;
            m.write(&common.out)?;
            write(&common.out, "config.toml", &cfg.to_toml())?;
            print_summary(&m);
        }
        Cmd::Continual { common, readaptation } => {
            let mut cfg = load(&common)?;
            cfg.continual.readaptation |= readaptation;
            let m = fsm::run_continual(&cfg)?;
            m.write(&common.out)?;
            write(&common.out, "config.toml", &cfg.to_toml())?;
            print_summary(&m);
        }
        Cmd::Encapsulate { common, model } => {
            let mut cfg = load(&common)?;
            if model.is_some() {
                cfg.encapsulation.model = model;
            }
            let d = encap::run_encapsulation_demo(&cfg)?;
            encap::export(&d, &common.out)?;
            println!("alternatives\t{}", d.alternatives.len());
            println!("depth\t{}", d.encapsulated.depth());
            for (a, b) in d.skeleton() {
                println!("{a} -> {b}");
            }
        }
        Cmd::Mnist { common, save_models } => {
            let cfg = load(&common)?;
            let run = mnist::run_mnist_continual(&cfg)?;
            run.metrics.write(&common.out)?;
            write(&common.out, "config.toml", &cfg.to_toml())?;
            if save_models {
                for (i, m) in run.models.iter().enumerate() {
                    mnist::save_mnr(&common.out.join(format!("mnr-model-{i}.json")), m)?;
                }
            }
            print_summary(&run.metrics);
        }
        Cmd::ExportModel { common, model } => {
            let text = std::fs::read_to_string(&model).map_err(|e| HarnessError::Io(model.clone(), e))?;
            if let Ok(m) = snapshot::from_document::<modeller::Model>("model", &text) {
                write(&common.out, "model.json", &snapshot::to_document("model", &m)?)?;
                write(&common.out, "model.dot", &snapshot::model_to_dot(&m))?;
            } else {
                let m: mnr::MnrModel = snapshot::from_document(mnist::MNR_KIND, &text)?;
                write(&common.out, "mnr-model.json", &snapshot::to_document(mnist::MNR_KIND, &m)?)?;
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}

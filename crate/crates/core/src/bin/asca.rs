use std::path::PathBuf;
use std::process::ExitCode;

use asca::dataset::DatasetProfile;
use asca::pipeline::{load_config_or_manifest, NoiseSetting, Pipeline, RunConfig};
use asca::signal::{NoiseLevel, NoisePreset};
use asca::{Error, Result};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "asca", version, about = "Keystroke acoustic side-channel pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// Run config or run manifest (JSON). Defaults to a synthetic run.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `<setup>-<level>` (e.g. phone-low) pins that level to the published
    /// noise factor; a bare level restricts the run to it.
    #[arg(long, global = true)]
    preset: Option<String>,
    /// Output root; each run gets its own hashed subdirectory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Keep only backends of this kind (oracle, echo, dictionary, remote).
    #[arg(long, global = true)]
    backend: Option<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Cut per-key recordings into labelled clips.
    Segment,
    /// Write the mel image of every clip.
    Featurize,
    /// Split the dataset and fit the centroid classifier.
    Train,
    /// Test-split accuracy, clean and at every resolved noise level.
    Evaluate,
    /// Resolve the noise factor of each level.
    Calibrate,
    /// Type the corpus through the noisy classifier.
    Attack,
    /// Correct attacked transcripts with the configured backends.
    Correct,
    /// Score transcripts against the truth.
    Score,
    /// Render stored reports as a table.
    Report,
    /// Every stage in order.
    Run,
}

fn build(common: &Common) -> Result<Pipeline> {
    let mut config = match &common.config {
        Some(path) => load_config_or_manifest(path)?,
        None => RunConfig::new(DatasetProfile::Synthetic),
    };
    if let Some(seed) = common.seed {
        config.seed = seed;
    }
    let mut levels = NoiseLevel::ALL.to_vec();
    if let Some(name) = &common.preset {
        let level = match name.parse::<NoisePreset>() {
            Ok(preset) => {
                *config.noise.setting_mut(preset.level) = NoiseSetting::Preset { name: preset.name() };
                preset.level
            }
            Err(_) => name
                .parse::<NoiseLevel>()
                .map_err(|_| Error::Config(vec![format!("unknown preset {name:?}")]))?,
        };
        levels = vec![level];
    }
    if let Some(kind) = &common.backend {
        config.correction.backends.retain(|b| b.kind() == kind);
        if config.correction.backends.is_empty() {
            return Err(Error::Config(vec![format!("no backend of kind {kind:?} is configured")]));
        }
    }
    Ok(Pipeline::new(config, &common.out)?.with_levels(levels))
}

fn execute(command: Command, common: &Common) -> Result<()> {
    let p = build(common)?;
    match command {
        Command::Segment => println!("{} clips", p.segment()?.len()),
        Command::Featurize => println!("{} feature images", p.featurize()?),
        Command::Train => {
            p.train()?;
            println!("model written to {}", p.root().join("model").display());
        }
        Command::Evaluate => {
            for (name, e) in p.evaluate()? {
                println!("{name:<8} accuracy {:.4} over {} clips", e.accuracy, e.tested);
            }
        }
        Command::Calibrate => {
            for (level, n) in p.calibrate()? {
                println!("{level:<8} eta {:.6} ({})", n.eta, n.source);
            }
        }
        Command::Attack => {
            for (level, ts) in p.attack()? {
                println!("{level:<8} accuracy {:.4}", asca::attack::mean_accuracy(&ts));
            }
        }
        Command::Correct => {
            for path in p.correct()? {
                println!("{}", path.display());
            }
        }
        Command::Score => println!("{} reports", p.score()?.len()),
        Command::Report => print!("{}", p.report()?),
        Command::Run => print!("{}", p.run_all()?),
    }
    eprintln!("run directory: {}", p.root().display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command, &cli.common) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let details = match &e {
                Error::Config(problems) => serde_json::json!(problems),
                _ => serde_json::Value::Null,
            };
            let record = serde_json::json!({
                "error": e.kind(),
                "message": e.to_string(),
                "details": details,
            });
            eprintln!("{record}");
            ExitCode::FAILURE
        }
    }
}

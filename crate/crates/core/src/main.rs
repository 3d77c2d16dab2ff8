use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use physcene::pipeline::{self, PipelineError, RunOptions, Stage};
use physcene::scene::{load_scene_config, validate_scene, SceneConfig};

#[derive(Parser)]
#[command(name = "physcene", version, about = "Register, simulate and composite objects from a single-image scene")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the scene file and every file it references.
    Validate { config: PathBuf },
    /// Estimate object poses and write poses.toml.
    Register(StageArgs),
    /// Fill the registered meshes with particles.
    Sample(StageArgs),
    /// Run the MPM simulation, one particle file per frame.
    Simulate(StageArgs),
    /// Deform the meshes along the particles and export tracks.
    Track(StageArgs),
    /// Shade, shadow and composite every frame over the background plate.
    Render(StageArgs),
    /// All stages in order.
    Pipeline(StageArgs),
}

#[derive(Args)]
struct StageArgs {
    config: PathBuf,
    /// Output directory shared by all stages.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Number of frames to simulate, overriding the scene file.
    #[arg(long)]
    frames: Option<usize>,
    /// Recorded in the manifest; the pipeline draws no random numbers.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Outputs do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
    /// Also write 16-bit shadow-factor images.
    #[arg(long)]
    dump_diagnostics: bool,
}

fn fail(stage: &str, e: &PipelineError) -> ExitCode {
    let msg = e.to_string().replace(['\n', '\r'], " ");
    eprintln!("physcene: error kind={} stage={stage}: {msg}", e.kind());
    ExitCode::from(e.exit_code() as u8)
}

fn load(path: &std::path::Path) -> Result<SceneConfig, PipelineError> {
    Ok(load_scene_config(path)?)
}

#[cfg(feature = "parallel")]
fn set_threads(n: Option<usize>) -> Result<(), PipelineError> {
    if let Some(n) = n {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| PipelineError::Config(format!("--threads {n}: {e}")))?;
    }
    Ok(())
}

#[cfg(not(feature = "parallel"))]
fn set_threads(n: Option<usize>) -> Result<(), PipelineError> {
    if n.is_some_and(|n| n > 1) {
        log::warn!("built without the `parallel` feature; running on one thread");
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (stages, args) = match cli.command {
        Command::Validate { config } => {
            let res = load(&config).and_then(|cfg| match validate_scene(&cfg).first() {
                None => Ok(()),
                Some(m) => Err(pipeline::classify_problem(m)),
            });
            return match res {
                Ok(()) => {
                    println!("OK");
                    ExitCode::SUCCESS
                }
                Err(e) => fail("validate", &e),
            };
        }
        Command::Register(a) => (vec![Stage::Register], a),
        Command::Sample(a) => (vec![Stage::Sample], a),
        Command::Simulate(a) => (vec![Stage::Simulate], a),
        Command::Track(a) => (vec![Stage::Track], a),
        Command::Render(a) => (vec![Stage::Render], a),
        Command::Pipeline(a) => (Stage::ALL.to_vec(), a),
    };
    let label = if stages.len() == 1 { stages[0].name() } else { "pipeline" };
    if let Err(e) = set_threads(args.threads) {
        return fail(label, &e);
    }
    let cfg = match load(&args.config) {
        Ok(c) => c,
        Err(e) => return fail(label, &e),
    };
    let opts = RunOptions {
        out: args.out,
        frames: args.frames,
        seed: args.seed,
        dump_diagnostics: args.dump_diagnostics,
    };
    for s in &stages {
        if let Err(e) = pipeline::run(&cfg, &[*s], &opts) {
            return fail(s.name(), &e);
        }
    }
    ExitCode::SUCCESS
}

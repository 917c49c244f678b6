mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use chronolapse::dataset::{generate_synthetic_corpus, SyntheticSpec, MANIFEST_FILE};
use chronolapse::image::ImageGrid;
use chronolapse::synthesis::{synthesize, write_sequence, LatentSpec, Schedule, SynthesisRequest, WriteOptions};
use chronolapse::trainer::{load_checkpoint, train, TrainPaths};
use chronolapse::upsampler::{apply_transform, solve_transform, UpsampleConfig};
use chronolapse::{Error, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use config::{RunConfig, SolverArg, TrainFlags};

const LOG_ENV: &str = "CHRONO_LOG";

/// Time-of-day conditioned time-lapse synthesis.
#[derive(Parser, Debug)]
#[command(name = "chronolapse", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Train a generator on a dataset manifest
    Train(TrainFlags),
    /// Render a time-lapse from one image and a checkpoint
    Synthesize(SynthesizeArgs),
    /// Carry a low-resolution result's colours onto a full-resolution image
    Upsample(UpsampleArgs),
    /// Write a synthetic time-lapse corpus with known tone curves
    MakeSynthetic(MakeSyntheticArgs),
    /// Print what a checkpoint contains
    Inspect(InspectArgs),
}

#[derive(Args, Debug)]
struct SolverFlags {
    /// Smoothness weight of the colour transform
    #[arg(long, default_value_t = UpsampleConfig::default().beta)]
    beta: f64,
    #[arg(long, default_value_t = UpsampleConfig::default().eps_w)]
    eps_w: f64,
    #[arg(long, value_enum, default_value = "cg")]
    solver: SolverArg,
}

impl SolverFlags {
    fn config(&self) -> UpsampleConfig {
        UpsampleConfig {
            beta: self.beta,
            eps_w: self.eps_w,
            solver: self.solver.into(),
            ..UpsampleConfig::default()
        }
    }
}

#[derive(Args, Debug)]
struct SynthesizeArgs {
    /// Input photograph
    #[arg(long)]
    image: PathBuf,
    /// Trained checkpoint (safetensors)
    #[arg(long)]
    checkpoint: PathBuf,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Number of evenly spaced frames from --t-start toward --t-end
    #[arg(long, default_value_t = 24)]
    frames: usize,
    #[arg(long, default_value_t = 0.0)]
    t_start: f64,
    /// End of the schedule, excluded; at or before --t-start wraps midnight
    #[arg(long, default_value_t = 1.0)]
    t_end: f64,
    /// Explicit comma-separated times; replaces the range
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    times: Option<Vec<f64>>,
    /// Seed of the shared latent
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Explicit comma-separated latent; replaces --seed
    #[arg(long, value_delimiter = ',', num_args = 1.., allow_hyphen_values = true)]
    latent: Option<Vec<f32>>,
    /// Keep the generator's low-resolution frames
    #[arg(long)]
    no_upsample: bool,
    #[command(flatten)]
    solver: SolverFlags,
    /// Also write a strip of thumbnails
    #[arg(long)]
    contact_sheet: bool,
    /// Replace an existing sequence in --out
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct UpsampleArgs {
    /// Full-resolution input image
    #[arg(long)]
    input: PathBuf,
    /// Low-resolution result whose colours are transferred
    #[arg(long)]
    guide: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[command(flatten)]
    solver: SolverFlags,
    /// Also write the fitted a and b fields as PFM files into this directory
    #[arg(long)]
    dump_fields: Option<PathBuf>,
    /// Overwrite --out
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct MakeSyntheticArgs {
    #[arg(long)]
    out: PathBuf,
    #[arg(long, default_value_t = SyntheticSpec::default().num_sequences)]
    sequences: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().frames_per_seq)]
    frames: usize,
    #[arg(long, default_value_t = SyntheticSpec::default().size)]
    size: usize,
    /// Extra timestamp-free sequences in a shifted style
    #[arg(long, default_value_t = 0)]
    unlabeled: usize,
    /// Consecutive sequences sharing one scene
    #[arg(long, default_value_t = 1)]
    days_per_camera: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write into a directory that already holds a manifest
    #[arg(long)]
    force: bool,
}

#[derive(Args, Debug)]
struct InspectArgs {
    checkpoint: PathBuf,
    /// Print JSON instead of `key: value` lines
    #[arg(long)]
    json: bool,
}

fn init_logging(level: Option<&str>) {
    let fallback = level.unwrap_or("info");
    env_logger::Builder::from_env(env_logger::Env::new().filter_or(LOG_ENV, fallback))
        .format_timestamp(None)
        .init();
}

fn cmd_train(flags: &TrainFlags) -> Result<()> {
    let rc: RunConfig = flags.resolve()?;
    init_logging(rc.log_level.as_deref());
    let missing = |what: &str| Error::Config(format!("{what} is required (flag or config file)"));
    let paths = TrainPaths {
        dataset: rc.dataset.clone().ok_or_else(|| missing("--dataset"))?,
        unlabeled: rc.unlabeled.clone(),
        out_dir: rc.out_dir.clone().ok_or_else(|| missing("--out"))?,
        resume: rc.resume.clone(),
    };
    let ckpt = train(&rc.train, &paths)?;
    println!("{}", paths.out_dir.join(chronolapse::trainer::FINAL_CHECKPOINT).display());
    log::info!("finished at iteration {}", ckpt.iteration());
    Ok(())
}

fn cmd_synthesize(args: &SynthesizeArgs) -> Result<()> {
    init_logging(None);
    let schedule = match &args.times {
        Some(ts) => Schedule::Explicit(ts.clone()),
        None => Schedule::Range {
            start: args.t_start,
            end: args.t_end,
            frames: args.frames,
        },
    };
    let latent = match &args.latent {
        Some(v) => LatentSpec::Explicit(v.clone()),
        None => LatentSpec::Seed(args.seed),
    };
    let upsample = (!args.no_upsample).then(|| args.solver.config());
    let seq = synthesize(&SynthesisRequest {
        image: args.image.clone(),
        checkpoint: args.checkpoint.clone(),
        schedule,
        latent,
        upsample,
    })?;
    let manifest = write_sequence(
        &seq,
        &args.out,
        WriteOptions {
            force: args.force,
            contact_sheet: args.contact_sheet,
        },
    )?;
    log::info!("{} frames", seq.frames.len());
    println!("{}", manifest.display());
    Ok(())
}

fn cmd_upsample(args: &UpsampleArgs) -> Result<()> {
    init_logging(None);
    if args.out.exists() && !args.force {
        return Err(Error::OutputExists(args.out.clone()));
    }
    let cfg = args.solver.config();
    let input = ImageGrid::load(&args.input)?;
    let guide = ImageGrid::load(&args.guide)?;
    let (h, w) = input.dims();
    let (gh, gw) = guide.dims();
    if gh > h || gw > w {
        return Err(Error::Shape(format!("guide {gh}x{gw} is larger than the input {h}x{w}")));
    }
    let low = if (gh, gw) == (h, w) { input.clone() } else { input.resize_area(gh, gw) };
    let field = solve_transform(&low, &guide, &cfg)?;
    if let Some(dir) = &args.dump_fields {
        std::fs::create_dir_all(dir).map_err(|e| Error::Io {
            context: format!("creating {}", dir.display()),
            source: e,
        })?;
        field.write_pfm(dir)?;
    }
    apply_transform(&input, &field)?.save(&args.out)?;
    println!("{}", args.out.display());
    Ok(())
}

fn cmd_make_synthetic(args: &MakeSyntheticArgs) -> Result<()> {
    init_logging(None);
    let manifest = args.out.join(MANIFEST_FILE);
    if manifest.exists() && !args.force {
        return Err(Error::OutputExists(args.out.clone()));
    }
    let spec = SyntheticSpec {
        num_sequences: args.sequences,
        frames_per_seq: args.frames,
        size: args.size,
        unlabeled_sequences: args.unlabeled,
        days_per_camera: args.days_per_camera,
        ..SyntheticSpec::default()
    };
    let (index, _) = generate_synthetic_corpus(&args.out, &spec, &mut ChaCha8Rng::seed_from_u64(args.seed))?;
    log::info!("{} records written", index.records.len());
    println!("{}", manifest.display());
    Ok(())
}

fn inspect_value(path: &Path) -> Result<Value> {
    let ckpt = load_checkpoint(path)?;
    let params: serde_json::Map<String, Value> = ckpt
        .state
        .bundle
        .num_parameters()
        .into_iter()
        .map(|(n, c)| (n.to_string(), json!(c)))
        .collect();
    Ok(json!({
        "mode": ckpt.config.mode,
        "iteration": ckpt.iteration(),
        "config_hash": ckpt.config_hash,
        "parameters": params,
        "config": ckpt.config,
    }))
}

/// `a.b.c: value` lines, one per leaf.
fn flatten(prefix: &str, v: &Value, out: &mut Vec<String>) {
    match v {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                flatten(&key, v, out);
            }
        }
        leaf => out.push(format!("{prefix}: {leaf}")),
    }
}

fn cmd_inspect(args: &InspectArgs) -> Result<()> {
    init_logging(None);
    let v = inspect_value(&args.checkpoint)?;
    if args.json {
        println!("{}", serde_json::to_string_pretty(&v).expect("value serializes"));
    } else {
        let mut lines = Vec::new();
        flatten("", &v, &mut lines);
        for l in lines {
            println!("{l}");
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(f) => cmd_train(f),
        Command::Synthesize(a) => cmd_synthesize(a),
        Command::Upsample(a) => cmd_upsample(a),
        Command::MakeSynthetic(a) => cmd_make_synthetic(a),
        Command::Inspect(a) => cmd_inspect(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

//! Training loop, checkpoints and metrics.
//!
//! Every iteration draws its batch from a generator seeded by
//! `(config.seed, iteration)`, so a resumed run sees the same batches an
//! uninterrupted one would have.

mod batch;
mod checkpoint;
mod config;
mod metrics;
mod steps;

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub use batch::{derangement, prepare_labeled, prepare_unlabeled, LabeledBatch, UnlabeledBatch};
pub use checkpoint::{
    checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint, Checkpoint,
    FORMAT_VERSION, METADATA_KEY,
};
pub use config::TrainConfig;
pub use metrics::{read_metrics, MetricsLog, MetricsRecord};
pub use steps::{
    train_step_multidomain, train_step_multidomain_observed, train_step_multiframe,
    train_step_multiframe_observed, train_step_vanilla, Observer, Phase, TrainState,
};

use crate::dataset::{
    load_manifest, sample_frameset, sample_unlabeled_window, DatasetIndex, DomainTag,
    MANIFEST_FILE,
};
use crate::error::{Error, Result};
use crate::nets::{init_models, Mode};
use crate::time::TimeOfDay;

pub const METRICS_FILE: &str = "metrics.jsonl";
pub const FINAL_CHECKPOINT: &str = "final.safetensors";

/// Batch streams live above the four network-initialisation streams.
const BATCH_STREAM_BASE: u64 = 1 << 32;

pub fn checkpoint_name(iteration: u64) -> String {
    format!("checkpoint-{iteration:08}.safetensors")
}

/// The generator driving iteration `iteration` of a run seeded with `seed`.
pub fn iteration_rng(seed: u64, iteration: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(BATCH_STREAM_BASE + iteration);
    rng
}

/// A manifest path, or a directory holding `manifest.json`.
pub fn manifest_path(path: &Path) -> PathBuf {
    if path.is_dir() {
        path.join(MANIFEST_FILE)
    } else {
        path.to_path_buf()
    }
}

pub struct Trainer {
    pub config: TrainConfig,
    pub state: TrainState,
    labeled: DatasetIndex,
    unlabeled: Option<DatasetIndex>,
    time_pool: Vec<TimeOfDay>,
    consecutive_failures: u32,
}

impl std::fmt::Debug for Trainer {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Trainer")
            .field("mode", &self.config.mode)
            .field("iteration", &self.state.iteration)
            .finish()
    }
}

impl Trainer {
    pub fn new(
        config: TrainConfig,
        labeled: DatasetIndex,
        unlabeled: Option<DatasetIndex>,
    ) -> Result<Self> {
        config.validate()?;
        let bundle = init_models(&config.net, config.mode, config.seed)?;
        let state = TrainState::new(bundle, config.adam());
        Self::with_state(config, state, labeled, unlabeled)
    }

    /// Continues from `ckpt`; `config` may change only the run length and
    /// checkpoint cadence.
    pub fn from_checkpoint(
        ckpt: Checkpoint,
        config: TrainConfig,
        labeled: DatasetIndex,
        unlabeled: Option<DatasetIndex>,
    ) -> Result<Self> {
        config.validate()?;
        ckpt.check_config(&config)?;
        Self::with_state(config, ckpt.state, labeled, unlabeled)
    }

    fn with_state(
        config: TrainConfig,
        state: TrainState,
        labeled: DatasetIndex,
        unlabeled: Option<DatasetIndex>,
    ) -> Result<Self> {
        if labeled.labeled().next().is_none() {
            return Err(Error::EmptyDataset("no labeled sequences".into()));
        }
        let unlabeled = if config.mode == Mode::Multidomain {
            match unlabeled {
                Some(u) if u.unlabeled().next().is_some() => Some(u),
                _ => {
                    return Err(Error::ModeMismatch(
                        "multidomain training needs an unlabeled dataset".into(),
                    ))
                }
            }
        } else {
            None
        };
        let time_pool = labeled.labeled_times();
        Ok(Self {
            config,
            state,
            labeled,
            unlabeled,
            time_pool,
            consecutive_failures: 0,
        })
    }

    pub fn iteration(&self) -> u64 {
        self.state.iteration
    }

    /// One iteration. A non-finite loss leaves the networks untouched and
    /// yields a record carrying the event; too many in a row is an error.
    pub fn step(&mut self) -> Result<MetricsRecord> {
        self.step_observed(&mut |_, _| {})
    }

    pub fn step_observed(&mut self, observe: Observer) -> Result<MetricsRecord> {
        let it = self.state.iteration;
        let mut rng = iteration_rng(self.config.seed, it);
        let cfg = &self.config;
        let labeled = (0..cfg.batch_size)
            .map(|_| sample_frameset(&self.labeled, cfg.frames_per_example, &cfg.augment, &mut rng))
            .collect::<Result<Vec<_>>>()?;
        let out = match cfg.mode {
            Mode::Vanilla => train_step_vanilla(&mut self.state, &labeled, cfg, &mut rng),
            Mode::Multiframe => {
                train_step_multiframe_observed(&mut self.state, &labeled, cfg, &mut rng, observe)
            }
            Mode::Multidomain => {
                let index = self.unlabeled.as_ref().expect("checked at construction");
                let unlabeled = (0..cfg.batch_size)
                    .map(|_| {
                        sample_unlabeled_window(index, cfg.frames_per_example, &cfg.augment, &mut rng)
                    })
                    .collect::<Result<Vec<_>>>()?;
                train_step_multidomain_observed(
                    &mut self.state,
                    &labeled,
                    &unlabeled,
                    &self.time_pool,
                    cfg,
                    &mut rng,
                    observe,
                )
            }
        };
        match out {
            Ok(rec) => {
                self.consecutive_failures = 0;
                Ok(rec)
            }
            Err(e @ Error::NonfiniteLoss { .. }) => {
                self.consecutive_failures += 1;
                log::warn!("skipping iteration {it}: {e}");
                if self.consecutive_failures >= self.config.max_consecutive_nonfinite {
                    return Err(e);
                }
                Ok(MetricsRecord {
                    iteration: it,
                    event: Some(e.to_string()),
                    ..MetricsRecord::default()
                })
            }
            Err(e) => Err(e),
        }
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.config.clone(),
            config_hash: self.config.hash(),
            state: self.state.clone(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_checkpoint(&self.state, &self.config, path)
    }
}

#[derive(Clone, Debug, Default)]
pub struct TrainPaths {
    /// Labeled manifest, or a directory containing `manifest.json`.
    pub dataset: PathBuf,
    /// Manifest holding the unlabeled sequences; required in multidomain mode.
    pub unlabeled: Option<PathBuf>,
    pub out_dir: PathBuf,
    pub resume: Option<PathBuf>,
}

/// Runs to `config.iterations`, appending to `metrics.jsonl` and writing a
/// checkpoint every `checkpoint_every` iterations plus `final.safetensors`.
pub fn train(config: &TrainConfig, paths: &TrainPaths) -> Result<Checkpoint> {
    config.validate()?;
    let labeled = load_manifest(&manifest_path(&paths.dataset), DomainTag::Labeled)?;
    let unlabeled = match (&paths.unlabeled, config.mode) {
        (Some(p), Mode::Multidomain) => Some(load_manifest(&manifest_path(p), DomainTag::Unlabeled)?),
        (None, Mode::Multidomain) => {
            return Err(Error::ModeMismatch(
                "multidomain training needs an unlabeled dataset".into(),
            ))
        }
        _ => None,
    };
    let mut trainer = match &paths.resume {
        Some(p) => Trainer::from_checkpoint(load_checkpoint(p)?, config.clone(), labeled, unlabeled)?,
        None => Trainer::new(config.clone(), labeled, unlabeled)?,
    };
    std::fs::create_dir_all(&paths.out_dir)
        .map_err(|e| Error::io(format!("creating {}", paths.out_dir.display()), e))?;
    let mut log = MetricsLog::open(&paths.out_dir.join(METRICS_FILE))?;
    log::info!(
        "training {:?} from iteration {} to {}",
        config.mode,
        trainer.iteration(),
        config.iterations
    );
    while trainer.iteration() < config.iterations {
        let rec = trainer.step()?;
        log.append(&rec)?;
        let done = trainer.iteration();
        if done % config.checkpoint_every == 0 && done < config.iterations {
            trainer.save(&paths.out_dir.join(checkpoint_name(done)))?;
        }
        if done % 100 == 0 {
            log::info!("iteration {done}: {:?}", rec.losses.get("d.total"));
        }
    }
    trainer.save(&paths.out_dir.join(FINAL_CHECKPOINT))?;
    Ok(trainer.checkpoint())
}

#[cfg(test)]
mod tests;

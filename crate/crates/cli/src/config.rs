use std::path::{Path, PathBuf};

use chronolapse::nets::{Mode, NetConfig, TimeEncodingMode};
use chronolapse::trainer::TrainConfig;
use chronolapse::upsampler::{Solver, UpsampleConfig};
use chronolapse::{Error, Result};
use clap::Args;
use serde::{Deserialize, Serialize};

/// Everything one run needs, as read from `--config` and then overridden by
/// flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: TrainConfig,
    pub upsample: UpsampleConfig,
    pub dataset: Option<PathBuf>,
    pub unlabeled: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub resume: Option<PathBuf>,
    pub log_level: Option<String>,
}

impl RunConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            context: format!("reading {}", path.display()),
            source: e,
        })?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn validate(&self) -> Result<()> {
        self.train.validate()?;
        self.upsample.validate()?;
        if let Some(level) = &self.log_level {
            level
                .parse::<log::LevelFilter>()
                .map_err(|_| Error::Config(format!("unknown log level {level:?}")))?;
        }
        Ok(())
    }
}

#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// JSON run configuration; flags given here override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Dataset manifest, or a directory holding manifest.json
    #[arg(long)]
    pub dataset: Option<PathBuf>,
    /// Manifest of unlabeled sequences (multidomain mode)
    #[arg(long)]
    pub unlabeled: Option<PathBuf>,
    /// Output directory for checkpoints and metrics
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Checkpoint to continue from
    #[arg(long)]
    pub resume: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    #[arg(long)]
    pub iterations: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Frames per training example
    #[arg(long)]
    pub frames: Option<usize>,
    /// Mismatched (image, time) pairs per example
    #[arg(long)]
    pub negative_pairs: Option<usize>,
    #[arg(long)]
    pub learning_rate: Option<f32>,
    #[arg(long)]
    pub lambda_rec: Option<f64>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub checkpoint_every: Option<u64>,
    /// Training crop size
    #[arg(long)]
    pub image_size: Option<usize>,
    /// Resize before cropping
    #[arg(long)]
    pub resize_to: Option<usize>,
    #[arg(long)]
    pub latent_dim: Option<usize>,
    #[arg(long, value_enum)]
    pub time_encoding: Option<EncodingArg>,
    /// Small networks for quick experiments
    #[arg(long)]
    pub toy_net: bool,
    /// Encoder weights in safetensors format
    #[arg(long)]
    pub pretrained_encoder: Option<PathBuf>,
    /// Discriminator fake term written as `1 - log D`
    #[arg(long)]
    pub literal_paper_loss: bool,
    #[arg(long)]
    pub log_level: Option<String>,
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModeArg {
    Vanilla,
    Multiframe,
    Multidomain,
}

impl From<ModeArg> for Mode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Vanilla => Mode::Vanilla,
            ModeArg::Multiframe => Mode::Multiframe,
            ModeArg::Multidomain => Mode::Multidomain,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum EncodingArg {
    Raw,
    Cyclic,
}

impl From<EncodingArg> for TimeEncodingMode {
    fn from(e: EncodingArg) -> Self {
        match e {
            EncodingArg::Raw => TimeEncodingMode::Raw,
            EncodingArg::Cyclic => TimeEncodingMode::Cyclic,
        }
    }
}

#[derive(clap::ValueEnum, Clone, Copy, Debug, PartialEq, Eq)]
pub enum SolverArg {
    Cg,
    Dense,
}

impl From<SolverArg> for Solver {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Cg => Solver::Cg,
            SolverArg::Dense => Solver::Dense,
        }
    }
}

impl TrainFlags {
    /// Defaults, then the config file, then these flags.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut rc = match &self.config {
            Some(p) => RunConfig::from_file(p)?,
            None => RunConfig::default(),
        };
        let t = &mut rc.train;
        if self.toy_net {
            t.net = NetConfig::toy();
        }
        macro_rules! set {
            ($flag:expr, $field:expr) => {
                if let Some(v) = $flag.clone() {
                    $field = v.into();
                }
            };
        }
        set!(self.mode, t.mode);
        set!(self.iterations, t.iterations);
        set!(self.batch_size, t.batch_size);
        set!(self.frames, t.frames_per_example);
        set!(self.learning_rate, t.learning_rate);
        set!(self.lambda_rec, t.lambda_rec);
        set!(self.seed, t.seed);
        set!(self.checkpoint_every, t.checkpoint_every);
        set!(self.image_size, t.augment.crop_to);
        set!(self.resize_to, t.augment.resize_to);
        set!(self.latent_dim, t.net.d_z);
        set!(self.time_encoding, t.net.time_encoding);
        if let Some(k) = self.negative_pairs {
            t.negative_pairs = Some(k);
        }
        if let Some(p) = &self.pretrained_encoder {
            t.net.pretrained_encoder = Some(p.clone());
        }
        if self.literal_paper_loss {
            t.literal_paper_loss = true;
        }
        if self.image_size.is_some() && self.resize_to.is_none() && t.augment.resize_to < t.augment.crop_to {
            t.augment.resize_to = t.augment.crop_to;
        }
        set!(self.dataset.as_ref().map(|p| Some(p.clone())), rc.dataset);
        set!(self.unlabeled.as_ref().map(|p| Some(p.clone())), rc.unlabeled);
        set!(self.out.as_ref().map(|p| Some(p.clone())), rc.out_dir);
        set!(self.resume.as_ref().map(|p| Some(p.clone())), rc.resume);
        set!(self.log_level.as_ref().map(|p| Some(p.clone())), rc.log_level);
        rc.validate()?;
        Ok(rc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_without_file_or_flags() {
        let rc = TrainFlags::default().resolve().unwrap();
        assert_eq!(rc, RunConfig::default());
    }

    #[test]
    fn flags_override_file() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        std::fs::write(
            &path,
            r#"{"train": {"iterations": 7, "seed": 3, "mode": "vanilla"}, "dataset": "a"}"#,
        )
        .unwrap();
        let from_file = TrainFlags {
            config: Some(path.clone()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(from_file.train.iterations, 7);
        assert_eq!(from_file.train.mode, Mode::Vanilla);
        assert_eq!(from_file.train.batch_size, TrainConfig::default().batch_size);

        let both = TrainFlags {
            config: Some(path),
            seed: Some(9),
            dataset: Some("b".into()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(both.train.seed, 9);
        assert_eq!(both.train.iterations, 7);
        assert_eq!(both.dataset, Some(PathBuf::from("b")));
    }

    #[test]
    fn file_and_equivalent_flags_agree() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("run.json");
        let flags = TrainFlags {
            mode: Some(ModeArg::Multidomain),
            iterations: Some(50),
            batch_size: Some(2),
            frames: Some(4),
            learning_rate: Some(1e-3),
            seed: Some(11),
            image_size: Some(32),
            resize_to: Some(34),
            dataset: Some("toy".into()),
            ..Default::default()
        };
        let via_flags = flags.resolve().unwrap();
        std::fs::write(&path, serde_json::to_string(&via_flags).unwrap()).unwrap();
        let via_file = TrainFlags {
            config: Some(path.clone()),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(via_flags, via_file);
        let via_both = TrainFlags {
            config: Some(path),
            ..flags
        }
        .resolve()
        .unwrap();
        assert_eq!(via_flags, via_both);
    }

    #[test]
    fn unknown_keys_rejected() {
        let dir = tempfile::tempdir().unwrap();
        for body in [r#"{"trian": {}}"#, r#"{"train": {"iters": 5}}"#, r#"{"upsample": {"gamma": 1}}"#] {
            let path = dir.path().join("bad.json");
            std::fs::write(&path, body).unwrap();
            let err = TrainFlags {
                config: Some(path),
                ..Default::default()
            }
            .resolve()
            .unwrap_err();
            assert_eq!(err.exit_code(), 2, "{body}");
        }
    }

    #[test]
    fn invalid_values_rejected() {
        let bad = [
            TrainFlags {
                iterations: Some(0),
                ..Default::default()
            },
            TrainFlags {
                log_level: Some("loud".into()),
                ..Default::default()
            },
            TrainFlags {
                image_size: Some(30),
                ..Default::default()
            },
        ];
        for f in bad {
            assert!(matches!(f.resolve(), Err(Error::Config(_))), "{f:?}");
        }
    }

    #[test]
    fn toy_net_keeps_explicit_latent() {
        let rc = TrainFlags {
            toy_net: true,
            latent_dim: Some(3),
            ..Default::default()
        }
        .resolve()
        .unwrap();
        assert_eq!(rc.train.net.width, NetConfig::toy().width);
        assert_eq!(rc.train.net.d_z, 3);
    }
}

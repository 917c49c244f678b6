use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::autograd::AdamConfig;
use crate::dataset::AugmentConfig;
use crate::error::{Error, Result};
use crate::nets::{Mode, NetConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub mode: Mode,
    pub iterations: u64,
    pub batch_size: usize,
    pub frames_per_example: usize,
    /// Mismatched pairs per frame set; `None` means one per frame.
    pub negative_pairs: Option<usize>,
    pub learning_rate: f32,
    pub adam_beta1: f32,
    pub adam_beta2: f32,
    pub lambda_rec: f64,
    pub seed: u64,
    pub checkpoint_every: u64,
    /// Use the fake term exactly as printed, `1 - log D`, in discriminator
    /// objectives.
    pub literal_paper_loss: bool,
    pub max_consecutive_nonfinite: u32,
    /// Crop size is `augment.crop_to`, pre-crop resize `augment.resize_to`.
    pub augment: AugmentConfig,
    /// Architecture, including `d_z` and the time encoding.
    pub net: NetConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Multiframe,
            iterations: 60_000,
            batch_size: 4,
            frames_per_example: 16,
            negative_pairs: None,
            learning_rate: 2e-4,
            adam_beta1: 0.5,
            adam_beta2: 0.999,
            lambda_rec: 0.5,
            seed: 0,
            checkpoint_every: 5_000,
            literal_paper_loss: false,
            max_consecutive_nonfinite: 10,
            augment: AugmentConfig::default(),
            net: NetConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn image_size(&self) -> usize {
        self.augment.crop_to
    }

    pub fn resize_size(&self) -> usize {
        self.augment.resize_to
    }

    pub fn negatives(&self) -> usize {
        self.negative_pairs.unwrap_or(self.frames_per_example)
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            learning_rate: self.learning_rate,
            beta1: self.adam_beta1,
            beta2: self.adam_beta2,
            ..AdamConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.iterations == 0 || self.batch_size == 0 || self.checkpoint_every == 0 {
            return bad("iterations, batch_size and checkpoint_every must be positive".into());
        }
        if self.frames_per_example < 1
            || (self.mode != Mode::Vanilla && self.frames_per_example < 2)
        {
            return bad(format!(
                "frames_per_example must be >= 2 in {:?} mode",
                self.mode
            ));
        }
        let n = self.frames_per_example;
        if self.mode != Mode::Vanilla && !(1..=n * (n - 1)).contains(&self.negatives()) {
            return bad(format!("negative_pairs must be in 1..={}", n * (n - 1)));
        }
        if !(self.learning_rate >= 0.0) || !(self.lambda_rec >= 0.0) {
            return bad("learning_rate and lambda_rec must be nonnegative".into());
        }
        if !(0.0..1.0).contains(&self.adam_beta1) || !(0.0..1.0).contains(&self.adam_beta2) {
            return bad("Adam betas must be in [0, 1)".into());
        }
        self.augment.validate()?;
        self.net.validate()?;
        let crop = self.image_size();
        let stride = self.net.generator_stride().max(self.net.translator_stride());
        if crop % stride != 0 || crop < (1 << self.net.disc_layers) {
            return bad(format!(
                "image_size {crop} must be a multiple of {stride} and at least {}",
                1 << self.net.disc_layers
            ));
        }
        Ok(())
    }

    /// SHA-256 over the canonical JSON of everything except the run length
    /// and checkpoint cadence, so a run can be extended on resume.
    pub fn hash(&self) -> String {
        let mut v = serde_json::to_value(self).expect("config serializes");
        if let Some(map) = v.as_object_mut() {
            map.remove("iterations");
            map.remove("checkpoint_every");
        }
        let digest = Sha256::digest(v.to_string().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

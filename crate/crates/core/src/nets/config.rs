use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::time::TimeEncodingMode;

/// Conv count and channel multiplier of each VGG-16 stage.
pub(crate) const VGG_STAGES: [(usize, usize); 5] = [(2, 1), (2, 2), (3, 4), (3, 8), (3, 8)];

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    /// Per-frame conditional GAN, no latent, no set pooling.
    Vanilla,
    /// Joint frame-set training on labeled data.
    #[default]
    Multiframe,
    /// Multiframe plus the translator branch for unlabeled video.
    Multidomain,
}

impl Mode {
    pub fn uses_latent(self) -> bool {
        self != Mode::Vanilla
    }

    pub fn has_translator(self) -> bool {
        self == Mode::Multidomain
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NetConfig {
    /// Channel count of the first generator stage.
    pub width: usize,
    /// VGG stages kept in the generator encoder, each ending in a 2× pool.
    pub encoder_pools: usize,
    pub res_blocks: usize,
    pub d_z: usize,
    pub time_encoding: TimeEncodingMode,
    pub disc_width: usize,
    /// Stride-2 convolutions in each discriminator encoder.
    pub disc_layers: usize,
    pub cond_layers: usize,
    pub cond_hidden: usize,
    pub translator_width: usize,
    pub unet_depth: usize,
    /// Optional encoder weights (see [`crate::nets::load_pretrained_encoder`]).
    pub pretrained_encoder: Option<PathBuf>,
}

impl Default for NetConfig {
    fn default() -> Self {
        Self {
            width: 64,
            encoder_pools: 2,
            res_blocks: 6,
            d_z: 64,
            time_encoding: TimeEncodingMode::Cyclic,
            disc_width: 64,
            disc_layers: 4,
            cond_layers: 2,
            cond_hidden: 256,
            translator_width: 32,
            unet_depth: 2,
            pretrained_encoder: None,
        }
    }
}

impl NetConfig {
    /// Small networks for 32×32 experiments on a CPU.
    pub fn toy() -> Self {
        Self {
            width: 8,
            res_blocks: 3,
            d_z: 8,
            disc_width: 8,
            disc_layers: 3,
            cond_hidden: 32,
            translator_width: 8,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=VGG_STAGES.len()).contains(&self.encoder_pools) {
            return Err(Error::Config(format!(
                "encoder_pools must be in 1..={}",
                VGG_STAGES.len()
            )));
        }
        let positive = [
            ("width", self.width),
            ("disc_width", self.disc_width),
            ("disc_layers", self.disc_layers),
            ("cond_layers", self.cond_layers),
            ("cond_hidden", self.cond_hidden),
            ("translator_width", self.translator_width),
            ("unet_depth", self.unet_depth),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// Input sides must be multiples of this for the generator.
    pub fn generator_stride(&self) -> usize {
        1 << self.encoder_pools
    }

    pub fn translator_stride(&self) -> usize {
        1 << self.unet_depth
    }
}

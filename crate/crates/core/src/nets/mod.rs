//! The four networks and their pure evaluation entry points.
//!
//! Each network owns a [`ParamStore`](crate::autograd::ParamStore) and
//! exposes a graph-building `forward`. The free functions below evaluate a
//! network outside of training, with all parameters frozen.

mod bundle;
mod config;
mod discriminator;
mod generator;
mod layers;
mod translator;

pub use bundle::{
    disc_cond_score, disc_uncond_score, disc_uncond_scores, generate_frameset, generator_forward,
    init_models, latent_tensor, load_pretrained_encoder, plain_disc_scores, save_encoder_weights,
    time_tensor, translator_forward, LatentContext, ModelBundle, NETWORK_NAMES,
};
pub(crate) use bundle::{tensor_bytes, tensor_from_view};
pub use config::{Mode, NetConfig};
pub use discriminator::{PlainDiscriminator, SetDiscriminator};
pub use generator::Generator;
pub use translator::Translator;

pub use crate::time::{encode_time, TimeEncodingMode};

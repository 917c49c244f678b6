//! Time-lapse synthesis from a single image.
//!
//! A generator conditioned on the time of day and a shared latent renders
//! one photograph at any hour. Guided upsampling carries its
//! low-resolution output back to the input's resolution.
//!
//! ```
//! use chronolapse::image::ImageGrid;
//! use chronolapse::nets::{generator_forward, init_models, LatentContext, Mode, NetConfig};
//! use chronolapse::time::TimeOfDay;
//! use chronolapse::upsampler::{guided_upsample, UpsampleConfig};
//!
//! let bundle = init_models(&NetConfig::toy(), Mode::Multiframe, 0)?;
//! let photo = ImageGrid::filled(32, 32, 0.3);
//! let low = photo.resize_area(16, 16);
//! let z = LatentContext::zeros(bundle.g_t.d_z());
//! let dusk = generator_forward(&bundle.g_t, bundle.time_encoding(), &low, TimeOfDay::new(0.8)?, Some(&z))?;
//! let full = guided_upsample(&photo, &dusk, &UpsampleConfig::default())?;
//! assert_eq!(full.dims(), (32, 32));
//! # Ok::<(), chronolapse::Error>(())
//! ```

pub mod autograd;
pub mod dataset;
pub mod error;
pub mod image;
pub mod losses;
pub mod nets;
pub mod resample;
pub mod synthesis;
pub mod time;
pub mod trainer;
pub mod upsampler;

pub use error::{Error, Result};

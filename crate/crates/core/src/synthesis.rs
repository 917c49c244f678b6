//! Turning one image and a checkpoint into a time-lapse.
//!
//! The image is shrunk so its short side matches the training crop size,
//! padded by reflection to the generator stride, pushed through the
//! generator once per timestamp with one shared latent, cropped back, and
//! optionally carried back to full resolution by guided upsampling.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::image::{contact_sheet, ImageGrid};
use crate::nets::{generate_frameset, Generator, LatentContext, TimeEncodingMode};
use crate::time::TimeOfDay;
use crate::trainer::{load_checkpoint, TrainConfig};
use crate::upsampler::{guided_upsample, UpsampleConfig};

pub const SEQUENCE_FILE: &str = "sequence.json";
pub const CONTACT_SHEET_FILE: &str = "contact_sheet.png";
pub const FRAMES_DIR: &str = "frames";

/// Frames shown on the contact sheet, at most.
const SHEET_FRAMES: usize = 12;
const SHEET_HEIGHT: usize = 96;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Explicit(Vec<f64>),
    /// `frames` evenly spaced times from `start` toward `end`, end excluded.
    /// An `end` at or before `start` continues past midnight.
    Range { start: f64, end: f64, frames: usize },
}

impl Schedule {
    pub fn times(&self) -> Result<Vec<TimeOfDay>> {
        let finite = |v: f64| {
            if v.is_finite() {
                Ok(v)
            } else {
                Err(Error::Config(format!("timestamp {v} is not finite")))
            }
        };
        match self {
            Schedule::Explicit(ts) => {
                if ts.is_empty() {
                    return Err(Error::Config("empty timestamp list".into()));
                }
                ts.iter()
                    .map(|&t| Ok(TimeOfDay::wrapping(finite(t)?)))
                    .collect()
            }
            &Schedule::Range { start, end, frames } => {
                if frames == 0 {
                    return Err(Error::Config("frame count must be at least 1".into()));
                }
                let (start, end) = (finite(start)?, finite(end)?);
                let mut span = (end - start).rem_euclid(1.0);
                if span == 0.0 {
                    span = 1.0;
                }
                Ok((0..frames)
                    .map(|k| TimeOfDay::wrapping(start + span * k as f64 / frames as f64))
                    .collect())
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatentSpec {
    Seed(u64),
    Explicit(Vec<f32>),
}

#[derive(Clone, Debug, PartialEq)]
pub struct SynthesisRequest {
    pub image: PathBuf,
    pub checkpoint: PathBuf,
    pub schedule: Schedule,
    pub latent: LatentSpec,
    /// `None` keeps the generator's low-resolution frames.
    pub upsample: Option<UpsampleConfig>,
}

#[derive(Clone, Debug)]
pub struct SynthesizedSequence {
    pub frames: Vec<ImageGrid>,
    pub times: Vec<TimeOfDay>,
    /// Empty for generators without a latent input.
    pub latent: Vec<f32>,
    pub seed: Option<u64>,
    pub upsampled: bool,
    pub checkpoint_sha256: String,
    pub config: TrainConfig,
}

/// Low-resolution working size: short side equal to `crop` (never enlarged).
pub fn working_size(h: usize, w: usize, crop: usize) -> (usize, usize) {
    let short = h.min(w);
    if short <= crop {
        return (h, w);
    }
    let s = crop as f64 / short as f64;
    let scale = |v: usize| ((v as f64 * s).round() as usize).max(1);
    (scale(h), scale(w))
}

/// Generates one frame per time from `image`, all sharing `z`. Frames come
/// back at the working size, or at the image's size when `upsample` is set.
pub fn synthesize_frames(
    g: &Generator,
    encoding: TimeEncodingMode,
    image: &ImageGrid,
    crop: usize,
    times: &[TimeOfDay],
    z: Option<&LatentContext>,
    upsample: Option<&UpsampleConfig>,
) -> Result<Vec<ImageGrid>> {
    let (h, w) = image.dims();
    let (lh, lw) = working_size(h, w, crop);
    let low = if (lh, lw) == (h, w) {
        image.clone()
    } else {
        image.resize_area(lh, lw)
    };
    let padded = low.reflect_pad_to_multiple(g.stride());
    let frames = generate_frameset(g, encoding, &padded, times, z)?;
    frames
        .into_iter()
        .map(|f| {
            let f = if f.dims() == (lh, lw) {
                f
            } else {
                f.crop(0, 0, lh, lw)?
            };
            match upsample {
                Some(cfg) => guided_upsample(image, &f, cfg),
                None => Ok(f),
            }
        })
        .collect()
}

pub fn synthesize(req: &SynthesisRequest) -> Result<SynthesizedSequence> {
    let times = req.schedule.times()?;
    let bytes = std::fs::read(&req.checkpoint)
        .map_err(|e| Error::io(format!("reading {}", req.checkpoint.display()), e))?;
    let checkpoint_sha256 = hex(&Sha256::digest(&bytes));
    let ckpt = load_checkpoint(&req.checkpoint)?;
    let image = ImageGrid::load(&req.image)?;
    let g = &ckpt.state.bundle.g_t;

    let (latent, seed) = match &req.latent {
        &LatentSpec::Seed(s) => (
            LatentContext::sample(g.d_z(), &mut ChaCha8Rng::seed_from_u64(s)),
            Some(s),
        ),
        LatentSpec::Explicit(v) => (LatentContext { values: v.clone() }, None),
    };
    if g.d_z() > 0 && latent.values.len() != g.d_z() {
        return Err(Error::Shape(format!(
            "latent has {} values, generator expects {}",
            latent.values.len(),
            g.d_z()
        )));
    }
    let z = (g.d_z() > 0).then_some(&latent);
    let frames = synthesize_frames(
        g,
        ckpt.state.bundle.time_encoding(),
        &image,
        ckpt.config.image_size(),
        &times,
        z,
        req.upsample.as_ref(),
    )?;
    Ok(SynthesizedSequence {
        frames,
        times,
        latent: if g.d_z() > 0 { latent.values } else { Vec::new() },
        seed,
        upsampled: req.upsample.is_some(),
        checkpoint_sha256,
        config: ckpt.config,
    })
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameEntry {
    pub file: String,
    pub t: f64,
}

/// Contents of `sequence.json`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceManifest {
    pub frames: Vec<FrameEntry>,
    pub seed: Option<u64>,
    pub latent: Vec<f32>,
    pub upsampled: bool,
    pub checkpoint_sha256: String,
    pub config_hash: String,
    pub config: TrainConfig,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct WriteOptions {
    pub force: bool,
    pub contact_sheet: bool,
}

pub fn frame_file(k: usize) -> String {
    format!("{FRAMES_DIR}/{k:05}.png")
}

/// Writes `frames/00000.png…`, `sequence.json` and optionally
/// `contact_sheet.png`; returns the manifest path.
pub fn write_sequence(seq: &SynthesizedSequence, out_dir: &Path, opts: WriteOptions) -> Result<PathBuf> {
    if seq.frames.len() != seq.times.len() {
        return Err(Error::Shape("frame and timestamp counts differ".into()));
    }
    let manifest_path = out_dir.join(SEQUENCE_FILE);
    let frames_dir = out_dir.join(FRAMES_DIR);
    let io = |p: &Path, e| Error::io(format!("writing {}", p.display()), e);
    let occupied = manifest_path.exists()
        || std::fs::read_dir(&frames_dir).is_ok_and(|mut d| d.next().is_some());
    if occupied {
        if !opts.force {
            return Err(Error::OutputExists(out_dir.to_path_buf()));
        }
        if frames_dir.exists() {
            std::fs::remove_dir_all(&frames_dir).map_err(|e| io(&frames_dir, e))?;
        }
        let sheet = out_dir.join(CONTACT_SHEET_FILE);
        if sheet.exists() {
            std::fs::remove_file(&sheet).map_err(|e| io(&sheet, e))?;
        }
    }
    std::fs::create_dir_all(&frames_dir).map_err(|e| io(&frames_dir, e))?;

    let mut entries = Vec::with_capacity(seq.frames.len());
    for (k, (frame, t)) in seq.frames.iter().zip(&seq.times).enumerate() {
        let file = frame_file(k);
        frame.save(&out_dir.join(&file))?;
        entries.push(FrameEntry { file, t: t.value() });
    }
    if opts.contact_sheet {
        let n = seq.frames.len();
        let picks = n.min(SHEET_FRAMES);
        let thumbs: Vec<ImageGrid> = (0..picks)
            .map(|i| {
                let f = &seq.frames[i * n / picks];
                let (h, w) = f.dims();
                let th = h.min(SHEET_HEIGHT);
                let tw = ((w * th) as f64 / h as f64).round().max(1.0) as usize;
                f.resize(th, tw)
            })
            .collect();
        contact_sheet(&thumbs)?.save(&out_dir.join(CONTACT_SHEET_FILE))?;
    }
    let manifest = SequenceManifest {
        frames: entries,
        seed: seq.seed,
        latent: seq.latent.clone(),
        upsampled: seq.upsampled,
        checkpoint_sha256: seq.checkpoint_sha256.clone(),
        config_hash: seq.config.hash(),
        config: seq.config.clone(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&manifest_path, json).map_err(|e| io(&manifest_path, e))?;
    Ok(manifest_path)
}

pub fn read_sequence(path: &Path) -> Result<SequenceManifest> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nets::{init_models, Mode, NetConfig};
    use crate::trainer::{save_checkpoint, TrainState};
    use crate::dataset::AugmentConfig;

    fn fixture(dir: &Path) -> (PathBuf, PathBuf) {
        let cfg = TrainConfig {
            net: NetConfig::toy(),
            augment: AugmentConfig::geometric_identity(16),
            ..TrainConfig::default()
        };
        let bundle = init_models(&cfg.net, Mode::Multiframe, 1).unwrap();
        let ck = dir.join("c.safetensors");
        save_checkpoint(&TrainState::new(bundle, cfg.adam()), &cfg, &ck).unwrap();
        let data = (0..3 * 20 * 30).map(|i| ((i % 13) as f32 / 6.5) - 1.0).collect();
        let img = dir.join("x.png");
        ImageGrid::new(20, 30, data).unwrap().save(&img).unwrap();
        (img, ck)
    }

    fn request(dir: &Path, schedule: Schedule, upsample: bool) -> SynthesisRequest {
        let (image, checkpoint) = fixture(dir);
        SynthesisRequest {
            image,
            checkpoint,
            schedule,
            latent: LatentSpec::Seed(3),
            upsample: upsample.then(UpsampleConfig::default),
        }
    }

    #[test]
    fn range_schedule_spacing() {
        let ts = Schedule::Range { start: 0.0, end: 1.0, frames: 240 }.times().unwrap();
        assert_eq!(ts.len(), 240);
        for (k, t) in ts.iter().enumerate() {
            assert!((t.value() - k as f64 / 240.0).abs() < 1e-12);
        }
        let one = Schedule::Range { start: 0.5, end: 0.9, frames: 1 }.times().unwrap();
        assert_eq!(one, vec![TimeOfDay::new(0.5).unwrap()]);
    }

    #[test]
    fn schedule_wraps_midnight() {
        let ts = Schedule::Range { start: 0.75, end: 0.25, frames: 4 }.times().unwrap();
        let v: Vec<f64> = ts.iter().map(|t| t.value()).collect();
        assert_eq!(v, vec![0.75, 0.875, 0.0, 0.125]);
        let e = Schedule::Explicit(vec![1.25, -0.25]).times().unwrap();
        assert_eq!(e.iter().map(|t| t.value()).collect::<Vec<_>>(), vec![0.25, 0.75]);
        assert!(Schedule::Explicit(vec![]).times().is_err());
        assert!(Schedule::Explicit(vec![f64::NAN]).times().is_err());
        assert!(Schedule::Range { start: 0.0, end: 0.5, frames: 0 }.times().is_err());
    }

    #[test]
    fn working_size_keeps_aspect() {
        assert_eq!(working_size(512, 768, 128), (128, 192));
        assert_eq!(working_size(100, 60, 128), (100, 60));
    }

    #[test]
    fn synthesize_is_deterministic_and_valid() {
        let dir = tempfile::tempdir().unwrap();
        let sched = Schedule::Explicit(vec![0.0, 0.5, 1.0 - 1e-9]);
        let req = request(dir.path(), sched, false);
        let a = synthesize(&req).unwrap();
        let b = synthesize(&req).unwrap();
        assert_eq!(a.frames, b.frames);
        assert_eq!(a.frames.len(), 3);
        assert_eq!(a.latent.len(), 8);
        for f in &a.frames {
            assert_eq!(f.dims(), (16, 24));
            assert!(f.data().iter().all(|v| v.is_finite() && (-1.0..=1.0).contains(v)));
        }
        let up = synthesize(&request(dir.path(), Schedule::Explicit(vec![0.25]), true)).unwrap();
        assert_eq!(up.frames[0].dims(), (20, 30));
    }

    #[test]
    fn explicit_latent_must_fit() {
        let dir = tempfile::tempdir().unwrap();
        let mut req = request(dir.path(), Schedule::Explicit(vec![0.1]), false);
        req.latent = LatentSpec::Explicit(vec![0.0; 3]);
        assert!(matches!(synthesize(&req), Err(Error::Shape(_))));
        req.latent = LatentSpec::Explicit(vec![0.5; 8]);
        assert_eq!(synthesize(&req).unwrap().latent, vec![0.5; 8]);
    }

    #[test]
    fn write_and_read_back() {
        let dir = tempfile::tempdir().unwrap();
        let seq = synthesize(&request(
            dir.path(),
            Schedule::Range { start: 0.0, end: 1.0, frames: 5 },
            false,
        ))
        .unwrap();
        let out = dir.path().join("out");
        let opts = WriteOptions { force: false, contact_sheet: true };
        let manifest = write_sequence(&seq, &out, opts).unwrap();
        for k in 0..5 {
            assert!(out.join(format!("frames/{k:05}.png")).exists());
        }
        assert!(out.join(CONTACT_SHEET_FILE).exists());
        let m = read_sequence(&manifest).unwrap();
        let ts: Vec<f64> = m.frames.iter().map(|f| f.t).collect();
        assert_eq!(ts, seq.times.iter().map(|t| t.value()).collect::<Vec<_>>());
        assert_eq!(m.seed, Some(3));
        assert_eq!(m.checkpoint_sha256, seq.checkpoint_sha256);
        let back = ImageGrid::load(&out.join(&m.frames[2].file)).unwrap();
        assert_eq!(back.dims(), seq.frames[2].dims());

        assert!(matches!(write_sequence(&seq, &out, opts), Err(Error::OutputExists(_))));
        let mut short = seq.clone();
        short.frames.truncate(2);
        short.times.truncate(2);
        write_sequence(&short, &out, WriteOptions { force: true, contact_sheet: false }).unwrap();
        assert!(!out.join("frames/00002.png").exists());
        assert!(!out.join(CONTACT_SHEET_FILE).exists());
    }
}

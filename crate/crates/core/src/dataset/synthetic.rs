//! Toy time-lapse corpus with a known tone curve per sequence.
//!
//! Each camera gets a fixed random base pattern `d(x)` whose mean luma is
//! exactly zero. Frame `k` of a sequence at local time `t` is
//!
//! ```text
//! pixel_c(x, t) = brightness(t) + d_c(x) + A·κ·cos(2π(t − φ))·tint_c
//! brightness(t) = 0.5 + A·sin(2π(t − φ))
//! ```
//!
//! on a `[0, 1]` scale, where `tint` has zero luma. The mean luma of every
//! frame therefore equals `brightness(t)` up to 8-bit quantization, and the
//! tint gives the sequence a hue change that brightness alone cannot explain.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use chrono::{Duration, TimeZone, Utc};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::manifest::{
    format_wall_clock, load_manifest, write_manifest, DatasetIndex, DomainTag, ManifestEntry,
    ManifestFrame,
};
use crate::error::{Error, Result};
use crate::image::{ImageGrid, LUMA};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const TRUTH_FILE: &str = "synthetic_truth.json";

/// Zero-luma tint direction (warm when positive).
const TINT: [f64; 3] = [0.5, -0.1, -(0.299 * 0.5 - 0.587 * 0.1) / 0.114];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub num_sequences: usize,
    pub frames_per_seq: usize,
    pub size: usize,
    /// Additional timestamp-free sequences in a shifted colour style.
    pub unlabeled_sequences: usize,
    pub days_per_camera: usize,
    pub amplitude: (f64, f64),
    pub phase: (f64, f64),
    pub tint_strength: (f64, f64),
    /// Peak deviation of the base pattern before luma centering.
    pub pattern_contrast: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            num_sequences: 200,
            frames_per_seq: 24,
            size: 32,
            unlabeled_sequences: 0,
            days_per_camera: 1,
            amplitude: (0.1, 0.25),
            phase: (0.2, 0.3),
            tint_strength: (0.2, 0.4),
            pattern_contrast: 0.08,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveSample {
    pub t: f64,
    pub luminance: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SequenceTruth {
    pub amplitude: f64,
    pub phase: f64,
    pub tint_strength: f64,
    /// Ground-truth mean luma of each frame, in manifest order.
    pub curve_samples: Vec<CurveSample>,
}

impl SequenceTruth {
    pub fn brightness(&self, t: f64) -> f64 {
        tone_curve(self.amplitude, self.phase, t)
    }
}

pub type SyntheticTruth = BTreeMap<String, SequenceTruth>;

pub fn tone_curve(amplitude: f64, phase: f64, t: f64) -> f64 {
    0.5 + amplitude * (TAU * (t - phase)).sin()
}

fn base_pattern(size: usize, contrast: f64, rng: &mut impl Rng) -> [Vec<f64>; 3] {
    // a few oriented waves plus two hard-edged rectangles per channel
    let mut planes: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; size * size]);
    for plane in planes.iter_mut() {
        let waves: Vec<(f64, f64, f64)> = (0..3)
            .map(|_| {
                (
                    rng.random_range(0.5..3.0),
                    rng.random_range(0.0..TAU),
                    rng.random_range(0.0..TAU),
                )
            })
            .collect();
        let rects: Vec<(usize, usize, usize, usize, f64)> = (0..2)
            .map(|_| {
                let y0 = rng.random_range(0..size / 2);
                let x0 = rng.random_range(0..size / 2);
                let h = rng.random_range(size / 8..=size / 2);
                let w = rng.random_range(size / 8..=size / 2);
                (y0, x0, h, w, rng.random_range(-1.0..1.0))
            })
            .collect();
        for y in 0..size {
            for x in 0..size {
                let (u, v) = (x as f64 / size as f64, y as f64 / size as f64);
                let mut s: f64 = waves
                    .iter()
                    .map(|&(f, ang, ph)| (TAU * f * (u * ang.cos() + v * ang.sin()) + ph).sin())
                    .sum::<f64>()
                    / 3.0;
                for &(y0, x0, h, w, val) in &rects {
                    if (y0..y0 + h).contains(&y) && (x0..x0 + w).contains(&x) {
                        s = 0.5 * s + 0.5 * val;
                    }
                }
                plane[y * size + x] = contrast * s.clamp(-1.0, 1.0);
            }
        }
    }
    let n = (size * size) as f64;
    let luma_mean: f64 = (0..3)
        .map(|c| LUMA[c] * planes[c].iter().sum::<f64>() / n)
        .sum();
    for plane in planes.iter_mut() {
        for v in plane.iter_mut() {
            *v -= luma_mean;
        }
    }
    planes
}

fn render(base: &[Vec<f64>; 3], size: usize, brightness: f64, tint: f64) -> Result<ImageGrid> {
    let planes: Vec<Vec<f64>> = (0..3)
        .map(|c| {
            base[c]
                .iter()
                .map(|d| ((brightness + d + tint * TINT[c]).clamp(0.0, 1.0)) * 2.0 - 1.0)
                .collect()
        })
        .collect();
    ImageGrid::from_planes_f64(size, size, &planes)
}

fn draw(rng: &mut impl Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

/// Writes PNG frames, `manifest.json` and `synthetic_truth.json` under
/// `out_dir`, then loads the manifest back.
pub fn generate_synthetic_corpus(
    out_dir: &Path,
    spec: &SyntheticSpec,
    rng: &mut impl Rng,
) -> Result<(DatasetIndex, SyntheticTruth)> {
    if spec.size < 8 {
        return Err(Error::Config(format!("size {} < 8", spec.size)));
    }
    if spec.num_sequences == 0 || spec.frames_per_seq == 0 || spec.days_per_camera == 0 {
        return Err(Error::Config(
            "num_sequences, frames_per_seq and days_per_camera must be positive".into(),
        ));
    }
    let io = |p: &Path, e| Error::io(format!("writing {}", p.display()), e);
    std::fs::create_dir_all(out_dir.join("frames")).map_err(|e| io(out_dir, e))?;

    let epoch = Utc.with_ymd_and_hms(2019, 1, 1, 0, 0, 0).unwrap();
    let mut manifest = Vec::new();
    let mut truth = SyntheticTruth::new();
    let mut base = None;
    let mut offset = 0i32;
    let total = spec.num_sequences + spec.unlabeled_sequences;

    for s in 0..total {
        let labeled = s < spec.num_sequences;
        let day = s % spec.days_per_camera;
        if day == 0 {
            let contrast = if labeled {
                spec.pattern_contrast
            } else {
                spec.pattern_contrast * 1.5
            };
            base = Some(base_pattern(spec.size, contrast, rng));
            offset = rng.random_range(-8..=9) * 60;
        }
        let base = base.as_ref().expect("base drawn on day 0");
        let camera_id = format!("cam_{:04}", s / spec.days_per_camera);
        let sequence_id = if labeled {
            format!("seq_{s:04}")
        } else {
            format!("tl_{s:04}")
        };
        let amplitude = draw(rng, spec.amplitude);
        let phase = draw(rng, spec.phase);
        let mut kappa = draw(rng, spec.tint_strength);
        if !labeled {
            kappa *= 1.5;
        }

        // labeled: whole day at jittered uniform spacing; unlabeled: a
        // contiguous stretch of the day in order
        let jitter = rng.random_range(0.0..1.0);
        let span = if labeled { 1.0 } else { 0.5 };
        let start = if labeled {
            0.0
        } else {
            rng.random_range(0.0..0.5)
        };
        let seq_dir = out_dir.join("frames").join(&sequence_id);
        std::fs::create_dir_all(&seq_dir).map_err(|e| io(&seq_dir, e))?;

        let mut frames = Vec::with_capacity(spec.frames_per_seq);
        let mut samples = Vec::with_capacity(spec.frames_per_seq);
        for k in 0..spec.frames_per_seq {
            let t_raw = start + span * (k as f64 + jitter) / spec.frames_per_seq as f64;
            let secs = ((t_raw * 86_400.0).floor() as i64).rem_euclid(86_400);
            let t = secs as f64 / 86_400.0;
            let brightness = tone_curve(amplitude, phase, t);
            let tint = amplitude * kappa * (TAU * (t - phase)).cos();
            let img = render(base, spec.size, brightness, tint)?;
            let rel = PathBuf::from("frames")
                .join(&sequence_id)
                .join(format!("{k:03}.png"));
            img.save(&out_dir.join(&rel))?;

            let utc = epoch + Duration::days(day as i64) + Duration::seconds(secs - offset as i64 * 60);
            frames.push(ManifestFrame {
                path: rel.to_string_lossy().into_owned(),
                wall_clock: labeled.then(|| format_wall_clock(utc)),
            });
            samples.push(CurveSample {
                t,
                luminance: brightness,
            });
        }
        manifest.push(ManifestEntry {
            sequence_id: sequence_id.clone(),
            camera_id,
            utc_offset_minutes: offset,
            domain: if labeled {
                DomainTag::Labeled
            } else {
                DomainTag::Unlabeled
            },
            frames,
        });
        truth.insert(
            sequence_id,
            SequenceTruth {
                amplitude,
                phase,
                tint_strength: kappa,
                curve_samples: samples,
            },
        );
    }

    let manifest_path = out_dir.join(MANIFEST_FILE);
    write_manifest(&manifest_path, &manifest)?;
    let truth_path = out_dir.join(TRUTH_FILE);
    let truth_json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    std::fs::write(&truth_path, truth_json).map_err(|e| io(&truth_path, e))?;

    let index = load_manifest(&manifest_path, DomainTag::Labeled)?;
    Ok((index, truth))
}

pub fn read_truth(path: &Path) -> Result<SyntheticTruth> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

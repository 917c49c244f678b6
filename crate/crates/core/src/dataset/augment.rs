use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageGrid, CHANNELS};

/// Resize, random affine (rotation, scale, shear), horizontal flip, then a
/// random square crop.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AugmentConfig {
    pub resize_to: usize,
    pub crop_to: usize,
    pub rotation_deg: (f64, f64),
    pub scale: (f64, f64),
    pub shear_deg: (f64, f64),
    pub hflip_prob: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        Self {
            resize_to: 136,
            crop_to: 128,
            rotation_deg: (-10.0, 10.0),
            scale: (0.9, 1.1),
            shear_deg: (-5.0, 5.0),
            hflip_prob: 0.5,
        }
    }
}

impl AugmentConfig {
    /// Resize and crop only.
    pub fn geometric_identity(size: usize) -> Self {
        Self {
            resize_to: size,
            crop_to: size,
            rotation_deg: (0.0, 0.0),
            scale: (1.0, 1.0),
            shear_deg: (0.0, 0.0),
            hflip_prob: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ordered = |(a, b): (f64, f64)| a <= b;
        if self.crop_to == 0 || self.crop_to > self.resize_to {
            return Err(Error::Config(format!(
                "crop_to {} must be in 1..=resize_to {}",
                self.crop_to, self.resize_to
            )));
        }
        if !(0.0..=1.0).contains(&self.hflip_prob) {
            return Err(Error::Config("hflip_prob must be in [0, 1]".into()));
        }
        if !ordered(self.rotation_deg) || !ordered(self.scale) || !ordered(self.shear_deg) {
            return Err(Error::Config("augmentation ranges must be (lo, hi)".into()));
        }
        if self.scale.0 <= 0.0 {
            return Err(Error::Config("scale must be positive".into()));
        }
        Ok(())
    }

    pub fn sample(&self, rng: &mut impl Rng) -> AugmentParams {
        let draw = |rng: &mut dyn rand::RngCore, (lo, hi): (f64, f64)| {
            if lo == hi {
                lo
            } else {
                rng.random_range(lo..hi)
            }
        };
        let slack = self.resize_to - self.crop_to;
        AugmentParams {
            resize_to: self.resize_to,
            crop_to: self.crop_to,
            rotation_deg: draw(rng, self.rotation_deg),
            scale: draw(rng, self.scale),
            shear_deg: draw(rng, self.shear_deg),
            flip: self.hflip_prob > 0.0 && rng.random_bool(self.hflip_prob),
            crop_top: rng.random_range(0..=slack),
            crop_left: rng.random_range(0..=slack),
        }
    }
}

/// One concrete draw of the augmentation; applying it is a pure function.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentParams {
    pub resize_to: usize,
    pub crop_to: usize,
    pub rotation_deg: f64,
    pub scale: f64,
    pub shear_deg: f64,
    pub flip: bool,
    pub crop_top: usize,
    pub crop_left: usize,
}

impl AugmentParams {
    fn is_identity_warp(&self) -> bool {
        self.rotation_deg == 0.0 && self.scale == 1.0 && self.shear_deg == 0.0
    }

    pub fn apply(&self, img: &ImageGrid) -> ImageGrid {
        let r = self.resize_to;
        let resized = if img.dims() == (r, r) {
            img.clone()
        } else {
            img.resize(r, r)
        };
        let c = (r as f64 - 1.0) / 2.0;
        // forward map: scale, then shear, then rotate; invert it analytically
        let (th, sh) = (
            self.rotation_deg.to_radians(),
            self.shear_deg.to_radians().tan(),
        );
        let (cos, sin) = (th.cos(), th.sin());
        let m = [
            [cos * self.scale, (cos * sh - sin) * self.scale],
            [sin * self.scale, (sin * sh + cos) * self.scale],
        ];
        let det = m[0][0] * m[1][1] - m[0][1] * m[1][0];
        let inv = [
            [m[1][1] / det, -m[0][1] / det],
            [-m[1][0] / det, m[0][0] / det],
        ];
        let identity = self.is_identity_warp();

        let n = self.crop_to;
        let mut data = vec![0.0f32; CHANNELS * n * n];
        for y in 0..n {
            for x in 0..n {
                let py = (y + self.crop_top) as f64;
                let mut px = (x + self.crop_left) as f64;
                if self.flip {
                    px = r as f64 - 1.0 - px;
                }
                let (sx, sy) = if identity {
                    (px, py)
                } else {
                    let (dx, dy) = (px - c, py - c);
                    (
                        inv[0][0] * dx + inv[0][1] * dy + c,
                        inv[1][0] * dx + inv[1][1] * dy + c,
                    )
                };
                for ch in 0..CHANNELS {
                    data[(ch * n + y) * n + x] = sample_bilinear(&resized, ch, sy, sx);
                }
            }
        }
        ImageGrid::new(n, n, data).expect("augmented dims")
    }
}

/// Edge-clamped bilinear sample.
fn sample_bilinear(img: &ImageGrid, c: usize, y: f64, x: f64) -> f32 {
    let (h, w) = img.dims();
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let (y0, x0) = (y.floor() as usize, x.floor() as usize);
    let (fy, fx) = ((y - y0 as f64) as f32, (x - x0 as f64) as f32);
    if fy == 0.0 && fx == 0.0 {
        return img.get(c, y0, x0);
    }
    let (y1, x1) = ((y0 + 1).min(h - 1), (x0 + 1).min(w - 1));
    let top = img.get(c, y0, x0) * (1.0 - fx) + img.get(c, y0, x1) * fx;
    let bottom = img.get(c, y1, x0) * (1.0 - fx) + img.get(c, y1, x1) * fx;
    top * (1.0 - fy) + bottom * fy
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;

    fn ramp(h: usize, w: usize) -> ImageGrid {
        let data = (0..3 * h * w)
            .map(|i| ((i % 97) as f32 / 48.5) - 1.0)
            .collect();
        ImageGrid::new(h, w, data).unwrap()
    }

    #[test]
    fn identity_config_is_identity() {
        let img = ramp(16, 16);
        let params = AugmentConfig::geometric_identity(16).sample(&mut ChaCha8Rng::seed_from_u64(0));
        assert_eq!(params.apply(&img), img);
    }

    #[test]
    fn output_is_crop_sized() {
        let cfg = AugmentConfig {
            resize_to: 20,
            crop_to: 16,
            ..AugmentConfig::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..5 {
            let out = cfg.sample(&mut rng).apply(&ramp(24, 30));
            assert_eq!(out.dims(), (16, 16));
            assert!(out.data().iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn flip_mirrors_columns() {
        let img = ramp(8, 8);
        let mut p = AugmentConfig::geometric_identity(8).sample(&mut ChaCha8Rng::seed_from_u64(0));
        p.flip = true;
        let out = p.apply(&img);
        assert_eq!(out.get(1, 3, 0), img.get(1, 3, 7));
    }

    #[test]
    fn rejects_bad_config() {
        let cfg = AugmentConfig {
            resize_to: 10,
            crop_to: 12,
            ..AugmentConfig::default()
        };
        assert!(cfg.validate().is_err());
    }
}

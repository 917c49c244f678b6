//! RGB images in the network's `[-1, 1]` value range.

use std::path::Path;

use ::image::{DynamicImage, RgbImage};

use crate::autograd::Tensor;
use crate::error::{Error, Result};
use crate::resample;

pub const CHANNELS: usize = 3;

/// Rec. 601 luma weights.
pub const LUMA: [f64; 3] = [0.299, 0.587, 0.114];

/// Planar RGB image, values in `[-1, 1]`, layout `[C, H, W]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ImageGrid {
    height: usize,
    width: usize,
    data: Vec<f32>,
}

impl ImageGrid {
    pub fn new(height: usize, width: usize, data: Vec<f32>) -> Result<Self> {
        if data.len() != CHANNELS * height * width {
            return Err(Error::Shape(format!(
                "image {height}x{width} needs {} values, got {}",
                CHANNELS * height * width,
                data.len()
            )));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::Shape(format!("non-finite pixel value {bad}")));
        }
        Ok(Self {
            height,
            width,
            data,
        })
    }

    pub fn filled(height: usize, width: usize, value: f32) -> Self {
        Self {
            height,
            width,
            data: vec![value; CHANNELS * height * width],
        }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.height, self.width)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn plane(&self, c: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.data[c * n..(c + 1) * n]
    }

    pub fn get(&self, c: usize, y: usize, x: usize) -> f32 {
        self.data[(c * self.height + y) * self.width + x]
    }

    pub fn pixel(&self, y: usize, x: usize) -> [f32; 3] {
        [self.get(0, y, x), self.get(1, y, x), self.get(2, y, x)]
    }

    /// Linear 8-bit to `[-1, 1]` mapping.
    pub fn from_rgb8(img: &RgbImage) -> Self {
        let (w, h) = (img.width() as usize, img.height() as usize);
        let mut data = vec![0.0; CHANNELS * h * w];
        for (x, y, p) in img.enumerate_pixels() {
            for c in 0..CHANNELS {
                data[(c * h + y as usize) * w + x as usize] = p.0[c] as f32 / 127.5 - 1.0;
            }
        }
        Self {
            height: h,
            width: w,
            data,
        }
    }

    pub fn to_rgb8(&self) -> RgbImage {
        let mut img = RgbImage::new(self.width as u32, self.height as u32);
        for (x, y, p) in img.enumerate_pixels_mut() {
            for c in 0..CHANNELS {
                let v = self.get(c, y as usize, x as usize);
                p.0[c] = ((v.clamp(-1.0, 1.0) + 1.0) * 127.5).round() as u8;
            }
        }
        img
    }

    /// Decodes an 8-bit RGB image. Single-channel sources are rejected.
    pub fn load(path: &Path) -> Result<Self> {
        let dynimg = ::image::open(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })?;
        if matches!(
            dynimg,
            DynamicImage::ImageLuma8(_)
                | DynamicImage::ImageLumaA8(_)
                | DynamicImage::ImageLuma16(_)
                | DynamicImage::ImageLumaA16(_)
        ) {
            return Err(Error::Image {
                path: path.to_path_buf(),
                reason: "single-channel image".into(),
            });
        }
        Ok(Self::from_rgb8(&dynimg.to_rgb8()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        self.to_rgb8().save(path).map_err(|e| Error::Image {
            path: path.to_path_buf(),
            reason: e.to_string(),
        })
    }

    /// Mean Rec. 601 luma on a `[0, 1]` scale.
    pub fn mean_luminance(&self) -> f64 {
        let n = (self.height * self.width) as f64;
        (0..CHANNELS)
            .map(|c| {
                let s: f64 = self.plane(c).iter().map(|&v| (v as f64 + 1.0) * 0.5).sum();
                LUMA[c] * s / n
            })
            .sum()
    }

    /// Per-channel means on a `[0, 1]` scale.
    pub fn channel_means(&self) -> [f64; 3] {
        let n = (self.height * self.width) as f64;
        let mut out = [0.0; 3];
        for (c, o) in out.iter_mut().enumerate() {
            *o = self.plane(c).iter().map(|&v| (v as f64 + 1.0) * 0.5).sum::<f64>() / n;
        }
        out
    }

    pub fn to_tensor(&self) -> Tensor {
        Tensor::from_vec(&[1, CHANNELS, self.height, self.width], self.data.clone())
            .expect("image tensor shape")
    }

    /// Stack images (all the same size) into `[N, 3, H, W]`.
    pub fn batch(images: &[&ImageGrid]) -> Result<Tensor> {
        let first = images
            .first()
            .ok_or_else(|| Error::Shape("empty image batch".into()))?;
        let mut data = Vec::with_capacity(images.len() * first.data.len());
        for im in images {
            if im.dims() != first.dims() {
                return Err(Error::Shape(format!(
                    "batch mixes {:?} and {:?}",
                    im.dims(),
                    first.dims()
                )));
            }
            data.extend_from_slice(&im.data);
        }
        Tensor::from_vec(&[images.len(), CHANNELS, first.height, first.width], data)
    }

    /// Split `[N, 3, H, W]` back into images.
    pub fn unbatch(t: &Tensor) -> Result<Vec<ImageGrid>> {
        let s = t.shape();
        if s.len() != 4 || s[1] != CHANNELS {
            return Err(Error::Shape(format!("expected [N, 3, H, W], got {s:?}")));
        }
        (0..s[0])
            .map(|i| ImageGrid::new(s[2], s[3], t.row(i).to_vec()))
            .collect()
    }

    pub fn plane_f64(&self, c: usize) -> Vec<f64> {
        self.plane(c).iter().map(|&v| v as f64).collect()
    }

    pub fn from_planes_f64(height: usize, width: usize, planes: &[Vec<f64>]) -> Result<Self> {
        let data = planes.iter().flatten().map(|&v| v as f32).collect();
        Self::new(height, width, data)
    }

    fn map_planes(&self, oh: usize, ow: usize, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let planes: Vec<Vec<f64>> = (0..CHANNELS).map(|c| f(&self.plane_f64(c))).collect();
        Self::from_planes_f64(oh, ow, &planes).expect("resampled dims")
    }

    /// Box-filter downsampling.
    pub fn resize_area(&self, oh: usize, ow: usize) -> Self {
        let (h, w) = self.dims();
        self.map_planes(oh, ow, |p| resample::resize_area(p, h, w, oh, ow))
    }

    pub fn resize_bilinear(&self, oh: usize, ow: usize) -> Self {
        let (h, w) = self.dims();
        self.map_planes(oh, ow, |p| resample::resize_bilinear(p, h, w, oh, ow))
    }

    /// Area for shrinking, bilinear for growing, per axis.
    pub fn resize(&self, oh: usize, ow: usize) -> Self {
        let (h, w) = self.dims();
        let rows = if oh <= h {
            resample::area_taps(h, oh)
        } else {
            resample::bilinear_taps(h, oh)
        };
        let cols = if ow <= w {
            resample::area_taps(w, ow)
        } else {
            resample::bilinear_taps(w, ow)
        };
        self.map_planes(oh, ow, |p| resample::resample_plane(p, w, &rows, &cols))
    }

    /// Mirror-pads bottom/right so both dims become multiples of `multiple`.
    pub fn reflect_pad_to_multiple(&self, multiple: usize) -> Self {
        let (h, w) = self.dims();
        let ph = h.div_ceil(multiple) * multiple;
        let pw = w.div_ceil(multiple) * multiple;
        if (ph, pw) == (h, w) {
            return self.clone();
        }
        let reflect = |i: usize, n: usize| -> usize {
            if n == 1 {
                return 0;
            }
            let period = 2 * (n - 1);
            let m = i % period;
            if m < n {
                m
            } else {
                period - m
            }
        };
        let mut data = Vec::with_capacity(CHANNELS * ph * pw);
        for c in 0..CHANNELS {
            for y in 0..ph {
                for x in 0..pw {
                    data.push(self.get(c, reflect(y, h), reflect(x, w)));
                }
            }
        }
        Self {
            height: ph,
            width: pw,
            data,
        }
    }

    pub fn crop(&self, top: usize, left: usize, h: usize, w: usize) -> Result<Self> {
        if top + h > self.height || left + w > self.width {
            return Err(Error::Shape(format!(
                "crop {h}x{w}+{top}+{left} exceeds {}x{}",
                self.height, self.width
            )));
        }
        let mut data = Vec::with_capacity(CHANNELS * h * w);
        for c in 0..CHANNELS {
            for y in top..top + h {
                let row = (c * self.height + y) * self.width;
                data.extend_from_slice(&self.data[row + left..row + left + w]);
            }
        }
        Ok(Self {
            height: h,
            width: w,
            data,
        })
    }

    pub fn mean_abs_diff(&self, other: &ImageGrid) -> Result<f64> {
        if self.dims() != other.dims() {
            return Err(Error::Shape(format!(
                "{:?} vs {:?}",
                self.dims(),
                other.dims()
            )));
        }
        Ok(self
            .data
            .iter()
            .zip(&other.data)
            .map(|(&a, &b)| (a as f64 - b as f64).abs())
            .sum::<f64>()
            / self.data.len() as f64)
    }

    /// Luma plane on the `[-1, 1]` scale.
    pub fn luma_plane(&self) -> Vec<f64> {
        let n = self.height * self.width;
        (0..n)
            .map(|i| (0..CHANNELS).map(|c| LUMA[c] * self.data[c * n + i] as f64).sum())
            .collect()
    }

    /// Central-difference gradient magnitude of the luma plane.
    pub fn gradient_magnitude(&self) -> Vec<f64> {
        let (h, w) = self.dims();
        let l = self.luma_plane();
        let at = |y: usize, x: usize| l[y * w + x];
        let mut out = vec![0.0; h * w];
        for y in 0..h {
            for x in 0..w {
                let gx = at(y, (x + 1).min(w - 1)) - at(y, x.saturating_sub(1));
                let gy = at((y + 1).min(h - 1), x) - at(y.saturating_sub(1), x);
                out[y * w + x] = (gx * gx + gy * gy).sqrt();
            }
        }
        out
    }
}

/// Horizontal strip of equally sized images.
pub fn contact_sheet(frames: &[ImageGrid]) -> Result<ImageGrid> {
    let first = frames
        .first()
        .ok_or_else(|| Error::Shape("contact sheet of zero frames".into()))?;
    let (h, w) = first.dims();
    let total_w = w * frames.len();
    let mut data = vec![0.0f32; CHANNELS * h * total_w];
    for (k, f) in frames.iter().enumerate() {
        if f.dims() != (h, w) {
            return Err(Error::Shape("contact sheet frames differ in size".into()));
        }
        for c in 0..CHANNELS {
            for y in 0..h {
                let dst = (c * h + y) * total_w + k * w;
                data[dst..dst + w].copy_from_slice(&f.plane(c)[y * w..(y + 1) * w]);
            }
        }
    }
    ImageGrid::new(h, total_w, data)
}

/// Pearson correlation of two equally long samples.
pub fn pearson(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt().max(1e-300)
}

//! Guided upsampling of a low-resolution generator output.
//!
//! A per-pixel affine colour transform `O ≈ a·I + b` is fitted on the
//! low-resolution grid, each channel separately, with smoothness weighted
//! by the input's colour edges. The fitted field is resized bilinearly and
//! applied to the full-resolution input.

mod solver;

use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::{ImageGrid, CHANNELS};
use crate::resample;
use solver::{solve_banded, solve_cg, ChannelSystem, Weights};
pub use solver::SolveReport;

/// Grids with fewer pixels than this fall back to the direct solver when
/// conjugate gradient runs out of iterations.
pub const DENSE_FALLBACK_PIXELS: usize = 64 * 64;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Solver {
    #[default]
    Cg,
    /// Direct banded Cholesky factorization.
    Dense,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct UpsampleConfig {
    /// Smoothness weight.
    pub beta: f64,
    pub eps_w: f64,
    /// Pull toward `a = 1, b = 0`; keeps flat regions well posed.
    pub eps_ridge: f64,
    pub solver: Solver,
    pub cg_tol: f64,
    pub cg_max_iters: usize,
}

impl Default for UpsampleConfig {
    fn default() -> Self {
        Self {
            beta: 1.0,
            eps_w: 0.01,
            eps_ridge: 1e-4,
            solver: Solver::Cg,
            cg_tol: 1e-6,
            cg_max_iters: 2000,
        }
    }
}

impl UpsampleConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if !ok(self.beta) || !ok(self.eps_w) || !ok(self.eps_ridge) {
            return Err(Error::Config(
                "beta, eps_w and eps_ridge must be finite and nonnegative".into(),
            ));
        }
        if !(self.cg_tol > 0.0) {
            return Err(Error::Config("cg_tol must be positive".into()));
        }
        if self.eps_w == 0.0 {
            return Err(Error::Config("eps_w must be positive".into()));
        }
        Ok(())
    }
}

/// Per-channel scale `a` and offset `b` on the low-resolution grid.
#[derive(Clone, Debug, PartialEq)]
pub struct TransformField {
    pub height: usize,
    pub width: usize,
    pub a: [Vec<f64>; CHANNELS],
    pub b: [Vec<f64>; CHANNELS],
}

impl TransformField {
    pub fn identity(height: usize, width: usize) -> Self {
        Self::constant(height, width, 1.0, 0.0)
    }

    pub fn constant(height: usize, width: usize, a: f64, b: f64) -> Self {
        let n = height * width;
        Self {
            height,
            width,
            a: std::array::from_fn(|_| vec![a; n]),
            b: std::array::from_fn(|_| vec![b; n]),
        }
    }

    pub fn is_finite(&self) -> bool {
        self.a.iter().chain(&self.b).flatten().all(|v| v.is_finite())
    }

    /// Writes `a.pfm` and `b.pfm` (three-channel portable float maps).
    pub fn write_pfm(&self, dir: &Path) -> Result<()> {
        write_pfm(&dir.join("a.pfm"), self.height, self.width, &self.a)?;
        write_pfm(&dir.join("b.pfm"), self.height, self.width, &self.b)
    }
}

fn write_pfm(path: &Path, h: usize, w: usize, planes: &[Vec<f64>; CHANNELS]) -> Result<()> {
    let mut out = format!("PF\n{w} {h}\n-1.0\n").into_bytes();
    // rows are stored bottom to top
    for y in (0..h).rev() {
        for x in 0..w {
            for plane in planes {
                out.extend_from_slice(&(plane[y * w + x] as f32).to_le_bytes());
            }
        }
    }
    let mut f = std::fs::File::create(path)
        .map_err(|e| Error::io(format!("creating {}", path.display()), e))?;
    f.write_all(&out)
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

/// Inverse colour distance, `1 / (‖c_p − c_q‖₂ + eps_w)`.
pub fn neighbor_weight(c_p: [f64; 3], c_q: [f64; 3], eps_w: f64) -> f64 {
    let d: f64 = c_p
        .iter()
        .zip(&c_q)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt();
    1.0 / (d + eps_w)
}

fn weights(img: &ImageGrid, eps_w: f64) -> Weights {
    let (h, w) = img.dims();
    let color = |p: usize| {
        let (y, x) = (p / w, p % w);
        img.pixel(y, x).map(|v| v as f64)
    };
    let mut right = vec![0.0; h * w];
    let mut down = vec![0.0; h * w];
    for p in 0..h * w {
        if p % w + 1 < w {
            right[p] = neighbor_weight(color(p), color(p + 1), eps_w);
        }
        if p + w < h * w {
            down[p] = neighbor_weight(color(p), color(p + w), eps_w);
        }
    }
    Weights { w, right, down }
}

fn check_same_dims(i: &ImageGrid, o: &ImageGrid) -> Result<()> {
    if i.dims() != o.dims() {
        return Err(Error::Shape(format!(
            "input {:?} and target {:?} differ in size",
            i.dims(),
            o.dims()
        )));
    }
    Ok(())
}

pub fn solve_transform(i_low: &ImageGrid, o_low: &ImageGrid, cfg: &UpsampleConfig) -> Result<TransformField> {
    Ok(solve_transform_report(i_low, o_low, cfg)?.0)
}

/// As [`solve_transform`], also returning each channel's solver report.
pub fn solve_transform_report(
    i_low: &ImageGrid,
    o_low: &ImageGrid,
    cfg: &UpsampleConfig,
) -> Result<(TransformField, [SolveReport; CHANNELS])> {
    cfg.validate()?;
    check_same_dims(i_low, o_low)?;
    let (h, w) = i_low.dims();
    let wts = weights(i_low, cfg.eps_w);
    let mut field = TransformField::identity(h, w);
    let mut reports = [SolveReport {
        iterations: 0,
        relative_residual: 0.0,
    }; CHANNELS];
    for c in 0..CHANNELS {
        let input = i_low.plane_f64(c);
        let target = o_low.plane_f64(c);
        let sys = ChannelSystem {
            weights: &wts,
            input: &input,
            target: &target,
            beta: cfg.beta,
            ridge: cfg.eps_ridge,
        };
        let (x, report) = match cfg.solver {
            Solver::Dense => solve_banded(&sys)?,
            Solver::Cg => match solve_cg(&sys, cfg.cg_tol, cfg.cg_max_iters) {
                Err(Error::Nonconvergence { iterations, residual }) if h * w < DENSE_FALLBACK_PIXELS => {
                    log::debug!(
                        "channel {c}: CG stopped at {residual:e} after {iterations} iterations; solving directly"
                    );
                    solve_banded(&sys)?
                }
                other => other?,
            },
        };
        for p in 0..h * w {
            field.a[c][p] = x[2 * p];
            field.b[c][p] = x[2 * p + 1];
        }
        reports[c] = report;
    }
    Ok((field, reports))
}

/// Per-channel energy of `field` for the problem `(i_low, o_low)`.
pub fn transform_energy(
    i_low: &ImageGrid,
    o_low: &ImageGrid,
    field: &TransformField,
    cfg: &UpsampleConfig,
) -> Result<[f64; CHANNELS]> {
    check_same_dims(i_low, o_low)?;
    if (field.height, field.width) != i_low.dims() {
        return Err(Error::Shape("field and images differ in size".into()));
    }
    let wts = weights(i_low, cfg.eps_w);
    Ok(std::array::from_fn(|c| {
        let input = i_low.plane_f64(c);
        let target = o_low.plane_f64(c);
        let sys = ChannelSystem {
            weights: &wts,
            input: &input,
            target: &target,
            beta: cfg.beta,
            ridge: cfg.eps_ridge,
        };
        let x: Vec<f64> = field.a[c]
            .iter()
            .zip(&field.b[c])
            .flat_map(|(&a, &b)| [a, b])
            .collect();
        sys.energy(&x)
    }))
}

/// `clamp(a·I + b)` with the field resized bilinearly to `i_full`.
pub fn apply_transform(i_full: &ImageGrid, field: &TransformField) -> Result<ImageGrid> {
    if !field.is_finite() {
        return Err(Error::Shape("transform field is not finite".into()));
    }
    let (h, w) = i_full.dims();
    let up = |plane: &[f64]| resample::resize_bilinear(plane, field.height, field.width, h, w);
    let planes: Vec<Vec<f64>> = (0..CHANNELS)
        .map(|c| {
            let (a, b) = (up(&field.a[c]), up(&field.b[c]));
            i_full
                .plane(c)
                .iter()
                .zip(a.iter().zip(&b))
                .map(|(&i, (a, b))| (a * i as f64 + b).clamp(-1.0, 1.0))
                .collect()
        })
        .collect();
    ImageGrid::from_planes_f64(h, w, &planes)
}

/// Area-downsample `i_full` to the guide grid, fit the transform there and
/// apply it at full resolution.
pub fn guided_upsample(i_full: &ImageGrid, o_low: &ImageGrid, cfg: &UpsampleConfig) -> Result<ImageGrid> {
    let (h, w) = i_full.dims();
    let (oh, ow) = o_low.dims();
    if oh == 0 || ow == 0 || oh > h || ow > w {
        return Err(Error::Shape(format!(
            "guide {oh}x{ow} must be nonempty and no larger than the input {h}x{w}"
        )));
    }
    let i_low = if (oh, ow) == (h, w) {
        i_full.clone()
    } else {
        i_full.resize_area(oh, ow)
    };
    let field = solve_transform(&i_low, o_low, cfg)?;
    apply_transform(i_full, &field)
}

#[cfg(test)]
mod tests;

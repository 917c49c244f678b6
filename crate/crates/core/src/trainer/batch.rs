use rand::seq::SliceRandom;
use rand::Rng;

use super::config::TrainConfig;
use crate::autograd::Tensor;
use crate::dataset::{make_negative_pairs, sample_times, FrameSet, UnlabeledSet};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::nets::{latent_tensor, LatentContext, TimeEncodingMode};
use crate::time::TimeOfDay;

/// Uniform random permutation without fixed points, by rejection.
pub fn derangement(n: usize, rng: &mut impl Rng) -> Vec<usize> {
    assert!(n >= 2, "no derangement of {n} elements");
    let mut p: Vec<usize> = (0..n).collect();
    loop {
        p.shuffle(rng);
        if p.iter().enumerate().all(|(i, &j)| i != j) {
            return p;
        }
    }
}

/// Network-ready tensors for one labeled batch of `B` frame sets of `n`.
///
/// Generator inputs are the set's own frames under a random derangement, so
/// frame `i` of a fake set is produced from a different frame of the same
/// sequence and asked for time `t_i`.
#[derive(Clone, Debug)]
pub struct LabeledBatch {
    pub set_size: usize,
    pub real: Tensor,
    pub times: Vec<TimeOfDay>,
    pub gen_input: Tensor,
    /// `[B·n, d_z]`, rows of one set identical; `None` without a latent.
    pub latent: Option<Tensor>,
    pub negatives: Option<(Tensor, Vec<TimeOfDay>, usize)>,
}

impl LabeledBatch {
    pub fn num_sets(&self) -> usize {
        self.times.len() / self.set_size
    }
}

pub fn prepare_labeled(
    batch: &[FrameSet],
    cfg: &TrainConfig,
    d_z: usize,
    with_negatives: bool,
    rng: &mut impl Rng,
) -> Result<LabeledBatch> {
    let n = batch.first().map(FrameSet::len).ok_or(Error::EmptySet)?;
    if n < 2 {
        return Err(Error::InsufficientFrames { needed: 2, have: n });
    }
    let mut real = Vec::new();
    let mut gen = Vec::new();
    let mut times = Vec::new();
    let mut latents = Vec::new();
    let mut neg_imgs = Vec::new();
    let mut neg_times = Vec::new();
    let k = cfg.negatives();
    for fs in batch {
        if fs.len() != n {
            return Err(Error::Shape("frame sets in a batch differ in length".into()));
        }
        let perm = derangement(n, rng);
        for (i, f) in fs.frames.iter().enumerate() {
            real.push(&f.image);
            times.push(f.time);
            gen.push(&fs.frames[perm[i]].image);
        }
        if d_z > 0 {
            latents.push(latent_tensor(&LatentContext::sample(d_z, rng), n));
        }
        if with_negatives {
            for p in make_negative_pairs(fs, k, rng)?.pairs {
                neg_imgs.push(p.image);
                neg_times.push(p.time);
            }
        }
    }
    let negatives = if with_negatives {
        let refs: Vec<&ImageGrid> = neg_imgs.iter().collect();
        Some((ImageGrid::batch(&refs)?, neg_times, k))
    } else {
        None
    };
    let latent = if latents.is_empty() {
        None
    } else {
        let refs: Vec<&Tensor> = latents.iter().collect();
        Some(Tensor::cat_rows(&refs)?)
    };
    Ok(LabeledBatch {
        set_size: n,
        real: ImageGrid::batch(&real)?,
        times,
        gen_input: ImageGrid::batch(&gen)?,
        latent,
        negatives,
    })
}

/// Unlabeled windows with times drawn from the labeled time distribution.
#[derive(Clone, Debug)]
pub struct UnlabeledBatch {
    pub set_size: usize,
    pub images: Tensor,
    pub times: Vec<TimeOfDay>,
    pub latent: Option<Tensor>,
}

pub fn prepare_unlabeled(
    batch: &[UnlabeledSet],
    time_pool: &[TimeOfDay],
    d_z: usize,
    rng: &mut impl Rng,
) -> Result<UnlabeledBatch> {
    let n = batch.first().map(|u| u.images.len()).ok_or(Error::EmptySet)?;
    let mut imgs = Vec::new();
    let mut times = Vec::new();
    let mut latents = Vec::new();
    for u in batch {
        if u.images.len() != n {
            return Err(Error::Shape("unlabeled windows differ in length".into()));
        }
        imgs.extend(u.images.iter());
        times.extend(sample_times(time_pool, n, rng)?);
        if d_z > 0 {
            latents.push(latent_tensor(&LatentContext::sample(d_z, rng), n));
        }
    }
    let latent = if latents.is_empty() {
        None
    } else {
        let refs: Vec<&Tensor> = latents.iter().collect();
        Some(Tensor::cat_rows(&refs)?)
    };
    Ok(UnlabeledBatch {
        set_size: n,
        images: ImageGrid::batch(&imgs)?,
        times,
        latent,
    })
}

pub fn times_tensor(times: &[TimeOfDay], mode: TimeEncodingMode) -> Tensor {
    crate::nets::time_tensor(times, mode)
}

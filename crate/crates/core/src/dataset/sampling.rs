use rand::seq::index;
use rand::Rng;

use super::augment::{AugmentConfig, AugmentParams};
use super::manifest::{DatasetIndex, SequenceRecord};
use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::time::TimeOfDay;

#[derive(Clone, Debug, PartialEq)]
pub struct TimedFrame {
    pub image: ImageGrid,
    pub time: TimeOfDay,
}

/// Frames of one labeled sequence, all augmented with the same transform.
#[derive(Clone, Debug)]
pub struct FrameSet {
    pub sequence_id: String,
    pub frames: Vec<TimedFrame>,
    /// Frame indices into the source sequence, aligned with `frames`.
    pub source_indices: Vec<usize>,
    pub augment: AugmentParams,
}

impl FrameSet {
    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn times(&self) -> Vec<TimeOfDay> {
        self.frames.iter().map(|f| f.time).collect()
    }

    pub fn images(&self) -> Vec<&ImageGrid> {
        self.frames.iter().map(|f| &f.image).collect()
    }
}

/// Contiguous window of an unlabeled sequence.
#[derive(Clone, Debug)]
pub struct UnlabeledSet {
    pub sequence_id: String,
    pub images: Vec<ImageGrid>,
    pub augment: AugmentParams,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NegativePair {
    pub image_index: usize,
    pub time_index: usize,
    pub image: ImageGrid,
    pub time: TimeOfDay,
}

/// Mismatched `(image_i, time_j)` pairs, `i != j`, from one frame set.
#[derive(Clone, Debug, PartialEq)]
pub struct NegativePairSet {
    pub pairs: Vec<NegativePair>,
}

fn pick_indices(len: usize, n: usize, rng: &mut impl Rng) -> Vec<usize> {
    if len >= n {
        index::sample(rng, len, n).into_vec()
    } else {
        (0..n).map(|_| rng.random_range(0..len)).collect()
    }
}

/// Samples `n` frames from one uniformly chosen labeled sequence. Sequences
/// shorter than `n` are sampled with replacement.
pub fn sample_frameset(
    index: &DatasetIndex,
    n: usize,
    augment: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<FrameSet> {
    let eligible: Vec<&SequenceRecord> = index.labeled().collect();
    if eligible.is_empty() || n == 0 {
        return Err(Error::EmptyDataset(
            "no labeled sequence to sample from".into(),
        ));
    }
    let seq = eligible[rng.random_range(0..eligible.len())];
    frameset_from(seq, n, augment, rng)
}

pub fn frameset_from(
    seq: &SequenceRecord,
    n: usize,
    augment: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<FrameSet> {
    let picks = pick_indices(seq.frames.len(), n, rng);
    let params = augment.sample(rng);
    let frames = picks
        .iter()
        .map(|&i| {
            let f = &seq.frames[i];
            let time = f.time.ok_or_else(|| {
                Error::EmptyDataset(format!("{} frame {i} has no timestamp", seq.sequence_id))
            })?;
            Ok(TimedFrame {
                image: params.apply(&f.image),
                time,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(FrameSet {
        sequence_id: seq.sequence_id.clone(),
        frames,
        source_indices: picks,
        augment: params,
    })
}

/// Contiguous `n`-frame window from a random unlabeled sequence; windows
/// wrap around the end of short sequences.
pub fn sample_unlabeled_window(
    index: &DatasetIndex,
    n: usize,
    augment: &AugmentConfig,
    rng: &mut impl Rng,
) -> Result<UnlabeledSet> {
    let eligible: Vec<&SequenceRecord> = index.unlabeled().collect();
    if eligible.is_empty() || n == 0 {
        return Err(Error::EmptyDataset(
            "no unlabeled sequence to sample from".into(),
        ));
    }
    let seq = eligible[rng.random_range(0..eligible.len())];
    let len = seq.frames.len();
    let start = if len > n {
        rng.random_range(0..=len - n)
    } else {
        0
    };
    let params = augment.sample(rng);
    let images = (0..n)
        .map(|k| params.apply(&seq.frames[(start + k) % len].image))
        .collect();
    Ok(UnlabeledSet {
        sequence_id: seq.sequence_id.clone(),
        images,
        augment: params,
    })
}

/// Draws `k` distinct mismatched pairs without replacement.
pub fn make_negative_pairs(fs: &FrameSet, k: usize, rng: &mut impl Rng) -> Result<NegativePairSet> {
    let n = fs.len();
    if n < 2 {
        return Err(Error::InsufficientFrames { needed: 2, have: n });
    }
    let total = n * (n - 1);
    if k > total {
        return Err(Error::Config(format!(
            "asked for {k} negative pairs but only {total} exist"
        )));
    }
    let pairs = index::sample(rng, total, k)
        .into_iter()
        .map(|flat| {
            let i = flat / (n - 1);
            let mut j = flat % (n - 1);
            if j >= i {
                j += 1;
            }
            NegativePair {
                image_index: i,
                time_index: j,
                image: fs.frames[i].image.clone(),
                time: fs.frames[j].time,
            }
        })
        .collect();
    Ok(NegativePairSet { pairs })
}

/// Uniform draw from a timestamp pool.
pub fn sample_times(pool: &[TimeOfDay], n: usize, rng: &mut impl Rng) -> Result<Vec<TimeOfDay>> {
    if pool.is_empty() {
        return Err(Error::EmptyDataset("empty timestamp pool".into()));
    }
    Ok((0..n).map(|_| pool[rng.random_range(0..pool.len())]).collect())
}

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use chrono::{DateTime, Utc};
use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::image::ImageGrid;
use crate::time::{check_utc_offset, normalize_timestamp, TimeOfDay};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DomainTag {
    /// Timestamped webcam sequences.
    Labeled,
    /// Time-lapse footage without timestamps.
    Unlabeled,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    #[default]
    Train,
    Test,
}

/// One entry of the on-disk manifest, kept verbatim so re-serialising a
/// parsed manifest reproduces the file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub sequence_id: String,
    pub camera_id: String,
    pub utc_offset_minutes: i32,
    pub domain: DomainTag,
    pub frames: Vec<ManifestFrame>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestFrame {
    /// Relative to the manifest's directory unless absolute.
    pub path: String,
    pub wall_clock: Option<String>,
}

pub type Manifest = Vec<ManifestEntry>;

pub fn read_manifest(path: &Path) -> Result<Manifest> {
    if !path.exists() {
        return Err(Error::ManifestMissing(path.to_path_buf()));
    }
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::io(format!("reading {}", path.display()), e))?;
    serde_json::from_str(&text).map_err(|e| Error::ManifestParse {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

pub fn manifest_to_string(manifest: &Manifest) -> String {
    let mut s = serde_json::to_string_pretty(manifest).expect("manifest serializes");
    s.push('\n');
    s
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<()> {
    std::fs::write(path, manifest_to_string(manifest))
        .map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn parse_wall_clock(s: &str) -> Option<DateTime<Utc>> {
    DateTime::parse_from_rfc3339(s)
        .ok()
        .map(|d| d.with_timezone(&Utc))
}

pub fn format_wall_clock(t: DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

#[derive(Clone, Debug)]
pub struct FrameRecord {
    pub path: PathBuf,
    pub wall_clock: Option<DateTime<Utc>>,
    /// Local time of day; `None` for unlabeled frames.
    pub time: Option<TimeOfDay>,
    pub image: Arc<ImageGrid>,
}

#[derive(Clone, Debug)]
pub struct SequenceRecord {
    pub sequence_id: String,
    pub camera_id: String,
    pub utc_offset_minutes: i32,
    pub domain: DomainTag,
    pub frames: Vec<FrameRecord>,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetStats {
    pub num_sequences: usize,
    pub num_frames: usize,
    pub dropped_frames: usize,
    pub dropped_sequences: usize,
}

/// Validated, decoded dataset. Immutable once built.
#[derive(Clone, Debug)]
pub struct DatasetIndex {
    pub records: Vec<SequenceRecord>,
    pub split: Split,
    pub stats: DatasetStats,
}

impl DatasetIndex {
    pub fn new(records: Vec<SequenceRecord>, split: Split, mut stats: DatasetStats) -> Self {
        stats.num_sequences = records.len();
        stats.num_frames = records.iter().map(|r| r.frames.len()).sum();
        Self {
            records,
            split,
            stats,
        }
    }

    pub fn labeled(&self) -> impl Iterator<Item = &SequenceRecord> {
        self.records
            .iter()
            .filter(|r| r.domain == DomainTag::Labeled && !r.frames.is_empty())
    }

    pub fn unlabeled(&self) -> impl Iterator<Item = &SequenceRecord> {
        self.records
            .iter()
            .filter(|r| r.domain == DomainTag::Unlabeled && !r.frames.is_empty())
    }

    /// Every labeled timestamp; the empirical time distribution.
    pub fn labeled_times(&self) -> Vec<TimeOfDay> {
        self.labeled()
            .flat_map(|r| r.frames.iter().filter_map(|f| f.time))
            .collect()
    }

    pub fn camera_ids(&self) -> Vec<String> {
        let mut ids: Vec<String> = self.records.iter().map(|r| r.camera_id.clone()).collect();
        ids.sort();
        ids.dedup();
        ids
    }

    /// Deterministic camera-disjoint split: `test_cameras` cameras (chosen by
    /// `seed`) go to the test index, the rest to training.
    pub fn split_by_camera(&self, test_cameras: usize, seed: u64) -> Result<(Self, Self)> {
        let mut cams = self.camera_ids();
        if test_cameras >= cams.len() {
            return Err(Error::EmptyDataset(format!(
                "cannot hold out {test_cameras} of {} cameras",
                cams.len()
            )));
        }
        cams.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let test: HashSet<&String> = cams[..test_cameras].iter().collect();
        let (te, tr): (Vec<_>, Vec<_>) = self
            .records
            .iter()
            .cloned()
            .partition(|r| test.contains(&r.camera_id));
        Ok((
            Self::new(tr, Split::Train, DatasetStats::default()),
            Self::new(te, Split::Test, DatasetStats::default()),
        ))
    }

    pub fn find(&self, sequence_id: &str) -> Option<&SequenceRecord> {
        self.records.iter().find(|r| r.sequence_id == sequence_id)
    }
}

/// Loads every record of `domain` from a manifest, decoding its frames.
/// Undecodable, single-channel or wrongly sized frames are dropped and
/// counted; sequences left without frames are dropped too.
pub fn load_manifest(path: &Path, domain: DomainTag) -> Result<DatasetIndex> {
    let manifest = read_manifest(path)?;
    let root = path.parent().unwrap_or_else(|| Path::new("."));
    let parse_err = |reason: String| Error::ManifestParse {
        path: path.to_path_buf(),
        reason,
    };

    let mut seen = HashSet::new();
    let mut stats = DatasetStats::default();
    let mut records = Vec::new();
    for entry in manifest {
        if !seen.insert(entry.sequence_id.clone()) {
            return Err(parse_err(format!(
                "duplicate sequence_id {}",
                entry.sequence_id
            )));
        }
        if entry.domain != domain {
            continue;
        }
        check_utc_offset(entry.utc_offset_minutes).map_err(|e| parse_err(e.to_string()))?;
        if entry.frames.is_empty() {
            return Err(parse_err(format!("sequence {} has no frames", entry.sequence_id)));
        }

        let mut frames = Vec::with_capacity(entry.frames.len());
        let mut dims = None;
        for f in &entry.frames {
            let wall_clock = match (&f.wall_clock, domain) {
                (Some(s), _) => Some(parse_wall_clock(s).ok_or_else(|| {
                    parse_err(format!("bad wall_clock {s:?} in {}", entry.sequence_id))
                })?),
                (None, DomainTag::Labeled) => {
                    return Err(parse_err(format!(
                        "labeled sequence {} has a frame without wall_clock",
                        entry.sequence_id
                    )))
                }
                (None, DomainTag::Unlabeled) => None,
            };
            let frame_path = root.join(&f.path);
            let image = match ImageGrid::load(&frame_path) {
                Ok(img) => img,
                Err(e) => {
                    warn!("dropping frame: {e}");
                    stats.dropped_frames += 1;
                    continue;
                }
            };
            if *dims.get_or_insert(image.dims()) != image.dims() {
                warn!(
                    "dropping frame {}: size {:?} differs from sequence",
                    frame_path.display(),
                    image.dims()
                );
                stats.dropped_frames += 1;
                continue;
            }
            frames.push(FrameRecord {
                path: frame_path,
                wall_clock,
                time: wall_clock.map(|w| normalize_timestamp(w, entry.utc_offset_minutes)),
                image: Arc::new(image),
            });
        }
        if frames.is_empty() {
            stats.dropped_sequences += 1;
            continue;
        }
        records.push(SequenceRecord {
            sequence_id: entry.sequence_id,
            camera_id: entry.camera_id,
            utc_offset_minutes: entry.utc_offset_minutes,
            domain,
            frames,
        });
    }
    if records.is_empty() {
        return Err(Error::EmptyDataset(format!(
            "no valid {domain:?} sequences in {}",
            path.display()
        )));
    }
    Ok(DatasetIndex::new(records, Split::Train, stats))
}

//! Dataset ingestion, frame-set sampling and augmentation.

mod augment;
mod manifest;
mod sampling;
mod synthetic;

pub use augment::{AugmentConfig, AugmentParams};
pub use manifest::{
    format_wall_clock, load_manifest, manifest_to_string, parse_wall_clock, read_manifest,
    write_manifest, DatasetIndex, DatasetStats, DomainTag, FrameRecord, Manifest, ManifestEntry,
    ManifestFrame, SequenceRecord, Split,
};
pub use sampling::{
    frameset_from, make_negative_pairs, sample_frameset, sample_times, sample_unlabeled_window,
    FrameSet, NegativePair, NegativePairSet, TimedFrame, UnlabeledSet,
};
pub use synthetic::{
    generate_synthetic_corpus, read_truth, tone_curve, CurveSample, SequenceTruth,
    SyntheticSpec, SyntheticTruth, MANIFEST_FILE, TRUTH_FILE,
};

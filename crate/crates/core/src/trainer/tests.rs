use std::collections::BTreeMap;
use std::path::Path;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::autograd::ParamStore;
use crate::dataset::{generate_synthetic_corpus, AugmentConfig, SyntheticSpec};
use crate::nets::{ModelBundle, NetConfig};

const SIZE: usize = 16;

fn corpus(dir: &Path) -> (DatasetIndex, DatasetIndex) {
    let spec = SyntheticSpec {
        num_sequences: 6,
        frames_per_seq: 8,
        size: SIZE,
        unlabeled_sequences: 3,
        ..SyntheticSpec::default()
    };
    generate_synthetic_corpus(dir, &spec, &mut ChaCha8Rng::seed_from_u64(11)).unwrap();
    let manifest = dir.join(MANIFEST_FILE);
    (
        load_manifest(&manifest, DomainTag::Labeled).unwrap(),
        load_manifest(&manifest, DomainTag::Unlabeled).unwrap(),
    )
}

fn toy_config(mode: Mode) -> TrainConfig {
    TrainConfig {
        mode,
        iterations: 10,
        batch_size: 2,
        frames_per_example: 4,
        checkpoint_every: 1000,
        augment: AugmentConfig::geometric_identity(SIZE),
        net: NetConfig::toy(),
        seed: 5,
        ..TrainConfig::default()
    }
}

fn trainer(dir: &Path, cfg: TrainConfig) -> Trainer {
    let (lab, unl) = corpus(dir);
    Trainer::new(cfg, lab, Some(unl)).unwrap()
}

fn snapshot(b: &ModelBundle) -> BTreeMap<&'static str, ParamStore> {
    b.stores().into_iter().map(|(n, s)| (n, s.clone())).collect()
}

fn changed(before: &BTreeMap<&'static str, ParamStore>, b: &ModelBundle) -> Vec<&'static str> {
    b.stores()
        .into_iter()
        .filter(|(n, s)| before[n] != **s)
        .map(|(n, _)| n)
        .collect()
}

#[test]
fn default_config_values() {
    let c = TrainConfig::default();
    assert_eq!(c.iterations, 60_000);
    assert_eq!(c.batch_size, 4);
    assert_eq!(c.frames_per_example, 16);
    assert_eq!(c.learning_rate, 2e-4);
    assert_eq!(c.adam_beta1, 0.5);
    assert_eq!(c.lambda_rec, 0.5);
    assert_eq!((c.image_size(), c.resize_size()), (128, 136));
    c.validate().unwrap();
}

#[test]
fn config_validation() {
    let mut c = toy_config(Mode::Multiframe);
    c.frames_per_example = 1;
    assert!(matches!(c.validate(), Err(Error::Config(_))));
    c.mode = Mode::Vanilla;
    c.validate().unwrap();
    let mut c = toy_config(Mode::Multiframe);
    c.negative_pairs = Some(13);
    assert!(c.validate().is_err());
    c.negative_pairs = Some(12);
    c.validate().unwrap();
    let mut c = toy_config(Mode::Multiframe);
    c.batch_size = 0;
    assert!(c.validate().is_err());
}

#[test]
fn config_hash_ignores_run_length_only() {
    let a = toy_config(Mode::Multiframe);
    let mut b = a.clone();
    b.iterations = 99;
    b.checkpoint_every = 3;
    assert_eq!(a.hash(), b.hash());
    b.learning_rate = 1e-3;
    assert_ne!(a.hash(), b.hash());
    let json = serde_json::to_string(&a).unwrap();
    assert_eq!(serde_json::from_str::<TrainConfig>(&json).unwrap(), a);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"bogus": 1}"#).is_err());
}

proptest! {
    #[test]
    fn derangement_has_no_fixed_points(n in 2usize..20, seed in any::<u64>()) {
        let p = derangement(n, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut sorted = p.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
        prop_assert!(p.iter().enumerate().all(|(i, &j)| i != j));
    }
}

#[test]
fn latent_shared_within_set_independent_across() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, _) = corpus(dir.path());
    let cfg = toy_config(Mode::Multiframe);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sets: Vec<_> = (0..2)
        .map(|_| sample_frameset(&lab, 4, &cfg.augment, &mut rng).unwrap())
        .collect();
    let b = prepare_labeled(&sets, &cfg, 8, true, &mut rng).unwrap();
    let z = b.latent.unwrap();
    assert_eq!(z.shape(), &[8, 8]);
    for s in 0..2 {
        for i in 1..4 {
            assert_eq!(z.row(4 * s), z.row(4 * s + i));
        }
    }
    assert_ne!(z.row(0), z.row(4));
    let (_, times, k) = b.negatives.unwrap();
    assert_eq!((times.len(), k), (8, 4));

    let v = prepare_labeled(&sets, &cfg, 0, false, &mut rng).unwrap();
    assert!(v.latent.is_none() && v.negatives.is_none());
}

#[test]
fn generator_inputs_are_other_frames_of_the_set() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, _) = corpus(dir.path());
    let cfg = toy_config(Mode::Multiframe);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let fs = sample_frameset(&lab, 4, &cfg.augment, &mut rng).unwrap();
    let b = prepare_labeled(std::slice::from_ref(&fs), &cfg, 8, true, &mut rng).unwrap();
    let per = b.real.len() / 4;
    let rows: Vec<&[f32]> = (0..4).map(|i| &b.real.data()[i * per..(i + 1) * per]).collect();
    for i in 0..4 {
        let g = &b.gen_input.data()[i * per..(i + 1) * per];
        assert_ne!(g, rows[i]);
        assert!(rows.contains(&g));
    }
}

#[test]
fn gating_gradient_is_exactly_zero() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(dir.path(), toy_config(Mode::Multidomain));
    for _ in 0..3 {
        let rec = t.step().unwrap();
        assert_eq!(rec.gating_max_abs_grad, Some(0.0));
        assert!(rec.losses.contains_key("g_a.adv.cond_gated"));
    }
}

#[test]
fn zero_learning_rate_leaves_parameters_unchanged() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [Mode::Vanilla, Mode::Multiframe, Mode::Multidomain] {
        let mut cfg = toy_config(mode);
        cfg.learning_rate = 0.0;
        let mut t = trainer(dir.path(), cfg);
        let before = snapshot(&t.state.bundle);
        t.step().unwrap();
        assert!(changed(&before, &t.state.bundle).is_empty(), "{mode:?}");
        assert_eq!(t.iteration(), 1);
    }
}

#[test]
fn phases_touch_only_their_networks() {
    let dir = tempfile::tempdir().unwrap();
    let expect: Vec<(Mode, Vec<(Phase, Vec<&str>)>)> = vec![
        (
            Mode::Multiframe,
            vec![(Phase::Discriminators, vec!["d_a"]), (Phase::Generator, vec!["g_t"])],
        ),
        (
            Mode::Multidomain,
            vec![
                (Phase::Discriminators, vec!["d_a", "d_t"]),
                (Phase::Generator, vec!["g_t"]),
                (Phase::Translator, vec!["g_a"]),
            ],
        ),
    ];
    for (mode, phases) in expect {
        let mut t = trainer(dir.path(), toy_config(mode));
        let mut prev = snapshot(&t.state.bundle);
        let mut seen = Vec::new();
        t.step_observed(&mut |phase, b| {
            seen.push((phase, changed(&prev, b)));
            prev = snapshot(b);
        })
        .unwrap();
        assert_eq!(seen, phases, "{mode:?}");
    }
}

#[test]
fn single_domain_modes_have_no_translator() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [Mode::Vanilla, Mode::Multiframe] {
        let mut t = trainer(dir.path(), toy_config(mode));
        t.step().unwrap();
        assert!(t.state.bundle.g_a.is_none() && t.state.bundle.d_t.is_none());
        assert_eq!(
            t.state.optimizers.keys().collect::<Vec<_>>(),
            vec!["d_a", "g_t"]
        );
    }
}

#[test]
fn vanilla_reports_lack_set_terms() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(dir.path(), toy_config(Mode::Vanilla));
    let rec = t.step().unwrap();
    assert!(rec.losses.contains_key("d.cond_pair.real"));
    assert!(!rec.losses.keys().any(|k| k.contains("negative") || k.starts_with("d.cond.")));
    let mut t = trainer(dir.path(), toy_config(Mode::Multiframe));
    let rec = t.step().unwrap();
    assert!(rec.losses.contains_key("d.cond.negative"));
}

#[test]
fn wrong_mode_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (lab, _) = corpus(dir.path());
    let mut t = trainer(dir.path(), toy_config(Mode::Multiframe));
    let cfg = toy_config(Mode::Multiframe);
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let sets = vec![sample_frameset(&lab, 4, &cfg.augment, &mut rng).unwrap()];
    let r = train_step_vanilla(&mut t.state, &sets, &cfg, &mut rng);
    assert!(matches!(r, Err(Error::ModeMismatch(_))));
    assert!(matches!(
        Trainer::new(toy_config(Mode::Multidomain), lab, None),
        Err(Error::ModeMismatch(_))
    ));
}

#[test]
fn deterministic_over_ten_steps() {
    let dir = tempfile::tempdir().unwrap();
    let run = || {
        let mut t = trainer(dir.path(), toy_config(Mode::Multiframe));
        (0..10).map(|_| t.step().unwrap().losses).collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(x.keys().collect::<Vec<_>>(), y.keys().collect::<Vec<_>>());
        for (k, v) in x {
            assert!((v - y[k]).abs() <= 1e-6, "{k}");
        }
    }
}

#[test]
fn losses_stay_finite_for_100_iterations() {
    let dir = tempfile::tempdir().unwrap();
    let mut t = trainer(dir.path(), toy_config(Mode::Multiframe));
    for _ in 0..100 {
        let rec = t.step().unwrap();
        assert!(rec.event.is_none() && rec.all_finite(), "{rec:?}");
    }
}

#[test]
fn nonfinite_steps_are_skipped_then_abort() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = toy_config(Mode::Multiframe);
    cfg.max_consecutive_nonfinite = 3;
    let mut t = trainer(dir.path(), cfg);
    let store = &mut t.state.bundle.d_a.store;
    let id = store.ids().last().unwrap();
    store.get_mut(id).data_mut()[0] = f32::NAN;
    let before = snapshot(&t.state.bundle);
    for i in 0..2 {
        let rec = t.step().unwrap();
        assert!(rec.event.as_deref().unwrap().starts_with("NONFINITE_LOSS"));
        assert_eq!(rec.iteration, i);
    }
    assert!(matches!(t.step(), Err(Error::NonfiniteLoss { .. })));
    assert_eq!(t.iteration(), 3);
    let after = snapshot(&t.state.bundle);
    for (n, s) in &before {
        let same = s
            .values()
            .iter()
            .zip(after[n].values())
            .all(|(a, b)| a.data().iter().zip(b.data()).all(|(x, y)| x.to_bits() == y.to_bits()));
        assert!(same, "{n} changed during skipped steps");
    }
}

#[test]
fn checkpoint_roundtrip_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    for mode in [Mode::Multiframe, Mode::Multidomain] {
        let mut t = trainer(dir.path(), toy_config(mode));
        t.step().unwrap();
        let path = dir.path().join("a.safetensors");
        t.save(&path).unwrap();
        let ck = load_checkpoint(&path).unwrap();
        assert_eq!(ck.iteration(), 1);
        assert_eq!(ck.config, t.config);
        assert_eq!(snapshot(&ck.state.bundle), snapshot(&t.state.bundle));
        assert_eq!(ck.state.optimizers, t.state.optimizers);
        let again = checkpoint_bytes(&ck.state, &ck.config).unwrap();
        assert_eq!(again, std::fs::read(&path).unwrap());
    }
}

#[test]
fn resume_checks_config_hash() {
    let dir = tempfile::tempdir().unwrap();
    let t = trainer(dir.path(), toy_config(Mode::Multiframe));
    let (lab, _) = corpus(dir.path());
    let mut other = toy_config(Mode::Multiframe);
    other.lambda_rec = 0.25;
    let r = Trainer::from_checkpoint(t.checkpoint(), other, lab.clone(), None);
    assert!(matches!(r, Err(Error::ConfigMismatch { .. })));
    let mut longer = toy_config(Mode::Multiframe);
    longer.iterations = 1_000;
    Trainer::from_checkpoint(t.checkpoint(), longer, lab, None).unwrap();
}

#[test]
fn damaged_checkpoints_are_corrupt() {
    let dir = tempfile::tempdir().unwrap();
    let t = trainer(dir.path(), toy_config(Mode::Multiframe));
    let bytes = checkpoint_bytes(&t.state, &t.config).unwrap();
    for cut in [0, 7, 100, bytes.len() / 2, bytes.len() - 1] {
        assert!(
            matches!(checkpoint_from_bytes(&bytes[..cut]), Err(Error::CorruptCheckpoint(_))),
            "cut at {cut}"
        );
    }
    let path = dir.path().join("partial.safetensors");
    std::fs::write(&path, &bytes[..bytes.len() / 3]).unwrap();
    assert!(matches!(load_checkpoint(&path), Err(Error::CorruptCheckpoint(_))));
}

#[test]
fn train_writes_final_checkpoint_and_metrics() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let mut cfg = toy_config(Mode::Multiframe);
    cfg.iterations = 2;
    let out = dir.path().join("run");
    let paths = TrainPaths {
        dataset: dir.path().to_path_buf(),
        out_dir: out.clone(),
        ..TrainPaths::default()
    };
    let ck = train(&cfg, &paths).unwrap();
    assert_eq!(ck.iteration(), 2);
    let files: Vec<_> = std::fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .filter(|n| n.ends_with(".safetensors"))
        .collect();
    assert_eq!(files, vec![FINAL_CHECKPOINT]);
    let metrics = read_metrics(&out.join(METRICS_FILE)).unwrap();
    assert_eq!(metrics.iter().map(|m| m.iteration).collect::<Vec<_>>(), vec![0, 1]);
    assert!(metrics.iter().all(|m| !m.sample_digest.is_empty() && m.all_finite()));
}

#[test]
fn multidomain_train_needs_unlabeled_paths() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let paths = TrainPaths {
        dataset: dir.path().to_path_buf(),
        out_dir: dir.path().join("run"),
        ..TrainPaths::default()
    };
    let r = train(&toy_config(Mode::Multidomain), &paths);
    assert!(matches!(r, Err(Error::ModeMismatch(_))));
}

#[test]
fn resumed_run_matches_uninterrupted_run() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let mut cfg = toy_config(Mode::Multidomain);
    cfg.iterations = 4;
    cfg.checkpoint_every = 2;
    let paths = |name: &str| TrainPaths {
        dataset: dir.path().to_path_buf(),
        unlabeled: Some(dir.path().to_path_buf()),
        out_dir: dir.path().join(name),
        resume: None,
    };
    let full = train(&cfg, &paths("full")).unwrap();
    let mid = dir.path().join("full").join(checkpoint_name(2));
    assert!(mid.exists());

    let mut resumed_paths = paths("resumed");
    resumed_paths.resume = Some(mid);
    let resumed = train(&cfg, &resumed_paths).unwrap();
    assert_eq!(resumed.iteration(), 4);
    assert_eq!(
        checkpoint_bytes(&resumed.state, &cfg).unwrap(),
        checkpoint_bytes(&full.state, &cfg).unwrap()
    );
    let log = read_metrics(&dir.path().join("resumed").join(METRICS_FILE)).unwrap();
    assert_eq!(log.iter().map(|m| m.iteration).collect::<Vec<_>>(), vec![2, 3]);
}

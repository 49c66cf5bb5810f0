use super::*;
use crate::encoders::{EncoderSpec, MockBackend};
use crate::model::IaConfig;
use crate::synth::synthetic_corpus;
use crate::tensor::Tape;
use crate::train::{TrainConfig, Trainer};

fn map(rows: &[&[f64]]) -> AttentionMap<f64> {
    AttentionMap::from_rows_f64(rows).unwrap()
}

#[test]
fn perfect_alignment_has_near_zero_loss() {
    let target = map(&[&[0.0, 1.0], &[1.0, 0.0]]);
    let l = alignment_loss(&target, &target).unwrap();
    assert!(l <= 1e-5, "{l}");
}

#[test]
fn uniform_host_attention_gives_ln2() {
    let m = map(&[&[0.5, 0.5], &[0.5, 0.5]]);
    let target = map(&[&[0.5, 0.5], &[0.5, 1.0]]);
    let l = alignment_loss(&m, &target).unwrap();
    let oracle = (3.0 * 2f64.ln() + 2f64.ln()) / 4.0;
    assert!((l - oracle).abs() < 1e-12, "{l}");
}

#[test]
fn target_is_max_pooled_to_host_grid() {
    let vals: Vec<f64> = (1..=16).map(|v| v as f64 / 16.0).collect();
    let target = AttentionMap::new(4, 4, vals).unwrap();
    let pooled = pooled_target(&target, 2, 2).unwrap();
    let expect = [6.0, 8.0, 14.0, 16.0].map(|v| v / 16.0);
    assert_eq!(pooled.values(), &expect);

    let m = map(&[&[0.0, 0.2], &[0.6, 1.0]]);
    let l = alignment_loss(&m, &target).unwrap();
    let bce = |p: f64, t: f64| {
        let p = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
    };
    let oracle = [0.0, 0.2, 0.6, 1.0]
        .iter()
        .zip(expect)
        .map(|(&p, t)| bce(p, t))
        .sum::<f64>()
        / 4.0;
    assert!((l - oracle).abs() < 1e-12);
}

#[test]
fn unnormalized_target_is_rejected() {
    let m = map(&[&[0.0, 1.0]]);
    assert!(matches!(alignment_loss(&m, &map(&[&[0.0, 2.0]])), Err(IaError::Argument(_))));
}

#[test]
fn graph_loss_matches_value_loss() {
    let m = map(&[&[0.1, 0.3], &[0.2, 0.05]]);
    let target = map(&[&[0.0, 1.0], &[0.4, 0.2]]);
    let tape = Tape::new();
    let v = alignment_loss_var(tape.constant(m.as_matrix().clone()), &target).unwrap();
    let value = v.value().data()[0];
    assert!((value - alignment_loss(&m, &target).unwrap()).abs() < 1e-12);
}

#[test]
fn combined_loss_weights_terms() {
    let one = AlignmentConfig::one_stage(AlignSource::Human);
    assert_eq!(combined_loss(0.5, 0.1, &one), 1.5);
    assert_eq!(combined_loss(0.7, 0.05, &one), 0.7 + 10.0 * 0.05);
    let two = AlignmentConfig::two_stage(AlignSource::IaPseudo);
    assert_eq!(combined_loss(0.7, 0.05, &two), 0.7 + 6.0 * 0.05);
    let off = AlignmentConfig { lambda2: 0.0, ..one };
    assert_eq!(combined_loss(0.7, 0.05, &off), 0.7);
    assert!(AlignmentConfig { lambda1: -1.0, ..one }.validate().is_err());
}

#[test]
fn leakage_lists_shared_ids_sorted() {
    let records: Vec<_> = synthetic_corpus(4, 32, 1).into_iter().map(|(r, _)| r).collect();
    let train = vec!["syn0003".to_string(), "zzz".to_string(), "syn0001".to_string()];
    match check_leakage(&train, &records) {
        Err(IaError::Leakage { ids }) => assert_eq!(ids, ["syn0001", "syn0003"]),
        other => panic!("{other:?}"),
    }
    check_leakage(&["other".to_string()], &records).unwrap();
}

fn tiny_checkpoint(train_ids: Vec<String>) -> Checkpoint<f64> {
    let t = Trainer::<f64>::new(IaConfig::desk(), TrainConfig { epochs: 1, ..TrainConfig::desk() }).unwrap();
    t.checkpoint(EncoderSpec::mock(7, 64), train_ids).unwrap()
}

#[test]
fn pseudo_labels_are_deterministic_and_written() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = crate::synth::write_synthetic_dataset(dir.path(), 3, 64, 2).unwrap();
    let records = crate::data::load_dataset(&manifest).unwrap();
    let ck = tiny_checkpoint(vec!["train-only".into()]);
    let backend = MockBackend::<f64>::desk(7, 64).unwrap();
    let a = pseudo_label(&ck, &records, dir.path(), &backend, 1).unwrap();
    let b = pseudo_label(&ck, &records, dir.path(), &backend, 2).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    assert!(a.values().all(|m| m.shape() == (64, 64)));

    let paths = write_pseudo_labels(&dir.path().join("pseudo"), &a).unwrap();
    let back: AttentionMap<f64> = crate::data::read_ighm(&paths[0]).unwrap();
    assert_eq!(back, a["syn0000"].cast::<f32>().cast::<f64>());

    assert!(pseudo_label(&ck, &[], dir.path(), &backend, 1).unwrap().is_empty());
    let leaky = tiny_checkpoint(vec!["syn0002".into()]);
    assert!(matches!(
        pseudo_label(&leaky, &records, dir.path(), &backend, 1),
        Err(IaError::Leakage { .. })
    ));
}

fn small_toy() -> ToyConfig {
    ToyConfig {
        n_train: 16,
        n_test: 8,
        epochs: 2,
        batch_size: 8,
        ..ToyConfig::default()
    }
}

#[test]
fn toy_dataset_is_deterministic_with_cue_inside_mask() {
    let cfg = ToyConfig::default();
    let a: Vec<ToySample<f64>> = toy_dataset(&cfg, 5, 9);
    assert_eq!(a, toy_dataset(&cfg, 5, 9));
    for s in &a {
        let area: f64 = s.cue_mask.values().iter().sum();
        assert_eq!(area, (cfg.cue_size * cfg.cue_size) as f64);
        assert_eq!(s.tokens.shape(), (cfg.grid() * cfg.grid(), cfg.patch * cfg.patch));
        assert!(s.label < TOY_CLASSES);
    }
}

#[test]
fn toy_probe_map_is_a_distribution_over_the_grid() {
    let cfg = ToyConfig::default();
    let model = ToyHoiModel::<f64>::init(cfg.clone(), 0).unwrap();
    let s = &toy_dataset::<f64>(&cfg, 1, 0)[0];
    let m = model.attention_map(s).unwrap();
    assert_eq!(m.shape(), (cfg.grid(), cfg.grid()));
    let total: f64 = m.values().iter().sum();
    assert!((total - 1.0).abs() < 1e-9);
}

#[test]
fn zero_alignment_weight_matches_plain_training() {
    let cfg = small_toy();
    let (plain, a) = train_toy::<f64>(&cfg, None, 4).unwrap();
    let off = AlignmentConfig { lambda1: 1.0, lambda2: 0.0, source: AlignSource::Human };
    let (aligned, b) = train_toy::<f64>(&cfg, Some(&off), 4).unwrap();
    assert_eq!(plain.params, aligned.params);
    assert_eq!(a.loss_log, b.loss_log);
    assert_eq!(a.accuracy, b.accuracy);
}

use super::*;
use crate::encoders::MockBackend;
use crate::model::{Checkpoint, IaConfig};
use crate::synth::synthetic_corpus;

fn fixture(n: usize, sigma: Option<f64>) -> Vec<TrainingSample<f64>> {
    let backend = MockBackend::<f64>::desk(7, 64).unwrap();
    synthetic_corpus(n, 64, 3)
        .iter()
        .map(|(r, img)| prepare_sample(r, img, &backend, &IaConfig::desk(), sigma).unwrap())
        .collect()
}

fn quick(epochs: usize) -> TrainConfig {
    TrainConfig {
        epochs,
        lr: 1e-3,
        batch_size: 3,
        seed: 11,
        ..TrainConfig::desk()
    }
}

#[test]
fn schedule_is_exact_step_decay() {
    let c = TrainConfig::default();
    assert_eq!(c.lr_at(0), 1e-4);
    assert_eq!(c.lr_at(19), 1e-4);
    assert_eq!(c.lr_at(20), 1e-4 / 10.0);
    assert_eq!(c.lr_at(45), 1e-4 / 100.0);
    assert_eq!(c.lr_at(79), 1e-4 / 1000.0);
}

#[test]
fn invalid_configs_are_rejected() {
    for c in [
        TrainConfig { epochs: 0, ..TrainConfig::default() },
        TrainConfig { lr: 0.0, ..TrainConfig::default() },
        TrainConfig { lr_decay_factor: 1.0, ..TrainConfig::default() },
    ] {
        assert!(matches!(c.validate(), Err(IaError::Config(_))));
    }
    TrainConfig::default().validate().unwrap();
}

#[test]
fn config_parses_from_partial_toml_like_json() {
    let c: TrainConfig = serde_json::from_str(r#"{"epochs": 3, "ablation": ["ICB"]}"#).unwrap();
    assert_eq!(c.epochs, 3);
    assert_eq!(c.ablation, vec![Component::Icb]);
    assert_eq!(c.lr, 1e-4);
    assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
}

#[test]
fn decay_exemptions_are_biases_norms_and_gate() {
    let model = crate::model::IaModel::<f64>::init(IaConfig::desk(), 0).unwrap();
    let exempt = decay_exempt(&model.params);
    assert!(exempt.contains(&"icb.gate".to_string()));
    assert!(exempt.contains(&"dec.bn.g".to_string()));
    assert!(exempt.contains(&"va.0.ln1.g".to_string()));
    assert!(exempt.contains(&"proj.b".to_string()));
    for name in &exempt {
        assert!(
            name.ends_with(".b") || name.ends_with(".g") || name == "icb.gate",
            "{name}"
        );
    }
    assert!(!exempt.iter().any(|n| n.ends_with(".w")));
}

#[test]
fn adamw_single_step_matches_hand_computation() {
    let mut store = crate::tensor::ParamStore::<f64>::new();
    store.insert("a.w", crate::tensor::Matrix::from_f64(1, 2, &[1.0, -2.0]));
    store.insert("a.b", crate::tensor::Matrix::from_f64(1, 1, &[0.5]));
    let config = TrainConfig { weight_decay: 0.1, ..TrainConfig::default() };
    let mut opt = AdamW::new(&config, &store);
    let grads = [
        ("a.w".to_string(), crate::tensor::Matrix::from_f64(1, 2, &[0.2, -0.4])),
        ("a.b".to_string(), crate::tensor::Matrix::from_f64(1, 1, &[3.0])),
    ]
    .into_iter()
    .collect();
    let lr = 0.01;
    opt.step(&mut store, &grads, lr);
    let update = |p: f64, g: f64, decay: bool| {
        let p = if decay { p * (1.0 - lr * 0.1) } else { p };
        let m = 0.1 * g;
        let v = 0.001 * g * g;
        let denom = v.sqrt() / (1.0 - 0.999f64).sqrt() + 1e-8;
        p - lr / 0.1 * (m / denom)
    };
    assert_eq!(store.get("a.w").unwrap().data(), &[update(1.0, 0.2, true), update(-2.0, -0.4, true)]);
    assert_eq!(store.get("a.b").unwrap().data(), &[update(0.5, 3.0, false)]);
}

#[test]
fn same_seed_gives_identical_logs() {
    let data = fixture(4, Some(8.0));
    let (_, a) = train(&data, IaConfig::desk(), quick(3)).unwrap();
    let (_, b) = train(&data, IaConfig::desk(), quick(3)).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.len(), 3);
    assert!(a.iter().all(|e| e.mean_loss.is_finite()));
}

#[test]
fn empty_fixations_are_rejected_for_training() {
    let mut data = fixture(2, None);
    data[1].record.fixations.points.clear();
    assert!(matches!(
        train(&data, IaConfig::desk(), quick(1)),
        Err(IaError::Validation { .. })
    ));
}

#[test]
fn resuming_from_checkpoint_is_bitwise_identical() {
    let data = fixture(5, Some(8.0));
    let mut straight = Trainer::<f64>::new(IaConfig::desk(), quick(3)).unwrap();
    straight.train(&data).unwrap();

    let mut first = Trainer::<f64>::new(IaConfig::desk(), quick(3)).unwrap();
    first.train_epoch(&data).unwrap();
    first.train_epoch(&data).unwrap();
    let ids = data.iter().map(|s| s.record.sample.sample_id.clone()).collect();
    let bytes = first
        .checkpoint(crate::encoders::EncoderSpec::mock(7, 64), ids)
        .unwrap()
        .to_bytes()
        .unwrap();
    let mut resumed = Trainer::resume(Checkpoint::<f64>::from_bytes(&bytes).unwrap(), quick(3)).unwrap();
    resumed.train(&data).unwrap();

    assert_eq!(resumed.model, straight.model);
    assert_eq!(resumed.optimizer, straight.optimizer);
    assert_eq!(resumed.log.last(), straight.log.last());
}

#[test]
fn non_finite_loss_aborts_with_position() {
    let data = fixture(2, Some(8.0));
    let mut t = Trainer::<f64>::new(IaConfig::desk(), quick(1)).unwrap();
    t.model.params.get_mut("dec.conv2.b").unwrap().data_mut()[0] = f64::NAN;
    match t.train_epoch(&data) {
        Err(IaError::NonFinite { epoch, step }) => assert_eq!((epoch, step), (0, 0)),
        other => panic!("expected abort, got {other:?}"),
    }
}

#[test]
fn variant_names_parse() {
    assert_eq!("full".parse::<Variant>().unwrap(), Variant::Full);
    assert_eq!("w/o ICB".parse::<Variant>().unwrap(), Variant::Without(Component::Icb));
    assert_eq!("wo-pa".parse::<Variant>().unwrap(), Variant::Without(Component::Pa));
    assert_eq!("without_hocb".parse::<Variant>().unwrap(), Variant::Without(Component::Hocb));
    for v in Variant::ALL {
        assert_eq!(v.to_string().parse::<Variant>().unwrap(), v);
    }
    assert!(matches!("w/o XYZ".parse::<Variant>(), Err(IaError::Argument(_))));
}

#[test]
fn full_only_ablation_equals_plain_train_and_evaluate() {
    let data = fixture(6, Some(8.0));
    let (train_set, test_set) = data.split_at(4);
    let rows = ablate(train_set, test_set, &IaConfig::desk(), &quick(2), &[Variant::Full], 1).unwrap();
    assert_eq!(rows.len(), 1);

    let (model, log) = train(train_set, IaConfig::desk(), quick(2)).unwrap();
    let records: Vec<_> = test_set.iter().map(|s| s.record.clone()).collect();
    struct P<'a>(&'a crate::model::IaModel<f64>, &'a [TrainingSample<f64>]);
    impl crate::metrics::Predictor<f64> for P<'_> {
        fn predict(&self, r: &crate::data::Record) -> crate::error::Result<Option<crate::data::AttentionMap<f64>>> {
            let s = self.1.iter().find(|s| s.record.sample.sample_id == r.sample.sample_id).unwrap();
            self.0.predict_features(&s.features).map(Some)
        }
    }
    let ev = crate::metrics::evaluate(&records, &P(&model, test_set), None, None, 1).unwrap();
    assert_eq!(rows[0].metrics, ev.report);
    assert_eq!(rows[0].final_loss, log.last().unwrap().mean_loss);
}

#[test]
fn without_icb_variant_has_no_cross_attention() {
    let cfg = Variant::Without(Component::Icb).apply(IaConfig::desk());
    let model = crate::model::IaModel::<f32>::init(cfg, 0).unwrap();
    assert!(model.cross_attention_params().is_empty());
}

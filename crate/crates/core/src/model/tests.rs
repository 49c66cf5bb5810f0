use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::data::{AttentionMap, BBox, HoiSample};
use crate::encoders::{TextTriplet, VisualTokens};
use crate::tensor::{Matrix, Tape};

fn tiny_config(d: usize, heads: usize) -> IaConfig {
    IaConfig {
        model_width: d,
        fourier_dim: 8,
        n_heads: heads,
        mlp_hidden: 2 * d,
        decoder_mid_channels: (d / 2).max(1),
        patch_size: 16,
        image_size: 32,
        text_dim: 6,
        visual_dim: 5,
        visual_adapter_layers: 2,
        disabled: vec![],
    }
}

fn sample(w: u32, h: u32) -> HoiSample {
    HoiSample {
        sample_id: "s".into(),
        image_path: "s.png".into(),
        width: w,
        height: h,
        human_box: BBox::new(1.0, 2.0, 0.5 * f64::from(w), 0.75 * f64::from(h)),
        object_box: BBox::new(0.25 * f64::from(w), 0.5, f64::from(w), 0.5 * f64::from(h)),
        object_label: "bicycle".into(),
        interaction_label: "ride".into(),
    }
}

fn features(cfg: &IaConfig, seed: u64) -> SampleFeatures<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = cfg.grid_side();
    let mut unit = |n: usize| {
        let m = Matrix::<f64>::randn(1, n, 1.0, &mut rng);
        let norm = m.norm();
        m.data().iter().map(|v| v / norm).collect::<Vec<_>>()
    };
    let text = TextTriplet {
        human: unit(cfg.text_dim),
        object: unit(cfg.text_dim),
        interaction: unit(cfg.text_dim),
    };
    let tokens = VisualTokens::new(
        Matrix::randn(g * g, cfg.visual_dim, 1.0, &mut ChaCha8Rng::seed_from_u64(seed + 100)),
        g,
        g,
    )
    .unwrap();
    SampleFeatures::from_parts(&sample(32, 32), text, tokens, cfg).unwrap()
}

fn set(model: &mut IaModel<f64>, name: &str, rows: usize, cols: usize, values: &[f64]) {
    *model.params.get_mut(name).unwrap_or_else(|| panic!("{name}")) = Matrix::from_f64(rows, cols, values);
}

fn softmax(xs: &[f64]) -> Vec<f64> {
    let m = xs.iter().cloned().fold(f64::MIN, f64::max);
    let e: Vec<f64> = xs.iter().map(|x| (x - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

#[test]
fn zero_mlp_weights_give_bias_prototypes() {
    let cfg = tiny_config(4, 2);
    let mut model = IaModel::<f64>::init(cfg.clone(), 1).unwrap();
    for branch in ["human", "object", "interaction"] {
        for layer in ["fc1", "fc2"] {
            let name = format!("pa.{branch}.{layer}.w");
            let (r, c) = model.params.get(&name).unwrap().shape();
            *model.params.get_mut(&name).unwrap() = Matrix::zeros(r, c);
        }
    }
    set(&mut model, "pa.human.fc2.b", 1, 4, &[1., 2., 3., 4.]);
    set(&mut model, "pa.object.fc2.b", 1, 4, &[5., 6., 7., 8.]);
    let k = model.prototypes(&features(&cfg, 2));
    assert_eq!(k.human, vec![1., 2., 3., 4.]);
    assert_eq!(k.object, vec![5., 6., 7., 8.]);
    assert_eq!(k.interaction, vec![0.; 4]);
}

#[test]
fn prototypes_are_deterministic() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg.clone(), 1).unwrap();
    let f = features(&cfg, 9);
    assert_eq!(model.prototypes(&f), model.prototypes(&f));
}

#[test]
fn hand_set_human_prototype_matches_matrix_product() {
    // D = 2; text_dim 6 + fourier 8 = 14 inputs.
    let cfg = tiny_config(2, 1);
    let mut model = IaModel::<f64>::init(cfg.clone(), 1).unwrap();
    let w1: Vec<f64> = (0..28).map(|i| (i as f64 - 14.0) * 0.03).collect();
    let b1 = [0.1, -0.2];
    let w2 = [0.5, -1.0, 2.0, 0.25];
    let b2 = [0.01, 0.02];
    set(&mut model, "pa.human.fc1.w", 14, 2, &w1);
    set(&mut model, "pa.human.fc1.b", 1, 2, &b1);
    set(&mut model, "pa.human.fc2.w", 2, 2, &w2);
    set(&mut model, "pa.human.fc2.b", 1, 2, &b2);
    let f = features(&cfg, 4);
    let input: Vec<f64> = f.text.human.iter().chain(&f.human_fourier).copied().collect();
    let gelu = |x: f64| 0.5 * x * (1.0 + ((2.0 / std::f64::consts::PI).sqrt() * (x + 0.044715 * x.powi(3))).tanh());
    let hidden: Vec<f64> = (0..2)
        .map(|j| gelu((0..14).map(|i| input[i] * w1[i * 2 + j]).sum::<f64>() + b1[j]))
        .collect();
    let expect: Vec<f64> = (0..2)
        .map(|j| hidden[0] * w2[j] + hidden[1] * w2[2 + j] + b2[j])
        .collect();
    let k = model.prototypes(&f);
    for (a, b) in k.human.iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn visual_adapter_is_a_pure_residual_at_init() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg.clone(), 5).unwrap();
    let f = features(&cfg, 6);
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let tokens = tape.constant(f.tokens.tokens.clone());
    let projected = bound.linear("proj", tokens).value();
    let adapted = model.visual_adapter(&bound, tokens).value();
    assert_eq!(*projected, *adapted);
}

#[test]
fn single_token_visual_adapter_is_finite() {
    let cfg = IaConfig {
        image_size: 16,
        ..tiny_config(4, 2)
    };
    let mut model = IaModel::<f64>::init(cfg.clone(), 5).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    for name in model.params.names() {
        let m = model.params.get_mut(&name).unwrap();
        *m = Matrix::randn(m.rows(), m.cols(), 0.5, &mut rng);
    }
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let t = tape.constant(Matrix::randn(1, 5, 1.0, &mut rng));
    let h = bound.linear("proj", t);
    let (_, probs) = bound.attention("va.0.attn", h, h, 2);
    assert!(probs.iter().all(|p| p.value().data() == [1.0]));
    assert!(model.visual_adapter(&bound, t).value().all_finite());
}

#[test]
fn hocb_identity_at_init_and_shape() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg.clone(), 5).unwrap();
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for m in [1, 3, 7] {
        let v = tape.constant(Matrix::randn(m, 4, 1.0, &mut rng));
        let kh = tape.constant(Matrix::randn(1, 4, 1.0, &mut rng));
        let ko = tape.constant(Matrix::randn(1, 4, 1.0, &mut rng));
        let out = model.hocb(&bound, v, kh, ko);
        assert_eq!(out.shape(), (m, 4));
        assert_eq!(*out.value(), *v.value());
    }
}

#[test]
fn hocb_matches_three_token_hand_attention() {
    let cfg = tiny_config(1, 1);
    let mut model = IaModel::<f64>::init(cfg, 0).unwrap();
    let (wq, bq, wk, bk, wv, bv, wo, bo) = (0.7, 0.1, -1.3, 0.2, 2.0, -0.5, 0.8, 0.05);
    for (n, v) in [("q.w", wq), ("q.b", bq), ("k.w", wk), ("k.b", bk), ("v.w", wv), ("v.b", bv), ("o.w", wo), ("o.b", bo)] {
        set(&mut model, &format!("hocb.attn.{n}"), 1, 1, &[v]);
    }
    let (kh, ko, v) = (0.4, -1.1, 0.9);
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let row = |x: f64| tape.constant(Matrix::from_f64(1, 1, &[x]));
    let out = model.hocb(&bound, row(v), row(kh), row(ko)).value().get(0, 0);

    let seq = [kh, ko, v];
    let q = v * wq + bq;
    let scores: Vec<f64> = seq.iter().map(|s| q * (s * wk + bk)).collect();
    let p = softmax(&scores);
    let attended: f64 = seq.iter().zip(&p).map(|(s, w)| w * (s * wv + bv)).sum();
    let expect = v + attended * wo + bo;
    assert!((out - expect).abs() < 1e-12);
}

#[test]
fn icb_identity_at_init_and_unit_cross_weights() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg, 5).unwrap();
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let v = tape.constant(Matrix::randn(4, 4, 1.0, &mut rng));
    let ki = tape.constant(Matrix::randn(1, 4, 1.0, &mut rng));
    assert_eq!(*model.icb(&bound, v, ki).value(), *v.value());
}

#[test]
fn icb_matches_hand_computation_with_open_gate() {
    let cfg = tiny_config(1, 1);
    let mut model = IaModel::<f64>::init(cfg, 0).unwrap();
    let (cvw, cvb, cow, cob) = (1.5, 0.1, -0.4, 0.3);
    set(&mut model, "icb.cross.v.w", 1, 1, &[cvw]);
    set(&mut model, "icb.cross.v.b", 1, 1, &[cvb]);
    set(&mut model, "icb.cross.o.w", 1, 1, &[cow]);
    set(&mut model, "icb.cross.o.b", 1, 1, &[cob]);
    set(&mut model, "icb.gate", 1, 1, &[1.0]);
    let sa = [0.9, 0.2, -0.6, 0.1, 1.2, -0.3, 0.5, 0.05];
    for (i, n) in ["q.w", "q.b", "k.w", "k.b", "v.w", "v.b", "o.w", "o.b"].iter().enumerate() {
        set(&mut model, &format!("icb.self.{n}"), 1, 1, &[sa[i]]);
    }
    let (v, ki) = ([0.3, -0.8], 0.6);
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let out = model.icb(
        &bound,
        tape.constant(Matrix::from_f64(2, 1, &v)),
        tape.constant(Matrix::from_f64(1, 1, &[ki])),
    );

    let cross = (ki * cvw + cvb) * cow + cob;
    let vh: Vec<f64> = v.iter().map(|x| x + cross).collect();
    let expect: Vec<f64> = vh
        .iter()
        .map(|&x| {
            let q = x * sa[0] + sa[1];
            let scores: Vec<f64> = vh.iter().map(|&y| q * (y * sa[2] + sa[3])).collect();
            let p = softmax(&scores);
            let att: f64 = vh.iter().zip(&p).map(|(&y, w)| w * (y * sa[4] + sa[5])).sum();
            x + att * sa[6] + sa[7]
        })
        .collect();
    for (a, b) in out.value().data().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn decode_of_zero_features_is_one_half() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg, 5).unwrap();
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let z = tape.constant(Matrix::zeros(4, 4));
    let (maps, _) = model.decode(&bound, &[z], &[(2, 2, 32, 32)], Mode::Eval).unwrap();
    let m = maps[0].value();
    assert_eq!(m.shape(), (32, 32));
    assert!(m.data().iter().all(|&v| v == 0.5));
}

#[test]
fn decode_upsamples_full_scale_grid_to_image_size() {
    let cfg = IaConfig {
        image_size: 224,
        ..tiny_config(4, 2)
    };
    let model = IaModel::<f32>::init(cfg, 5).unwrap();
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let feats = tape.constant(Matrix::zeros(196, 4));
    let (maps, _) = model.decode(&bound, &[feats], &[(14, 14, 224, 224)], Mode::Eval).unwrap();
    assert_eq!(maps[0].shape(), (224, 224));
    let bad = tape.constant(Matrix::zeros(195, 4));
    assert!(model.decode(&bound, &[bad], &[(14, 14, 224, 224)], Mode::Eval).is_err());
}

#[test]
fn decode_preserves_corner_ordering() {
    // Route one feature channel straight to the logit so the grid logits are
    // [[0, 30], [-30, 0]].
    let cfg = tiny_config(2, 1);
    let mut model = IaModel::<f64>::init(cfg, 0).unwrap();
    set(&mut model, "dec.conv1.w", 2, 1, &[1.0, 0.0]);
    set(&mut model, "dec.conv2.w", 1, 1, &[1.0]);
    // identity batch norm via running stats; ReLU needs a shift to keep negatives
    set(&mut model, "dec.bn.b", 1, 1, &[40.0]);
    set(&mut model, "dec.conv2.b", 1, 1, &[-40.0]);
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let f = tape.constant(Matrix::from_f64(4, 2, &[0.0, 0.0, 30.0, 0.0, -30.0, 0.0, 0.0, 0.0]));
    let (maps, _) = model.decode(&bound, &[f], &[(2, 2, 8, 8)], Mode::Eval).unwrap();
    let m = maps[0].value();
    let scale = 1.0 / (1.0 + 1e-5f64).sqrt();
    let sig = |x: f64| 1.0 / (1.0 + (-(x * scale + 40.0 - 40.0)).exp());
    // corners are exact copies of the grid corners
    assert!((m.get(0, 7) - sig(30.0)).abs() < 1e-12);
    assert!((m.get(7, 0) - sig(-30.0)).abs() < 1e-12);
    assert!(m.get(0, 7) > m.get(0, 0) && m.get(0, 0) > m.get(7, 0));
    assert!((m.get(0, 0) - m.get(7, 7)).abs() < 1e-12);
}

#[test]
fn forward_is_deterministic_and_in_unit_interval() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg.clone(), 8).unwrap();
    let f = features(&cfg, 3);
    let a = model.predict_features(&f).unwrap();
    let b = model.predict_features(&f).unwrap();
    assert_eq!(a, b);
    assert!(a.values().iter().all(|&v| v > 0.0 && v < 1.0));
}

#[test]
fn zero_init_forward_equals_no_knowledge_baseline() {
    let cfg = tiny_config(4, 2);
    let model = IaModel::<f64>::init(cfg.clone(), 8).unwrap();
    let f = features(&cfg, 3);
    let full = model.predict_features(&f).unwrap();
    let tape = Tape::new();
    let bound = model.params.bind(&tape, false);
    let proj = bound.linear("proj", tape.constant(f.tokens.tokens.clone()));
    let (maps, _) = model.decode(&bound, &[proj], &[(2, 2, 32, 32)], Mode::Eval).unwrap();
    assert_eq!(full.values(), maps[0].value().data());
}

#[test]
fn without_icb_has_no_cross_attention_parameters() {
    let cfg = tiny_config(4, 2).without(Component::Icb);
    let model = IaModel::<f32>::init(cfg, 0).unwrap();
    assert!(model.cross_attention_params().is_empty());
    let full = IaModel::<f32>::init(tiny_config(4, 2), 0).unwrap();
    assert!(!full.cross_attention_params().is_empty());
}

#[test]
fn permuting_tokens_commutes_with_the_blocks() {
    let cfg = tiny_config(4, 2);
    let mut model = IaModel::<f64>::init(cfg.clone(), 2).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    for name in model.params.names() {
        let m = model.params.get_mut(&name).unwrap();
        *m = Matrix::randn(m.rows(), m.cols(), 0.4, &mut rng);
    }
    let f = features(&cfg, 1);
    let perm = [2usize, 0, 3, 1];
    let permuted = Matrix::from_rows(
        &perm.iter().map(|&i| f.tokens.tokens.row(i).to_vec()).collect::<Vec<_>>(),
    );
    let run = |tokens: Matrix<f64>| {
        let tape = Tape::new();
        let bound = model.params.bind(&tape, false);
        let [kh, ko, ki] = model.positional_adapter(&bound, &f);
        let v = model.visual_adapter(&bound, tape.constant(tokens));
        let v = model.hocb(&bound, v, kh, ko);
        let out = model.icb(&bound, v, ki).value();
        (*out).clone()
    };
    let base = run(f.tokens.tokens.clone());
    let moved = run(permuted);
    for (k, &src) in perm.iter().enumerate() {
        for (a, b) in moved.row(k).iter().zip(base.row(src)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
}

#[test]
fn bce_examples() {
    let t = AttentionMap::<f64>::from_rows_f64(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap();
    assert!(bce_loss(&t, &t).unwrap() <= 1e-6);
    let half = AttentionMap::<f64>::new(2, 2, vec![0.5; 4]).unwrap();
    let soft = AttentionMap::<f64>::from_rows_f64(&[&[0.3, 0.9], &[0.0, 0.6]]).unwrap();
    assert!((bce_loss(&half, &soft).unwrap() - std::f64::consts::LN_2).abs() < 1e-12);
    let p = AttentionMap::<f64>::from_rows_f64(&[&[0.9, 0.2]]).unwrap();
    let y = AttentionMap::<f64>::from_rows_f64(&[&[1.0, 0.0]]).unwrap();
    let expect = -0.5 * (0.9f64.ln() + 0.8f64.ln());
    assert!((bce_loss(&p, &y).unwrap() - expect).abs() < 1e-12);
    assert!((expect - 0.164252).abs() < 1e-6);
    assert!(bce_loss(&p, &t).is_err());
}

mod props {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn cross_entropy_is_at_least_entropy(
            target in proptest::collection::vec(0.0f64..=1.0, 9),
            pred in proptest::collection::vec(0.001f64..0.999, 9),
        ) {
            let y = AttentionMap::new(3, 3, target).unwrap();
            let p = AttentionMap::new(3, 3, pred).unwrap();
            prop_assert!(bce_loss(&p, &y).unwrap() >= bce_loss(&y, &y).unwrap() - 1e-12);
        }
    }
}

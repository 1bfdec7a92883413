use super::*;
use rand::Rng;

fn random_image(cfg: &ModelConfig, rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n = cfg.in_channels * cfg.image_hw * cfg.image_hw;
    let data = (0..n).map(|_| rng.gen_range(0.0..1.0)).collect();
    Tensor::new([cfg.in_channels, cfg.image_hw, cfg.image_hw], data).unwrap()
}

/// Replaces every parameter with N(0, std) noise.
fn randomise(model: &mut EsVitModel<f64>, std: f64, seed: u64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for p in model.params_mut() {
        *p = Tensor::randn(p.shape().to_vec(), std, &mut rng);
    }
}

fn tiny(classes: usize) -> EsVitModel<f64> {
    EsVitModel::new(ModelConfig::tiny(classes), 3).unwrap()
}

#[test]
fn zero_image_and_weights_give_class_token_everywhere() {
    let mut model = tiny(2);
    for name in [
        "patch_embed.weight",
        "patch_embed.bias",
        "pos_embed",
        "cls_token",
    ] {
        let p = model.param_mut(name).unwrap();
        *p = Tensor::zeros(p.shape().to_vec());
    }
    let cls = model.param("cls_token").unwrap().data().to_vec();
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let img = g.constant(Tensor::zeros([3, 32, 32])).unwrap();
    let t = m.patch_embed(&mut g, img).unwrap();
    assert_eq!(g.shape(t), &[17, 16]);
    for row in g.value(t).data().chunks(16) {
        assert_eq!(row, cls.as_slice());
    }
}

#[test]
fn patch_embed_flattens_channel_major_patches() {
    let mut cfg = ModelConfig::tiny(2);
    cfg.hidden_size = 192;
    cfg.mlp_size = 8;
    cfg.se_reduction = 1;
    let mut model = EsVitModel::<f64>::new(cfg.clone(), 0).unwrap();
    for name in ["patch_embed.bias", "pos_embed", "cls_token"] {
        let p = model.param_mut(name).unwrap();
        *p = Tensor::zeros(p.shape().to_vec());
    }
    *model.param_mut("patch_embed.weight").unwrap() = Tensor::eye(192);
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let image = random_image(&cfg, &mut rng);
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let x = g.constant(image.clone()).unwrap();
    let t = m.patch_embed(&mut g, x).unwrap();
    let t = g.value(t);
    // token 1 + gy*4 + gx holds patch (gy, gx) in (c, py, px) order
    for (gy, gx, c, py, px) in [(0, 0, 0, 0, 0), (1, 2, 2, 7, 3), (3, 3, 1, 5, 6)] {
        let token = 1 + gy * 4 + gx;
        let feature = (c * 8 + py) * 8 + px;
        assert_eq!(
            t.at(&[token, feature]),
            image.at(&[c, gy * 8 + py, gx * 8 + px])
        );
    }
}

#[test]
fn single_token_attention_returns_value_row() {
    let mut model = tiny(2);
    randomise(&mut model, 0.5, 1);
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let x = g
        .constant(Tensor::randn(
            [1, 16],
            1.0,
            &mut ChaCha8Rng::seed_from_u64(2),
        ))
        .unwrap();
    let mut attn = Vec::new();
    let a = m.mhsa(&mut g, x, 0, Some(&mut attn)).unwrap();
    for p in &attn {
        assert_eq!(g.value(*p).data(), &[1.0]);
    }
    let (w, b) = (
        m.var("layers.0.attn.v.weight").unwrap(),
        m.var("layers.0.attn.v.bias").unwrap(),
    );
    let v = g.matmul(x, w).unwrap();
    let v = g.add_bias(v, b).unwrap();
    assert!(g.value(a).max_abs_diff(g.value(v)) < 1e-15);
}

#[test]
fn identical_tokens_get_identical_outputs() {
    let mut model = tiny(2);
    randomise(&mut model, 0.5, 4);
    let row = Tensor::<f64>::randn([1, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(5));
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let r = g.constant(row).unwrap();
    let x = g.concat(&[r, r], 0).unwrap();
    let a = m.mhsa(&mut g, x, 1, None).unwrap();
    let out = g.value(a).data();
    assert_eq!(&out[..16], &out[16..]);
}

#[test]
fn zero_weights_make_plain_layer_identity() {
    let mut model = tiny(2);
    for p in model.params_mut() {
        *p = Tensor::zeros(p.shape().to_vec());
    }
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let x = g
        .constant(Tensor::randn(
            [17, 16],
            1.0,
            &mut ChaCha8Rng::seed_from_u64(6),
        ))
        .unwrap();
    let y = m.encoder_layer_plain(&mut g, x, 0, None).unwrap();
    assert_eq!(g.value(y), g.value(x));
}

#[test]
fn conv_embed_contracts() {
    let mut cfg = ModelConfig::tiny(2);
    cfg.conv_bias = false;
    let model = EsVitModel::<f64>::new(cfg.clone(), 9).unwrap();
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let zero = g.constant(Tensor::zeros([3, 32, 32])).unwrap();
    let e = m.conv_embed(&mut g, zero).unwrap();
    assert_eq!(g.shape(e), &[1, 16]);
    assert!(g.value(e).data().iter().all(|&v| v == 0.0));

    cfg.conv_activation = ConvActivation::Identity;
    let model = EsVitModel::<f64>::new(cfg.clone(), 9).unwrap();
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let img = random_image(&cfg, &mut ChaCha8Rng::seed_from_u64(10));
    let x = g.constant(img.clone()).unwrap();
    let x2 = g.constant(img.map(|v| 2.0 * v)).unwrap();
    let e1 = m.conv_embed(&mut g, x).unwrap();
    let e2 = m.conv_embed(&mut g, x2).unwrap();
    let doubled = g.value(e1).map(|v| 2.0 * v);
    assert!(doubled.max_abs_diff(g.value(e2)) < 1e-15);
}

#[test]
fn se_gate_extremes() {
    let mut model = tiny(2);
    randomise(&mut model, 0.5, 11);
    let e_val = Tensor::<f64>::randn([1, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(12));
    for (bias, expect_identity) in [(50.0, true), (-50.0, false)] {
        *model.param_mut("se.expand.weight").unwrap() = Tensor::zeros([4, 16]);
        *model.param_mut("se.expand.bias").unwrap() = Tensor::full([16], bias);
        let mut g = Graph::new();
        let m = model.bind(&mut g, false).unwrap();
        let e = g.constant(e_val.clone()).unwrap();
        let out = m.se_recalibrate(&mut g, e).unwrap();
        if expect_identity {
            assert_eq!(g.value(out), &e_val);
        } else {
            assert!(g.value(out).data().iter().all(|v| v.abs() < 1e-20));
        }
    }
}

#[test]
fn se_matches_hand_rolled_oracle() {
    let mut model = tiny(2);
    randomise(&mut model, 0.5, 13);
    let e_val = Tensor::<f64>::randn([1, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(14));
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let e = g.constant(e_val.clone()).unwrap();
    let out = m.se_recalibrate(&mut g, e).unwrap();

    let p = |n: &str| model.param(n).unwrap().data().to_vec();
    let (w1, b1, w2, b2) = (
        p("se.reduce.weight"),
        p("se.reduce.bias"),
        p("se.expand.weight"),
        p("se.expand.bias"),
    );
    let z = e_val.data();
    let h: Vec<f64> = (0..4)
        .map(|j| (b1[j] + (0..16).map(|i| z[i] * w1[i * 4 + j]).sum::<f64>()).max(0.0))
        .collect();
    for i in 0..16 {
        let s = b2[i] + (0..4).map(|j| h[j] * w2[j * 16 + i]).sum::<f64>();
        let want = z[i] / (1.0 + (-s).exp());
        assert!((g.value(out).data()[i] - want).abs() < 1e-14);
    }
}

#[test]
fn fused_layer_restores_token_count() {
    for axis in [FusionAxis::Token, FusionAxis::Channel] {
        for residual in [ResidualMode::Standard, ResidualMode::StrictEmbedding] {
            let mut cfg = ModelConfig::tiny(2);
            cfg.fusion_axis = axis;
            cfg.residual = residual;
            let model = EsVitModel::<f64>::new(cfg, 15).unwrap();
            let mut g = Graph::new();
            let m = model.bind(&mut g, false).unwrap();
            let t = g
                .constant(Tensor::randn(
                    [17, 16],
                    1.0,
                    &mut ChaCha8Rng::seed_from_u64(16),
                ))
                .unwrap();
            let e = g
                .constant(Tensor::randn(
                    [1, 16],
                    1.0,
                    &mut ChaCha8Rng::seed_from_u64(17),
                ))
                .unwrap();
            let fused = m.fuse_tokens(&mut g, t, Some(e), 0).unwrap();
            let expected = if axis == FusionAxis::Token { 18 } else { 17 };
            assert_eq!(g.shape(fused), &[expected, 16]);
            assert_eq!(m.fuse_tokens(&mut g, t, None, 0).unwrap(), t);
            let y = m.encoder_layer_fused(&mut g, t, Some(e), 0, None).unwrap();
            assert_eq!(g.shape(y), &[17, 16]);
        }
    }
}

#[test]
fn fusion_off_layer_equals_plain_layer() {
    let mut model = tiny(2);
    randomise(&mut model, 0.3, 18);
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let t = g
        .constant(Tensor::randn(
            [17, 16],
            1.0,
            &mut ChaCha8Rng::seed_from_u64(19),
        ))
        .unwrap();
    let a = m.encoder_layer_fused(&mut g, t, None, 0, None).unwrap();
    let b = m.encoder_layer_plain(&mut g, t, 0, None).unwrap();
    assert!(g.value(a).max_abs_diff(g.value(b)) < 1e-12);
}

#[test]
fn zero_embedding_with_identity_projection_is_plain_layer() {
    let mut cfg = ModelConfig::tiny(2);
    cfg.fusion_axis = FusionAxis::Channel;
    let mut model = EsVitModel::<f64>::new(cfg, 20).unwrap();
    let names: Vec<String> = model.specs().iter().map(|s| s.name.clone()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for name in names.iter().filter(|n| !n.contains(".fuse.")) {
        let p = model.param_mut(name).unwrap();
        *p = Tensor::randn(p.shape().to_vec(), 0.3, &mut rng);
    }
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let t = g.constant(Tensor::randn([17, 16], 1.0, &mut rng)).unwrap();
    let e = g.constant(Tensor::zeros([1, 16])).unwrap();
    let fused = m.encoder_layer_fused(&mut g, t, Some(e), 0, None).unwrap();
    let plain = m.encoder_layer_plain(&mut g, t, 0, None).unwrap();
    assert!(g.value(fused).max_abs_diff(g.value(plain)) < 1e-9);
}

#[test]
fn ablated_model_matches_plain_vit() {
    let mut model = tiny(3);
    randomise(&mut model, 0.2, 22);
    let ablated = model.with_fusion(false, 0).unwrap();
    assert!(ablated.num_parameters() < model.num_parameters());
    let mut rng = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..3 {
        let img = random_image(model.config(), &mut rng);
        let a = ablated.logits(&img).unwrap();
        let b = model.logits_plain(&img).unwrap();
        let diff = a
            .iter()
            .zip(&b)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        assert!(diff <= 1e-12, "{diff}");
    }
}

#[test]
fn attention_rows_sum_to_one() {
    let mut model = tiny(2);
    randomise(&mut model, 0.5, 24);
    let img = random_image(model.config(), &mut ChaCha8Rng::seed_from_u64(25));
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let x = g.constant(img).unwrap();
    let out = m.forward(&mut g, x).unwrap();
    assert_eq!(out.attention.len(), 4);
    for a in out.attention {
        assert_eq!(g.shape(a), &[18, 18]);
        for row in g.value(a).data().chunks(18) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }
}

#[test]
fn patch_order_is_irrelevant_given_matching_positions() {
    let mut model = tiny(2);
    randomise(&mut model, 0.3, 26);
    let img = random_image(model.config(), &mut ChaCha8Rng::seed_from_u64(27));
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let x = g.constant(img).unwrap();
    let tokens = m.patch_embed(&mut g, x).unwrap();
    let e = m.global_embedding(&mut g, x).unwrap();
    let base = m.encode(&mut g, tokens, e).unwrap();

    let cls = g.narrow(tokens, 0, 0, 1).unwrap();
    let mut rows = vec![cls];
    for i in (1..17).rev() {
        rows.push(g.narrow(tokens, 0, i, 1).unwrap());
    }
    let shuffled = g.concat(&rows, 0).unwrap();
    let out = m.encode(&mut g, shuffled, e).unwrap();
    assert!(g.value(base.logits).max_abs_diff(g.value(out.logits)) < 1e-9);
}

#[test]
fn se_weights_receive_gradient() {
    let mut model = tiny(2);
    randomise(&mut model, 0.3, 28);
    let img = random_image(model.config(), &mut ChaCha8Rng::seed_from_u64(29));
    let step = model.loss_and_grads(&img, 1).unwrap();
    for (spec, grad) in model.specs().iter().zip(&step.grads) {
        if spec.name.starts_with("se.") || spec.name.starts_with("conv.") {
            assert!(grad.data().iter().any(|&v| v != 0.0), "{}", spec.name);
        }
    }
}

#[test]
fn tiny_parameter_count_matches_hand_count() {
    let cfg = ModelConfig::tiny(3);
    // patch 192*16+16, cls 16, pos 17*16
    let embed = 192 * 16 + 16 + 16 + 17 * 16;
    // norms 2*32, q/k/v/proj 4*(256+16), mlp 16*32+32+32*16+16
    let layer = 64 + 4 * 272 + 1072;
    let head = 32 + 16 * 3 + 3;
    let conv = (27 * 32 + 32) + (288 * 64 + 64) + (576 * 16 + 16);
    let se = (16 * 4 + 4) + (4 * 16 + 16);
    let vit = embed + 2 * layer + head;
    assert_eq!(vit, 7907);
    let count = count_parameters(&cfg);
    assert_eq!(count.total, vit + conv + se);
    assert_eq!(count.fusion_extra(), conv + se);
    let model = EsVitModel::<f64>::new(cfg.clone(), 0).unwrap();
    assert_eq!(model.num_parameters(), count.total);
    assert_eq!(count_parameters(&cfg.with_fusion(false)).total, vit);
}

#[test]
fn vit_b16_parameter_count() {
    let plain = ModelConfig::vit_b16(1000).with_fusion(false);
    let count = count_parameters(&plain);
    assert_eq!(count.total, 86_567_656);
    let enumerated: usize = parameter_specs(&plain).iter().map(ParamSpec::numel).sum();
    assert_eq!(enumerated, count.total);
    let es = count_parameters(&ModelConfig::vit_b16(1000));
    let enumerated: usize = parameter_specs(&ModelConfig::vit_b16(1000))
        .iter()
        .map(ParamSpec::numel)
        .sum();
    assert_eq!(es.total, enumerated);
    assert_eq!(es.total - count.total, es.fusion_extra());
}

#[test]
fn channel_fusion_counts_projection() {
    let mut cfg = ModelConfig::tiny(2);
    cfg.fusion_axis = FusionAxis::Channel;
    let count = count_parameters(&cfg);
    assert_eq!(count.get("fusion_projection"), 2 * (32 * 16 + 16));
    let model = EsVitModel::<f64>::new(cfg, 0).unwrap();
    assert_eq!(model.num_parameters(), count.total);
}

#[test]
fn named_round_trip_and_shape_checks() {
    let model = tiny(2);
    let named: BTreeMap<String, Tensor<f64>> = model
        .named_params()
        .map(|(n, t)| (n.to_string(), t.clone()))
        .collect();
    let rebuilt = EsVitModel::from_named(model.config().clone(), named.clone()).unwrap();
    assert_eq!(rebuilt.params(), model.params());
    let mut bad = named.clone();
    bad.insert("head.bias".into(), Tensor::zeros([5]));
    assert!(matches!(
        EsVitModel::from_named(model.config().clone(), bad),
        Err(NnError::Checkpoint(_))
    ));
    let mut missing = named;
    missing.remove("cls_token");
    assert!(EsVitModel::from_named(model.config().clone(), missing).is_err());
}

#[test]
fn wrong_image_shape_is_rejected() {
    let model = tiny(2);
    assert!(matches!(
        model.logits(&Tensor::zeros([3, 16, 16])),
        Err(NnError::ShapeMismatch { .. })
    ));
}

#[test]
fn model_card_describes_architecture() {
    let card = serde_json::to_value(tiny(2).card()).unwrap();
    assert_eq!(card["norm_placement"], "pre-norm");
    assert_eq!(card["fusion"], "token");
    assert_eq!(
        card["parameters"]["total"],
        count_parameters(&ModelConfig::tiny(2)).total
    );
}

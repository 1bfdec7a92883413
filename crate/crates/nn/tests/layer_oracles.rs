//! Model building blocks against independent plain-array re-implementations.

use esvit_nn::model::{EsVitModel, ModelConfig};
use esvit_nn::{Graph, Tensor};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

type Mat = Vec<Vec<f64>>;

fn to_mat(t: &Tensor<f64>) -> Mat {
    let cols = t.shape()[t.shape().len() - 1];
    t.data().chunks(cols).map(<[f64]>::to_vec).collect()
}

fn matmul(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .map(|row| {
            (0..b[0].len())
                .map(|j| row.iter().zip(b).map(|(x, brow)| x * brow[j]).sum())
                .collect()
        })
        .collect()
}

fn affine(x: &Mat, w: &Tensor<f64>, b: &Tensor<f64>) -> Mat {
    let mut y = matmul(x, &to_mat(w));
    for row in &mut y {
        for (v, bias) in row.iter_mut().zip(b.data()) {
            *v += bias;
        }
    }
    y
}

fn layer_norm(x: &Mat, gain: &Tensor<f64>, bias: &Tensor<f64>) -> Mat {
    x.iter()
        .map(|row| {
            let n = row.len() as f64;
            let mean = row.iter().sum::<f64>() / n;
            let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
            row.iter()
                .enumerate()
                .map(|(j, v)| (v - mean) / (var + 1e-6).sqrt() * gain.data()[j] + bias.data()[j])
                .collect()
        })
        .collect()
}

fn softmax(row: &[f64]) -> Vec<f64> {
    let e: Vec<f64> = row.iter().map(|v| v.exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

fn add(a: &Mat, b: &Mat) -> Mat {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + libm::erf(x / 2f64.sqrt()))
}

fn attention(x: &Mat, model: &EsVitModel<f64>, layer: usize, heads: usize) -> Mat {
    let p = |n: &str| model.param(&format!("layers.{layer}.{n}")).unwrap();
    let q = affine(x, p("attn.q.weight"), p("attn.q.bias"));
    let k = affine(x, p("attn.k.weight"), p("attn.k.bias"));
    let v = affine(x, p("attn.v.weight"), p("attn.v.bias"));
    let d = q[0].len() / heads;
    let n = x.len();
    let mut out = vec![vec![0.0; q[0].len()]; n];
    for h in 0..heads {
        for i in 0..n {
            let scores: Vec<f64> = (0..n)
                .map(|j| {
                    (0..d)
                        .map(|c| q[i][h * d + c] * k[j][h * d + c])
                        .sum::<f64>()
                        / (d as f64).sqrt()
                })
                .collect();
            let w = softmax(&scores);
            for c in 0..d {
                out[i][h * d + c] = (0..n).map(|j| w[j] * v[j][h * d + c]).sum();
            }
        }
    }
    out
}

fn random_model(cfg: ModelConfig, seed: u64) -> EsVitModel<f64> {
    let mut model = EsVitModel::<f64>::new(cfg, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed + 100);
    for p in model.params_mut() {
        *p = Tensor::randn(p.shape().to_vec(), 0.4, &mut rng);
    }
    model
}

#[test]
fn mhsa_matches_brute_force_three_tokens() {
    let mut cfg = ModelConfig::tiny(2);
    cfg.hidden_size = 4;
    cfg.num_heads = 1;
    cfg.mlp_size = 8;
    cfg.se_reduction = 2;
    let model = random_model(cfg, 1);
    let x = Tensor::<f64>::randn([3, 4], 1.0, &mut ChaCha8Rng::seed_from_u64(2));
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let xv = g.constant(x.clone()).unwrap();
    let a = m.mhsa(&mut g, xv, 0, None).unwrap();
    let want = attention(&to_mat(&x), &model, 0, 1);
    for (got, w) in to_mat(g.value(a)).iter().zip(&want) {
        for (a, b) in got.iter().zip(w) {
            assert!((a - b).abs() < 1e-13);
        }
    }
}

#[test]
fn plain_layer_matches_step_by_step_composition() {
    let model = random_model(ModelConfig::tiny(2), 3);
    let x = Tensor::<f64>::randn([17, 16], 1.0, &mut ChaCha8Rng::seed_from_u64(4));
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let xv = g.constant(x.clone()).unwrap();
    let y = m.encoder_layer_plain(&mut g, xv, 1, None).unwrap();

    let p = |n: &str| model.param(&format!("layers.1.{n}")).unwrap();
    let t = to_mat(&x);
    let h = layer_norm(&t, p("norm1.gain"), p("norm1.bias"));
    let a = attention(&h, &model, 1, 2);
    let a = add(&affine(&a, p("attn.proj.weight"), p("attn.proj.bias")), &t);
    let h = layer_norm(&a, p("norm2.gain"), p("norm2.bias"));
    let mut h = affine(&h, p("mlp.fc1.weight"), p("mlp.fc1.bias"));
    h.iter_mut().flatten().for_each(|v| *v = gelu(*v));
    let want = add(&affine(&h, p("mlp.fc2.weight"), p("mlp.fc2.bias")), &a);

    for (got, w) in to_mat(g.value(y)).iter().zip(&want) {
        for (a, b) in got.iter().zip(w) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

#[test]
fn token_fusion_layer_matches_composition() {
    let model = random_model(ModelConfig::tiny(2), 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = Tensor::<f64>::randn([17, 16], 1.0, &mut rng);
    let e = Tensor::<f64>::randn([1, 16], 1.0, &mut rng);
    let mut g = Graph::new();
    let m = model.bind(&mut g, false).unwrap();
    let xv = g.constant(x.clone()).unwrap();
    let ev = g.constant(e.clone()).unwrap();
    let y = m
        .encoder_layer_fused(&mut g, xv, Some(ev), 0, None)
        .unwrap();

    let p = |n: &str| model.param(&format!("layers.0.{n}")).unwrap();
    let mut t = to_mat(&x);
    t.push(e.data().to_vec());
    let h = layer_norm(&t, p("norm1.gain"), p("norm1.bias"));
    let a = attention(&h, &model, 0, 2);
    let a = add(&affine(&a, p("attn.proj.weight"), p("attn.proj.bias")), &t);
    let h = layer_norm(&a, p("norm2.gain"), p("norm2.bias"));
    let mut h = affine(&h, p("mlp.fc1.weight"), p("mlp.fc1.bias"));
    h.iter_mut().flatten().for_each(|v| *v = gelu(*v));
    let mut want = add(&affine(&h, p("mlp.fc2.weight"), p("mlp.fc2.bias")), &a);
    for row in &mut want {
        for (v, ev) in row.iter_mut().zip(e.data()) {
            *v += ev;
        }
    }
    want.truncate(17);

    let got = to_mat(g.value(y));
    assert_eq!(got.len(), 17);
    for (got, w) in got.iter().zip(&want) {
        for (a, b) in got.iter().zip(w) {
            assert!((a - b).abs() < 1e-12, "{a} vs {b}");
        }
    }
}

use super::*;

fn t(shape: &[usize], data: &[f64]) -> Tensor<f64> {
    Tensor::from_f64(shape.to_vec(), data).unwrap()
}

#[test]
fn matmul_forward_and_backward() {
    let mut g = Graph::<f64>::new();
    let a = g.param(t(&[2, 3], &[1., 2., 3., 4., 5., 6.])).unwrap();
    let b = g.param(t(&[3, 2], &[7., 8., 9., 10., 11., 12.])).unwrap();
    let c = g.matmul(a, b).unwrap();
    assert_eq!(g.value(c).data(), &[58., 64., 139., 154.]);
    let s = g.sum(c).unwrap();
    g.backward(s).unwrap();
    // d sum(AB) / dA = 1 B^T, d/dB = A^T 1
    assert_eq!(g.grad(a).unwrap().data(), &[15., 19., 23., 15., 19., 23.]);
    assert_eq!(g.grad(b).unwrap().data(), &[5., 5., 7., 7., 9., 9.]);
}

#[test]
fn shared_node_accumulates() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[1], &[3.0])).unwrap();
    let y = g.mul(x, x).unwrap();
    let z = g.add(y, x).unwrap();
    g.backward(z).unwrap();
    assert_eq!(g.grad(x).unwrap().item(), 7.0);
}

#[test]
fn constants_get_no_gradient() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[2], &[1., 2.])).unwrap();
    let c = g.constant(t(&[2], &[3., 4.])).unwrap();
    let y = g.mul(x, c).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    assert_eq!(g.grad(x).unwrap().data(), &[3., 4.]);
    assert!(g.grad(c).is_none());
}

#[test]
fn non_scalar_loss_is_rejected() {
    let mut g = Graph::<f64>::new();
    let x = g.param(t(&[2], &[1., 2.])).unwrap();
    assert!(matches!(g.backward(x), Err(NnError::NonScalarLoss { .. })));
}

#[test]
fn shape_mismatch_is_reported() {
    let mut g = Graph::<f64>::new();
    let a = g.param(Tensor::zeros([2, 3])).unwrap();
    let b = g.param(Tensor::zeros([2, 3])).unwrap();
    assert!(matches!(g.matmul(a, b), Err(NnError::ShapeMismatch { .. })));
}

#[test]
fn non_finite_forward_is_an_error() {
    let mut g = Graph::<f64>::new();
    let a = g.param(t(&[1], &[1e200])).unwrap();
    let b = g.mul(a, a);
    assert!(matches!(b, Err(NnError::NonFinite { op: "mul" })));
}

#[test]
fn softmax_rows_sum_to_one_and_survive_large_inputs() {
    let mut g = Graph::<f64>::new();
    let x = g
        .constant(t(&[2, 3], &[1000., 1001., 1002., -5., 0., 5.]))
        .unwrap();
    let y = g.softmax_rows(x).unwrap();
    for row in g.value(y).data().chunks(3) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn layer_norm_rows_are_standardised() {
    let mut g = Graph::<f64>::new();
    let x = g
        .constant(t(&[2, 4], &[1., 2., 3., 4., -1., 0., 0., 5.]))
        .unwrap();
    let gain = g.constant(Tensor::ones([4])).unwrap();
    let bias = g.constant(Tensor::zeros([4])).unwrap();
    let y = g.layer_norm(x, gain, bias, 1e-12).unwrap();
    for row in g.value(y).data().chunks(4) {
        let mean = row.iter().sum::<f64>() / 4.0;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 4.0;
        assert!(mean.abs() < 1e-12 && (var - 1.0).abs() < 1e-9);
    }
}

#[test]
fn concat_and_narrow_round_trip() {
    let mut g = Graph::<f64>::new();
    let a = g.constant(t(&[2, 2], &[1., 2., 3., 4.])).unwrap();
    let b = g.constant(t(&[2, 1], &[5., 6.])).unwrap();
    let c = g.concat(&[a, b], 1).unwrap();
    assert_eq!(g.value(c).data(), &[1., 2., 5., 3., 4., 6.]);
    let back = g.narrow(c, 1, 0, 2).unwrap();
    assert_eq!(g.value(back).data(), g.value(a).data());
    let rows = g.concat(&[a, a], 0).unwrap();
    assert_eq!(g.shape(rows), &[4, 2]);
}

#[test]
fn permute_matches_index_formula() {
    let mut g = Graph::<f64>::new();
    let data: Vec<f64> = (0..24).map(f64::from).collect();
    let x = g.constant(t(&[2, 3, 4], &data)).unwrap();
    let y = g.permute(x, &[2, 0, 1]).unwrap();
    assert_eq!(g.shape(y), &[4, 2, 3]);
    let (vx, vy) = (g.value(x), g.value(y));
    for i in 0..2 {
        for j in 0..3 {
            for k in 0..4 {
                assert_eq!(vy.at(&[k, i, j]), vx.at(&[i, j, k]));
            }
        }
    }
    assert!(g.permute(x, &[0, 0, 1]).is_err());
}

#[test]
fn mean_removes_axes() {
    let mut g = Graph::<f64>::new();
    let x = g.constant(t(&[2, 3], &[1., 2., 3., 4., 5., 6.])).unwrap();
    let m0 = g.mean(x, &[0]).unwrap();
    assert_eq!(g.value(m0).data(), &[2.5, 3.5, 4.5]);
    let m1 = g.mean(x, &[1]).unwrap();
    assert_eq!(g.value(m1).data(), &[2., 5.]);
    let all = g.mean(x, &[0, 1]).unwrap();
    assert_eq!(g.shape(all), &[1]);
    assert_eq!(g.value(all).item(), 3.5);
}

#[test]
fn conv2d_matches_direct_loop() {
    let mut g = Graph::<f64>::new();
    let x_data: Vec<f64> = (0..2 * 5 * 5).map(|i| (i as f64 * 0.37).sin()).collect();
    let w_data: Vec<f64> = (0..3 * 2 * 3 * 3)
        .map(|i| (i as f64 * 0.11).cos())
        .collect();
    let x = g.constant(t(&[2, 5, 5], &x_data)).unwrap();
    let w = g.constant(t(&[3, 2, 3, 3], &w_data)).unwrap();
    let b = g.constant(t(&[3], &[0.1, -0.2, 0.3])).unwrap();
    let y = g.conv2d(x, w, Some(b), 2, 1).unwrap();
    assert_eq!(g.shape(y), &[3, 3, 3]);
    let (vx, vw, vy) = (g.value(x), g.value(w), g.value(y));
    for co in 0..3 {
        for oy in 0..3 {
            for ox in 0..3 {
                let mut acc = [0.1, -0.2, 0.3][co];
                for ci in 0..2 {
                    for ky in 0..3 {
                        for kx in 0..3 {
                            let iy = (oy * 2 + ky) as isize - 1;
                            let ix = (ox * 2 + kx) as isize - 1;
                            if (0..5).contains(&iy) && (0..5).contains(&ix) {
                                acc += vw.at(&[co, ci, ky, kx])
                                    * vx.at(&[ci, iy as usize, ix as usize]);
                            }
                        }
                    }
                }
                assert!((vy.at(&[co, oy, ox]) - acc).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn cross_entropy_of_uniform_logits_is_log_k() {
    let mut g = Graph::<f64>::new();
    let x = g.param(Tensor::zeros([3, 4])).unwrap();
    let l = g.cross_entropy(x, &[0, 1, 3]).unwrap();
    assert!((g.value(l).item() - 4f64.ln()).abs() < 1e-12);
    assert!(matches!(
        g.cross_entropy(x, &[0, 1, 4]),
        Err(NnError::LabelOutOfRange { label: 4, .. })
    ));
    g.backward(l).unwrap();
    let grad = g.grad(x).unwrap();
    assert!((grad.at(&[0, 0]) - (0.25 - 1.0) / 3.0).abs() < 1e-12);
    assert!((grad.at(&[0, 1]) - 0.25 / 3.0).abs() < 1e-12);
}

#[test]
fn f32_graph_runs() {
    let mut g = Graph::<f32>::new();
    let x = g
        .param(Tensor::from_f64([2], &[0.5, -0.5]).unwrap())
        .unwrap();
    let y = g.gelu(x).unwrap();
    let s = g.sum(y).unwrap();
    g.backward(s).unwrap();
    let grad = g.grad(x).unwrap().data();
    assert!((grad[0] + grad[1] - 1.0).abs() < 1e-6);
}

//! Central finite-difference validation of analytic gradients.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::model::{EsVitModel, ModelConfig};
use crate::{Graph, NnError, Result, Tensor, Var};

/// Denominator floor of the relative error. Coordinates whose true gradient
/// is smaller than this are judged on absolute error instead.
pub const REL_ERROR_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckOptions {
    pub step: f64,
    pub tol: f64,
    /// Check at most this many coordinates, sampled uniformly over all inputs.
    pub max_coords: Option<usize>,
    pub seed: u64,
}

impl Default for GradCheckOptions {
    fn default() -> Self {
        Self {
            step: 1e-3,
            tol: 1e-4,
            max_coords: None,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckEntry {
    pub input: usize,
    pub coord: usize,
    pub analytic: f64,
    pub numeric: f64,
    pub rel_error: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct GradCheckReport {
    pub entries: Vec<GradCheckEntry>,
    pub max_rel_error: f64,
    pub tol: f64,
    pub passed: bool,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(REL_ERROR_FLOOR)
}

/// Compares the gradient of the scalar built by `f` with respect to every
/// input against central differences of step `opts.step`.
pub fn gradient_check<F>(
    f: F,
    inputs: &[Tensor<f64>],
    opts: &GradCheckOptions,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &[Var]) -> Result<Var>,
{
    if opts.step <= 0.0 || opts.tol <= 0.0 {
        return Err(NnError::Config(
            "gradient check step and tol must be positive".into(),
        ));
    }
    let eval = |inputs: &[Tensor<f64>]| -> Result<(Graph<f64>, Vec<Var>, Var)> {
        let mut g = Graph::new();
        let vars = inputs
            .iter()
            .map(|t| g.param(t.clone()))
            .collect::<Result<Vec<_>>>()?;
        let loss = f(&mut g, &vars)?;
        Ok((g, vars, loss))
    };

    let (mut g, vars, loss) = eval(inputs)?;
    g.backward(loss)?;
    let analytic: Vec<Tensor<f64>> = inputs
        .iter()
        .zip(&vars)
        .map(|(t, &v)| {
            g.grad(v)
                .cloned()
                .unwrap_or_else(|| Tensor::zeros(t.shape().to_vec()))
        })
        .collect();

    let coords: Vec<(usize, usize)> = inputs
        .iter()
        .enumerate()
        .flat_map(|(i, t)| (0..t.numel()).map(move |c| (i, c)))
        .collect();
    let chosen: Vec<(usize, usize)> = match opts.max_coords {
        Some(k) if k < coords.len() => {
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            let mut picked = sample(&mut rng, coords.len(), k).into_vec();
            picked.sort_unstable();
            picked.into_iter().map(|j| coords[j]).collect()
        }
        _ => coords,
    };

    let mut work = inputs.to_vec();
    let mut entries = Vec::with_capacity(chosen.len());
    for (input, coord) in chosen {
        let original = work[input].data()[coord];
        work[input].data_mut()[coord] = original + opts.step;
        let (g_plus, _, l_plus) = eval(&work)?;
        work[input].data_mut()[coord] = original - opts.step;
        let (g_minus, _, l_minus) = eval(&work)?;
        work[input].data_mut()[coord] = original;
        let numeric =
            (g_plus.value(l_plus).item() - g_minus.value(l_minus).item()) / (2.0 * opts.step);
        let a = analytic[input].data()[coord];
        entries.push(GradCheckEntry {
            input,
            coord,
            analytic: a,
            numeric,
            rel_error: relative_error(a, numeric),
        });
    }
    let max_rel_error = entries.iter().map(|e| e.rel_error).fold(0.0, f64::max);
    Ok(GradCheckReport {
        passed: max_rel_error < opts.tol,
        max_rel_error,
        tol: opts.tol,
        entries,
    })
}

/// Reduces `x` to a scalar through fixed random weights so every output
/// coordinate reaches the loss with a distinct coefficient.
pub fn weighted_sum(g: &mut Graph<f64>, x: Var, seed: u64) -> Result<Var> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = Tensor::randn(g.shape(x).to_vec(), 1.0, &mut rng);
    let w = g.constant(w)?;
    let p = g.mul(x, w)?;
    g.sum(p)
}

type Case = (
    &'static str,
    Vec<Tensor<f64>>,
    Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>>,
);

fn uniform(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    Tensor::randn(shape.to_vec(), 1.0, rng)
}

/// Values bounded away from zero so a step never crosses the ReLU kink.
fn off_kink(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let m: f64 = rng.gen_range(0.1..2.0);
            if rng.gen_bool(0.5) {
                m
            } else {
                -m
            }
        })
        .collect();
    Tensor::new(shape.to_vec(), data).expect("shape matches")
}

fn unary(
    op: fn(&mut Graph<f64>, Var) -> Result<Var>,
    seed: u64,
) -> Box<dyn Fn(&mut Graph<f64>, &[Var]) -> Result<Var>> {
    Box::new(move |g, v| {
        let y = op(g, v[0])?;
        weighted_sum(g, y, seed)
    })
}

fn cases(seed: u64) -> Vec<Case> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let r = &mut rng;
    let mut out: Vec<Case> = Vec::new();
    let s = seed;

    for (m, k, n) in [(1, 1, 1), (3, 4, 2), (5, 2, 6)] {
        out.push((
            "matmul",
            vec![uniform(&[m, k], r), uniform(&[k, n], r)],
            Box::new(move |g, v| {
                let y = g.matmul(v[0], v[1])?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for shape in [vec![4], vec![2, 3], vec![2, 2, 3]] {
        out.push((
            "add",
            vec![uniform(&shape, r), uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.add(v[0], v[1])?;
                weighted_sum(g, y, s)
            }),
        ));
        out.push((
            "mul",
            vec![uniform(&shape, r), uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.mul(v[0], v[1])?;
                weighted_sum(g, y, s)
            }),
        ));
        out.push((
            "scale",
            vec![uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.scale(v[0], -1.7)?;
                weighted_sum(g, y, s)
            }),
        ));
        out.push(("gelu", vec![uniform(&shape, r)], unary(Graph::gelu, s)));
        out.push(("relu", vec![off_kink(&shape, r)], unary(Graph::relu, s)));
        out.push((
            "sigmoid",
            vec![uniform(&shape, r)],
            unary(Graph::sigmoid, s),
        ));
        out.push((
            "softmax_rows",
            vec![uniform(&shape, r)],
            unary(Graph::softmax_rows, s),
        ));
        out.push((
            "sum",
            vec![uniform(&shape, r)],
            Box::new(|g, v| {
                let y = g.mul(v[0], v[0])?;
                g.sum(y)
            }),
        ));
        let c = *shape.last().expect("non-empty shape");
        out.push((
            "add_bias",
            vec![uniform(&shape, r), uniform(&[c], r)],
            Box::new(move |g, v| {
                let y = g.add_bias(v[0], v[1])?;
                weighted_sum(g, y, s)
            }),
        ));
        out.push((
            "layer_norm",
            vec![uniform(&shape, r), uniform(&[c], r), uniform(&[c], r)],
            Box::new(move |g, v| {
                let y = g.layer_norm(v[0], v[1], v[2], 1e-6)?;
                weighted_sum(g, y, s)
            }),
        ));
        let numel: usize = shape.iter().product();
        out.push((
            "reshape",
            vec![uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.reshape(v[0], &[numel])?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for (a, b, axis) in [
        (vec![2, 3], vec![1, 3], 0),
        (vec![2, 3], vec![2, 2], 1),
        (vec![2, 1, 3], vec![2, 2, 3], 1),
    ] {
        out.push((
            "concat",
            vec![uniform(&a, r), uniform(&b, r)],
            Box::new(move |g, v| {
                let y = g.concat(&[v[0], v[1], v[0]], axis)?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for (shape, axis, start, len) in [
        (vec![4, 3], 0, 1, 2),
        (vec![3, 5], 1, 2, 3),
        (vec![2, 3, 4], 2, 0, 1),
    ] {
        out.push((
            "narrow",
            vec![uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.narrow(v[0], axis, start, len)?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for (shape, axes) in [
        (vec![2, 3], vec![1, 0]),
        (vec![2, 3, 4], vec![2, 0, 1]),
        (vec![2, 2, 3, 2], vec![1, 3, 0, 2]),
    ] {
        out.push((
            "permute",
            vec![uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.permute(v[0], &axes)?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for shape in [vec![1, 1], vec![3, 4], vec![5, 2]] {
        out.push((
            "transpose",
            vec![uniform(&shape, r)],
            unary(Graph::transpose, s),
        ));
    }
    for (shape, axes) in [
        (vec![4, 3], vec![0]),
        (vec![2, 3, 4], vec![1, 2]),
        (vec![2, 3], vec![0, 1]),
    ] {
        out.push((
            "mean",
            vec![uniform(&shape, r)],
            Box::new(move |g, v| {
                let y = g.mean(v[0], &axes)?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for (x, w, bias, stride, pad) in [
        (vec![1, 5, 5], vec![1, 1, 3, 3], false, 1, 0),
        (vec![2, 6, 5], vec![3, 2, 3, 3], true, 2, 1),
        (vec![3, 4, 4], vec![2, 3, 2, 2], true, 1, 1),
    ] {
        let mut inputs = vec![uniform(&x, r), uniform(&w, r)];
        if bias {
            inputs.push(uniform(&[w[0]], r));
        }
        out.push((
            "conv2d",
            inputs,
            Box::new(move |g, v| {
                let y = g.conv2d(v[0], v[1], v.get(2).copied(), stride, pad)?;
                weighted_sum(g, y, s)
            }),
        ));
    }
    for (n, k) in [(1, 2), (3, 3), (4, 5)] {
        let labels: Vec<usize> = (0..n).map(|i| (i * 7 + 1) % k).collect();
        out.push((
            "cross_entropy",
            vec![uniform(&[n, k], r)],
            Box::new(move |g, v| g.cross_entropy(v[0], &labels)),
        ));
    }
    // A node feeding two consumers.
    out.push((
        "diamond",
        vec![uniform(&[3, 3], r)],
        Box::new(move |g, v| {
            let a = g.gelu(v[0])?;
            let b = g.sigmoid(a)?;
            let c = g.matmul(a, b)?;
            let d = g.add(c, a)?;
            weighted_sum(g, d, s)
        }),
    ));
    out
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteResult {
    pub op: String,
    pub shapes: Vec<Vec<usize>>,
    pub report: GradCheckReport,
}

/// Runs the finite-difference check over every differentiable primitive on
/// at least three shapes each, in 64-bit with step `1e-3`.
pub fn primitive_suite(seed: u64, tol: f64) -> Result<Vec<SuiteResult>> {
    let opts = GradCheckOptions {
        tol,
        ..GradCheckOptions::default()
    };
    cases(seed)
        .into_iter()
        .map(|(op, inputs, f)| {
            let report = gradient_check(f, &inputs, &opts)?;
            Ok(SuiteResult {
                op: op.to_string(),
                shapes: inputs.iter().map(|t| t.shape().to_vec()).collect(),
                report,
            })
        })
        .collect()
}

/// End-to-end check of the classifier loss on two random images with every
/// parameter redrawn from N(0, 0.3^2), sampling `coords` coordinates.
pub fn model_check(
    cfg: &ModelConfig,
    seed: u64,
    coords: usize,
    tol: f64,
) -> Result<GradCheckReport> {
    let mut model = EsVitModel::<f64>::new(cfg.clone(), seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    for p in model.params_mut() {
        *p = Tensor::randn(p.shape().to_vec(), 0.3, &mut rng);
    }
    let pixels = cfg.in_channels * cfg.image_hw * cfg.image_hw;
    let shape = [cfg.in_channels, cfg.image_hw, cfg.image_hw];
    let images: Vec<Tensor<f64>> = (0..2)
        .map(|_| {
            Tensor::new(
                shape,
                (0..pixels).map(|_| rng.gen_range(0.0..1.0)).collect(),
            )
        })
        .collect::<Result<_>>()?;
    let labels: Vec<usize> = (0..images.len()).map(|i| i % cfg.num_classes).collect();
    let opts = GradCheckOptions {
        step: 1e-3,
        tol,
        max_coords: Some(coords),
        seed,
    };
    let f = |g: &mut Graph<f64>, vars: &[Var]| -> Result<Var> {
        let m = model.bind_vars(vars.to_vec())?;
        let mut logits = Vec::with_capacity(images.len());
        for img in &images {
            let x = g.constant(img.clone())?;
            logits.push(m.forward(g, x)?.logits);
        }
        let all = g.concat(&logits, 0)?;
        g.cross_entropy(all, &labels)
    };
    gradient_check(f, model.params(), &opts)
}

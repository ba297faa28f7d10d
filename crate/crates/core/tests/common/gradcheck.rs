//! Naive f64 reference network and central finite differences. Shares no
//! code with the library's im2col/GEMM path.

use metanav::nn::{backward, forward, init_network, Layer, NetworkParams, NetworkSpec, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct RefOut {
    q: Vec<f64>,
    /// Pre-activation values of every ReLU input, for kink detection.
    relu_inputs: Vec<f64>,
}

fn reference_forward(spec: &NetworkSpec, params: &[Vec<f64>], x: &[f64]) -> RefOut {
    let [mut h, mut w, mut c] = spec.input_shape;
    let mut act = x.to_vec();
    let mut spatial = true;
    let mut relu_inputs = Vec::new();
    let mut p = 0;
    for layer in &spec.layers {
        match *layer {
            Layer::Conv { out_channels, kernel, stride } => {
                let wt = &params[p];
                let b = &params[p + 1];
                p += 2;
                let oh = (h - kernel) / stride + 1;
                let ow = (w - kernel) / stride + 1;
                let mut out = vec![0.0; oh * ow * out_channels];
                for oy in 0..oh {
                    for ox in 0..ow {
                        for oc in 0..out_channels {
                            let mut s = b[oc];
                            for ky in 0..kernel {
                                for kx in 0..kernel {
                                    for ic in 0..c {
                                        let xi = ((oy * stride + ky) * w + ox * stride + kx) * c + ic;
                                        let wi = ((ky * kernel + kx) * c + ic) * out_channels + oc;
                                        s += act[xi] * wt[wi];
                                    }
                                }
                            }
                            out[(oy * ow + ox) * out_channels + oc] = s;
                        }
                    }
                }
                act = out;
                h = oh;
                w = ow;
                c = out_channels;
            }
            Layer::Dense { out_units: n } | Layer::LinearHead { n_actions: n } => {
                let wt = &params[p];
                let b = &params[p + 1];
                p += 2;
                let n_in = act.len();
                act = (0..n)
                    .map(|j| b[j] + (0..n_in).map(|i| act[i] * wt[i * n + j]).sum::<f64>())
                    .collect();
                spatial = false;
            }
            Layer::DuelingHead { n_actions } => {
                let wt = &params[p];
                let b = &params[p + 1];
                p += 2;
                let width = n_actions + 1;
                let n_in = act.len();
                let z: Vec<f64> = (0..width)
                    .map(|j| b[j] + (0..n_in).map(|i| act[i] * wt[i * width + j]).sum::<f64>())
                    .collect();
                let mean = z[1..].iter().sum::<f64>() / n_actions as f64;
                act = z[1..].iter().map(|a| z[0] + a - mean).collect();
                spatial = false;
            }
            Layer::Relu => {
                relu_inputs.extend_from_slice(&act);
                act = act.iter().map(|&v| v.max(0.0)).collect();
            }
        }
    }
    let _ = spatial;
    RefOut { q: act, relu_inputs }
}

pub struct CheckReport {
    pub max_rel_err: f64,
    pub checked: usize,
    pub skipped_kinks: usize,
}

/// Relative error with a floor on the denominator for near-zero gradients.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-2)
}

/// Compares analytic gradients of `sum(c * q)` against central differences
/// (step `h`) of the f64 reference for every parameter.
pub fn check_gradients(spec: &NetworkSpec, seed: u64, h: f64) -> CheckReport {
    let params = init_network(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    // biases are zero at init; perturb them so their gradients are exercised
    let mut tensors: Vec<Tensor> = params.tensors().to_vec();
    for t in tensors.iter_mut() {
        for v in t.data_mut() {
            *v += rng.gen_range(-0.1f32..0.1);
        }
    }
    let params = NetworkParams::from_tensors(spec.clone(), tensors).unwrap();
    let n_in = spec.input_len();
    let x: Vec<f32> = (0..n_in).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    let n_actions = spec.n_actions();
    let coef: Vec<f32> = (0..n_actions).map(|_| rng.gen_range(-1.0f32..1.0)).collect();

    let [hh, ww, cc] = spec.input_shape;
    let obs = Tensor::new(vec![hh, ww, cc], x.clone()).unwrap();
    let (_, tape) = forward(&params, &obs).unwrap();
    let grads = backward(&tape, &Tensor::new(vec![1, n_actions], coef.clone()).unwrap()).unwrap();

    let x64: Vec<f64> = x.iter().map(|&v| v as f64).collect();
    let c64: Vec<f64> = coef.iter().map(|&v| v as f64).collect();
    let mut p64: Vec<Vec<f64>> = params.tensors().iter().map(|t| t.data().iter().map(|&v| v as f64).collect()).collect();
    let loss = |p: &[Vec<f64>]| -> (f64, Vec<bool>) {
        let out = reference_forward(spec, p, &x64);
        let l = out.q.iter().zip(&c64).map(|(q, c)| q * c).sum();
        (l, out.relu_inputs.iter().map(|&v| v > 0.0).collect())
    };
    let mut report = CheckReport { max_rel_err: 0.0, checked: 0, skipped_kinks: 0 };
    for ti in 0..p64.len() {
        for j in 0..p64[ti].len() {
            let orig = p64[ti][j];
            p64[ti][j] = orig + h;
            let (lp, mp) = loss(&p64);
            p64[ti][j] = orig - h;
            let (lm, mm) = loss(&p64);
            p64[ti][j] = orig;
            if mp != mm {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (lp - lm) / (2.0 * h);
            let analytic = grads.tensors[ti].data()[j] as f64;
            report.max_rel_err = report.max_rel_err.max(rel_err(analytic, numeric));
            report.checked += 1;
        }
    }
    report
}

/// Small nets covering every layer type: one conv, one dense, ReLU, and the given head.
pub fn small_spec(dueling: bool) -> NetworkSpec {
    let head = if dueling { Layer::DuelingHead { n_actions: 3 } } else { Layer::LinearHead { n_actions: 3 } };
    NetworkSpec {
        input_shape: [7, 6, 2],
        layers: vec![
            Layer::Conv { out_channels: 3, kernel: 3, stride: 2 },
            Layer::Relu,
            Layer::Dense { out_units: 5 },
            Layer::Relu,
            head,
        ],
    }
}

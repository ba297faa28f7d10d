use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::error::{NnError, Result};
use super::spec::{ActShape, Layer, NetworkSpec};
use super::tensor::Tensor;

/// Weights and biases of a [`NetworkSpec`], one `(weight, bias)` pair per
/// parameterized layer. Conv weights are `[k, k, c_in, c_out]`, dense and
/// head weights are `[in, out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct NetworkParams {
    spec: NetworkSpec,
    names: Vec<String>,
    tensors: Vec<Tensor>,
    /// For every spec layer, the index of its weight tensor (bias follows).
    slots: Vec<Option<usize>>,
}

impl NetworkParams {
    /// Builds a parameter set from explicit tensors (weight, bias per layer).
    pub fn from_tensors(spec: NetworkSpec, tensors: Vec<Tensor>) -> Result<Self> {
        let shapes = spec.param_shapes()?;
        if tensors.len() != shapes.len() * 2 {
            return Err(NnError::Shape {
                expected: vec![shapes.len() * 2],
                found: vec![tensors.len()],
            });
        }
        let mut names = Vec::with_capacity(tensors.len());
        let mut slots = vec![None; spec.layers.len()];
        for (k, (layer, wshape, bshape)) in shapes.iter().enumerate() {
            for (t, expected) in [(&tensors[2 * k], wshape), (&tensors[2 * k + 1], bshape)] {
                if t.shape() != expected.as_slice() {
                    return Err(NnError::Shape {
                        expected: expected.clone(),
                        found: t.shape().to_vec(),
                    });
                }
            }
            names.push(format!("layer{layer}.weight"));
            names.push(format!("layer{layer}.bias"));
            slots[*layer] = Some(2 * k);
        }
        Ok(Self {
            spec,
            names,
            tensors,
            slots,
        })
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.spec
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn n_actions(&self) -> usize {
        self.spec.n_actions()
    }

    pub fn num_scalars(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    fn layer_params(&self, layer: usize) -> (&Tensor, &Tensor) {
        let k = self.slots[layer].expect("layer has parameters");
        (&self.tensors[k], &self.tensors[k + 1])
    }
}

/// Fan-in scaled uniform weights in `(-b, b)`, `b = sqrt(6 / fan_in)`, zero biases.
pub fn init_network(spec: &NetworkSpec, seed: u64) -> Result<NetworkParams> {
    let shapes = spec.param_shapes()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tensors = Vec::with_capacity(shapes.len() * 2);
    for (_, wshape, bshape) in shapes {
        let fan_in: usize = wshape[..wshape.len() - 1].iter().product();
        let bound = (6.0 / fan_in as f64).sqrt() as f32;
        let n: usize = wshape.iter().product();
        let data = (0..n).map(|_| rng.gen_range(-bound..=bound)).collect();
        tensors.push(Tensor::new(wshape, data)?);
        tensors.push(Tensor::zeros(bshape));
    }
    NetworkParams::from_tensors(spec.clone(), tensors)
}

/// `v + adv[a] - mean(adv)`.
pub fn dueling_combine(v: f32, adv: &[f32]) -> Vec<f32> {
    if adv.is_empty() {
        return Vec::new();
    }
    let mean = adv.iter().sum::<f32>() / adv.len() as f32;
    adv.iter().map(|a| v + a - mean).collect()
}

/// `C (m x n) (+)= op(A) (m x k) * op(B) (k x n)`, row-major storage.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f32],
    a_trans: bool,
    b: &[f32],
    b_trans: bool,
    c: &mut [f32],
    accumulate: bool,
) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let (rsa, csa) = if a_trans { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_trans { (1, k as isize) } else { (n as isize, 1) };
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: slice lengths are checked above and strides describe exactly
    // those row-major layouts.
    unsafe {
        matrixmultiply::sgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

enum Cache {
    Conv {
        cols: Vec<f32>,
        in_shape: (usize, usize, usize),
        out_hw: (usize, usize),
    },
    Dense {
        input: Vec<f32>,
    },
    Relu {
        output: Vec<f32>,
    },
    Dueling {
        input: Vec<f32>,
    },
}

/// Everything `backward` needs from one batched forward pass.
pub struct ComputationRecord {
    params: NetworkParams,
    batch: usize,
    caches: Vec<Cache>,
}

impl ComputationRecord {
    pub fn batch(&self) -> usize {
        self.batch
    }

    pub fn spec(&self) -> &NetworkSpec {
        &self.params.spec
    }
}

/// One gradient tensor per parameter, mirroring [`NetworkParams`].
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub spec: NetworkSpec,
    pub tensors: Vec<Tensor>,
}

impl Gradients {
    pub fn global_norm(&self) -> f64 {
        self.tensors.iter().map(Tensor::sq_norm).sum::<f64>().sqrt()
    }
}

fn im2col(
    x: &[f32],
    batch: usize,
    (h, w, c): (usize, usize, usize),
    kernel: usize,
    stride: usize,
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    let row_len = kernel * kernel * c;
    let mut cols = vec![0.0f32; batch * oh * ow * row_len];
    let mut r = 0;
    for b in 0..batch {
        let img = &x[b * h * w * c..(b + 1) * h * w * c];
        for oy in 0..oh {
            for ox in 0..ow {
                let dst = &mut cols[r * row_len..(r + 1) * row_len];
                for ky in 0..kernel {
                    let src_row = (oy * stride + ky) * w * c;
                    let src = src_row + ox * stride * c;
                    dst[ky * kernel * c..(ky + 1) * kernel * c]
                        .copy_from_slice(&img[src..src + kernel * c]);
                }
                r += 1;
            }
        }
    }
    cols
}

fn col2im(
    dcols: &[f32],
    batch: usize,
    (h, w, c): (usize, usize, usize),
    kernel: usize,
    stride: usize,
    (oh, ow): (usize, usize),
) -> Vec<f32> {
    let row_len = kernel * kernel * c;
    let mut dx = vec![0.0f32; batch * h * w * c];
    let mut r = 0;
    for b in 0..batch {
        let img = &mut dx[b * h * w * c..(b + 1) * h * w * c];
        for oy in 0..oh {
            for ox in 0..ow {
                let src = &dcols[r * row_len..(r + 1) * row_len];
                for ky in 0..kernel {
                    let dst = (oy * stride + ky) * w * c + ox * stride * c;
                    for (d, s) in img[dst..dst + kernel * c]
                        .iter_mut()
                        .zip(&src[ky * kernel * c..(ky + 1) * kernel * c])
                    {
                        *d += s;
                    }
                }
                r += 1;
            }
        }
    }
    dx
}

fn add_bias(out: &mut [f32], bias: &[f32]) {
    for row in out.chunks_exact_mut(bias.len()) {
        for (o, b) in row.iter_mut().zip(bias) {
            *o += b;
        }
    }
}

fn check_finite(values: &[f32], layer: usize) -> Result<()> {
    if values.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(NnError::NonFinite { layer })
    }
}

fn run(params: &NetworkParams, input: &Tensor, record: bool) -> Result<(Tensor, Vec<Cache>, usize)> {
    let spec = &params.spec;
    let shapes = spec.layer_shapes()?;
    let per_item = spec.input_len();
    let batch = match input.shape() {
        [h, w, c] if [*h, *w, *c] == spec.input_shape => 1,
        [b, h, w, c] if [*h, *w, *c] == spec.input_shape => *b,
        _ => {
            let [h, w, c] = spec.input_shape;
            return Err(NnError::Shape {
                expected: vec![h, w, c],
                found: input.shape().to_vec(),
            });
        }
    };
    debug_assert_eq!(input.len(), batch * per_item);
    let [h0, w0, c0] = spec.input_shape;
    let mut cur_shape = ActShape::Spatial {
        h: h0,
        w: w0,
        c: c0,
    };
    let mut act = input.data().to_vec();
    check_finite(&act, 0)?;
    let mut caches = Vec::with_capacity(if record { spec.layers.len() } else { 0 });
    for (i, layer) in spec.layers.iter().enumerate() {
        let out_shape = shapes[i];
        act = match *layer {
            Layer::Conv {
                out_channels,
                kernel,
                stride,
            } => {
                let (h, w, c) = match cur_shape {
                    ActShape::Spatial { h, w, c } => (h, w, c),
                    ActShape::Flat(_) => unreachable!("validated"),
                };
                let (oh, ow) = match out_shape {
                    ActShape::Spatial { h, w, .. } => (h, w),
                    ActShape::Flat(_) => unreachable!("validated"),
                };
                let cols = im2col(&act, batch, (h, w, c), kernel, stride, (oh, ow));
                let (wt, bias) = params.layer_params(i);
                let m = batch * oh * ow;
                let mut out = vec![0.0; m * out_channels];
                gemm(m, kernel * kernel * c, out_channels, &cols, false, wt.data(), false, &mut out, false);
                add_bias(&mut out, bias.data());
                check_finite(&out, i)?;
                if record {
                    caches.push(Cache::Conv {
                        cols,
                        in_shape: (h, w, c),
                        out_hw: (oh, ow),
                    });
                }
                out
            }
            Layer::Dense { out_units } => {
                let (wt, bias) = params.layer_params(i);
                let n_in = cur_shape.numel();
                let mut out = vec![0.0; batch * out_units];
                gemm(batch, n_in, out_units, &act, false, wt.data(), false, &mut out, false);
                add_bias(&mut out, bias.data());
                check_finite(&out, i)?;
                if record {
                    caches.push(Cache::Dense { input: act });
                }
                out
            }
            Layer::Relu => {
                let out: Vec<f32> = act.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect();
                if record {
                    caches.push(Cache::Relu {
                        output: out.clone(),
                    });
                }
                out
            }
            Layer::LinearHead { n_actions } => {
                let (wt, bias) = params.layer_params(i);
                let n_in = cur_shape.numel();
                let mut out = vec![0.0; batch * n_actions];
                gemm(batch, n_in, n_actions, &act, false, wt.data(), false, &mut out, false);
                add_bias(&mut out, bias.data());
                check_finite(&out, i)?;
                if record {
                    caches.push(Cache::Dense { input: act });
                }
                out
            }
            Layer::DuelingHead { n_actions } => {
                let (wt, bias) = params.layer_params(i);
                let n_in = cur_shape.numel();
                let width = n_actions + 1;
                let mut z = vec![0.0; batch * width];
                gemm(batch, n_in, width, &act, false, wt.data(), false, &mut z, false);
                add_bias(&mut z, bias.data());
                let mut out = Vec::with_capacity(batch * n_actions);
                for row in z.chunks_exact(width) {
                    out.extend(dueling_combine(row[0], &row[1..]));
                }
                check_finite(&out, i)?;
                if record {
                    caches.push(Cache::Dueling { input: act });
                }
                out
            }
        };
        cur_shape = out_shape;
    }
    let n_actions = spec.n_actions();
    Ok((Tensor::new(vec![batch, n_actions], act)?, caches, batch))
}

/// Batched forward pass. `obs` is `[H, W, C]` or `[B, H, W, C]`; the result
/// is `[B, n_actions]` plus the record needed by [`backward`].
pub fn forward(params: &NetworkParams, obs: &Tensor) -> Result<(Tensor, ComputationRecord)> {
    let (q, caches, batch) = run(params, obs, true)?;
    Ok((
        q,
        ComputationRecord {
            params: params.clone(),
            batch,
            caches,
        },
    ))
}

/// Forward pass without recording anything for differentiation.
pub fn predict(params: &NetworkParams, obs: &Tensor) -> Result<Tensor> {
    run(params, obs, false).map(|(q, _, _)| q)
}

/// Reverse pass: gradients of `sum(loss_grad * q)` with respect to every parameter.
pub fn backward(tape: &ComputationRecord, loss_grad: &Tensor) -> Result<Gradients> {
    let params = &tape.params;
    let spec = &params.spec;
    let batch = tape.batch;
    let n_actions = spec.n_actions();
    if loss_grad.shape() != [batch, n_actions] && !(batch == 1 && loss_grad.shape() == [n_actions]) {
        return Err(NnError::TapeMismatch(format!(
            "loss gradient shape {:?} does not match recorded output [{batch}, {n_actions}]",
            loss_grad.shape()
        )));
    }
    if tape.caches.len() != spec.layers.len() {
        return Err(NnError::TapeMismatch("record holds no activations".into()));
    }
    let shapes = spec.layer_shapes()?;
    let mut grads: Vec<Tensor> = params.tensors.iter().map(|t| Tensor::zeros(t.shape().to_vec())).collect();
    let mut upstream = loss_grad.data().to_vec();
    for i in (0..spec.layers.len()).rev() {
        let need_input_grad = i > 0;
        let in_numel = if i == 0 {
            spec.input_len()
        } else {
            shapes[i - 1].numel()
        };
        upstream = match (&spec.layers[i], &tape.caches[i]) {
            (
                Layer::Conv {
                    out_channels,
                    kernel,
                    stride,
                },
                Cache::Conv {
                    cols,
                    in_shape,
                    out_hw,
                },
            ) => {
                let k = params.slots[i].expect("conv has params");
                let m = batch * out_hw.0 * out_hw.1;
                let kk = kernel * kernel * in_shape.2;
                gemm(kk, m, *out_channels, cols, true, &upstream, false, grads[k].data_mut(), false);
                bias_grad(&upstream, grads[k + 1].data_mut());
                if need_input_grad {
                    let mut dcols = vec![0.0; m * kk];
                    gemm(m, *out_channels, kk, &upstream, false, params.tensors[k].data(), true, &mut dcols, false);
                    col2im(&dcols, batch, *in_shape, *kernel, *stride, *out_hw)
                } else {
                    Vec::new()
                }
            }
            (Layer::Dense { out_units: n_out } | Layer::LinearHead { n_actions: n_out }, Cache::Dense { input }) => {
                let k = params.slots[i].expect("dense has params");
                gemm(in_numel, batch, *n_out, input, true, &upstream, false, grads[k].data_mut(), false);
                bias_grad(&upstream, grads[k + 1].data_mut());
                if need_input_grad {
                    let mut dx = vec![0.0; batch * in_numel];
                    gemm(batch, *n_out, in_numel, &upstream, false, params.tensors[k].data(), true, &mut dx, false);
                    dx
                } else {
                    Vec::new()
                }
            }
            (Layer::DuelingHead { n_actions }, Cache::Dueling { input }) => {
                let k = params.slots[i].expect("head has params");
                let width = n_actions + 1;
                let mut dz = vec![0.0f32; batch * width];
                for (dq, dzr) in upstream.chunks_exact(*n_actions).zip(dz.chunks_exact_mut(width)) {
                    let sum: f32 = dq.iter().sum();
                    let mean = sum / *n_actions as f32;
                    dzr[0] = sum;
                    for (d, g) in dzr[1..].iter_mut().zip(dq) {
                        *d = g - mean;
                    }
                }
                gemm(in_numel, batch, width, input, true, &dz, false, grads[k].data_mut(), false);
                bias_grad(&dz, grads[k + 1].data_mut());
                if need_input_grad {
                    let mut dx = vec![0.0; batch * in_numel];
                    gemm(batch, width, in_numel, &dz, false, params.tensors[k].data(), true, &mut dx, false);
                    dx
                } else {
                    Vec::new()
                }
            }
            (Layer::Relu, Cache::Relu { output }) => upstream
                .iter()
                .zip(output)
                .map(|(g, y)| if *y > 0.0 { *g } else { 0.0 })
                .collect(),
            _ => return Err(NnError::TapeMismatch(format!("layer {i} record has the wrong kind"))),
        };
    }
    Ok(Gradients {
        spec: spec.clone(),
        tensors: grads,
    })
}

fn bias_grad(upstream: &[f32], out: &mut [f32]) {
    out.iter_mut().for_each(|v| *v = 0.0);
    for row in upstream.chunks_exact(out.len()) {
        for (o, g) in out.iter_mut().zip(row) {
            *o += g;
        }
    }
}

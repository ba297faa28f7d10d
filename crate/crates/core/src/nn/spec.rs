use super::error::{NnError, Result};

/// One layer of a sequential Q-network.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Layer {
    /// Valid (unpadded) 2D convolution over an `H x W x C` activation.
    Conv {
        out_channels: usize,
        kernel: usize,
        stride: usize,
    },
    /// Fully connected layer; spatial inputs are flattened in `H, W, C` order.
    Dense { out_units: usize },
    Relu,
    /// Value + advantage streams recombined as `v + adv - mean(adv)`.
    DuelingHead { n_actions: usize },
    LinearHead { n_actions: usize },
}

impl Layer {
    pub fn is_head(&self) -> bool {
        matches!(self, Layer::DuelingHead { .. } | Layer::LinearHead { .. })
    }

    pub fn has_params(&self) -> bool {
        !matches!(self, Layer::Relu)
    }
}

/// Activation shape flowing between layers (batch dimension excluded).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ActShape {
    Spatial { h: usize, w: usize, c: usize },
    Flat(usize),
}

impl ActShape {
    pub fn numel(&self) -> usize {
        match *self {
            ActShape::Spatial { h, w, c } => h * w * c,
            ActShape::Flat(n) => n,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NetworkSpec {
    /// `(H, W, C)`.
    pub input_shape: [usize; 3],
    pub layers: Vec<Layer>,
}

impl NetworkSpec {
    /// The conv trunk shared by low-level and meta networks: three conv layers,
    /// one hidden dense layer, then the head.
    pub fn q_network(input_shape: [usize; 3], n_actions: usize, dueling: bool) -> Self {
        let head = if dueling {
            Layer::DuelingHead { n_actions }
        } else {
            Layer::LinearHead { n_actions }
        };
        Self {
            input_shape,
            layers: vec![
                Layer::Conv {
                    out_channels: 8,
                    kernel: 5,
                    stride: 2,
                },
                Layer::Relu,
                Layer::Conv {
                    out_channels: 16,
                    kernel: 3,
                    stride: 2,
                },
                Layer::Relu,
                Layer::Conv {
                    out_channels: 16,
                    kernel: 3,
                    stride: 1,
                },
                Layer::Relu,
                Layer::Dense { out_units: 128 },
                Layer::Relu,
                head,
            ],
        }
    }

    /// Checks the layer chain and returns the output shape of every layer.
    pub fn layer_shapes(&self) -> Result<Vec<ActShape>> {
        let [h, w, c] = self.input_shape;
        if h == 0 || w == 0 || c == 0 {
            return Err(NnError::InvalidSpec("input shape has a zero dimension".into()));
        }
        match self.layers.last() {
            Some(l) if l.is_head() => {}
            _ => return Err(NnError::InvalidSpec("last layer must be a head".into())),
        }
        if self.layers.iter().filter(|l| l.is_head()).count() != 1 {
            return Err(NnError::InvalidSpec("exactly one head layer allowed".into()));
        }
        let mut cur = ActShape::Spatial { h, w, c };
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            cur = match (*layer, cur) {
                (
                    Layer::Conv {
                        out_channels,
                        kernel,
                        stride,
                    },
                    ActShape::Spatial { h, w, .. },
                ) => {
                    if out_channels == 0 || kernel == 0 || stride == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: zero conv parameter")));
                    }
                    if kernel > h || kernel > w {
                        return Err(NnError::InvalidSpec(format!(
                            "layer {i}: kernel {kernel} larger than input {h}x{w}"
                        )));
                    }
                    ActShape::Spatial {
                        h: (h - kernel) / stride + 1,
                        w: (w - kernel) / stride + 1,
                        c: out_channels,
                    }
                }
                (Layer::Conv { .. }, ActShape::Flat(_)) => {
                    return Err(NnError::InvalidSpec(format!("layer {i}: conv after flatten")))
                }
                (Layer::Dense { out_units }, _) => {
                    if out_units == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: zero units")));
                    }
                    ActShape::Flat(out_units)
                }
                (Layer::Relu, s) => s,
                (Layer::DuelingHead { n_actions } | Layer::LinearHead { n_actions }, _) => {
                    if n_actions == 0 {
                        return Err(NnError::InvalidSpec(format!("layer {i}: zero actions")));
                    }
                    ActShape::Flat(n_actions)
                }
            };
            shapes.push(cur);
        }
        Ok(shapes)
    }

    pub fn validate(&self) -> Result<()> {
        self.layer_shapes().map(|_| ())
    }

    pub fn n_actions(&self) -> usize {
        match self.layers.last() {
            Some(Layer::DuelingHead { n_actions } | Layer::LinearHead { n_actions }) => *n_actions,
            _ => 0,
        }
    }

    pub fn input_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Weight and bias shapes for every parameterized layer, in layer order.
    pub fn param_shapes(&self) -> Result<Vec<(usize, Vec<usize>, Vec<usize>)>> {
        let shapes = self.layer_shapes()?;
        let [h, w, c] = self.input_shape;
        let mut prev = ActShape::Spatial { h, w, c };
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    ..
                } => {
                    let in_c = match prev {
                        ActShape::Spatial { c, .. } => c,
                        ActShape::Flat(_) => unreachable!(),
                    };
                    out.push((
                        i,
                        vec![kernel, kernel, in_c, out_channels],
                        vec![out_channels],
                    ));
                }
                Layer::Dense { out_units } => {
                    out.push((i, vec![prev.numel(), out_units], vec![out_units]));
                }
                Layer::DuelingHead { n_actions } => {
                    out.push((i, vec![prev.numel(), n_actions + 1], vec![n_actions + 1]));
                }
                Layer::LinearHead { n_actions } => {
                    out.push((i, vec![prev.numel(), n_actions], vec![n_actions]));
                }
                Layer::Relu => {}
            }
            prev = shapes[i];
        }
        Ok(out)
    }

    /// Encodes the spec as small integers: first row is the input shape, then
    /// one `(kind, a, b, c)` row per layer.
    pub fn encode(&self) -> Vec<[u32; 4]> {
        let mut rows = vec![[
            self.input_shape[0] as u32,
            self.input_shape[1] as u32,
            self.input_shape[2] as u32,
            0,
        ]];
        for layer in &self.layers {
            rows.push(match *layer {
                Layer::Conv {
                    out_channels,
                    kernel,
                    stride,
                } => [1, out_channels as u32, kernel as u32, stride as u32],
                Layer::Dense { out_units } => [2, out_units as u32, 0, 0],
                Layer::Relu => [3, 0, 0, 0],
                Layer::DuelingHead { n_actions } => [4, n_actions as u32, 0, 0],
                Layer::LinearHead { n_actions } => [5, n_actions as u32, 0, 0],
            });
        }
        rows
    }

    pub fn decode(rows: &[[u32; 4]]) -> Result<Self> {
        let (first, rest) = rows
            .split_first()
            .ok_or_else(|| NnError::InvalidSpec("empty spec encoding".into()))?;
        let layers = rest
            .iter()
            .map(|r| {
                Ok(match r[0] {
                    1 => Layer::Conv {
                        out_channels: r[1] as usize,
                        kernel: r[2] as usize,
                        stride: r[3] as usize,
                    },
                    2 => Layer::Dense {
                        out_units: r[1] as usize,
                    },
                    3 => Layer::Relu,
                    4 => Layer::DuelingHead {
                        n_actions: r[1] as usize,
                    },
                    5 => Layer::LinearHead {
                        n_actions: r[1] as usize,
                    },
                    k => return Err(NnError::InvalidSpec(format!("unknown layer code {k}"))),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let spec = Self {
            input_shape: [first[0] as usize, first[1] as usize, first[2] as usize],
            layers,
        };
        spec.validate()?;
        Ok(spec)
    }
}

use super::ModelError;
use crate::tensor::Tensor;

/// Standard 2-D convolution (cross-correlation, no kernel flip).
/// Weights are laid out `[out][in][kh][kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Per-channel convolution, weights laid out `[channel][kh][kw]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthwiseConv2d {
    pub channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

/// Folded batch normalization: `y = scale[c] * x + shift[c]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Affine {
    pub scale: Vec<f32>,
    pub shift: Vec<f32>,
}

/// Fully connected layer on a rank 1 input, weights row-major `[out][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub in_features: usize,
    pub out_features: usize,
    pub weight: Vec<f32>,
    pub bias: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv2d(Conv2d),
    DepthwiseConv2d(DepthwiseConv2d),
    Affine(Affine),
    Relu6,
    GlobalAvgPool,
    Dense(Dense),
    /// Adds the output of layer `source` to this layer's input.
    ResidualAdd {
        source: usize,
    },
}

fn conv_out(size: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    let padded = size + 2 * padding;
    if padded < kernel || stride == 0 {
        return None;
    }
    Some((padded - kernel) / stride + 1)
}

fn mismatch(layer: &Layer, input: &[usize]) -> ModelError {
    ModelError::ShapeMismatch(format!("{} cannot take input {input:?}", layer.kind_name()))
}

impl Layer {
    pub fn kind_name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::DepthwiseConv2d(_) => "depthwise_conv2d",
            Layer::Affine(_) => "affine",
            Layer::Relu6 => "relu6",
            Layer::GlobalAvgPool => "global_avg_pool",
            Layer::Dense(_) => "dense",
            Layer::ResidualAdd { .. } => "residual_add",
        }
    }

    /// Checks that weight and bias arrays have the size implied by the
    /// layer parameters.
    pub fn validate_parameters(&self) -> Result<(), ModelError> {
        let check = |what: &str, got: usize, want: usize| {
            if got == want {
                Ok(())
            } else {
                Err(ModelError::InvalidLayer(format!("{} {what}: expected {want} values, got {got}", self.kind_name())))
            }
        };
        match self {
            Layer::Conv2d(c) => {
                if c.kernel == 0 || c.stride == 0 || c.in_channels == 0 || c.out_channels == 0 {
                    return Err(ModelError::InvalidLayer("conv2d with zero-sized parameter".into()));
                }
                check("weight", c.weight.len(), c.out_channels * c.in_channels * c.kernel * c.kernel)?;
                check("bias", c.bias.len(), c.out_channels)
            }
            Layer::DepthwiseConv2d(c) => {
                if c.kernel == 0 || c.stride == 0 || c.channels == 0 {
                    return Err(ModelError::InvalidLayer("depthwise_conv2d with zero-sized parameter".into()));
                }
                check("weight", c.weight.len(), c.channels * c.kernel * c.kernel)?;
                check("bias", c.bias.len(), c.channels)
            }
            Layer::Affine(a) => {
                if a.scale.is_empty() {
                    return Err(ModelError::InvalidLayer("affine with zero channels".into()));
                }
                check("shift", a.shift.len(), a.scale.len())
            }
            Layer::Dense(d) => {
                if d.in_features == 0 || d.out_features == 0 {
                    return Err(ModelError::InvalidLayer("dense with zero features".into()));
                }
                check("weight", d.weight.len(), d.in_features * d.out_features)?;
                check("bias", d.bias.len(), d.out_features)
            }
            Layer::Relu6 | Layer::GlobalAvgPool | Layer::ResidualAdd { .. } => Ok(()),
        }
    }

    /// Closed-form output shape for `input`.
    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>, ModelError> {
        match self {
            Layer::Conv2d(c) => match *input {
                [ch, h, w] if ch == c.in_channels => {
                    let oh = conv_out(h, c.kernel, c.stride, c.padding);
                    let ow = conv_out(w, c.kernel, c.stride, c.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => Ok(vec![c.out_channels, oh, ow]),
                        _ => Err(mismatch(self, input)),
                    }
                }
                _ => Err(mismatch(self, input)),
            },
            Layer::DepthwiseConv2d(c) => match *input {
                [ch, h, w] if ch == c.channels => {
                    let oh = conv_out(h, c.kernel, c.stride, c.padding);
                    let ow = conv_out(w, c.kernel, c.stride, c.padding);
                    match (oh, ow) {
                        (Some(oh), Some(ow)) => Ok(vec![c.channels, oh, ow]),
                        _ => Err(mismatch(self, input)),
                    }
                }
                _ => Err(mismatch(self, input)),
            },
            Layer::Affine(a) => match *input {
                [ch, _, _] if ch == a.scale.len() => Ok(input.to_vec()),
                [ch] if ch == a.scale.len() => Ok(input.to_vec()),
                _ => Err(mismatch(self, input)),
            },
            Layer::Relu6 | Layer::ResidualAdd { .. } => Ok(input.to_vec()),
            Layer::GlobalAvgPool => match *input {
                [ch, _, _] => Ok(vec![ch]),
                _ => Err(mismatch(self, input)),
            },
            Layer::Dense(d) => match *input {
                [n] if n == d.in_features => Ok(vec![d.out_features]),
                _ => Err(mismatch(self, input)),
            },
        }
    }

    /// Applies the layer. `skip` must be given exactly for `ResidualAdd`.
    pub fn apply(&self, input: &Tensor, skip: Option<&Tensor>) -> Result<Tensor, ModelError> {
        let out_shape = self.output_shape(input.shape())?;
        match (self, skip) {
            (Layer::ResidualAdd { .. }, None) => {
                return Err(ModelError::ShapeMismatch("residual_add without skip input".into()))
            }
            (Layer::ResidualAdd { .. }, Some(s)) if s.shape() != input.shape() => {
                return Err(ModelError::ShapeMismatch(format!(
                    "residual_add skip shape {:?} differs from input {:?}",
                    s.shape(),
                    input.shape()
                )))
            }
            (Layer::ResidualAdd { .. }, Some(_)) => {}
            (_, Some(_)) => {
                return Err(ModelError::ShapeMismatch(format!("{} does not take a skip input", self.kind_name())))
            }
            (_, None) => {}
        }

        let data = match self {
            Layer::Conv2d(c) => conv2d(c, input, &out_shape),
            Layer::DepthwiseConv2d(c) => depthwise(c, input, &out_shape),
            Layer::Affine(a) => {
                let per_channel = input.len() / a.scale.len();
                input
                    .data()
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| {
                        let c = i / per_channel;
                        a.scale[c] * x + a.shift[c]
                    })
                    .collect()
            }
            // max/min rather than clamp: NaN maps to 0 as in min(max(x, 0), 6)
            #[allow(clippy::manual_clamp)]
            Layer::Relu6 => input.data().iter().map(|&x| x.max(0.0).min(6.0)).collect(),
            Layer::GlobalAvgPool => {
                let (_, h, w) = input.chw().expect("checked by output_shape");
                let area = h * w;
                input
                    .data()
                    .chunks(area)
                    .map(|plane| {
                        let mut sum = 0.0f32;
                        for &v in plane {
                            sum += v;
                        }
                        sum / area as f32
                    })
                    .collect()
            }
            Layer::Dense(d) => {
                let x = input.data();
                d.weight
                    .chunks(d.in_features)
                    .zip(&d.bias)
                    .map(|(row, &b)| {
                        let mut acc = 0.0f32;
                        for (w, v) in row.iter().zip(x) {
                            acc += w * v;
                        }
                        acc + b
                    })
                    .collect()
            }
            Layer::ResidualAdd { .. } => {
                let s = skip.expect("checked above");
                input.data().iter().zip(s.data()).map(|(a, b)| a + b).collect()
            }
        };
        let out = Tensor::new(out_shape, data)?;
        if !out.is_finite() {
            return Err(ModelError::NonFinite(self.kind_name()));
        }
        Ok(out)
    }
}

// Accumulation order is input channel, then kernel row, then kernel column.
fn conv2d(c: &Conv2d, input: &Tensor, out_shape: &[usize]) -> Vec<f32> {
    let (cin, h, w) = input.chw().expect("rank 3");
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let k = c.kernel;
    let x = input.data();
    let mut out = Vec::with_capacity(c.out_channels * oh * ow);
    for co in 0..c.out_channels {
        let wbase = co * cin * k * k;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for ci in 0..cin {
                    let plane = &x[ci * h * w..(ci + 1) * h * w];
                    let wk = &c.weight[wbase + ci * k * k..wbase + (ci + 1) * k * k];
                    for ky in 0..k {
                        let iy = (oy * c.stride + ky) as isize - c.padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..k {
                            let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += wk[ky * k + kx] * plane[iy as usize * w + ix as usize];
                        }
                    }
                }
                out.push(acc + c.bias[co]);
            }
        }
    }
    out
}

fn depthwise(c: &DepthwiseConv2d, input: &Tensor, out_shape: &[usize]) -> Vec<f32> {
    let (_, h, w) = input.chw().expect("rank 3");
    let (oh, ow) = (out_shape[1], out_shape[2]);
    let k = c.kernel;
    let x = input.data();
    let mut out = Vec::with_capacity(c.channels * oh * ow);
    for ch in 0..c.channels {
        let plane = &x[ch * h * w..(ch + 1) * h * w];
        let wk = &c.weight[ch * k * k..(ch + 1) * k * k];
        for oy in 0..oh {
            for ox in 0..ow {
                let mut acc = 0.0f32;
                for ky in 0..k {
                    let iy = (oy * c.stride + ky) as isize - c.padding as isize;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..k {
                        let ix = (ox * c.stride + kx) as isize - c.padding as isize;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        acc += wk[ky * k + kx] * plane[iy as usize * w + ix as usize];
                    }
                }
                out.push(acc + c.bias[ch]);
            }
        }
    }
    out
}

use rand::Rng;

use super::ops::{self, BatchNormCache, LrnParams, Mode};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub value: Tensor,
    pub grad: Vec<f64>,
}

impl Param {
    pub fn new(value: Tensor) -> Self {
        let grad = vec![0.0; value.len()];
        Self { value, grad }
    }

    pub fn len(&self) -> usize {
        self.grad.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grad.is_empty()
    }

    pub fn split_mut(&mut self) -> (&mut [f64], &[f64]) {
        (self.value.data_mut(), &self.grad)
    }

    fn accumulate(&mut self, g: &[f64]) {
        self.grad.iter_mut().zip(g).for_each(|(a, b)| *a += b);
    }

    fn zero_grad(&mut self) {
        self.grad.iter_mut().for_each(|g| *g = 0.0);
    }
}

/// Fan-in scaled uniform init, `U(−√(6/fan_in), √(6/fan_in))`.
fn init_weights(shape: Vec<usize>, fan_in: usize, rng: &mut Rng64) -> Tensor {
    let bound = (6.0 / fan_in as f64).sqrt();
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.gen_range(-bound..bound)).collect();
    Tensor::new(shape, data).expect("init shape")
}

#[derive(Debug, Clone)]
pub struct Conv2d {
    pub weight: Param,
    pub bias: Param,
    pub stride: usize,
    pub padding: usize,
    input: Option<Tensor>,
}

impl Conv2d {
    pub fn new(in_ch: usize, out_ch: usize, kernel: usize, padding: usize, rng: &mut Rng64) -> Self {
        Self {
            weight: Param::new(init_weights(
                vec![out_ch, in_ch, kernel, kernel],
                in_ch * kernel * kernel,
                rng,
            )),
            bias: Param::new(Tensor::zeros(vec![out_ch])),
            stride: 1,
            padding,
            input: None,
        }
    }

    fn dims(&self) -> [usize; 3] {
        let s = self.weight.value.shape();
        [s[0], s[1], s[2]]
    }
}

#[derive(Debug, Clone)]
pub struct BatchNorm2d {
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
    pub eps: f64,
    cache: Option<BatchNormCache>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: Param::new(Tensor::filled(vec![channels], 1.0)),
            beta: Param::new(Tensor::zeros(vec![channels])),
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            momentum: 0.1,
            eps: 1e-5,
            cache: None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Lrn {
    pub params: LrnParams,
    cache: Option<(Tensor, Vec<f64>)>,
}

impl Lrn {
    pub fn new(params: LrnParams) -> Self {
        Self { params, cache: None }
    }
}

#[derive(Debug, Clone)]
pub struct Linear {
    pub weight: Param,
    pub bias: Param,
    input: Option<Tensor>,
}

impl Linear {
    pub fn new(inputs: usize, outputs: usize, rng: &mut Rng64) -> Self {
        Self {
            weight: Param::new(init_weights(vec![outputs, inputs], inputs, rng)),
            bias: Param::new(Tensor::zeros(vec![outputs])),
            input: None,
        }
    }
}

#[derive(Debug, Clone)]
pub enum Layer {
    Conv2d(Conv2d),
    BatchNorm2d(BatchNorm2d),
    Lrn(Lrn),
    Relu { mask: Option<Vec<bool>> },
    Dropout { rate: f64, mask: Option<Vec<f64>> },
    MaxPool2d { cache: Option<(Vec<usize>, Vec<usize>)> },
    Flatten { input_shape: Option<Vec<usize>> },
    Linear(Linear),
    Sigmoid { output: Option<Tensor> },
}

/// Serialized form of one layer: structural dims plus f64 blobs
/// (parameters, running statistics and hyperparameters).
#[derive(Debug, Clone, PartialEq)]
pub struct LayerState {
    pub kind: u8,
    pub dims: Vec<u64>,
    pub blobs: Vec<Vec<f64>>,
}

fn missing_cache(name: &str) -> Error {
    Error::Shape(format!("{name}: backward called without a train-mode forward"))
}

impl Layer {
    pub fn relu() -> Self {
        Layer::Relu { mask: None }
    }

    pub fn dropout(rate: f64) -> Self {
        Layer::Dropout { rate, mask: None }
    }

    pub fn maxpool() -> Self {
        Layer::MaxPool2d { cache: None }
    }

    pub fn flatten() -> Self {
        Layer::Flatten { input_shape: None }
    }

    pub fn sigmoid() -> Self {
        Layer::Sigmoid { output: None }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Layer::Conv2d(_) => "conv2d",
            Layer::BatchNorm2d(_) => "batchnorm2d",
            Layer::Lrn(_) => "lrn",
            Layer::Relu { .. } => "relu",
            Layer::Dropout { .. } => "dropout",
            Layer::MaxPool2d { .. } => "maxpool2d",
            Layer::Flatten { .. } => "flatten",
            Layer::Linear(_) => "linear",
            Layer::Sigmoid { .. } => "sigmoid",
        }
    }

    fn kind(&self) -> u8 {
        match self {
            Layer::Conv2d(_) => 1,
            Layer::BatchNorm2d(_) => 2,
            Layer::Lrn(_) => 3,
            Layer::Relu { .. } => 4,
            Layer::Dropout { .. } => 5,
            Layer::MaxPool2d { .. } => 6,
            Layer::Flatten { .. } => 7,
            Layer::Linear(_) => 8,
            Layer::Sigmoid { .. } => 9,
        }
    }

    pub fn output_shape(&self, input: &[usize]) -> Result<Vec<usize>> {
        let bad = || Error::Shape(format!("{} cannot take input {input:?}", self.name()));
        match self {
            Layer::Conv2d(c) => {
                let [o, ci, k] = c.dims();
                match *input {
                    [n, ch, h, w] if ch == ci => {
                        let g = ops::ConvGeometry {
                            in_ch: ch,
                            height: h,
                            width: w,
                            kernel: k,
                            stride: c.stride,
                            padding: c.padding,
                        };
                        let (ho, wo) = g.out_size()?;
                        Ok(vec![n, o, ho, wo])
                    }
                    _ => Err(bad()),
                }
            }
            Layer::BatchNorm2d(b) => match *input {
                [_, ch, _, _] if ch == b.running_mean.len() => Ok(input.to_vec()),
                _ => Err(bad()),
            },
            Layer::Lrn(_) => match *input {
                [_, _, _, _] => Ok(input.to_vec()),
                _ => Err(bad()),
            },
            Layer::MaxPool2d { .. } => match *input {
                [n, c, h, w] if h % 2 == 0 && w % 2 == 0 => Ok(vec![n, c, h / 2, w / 2]),
                _ => Err(bad()),
            },
            Layer::Flatten { .. } => match input {
                [n, rest @ ..] if !rest.is_empty() => Ok(vec![*n, rest.iter().product()]),
                _ => Err(bad()),
            },
            Layer::Linear(l) => {
                let s = l.weight.value.shape();
                match *input {
                    [n, f] if f == s[1] => Ok(vec![n, s[0]]),
                    _ => Err(bad()),
                }
            }
            Layer::Relu { .. } | Layer::Dropout { .. } | Layer::Sigmoid { .. } => Ok(input.to_vec()),
        }
    }

    /// Pure forward pass in eval mode: running statistics, no dropout, no caching.
    pub fn forward_eval(&self, x: &Tensor) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => ops::conv2d(x, &c.weight.value, c.bias.value.data(), c.stride, c.padding),
            Layer::BatchNorm2d(b) => ops::batchnorm2d_eval(
                x,
                b.gamma.value.data(),
                b.beta.value.data(),
                &b.running_mean,
                &b.running_var,
                b.eps,
            ),
            Layer::Lrn(l) => Ok(ops::lrn(x, &l.params)?.0),
            Layer::Relu { .. } => Ok(ops::relu(x)),
            Layer::Dropout { .. } => Ok(x.clone()),
            Layer::MaxPool2d { .. } => Ok(ops::maxpool2d(x)?.0),
            Layer::Flatten { .. } => {
                let shape = self.output_shape(x.shape())?;
                x.clone().reshape(shape)
            }
            Layer::Linear(l) => ops::linear(x, &l.weight.value, l.bias.value.data()),
            Layer::Sigmoid { .. } => Ok(ops::sigmoid(x)),
        }
    }

    /// Train-mode forward pass; caches what the backward pass needs.
    pub fn forward_train(&mut self, x: Tensor, rng: &mut Rng64) -> Result<Tensor> {
        match self {
            Layer::Conv2d(c) => {
                let y = ops::conv2d(&x, &c.weight.value, c.bias.value.data(), c.stride, c.padding)?;
                c.input = Some(x);
                Ok(y)
            }
            Layer::BatchNorm2d(b) => {
                let (y, cache, stats) = ops::batchnorm2d_train(&x, b.gamma.value.data(), b.beta.value.data(), b.eps)?;
                let unbias = stats.count as f64 / (stats.count - 1) as f64;
                for ch in 0..b.running_mean.len() {
                    b.running_mean[ch] = (1.0 - b.momentum) * b.running_mean[ch] + b.momentum * stats.mean[ch];
                    b.running_var[ch] = (1.0 - b.momentum) * b.running_var[ch] + b.momentum * stats.var[ch] * unbias;
                }
                b.cache = Some(cache);
                Ok(y)
            }
            Layer::Lrn(l) => {
                let (y, base) = ops::lrn(&x, &l.params)?;
                l.cache = Some((x, base));
                Ok(y)
            }
            Layer::Relu { mask } => {
                let y = ops::relu(&x);
                *mask = Some(y.data().iter().map(|&v| v > 0.0).collect());
                Ok(y)
            }
            Layer::Dropout { rate, mask } => {
                let (y, m) = ops::dropout(&x, *rate, Mode::Train, rng)?;
                *mask = m;
                Ok(y)
            }
            Layer::MaxPool2d { cache } => {
                let (y, arg) = ops::maxpool2d(&x)?;
                *cache = Some((x.shape().to_vec(), arg));
                Ok(y)
            }
            Layer::Flatten { input_shape } => {
                let shape = match x.shape() {
                    [n, rest @ ..] if !rest.is_empty() => vec![*n, rest.iter().product()],
                    s => return Err(Error::Shape(format!("flatten cannot take {s:?}"))),
                };
                *input_shape = Some(x.shape().to_vec());
                x.reshape(shape)
            }
            Layer::Linear(l) => {
                let y = ops::linear(&x, &l.weight.value, l.bias.value.data())?;
                l.input = Some(x);
                Ok(y)
            }
            Layer::Sigmoid { output } => {
                let y = ops::sigmoid(&x);
                *output = Some(y.clone());
                Ok(y)
            }
        }
    }

    /// Accumulates parameter gradients and returns the gradient for the layer input.
    pub fn backward(&mut self, g: Tensor) -> Result<Tensor> {
        let name = self.name();
        match self {
            Layer::Conv2d(c) => {
                let x = c.input.take().ok_or_else(|| missing_cache(name))?;
                let grads = ops::conv2d_backward(&x, &c.weight.value, c.stride, c.padding, &g)?;
                c.weight.accumulate(grads.weight.data());
                c.bias.accumulate(&grads.bias);
                Ok(grads.input)
            }
            Layer::BatchNorm2d(b) => {
                let cache = b.cache.take().ok_or_else(|| missing_cache(name))?;
                let grads = ops::batchnorm2d_backward(&cache, b.gamma.value.data(), &g)?;
                b.gamma.accumulate(&grads.gamma);
                b.beta.accumulate(&grads.beta);
                Ok(grads.input)
            }
            Layer::Lrn(l) => {
                let (x, base) = l.cache.take().ok_or_else(|| missing_cache(name))?;
                ops::lrn_backward(&x, &base, &l.params, &g)
            }
            Layer::Relu { mask } => {
                let m = mask.take().ok_or_else(|| missing_cache(name))?;
                let mut g = g;
                g.data_mut().iter_mut().zip(&m).for_each(|(v, &keep)| {
                    if !keep {
                        *v = 0.0
                    }
                });
                Ok(g)
            }
            Layer::Dropout { mask, .. } => Ok(ops::dropout_backward(mask.take().as_deref(), &g)),
            Layer::MaxPool2d { cache } => {
                let (shape, arg) = cache.take().ok_or_else(|| missing_cache(name))?;
                ops::maxpool2d_backward(&shape, &arg, &g)
            }
            Layer::Flatten { input_shape } => {
                let shape = input_shape.take().ok_or_else(|| missing_cache(name))?;
                g.reshape(shape)
            }
            Layer::Linear(l) => {
                let x = l.input.take().ok_or_else(|| missing_cache(name))?;
                let grads = ops::linear_backward(&x, &l.weight.value, &g)?;
                l.weight.accumulate(grads.weight.data());
                l.bias.accumulate(&grads.bias);
                Ok(grads.input)
            }
            Layer::Sigmoid { output } => {
                let y = output.take().ok_or_else(|| missing_cache(name))?;
                ops::sigmoid_backward(&y, &g)
            }
        }
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        match self {
            Layer::Conv2d(c) => vec![&mut c.weight, &mut c.bias],
            Layer::BatchNorm2d(b) => vec![&mut b.gamma, &mut b.beta],
            Layer::Linear(l) => vec![&mut l.weight, &mut l.bias],
            _ => Vec::new(),
        }
    }

    pub fn params(&self) -> Vec<&Param> {
        match self {
            Layer::Conv2d(c) => vec![&c.weight, &c.bias],
            Layer::BatchNorm2d(b) => vec![&b.gamma, &b.beta],
            Layer::Linear(l) => vec![&l.weight, &l.bias],
            _ => Vec::new(),
        }
    }

    pub fn zero_grad(&mut self) {
        self.params_mut().into_iter().for_each(Param::zero_grad);
    }

    pub fn state(&self) -> LayerState {
        let kind = self.kind();
        let u = |v: &[usize]| v.iter().map(|&d| d as u64).collect::<Vec<u64>>();
        let (dims, blobs) = match self {
            Layer::Conv2d(c) => (
                u(c.weight.value.shape())
                    .into_iter()
                    .chain([c.stride as u64, c.padding as u64])
                    .collect(),
                vec![c.weight.value.data().to_vec(), c.bias.value.data().to_vec()],
            ),
            Layer::BatchNorm2d(b) => (
                vec![b.running_mean.len() as u64],
                vec![
                    b.gamma.value.data().to_vec(),
                    b.beta.value.data().to_vec(),
                    b.running_mean.clone(),
                    b.running_var.clone(),
                    vec![b.momentum, b.eps],
                ],
            ),
            Layer::Lrn(l) => (
                vec![l.params.size as u64],
                vec![vec![l.params.alpha, l.params.beta, l.params.k]],
            ),
            Layer::Dropout { rate, .. } => (Vec::new(), vec![vec![*rate]]),
            Layer::Linear(l) => (
                u(l.weight.value.shape()),
                vec![l.weight.value.data().to_vec(), l.bias.value.data().to_vec()],
            ),
            Layer::Relu { .. } | Layer::MaxPool2d { .. } | Layer::Flatten { .. } | Layer::Sigmoid { .. } => {
                (Vec::new(), Vec::new())
            }
        };
        LayerState { kind, dims, blobs }
    }

    /// Restores blobs from `state`, which must describe a layer of the same kind and shape.
    pub fn load_state(&mut self, state: &LayerState) -> Result<()> {
        let own = self.state();
        let fits = own.kind == state.kind
            && own.dims == state.dims
            && own.blobs.len() == state.blobs.len()
            && own.blobs.iter().zip(&state.blobs).all(|(a, b)| a.len() == b.len());
        if !fits {
            return Err(Error::Shape(format!(
                "{} layer {:?} does not match stored kind {} dims {:?}",
                self.name(),
                own.dims,
                state.kind,
                state.dims
            )));
        }
        let b = &state.blobs;
        match self {
            Layer::Conv2d(c) => {
                c.weight.value.data_mut().copy_from_slice(&b[0]);
                c.bias.value.data_mut().copy_from_slice(&b[1]);
            }
            Layer::BatchNorm2d(n) => {
                n.gamma.value.data_mut().copy_from_slice(&b[0]);
                n.beta.value.data_mut().copy_from_slice(&b[1]);
                n.running_mean.copy_from_slice(&b[2]);
                n.running_var.copy_from_slice(&b[3]);
                n.momentum = b[4][0];
                n.eps = b[4][1];
            }
            Layer::Lrn(l) => {
                l.params.alpha = b[0][0];
                l.params.beta = b[0][1];
                l.params.k = b[0][2];
            }
            Layer::Dropout { rate, .. } => *rate = b[0][0],
            Layer::Linear(l) => {
                l.weight.value.data_mut().copy_from_slice(&b[0]);
                l.bias.value.data_mut().copy_from_slice(&b[1]);
            }
            _ => {}
        }
        Ok(())
    }
}

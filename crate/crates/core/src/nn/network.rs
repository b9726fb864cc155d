use rand::SeedableRng;

use super::layer::{Layer, LayerState, Param};
use super::ops::{self, Mode};
use super::Tensor;
use crate::error::{Error, Result};
use crate::rng::Rng64;

/// Position of a ChaCha stream, enough to continue it exactly.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RngState {
    pub seed: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng64) -> Self {
        Self {
            seed: rng.get_seed(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Rng64 {
        let mut rng = Rng64::from_seed(self.seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}

/// A fixed sequence of layers trained by plain reverse-order backprop.
/// The network owns the random stream that drives dropout.
#[derive(Debug, Clone)]
pub struct Network {
    pub layers: Vec<Layer>,
    rng: Rng64,
}

impl Network {
    pub fn new(layers: Vec<Layer>, dropout_seed: u64) -> Self {
        Self {
            layers,
            rng: crate::rng::rng(dropout_seed),
        }
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        match mode {
            Mode::Eval => self.predict(x),
            Mode::Train => {
                let mut h = x.clone();
                for layer in &mut self.layers {
                    h = layer.forward_train(h, &mut self.rng)?;
                }
                Ok(h)
            }
        }
    }

    /// Replaces batch-norm running statistics with the plain average of per-batch
    /// statistics over `batches`, computed with dropout off. Dropout ahead of a
    /// batch-norm layer inflates the variance it sees in train mode, so momentum
    /// estimates gathered during training overstate what eval mode receives.
    /// Parameters and the dropout stream are left alone.
    pub fn refresh_batch_norm(&mut self, batches: impl IntoIterator<Item = Tensor>) -> Result<()> {
        let mut sums: Vec<Option<(Vec<f64>, Vec<f64>)>> = vec![None; self.layers.len()];
        let mut count = 0usize;
        for x in batches {
            let mut h = x;
            for (layer, sum) in self.layers.iter().zip(sums.iter_mut()) {
                h = match layer {
                    Layer::BatchNorm2d(b) => {
                        let (y, _, stats) =
                            ops::batchnorm2d_train(&h, b.gamma.value.data(), b.beta.value.data(), b.eps)?;
                        let unbias = stats.count as f64 / (stats.count - 1) as f64;
                        let (m, v) =
                            sum.get_or_insert_with(|| (vec![0.0; stats.mean.len()], vec![0.0; stats.var.len()]));
                        m.iter_mut().zip(&stats.mean).for_each(|(a, b)| *a += b);
                        v.iter_mut().zip(&stats.var).for_each(|(a, b)| *a += b * unbias);
                        y
                    }
                    _ => layer.forward_eval(&h)?,
                };
            }
            count += 1;
        }
        for (layer, sum) in self.layers.iter_mut().zip(sums) {
            if let (Layer::BatchNorm2d(b), Some((m, v))) = (layer, sum) {
                b.running_mean = m.iter().map(|s| s / count as f64).collect();
                b.running_var = v.iter().map(|s| s / count as f64).collect();
            }
        }
        Ok(())
    }

    /// Eval-mode forward; never mutates the network.
    pub fn predict(&self, x: &Tensor) -> Result<Tensor> {
        let mut h = x.clone();
        for layer in &self.layers {
            h = layer.forward_eval(&h)?;
        }
        Ok(h)
    }

    /// Backpropagates `grad` (with respect to the last train-mode output),
    /// accumulating into parameter gradients. Returns the input gradient.
    pub fn backward(&mut self, grad: Tensor) -> Result<Tensor> {
        let mut g = grad;
        for layer in self.layers.iter_mut().rev() {
            g = layer.backward(g)?;
        }
        Ok(g)
    }

    pub fn zero_grad(&mut self) {
        self.layers.iter_mut().for_each(Layer::zero_grad);
    }

    pub fn params_mut(&mut self) -> Vec<&mut Param> {
        self.layers.iter_mut().flat_map(Layer::params_mut).collect()
    }

    pub fn params(&self) -> Vec<&Param> {
        self.layers.iter().flat_map(Layer::params).collect()
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.len()).sum()
    }

    /// Output shape after every layer for the given input shape.
    pub fn output_shapes(&self, input: &[usize]) -> Result<Vec<(&'static str, Vec<usize>)>> {
        let mut shape = input.to_vec();
        let mut out = Vec::with_capacity(self.layers.len());
        for layer in &self.layers {
            shape = layer.output_shape(&shape)?;
            out.push((layer.name(), shape.clone()));
        }
        Ok(out)
    }

    pub fn state(&self) -> Vec<LayerState> {
        self.layers.iter().map(Layer::state).collect()
    }

    pub fn load_state(&mut self, states: &[LayerState]) -> Result<()> {
        if states.len() != self.layers.len() {
            return Err(Error::Shape(format!(
                "stored network has {} layers, expected {}",
                states.len(),
                self.layers.len()
            )));
        }
        for (layer, state) in self.layers.iter_mut().zip(states) {
            layer.load_state(state)?;
        }
        Ok(())
    }

    pub fn rng_state(&self) -> RngState {
        RngState::capture(&self.rng)
    }

    pub fn set_rng_state(&mut self, state: &RngState) {
        self.rng = state.restore();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn refresh_averages_dropout_free_batch_stats() {
        use crate::nn::BatchNorm2d;
        let mut net = Network::new(vec![Layer::dropout(0.5), Layer::BatchNorm2d(BatchNorm2d::new(1))], 3);
        let a = Tensor::new(vec![2, 1, 1, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let b = Tensor::new(vec![2, 1, 1, 2], vec![0.0, 0.0, 0.0, 4.0]).unwrap();
        let before = net.rng_state();
        net.refresh_batch_norm([a, b]).unwrap();
        assert_eq!(net.rng_state(), before);
        let Layer::BatchNorm2d(bn) = &net.layers[1] else {
            unreachable!()
        };
        // means 2.5 and 1; unbiased variances 5/3 and 4
        assert!((bn.running_mean[0] - 1.75).abs() < 1e-12);
        assert!((bn.running_var[0] - (5.0 / 3.0 + 4.0) / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rng_state_round_trip() {
        let mut r = crate::rng::rng(5);
        let _: u64 = r.gen();
        let _: u32 = r.gen();
        let mut copy = RngState::capture(&r).restore();
        for _ in 0..10 {
            assert_eq!(r.gen::<u64>(), copy.gen::<u64>());
        }
    }
}

//! Minimal CNN engine: f64 tensors, layer-sequence backprop, Adam and a plateau scheduler.

mod checkpoint;
mod layer;
mod loss;
mod network;
pub mod ops;
mod optim;
mod tensor;

pub use checkpoint::Checkpoint;
pub use layer::{BatchNorm2d, Conv2d, Layer, LayerState, Linear, Lrn, Param};
pub use loss::{bce_loss, cross_entropy_loss, BCE_EPS};
pub use network::{Network, RngState};
pub use ops::{LrnParams, Mode};
pub use optim::{Adam, PlateauScheduler};
pub use tensor::Tensor;

/// Maps `0..n` through `f`, in parallel when the `parallel` feature is on.
/// Output order is always index order.
pub(crate) fn par_map<T: Send>(n: usize, f: impl Fn(usize) -> T + Sync + Send) -> Vec<T> {
    #[cfg(feature = "parallel")]
    {
        use rayon::prelude::*;
        (0..n).into_par_iter().map(f).collect()
    }
    #[cfg(not(feature = "parallel"))]
    {
        (0..n).map(f).collect()
    }
}

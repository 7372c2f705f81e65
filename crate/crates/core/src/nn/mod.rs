//! Minimal neural network engine: encoder, projection head and classifier,
//! with exact reverse-mode gradients and momentum SGD.

mod arch;
mod cross_entropy;
pub mod gradcheck;
mod network;
mod params;
mod sgd;

pub use arch::{LayerSpec, ModelArchitecture, Shape3};
pub use cross_entropy::cross_entropy;
pub use gradcheck::finite_diff_grad;
pub use network::{ForwardTrace, Network};
pub use params::{Gradients, ModelWeights, ParamSet, Tensor};
pub use sgd::{sgd_step, SgdParams};

/// Floating-point type the engine can be instantiated with.
///
/// Training runs in `f32`; the gradient checks run the same kernels in `f64`.
pub trait Scalar:
    num_traits::Float
    + std::ops::AddAssign
    + std::ops::MulAssign
    + std::iter::Sum
    + Default
    + std::fmt::Debug
    + Send
    + Sync
    + 'static
{
    fn of(x: f64) -> Self {
        <Self as num_traits::NumCast>::from(x).expect("finite cast")
    }

    fn as_f64(self) -> f64 {
        num_traits::ToPrimitive::to_f64(&self).unwrap_or(f64::NAN)
    }
}

impl Scalar for f32 {}
impl Scalar for f64 {}

use super::{Float, Tensor};
use crate::rng::Pcg32;

/// Inverted dropout. In training each element, in row-major order, is dropped
/// when its uniform draw falls below `rate`; survivors are scaled by
/// `1 / (1 - rate)`. Returns the output and the multiplier mask. A zero rate
/// or inference mode is the identity and consumes no draws.
pub fn dropout_forward<T: Float>(x: &Tensor<T>, rate: f64, training: bool, rng: &mut Pcg32) -> (Tensor<T>, Option<Vec<T>>) {
    if !training || rate == 0.0 {
        return (x.clone(), None);
    }
    let keep = T::from_f64(1.0 / (1.0 - rate));
    let mask: Vec<T> = (0..x.len())
        .map(|_| if rng.next_f64() < rate { T::zero() } else { keep })
        .collect();
    let data = x.data().iter().zip(&mask).map(|(&v, &m)| v * m).collect();
    (Tensor::new(x.shape().to_vec(), data).expect("same shape"), Some(mask))
}

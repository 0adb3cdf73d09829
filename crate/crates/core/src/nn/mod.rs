//! Small sequential network engine generic over `f32`/`f64`.

mod activation;
mod adam;
mod checkpoint;
mod conv;
mod dense;
mod dropout;
mod float;
mod gradcheck;
mod graph;
mod loss;
mod norm;
mod params;
mod spec;
mod tensor;

pub use activation::{relu_like_backward, relu_like_forward, softmax_rows, Activation, DEFAULT_LEAKY_ALPHA};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use checkpoint::{
    checkpoint_from_bytes, checkpoint_precision, checkpoint_to_bytes, load_checkpoint, save_checkpoint, CHECKPOINT_MAGIC,
};
pub use conv::{conv2d_backward, conv2d_forward, conv3d_backward, conv3d_forward, ConvGrads, KERNEL};
pub use dense::{dense_backward, dense_forward, DenseGrads};
pub use dropout::dropout_forward;
pub use float::{Float, Precision};
pub use gradcheck::{grad_check, relative_error, without_dropout, GradCheckConfig, GradCheckReport};
pub use graph::{backward, forward, predict_proba, update_running_stats, Grads, LayerGrads, Mode, Trace};
pub use loss::{softmax_cross_entropy, LossOutput};
pub use norm::{batchnorm_backward, batchnorm_forward, BatchStats, NormCache, NormGrads, NormParams};
pub use params::{expected_shapes, init_bound, init_layer, init_params, LayerParams, Params};
pub use spec::{
    count_params, Layer, LayerSpec, ModelSpec, ParamCount, DEFAULT_BN_EPSILON, DEFAULT_BN_MOMENTUM,
};
pub use tensor::Tensor;

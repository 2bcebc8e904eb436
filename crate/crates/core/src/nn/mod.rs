//! Numeric core: tensors, the model's forward/backward operations,
//! optimizers, and a finite-difference gradient checker.

pub mod gradcheck;
pub mod ops;
pub mod optim;
pub mod tensor;

pub use gradcheck::grad_check;
pub use ops::{
    argmax_first, conv_text, conv_text_backward, dropout_apply, dropout_backward, linear,
    linear_backward, max_pool_1max, max_pool_columns, relu, relu_backward, Mode,
};
pub use optim::{Optimizer, OptimizerKind};
pub use tensor::{axpy, cosine, cosine_backward, dot, norm, Tensor};

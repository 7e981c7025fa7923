//! Dense and sparse matrices, the differentiation tape, the optimizer and
//! seeded randomness.

mod adam;
mod param;
mod real;
mod rng;
mod sparse;
mod tape;
mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use param::{ParamId, ParamStore, Parameter};
pub use real::Real;
pub use rng::Rng;
pub(crate) use rng::fnv1a64;
pub use sparse::SparseMatrix;
pub use tape::{sigmoid_scalar, softmax_rows, softplus, PairTerm, Tape, Var};
pub(crate) use tape::check_rate;
pub(crate) use tensor::dot;
pub use tensor::Tensor;

//! Numeric building blocks: dense matrices, a gradient tape and seeded
//! random streams.

mod rng;
mod tape;
mod tensor;

pub use rng::{Rng, RNG_ALGORITHM};
pub use tape::{Gradients, Tape, Var};
pub use tensor::{sigmoid, Axis, BinaryOp, Broadcast, ReduceKind, Tensor, UnaryOp, DIV_FLOOR};

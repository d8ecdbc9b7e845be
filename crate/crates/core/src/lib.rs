//! Visual question answering with a second, answer-conditioned attention head
//! that drives a recurrent justification decoder, plus the pointing and text
//! metrics used to evaluate both.

pub mod data;
pub mod error;
pub mod eval;
pub mod grid;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{PjxError, Result};
pub use tensor::{Graph, ParamId, ParamStore, Tensor, Var};

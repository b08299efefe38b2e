//! Neural sentence classification: feed-forward, convolutional, Elman
//! recurrent and LSTM models over pre-trained embeddings or hashed word
//! features, with hand-written backpropagation, Adagrad and L-BFGS training,
//! and a reproducible experiment harness.

pub mod embeddings;
pub mod error;
pub mod harness;
pub mod models;
pub mod optim;
pub mod tensor;
pub mod text;

pub use error::{Error, ErrorKind, Result};
pub use models::{init_params, ArchKind, ArchSpec, Grads, Input, ModelParams, SeqInput};
pub use tensor::{Rng, Tensor};
pub use text::{TokenSeq, Vocabulary};

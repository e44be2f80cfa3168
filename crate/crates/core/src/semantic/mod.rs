//! Semantic stream: activity descriptions and their fixed-width text encoding.

pub mod encoder;
pub mod interpreter;

pub use encoder::{encode_text, fnv1a64, tokenize, SEM_DIM};
pub use interpreter::{interpret, ActivityDescription, DescriptionSource, InterpreterConfig, InterpreterKind};

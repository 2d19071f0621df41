//! Model files, result records and CSV tables.

pub mod model;
pub mod report;

pub use model::{load_model, LoadedModel, ModelFile};

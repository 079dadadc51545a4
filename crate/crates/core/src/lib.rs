//! Neural-symbolic COVID-19 chest X-ray diagnosis: symptom and morphology
//! stub networks, a CART tree over their outputs, four explanation
//! representations, and the accuracy / feedback analyses.

pub mod data;
pub mod error;
pub mod eval;
pub mod explain;
pub mod fsutil;
pub mod image;
pub mod neural;
pub mod pipeline;
pub mod tree;

pub use error::{Error, Result};

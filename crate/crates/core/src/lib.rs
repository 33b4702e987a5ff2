//! State-grounded embodied planning toolkit.

pub mod dataset;
pub mod engine;
pub mod gateway;
pub mod harness;
pub mod pipeline;
pub mod text;
pub mod world;

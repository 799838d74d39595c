//! AMR-augmented dialogue generation: PENMAN graph handling, a sequence
//! encoder and a relation-aware graph encoder feeding a dual-attention
//! decoder, training, and n-gram evaluation metrics.

pub mod amr;
pub mod decoder;
pub mod encoders;
pub mod metrics;
pub mod model;
pub mod numerics;
pub mod pipeline;
pub mod training;

pub mod attention;
pub mod cli;
pub mod config;
pub mod error;
pub mod eval;
pub mod gp;
pub mod image;
pub mod graph;
pub mod model;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;

pub mod boundary;
pub mod config;
pub mod eval;
pub mod filter;
pub mod geometry;
pub mod landmark;
pub mod linefit;
pub mod mask;
pub mod pipeline;
pub mod simulator;

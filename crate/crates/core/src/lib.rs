pub mod cli;
pub mod dataset;
pub mod dfnet;
pub mod geometry;
pub mod objective;
pub mod synth;
pub mod tensor;
pub mod train;

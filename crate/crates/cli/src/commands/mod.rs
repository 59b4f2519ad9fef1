pub mod eval;
pub mod extract;
pub mod plot;
pub mod preprocess;
pub mod synth;
pub mod train;

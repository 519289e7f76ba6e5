pub mod embed;
pub mod eval;
pub mod gen;
pub mod rank;
pub mod train;
pub mod visualize;

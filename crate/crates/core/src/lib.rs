pub mod numcore;
pub mod network;
pub mod pou;
pub mod pde;
pub mod train;
pub mod experiments;
pub mod cli;

pub mod autodiff;
pub mod config;
pub mod data;
pub mod eval;
pub mod network;
pub mod oracle;
pub mod physics;
pub mod rng;
pub mod sampling;
pub mod training;

pub mod env;
pub mod maze;
pub mod nn;
pub mod terrain;
pub mod rl;
pub mod meta;
pub mod analysis;
pub mod cli;

//! Check routines shared by the integration tests and the acceptance run.
#![allow(dead_code)]

pub mod architecture;
pub mod gradients;
pub mod oracles;
pub mod preprocess;

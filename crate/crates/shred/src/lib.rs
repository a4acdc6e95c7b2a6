//! Setwise variable selection with generalized FDR control: model fitting,
//! the simulation harness, file formats and the `shred` command line.

pub mod cli;
pub mod error;
pub mod io;
pub mod models;
pub mod pipeline;
pub mod simulation;
pub mod verify;

pub use error::ShredError;

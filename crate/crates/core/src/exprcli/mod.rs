pub mod expr;
pub mod registry;
pub mod run;

pub use run::{run, Command, Inputs, Outcome, OutputFormat, RunConfig};

//! Command-line driver: config parsing, mode orchestration and report output.

pub mod config;
pub mod emit;
pub mod run;

pub use config::{parse_config, Mode, Overrides, RunConfig};
pub use run::{run, Outcome};

/// Process exit status for an outcome.
pub fn exit_code(outcome: &Outcome) -> u8 {
    if outcome.feasible {
        0
    } else {
        2
    }
}

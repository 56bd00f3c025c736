//! Library side of the `nornet` command: config files, runs and the
//! subcommands behind the binary.

pub mod budget;
pub mod config;
pub mod error;
pub mod gradcheck;
pub mod run;
pub mod sweep;

pub use budget::{cmd_budget, cmd_budget_table};
pub use config::{Resolved, RunConfig};
pub use error::{exit, CliError, CliResult};
pub use gradcheck::{cmd_gradcheck, CheckHead, GradCheckSpec};
pub use run::{cmd_eval, cmd_train, EvalSplit, RunSpec, TrainReport};
pub use sweep::{cmd_sweep, SweepTable};

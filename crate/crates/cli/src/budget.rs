use nornet::budget::{emit_sizing_table, solve_hidden_size, Sizing, SizingTable};
use nornet::model::{LayerFamily, Task};

use crate::error::{CliError, CliResult};

/// Hidden size of `family` under the `task` preset closest to `budget`.
pub fn cmd_budget(task: Task, family: LayerFamily, budget: usize) -> CliResult<Sizing> {
    let template = task.model_config(family, 1);
    solve_hidden_size(&template, budget).map_err(|e| CliError::config("budget", e.to_string()))
}

/// The full sizing table of every task, budget and table family.
pub fn cmd_budget_table() -> CliResult<SizingTable> {
    Ok(emit_sizing_table(&Task::ALL, &LayerFamily::TABLE_COLUMNS)?)
}

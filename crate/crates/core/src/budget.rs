//! Closed-form trainable-parameter counts and hidden-size solving.
//!
//! Counts include every weight and bias of the recurrent stack and the head,
//! and exclude the frozen embeddings. These formulas are written out
//! independently of the layer builders so the two can be checked against
//! each other.

use std::fmt;

use crate::error::{Error, Result};
use crate::model::{HeadConfig, LayerFamily, ModelConfig, Task};
use crate::nor::Tier2Input;

/// `gates · (h·d + h² + h)`.
pub fn cell_count(gates: usize, input_dim: usize, hidden: usize) -> usize {
    gates * (hidden * input_dim + hidden * hidden + hidden)
}

/// One unidirectional layer of `family` reading `input_dim` features.
pub fn layer_count(family: &LayerFamily, input_dim: usize, h: usize) -> usize {
    let relu = |d| cell_count(1, d, h);
    let combiner = |outputs: usize| outputs * h * h + h;
    match *family {
        LayerFamily::Irnn => relu(input_dim),
        LayerFamily::Gru => cell_count(3, input_dim, h),
        LayerFamily::Lstm => cell_count(4, input_dim, h),
        LayerFamily::Ma { agents } => agents * relu(input_dim) + combiner(agents),
        LayerFamily::Ma2 { agents, wiring } => {
            let tier2_in = match wiring {
                Tier2Input::Tier1Own => h,
                Tier2Input::Tier1All => agents * h,
                Tier2Input::LayerInput => input_dim,
            };
            agents * (relu(input_dim) + relu(tier2_in)) + combiner(agents)
        }
        LayerFamily::Ms { one_tier, two_tier } => {
            (one_tier + two_tier) * relu(input_dim) + two_tier * relu(h) + combiner(one_tier + two_tier)
        }
        LayerFamily::Ss { paths } => paths * (relu(input_dim) + relu(paths * h)) + combiner(paths),
        LayerFamily::Gate { pairs } => 2 * pairs * relu(input_dim) + combiner(pairs),
    }
}

/// Head parameters for a per-step representation of `width` features. A CRF
/// adds a square transition matrix over the tags and two virtual states.
pub fn head_count(head: &HeadConfig, width: usize) -> usize {
    match *head {
        HeadConfig::Softmax { classes } => classes * width + classes,
        HeadConfig::Crf { tags } => tags * width + tags + (tags + 2) * (tags + 2),
    }
}

/// Exact trainable-parameter count of `config`. `hidden = 0` is accepted and
/// leaves only the head's bias-like terms.
pub fn count_params(config: &ModelConfig) -> usize {
    let h = config.hidden;
    let directions = if config.bidirectional { 2 } else { 1 };
    let mut total = 0;
    let mut input = config.input_dim;
    for _ in 0..config.layers {
        total += directions * layer_count(&config.family, input, h);
        input = directions * h;
    }
    total + head_count(&config.head, directions * h)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Sizing {
    pub hidden: usize,
    pub count: usize,
    pub budget: usize,
}

impl Sizing {
    pub fn delta(&self) -> i64 {
        self.count as i64 - self.budget as i64
    }
}

impl fmt::Display for Sizing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "h={} count={} delta={:+}", self.hidden, self.count, self.delta())
    }
}

/// Hidden size whose count is nearest `budget`, the smaller one on a tie.
/// The template's own `hidden` is ignored.
pub fn solve_hidden_size(template: &ModelConfig, budget: usize) -> Result<Sizing> {
    let count_at = |h: usize| {
        let mut c = template.clone();
        c.hidden = h;
        count_params(&c)
    };
    let minimum = count_at(1);
    if budget < minimum {
        return Err(Error::contract(format!("budget below minimum: {budget} < {minimum} at h=1")));
    }
    let mut hi = 1;
    while count_at(hi) < budget {
        hi *= 2;
    }
    let mut lo = hi / 2;
    // Smallest h with count(h) >= budget lies in (lo, hi].
    while hi - lo > 1 {
        let mid = lo + (hi - lo) / 2;
        if count_at(mid) >= budget {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    let above = count_at(hi);
    let pick = if hi > 1 && budget - count_at(hi - 1) <= above - budget { hi - 1 } else { hi };
    Ok(Sizing {
        hidden: pick,
        count: count_at(pick),
        budget,
    })
}

/// Allowed deviation from a published hidden size: ±1 for single cells,
/// ±2 for NOR layers whose exact counting convention is not pinned down.
pub fn reference_tolerance(family: &LayerFamily) -> usize {
    match family {
        LayerFamily::Irnn | LayerFamily::Gru | LayerFamily::Lstm => 1,
        _ => 2,
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizingCell {
    pub family: LayerFamily,
    pub sizing: Sizing,
    pub reference: Option<usize>,
}

impl SizingCell {
    pub fn off_by(&self) -> Option<i64> {
        self.reference.map(|r| self.sizing.hidden as i64 - r as i64)
    }

    pub fn mismatch(&self) -> bool {
        self.off_by()
            .is_some_and(|d| d.unsigned_abs() as usize > reference_tolerance(&self.family))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizingRow {
    pub task: Task,
    pub budget: usize,
    pub cells: Vec<SizingCell>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SizingTable {
    pub families: Vec<LayerFamily>,
    pub rows: Vec<SizingRow>,
    pub notes: Vec<String>,
}

/// Solves every (task, budget, family) combination and attaches the
/// published size where one exists.
pub fn emit_sizing_table(tasks: &[Task], families: &[LayerFamily]) -> Result<SizingTable> {
    let mut rows = Vec::new();
    for &task in tasks {
        for (b, &budget) in task.budgets().iter().enumerate() {
            let mut cells = Vec::with_capacity(families.len());
            for family in families {
                let sizing = solve_hidden_size(&task.model_config(*family, 1), budget)?;
                let reference = LayerFamily::TABLE_COLUMNS
                    .iter()
                    .position(|f| f == family)
                    .map(|col| task.reference_sizes()[b][col]);
                cells.push(SizingCell {
                    family: *family,
                    sizing,
                    reference,
                });
            }
            rows.push(SizingRow { task, budget, cells });
        }
    }
    let mut notes = Vec::new();
    if tasks.contains(&Task::Trec) && tasks.contains(&Task::Conll) {
        let (qc, ner) = (Task::Trec.reference_sizes(), Task::Conll.reference_sizes());
        for (b, (q, n)) in qc.iter().zip(&ner).enumerate() {
            if q.iter().zip(n).all(|(a, c)| a.abs_diff(*c) <= 1) {
                notes.push(format!(
                    "published {} {} k row nearly repeats the {} {} k row",
                    Task::Conll.name(),
                    Task::Conll.budgets()[b] / 1000,
                    Task::Trec.name(),
                    Task::Trec.budgets()[b] / 1000
                ));
            }
        }
    }
    for row in &rows {
        for cell in row.cells.iter().filter(|c| c.mismatch()) {
            notes.push(format!(
                "MISMATCH {} {} k {}: solved {} (count {}), published {}",
                row.task.name(),
                row.budget / 1000,
                cell.family.label(),
                cell.sizing.hidden,
                cell.sizing.count,
                cell.reference.expect("mismatch implies reference")
            ));
        }
    }
    Ok(SizingTable {
        families: families.to_vec(),
        rows,
        notes,
    })
}

impl SizingTable {
    pub fn mismatches(&self) -> impl Iterator<Item = (&SizingRow, &SizingCell)> {
        self.rows
            .iter()
            .flat_map(|r| r.cells.iter().map(move |c| (r, c)))
            .filter(|(_, c)| c.mismatch())
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("task,budget,family,hidden,count,delta,published,flag\n");
        for row in &self.rows {
            for c in &row.cells {
                out.push_str(&format!(
                    "{},{},{},{},{},{},{},{}\n",
                    row.task.name(),
                    row.budget,
                    c.family.label(),
                    c.sizing.hidden,
                    c.sizing.count,
                    c.sizing.delta(),
                    c.reference.map(|r| r.to_string()).unwrap_or_default(),
                    if c.mismatch() { "mismatch" } else { "" }
                ));
            }
        }
        out
    }
}

impl fmt::Display for SizingTable {
    /// One line per (task, budget); each entry is `solved` or
    /// `solved(published)!` when outside tolerance.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:<26}{:>8}", "task", "params")?;
        for fam in &self.families {
            write!(f, "{:>12}", fam.label())?;
        }
        writeln!(f)?;
        for row in &self.rows {
            write!(f, "{:<26}{:>8}", row.task.title(), format!("{} k", row.budget / 1000))?;
            for c in &row.cells {
                let text = match c.reference {
                    Some(r) if c.mismatch() => format!("{}({r})!", c.sizing.hidden),
                    _ => c.sizing.hidden.to_string(),
                };
                write!(f, "{text:>12}")?;
            }
            writeln!(f)?;
        }
        for note in &self.notes {
            writeln!(f, "note: {note}")?;
        }
        Ok(())
    }
}

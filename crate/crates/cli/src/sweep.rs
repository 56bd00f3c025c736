use std::fmt;
use std::fs;

use nornet::model::LayerFamily;

use crate::error::{CliError, CliResult};
use crate::run::{prepare, train_prepared, RunSpec};

#[derive(Clone, Debug, PartialEq)]
pub struct SweepRow {
    pub family: LayerFamily,
    pub hidden: usize,
    /// `(seed, metric)` in seed-list order.
    pub runs: Vec<(u64, f64)>,
    pub mean: f64,
    /// Sample standard deviation; 0 for a single run.
    pub std: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepTable {
    pub rows: Vec<SweepRow>,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

impl SweepTable {
    /// `family,hidden,seed,metric` rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("family,hidden,seed,metric\n");
        for r in &self.rows {
            for (seed, m) in &r.runs {
                out.push_str(&format!("{},{},{seed},{m}\n", r.family.label(), r.hidden));
            }
        }
        out
    }
}

impl fmt::Display for SweepTable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<10} {:>6} {:>5} {:>10} {:>10}", "model", "hidden", "runs", "mean", "std")?;
        for r in &self.rows {
            writeln!(
                f,
                "{:<10} {:>6} {:>5} {:>10.4} {:>10.4}",
                r.family.label(),
                r.hidden,
                r.runs.len(),
                r.mean,
                r.std
            )?;
        }
        Ok(())
    }
}

/// Trains one run per (family, seed) and aggregates the headline metric.
/// Runs execute on up to `jobs` threads and share the loaded data; results
/// are gathered in seed order.
pub fn cmd_sweep(spec: &RunSpec, seeds: &[u64], families: &[LayerFamily], jobs: usize) -> CliResult<SweepTable> {
    if seeds.is_empty() {
        return Err(CliError::config(&spec.origin, "sweep needs at least one seed"));
    }
    spec.check_paths()?;
    spec.create_out_dir()?;
    let data = prepare(&spec.resolved)?;
    let families = if families.is_empty() { vec![spec.resolved.model.family] } else { families.to_vec() };

    let mut runs = Vec::new();
    for &family in &families {
        let mut config = spec.resolved.echo.clone();
        config.model.layer = Some(family);
        if config.model.budget.is_some() {
            config.model.hidden = None;
        }
        for &seed in seeds {
            let mut c = config.clone();
            c.train.seed = Some(seed);
            let dir = spec.out_dir.join(family.label().to_lowercase()).join(format!("seed-{seed}"));
            runs.push(RunSpec::new(&c, &spec.origin, dir)?);
        }
    }

    let jobs = jobs.max(1);
    let mut results: Vec<Option<CliResult<f64>>> = (0..runs.len()).map(|_| None).collect();
    std::thread::scope(|scope| {
        for (w, slots) in results.chunks_mut(runs.len().div_ceil(jobs)).enumerate() {
            let all = &runs;
            let data = &data;
            let base = w * all.len().div_ceil(jobs);
            scope.spawn(move || {
                for (i, slot) in slots.iter_mut().enumerate() {
                    *slot = Some(train_prepared(&all[base + i], data).map(|r| r.headline()));
                }
            });
        }
    });

    let mut rows = Vec::new();
    let mut results = results.into_iter().map(|r| r.expect("every run finished"));
    for (fi, &family) in families.iter().enumerate() {
        let mut metrics = Vec::new();
        for &seed in seeds {
            metrics.push((seed, results.next().expect("one result per run")?));
        }
        let values: Vec<f64> = metrics.iter().map(|m| m.1).collect();
        let (mean, std) = mean_std(&values);
        rows.push(SweepRow {
            family,
            hidden: runs[fi * seeds.len()].resolved.model.hidden,
            runs: metrics,
            mean,
            std,
        });
    }
    let table = SweepTable { rows };
    let path = spec.out_dir.join("sweep.csv");
    fs::write(&path, table.to_csv()).map_err(|e| CliError::io(&path, e))?;
    Ok(table)
}

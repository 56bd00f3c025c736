use nornet::data::{EmbeddingTable, Sample, Target};
use nornet::gradcheck::{analytic_gradients, compare, numeric_gradients, GradCheckReport, DEFAULT_STEP, DEFAULT_TOLERANCE};
use nornet::model::{HeadConfig, LayerFamily, Model, ModelConfig};
use nornet::nor::{unroll, Recurrent};
use nornet::{ParamStore, Result, Tape, Tensor, Var};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{CliError, CliResult};

/// Largest input, hidden and sequence size accepted.
pub const MAX_DIM: usize = 8;

const RESAMPLES: u64 = 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum CheckHead {
    /// Fixed random weighting of the layer outputs.
    None,
    Softmax,
    Crf,
}

#[derive(Clone, Copy, Debug)]
pub struct GradCheckSpec {
    pub family: LayerFamily,
    pub input_dim: usize,
    pub hidden: usize,
    pub steps: usize,
    pub seed: u64,
    pub head: CheckHead,
    /// Perturbs one analytic gradient entry before comparing.
    pub inject_fault: bool,
}

#[derive(Clone, Debug)]
pub struct GradCheckRun {
    pub report: GradCheckReport,
    /// Seed of the sample that was checked, after skipping samples too close
    /// to a ReLU or max kink.
    pub seed: u64,
}

fn fill(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.get_mut(id).data_mut() {
            *v = rng.random_range(-0.8..0.8);
        }
    }
}

fn check<F>(store: &ParamStore, f: F, inject_fault: bool) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let (_, mut analytic, margin) = analytic_gradients(store, &f)?;
    if inject_fault {
        let g = &mut analytic[0].data_mut()[0];
        *g = *g * 1.5 + 1e-3;
    }
    let numeric = numeric_gradients(store, &f, DEFAULT_STEP)?;
    Ok(compare(store, &analytic, &numeric, DEFAULT_STEP, DEFAULT_TOLERANCE, margin))
}

fn layer_check(spec: &GradCheckSpec, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let mut store = ParamStore::new();
    let layer = spec.family.build(&mut store, "layer", spec.input_dim, spec.hidden)?;
    fill(&mut store, rng);
    let xs: Vec<Vec<f64>> = (0..spec.steps)
        .map(|_| (0..spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    let ws: Vec<Vec<f64>> = (0..spec.steps)
        .map(|_| (0..spec.hidden).map(|_| rng.random_range(-1.0..1.0)).collect())
        .collect();
    check(
        &store,
        |tape| {
            let inputs: Vec<Var> = xs.iter().map(|x| tape.constant(Tensor::vector(x.clone()))).collect();
            let init = layer.zero_state(tape);
            let outs = unroll(tape, &layer, &inputs, init)?;
            let mut total = None;
            for (o, w) in outs.iter().zip(&ws) {
                let c = tape.constant(Tensor::vector(w.clone()));
                let p = tape.mul(*o, c)?;
                let s = tape.sum(p);
                total = Some(match total {
                    Some(t) => tape.add(t, s)?,
                    None => s,
                });
            }
            Ok(total.expect("at least one step"))
        },
        spec.inject_fault,
    )
}

fn model_check(spec: &GradCheckSpec, rng: &mut ChaCha8Rng) -> Result<GradCheckReport> {
    let crf = spec.head == CheckHead::Crf;
    let classes = 3;
    let config = ModelConfig {
        input_dim: spec.input_dim,
        hidden: spec.hidden,
        layers: 1,
        bidirectional: crf,
        family: spec.family,
        head: if crf { HeadConfig::Crf { tags: classes } } else { HeadConfig::Softmax { classes } },
        irnn_std: 0.001,
    };
    let mut model = Model::build(config)?;
    fill(&mut model.store, rng);
    let vocab = 2 + spec.steps;
    let rows: Vec<f64> = (0..vocab * spec.input_dim).map(|_| rng.random_range(-1.0..1.0)).collect();
    let emb = EmbeddingTable::from_rows(spec.input_dim, rows)?;
    let target = if crf {
        Target::Tags((0..spec.steps).map(|_| rng.random_range(0..classes)).collect())
    } else {
        Target::Class(rng.random_range(0..classes))
    };
    let sample = Sample {
        tokens: (2..vocab).collect(),
        target,
    };
    check(&model.store, |tape| model.loss(tape, &emb, &sample, None), spec.inject_fault)
}

/// Finite-difference check of one small layer or model. Samples whose
/// arguments sit too close to a kink are redrawn with the next seed.
pub fn cmd_gradcheck(spec: &GradCheckSpec) -> CliResult<GradCheckRun> {
    for (name, v) in [("input_dim", spec.input_dim), ("hidden", spec.hidden), ("steps", spec.steps)] {
        if v == 0 || v > MAX_DIM {
            return Err(CliError::config("gradcheck", format!("{name} must be in 1..={MAX_DIM}, got {v}")));
        }
    }
    let mut last = None;
    for seed in spec.seed..spec.seed + RESAMPLES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let report = match spec.head {
            CheckHead::None => layer_check(spec, &mut rng)?,
            _ => model_check(spec, &mut rng)?,
        };
        if report.kink_safe() {
            return Ok(GradCheckRun { report, seed });
        }
        last = Some(GradCheckRun { report, seed });
    }
    Ok(last.expect("at least one sample"))
}

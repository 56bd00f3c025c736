//! Central finite-difference verification of tape gradients.

use std::fmt;

use crate::error::Result;
use crate::params::ParamStore;
use crate::tensor::{Tape, Tensor, Var};

/// Default perturbation and acceptance threshold for fp64 checks.
pub const DEFAULT_STEP: f64 = 1e-5;
pub const DEFAULT_TOLERANCE: f64 = 1e-4;

/// Kink margins below this multiple of the step make a check unreliable.
const KINK_GUARD: f64 = 100.0;

/// `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

#[derive(Clone, Debug)]
pub struct ParamCheck {
    pub name: String,
    pub max_rel_error: f64,
    pub worst_index: usize,
    pub analytic: f64,
    pub numeric: f64,
}

#[derive(Clone, Debug)]
pub struct GradCheckReport {
    pub entries: Vec<ParamCheck>,
    pub step: f64,
    pub tolerance: f64,
    /// Smallest kink distance seen at the base point.
    pub kink_margin: f64,
}

impl GradCheckReport {
    pub fn max_error(&self) -> f64 {
        self.entries.iter().fold(0.0, |m, e| m.max(e.max_rel_error))
    }

    pub fn passed(&self) -> bool {
        self.entries.iter().all(|e| e.max_rel_error < self.tolerance)
    }

    /// Whether every ReLU/max argument sat far enough from its kink for the
    /// numeric derivative to be trustworthy.
    pub fn kink_safe(&self) -> bool {
        self.kink_margin > KINK_GUARD * self.step
    }
}

impl fmt::Display for GradCheckReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:<32} {:>12} {:>14} {:>14}", "parameter", "max rel err", "analytic", "numeric")?;
        for e in &self.entries {
            let mark = if e.max_rel_error < self.tolerance { "ok" } else { "FAIL" };
            writeln!(
                f,
                "{:<32} {:>12.3e} {:>14.6e} {:>14.6e} {mark}",
                e.name, e.max_rel_error, e.analytic, e.numeric
            )?;
        }
        write!(
            f,
            "max {:.3e} (tolerance {:.0e}, kink margin {:.3e}) -> {}",
            self.max_error(),
            self.tolerance,
            self.kink_margin,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}

/// Loss value, parameter gradients and kink margin at the current parameters.
pub fn analytic_gradients<F>(store: &ParamStore, f: &F) -> Result<(f64, Vec<Tensor>, f64)>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::with_params(store);
    let loss = f(&mut tape)?;
    let value = tape.value(loss).item();
    let margin = tape.kink_margin();
    let grads = tape.backward(loss)?.into_param_grads();
    Ok((value, grads, margin))
}

fn evaluate<F>(store: &ParamStore, f: &F) -> Result<f64>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut tape = Tape::with_params(store);
    let loss = f(&mut tape)?;
    Ok(tape.value(loss).item())
}

pub fn numeric_gradients<F>(store: &ParamStore, f: &F, step: f64) -> Result<Vec<Tensor>>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let mut work = store.clone();
    let mut out = Vec::with_capacity(store.len());
    for id in store.ids() {
        let mut grad = Tensor::zeros(store.get(id).shape());
        for j in 0..store.get(id).len() {
            let orig = store.get(id).data()[j];
            work.get_mut(id).data_mut()[j] = orig + step;
            let plus = evaluate(&work, f)?;
            work.get_mut(id).data_mut()[j] = orig - step;
            let minus = evaluate(&work, f)?;
            work.get_mut(id).data_mut()[j] = orig;
            grad.data_mut()[j] = (plus - minus) / (2.0 * step);
        }
        out.push(grad);
    }
    Ok(out)
}

pub fn compare(
    store: &ParamStore,
    analytic: &[Tensor],
    numeric: &[Tensor],
    step: f64,
    tolerance: f64,
    kink_margin: f64,
) -> GradCheckReport {
    let entries = store
        .iter()
        .map(|(id, name, _)| {
            let (a, n) = (&analytic[id.index()], &numeric[id.index()]);
            let mut worst = ParamCheck {
                name: name.to_string(),
                max_rel_error: 0.0,
                worst_index: 0,
                analytic: a.data()[0],
                numeric: n.data()[0],
            };
            for (j, (&x, &y)) in a.data().iter().zip(n.data()).enumerate() {
                let e = relative_error(x, y);
                if e > worst.max_rel_error {
                    worst.max_rel_error = e;
                    worst.worst_index = j;
                    worst.analytic = x;
                    worst.numeric = y;
                }
            }
            worst
        })
        .collect();
    GradCheckReport {
        entries,
        step,
        tolerance,
        kink_margin,
    }
}

/// Compares tape gradients of `f` against central differences for every
/// scalar in `store`.
pub fn grad_check<F>(store: &ParamStore, f: F, step: f64, tolerance: f64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape) -> Result<Var>,
{
    let (_, analytic, margin) = analytic_gradients(store, &f)?;
    let numeric = numeric_gradients(store, &f, step)?;
    Ok(compare(store, &analytic, &numeric, step, tolerance, margin))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_is_exact() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::scalar(3.0));
        let report = grad_check(
            &store,
            |tape| {
                let v = tape.param(x);
                Ok(tape.mul(v, v)?)
            },
            1e-5,
            1e-9,
        )
        .unwrap();
        assert!(report.max_error() < 1e-9, "{report}");
        assert!(report.passed());
    }

    #[test]
    fn detects_wrong_gradient() {
        let mut store = ParamStore::new();
        let x = store.add("x", Tensor::vector(vec![1.0, -2.0]));
        let f = |tape: &mut Tape| {
            let v = tape.param(x);
            let s = tape.sigmoid(v);
            Ok(tape.sum(s))
        };
        let (_, mut analytic, margin) = analytic_gradients(&store, &f).unwrap();
        analytic[0].data_mut()[1] *= 1.01;
        let numeric = numeric_gradients(&store, &f, 1e-5).unwrap();
        let report = compare(&store, &analytic, &numeric, 1e-5, 1e-4, margin);
        assert!(!report.passed());
        assert_eq!(report.entries[0].worst_index, 1);
    }

    #[test]
    fn relative_error_floor() {
        assert_eq!(relative_error(0.0, 0.0), 0.0);
        assert!((relative_error(1e-9, 0.0) - 0.1).abs() < 1e-12);
    }
}

//! Recurrent step functions: ReLU simple RNN, sigmoid gate RNN, GRU and LSTM.
//!
//! Every cell keeps one `(W, U, b)` triple per internal gate or candidate:
//! one for the simple and gate cells, three for GRU (`z`, `r`, candidate) and
//! four for LSTM (`i`, `f`, `o`, `g`).

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{fill_gaussian, fill_glorot, ParamId, ParamStore};
use crate::tensor::{Tape, Tensor, Var};

/// Standard deviation of IRNN input weights.
pub const IRNN_INPUT_STD: f64 = 0.001;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellKind {
    /// `relu(W x + U h + b)`
    Simple,
    /// `sigmoid(W x + U h + b)`
    Gate,
    Gru,
    Lstm,
}

impl CellKind {
    pub fn gate_count(self) -> usize {
        match self {
            CellKind::Simple | CellKind::Gate => 1,
            CellKind::Gru => 3,
            CellKind::Lstm => 4,
        }
    }

    pub fn has_memory_cell(self) -> bool {
        self == CellKind::Lstm
    }

    pub fn param_count(self, input_dim: usize, hidden: usize) -> usize {
        self.gate_count() * (hidden * input_dim + hidden * hidden + hidden)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GateWeights {
    pub w: ParamId,
    pub u: ParamId,
    pub b: ParamId,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CellParams {
    pub kind: CellKind,
    pub input_dim: usize,
    pub hidden: usize,
    pub gates: Vec<GateWeights>,
}

#[derive(Clone, Copy, Debug)]
pub struct CellState {
    pub h: Var,
    pub c: Option<Var>,
}

impl CellParams {
    /// Registers zero-valued weights under `prefix`.
    pub fn register(store: &mut ParamStore, prefix: &str, kind: CellKind, input_dim: usize, hidden: usize) -> Self {
        let suffixes: &[&str] = match kind {
            CellKind::Simple | CellKind::Gate => &[""],
            CellKind::Gru => &[".z", ".r", ".n"],
            CellKind::Lstm => &[".i", ".f", ".o", ".g"],
        };
        let gates = suffixes
            .iter()
            .map(|s| GateWeights {
                w: store.add(format!("{prefix}{s}.W"), Tensor::zeros(&[hidden, input_dim])),
                u: store.add(format!("{prefix}{s}.U"), Tensor::zeros(&[hidden, hidden])),
                b: store.add(format!("{prefix}{s}.b"), Tensor::zeros(&[hidden])),
            })
            .collect();
        CellParams {
            kind,
            input_dim,
            hidden,
            gates,
        }
    }

    /// IRNN for ReLU cells, Glorot-uniform weights and zero biases otherwise.
    pub fn init_default<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R, irnn_std: f64) {
        match self.kind {
            CellKind::Simple => irnn_init(self, store, rng, irnn_std).expect("simple cell"),
            _ => {
                for g in &self.gates {
                    fill_glorot(store.get_mut(g.w), rng);
                    fill_glorot(store.get_mut(g.u), rng);
                    store.get_mut(g.b).data_mut().fill(0.0);
                }
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.kind.param_count(self.input_dim, self.hidden)
    }

    pub fn zero_state(&self, tape: &mut Tape) -> CellState {
        let h = tape.constant(Tensor::zeros(&[self.hidden]));
        let c = self
            .kind
            .has_memory_cell()
            .then(|| tape.constant(Tensor::zeros(&[self.hidden])));
        CellState { h, c }
    }

    pub fn step(&self, tape: &mut Tape, x: Var, state: &CellState) -> Result<CellState> {
        match self.kind {
            CellKind::Simple => simple_rnn_step(tape, x, state, self),
            CellKind::Gate => gate_rnn_step(tape, x, state, self),
            CellKind::Gru => gru_step(tape, x, state, self),
            CellKind::Lstm => lstm_step(tape, x, state, self),
        }
    }

    fn check(&self, tape: &Tape, x: Var, state: &CellState, expected: CellKind) -> Result<()> {
        if self.kind != expected {
            return Err(Error::contract(format!("{:?} step on {:?} parameters", expected, self.kind)));
        }
        if tape.shape(x) != [self.input_dim] {
            return Err(Error::shape("cell input", &[self.input_dim], tape.shape(x)));
        }
        if tape.shape(state.h) != [self.hidden] {
            return Err(Error::shape("cell state", &[self.hidden], tape.shape(state.h)));
        }
        Ok(())
    }
}

/// `W x + U h + b`
fn preactivation(tape: &mut Tape, g: &GateWeights, x: Var, h: Var) -> Result<Var> {
    let (w, u, b) = (tape.param(g.w), tape.param(g.u), tape.param(g.b));
    let wx = tape.matmul(w, x)?;
    let uh = tape.matmul(u, h)?;
    let s = tape.add(wx, uh)?;
    tape.add(s, b)
}

pub fn simple_rnn_step(tape: &mut Tape, x: Var, state: &CellState, p: &CellParams) -> Result<CellState> {
    p.check(tape, x, state, CellKind::Simple)?;
    let a = preactivation(tape, &p.gates[0], x, state.h)?;
    Ok(CellState {
        h: tape.relu(a),
        c: None,
    })
}

pub fn gate_rnn_step(tape: &mut Tape, x: Var, state: &CellState, p: &CellParams) -> Result<CellState> {
    p.check(tape, x, state, CellKind::Gate)?;
    let a = preactivation(tape, &p.gates[0], x, state.h)?;
    Ok(CellState {
        h: tape.sigmoid(a),
        c: None,
    })
}

pub fn lstm_step(tape: &mut Tape, x: Var, state: &CellState, p: &CellParams) -> Result<CellState> {
    p.check(tape, x, state, CellKind::Lstm)?;
    let c = state
        .c
        .ok_or_else(|| Error::contract("LSTM step without a memory cell"))?;
    if tape.shape(c) != [p.hidden] {
        return Err(Error::shape("lstm memory", &[p.hidden], tape.shape(c)));
    }
    let h = state.h;
    let pre_i = preactivation(tape, &p.gates[0], x, h)?;
    let i = tape.sigmoid(pre_i);
    let pre_f = preactivation(tape, &p.gates[1], x, h)?;
    let f = tape.sigmoid(pre_f);
    let pre_o = preactivation(tape, &p.gates[2], x, h)?;
    let o = tape.sigmoid(pre_o);
    let pre_g = preactivation(tape, &p.gates[3], x, h)?;
    let g = tape.tanh(pre_g);
    let keep = tape.mul(c, f)?;
    let write = tape.mul(g, i)?;
    let c_next = tape.add(keep, write)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(squashed, o)?;
    Ok(CellState {
        h: h_next,
        c: Some(c_next),
    })
}

/// `z = σ(..)`, `r = σ(..)`, `ĥ = tanh(W x + U (r ⊙ h) + b)`,
/// `h' = (1 - z) ⊙ h + z ⊙ ĥ`.
pub fn gru_step(tape: &mut Tape, x: Var, state: &CellState, p: &CellParams) -> Result<CellState> {
    p.check(tape, x, state, CellKind::Gru)?;
    let h = state.h;
    let pre_z = preactivation(tape, &p.gates[0], x, h)?;
    let z = tape.sigmoid(pre_z);
    let pre_r = preactivation(tape, &p.gates[1], x, h)?;
    let r = tape.sigmoid(pre_r);
    let rh = tape.mul(r, h)?;
    let pre_n = preactivation(tape, &p.gates[2], x, rh)?;
    let candidate = tape.tanh(pre_n);
    let ones = tape.constant(Tensor::filled(&[p.hidden], 1.0));
    let keep = tape.sub(ones, z)?;
    let kept = tape.mul(keep, h)?;
    let written = tape.mul(z, candidate)?;
    Ok(CellState {
        h: tape.add(kept, written)?,
        c: None,
    })
}

/// Identity recurrence, zero bias, small Gaussian input weights.
pub fn irnn_init<R: Rng + ?Sized>(p: &CellParams, store: &mut ParamStore, rng: &mut R, std: f64) -> Result<()> {
    if p.kind != CellKind::Simple {
        return Err(Error::contract(format!(
            "IRNN initialization applies to ReLU simple cells, not {:?}",
            p.kind
        )));
    }
    let g = &p.gates[0];
    fill_gaussian(store.get_mut(g.w), std, rng);
    store.set(g.u, Tensor::identity(p.hidden))?;
    store.set(g.b, Tensor::zeros(&[p.hidden]))?;
    Ok(())
}

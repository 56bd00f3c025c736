//! Layers whose neurons are whole recurrent cells.
//!
//! A NOR layer is assembled from four components:
//!
//! - **I** copies the layer input once per subnetwork ([`component_i_copy`]);
//! - **M** hands every neuron its own previous output as memory
//!   ([`NorLayerState`]);
//! - **S** runs the subnetworks, each a stack of one or two recurrent neurons
//!   wired as described by [`SubnetSpec`];
//! - **O** concatenates the subnetwork outputs and applies a ReLU affine
//!   combiner ([`component_o_combine`]).
//!
//! The concrete topologies differ only in component S:
//!
//! | kind  | subnetworks                                       | tier-2 input          |
//! |-------|---------------------------------------------------|-----------------------|
//! | MA1   | `n` one-tier ReLU cells                           | -                     |
//! | MA2   | `n` two-tier ReLU stacks                          | own tier-1 output     |
//! | MS    | one-tier and two-tier stacks mixed                | own tier-1 output     |
//! | SS    | `n` two-tier stacks                               | all tier-1 outputs    |
//! | GATE  | `(sigmoid, ReLU)` pairs, outputs multiplied       | -                     |
//!
//! All neurons in a layer share one hidden size, and the combiner maps back to
//! that size.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::cells::{CellKind, CellParams, CellState};
use crate::error::{Error, Result};
use crate::params::{Linear, ParamStore};
use crate::tensor::{Tape, Var};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TopologyKind {
    Ma1,
    Ma2,
    Ms,
    Ss,
    Gate,
}

/// Where a second-tier neuron reads its input from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Tier2Input {
    /// Output of the first tier of the same subnetwork.
    #[default]
    Tier1Own,
    /// Concatenated first-tier outputs of every subnetwork, in order.
    Tier1All,
    /// The (copied) layer input.
    LayerInput,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Tier {
    pub kind: CellKind,
    pub hidden: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SubnetSpec {
    pub tiers: Vec<Tier>,
    pub wiring: Tier2Input,
}

impl SubnetSpec {
    pub fn one_tier(kind: CellKind, hidden: usize) -> Self {
        SubnetSpec {
            tiers: vec![Tier { kind, hidden }],
            wiring: Tier2Input::Tier1Own,
        }
    }

    pub fn two_tier(hidden: usize, wiring: Tier2Input) -> Self {
        SubnetSpec {
            tiers: vec![
                Tier {
                    kind: CellKind::Simple,
                    hidden,
                },
                Tier {
                    kind: CellKind::Simple,
                    hidden,
                },
            ],
            wiring,
        }
    }

    pub fn depth(&self) -> usize {
        self.tiers.len()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct NorTopology {
    pub kind: TopologyKind,
    pub subnetworks: Vec<SubnetSpec>,
    pub combiner_out_dim: usize,
}

impl NorTopology {
    /// `agents` parallel one-tier ReLU cells.
    pub fn multi_agent(agents: usize, hidden: usize) -> Self {
        NorTopology {
            kind: TopologyKind::Ma1,
            subnetworks: (0..agents).map(|_| SubnetSpec::one_tier(CellKind::Simple, hidden)).collect(),
            combiner_out_dim: hidden,
        }
    }

    /// `agents` parallel two-tier ReLU stacks.
    pub fn multi_agent_two_tier(agents: usize, hidden: usize, wiring: Tier2Input) -> Self {
        NorTopology {
            kind: TopologyKind::Ma2,
            subnetworks: (0..agents).map(|_| SubnetSpec::two_tier(hidden, wiring)).collect(),
            combiner_out_dim: hidden,
        }
    }

    /// One-tier subnetworks first, then two-tier ones.
    pub fn multi_scale(one_tier: usize, two_tier: usize, hidden: usize) -> Self {
        let mut subnetworks: Vec<SubnetSpec> =
            (0..one_tier).map(|_| SubnetSpec::one_tier(CellKind::Simple, hidden)).collect();
        subnetworks.extend((0..two_tier).map(|_| SubnetSpec::two_tier(hidden, Tier2Input::Tier1Own)));
        NorTopology {
            kind: TopologyKind::Ms,
            subnetworks,
            combiner_out_dim: hidden,
        }
    }

    /// `paths` two-tier stacks whose second tiers read every first tier.
    pub fn self_similar(paths: usize, hidden: usize) -> Self {
        NorTopology {
            kind: TopologyKind::Ss,
            subnetworks: (0..paths).map(|_| SubnetSpec::two_tier(hidden, Tier2Input::Tier1All)).collect(),
            combiner_out_dim: hidden,
        }
    }

    /// `pairs` of (sigmoid gate, ReLU generalization) cells.
    pub fn gated(pairs: usize, hidden: usize) -> Self {
        let subnetworks = (0..pairs)
            .flat_map(|_| {
                [
                    SubnetSpec::one_tier(CellKind::Gate, hidden),
                    SubnetSpec::one_tier(CellKind::Simple, hidden),
                ]
            })
            .collect();
        NorTopology {
            kind: TopologyKind::Gate,
            subnetworks,
            combiner_out_dim: hidden,
        }
    }

    pub fn hidden(&self) -> usize {
        self.subnetworks.first().map(|s| s.tiers[0].hidden).unwrap_or(0)
    }

    pub fn neuron_count(&self) -> usize {
        self.subnetworks.iter().map(SubnetSpec::depth).sum()
    }

    /// Number of vectors handed to component O.
    pub fn combined_outputs(&self) -> usize {
        match self.kind {
            TopologyKind::Gate => self.subnetworks.len() / 2,
            _ => self.subnetworks.len(),
        }
    }

    fn tier1_width(&self) -> usize {
        self.subnetworks.iter().map(|s| s.tiers[0].hidden).sum()
    }

    /// Input width of every neuron, `[subnet][tier]`.
    pub fn neuron_input_dims(&self, input_dim: usize) -> Vec<Vec<usize>> {
        self.subnetworks
            .iter()
            .map(|s| {
                let mut dims = vec![input_dim];
                if s.depth() == 2 {
                    dims.push(match s.wiring {
                        Tier2Input::Tier1Own => s.tiers[0].hidden,
                        Tier2Input::Tier1All => self.tier1_width(),
                        Tier2Input::LayerInput => input_dim,
                    });
                }
                dims
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::contract(format!("{:?} topology: {msg}", self.kind)));
        if self.subnetworks.is_empty() {
            return fail("no subnetworks".into());
        }
        if self.combiner_out_dim == 0 {
            return fail("combiner output dim is zero".into());
        }
        let h = self.hidden();
        for (i, s) in self.subnetworks.iter().enumerate() {
            if !(1..=2).contains(&s.depth()) {
                return fail(format!("subnetwork {i} has {} tiers", s.depth()));
            }
            if s.tiers.iter().any(|t| t.hidden != h || t.hidden == 0) {
                return fail(format!("subnetwork {i} hidden dims differ from {h}"));
            }
        }
        let depths = |d: usize| self.subnetworks.iter().all(|s| s.depth() == d);
        match self.kind {
            TopologyKind::Ma1 if !depths(1) => fail("all subnetworks must be one-tier".into()),
            TopologyKind::Ma2 if !depths(2) => fail("all subnetworks must be two-tier".into()),
            TopologyKind::Ss if !depths(2) => fail("all paths must be two-tier".into()),
            TopologyKind::Ss if self.subnetworks.iter().any(|s| s.wiring != Tier2Input::Tier1All) => {
                fail("second tiers must read all first-tier outputs".into())
            }
            TopologyKind::Gate => {
                if self.subnetworks.len() % 2 != 0 {
                    return fail("subnetworks must come in (gate, generalization) pairs".into());
                }
                for pair in self.subnetworks.chunks(2) {
                    let ok = depths(1) && pair[0].tiers[0].kind == CellKind::Gate && pair[1].tiers[0].kind == CellKind::Simple;
                    if !ok {
                        return fail("each pair must be a one-tier sigmoid gate followed by a one-tier ReLU cell".into());
                    }
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
}

/// Per-neuron memories `[subnet][tier]`.
#[derive(Clone, Debug)]
pub struct NorLayerState {
    pub memories: Vec<Vec<CellState>>,
}

#[derive(Clone, Debug)]
pub struct NorLayer {
    pub topology: NorTopology,
    pub input_dim: usize,
    pub neurons: Vec<Vec<CellParams>>,
    pub combiner: Linear,
}

impl NorLayer {
    pub fn register(store: &mut ParamStore, prefix: &str, topology: NorTopology, input_dim: usize) -> Result<Self> {
        topology.validate()?;
        let dims = topology.neuron_input_dims(input_dim);
        let neurons = topology
            .subnetworks
            .iter()
            .zip(&dims)
            .enumerate()
            .map(|(i, (s, d))| {
                s.tiers
                    .iter()
                    .zip(d)
                    .enumerate()
                    .map(|(t, (tier, &din))| {
                        CellParams::register(store, &format!("{prefix}.s{i}.t{t}"), tier.kind, din, tier.hidden)
                    })
                    .collect()
            })
            .collect();
        let concat_dim = topology.combined_outputs() * topology.hidden();
        let combiner = Linear::register(store, &format!("{prefix}.mlp"), concat_dim, topology.combiner_out_dim);
        Ok(NorLayer {
            topology,
            input_dim,
            neurons,
            combiner,
        })
    }

    pub fn init_default<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R, irnn_std: f64) {
        for neuron in self.neurons.iter().flatten() {
            neuron.init_default(store, rng, irnn_std);
        }
        self.combiner.init_glorot(store, rng);
    }

    pub fn output_dim(&self) -> usize {
        self.topology.combiner_out_dim
    }

    pub fn param_count(&self) -> usize {
        self.neurons.iter().flatten().map(CellParams::param_count).sum::<usize>() + self.combiner.param_count()
    }

    pub fn zero_state(&self, tape: &mut Tape) -> NorLayerState {
        NorLayerState {
            memories: self
                .neurons
                .iter()
                .map(|s| s.iter().map(|n| n.zero_state(tape)).collect())
                .collect(),
        }
    }

    pub fn step(&self, tape: &mut Tape, x: Var, state: &NorLayerState) -> Result<(Var, NorLayerState)> {
        let shape_ok = state.memories.len() == self.neurons.len()
            && state.memories.iter().zip(&self.neurons).all(|(m, n)| m.len() == n.len());
        if !shape_ok {
            return Err(Error::contract(format!(
                "state holds {} memories, layer has {} neurons",
                state.memories.iter().map(Vec::len).sum::<usize>(),
                self.topology.neuron_count()
            )));
        }
        if tape.shape(x) != [self.input_dim] {
            return Err(Error::shape("nor layer input", &[self.input_dim], tape.shape(x)));
        }

        let inputs = component_i_copy(x, self.neurons.len())?;
        let mut next: Vec<Vec<CellState>> = Vec::with_capacity(self.neurons.len());
        for ((neurons, memories), xi) in self.neurons.iter().zip(&state.memories).zip(&inputs) {
            next.push(vec![neurons[0].step(tape, *xi, &memories[0])?]);
        }

        let needs_all = self
            .topology
            .subnetworks
            .iter()
            .any(|s| s.depth() == 2 && s.wiring == Tier2Input::Tier1All);
        let all_tier1 = if needs_all {
            let outs: Vec<Var> = next.iter().map(|n| n[0].h).collect();
            Some(tape.concat(&outs, 0)?)
        } else {
            None
        };
        for (i, spec) in self.topology.subnetworks.iter().enumerate() {
            if spec.depth() < 2 {
                continue;
            }
            let input = match spec.wiring {
                Tier2Input::Tier1Own => next[i][0].h,
                Tier2Input::Tier1All => all_tier1.expect("built above"),
                Tier2Input::LayerInput => inputs[i],
            };
            let out = self.neurons[i][1].step(tape, input, &state.memories[i][1])?;
            next[i].push(out);
        }

        let subnet_outputs: Vec<Var> = next.iter().map(|n| n.last().expect("non-empty").h).collect();
        let combined = match self.topology.kind {
            TopologyKind::Gate => subnet_outputs
                .chunks(2)
                .map(|pair| tape.mul(pair[0], pair[1]))
                .collect::<Result<Vec<_>>>()?,
            _ => subnet_outputs,
        };
        let out = component_o_combine(tape, &combined, &self.combiner)?;
        Ok((out, NorLayerState { memories: next }))
    }

    fn expect_kind(&self, kind: TopologyKind) -> Result<()> {
        if self.topology.kind == kind {
            Ok(())
        } else {
            Err(Error::contract(format!("{kind:?} step on a {:?} layer", self.topology.kind)))
        }
    }
}

/// Component I: one copy of `x` per subnetwork.
pub fn component_i_copy(x: Var, n: usize) -> Result<Vec<Var>> {
    if n == 0 {
        return Err(Error::contract("component I needs at least one subnetwork"));
    }
    Ok(vec![x; n])
}

/// Component O: `relu(W_mlp [s_1; ...; s_m] + b_mlp)`.
pub fn component_o_combine(tape: &mut Tape, outputs: &[Var], combiner: &Linear) -> Result<Var> {
    if outputs.is_empty() {
        return Err(Error::contract("component O needs at least one output"));
    }
    let s = tape.concat(outputs, 0)?;
    if tape.shape(s) != [combiner.input_dim] {
        return Err(Error::shape("component O", &[combiner.input_dim], tape.shape(s)));
    }
    let pre = combiner.forward(tape, s)?;
    Ok(tape.relu(pre))
}

pub fn ma_nor_step(tape: &mut Tape, x: Var, state: &NorLayerState, layer: &NorLayer) -> Result<(Var, NorLayerState)> {
    layer.expect_kind(TopologyKind::Ma1)?;
    layer.step(tape, x, state)
}

pub fn ma2_nor_step(tape: &mut Tape, x: Var, state: &NorLayerState, layer: &NorLayer) -> Result<(Var, NorLayerState)> {
    layer.expect_kind(TopologyKind::Ma2)?;
    layer.step(tape, x, state)
}

pub fn ms_nor_step(tape: &mut Tape, x: Var, state: &NorLayerState, layer: &NorLayer) -> Result<(Var, NorLayerState)> {
    layer.expect_kind(TopologyKind::Ms)?;
    layer.step(tape, x, state)
}

pub fn ss_nor_step(tape: &mut Tape, x: Var, state: &NorLayerState, layer: &NorLayer) -> Result<(Var, NorLayerState)> {
    layer.expect_kind(TopologyKind::Ss)?;
    layer.step(tape, x, state)
}

pub fn gate_nor_step(tape: &mut Tape, x: Var, state: &NorLayerState, layer: &NorLayer) -> Result<(Var, NorLayerState)> {
    layer.expect_kind(TopologyKind::Gate)?;
    layer.step(tape, x, state)
}

/// Anything that can be stepped through time.
pub trait Recurrent {
    type State: Clone;

    fn input_dim(&self) -> usize;
    fn output_dim(&self) -> usize;
    fn zero_state(&self, tape: &mut Tape) -> Self::State;
    fn step(&self, tape: &mut Tape, x: Var, state: &Self::State) -> Result<(Var, Self::State)>;
}

impl Recurrent for CellParams {
    type State = CellState;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        self.hidden
    }

    fn zero_state(&self, tape: &mut Tape) -> CellState {
        CellParams::zero_state(self, tape)
    }

    fn step(&self, tape: &mut Tape, x: Var, state: &CellState) -> Result<(Var, CellState)> {
        let next = CellParams::step(self, tape, x, state)?;
        Ok((next.h, next))
    }
}

impl Recurrent for NorLayer {
    type State = NorLayerState;

    fn input_dim(&self) -> usize {
        self.input_dim
    }

    fn output_dim(&self) -> usize {
        NorLayer::output_dim(self)
    }

    fn zero_state(&self, tape: &mut Tape) -> NorLayerState {
        NorLayer::zero_state(self, tape)
    }

    fn step(&self, tape: &mut Tape, x: Var, state: &NorLayerState) -> Result<(Var, NorLayerState)> {
        NorLayer::step(self, tape, x, state)
    }
}

/// Either a single cell or a NOR layer, as used in a model's layer stack.
#[derive(Clone, Debug)]
pub enum RecurrentLayer {
    Cell(CellParams),
    Nor(NorLayer),
}

#[derive(Clone, Debug)]
pub enum LayerState {
    Cell(CellState),
    Nor(NorLayerState),
}

impl RecurrentLayer {
    pub fn param_count(&self) -> usize {
        match self {
            RecurrentLayer::Cell(c) => c.param_count(),
            RecurrentLayer::Nor(n) => n.param_count(),
        }
    }

    pub fn init_default<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R, irnn_std: f64) {
        match self {
            RecurrentLayer::Cell(c) => c.init_default(store, rng, irnn_std),
            RecurrentLayer::Nor(n) => n.init_default(store, rng, irnn_std),
        }
    }
}

impl Recurrent for RecurrentLayer {
    type State = LayerState;

    fn input_dim(&self) -> usize {
        match self {
            RecurrentLayer::Cell(c) => c.input_dim,
            RecurrentLayer::Nor(n) => n.input_dim,
        }
    }

    fn output_dim(&self) -> usize {
        match self {
            RecurrentLayer::Cell(c) => c.hidden,
            RecurrentLayer::Nor(n) => n.output_dim(),
        }
    }

    fn zero_state(&self, tape: &mut Tape) -> LayerState {
        match self {
            RecurrentLayer::Cell(c) => LayerState::Cell(c.zero_state(tape)),
            RecurrentLayer::Nor(n) => LayerState::Nor(n.zero_state(tape)),
        }
    }

    fn step(&self, tape: &mut Tape, x: Var, state: &LayerState) -> Result<(Var, LayerState)> {
        match (self, state) {
            (RecurrentLayer::Cell(c), LayerState::Cell(s)) => {
                let next = c.step(tape, x, s)?;
                Ok((next.h, LayerState::Cell(next)))
            }
            (RecurrentLayer::Nor(n), LayerState::Nor(s)) => {
                let (o, next) = n.step(tape, x, s)?;
                Ok((o, LayerState::Nor(next)))
            }
            _ => Err(Error::contract("layer/state kind mismatch")),
        }
    }
}

/// Threads the state through `inputs`, collecting one output per step.
pub fn unroll<L: Recurrent>(tape: &mut Tape, layer: &L, inputs: &[Var], initial: L::State) -> Result<Vec<Var>> {
    if inputs.is_empty() {
        return Err(Error::contract("unroll over an empty sequence"));
    }
    let mut state = initial;
    let mut outputs = Vec::with_capacity(inputs.len());
    for &x in inputs {
        let (o, next) = layer.step(tape, x, &state)?;
        outputs.push(o);
        state = next;
    }
    Ok(outputs)
}

/// `[fwd_t; bwd_t]` where the backward layer reads the sequence reversed.
pub fn bidirectional_wrap<L: Recurrent>(tape: &mut Tape, fwd: &L, bwd: &L, inputs: &[Var]) -> Result<Vec<Var>> {
    if fwd.input_dim() != bwd.input_dim() {
        return Err(Error::shape("bidirectional", &[fwd.input_dim()], &[bwd.input_dim()]));
    }
    let init = fwd.zero_state(tape);
    let forward = unroll(tape, fwd, inputs, init)?;
    let reversed: Vec<Var> = inputs.iter().rev().copied().collect();
    let init = bwd.zero_state(tape);
    let mut backward = unroll(tape, bwd, &reversed, init)?;
    backward.reverse();
    forward
        .into_iter()
        .zip(backward)
        .map(|(f, b)| tape.concat(&[f, b], 0))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    #[test]
    fn copy_produces_n_aliases() {
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::vector(vec![1.0, 2.0]));
        let copies = component_i_copy(x, 3).unwrap();
        assert_eq!(copies.len(), 3);
        for c in &copies {
            assert_eq!(tape.value(*c).data(), &[1.0, 2.0]);
        }
        assert_eq!(component_i_copy(x, 1).unwrap(), vec![x]);
        assert!(component_i_copy(x, 0).is_err());
    }

    #[test]
    fn copy_gradient_sums_over_copies() {
        let mut tape = Tape::new();
        let x = tape.variable(Tensor::vector(vec![0.3, -0.7]));
        let copies = component_i_copy(x, 4).unwrap();
        let cat = tape.concat(&copies, 0).unwrap();
        let loss = tape.sum(cat);
        let g = tape.backward(loss).unwrap();
        assert_eq!(g.get(x).unwrap().data(), &[4.0, 4.0]);
    }

    #[test]
    fn topology_invariants() {
        assert!(NorTopology::multi_agent(3, 4).validate().is_ok());
        assert!(NorTopology::multi_scale(2, 0, 4).validate().is_ok());
        let mut gate = NorTopology::gated(2, 3);
        assert!(gate.validate().is_ok());
        gate.subnetworks.pop();
        assert!(gate.validate().is_err());
        let mut ss = NorTopology::self_similar(3, 2);
        assert_eq!(ss.neuron_input_dims(5)[1], vec![5, 6]);
        ss.subnetworks[0].wiring = Tier2Input::Tier1Own;
        assert!(ss.validate().is_err());
        let mut ma = NorTopology::multi_agent(2, 3);
        ma.subnetworks[1].tiers[0].hidden = 4;
        assert!(ma.validate().is_err());
        let mut ma = NorTopology::multi_agent(2, 3);
        ma.kind = TopologyKind::Ma2;
        assert!(ma.validate().is_err());
    }

    #[test]
    fn wrong_kind_step_is_rejected() {
        let mut store = ParamStore::new();
        let layer = NorLayer::register(&mut store, "l", NorTopology::multi_agent(2, 2), 2).unwrap();
        let mut tape = Tape::with_params(&store);
        let x = tape.constant(Tensor::zeros(&[2]));
        let s = layer.zero_state(&mut tape);
        assert!(ma_nor_step(&mut tape, x, &s, &layer).is_ok());
        assert!(gate_nor_step(&mut tape, x, &s, &layer).is_err());
    }

    #[test]
    fn state_mismatch_is_rejected() {
        let mut store = ParamStore::new();
        let a = NorLayer::register(&mut store, "a", NorTopology::multi_agent(2, 2), 2).unwrap();
        let b = NorLayer::register(&mut store, "b", NorTopology::multi_agent(3, 2), 2).unwrap();
        let mut tape = Tape::with_params(&store);
        let x = tape.constant(Tensor::zeros(&[2]));
        let s = b.zero_state(&mut tape);
        assert!(a.step(&mut tape, x, &s).is_err());
    }

    #[test]
    fn unroll_rejects_empty() {
        let mut store = ParamStore::new();
        let layer = NorLayer::register(&mut store, "l", NorTopology::multi_agent(1, 2), 2).unwrap();
        let mut tape = Tape::with_params(&store);
        let s = layer.zero_state(&mut tape);
        assert!(unroll(&mut tape, &layer, &[], s).is_err());
    }
}

//! Full models: frozen embeddings, a stack of recurrent layers, and a
//! classification or tagging head.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::cells::{CellKind, CellParams, IRNN_INPUT_STD};
use crate::data::{EmbeddingTable, Sample, Target};
use crate::error::{Error, Result};
use crate::heads::{crf_neg_log_likelihood, crf_viterbi_decode, max_pool_over_time, softmax_cross_entropy, CrfParams};
use crate::nor::{bidirectional_wrap, unroll, NorLayer, NorTopology, Recurrent, RecurrentLayer, Tier2Input};
use crate::params::{Linear, ParamStore};
use crate::tensor::{Tape, Tensor, Var};
use crate::train::dropout_mask;

/// Layer type used throughout a model's stack.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum LayerFamily {
    Irnn,
    Gru,
    Lstm,
    Ma {
        #[serde(default = "three")]
        agents: usize,
    },
    Ma2 {
        #[serde(default = "three")]
        agents: usize,
        #[serde(default)]
        wiring: Tier2Input,
    },
    Ms {
        #[serde(default = "two")]
        one_tier: usize,
        #[serde(default = "two")]
        two_tier: usize,
    },
    Ss {
        #[serde(default = "three")]
        paths: usize,
    },
    Gate {
        #[serde(default = "three")]
        pairs: usize,
    },
}

fn two() -> usize {
    2
}

fn three() -> usize {
    3
}

impl LayerFamily {
    pub const MA: LayerFamily = LayerFamily::Ma { agents: 3 };
    pub const MA2: LayerFamily = LayerFamily::Ma2 {
        agents: 3,
        wiring: Tier2Input::Tier1Own,
    };
    pub const MS: LayerFamily = LayerFamily::Ms { one_tier: 2, two_tier: 2 };
    pub const SS: LayerFamily = LayerFamily::Ss { paths: 3 };
    pub const GATE: LayerFamily = LayerFamily::Gate { pairs: 3 };

    /// The seven families compared in the sizing table, in column order.
    pub const TABLE_COLUMNS: [LayerFamily; 7] = [
        LayerFamily::Irnn,
        LayerFamily::Gru,
        LayerFamily::Lstm,
        LayerFamily::MA,
        LayerFamily::MS,
        LayerFamily::SS,
        LayerFamily::GATE,
    ];

    pub fn label(&self) -> &'static str {
        match self {
            LayerFamily::Irnn => "IRNN",
            LayerFamily::Gru => "GRU",
            LayerFamily::Lstm => "LSTM",
            LayerFamily::Ma { .. } => "MA-NOR",
            LayerFamily::Ma2 { .. } => "MA2-NOR",
            LayerFamily::Ms { .. } => "MS-NOR",
            LayerFamily::Ss { .. } => "SS-NOR",
            LayerFamily::Gate { .. } => "Gate-NOR",
        }
    }

    /// Parses `irnn`, `gru`, `lstm`, `ma`, `ma2`, `ms`, `ss`, `gate` with
    /// default subnetwork counts.
    pub fn from_name(name: &str) -> Option<LayerFamily> {
        Some(match name.to_ascii_lowercase().trim_end_matches("-nor") {
            "irnn" | "rnn" => LayerFamily::Irnn,
            "gru" => LayerFamily::Gru,
            "lstm" => LayerFamily::Lstm,
            "ma" => LayerFamily::MA,
            "ma2" => LayerFamily::MA2,
            "ms" => LayerFamily::MS,
            "ss" => LayerFamily::SS,
            "gate" => LayerFamily::GATE,
            _ => return None,
        })
    }

    pub fn topology(&self, hidden: usize) -> Option<NorTopology> {
        match *self {
            LayerFamily::Irnn | LayerFamily::Gru | LayerFamily::Lstm => None,
            LayerFamily::Ma { agents } => Some(NorTopology::multi_agent(agents, hidden)),
            LayerFamily::Ma2 { agents, wiring } => Some(NorTopology::multi_agent_two_tier(agents, hidden, wiring)),
            LayerFamily::Ms { one_tier, two_tier } => Some(NorTopology::multi_scale(one_tier, two_tier, hidden)),
            LayerFamily::Ss { paths } => Some(NorTopology::self_similar(paths, hidden)),
            LayerFamily::Gate { pairs } => Some(NorTopology::gated(pairs, hidden)),
        }
    }

    pub fn build(&self, store: &mut ParamStore, prefix: &str, input_dim: usize, hidden: usize) -> Result<RecurrentLayer> {
        let kind = match self {
            LayerFamily::Irnn => CellKind::Simple,
            LayerFamily::Gru => CellKind::Gru,
            LayerFamily::Lstm => CellKind::Lstm,
            nor => {
                let topology = nor.topology(hidden).expect("nor family");
                return Ok(RecurrentLayer::Nor(NorLayer::register(store, prefix, topology, input_dim)?));
            }
        };
        Ok(RecurrentLayer::Cell(CellParams::register(store, prefix, kind, input_dim, hidden)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum HeadConfig {
    /// Max-pool over time, then a softmax classifier.
    Softmax { classes: usize },
    /// Per-step emissions scored by a linear-chain CRF.
    Crf { tags: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub input_dim: usize,
    pub hidden: usize,
    pub layers: usize,
    #[serde(default)]
    pub bidirectional: bool,
    pub family: LayerFamily,
    pub head: HeadConfig,
    #[serde(default = "default_irnn_std")]
    pub irnn_std: f64,
}

fn default_irnn_std() -> f64 {
    IRNN_INPUT_STD
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_dim == 0 || self.hidden == 0 || self.layers == 0 {
            return Err(Error::contract(format!(
                "input_dim, hidden and layers must be positive (got {}, {}, {})",
                self.input_dim, self.hidden, self.layers
            )));
        }
        match self.head {
            HeadConfig::Softmax { classes: 0 } | HeadConfig::Crf { tags: 0 } => {
                Err(Error::contract("head needs at least one class"))
            }
            _ if !(self.irnn_std.is_finite() && self.irnn_std >= 0.0) => {
                Err(Error::contract(format!("irnn_std must be finite and non-negative, got {}", self.irnn_std)))
            }
            _ => Ok(()),
        }
    }

    /// Width of one time step's representation after the last layer.
    pub fn output_width(&self) -> usize {
        if self.bidirectional {
            2 * self.hidden
        } else {
            self.hidden
        }
    }
}

/// Benchmark task presets: architecture shape, label count and the sizing
/// budgets of the published comparison.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Sst,
    Trec,
    Conll,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Sst, Task::Trec, Task::Conll];
    pub const EMBEDDING_DIM: usize = 300;

    pub fn from_name(name: &str) -> Option<Task> {
        match name.to_ascii_lowercase().as_str() {
            "sst" | "sentiment" => Some(Task::Sst),
            "trec" | "qc" => Some(Task::Trec),
            "conll" | "ner" => Some(Task::Conll),
            _ => None,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Task::Sst => "sst",
            Task::Trec => "trec",
            Task::Conll => "conll",
        }
    }

    pub fn title(self) -> &'static str {
        match self {
            Task::Sst => "Sentiment Classification",
            Task::Trec => "Question classification",
            Task::Conll => "Named Entity Recognition",
        }
    }

    pub fn budgets(self) -> [usize; 3] {
        match self {
            Task::Sst | Task::Conll => [200_000, 400_000, 800_000],
            Task::Trec => [100_000, 200_000, 400_000],
        }
    }

    /// Published hidden sizes per budget, columns as in
    /// [`LayerFamily::TABLE_COLUMNS`].
    pub fn reference_sizes(self) -> [[usize; 7]; 3] {
        match self {
            Task::Sst => [
                [212, 107, 88, 89, 66, 61, 61],
                [320, 166, 139, 136, 100, 90, 97],
                [468, 252, 213, 203, 149, 132, 149],
            ],
            Task::Trec => [
                [198, 86, 68, 74, 54, 53, 45],
                [319, 148, 119, 122, 88, 83, 79],
                [497, 244, 199, 193, 139, 126, 133],
            ],
            Task::Conll => [
                [197, 86, 67, 74, 54, 53, 45],
                [319, 148, 119, 122, 88, 83, 79],
                [497, 244, 199, 193, 139, 126, 133],
            ],
        }
    }

    pub fn model_config(self, family: LayerFamily, hidden: usize) -> ModelConfig {
        let (layers, bidirectional, head) = match self {
            Task::Sst => (2, false, HeadConfig::Softmax { classes: 5 }),
            Task::Trec => (1, false, HeadConfig::Softmax { classes: 6 }),
            Task::Conll => (1, true, HeadConfig::Crf { tags: 9 }),
        };
        ModelConfig {
            input_dim: Self::EMBEDDING_DIM,
            hidden,
            layers,
            bidirectional,
            family,
            head,
            irnn_std: IRNN_INPUT_STD,
        }
    }
}

#[derive(Clone, Debug)]
pub enum Head {
    Softmax(Linear),
    Crf(CrfParams),
}

#[derive(Clone, Debug)]
pub struct StackLayer {
    pub forward: RecurrentLayer,
    pub backward: Option<RecurrentLayer>,
}

/// Active dropout for one forward pass.
pub struct Dropout<'a> {
    pub rate: f64,
    pub rng: &'a mut dyn RngCore,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Prediction {
    Class(usize),
    Tags(Vec<usize>),
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: ModelConfig,
    pub store: ParamStore,
    pub stack: Vec<StackLayer>,
    pub head: Head,
}

impl Model {
    /// Registers every parameter without initializing it (all zeros).
    pub fn build(config: ModelConfig) -> Result<Model> {
        config.validate()?;
        let mut store = ParamStore::new();
        let mut stack = Vec::with_capacity(config.layers);
        let mut input_dim = config.input_dim;
        for l in 0..config.layers {
            let forward = config.family.build(&mut store, &format!("layer{l}.fwd"), input_dim, config.hidden)?;
            let backward = if config.bidirectional {
                Some(config.family.build(&mut store, &format!("layer{l}.bwd"), input_dim, config.hidden)?)
            } else {
                None
            };
            input_dim = forward.output_dim() * if config.bidirectional { 2 } else { 1 };
            stack.push(StackLayer { forward, backward });
        }
        let head = match config.head {
            HeadConfig::Softmax { classes } => Head::Softmax(Linear::register(&mut store, "softmax", input_dim, classes)),
            HeadConfig::Crf { tags } => Head::Crf(CrfParams::register(&mut store, "crf", input_dim, tags)),
        };
        Ok(Model {
            config,
            store,
            stack,
            head,
        })
    }

    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Model> {
        let mut model = Model::build(config)?;
        model.init(rng);
        Ok(model)
    }

    pub fn init<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        let std = self.config.irnn_std;
        for layer in &self.stack {
            layer.forward.init_default(&mut self.store, rng, std);
            if let Some(b) = &layer.backward {
                b.init_default(&mut self.store, rng, std);
            }
        }
        match &self.head {
            Head::Softmax(l) => l.init_glorot(&mut self.store, rng),
            Head::Crf(c) => c.init_default(&mut self.store, rng),
        }
    }

    pub fn param_count(&self) -> usize {
        self.store.scalar_count()
    }

    fn embed(&self, tape: &mut Tape, emb: &EmbeddingTable, tokens: &[usize], dropout: &mut Option<Dropout<'_>>) -> Result<Vec<Var>> {
        if emb.dim() != self.config.input_dim {
            return Err(Error::shape("embedding", &[self.config.input_dim], &[emb.dim()]));
        }
        if tokens.is_empty() {
            return Err(Error::contract("empty sentence"));
        }
        let mut out = Vec::with_capacity(tokens.len());
        for &t in tokens {
            if t >= emb.len() {
                return Err(Error::contract(format!("token id {t} outside embedding table of {}", emb.len())));
            }
            let mut row = emb.row(t).to_vec();
            if let Some(d) = dropout.as_mut() {
                let mask = dropout_mask(row.len(), d.rate, &mut *d.rng)?;
                row.iter_mut().zip(&mask).for_each(|(x, m)| *x *= m);
            }
            out.push(tape.constant(Tensor::vector(row)));
        }
        Ok(out)
    }

    /// Top-layer outputs, one per token.
    pub fn encode(&self, tape: &mut Tape, emb: &EmbeddingTable, tokens: &[usize], dropout: &mut Option<Dropout<'_>>) -> Result<Vec<Var>> {
        let mut xs = self.embed(tape, emb, tokens, dropout)?;
        for layer in &self.stack {
            xs = match &layer.backward {
                Some(b) => bidirectional_wrap(tape, &layer.forward, b, &xs)?,
                None => {
                    let init = layer.forward.zero_state(tape);
                    unroll(tape, &layer.forward, &xs, init)?
                }
            };
        }
        Ok(xs)
    }

    /// Class logits, or per-step tag emissions.
    pub fn scores(&self, tape: &mut Tape, emb: &EmbeddingTable, tokens: &[usize], mut dropout: Option<Dropout<'_>>) -> Result<Vec<Var>> {
        let hs = self.encode(tape, emb, tokens, &mut dropout)?;
        match &self.head {
            Head::Softmax(linear) => {
                let mut pooled = max_pool_over_time(tape, &hs)?;
                if let Some(d) = dropout.as_mut() {
                    let mask = dropout_mask(linear.input_dim, d.rate, &mut *d.rng)?;
                    let m = tape.constant(Tensor::vector(mask));
                    pooled = tape.mul(pooled, m)?;
                }
                Ok(vec![linear.forward(tape, pooled)?])
            }
            Head::Crf(crf) => hs.into_iter().map(|h| crf.emission.forward(tape, h)).collect(),
        }
    }

    pub fn loss(&self, tape: &mut Tape, emb: &EmbeddingTable, sample: &Sample, dropout: Option<Dropout<'_>>) -> Result<Var> {
        let scores = self.scores(tape, emb, &sample.tokens, dropout)?;
        match (&self.head, &sample.target) {
            (Head::Softmax(_), Target::Class(label)) => softmax_cross_entropy(tape, scores[0], *label),
            (Head::Crf(crf), Target::Tags(tags)) => {
                if tags.len() != scores.len() {
                    return Err(Error::shape("tags", &[scores.len()], &[tags.len()]));
                }
                crf_neg_log_likelihood(tape, &scores, tags, crf)
            }
            _ => Err(Error::contract("sample target does not match the model head")),
        }
    }

    pub fn predict(&self, emb: &EmbeddingTable, tokens: &[usize]) -> Result<Prediction> {
        let mut tape = Tape::with_params(&self.store);
        let scores = self.scores(&mut tape, emb, tokens, None)?;
        match &self.head {
            Head::Softmax(_) => Ok(Prediction::Class(argmax(tape.value(scores[0]).data()))),
            Head::Crf(crf) => {
                let k = crf.tags;
                let mut data = Vec::with_capacity(scores.len() * k);
                for s in &scores {
                    data.extend_from_slice(tape.value(*s).data());
                }
                let e = Tensor::matrix(scores.len(), k, data)?;
                let (path, _) = crf_viterbi_decode(&e, self.store.get(crf.transitions))?;
                Ok(Prediction::Tags(path))
            }
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] {
            best = i;
        }
    }
    best
}

//! Run configuration files.
//!
//! A config is TOML with a top-level `task` and three optional sections:
//!
//! ```toml
//! task = "trec"                  # sst | trec | conll: architecture and training preset
//!
//! [model]
//! layer = { family = "ma" }      # irnn gru lstm ma ma2 ms ss gate, plus subnetwork counts
//! budget = 100000                # solve the hidden size for this many parameters...
//! hidden = 74                    # ...or give it directly (wins over budget)
//! layers = 1
//! bidirectional = false
//! embedding_dim = 300
//! irnn_std = 0.001               # input-weight std of identity-initialised ReLU cells
//!
//! [train]                        # every key falls back to the task preset
//! learning_rate = 0.0005
//! batch_size = 20
//! max_epochs = 25
//! dropout = 0.5
//! patience = 5
//! lr_decay = 1.0
//! seed = 1
//! pad_len = 30                   # crop length for classification; default 95th percentile
//! clip_norm = 5.0                # off when absent
//! target_metric = 1.0            # stop early once reached
//! threads = 1
//!
//! [data]
//! train = "train.txt"            # paths are relative to the config file
//! dev = "dev.txt"                # absent: the training split doubles as dev
//! test = "test.txt"
//! format = "trec_colon"          # tsv_label_text | trec_colon | conll
//! lowercase = true
//! train_limit = 500              # keep only the first N training sentences
//! embeddings = "vectors.txt"     # word-vector text file; absent: random vectors
//! embedding_std = 0.5
//! embedding_seed = 0
//! synthetic = { kind = "question", train_size = 500, dev_size = 100, seed = 0 }
//! ```
//!
//! `synthetic` replaces the corpus files with generated data.

use std::path::{Path, PathBuf};

use nornet::budget::solve_hidden_size;
use nornet::cells::IRNN_INPUT_STD;
use nornet::data::ClassificationFormat;
use nornet::model::{LayerFamily, ModelConfig, Task};
use nornet::TrainConfig;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const DEFAULT_EMBEDDING_STD: f64 = 0.5;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default)]
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    #[serde(default)]
    pub data: DataSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layer: Option<LayerFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub budget: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hidden: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub layers: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bidirectional: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub irnn_std: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub learning_rate: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub batch_size: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_epochs: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dropout: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub patience: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lr_decay: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pad_len: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clip_norm: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target_metric: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataFormat {
    TsvLabelText,
    TrecColon,
    Conll,
}

impl DataFormat {
    pub fn classification(self) -> Option<ClassificationFormat> {
        match self {
            DataFormat::TsvLabelText => Some(ClassificationFormat::TsvLabelText),
            DataFormat::TrecColon => Some(ClassificationFormat::TrecColon),
            DataFormat::Conll => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SyntheticKind {
    /// One class keyword among filler words.
    Keyword,
    /// Templated questions over the six question categories.
    Question,
    /// Short sentences with person, organisation and location names.
    Entity,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SyntheticSection {
    pub kind: SyntheticKind,
    pub train_size: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev_size: Option<usize>,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dev: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub test: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub format: Option<DataFormat>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lowercase: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub train_limit: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embeddings: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_std: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub embedding_seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub synthetic: Option<SyntheticSection>,
}

/// Every setting of a run with defaults filled in.
#[derive(Clone, Debug, PartialEq)]
pub struct Resolved {
    pub task: Task,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DataSection,
    /// The same settings as a config that reproduces the run when loaded.
    pub echo: RunConfig,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> CliResult<RunConfig> {
        let mut cfg: RunConfig = toml::from_str(text).map_err(|e| CliError::config(origin, e.to_string().trim_end()))?;
        if let Some(base) = origin.parent() {
            cfg.data.rebase(base);
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> CliResult<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::config(path, e.to_string()))?;
        RunConfig::parse(&text, path)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("run config serialises")
    }

    pub fn resolve(&self, origin: &Path) -> CliResult<Resolved> {
        let bad = |key: &str, msg: String| CliError::config(origin, format!("{key}: {msg}"));
        let task = self.task.ok_or_else(|| bad("task", "missing (sst, trec or conll)".into()))?;

        let m = &self.model;
        let family = m.layer.unwrap_or(LayerFamily::MA);
        let mut model = task.model_config(family, 1);
        if let Some(v) = m.layers {
            model.layers = v;
        }
        if let Some(v) = m.bidirectional {
            model.bidirectional = v;
        }
        if let Some(v) = m.embedding_dim {
            model.input_dim = v;
        }
        model.irnn_std = m.irnn_std.unwrap_or(IRNN_INPUT_STD);
        let budget = m.budget.unwrap_or(task.budgets()[0]);
        model.hidden = match m.hidden {
            Some(h) => h,
            None => solve_hidden_size(&model, budget).map_err(|e| bad("model.budget", e.to_string()))?.hidden,
        };
        model.validate().map_err(|e| bad("model", e.to_string()))?;

        let t = &self.train;
        let p = TrainConfig::preset(task);
        let train = TrainConfig {
            learning_rate: t.learning_rate.unwrap_or(p.learning_rate),
            batch_size: t.batch_size.unwrap_or(p.batch_size),
            max_epochs: t.max_epochs.unwrap_or(p.max_epochs),
            dropout: t.dropout.unwrap_or(p.dropout),
            patience: t.patience.unwrap_or(p.patience),
            lr_decay: t.lr_decay.unwrap_or(p.lr_decay),
            seed: t.seed.unwrap_or(p.seed),
            pad_len: t.pad_len.or(p.pad_len),
            clip_norm: t.clip_norm.or(p.clip_norm),
            target_metric: t.target_metric.or(p.target_metric),
            threads: t.threads.unwrap_or(p.threads),
        };
        train.validate().map_err(|e| bad("train", e.to_string()))?;

        let mut data = self.data.clone();
        let default_format = match task {
            Task::Sst => DataFormat::TsvLabelText,
            Task::Trec => DataFormat::TrecColon,
            Task::Conll => DataFormat::Conll,
        };
        let format = *data.format.get_or_insert(default_format);
        data.lowercase.get_or_insert(format != DataFormat::Conll);
        if data.embeddings.is_none() {
            data.embedding_std.get_or_insert(DEFAULT_EMBEDDING_STD);
            data.embedding_seed.get_or_insert(0);
        }
        if (format == DataFormat::Conll) != (task == Task::Conll) {
            return Err(bad("data.format", format!("{format:?} does not fit task {}", task.name())));
        }
        if let Some(s) = &data.synthetic {
            let fits = match s.kind {
                SyntheticKind::Entity => task == Task::Conll,
                SyntheticKind::Question => task == Task::Trec,
                SyntheticKind::Keyword => task != Task::Conll,
            };
            if !fits {
                return Err(bad("data.synthetic.kind", format!("{:?} does not fit task {}", s.kind, task.name())));
            }
            if s.train_size == 0 {
                return Err(bad("data.synthetic.train_size", "must be positive".into()));
            }
        } else if data.train.is_none() {
            return Err(bad("data.train", "missing (or set data.synthetic)".into()));
        }
        if data.train_limit == Some(0) {
            return Err(bad("data.train_limit", "must be positive".into()));
        }

        let echo = RunConfig {
            task: Some(task),
            model: ModelSection {
                layer: Some(model.family),
                budget: m.hidden.is_none().then_some(budget),
                hidden: Some(model.hidden),
                layers: Some(model.layers),
                bidirectional: Some(model.bidirectional),
                embedding_dim: Some(model.input_dim),
                irnn_std: Some(model.irnn_std),
            },
            train: TrainSection {
                learning_rate: Some(train.learning_rate),
                batch_size: Some(train.batch_size),
                max_epochs: Some(train.max_epochs),
                dropout: Some(train.dropout),
                patience: Some(train.patience),
                lr_decay: Some(train.lr_decay),
                seed: Some(train.seed),
                pad_len: train.pad_len,
                clip_norm: train.clip_norm,
                target_metric: train.target_metric,
                threads: Some(train.threads),
            },
            data: data.clone(),
        };
        Ok(Resolved {
            task,
            model,
            train,
            data,
            echo,
        })
    }
}

impl DataSection {
    fn rebase(&mut self, base: &Path) {
        for p in [&mut self.train, &mut self.dev, &mut self.test, &mut self.embeddings].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn paths(&self) -> impl Iterator<Item = &PathBuf> {
        let corpus = if self.synthetic.is_some() {
            [None, None, None]
        } else {
            [self.train.as_ref(), self.dev.as_ref(), self.test.as_ref()]
        };
        corpus.into_iter().chain([self.embeddings.as_ref()]).flatten()
    }
}

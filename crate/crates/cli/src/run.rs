//! Training and evaluation runs driven by a resolved config.

use std::fs;
use std::path::{Path, PathBuf};

use nornet::checkpoint::{load_checkpoint, save_checkpoint};
use nornet::data::{
    conll2003_tags, load_classification_corpus, load_conll, load_embeddings, sst_labels, trec_labels, EmbeddingTable,
    LoadOptions, Sample, Vocabulary,
};
use nornet::model::{Model, Task};
use nornet::synthetic::{entity_task, keyword_task, question_task};
use nornet::train::{evaluate, train, Metric, TrainOutcome};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{DataFormat, Resolved, RunConfig, SyntheticKind};
use crate::error::{CliError, CliResult};

pub const CONFIG_FILE: &str = "config.toml";
pub const METRICS_FILE: &str = "metrics.csv";
pub const CHECKPOINT_FILE: &str = "checkpoint.txt";

/// A run to launch: its settings and where its files go.
#[derive(Clone, Debug)]
pub struct RunSpec {
    pub resolved: Resolved,
    pub origin: PathBuf,
    pub out_dir: PathBuf,
}

impl RunSpec {
    pub fn new(config: &RunConfig, origin: impl Into<PathBuf>, out_dir: impl Into<PathBuf>) -> CliResult<RunSpec> {
        let origin = origin.into();
        let resolved = config.resolve(&origin)?;
        Ok(RunSpec {
            resolved,
            origin,
            out_dir: out_dir.into(),
        })
    }

    /// Fails on the first referenced input that does not exist.
    pub fn check_paths(&self) -> CliResult<()> {
        match self.resolved.data.paths().find(|p| !p.exists()) {
            Some(p) => Err(CliError::missing(p)),
            None => Ok(()),
        }
    }

    pub fn create_out_dir(&self) -> CliResult<()> {
        fs::create_dir_all(&self.out_dir).map_err(|e| CliError::io(&self.out_dir, e))
    }
}

/// Corpora and embeddings of a run. Immutable once loaded.
pub struct Prepared {
    pub vocab: Vocabulary,
    pub embeddings: EmbeddingTable,
    pub train: Vec<Sample>,
    pub dev: Vec<Sample>,
    pub test: Option<Vec<Sample>>,
    pub metric: Metric,
    /// Whether `dev` is the training split itself.
    pub dev_is_train: bool,
}

enum Split {
    Labeled(nornet::data::LabeledCorpus),
    Tagged(nornet::data::TaggedCorpus),
}

impl Split {
    fn tokens(&self) -> Box<dyn Iterator<Item = &str> + '_> {
        match self {
            Split::Labeled(c) => Box::new(c.tokens()),
            Split::Tagged(c) => Box::new(c.tokens()),
        }
    }

    fn samples(&self, vocab: &Vocabulary) -> Vec<Sample> {
        match self {
            Split::Labeled(c) => c.samples(vocab),
            Split::Tagged(c) => c.samples(vocab),
        }
    }

    fn truncate(&mut self, n: usize) {
        match self {
            Split::Labeled(c) => {
                c.sentences.truncate(n);
                c.labels.truncate(n);
                c.fine.truncate(n);
            }
            Split::Tagged(c) => c.sentences.truncate(n),
        }
    }
}

fn label_table(task: Task) -> Vec<String> {
    match task {
        Task::Sst => sst_labels(),
        Task::Trec => trec_labels(),
        Task::Conll => conll2003_tags(),
    }
}

fn load_split(path: &Path, r: &Resolved) -> CliResult<Split> {
    let format = r.data.format.expect("resolved");
    let table = label_table(r.task);
    Ok(match format.classification() {
        Some(f) => {
            let opts = LoadOptions {
                lowercase: r.data.lowercase.unwrap_or(true),
                labels: Some(table),
            };
            Split::Labeled(load_classification_corpus(path, f, &opts)?)
        }
        None => Split::Tagged(load_conll(path, Some(&table))?),
    })
}

fn synthetic_split(kind: SyntheticKind, task: Task, n: usize, seed: u64) -> Split {
    match kind {
        SyntheticKind::Keyword => {
            let mut c = keyword_task(n, label_table(task).len(), seed);
            c.label_names = label_table(task);
            Split::Labeled(c)
        }
        SyntheticKind::Question => Split::Labeled(question_task(n, seed)),
        SyntheticKind::Entity => Split::Tagged(entity_task(n, seed)),
    }
}

/// Loads (or generates) every split, builds the vocabulary over all of them,
/// and loads or draws the embeddings.
pub fn prepare(r: &Resolved) -> CliResult<Prepared> {
    let (mut train_split, dev_split, test_split) = match &r.data.synthetic {
        Some(s) => (
            synthetic_split(s.kind, r.task, s.train_size, s.seed),
            s.dev_size.map(|n| synthetic_split(s.kind, r.task, n, s.seed.wrapping_add(1))),
            None,
        ),
        None => {
            let train = load_split(r.data.train.as_deref().expect("resolved"), r)?;
            let dev = r.data.dev.as_deref().map(|p| load_split(p, r)).transpose()?;
            let test = r.data.test.as_deref().map(|p| load_split(p, r)).transpose()?;
            (train, dev, test)
        }
    };
    if let Some(n) = r.data.train_limit {
        train_split.truncate(n);
    }
    let mut vocab = Vocabulary::new();
    for split in [Some(&train_split), dev_split.as_ref(), test_split.as_ref()].into_iter().flatten() {
        for t in split.tokens() {
            vocab.insert(t);
        }
    }
    let dim = r.model.input_dim;
    let embeddings = match &r.data.embeddings {
        Some(path) => load_embeddings(path, &vocab, dim)?,
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(r.data.embedding_seed.unwrap_or(0));
            EmbeddingTable::random(&vocab, dim, r.data.embedding_std.expect("resolved"), &mut rng)
        }
    };
    let train = train_split.samples(&vocab);
    let dev_is_train = dev_split.is_none();
    let dev = match &dev_split {
        Some(d) => d.samples(&vocab),
        None => train.clone(),
    };
    let metric = match r.data.format {
        Some(DataFormat::Conll) => Metric::EntityF1(conll2003_tags()),
        _ => Metric::Accuracy,
    };
    Ok(Prepared {
        test: test_split.map(|t| t.samples(&vocab)),
        vocab,
        embeddings,
        train,
        dev,
        metric,
        dev_is_train,
    })
}

/// Freshly initialised model for the run's seed. Initialisation draws from a
/// separate stream of the same seed as training.
pub fn init_model(r: &Resolved) -> CliResult<Model> {
    let mut rng = ChaCha8Rng::seed_from_u64(r.train.seed);
    rng.set_stream(1);
    Ok(Model::new(r.model.clone(), &mut rng)?)
}

#[derive(Clone, Debug)]
pub struct TrainReport {
    pub outcome: TrainOutcome,
    pub test_metric: Option<f64>,
    pub param_count: usize,
}

impl TrainReport {
    /// Test metric when a test split exists, else the best dev metric.
    pub fn headline(&self) -> f64 {
        self.test_metric.unwrap_or(self.outcome.best_metric)
    }
}

/// Trains on already prepared data and writes the run directory.
pub fn train_prepared(spec: &RunSpec, data: &Prepared) -> CliResult<TrainReport> {
    let r = &spec.resolved;
    spec.create_out_dir()?;
    let write = |name: &str, text: &str| {
        let path = spec.out_dir.join(name);
        fs::write(&path, text).map_err(|e| CliError::io(&path, e))
    };
    write(CONFIG_FILE, &r.echo.to_toml())?;
    let mut model = init_model(r)?;
    let outcome = train(&mut model, &data.embeddings, &data.train, &data.dev, &data.metric, &r.train)?;
    write(METRICS_FILE, &outcome.metric_csv())?;
    save_checkpoint(&model, spec.out_dir.join(CHECKPOINT_FILE))?;
    let test_metric = data
        .test
        .as_ref()
        .map(|t| evaluate(&model, &data.embeddings, t, &data.metric, outcome.pad_len))
        .transpose()?;
    Ok(TrainReport {
        outcome,
        test_metric,
        param_count: model.param_count(),
    })
}

pub fn cmd_train(spec: &RunSpec) -> CliResult<TrainReport> {
    spec.check_paths()?;
    let data = prepare(&spec.resolved)?;
    train_prepared(spec, &data)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EvalSplit {
    Train,
    Dev,
    Test,
}

/// Re-evaluates the checkpoint of a finished run directory.
pub fn cmd_eval(run_dir: &Path, split: EvalSplit) -> CliResult<f64> {
    let config_path = run_dir.join(CONFIG_FILE);
    let config = RunConfig::load(&config_path)?;
    let spec = RunSpec::new(&config, &config_path, run_dir)?;
    spec.check_paths()?;
    let model = load_checkpoint(run_dir.join(CHECKPOINT_FILE))?;
    if model.config != spec.resolved.model {
        return Err(CliError::config(&config_path, "model section does not match the checkpoint"));
    }
    let data = prepare(&spec.resolved)?;
    let samples = match split {
        EvalSplit::Train => &data.train,
        EvalSplit::Dev => &data.dev,
        EvalSplit::Test => data
            .test
            .as_ref()
            .ok_or_else(|| CliError::config(&config_path, "data.test: no test split configured"))?,
    };
    let crop = match spec.resolved.data.format {
        Some(DataFormat::Conll) => None,
        _ => Some(spec.resolved.train.pad_len.unwrap_or_else(|| nornet::train::length_percentile(&data.train, 0.95))),
    };
    Ok(evaluate(&model, &data.embeddings, samples, &data.metric, crop)?)
}

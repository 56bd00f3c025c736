//! Corpora, vocabularies, embeddings and evaluation metrics.

pub mod conll;
pub mod corpus;
pub mod embeddings;
pub mod metrics;
pub mod vocab;

pub use conll::{conll2003_tags, iob1_to_iob2, load_conll, read_conll, write_conll, TaggedCorpus, TaggedSentence};
pub use corpus::{
    load_classification_corpus, read_classification_corpus, sst_labels, trec_labels, write_classification_corpus,
    ClassificationFormat, LabeledCorpus, LoadOptions,
};
pub use embeddings::{load_embeddings, read_embeddings, EmbeddingTable};
pub use metrics::{accuracy, entity_f1, extract_spans, F1Score, Span};
pub use vocab::Vocabulary;

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Target {
    Class(usize),
    Tags(Vec<usize>),
}

/// One encoded sentence with its supervision.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Sample {
    pub tokens: Vec<usize>,
    pub target: Target,
}

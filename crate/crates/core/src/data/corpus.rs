//! Sentence-classification corpora.
//!
//! Two line formats are supported:
//!
//! ```text
//! 3<TAB>a good movie                tsv: label, tab, text
//! LOC:city Where is Paris ?         trec: COARSE:fine, space, text
//! ```

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::vocab::Vocabulary;
use super::{Sample, Target};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClassificationFormat {
    TsvLabelText,
    TrecColon,
}

/// Five-way sentiment labels, written as `0` (very negative) to `4`.
pub fn sst_labels() -> Vec<String> {
    (0..5).map(|i| i.to_string()).collect()
}

/// The six coarse question categories.
pub fn trec_labels() -> Vec<String> {
    ["ABBR", "DESC", "ENTY", "HUM", "LOC", "NUM"].iter().map(|s| s.to_string()).collect()
}

#[derive(Clone, Debug, Default)]
pub struct LoadOptions {
    pub lowercase: bool,
    /// Fixed label table. When absent the table is the sorted set of labels
    /// present in the file.
    pub labels: Option<Vec<String>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledCorpus {
    pub sentences: Vec<Vec<String>>,
    pub labels: Vec<usize>,
    /// Fine-grained category for trec lines.
    pub fine: Vec<Option<String>>,
    pub label_names: Vec<String>,
}

impl LabeledCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.label_names.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flatten().map(String::as_str)
    }

    pub fn samples(&self, vocab: &Vocabulary) -> Vec<Sample> {
        self.sentences
            .iter()
            .zip(&self.labels)
            .map(|(s, &l)| Sample {
                tokens: vocab.encode(s),
                target: Target::Class(l),
            })
            .collect()
    }
}

pub fn load_classification_corpus(
    path: impl AsRef<Path>,
    format: ClassificationFormat,
    opts: &LoadOptions,
) -> Result<LabeledCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_classification_corpus(BufReader::new(file), format, opts, path)
}

pub fn read_classification_corpus<R: BufRead>(
    reader: R,
    format: ClassificationFormat,
    opts: &LoadOptions,
    origin: &Path,
) -> Result<LabeledCorpus> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    let mut rows: Vec<(usize, String, Option<String>, Vec<String>)> = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (label, fine, text) = match format {
            ClassificationFormat::TsvLabelText => {
                let (label, text) = line
                    .split_once('\t')
                    .ok_or_else(|| parse_err(lineno, "missing tab after label".into()))?;
                (label.trim().to_string(), None, text)
            }
            ClassificationFormat::TrecColon => {
                let line = line.trim_start();
                let (head, text) = line.split_once(char::is_whitespace).unwrap_or((line, ""));
                let (coarse, fine) = head
                    .split_once(':')
                    .ok_or_else(|| parse_err(lineno, format!("expected COARSE:fine, found {head:?}")))?;
                (coarse.to_string(), Some(fine.to_string()), text)
            }
        };
        let tokens: Vec<String> = text
            .split_whitespace()
            .map(|t| if opts.lowercase { t.to_lowercase() } else { t.to_string() })
            .collect();
        if tokens.is_empty() {
            return Err(parse_err(lineno, "sentence has no tokens".into()));
        }
        rows.push((lineno, label, fine, tokens));
    }
    if rows.is_empty() {
        return Err(Error::EmptyCorpus(origin.display().to_string()));
    }
    let label_names = match &opts.labels {
        Some(table) => table.clone(),
        None => rows
            .iter()
            .map(|r| r.1.clone())
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let mut corpus = LabeledCorpus {
        sentences: Vec::with_capacity(rows.len()),
        labels: Vec::with_capacity(rows.len()),
        fine: Vec::with_capacity(rows.len()),
        label_names,
    };
    for (lineno, label, fine, tokens) in rows {
        let id = corpus
            .label_names
            .iter()
            .position(|l| *l == label)
            .ok_or_else(|| parse_err(lineno, format!("unknown label {label:?}")))?;
        corpus.sentences.push(tokens);
        corpus.labels.push(id);
        corpus.fine.push(fine);
    }
    Ok(corpus)
}

pub fn write_classification_corpus<W: Write>(
    mut out: W,
    corpus: &LabeledCorpus,
    format: ClassificationFormat,
) -> std::io::Result<()> {
    for (i, sentence) in corpus.sentences.iter().enumerate() {
        let label = &corpus.label_names[corpus.labels[i]];
        let text = sentence.join(" ");
        match format {
            ClassificationFormat::TsvLabelText => writeln!(out, "{label}\t{text}")?,
            ClassificationFormat::TrecColon => {
                let fine = corpus.fine[i].as_deref().unwrap_or("other");
                writeln!(out, "{label}:{fine} {text}")?
            }
        }
    }
    Ok(())
}

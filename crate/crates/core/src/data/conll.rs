//! Column-format tagged corpora: whitespace-separated columns, token first and
//! tag last, blank lines between sentences, `-DOCSTART-` markers skipped.

use std::collections::BTreeSet;
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use super::vocab::Vocabulary;
use super::{Sample, Target};
use crate::error::{Error, Result};

/// The nine entity tags of the four-type English NER task.
pub fn conll2003_tags() -> Vec<String> {
    ["O", "B-PER", "I-PER", "B-ORG", "I-ORG", "B-LOC", "I-LOC", "B-MISC", "I-MISC"]
        .iter()
        .map(|s| s.to_string())
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedSentence {
    pub tokens: Vec<String>,
    /// Columns between the token and the tag, one row per token.
    pub features: Vec<Vec<String>>,
    pub tags: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaggedCorpus {
    pub sentences: Vec<TaggedSentence>,
    pub tag_names: Vec<String>,
}

impl TaggedCorpus {
    pub fn len(&self) -> usize {
        self.sentences.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sentences.is_empty()
    }

    pub fn num_tags(&self) -> usize {
        self.tag_names.len()
    }

    pub fn tokens(&self) -> impl Iterator<Item = &str> {
        self.sentences.iter().flat_map(|s| s.tokens.iter().map(String::as_str))
    }

    pub fn tag_strings(&self, tags: &[usize]) -> Vec<String> {
        tags.iter().map(|&t| self.tag_names[t].clone()).collect()
    }

    pub fn samples(&self, vocab: &Vocabulary) -> Vec<Sample> {
        self.sentences
            .iter()
            .map(|s| Sample {
                tokens: vocab.encode(&s.tokens),
                target: Target::Tags(s.tags.clone()),
            })
            .collect()
    }
}

/// Rewrites IOB1 chunks as IOB2: an `I-X` that does not continue an `X` chunk
/// becomes `B-X`. Already-IOB2 input is returned unchanged.
pub fn iob1_to_iob2<S: AsRef<str>>(tags: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::with_capacity(tags.len());
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        match tag.strip_prefix("I-") {
            Some(kind) => {
                let continues = i > 0 && {
                    let prev = tags[i - 1].as_ref();
                    prev.len() > 2 && &prev[2..] == kind && (prev.starts_with("B-") || prev.starts_with("I-"))
                };
                out.push(if continues { tag.to_string() } else { format!("B-{kind}") });
            }
            None => out.push(tag.to_string()),
        }
    }
    out
}

/// Tag table for a set of tags: `O`, then `B-`/`I-` pairs by sorted type.
pub fn tag_table<'a>(tags: impl IntoIterator<Item = &'a str>) -> Vec<String> {
    let kinds: BTreeSet<&str> = tags
        .into_iter()
        .filter_map(|t| t.strip_prefix("B-").or_else(|| t.strip_prefix("I-")))
        .collect();
    let mut table = vec!["O".to_string()];
    for k in kinds {
        table.push(format!("B-{k}"));
        table.push(format!("I-{k}"));
    }
    table
}

pub fn load_conll(path: impl AsRef<Path>, tags: Option<&[String]>) -> Result<TaggedCorpus> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_conll(BufReader::new(file), tags, path)
}

/// Reads a column corpus. With `tags` given, any tag outside it is an error;
/// otherwise the table comes from [`tag_table`].
pub fn read_conll<R: BufRead>(reader: R, tags: Option<&[String]>, origin: &Path) -> Result<TaggedCorpus> {
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    struct Raw {
        tokens: Vec<String>,
        features: Vec<Vec<String>>,
        tags: Vec<String>,
        first_line: usize,
    }
    let mut raw: Vec<Raw> = Vec::new();
    let mut current: Option<Raw> = None;
    let mut columns: Option<usize> = None;
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            raw.extend(current.take());
            continue;
        }
        if fields[0] == "-DOCSTART-" {
            raw.extend(current.take());
            continue;
        }
        match columns {
            None if fields.len() < 2 => return Err(parse_err(lineno, "need at least token and tag columns".into())),
            None => columns = Some(fields.len()),
            Some(c) if c != fields.len() => {
                return Err(parse_err(lineno, format!("expected {c} columns, found {}", fields.len())))
            }
            Some(_) => {}
        }
        let s = current.get_or_insert_with(|| Raw {
            tokens: Vec::new(),
            features: Vec::new(),
            tags: Vec::new(),
            first_line: lineno,
        });
        s.tokens.push(fields[0].to_string());
        s.features.push(fields[1..fields.len() - 1].iter().map(|f| f.to_string()).collect());
        s.tags.push(fields[fields.len() - 1].to_string());
    }
    raw.extend(current.take());
    if raw.is_empty() {
        return Err(Error::EmptyCorpus(origin.display().to_string()));
    }
    for s in &mut raw {
        s.tags = iob1_to_iob2(&s.tags);
    }
    let tag_names = match tags {
        Some(t) => t.to_vec(),
        None => tag_table(raw.iter().flat_map(|s| s.tags.iter().map(String::as_str))),
    };
    let mut sentences = Vec::with_capacity(raw.len());
    for s in raw {
        let mut ids = Vec::with_capacity(s.tags.len());
        for (i, t) in s.tags.iter().enumerate() {
            let id = tag_names
                .iter()
                .position(|n| n == t)
                .ok_or_else(|| parse_err(s.first_line + i, format!("unknown tag {t:?}")))?;
            ids.push(id);
        }
        sentences.push(TaggedSentence {
            tokens: s.tokens,
            features: s.features,
            tags: ids,
        });
    }
    Ok(TaggedCorpus { sentences, tag_names })
}

/// Writes IOB2 tags in column form with a blank line after each sentence.
pub fn write_conll<W: Write>(mut out: W, corpus: &TaggedCorpus) -> std::io::Result<()> {
    for s in &corpus.sentences {
        for i in 0..s.tokens.len() {
            write!(out, "{}", s.tokens[i])?;
            for f in &s.features[i] {
                write!(out, " {f}")?;
            }
            writeln!(out, " {}", corpus.tag_names[s.tags[i]])?;
        }
        writeln!(out)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str) -> Result<TaggedCorpus> {
        read_conll(text.as_bytes(), None, Path::new("ner.txt"))
    }

    #[test]
    fn single_token_sentence_converts_to_iob2() {
        let c = read("EU NNP I-NP I-ORG\n\n").unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(c.tag_strings(&c.sentences[0].tags), vec!["B-ORG"]);
        assert_eq!(c.sentences[0].features[0], vec!["NNP", "I-NP"]);
    }

    #[test]
    fn docstart_skipped() {
        let c = read("-DOCSTART- -X- -X- O\n\nA x y O\nB x y I-PER\n\nC x y O\n").unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.tag_strings(&c.sentences[0].tags), vec!["O", "B-PER"]);
    }

    #[test]
    fn ragged_columns_cite_line() {
        let err = read("A x y O\nB x O\n").unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 2),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn iob1_conversion() {
        let tags = ["I-PER", "I-PER", "B-PER", "O", "I-LOC", "I-ORG"];
        let out = iob1_to_iob2(&tags);
        assert_eq!(out, vec!["B-PER", "I-PER", "B-PER", "O", "B-LOC", "B-ORG"]);
        assert_eq!(iob1_to_iob2(&out), out);
    }

    #[test]
    fn fixed_table_rejects_unknown_tag() {
        let table = conll2003_tags();
        let err = read_conll("A B-FOO\n".as_bytes(), Some(&table), Path::new("n")).unwrap_err();
        assert!(err.to_string().contains("B-FOO"));
    }

    #[test]
    fn round_trip() {
        let text = "EU NNP B-ORG\nrejects VBZ O\n\nPeter NNP B-PER\nBlackburn NNP I-PER\n\n";
        let a = read(text).unwrap();
        let mut buf = Vec::new();
        write_conll(&mut buf, &a).unwrap();
        assert_eq!(std::str::from_utf8(&buf).unwrap(), text);
        assert_eq!(read(std::str::from_utf8(&buf).unwrap()).unwrap(), a);
    }
}

//! Frozen word-embedding tables.
//!
//! Text format, one vector per line:
//!
//! ```text
//! token v1 v2 ... vd
//! ```
//!
//! An optional word2vec-style `count dim` header line is skipped.

use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::vocab::Vocabulary;
use crate::error::{Error, Result};

/// Row-major `vocab_len × dim` table. There is no mutable access: embeddings
/// stay fixed during training.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    rows: Vec<f64>,
    found: usize,
}

impl EmbeddingTable {
    pub fn zeros(vocab_len: usize, dim: usize) -> Self {
        EmbeddingTable {
            dim,
            rows: vec![0.0; vocab_len * dim],
            found: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn row(&self, id: usize) -> &[f64] {
        &self.rows[id * self.dim..(id + 1) * self.dim]
    }

    /// Vocabulary entries that received a vector from the source.
    pub fn found(&self) -> usize {
        self.found
    }

    /// FNV-1a over the raw bits of every entry.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        for v in &self.rows {
            for byte in v.to_bits().to_le_bytes() {
                h ^= u64::from(byte);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        }
        h
    }

    /// Gaussian rows for every real token; padding and unknown stay zero.
    pub fn random<R: Rng + ?Sized>(vocab: &Vocabulary, dim: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let mut table = EmbeddingTable::zeros(vocab.len(), dim);
        for id in 2..vocab.len() {
            for x in &mut table.rows[id * dim..(id + 1) * dim] {
                *x = normal.sample(rng);
            }
        }
        table.found = vocab.len().saturating_sub(2);
        table
    }

    pub fn from_rows(dim: usize, rows: Vec<f64>) -> Result<Self> {
        if dim == 0 || rows.len() % dim != 0 {
            return Err(Error::contract(format!("{} values do not form rows of {dim}", rows.len())));
        }
        Ok(EmbeddingTable { dim, rows, found: 0 })
    }
}

pub fn load_embeddings(path: impl AsRef<Path>, vocab: &Vocabulary, dim: usize) -> Result<EmbeddingTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_embeddings(BufReader::new(file), vocab, dim, path)
}

/// Reads a text embedding stream. Tokens absent from the stream keep zero
/// rows; stream tokens absent from the vocabulary are ignored.
pub fn read_embeddings<R: BufRead>(reader: R, vocab: &Vocabulary, dim: usize, origin: &Path) -> Result<EmbeddingTable> {
    let mut table = EmbeddingTable::zeros(vocab.len(), dim);
    let mut seen = vec![false; vocab.len()];
    let parse_err = |line: usize, message: String| Error::Parse {
        path: origin.to_path_buf(),
        line,
        message,
    };
    for (n, line) in reader.lines().enumerate() {
        let lineno = n + 1;
        let line = line.map_err(|e| Error::io(origin, e))?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            continue;
        }
        if lineno == 1 && fields.len() == 2 && fields.iter().all(|f| f.parse::<usize>().is_ok()) {
            continue;
        }
        if fields.len() != dim + 1 {
            return Err(parse_err(
                lineno,
                format!("expected token and {dim} values, found {} values", fields.len() - 1),
            ));
        }
        let Some(id) = vocab.get(fields[0]) else { continue };
        if id == Vocabulary::PAD || id == Vocabulary::UNK || seen[id] {
            continue;
        }
        let row = &mut table.rows[id * dim..(id + 1) * dim];
        for (slot, f) in row.iter_mut().zip(&fields[1..]) {
            *slot = f
                .parse::<f64>()
                .map_err(|_| parse_err(lineno, format!("bad value {f:?}")))?;
        }
        seen[id] = true;
        table.found += 1;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn read(text: &str, vocab: &Vocabulary, dim: usize) -> Result<EmbeddingTable> {
        read_embeddings(text.as_bytes(), vocab, dim, Path::new("vectors.txt"))
    }

    #[test]
    fn known_token_gets_its_row() {
        let v = Vocabulary::build(["a"]);
        let t = read("a 1.0 2.0\n", &v, 2).unwrap();
        assert_eq!(t.row(v.id("a")), &[1.0, 2.0]);
        assert_eq!(t.found(), 1);
    }

    #[test]
    fn absent_token_is_zero() {
        let v = Vocabulary::build(["a", "b"]);
        let t = read("a 1.0 2.0\n", &v, 2).unwrap();
        assert_eq!(t.row(v.id("b")), &[0.0, 0.0]);
        assert_eq!(t.row(Vocabulary::UNK), &[0.0, 0.0]);
    }

    #[test]
    fn malformed_line_cites_line_number() {
        let v = Vocabulary::build(["a"]);
        let err = read("a 1.0\n", &v, 2).unwrap_err();
        match err {
            Error::Parse { line, .. } => assert_eq!(line, 1),
            other => panic!("{other}"),
        }
        let v = Vocabulary::build(["a", "b"]);
        let err = read("a 1.0 2.0\nb 1.0 x\n", &v, 2).unwrap_err();
        assert!(err.to_string().contains("vectors.txt:2"), "{err}");
    }

    #[test]
    fn header_line_is_skipped() {
        let v = Vocabulary::build(["a"]);
        let t = read("3 2\na 0.5 -0.5\n", &v, 2).unwrap();
        assert_eq!(t.row(2), &[0.5, -0.5]);
    }

    #[test]
    fn checksum_tracks_values() {
        let v = Vocabulary::build(["a"]);
        let a = read("a 1.0 2.0\n", &v, 2).unwrap();
        let b = read("a 1.0 2.5\n", &v, 2).unwrap();
        assert_eq!(a.checksum(), a.clone().checksum());
        assert_ne!(a.checksum(), b.checksum());
    }
}

use std::collections::HashSet;

use crate::error::{Error, Result};

pub fn accuracy(predictions: &[usize], gold: &[usize]) -> Result<f64> {
    if predictions.len() != gold.len() {
        return Err(Error::contract(format!(
            "accuracy over {} predictions and {} gold labels",
            predictions.len(),
            gold.len()
        )));
    }
    if gold.is_empty() {
        return Err(Error::contract("accuracy over an empty set"));
    }
    let hits = predictions.iter().zip(gold).filter(|(p, g)| p == g).count();
    Ok(hits as f64 / gold.len() as f64)
}

/// Half-open token span `[start, end)` of one entity.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Span {
    pub kind: String,
    pub start: usize,
    pub end: usize,
}

/// Extracts spans from IOB2 tags. With `repair`, a stray `I-X` opens a new
/// span as if it were `B-X`; without it, a stray `I-X` is an error.
pub fn extract_spans<S: AsRef<str>>(tags: &[S], repair: bool) -> Result<Vec<Span>> {
    let mut spans = Vec::new();
    let mut open: Option<Span> = None;
    for (i, tag) in tags.iter().enumerate() {
        let tag = tag.as_ref();
        if tag == "O" {
            spans.extend(open.take());
            continue;
        }
        let (prefix, kind) = tag
            .split_once('-')
            .ok_or_else(|| Error::contract(format!("malformed tag {tag:?} at {i}")))?;
        match prefix {
            "B" => {
                spans.extend(open.take());
                open = Some(Span { kind: kind.to_string(), start: i, end: i + 1 });
            }
            "I" => match &mut open {
                Some(s) if s.kind == kind => s.end = i + 1,
                _ if repair => {
                    spans.extend(open.take());
                    open = Some(Span { kind: kind.to_string(), start: i, end: i + 1 });
                }
                _ => return Err(Error::contract(format!("{tag} at {i} does not continue a {kind} span"))),
            },
            _ => return Err(Error::contract(format!("malformed tag {tag:?} at {i}"))),
        }
    }
    spans.extend(open);
    Ok(spans)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct F1Score {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Exact-match entity scores over aligned sentences. Predicted tags are
/// repaired; gold tags must be valid IOB2.
pub fn entity_f1<S: AsRef<str>, T: AsRef<str>>(predicted: &[Vec<S>], gold: &[Vec<T>]) -> Result<F1Score> {
    if predicted.len() != gold.len() {
        return Err(Error::contract(format!(
            "{} predicted sentences vs {} gold",
            predicted.len(),
            gold.len()
        )));
    }
    let (mut n_pred, mut n_gold, mut hits) = (0usize, 0usize, 0usize);
    for (i, (p, g)) in predicted.iter().zip(gold).enumerate() {
        if p.len() != g.len() {
            return Err(Error::contract(format!("sentence {i}: {} predicted tags vs {} gold", p.len(), g.len())));
        }
        let ps = extract_spans(p, true)?;
        let gs: HashSet<Span> = extract_spans(g, false)
            .map_err(|e| Error::contract(format!("gold sentence {i}: {e}")))?
            .into_iter()
            .collect();
        n_pred += ps.len();
        n_gold += gs.len();
        hits += ps.iter().filter(|s| gs.contains(s)).count();
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision = ratio(hits, n_pred);
    let recall = ratio(hits, n_gold);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(F1Score { precision, recall, f1 })
}

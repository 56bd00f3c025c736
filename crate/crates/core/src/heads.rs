//! Task heads: max-pooling over time with a softmax classifier, and a
//! linear-chain CRF for tagging.

use rand::Rng;

use crate::error::{Error, Result};
use crate::params::{Linear, ParamId, ParamStore};
use crate::tensor::{log_sum_exp, softmax_in_place, Tape, Tensor, Var};

/// Elementwise maximum across time steps; ties go to the earliest step.
pub fn max_pool_over_time(tape: &mut Tape, outputs: &[Var]) -> Result<Var> {
    if outputs.is_empty() {
        return Err(Error::contract("max pooling over an empty sequence"));
    }
    tape.max_over(outputs)
}

/// `-log softmax(logits)[label]`, fused so the backward pass is the usual
/// `softmax - onehot`.
pub fn softmax_cross_entropy(tape: &mut Tape, logits: Var, label: usize) -> Result<Var> {
    let z = tape.value(logits);
    if z.rank() != 1 {
        return Err(Error::shape("softmax_cross_entropy", z.shape(), &[]));
    }
    if label >= z.len() {
        return Err(Error::contract(format!("label {label} out of range for {} classes", z.len())));
    }
    let lse = log_sum_exp(z.data());
    let loss = lse - z.data()[label];
    let mut grad = z.data().to_vec();
    softmax_in_place(&mut grad);
    grad[label] -= 1.0;
    tape.scalar_with_local_grads(loss, &[logits], vec![Tensor::vector(grad)])
}

/// Linear-chain CRF over `tags` labels plus virtual start and stop states.
///
/// `transitions[i][j]` scores moving from tag `i` to tag `j`. Row `start()` is
/// only read as a source and column `stop()` only as a destination; the other
/// entries touching the virtual states never receive gradient.
#[derive(Clone, Debug)]
pub struct CrfParams {
    pub tags: usize,
    pub transitions: ParamId,
    pub emission: Linear,
}

impl CrfParams {
    pub fn register(store: &mut ParamStore, prefix: &str, input_dim: usize, tags: usize) -> Self {
        let n = tags + 2;
        CrfParams {
            tags,
            transitions: store.add(format!("{prefix}.transitions"), Tensor::zeros(&[n, n])),
            emission: Linear::register(store, &format!("{prefix}.emission"), input_dim, tags),
        }
    }

    pub fn init_default<R: Rng + ?Sized>(&self, store: &mut ParamStore, rng: &mut R) {
        self.emission.init_glorot(store, rng);
        store.get_mut(self.transitions).data_mut().fill(0.0);
    }

    pub fn start(&self) -> usize {
        self.tags
    }

    pub fn stop(&self) -> usize {
        self.tags + 1
    }

    pub fn param_count(&self) -> usize {
        self.emission.param_count() + (self.tags + 2) * (self.tags + 2)
    }
}

fn check_crf_shapes(emissions: &Tensor, transitions: &Tensor) -> Result<usize> {
    if emissions.rank() != 2 {
        return Err(Error::shape("crf emissions", emissions.shape(), &[]));
    }
    let k = emissions.cols();
    if transitions.shape() != [k + 2, k + 2] {
        return Err(Error::shape("crf transitions", &[k + 2, k + 2], transitions.shape()));
    }
    Ok(k)
}

/// Score of one tag path, including the start and stop transitions.
pub fn crf_path_score(emissions: &Tensor, transitions: &Tensor, tags: &[usize]) -> Result<f64> {
    let k = check_crf_shapes(emissions, transitions)?;
    if tags.len() != emissions.rows() {
        return Err(Error::shape("crf tags", &[emissions.rows()], &[tags.len()]));
    }
    if let Some(&bad) = tags.iter().find(|&&t| t >= k) {
        return Err(Error::contract(format!("tag {bad} out of range for {k} tags")));
    }
    let (start, stop) = (k, k + 1);
    let mut score = transitions.at(start, tags[0]);
    for (t, &tag) in tags.iter().enumerate() {
        score += emissions.at(t, tag);
        if t > 0 {
            score += transitions.at(tags[t - 1], tag);
        }
    }
    Ok(score + transitions.at(tags[tags.len() - 1], stop))
}

struct Lattice {
    alpha: Vec<Vec<f64>>,
    beta: Vec<Vec<f64>>,
    log_z: f64,
}

fn forward_backward(emissions: &Tensor, transitions: &Tensor) -> Lattice {
    let (t_len, k) = (emissions.rows(), emissions.cols());
    let (start, stop) = (k, k + 1);
    let mut alpha = vec![vec![0.0; k]; t_len];
    for j in 0..k {
        alpha[0][j] = transitions.at(start, j) + emissions.at(0, j);
    }
    let mut buf = vec![0.0; k];
    for t in 1..t_len {
        for j in 0..k {
            for i in 0..k {
                buf[i] = alpha[t - 1][i] + transitions.at(i, j);
            }
            alpha[t][j] = emissions.at(t, j) + log_sum_exp(&buf);
        }
    }
    let mut beta = vec![vec![0.0; k]; t_len];
    for i in 0..k {
        beta[t_len - 1][i] = transitions.at(i, stop);
    }
    for t in (0..t_len - 1).rev() {
        for i in 0..k {
            for j in 0..k {
                buf[j] = transitions.at(i, j) + emissions.at(t + 1, j) + beta[t + 1][j];
            }
            beta[t][i] = log_sum_exp(&buf);
        }
    }
    for j in 0..k {
        buf[j] = alpha[t_len - 1][j] + transitions.at(j, stop);
    }
    let log_z = log_sum_exp(&buf);
    Lattice { alpha, beta, log_z }
}

/// `log Σ_paths exp(score(path))` by the forward algorithm.
pub fn crf_log_partition(emissions: &Tensor, transitions: &Tensor) -> Result<f64> {
    check_crf_shapes(emissions, transitions)?;
    Ok(forward_backward(emissions, transitions).log_z)
}

fn stack_rows(tape: &Tape, rows: &[Var]) -> Result<Tensor> {
    let k = tape.shape(rows[0]).to_vec();
    if k.len() != 1 {
        return Err(Error::shape("crf emission step", &k, &[]));
    }
    let mut data = Vec::with_capacity(rows.len() * k[0]);
    for r in rows {
        if tape.shape(*r) != k.as_slice() {
            return Err(Error::shape("crf emission step", &k, tape.shape(*r)));
        }
        data.extend_from_slice(tape.value(*r).data());
    }
    Tensor::matrix(rows.len(), k[0], data)
}

/// `log Z - score(tags)` for per-step emission vectors. The gradient is the
/// difference between expected and observed emission/transition counts.
pub fn crf_neg_log_likelihood(tape: &mut Tape, emissions: &[Var], tags: &[usize], crf: &CrfParams) -> Result<Var> {
    if emissions.is_empty() {
        return Err(Error::contract("CRF over an empty sequence"));
    }
    let e = stack_rows(tape, emissions)?;
    let trans_var = tape.param(crf.transitions);
    let trans = tape.value(trans_var).clone();
    let gold = crf_path_score(&e, &trans, tags)?;
    let k = e.cols();
    let (t_len, start, stop) = (e.rows(), k, k + 1);
    let lat = forward_backward(&e, &trans);

    let mut d_trans = Tensor::zeros(trans.shape());
    let mut d_emit = vec![vec![0.0; k]; t_len];
    for t in 0..t_len {
        for j in 0..k {
            d_emit[t][j] = (lat.alpha[t][j] + lat.beta[t][j] - lat.log_z).exp();
        }
    }
    for j in 0..k {
        d_trans.set(start, j, d_emit[0][j]);
        d_trans.set(j, stop, d_emit[t_len - 1][j]);
    }
    for t in 1..t_len {
        for i in 0..k {
            for j in 0..k {
                let p = (lat.alpha[t - 1][i] + trans.at(i, j) + e.at(t, j) + lat.beta[t][j] - lat.log_z).exp();
                d_trans.set(i, j, d_trans.at(i, j) + p);
            }
        }
    }
    d_trans.set(start, tags[0], d_trans.at(start, tags[0]) - 1.0);
    d_trans.set(tags[t_len - 1], stop, d_trans.at(tags[t_len - 1], stop) - 1.0);
    for t in 0..t_len {
        d_emit[t][tags[t]] -= 1.0;
        if t > 0 {
            d_trans.set(tags[t - 1], tags[t], d_trans.at(tags[t - 1], tags[t]) - 1.0);
        }
    }

    let mut inputs = emissions.to_vec();
    inputs.push(trans_var);
    let mut grads: Vec<Tensor> = d_emit.into_iter().map(Tensor::vector).collect();
    grads.push(d_trans);
    tape.scalar_with_local_grads(lat.log_z - gold, &inputs, grads)
}

/// Highest-scoring tag path and its score. Ties resolve to the lowest tag
/// index at every step.
pub fn crf_viterbi_decode(emissions: &Tensor, transitions: &Tensor) -> Result<(Vec<usize>, f64)> {
    let k = check_crf_shapes(emissions, transitions)?;
    let t_len = emissions.rows();
    let (start, stop) = (k, k + 1);
    let mut delta: Vec<f64> = (0..k).map(|j| transitions.at(start, j) + emissions.at(0, j)).collect();
    let mut back = vec![vec![0usize; k]; t_len];
    for t in 1..t_len {
        let mut next = vec![0.0; k];
        for j in 0..k {
            let mut best = (0, delta[0] + transitions.at(0, j));
            for i in 1..k {
                let s = delta[i] + transitions.at(i, j);
                if s > best.1 {
                    best = (i, s);
                }
            }
            back[t][j] = best.0;
            next[j] = best.1 + emissions.at(t, j);
        }
        delta = next;
    }
    let mut last = (0, delta[0] + transitions.at(0, stop));
    for j in 1..k {
        let s = delta[j] + transitions.at(j, stop);
        if s > last.1 {
            last = (j, s);
        }
    }
    let mut path = vec![0usize; t_len];
    path[t_len - 1] = last.0;
    for t in (1..t_len).rev() {
        path[t - 1] = back[t][path[t]];
    }
    Ok((path, last.1))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn crf_store(tags: usize) -> (ParamStore, CrfParams) {
        let mut store = ParamStore::new();
        let crf = CrfParams::register(&mut store, "crf", 2, tags);
        (store, crf)
    }

    #[test]
    fn max_pool_definition() {
        let mut tape = Tape::new();
        let a = tape.constant(Tensor::vector(vec![1.0, 5.0]));
        let b = tape.constant(Tensor::vector(vec![3.0, 2.0]));
        let m = max_pool_over_time(&mut tape, &[a, b]).unwrap();
        assert_eq!(tape.value(m).data(), &[3.0, 5.0]);
        let single = max_pool_over_time(&mut tape, &[a]).unwrap();
        assert_eq!(tape.value(single).data(), &[1.0, 5.0]);
        assert!(max_pool_over_time(&mut tape, &[]).is_err());
    }

    #[test]
    fn cross_entropy_uniform_and_saturated() {
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::vector(vec![0.7; 5]));
        let l = softmax_cross_entropy(&mut tape, z, 2).unwrap();
        assert!((tape.value(l).item() - 5f64.ln()).abs() < 1e-15);
        assert!((tape.value(l).item() - 1.609438).abs() < 1e-6);
        let mut hot = vec![0.0; 4];
        hot[1] = 1000.0;
        let z = tape.constant(Tensor::vector(hot));
        let l = softmax_cross_entropy(&mut tape, z, 1).unwrap();
        assert!(tape.value(l).item().abs() < 1e-9);
        assert!(softmax_cross_entropy(&mut tape, z, 4).is_err());
    }

    #[test]
    fn cross_entropy_matches_direct_summation() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let logits: Vec<f64> = (0..6).map(|_| rng.random_range(-3.0..3.0)).collect();
        let mut tape = Tape::new();
        let z = tape.constant(Tensor::vector(logits.clone()));
        let l = softmax_cross_entropy(&mut tape, z, 4).unwrap();
        let denom: f64 = logits.iter().map(|x| x.exp()).sum();
        let want = -(logits[4].exp() / denom).ln();
        assert!((tape.value(l).item() - want).abs() < 1e-12);
    }

    #[test]
    fn crf_uniform_scores() {
        let e = Tensor::zeros(&[2, 2]);
        let tr = Tensor::zeros(&[4, 4]);
        assert!((crf_log_partition(&e, &tr).unwrap() - 4f64.ln()).abs() < 1e-15);
        assert_eq!(crf_path_score(&e, &tr, &[0, 1]).unwrap(), 0.0);
        let (path, score) = crf_viterbi_decode(&e, &tr).unwrap();
        assert_eq!(path, vec![0, 0]);
        assert_eq!(score, 0.0);
    }

    #[test]
    fn crf_single_tag_has_zero_loss() {
        let (store, crf) = crf_store(1);
        let mut tape = Tape::with_params(&store);
        let steps: Vec<Var> = [0.3, -1.2, 2.0]
            .iter()
            .map(|&v| tape.constant(Tensor::vector(vec![v])))
            .collect();
        let l = crf_neg_log_likelihood(&mut tape, &steps, &[0, 0, 0], &crf).unwrap();
        assert!(tape.value(l).item().abs() < 1e-12);
    }

    #[test]
    fn crf_rejects_bad_tags() {
        let (store, crf) = crf_store(3);
        let mut tape = Tape::with_params(&store);
        let s = tape.constant(Tensor::vector(vec![0.0; 3]));
        assert!(crf_neg_log_likelihood(&mut tape, &[s], &[3], &crf).is_err());
        assert!(crf_neg_log_likelihood(&mut tape, &[], &[], &crf).is_err());
    }

    #[test]
    fn viterbi_decoupled_when_transitions_vanish() {
        let e = Tensor::matrix(3, 3, vec![0.0, 9.0, 0.0, 9.0, 0.0, 0.0, 0.0, 0.0, 9.0]).unwrap();
        let (path, score) = crf_viterbi_decode(&e, &Tensor::zeros(&[5, 5])).unwrap();
        assert_eq!(path, vec![1, 0, 2]);
        assert_eq!(score, 27.0);
    }
}

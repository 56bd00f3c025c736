mod common;

use common::rng;
use nornet::heads::{crf_log_partition, crf_path_score, crf_viterbi_decode};
use nornet::Tensor;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

fn random_scores(t: usize, k: usize, r: &mut ChaCha8Rng) -> (Tensor, Tensor) {
    let e = Tensor::from_fn(&[t, k], |_| r.random_range(-2.0..2.0));
    let tr = Tensor::from_fn(&[k + 2, k + 2], |_| r.random_range(-2.0..2.0));
    (e, tr)
}

fn all_paths(t: usize, k: usize) -> Vec<Vec<usize>> {
    let mut paths = vec![vec![]];
    for _ in 0..t {
        paths = paths
            .into_iter()
            .flat_map(|p| {
                (0..k).map(move |j| {
                    let mut q = p.clone();
                    q.push(j);
                    q
                })
            })
            .collect();
    }
    paths
}

/// Exhaustive log Z and the best path (first found on ties, i.e. the
/// lexicographically smallest).
fn brute_force(e: &Tensor, tr: &Tensor) -> (f64, Vec<usize>, f64) {
    let (t, k) = (e.rows(), e.cols());
    let scores: Vec<(Vec<usize>, f64)> = all_paths(t, k)
        .into_iter()
        .map(|p| {
            let s = crf_path_score(e, tr, &p).unwrap();
            (p, s)
        })
        .collect();
    let m = scores.iter().map(|s| s.1).fold(f64::NEG_INFINITY, f64::max);
    let log_z = m + scores.iter().map(|s| (s.1 - m).exp()).sum::<f64>().ln();
    let best = scores.iter().fold(&scores[0], |b, s| if s.1 > b.1 { s } else { b });
    (log_z, best.0.clone(), best.1)
}

#[test]
fn path_score_matches_hand_sum() {
    let e = Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
    let tr = Tensor::from_fn(&[4, 4], |i| i as f64 / 10.0);
    // start->1 (row 2, col 1), e[0][1], 1->0, e[1][0], 0->stop (row 0, col 3)
    let want = 0.9 + 2.0 + 0.4 + 3.0 + 0.3;
    assert!((crf_path_score(&e, &tr, &[1, 0]).unwrap() - want).abs() < 1e-12);
}

#[test]
fn partition_and_viterbi_match_enumeration() {
    let mut r = rng(7);
    for k in 1..=4 {
        for t in 1..=4 {
            for _ in 0..100 {
                let (e, tr) = random_scores(t, k, &mut r);
                let (log_z, path, score) = brute_force(&e, &tr);
                assert!((crf_log_partition(&e, &tr).unwrap() - log_z).abs() < 1e-10);
                let (vp, vs) = crf_viterbi_decode(&e, &tr).unwrap();
                assert_eq!(vp, path, "K={k} T={t}");
                assert!((vs - score).abs() < 1e-10);
            }
        }
    }
}

#[test]
fn probabilities_sum_to_one() {
    let mut r = rng(8);
    for k in 1..=3 {
        for t in 1..=3 {
            let (e, tr) = random_scores(t, k, &mut r);
            let log_z = crf_log_partition(&e, &tr).unwrap();
            let total: f64 = all_paths(t, k)
                .iter()
                .map(|p| (crf_path_score(&e, &tr, p).unwrap() - log_z).exp())
                .sum();
            assert!((total - 1.0).abs() < 1e-9);
        }
    }
}

#[test]
fn shifting_one_step_shifts_log_partition() {
    let mut r = rng(9);
    let (e, tr) = random_scores(4, 3, &mut r);
    let mut shifted = e.clone();
    for j in 0..3 {
        shifted.set(2, j, e.at(2, j) + 1.75);
    }
    let a = crf_log_partition(&e, &tr).unwrap();
    let b = crf_log_partition(&shifted, &tr).unwrap();
    assert!((b - a - 1.75).abs() < 1e-12);
    assert_eq!(crf_viterbi_decode(&e, &tr).unwrap().0, crf_viterbi_decode(&shifted, &tr).unwrap().0);
}

#[test]
fn viterbi_dominates_every_path() {
    let mut r = rng(10);
    let (e, tr) = random_scores(3, 3, &mut r);
    let (best, score) = crf_viterbi_decode(&e, &tr).unwrap();
    for p in all_paths(3, 3) {
        let s = crf_path_score(&e, &tr, &p).unwrap();
        assert!(s <= score + 1e-12);
        if p != best {
            assert!(s < score);
        }
    }
    let zeros = Tensor::zeros(&[3, 3]);
    let tz = Tensor::zeros(&[5, 5]);
    assert_eq!(crf_viterbi_decode(&zeros, &tz).unwrap(), (vec![0, 0, 0], 0.0));
}

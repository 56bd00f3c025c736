#![allow(dead_code)]

use nornet::cells::{CellKind, CellParams, GateWeights};
use nornet::nor::{unroll, NorLayer, Recurrent, TopologyKind, Tier2Input};
use nornet::{ParamStore, Tape, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fill_uniform(store: &mut ParamStore, limit: f64, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.get_mut(id).data_mut() {
            *v = rng.random_range(-limit..limit);
        }
    }
}

/// Multiples of 1/8 in [-1/2, 1/2]: sums and products of a few of these are
/// exact in fp64.
pub fn fill_dyadic(store: &mut ParamStore, rng: &mut ChaCha8Rng) {
    for id in store.ids().collect::<Vec<_>>() {
        for v in store.get_mut(id).data_mut() {
            *v = rng.random_range(-4i32..=4) as f64 / 8.0;
        }
    }
}

pub fn rand_seq(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..t).map(|_| (0..d).map(|_| rng.random_range(-1.0..1.0)).collect()).collect()
}

pub fn dyadic_seq(t: usize, d: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..t).map(|_| (0..d).map(|_| rng.random_range(-4i32..=4) as f64 / 4.0).collect()).collect()
}

pub fn run_layer<L: Recurrent>(store: &ParamStore, layer: &L, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mut tape = Tape::with_params(store);
    let inputs: Vec<_> = xs.iter().map(|x| tape.constant(Tensor::vector(x.clone()))).collect();
    let init = layer.zero_state(&mut tape);
    let outs = unroll(&mut tape, layer, &inputs, init).unwrap();
    outs.iter().map(|o| tape.value(*o).data().to_vec()).collect()
}

pub fn bits(v: &[Vec<f64>]) -> Vec<Vec<u64>> {
    v.iter().map(|r| r.iter().map(|x| x.to_bits()).collect()).collect()
}

pub fn max_diff(a: &[Vec<f64>], b: &[Vec<f64>]) -> f64 {
    a.iter()
        .flatten()
        .zip(b.iter().flatten())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

// Plain-loop reference implementations.

pub fn ref_affine(store: &ParamStore, g: &GateWeights, x: &[f64], h: &[f64]) -> Vec<f64> {
    let (w, u, b) = (store.get(g.w), store.get(g.u), store.get(g.b));
    (0..b.len())
        .map(|i| {
            let mut s = b.data()[i];
            for (j, xj) in x.iter().enumerate() {
                s += w.at(i, j) * xj;
            }
            for (j, hj) in h.iter().enumerate() {
                s += u.at(i, j) * hj;
            }
            s
        })
        .collect()
}

pub fn ref_cell(store: &ParamStore, p: &CellParams, x: &[f64], h: &[f64]) -> Vec<f64> {
    let a = ref_affine(store, &p.gates[0], x, h);
    match p.kind {
        CellKind::Simple => a.into_iter().map(|v| v.max(0.0)).collect(),
        CellKind::Gate => a.into_iter().map(|v| 1.0 / (1.0 + (-v).exp())).collect(),
        other => panic!("no reference for {other:?}"),
    }
}

pub fn ref_combine(store: &ParamStore, layer: &NorLayer, parts: &[Vec<f64>]) -> Vec<f64> {
    let cat: Vec<f64> = parts.concat();
    let w = store.get(layer.combiner.w);
    let b = store.get(layer.combiner.b);
    (0..b.len())
        .map(|i| {
            let mut s = b.data()[i];
            for (j, c) in cat.iter().enumerate() {
                s += w.at(i, j) * c;
            }
            s.max(0.0)
        })
        .collect()
}

/// Runs a NOR layer from its equations, one topology at a time.
pub fn ref_nor(store: &ParamStore, layer: &NorLayer, xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let h = layer.topology.hidden();
    let n = layer.neurons.len();
    let mut mem: Vec<Vec<Vec<f64>>> = layer.neurons.iter().map(|s| vec![vec![0.0; h]; s.len()]).collect();
    let mut outs = Vec::new();
    for x in xs {
        let tier1: Vec<Vec<f64>> = (0..n).map(|i| ref_cell(store, &layer.neurons[i][0], x, &mem[i][0])).collect();
        let all: Vec<f64> = tier1.concat();
        let mut last = tier1.clone();
        for i in 0..n {
            if layer.neurons[i].len() < 2 {
                continue;
            }
            let input = match layer.topology.kind {
                TopologyKind::Ss => all.clone(),
                TopologyKind::Ma2 if layer.topology.subnetworks[i].wiring == Tier2Input::LayerInput => x.clone(),
                TopologyKind::Ma2 | TopologyKind::Ms => tier1[i].clone(),
                other => panic!("{other:?} has no second tier"),
            };
            let o2 = ref_cell(store, &layer.neurons[i][1], &input, &mem[i][1]);
            mem[i][1] = o2.clone();
            last[i] = o2;
        }
        for i in 0..n {
            mem[i][0] = tier1[i].clone();
        }
        let parts: Vec<Vec<f64>> = if layer.topology.kind == TopologyKind::Gate {
            last.chunks(2)
                .map(|p| p[0].iter().zip(&p[1]).map(|(g, r)| g * r).collect())
                .collect()
        } else {
            last
        };
        outs.push(ref_combine(store, layer, &parts));
    }
    outs
}

pub fn copy_param(src: &ParamStore, from: nornet::ParamId, dst: &mut ParamStore, to: nornet::ParamId) {
    dst.set(to, src.get(from).clone()).unwrap();
}

pub fn copy_cell(src: &ParamStore, a: &CellParams, dst: &mut ParamStore, b: &CellParams) {
    for (ga, gb) in a.gates.iter().zip(&b.gates) {
        copy_param(src, ga.w, dst, gb.w);
        copy_param(src, ga.u, dst, gb.u);
        copy_param(src, ga.b, dst, gb.b);
    }
}

/// Column blocks of width `h` rearranged so that block `j` of the result is
/// block `perm[j]` of `m`.
pub fn permute_column_blocks(m: &Tensor, h: usize, perm: &[usize]) -> Tensor {
    let (rows, cols) = (m.rows(), m.cols());
    Tensor::from_fn(&[rows, cols], |k| {
        let (r, c) = (k / cols, k % cols);
        let (blk, off) = (c / h, c % h);
        m.at(r, perm[blk] * h + off)
    })
}

#![allow(dead_code)]

use gcn_llm::embedding::{pseudo_table, EmbeddingTable};
use gcn_llm::featurize::{batch_graphs, BatchedGraph};
use gcn_llm::model::layers::cross_entropy;
use gcn_llm::model::{forward, loss_and_gradients, Mode, ModelConfig, ModelParams};
use gcn_llm::smiles::{parse, MolecularGraph};
use gcn_llm::synthetic::random_smiles;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `count` random molecules with at most `max_atoms` heavy atoms each.
pub fn small_molecules(rng: &mut ChaCha8Rng, count: usize, max_atoms: usize) -> Vec<String> {
    let mut out = Vec::new();
    while out.len() < count {
        let want_n = rng.random_bool(0.5);
        let s = random_smiles(rng, 3, want_n);
        let g = parse(&s).unwrap();
        if g.atoms.len() <= max_atoms && !out.contains(&s) {
            out.push(s);
        }
    }
    out
}

pub struct Fixture {
    pub smiles: Vec<String>,
    pub graphs: Vec<MolecularGraph>,
    pub batch: BatchedGraph,
    pub table: EmbeddingTable,
    pub labels: Vec<usize>,
}

pub fn fixture(smiles: Vec<String>, embed_dim: usize, seed: u64) -> Fixture {
    let graphs: Vec<MolecularGraph> = smiles.iter().map(|s| parse(s).unwrap()).collect();
    let batch = batch_graphs(graphs.iter().zip(smiles.iter().map(String::as_str))).unwrap();
    let table = pseudo_table(smiles.iter().map(String::as_str), seed, embed_dim);
    let labels = (0..smiles.len()).map(|i| i % 2).collect();
    Fixture {
        smiles,
        graphs,
        batch,
        table,
        labels,
    }
}

/// Randomizes biases, batch-norm affine terms and running statistics so
/// that no layer starts at a special point.
pub fn perturb(params: &mut ModelParams, rng: &mut ChaCha8Rng) {
    for arr in params.trainable_mut() {
        for v in arr.iter_mut() {
            *v += rng.random_range(-0.1..0.1);
        }
    }
    for bn in &mut params.bn {
        bn.running_mean
            .mapv_inplace(|_| rng.random_range(-0.5..0.5));
        bn.running_var.mapv_inplace(|_| rng.random_range(0.5..2.0));
    }
}

pub fn loss_only(params: &ModelParams, config: &ModelConfig, fx: &Fixture, mode: Mode) -> f64 {
    let logits = forward(params, config, &fx.batch, &fx.table, mode).unwrap();
    cross_entropy(&logits, &fx.labels, None).unwrap().0
}

pub const FD_STEP: f64 = 1e-5;
pub const REL_FLOOR: f64 = 1e-6;

/// `|a - b| / max(|a|, |b|, REL_FLOOR)`.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(REL_FLOOR)
}

/// Central-difference check of every trainable scalar. Returns the worst
/// relative error per named array.
pub fn gradient_check(
    params: &ModelParams,
    config: &ModelConfig,
    fx: &Fixture,
    mode: Mode,
) -> Vec<(String, f64)> {
    let analytic = loss_and_gradients(params, config, &fx.batch, &fx.table, &fx.labels, mode, None)
        .unwrap()
        .grads;
    let names: Vec<String> = params.trainable().map(|(n, _)| n).collect();
    let grads: Vec<Vec<f64>> = analytic.trainable().map(|(_, g)| g.to_vec()).collect();
    let mut work = params.clone();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = grads[k].len();
        let mut worst = 0.0f64;
        for i in 0..len {
            let orig = work.trainable_mut()[k][i];
            work.trainable_mut()[k][i] = orig + FD_STEP;
            let up = loss_only(&work, config, fx, mode);
            work.trainable_mut()[k][i] = orig - FD_STEP;
            let down = loss_only(&work, config, fx, mode);
            work.trainable_mut()[k][i] = orig;
            let fd = (up - down) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(fd, grads[k][i]));
        }
        out.push((name.clone(), worst));
    }
    out
}

pub fn seeded(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

//! Random small molecules for tests and sanity runs.
//!
//! Molecules are chains of fragments joined by single bonds, so every
//! output parses and stays within default valences.

use std::collections::HashSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::smiles::parse;

/// Fragments that can sit anywhere in a chain (two open valences).
const LINKERS: [&str; 14] = [
    "C",
    "CC",
    "C(C)",
    "C(=O)",
    "O",
    "S",
    "C(C)(C)",
    "c1ccccc1",
    "C1CCCCC1",
    "c1ccsc1",
    "C1CCOC1",
    "C=C",
    "c1ccc2ccccc2c1",
    "C(O)",
];
const N_LINKERS: [&str; 9] = [
    "N", "C(N)", "c1ccncc1", "N1CCCC1", "C(=O)N", "c1cnccn1", "C(C#N)", "n1cccc1", "C1CCNCC1",
];
/// Chain ends (one open valence).
const CAPS: [&str; 7] = ["C", "F", "Cl", "Br", "O", "C(F)(F)F", "OC"];
const N_CAPS: [&str; 4] = ["C#N", "N", "NC", "N(C)C"];

/// Random SMILES of `1..=max_units` fragments; when `with_nitrogen` is set
/// at least one fragment contains nitrogen, otherwise none does.
pub fn random_smiles<R: Rng>(rng: &mut R, max_units: usize, with_nitrogen: bool) -> String {
    let units = rng.random_range(1..=max_units.max(1));
    let n_slot = if with_nitrogen {
        Some(rng.random_range(0..=units))
    } else {
        None
    };
    let mut out = String::new();
    for i in 0..units {
        let frag = if n_slot == Some(i) {
            N_LINKERS.choose(rng)
        } else if with_nitrogen && rng.random_bool(0.2) {
            N_LINKERS.choose(rng)
        } else {
            LINKERS.choose(rng)
        };
        out.push_str(frag.expect("non-empty"));
    }
    let cap = if n_slot == Some(units) {
        N_CAPS.choose(rng)
    } else {
        CAPS.choose(rng)
    };
    out.push_str(cap.expect("non-empty"));
    out
}

/// A molecule with its ground-truth label.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabeledSmiles {
    pub smiles: String,
    pub label: usize,
}

/// `n` distinct molecules, roughly half containing nitrogen. The label is
/// recomputed from the parsed graph (1 iff any atom is nitrogen).
pub fn nitrogen_dataset(n: usize, max_units: usize, seed: u64) -> Vec<LabeledSmiles> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(n);
    let mut attempts = 0usize;
    while out.len() < n {
        attempts += 1;
        assert!(attempts < n * 1000 + 10_000, "fragment space exhausted");
        let want_n = rng.random_bool(0.5);
        let smiles = random_smiles(&mut rng, max_units, want_n);
        if !seen.insert(smiles.clone()) {
            continue;
        }
        let graph = parse(&smiles).expect("generated SMILES parse");
        let label = usize::from(graph.atoms.iter().any(|a| a.element == "N"));
        out.push(LabeledSmiles { smiles, label });
    }
    out
}

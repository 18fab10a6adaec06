//! Parser agreement with a frozen reference-toolkit corpus.

use gcn_llm::smiles::{parse, BondOrder, MolecularGraph};

pub struct GoldenEntry {
    pub smiles: String,
    pub atoms: usize,
    pub bonds: usize,
    pub aromatic_bonds: usize,
    /// (symbol, charge, aromatic, total_h, in_ring)
    pub per_atom: Vec<(String, i32, bool, u32, bool)>,
}

pub fn load_golden() -> Vec<GoldenEntry> {
    let text = include_str!("fixtures/golden_smiles.tsv");
    text.lines()
        .filter(|l| !l.starts_with('#') && !l.trim().is_empty())
        .map(|line| {
            let cols: Vec<&str> = line.split('\t').collect();
            let per_atom = cols[4]
                .split(' ')
                .map(|a| {
                    let f: Vec<&str> = a.split(':').collect();
                    (
                        f[0].to_string(),
                        f[1].parse().unwrap(),
                        f[2] == "1",
                        f[3].parse().unwrap(),
                        f[4] == "1",
                    )
                })
                .collect();
            GoldenEntry {
                smiles: cols[0].to_string(),
                atoms: cols[1].parse().unwrap(),
                bonds: cols[2].parse().unwrap(),
                aromatic_bonds: cols[3].parse().unwrap(),
                per_atom,
            }
        })
        .collect()
}

pub fn mismatches(entry: &GoldenEntry, g: &MolecularGraph) -> Vec<String> {
    let mut out = Vec::new();
    if g.atoms.len() != entry.atoms {
        out.push(format!("atom count {} != {}", g.atoms.len(), entry.atoms));
    }
    if g.bonds.len() != entry.bonds {
        out.push(format!("bond count {} != {}", g.bonds.len(), entry.bonds));
    }
    let arom = g
        .bonds
        .iter()
        .filter(|b| b.order == BondOrder::Aromatic)
        .count();
    if arom != entry.aromatic_bonds {
        out.push(format!("aromatic bonds {arom} != {}", entry.aromatic_bonds));
    }
    for (atom, want) in g.atoms.iter().zip(&entry.per_atom) {
        let got = (
            atom.element.clone(),
            atom.formal_charge,
            atom.aromatic,
            atom.total_h(),
            atom.in_ring,
        );
        if &got != want {
            out.push(format!("atom {}: {:?} != {:?}", atom.index, got, want));
        }
    }
    out
}

#[test]
fn corpus_matches_reference() {
    let corpus = load_golden();
    assert!(corpus.len() >= 30);
    let mut failures = Vec::new();
    for entry in &corpus {
        let g = parse(&entry.smiles).unwrap_or_else(|e| panic!("{}: {e}", entry.smiles));
        for m in mismatches(entry, &g) {
            failures.push(format!("{}: {m}", entry.smiles));
        }
    }
    assert!(failures.is_empty(), "{failures:#?}");
}

#[test]
fn degree_invariant_and_bond_accounting() {
    for entry in load_golden() {
        let g = parse(&entry.smiles).unwrap();
        let deg = g.degrees();
        for a in &g.atoms {
            assert_eq!(deg[a.index], g.degree(a.index));
        }
        let mut pairs = std::collections::HashSet::new();
        for b in &g.bonds {
            assert_ne!(b.a, b.b);
            assert!(pairs.insert((b.a.min(b.b), b.a.max(b.b))));
        }
        // Bonds = atom adjacencies within a fragment + ring closures.
        let tokens = gcn_llm::smiles::tokenize(&entry.smiles).unwrap();
        let closures = tokens
            .iter()
            .filter(|t| t.kind == gcn_llm::smiles::TokenKind::RingClosure)
            .count();
        let tree_bonds = g.atoms.len() - g.fragments().len();
        assert_eq!(g.bonds.len(), tree_bonds + closures / 2, "{}", entry.smiles);
    }
}

#[test]
fn parsing_is_pure() {
    for entry in load_golden() {
        let a = parse(&entry.smiles).unwrap();
        let b = parse(&entry.smiles).unwrap();
        assert_eq!(a.to_debug_text(), b.to_debug_text());
        assert_eq!(a, b);
    }
}

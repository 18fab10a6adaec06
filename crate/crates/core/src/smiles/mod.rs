//! SMILES tokenizer and parser producing heavy-atom molecular graphs.
//!
//! Supported dialect: the organic subset (B, C, N, O, P, S, F, Cl, Br, I and
//! aromatic b, c, n, o, p, s), bracket atoms with isotope, chirality,
//! hydrogen count, charge and atom class, branches, ring closures (single
//! digit and `%nn`), and dot-separated fragments. Stereo marks are accepted
//! and dropped with a warning. Hydrogens are not graph nodes unless written
//! as their own bracket atom.

pub mod elements;
mod parse;
mod tokenize;

use std::fmt::{self, Write as _};

pub use parse::{parse, parse_with, ParseOptions};
pub use tokenize::{tokenize, Token, TokenKind};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum SmilesError {
    #[error("empty SMILES string")]
    Empty,
    #[error("syntax error at position {position}: {message}")]
    Syntax { position: usize, message: String },
    #[error("unterminated bracket atom starting at position {position}")]
    UnterminatedBracket { position: usize },
    #[error("ring closure {label} opened at position {position} is never closed")]
    UnmatchedRingClosure { label: u32, position: usize },
    #[error("unbalanced branch at position {position}")]
    UnbalancedBranch { position: usize },
    #[error("atom {atom} ({element}) has bond-order sum {bond_sum} above its maximum valence")]
    Valence {
        atom: usize,
        element: String,
        bond_sum: u32,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum BondOrder {
    Single,
    Double,
    Triple,
    Aromatic,
}

impl BondOrder {
    /// Contribution to an atom's bond-order sum; aromatic bonds count as one.
    pub fn valence(self) -> u32 {
        match self {
            BondOrder::Single | BondOrder::Aromatic => 1,
            BondOrder::Double => 2,
            BondOrder::Triple => 3,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            BondOrder::Single => "single",
            BondOrder::Double => "double",
            BondOrder::Triple => "triple",
            BondOrder::Aromatic => "aromatic",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Atom {
    pub index: usize,
    pub element: String,
    pub formal_charge: i32,
    pub aromatic: bool,
    /// Hydrogen count written inside a bracket atom; `None` for organic-subset atoms.
    pub explicit_h: Option<u32>,
    /// Hydrogens implied by default valence; always 0 for bracket atoms.
    pub implicit_h: u32,
    pub isotope: Option<u32>,
    pub in_ring: bool,
}

impl Atom {
    pub fn total_h(&self) -> u32 {
        self.implicit_h + self.explicit_h.unwrap_or(0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Bond {
    pub a: usize,
    pub b: usize,
    pub order: BondOrder,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MolecularGraph {
    pub atoms: Vec<Atom>,
    pub bonds: Vec<Bond>,
    pub source_smiles: String,
    /// Non-fatal notes such as discarded stereo marks.
    pub warnings: Vec<String>,
}

impl MolecularGraph {
    pub fn atom_count(&self) -> usize {
        self.atoms.len()
    }

    pub fn degree(&self, atom: usize) -> usize {
        self.bonds
            .iter()
            .filter(|b| b.a == atom || b.b == atom)
            .count()
    }

    pub fn degrees(&self) -> Vec<usize> {
        let mut deg = vec![0; self.atoms.len()];
        for b in &self.bonds {
            deg[b.a] += 1;
            deg[b.b] += 1;
        }
        deg
    }

    pub fn neighbors(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.atoms.len()];
        for b in &self.bonds {
            adj[b.a].push(b.b);
            adj[b.b].push(b.a);
        }
        adj
    }

    /// Connected components as sorted atom index lists.
    pub fn fragments(&self) -> Vec<Vec<usize>> {
        let adj = self.neighbors();
        let mut seen = vec![false; self.atoms.len()];
        let mut out = Vec::new();
        for start in 0..self.atoms.len() {
            if seen[start] {
                continue;
            }
            let mut comp = vec![start];
            seen[start] = true;
            let mut i = 0;
            while i < comp.len() {
                for &n in &adj[comp[i]] {
                    if !seen[n] {
                        seen[n] = true;
                        comp.push(n);
                    }
                }
                i += 1;
            }
            comp.sort_unstable();
            out.push(comp);
        }
        out
    }

    /// Line-oriented dump: `ATOM idx element charge aromatic implicit_h`
    /// then `BOND a b order`.
    pub fn to_debug_text(&self) -> String {
        self.to_string()
    }

    /// Returns the graph with atoms relabeled so that old atom `i` becomes
    /// `perm[i]`.
    pub fn permuted(&self, perm: &[usize]) -> MolecularGraph {
        assert_eq!(perm.len(), self.atoms.len(), "permutation length");
        let mut atoms = self.atoms.clone();
        for (old, atom) in self.atoms.iter().enumerate() {
            let mut moved = atom.clone();
            moved.index = perm[old];
            atoms[perm[old]] = moved;
        }
        let bonds = self
            .bonds
            .iter()
            .map(|b| Bond {
                a: perm[b.a],
                b: perm[b.b],
                order: b.order,
            })
            .collect();
        MolecularGraph {
            atoms,
            bonds,
            source_smiles: self.source_smiles.clone(),
            warnings: self.warnings.clone(),
        }
    }
}

impl fmt::Display for MolecularGraph {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut out = String::new();
        for a in &self.atoms {
            writeln!(
                out,
                "ATOM {} {} {} {} {}",
                a.index, a.element, a.formal_charge, a.aromatic, a.implicit_h
            )?;
        }
        for b in &self.bonds {
            writeln!(out, "BOND {} {} {}", b.a, b.b, b.order.as_str())?;
        }
        f.write_str(&out)
    }
}

use std::collections::{BTreeMap, HashSet, VecDeque};

use super::elements::{can_be_aromatic, charged_valences, is_element};
use super::tokenize::{tokenize, Token, TokenKind};
use super::{Atom, Bond, BondOrder, MolecularGraph, SmilesError};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct ParseOptions {
    /// Reject organic-subset atoms whose bond-order sum exceeds every
    /// default valence instead of assigning zero implicit hydrogens.
    pub strict_valence: bool,
}

/// Parses with default (lenient) options.
pub fn parse(smiles: &str) -> Result<MolecularGraph, SmilesError> {
    parse_with(smiles, ParseOptions::default())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum BondSymbol {
    Single,
    Double,
    Triple,
    Aromatic,
    /// `/` or `\`: a single bond with discarded stereo.
    Directional,
}

impl BondSymbol {
    fn from_text(text: &str) -> Self {
        match text {
            "=" => BondSymbol::Double,
            "#" => BondSymbol::Triple,
            ":" => BondSymbol::Aromatic,
            "/" | "\\" => BondSymbol::Directional,
            _ => BondSymbol::Single,
        }
    }

    fn order(self) -> BondOrder {
        match self {
            BondSymbol::Single | BondSymbol::Directional => BondOrder::Single,
            BondSymbol::Double => BondOrder::Double,
            BondSymbol::Triple => BondOrder::Triple,
            BondSymbol::Aromatic => BondOrder::Aromatic,
        }
    }
}

struct AtomSpec {
    element: String,
    aromatic: bool,
    isotope: Option<u32>,
    explicit_h: Option<u32>,
    charge: i32,
    chiral: bool,
}

struct OpenRing {
    atom: usize,
    bond: Option<BondSymbol>,
    position: usize,
}

struct Builder {
    specs: Vec<AtomSpec>,
    bonds: Vec<Bond>,
    pairs: HashSet<(usize, usize)>,
    warnings: Vec<String>,
}

impl Builder {
    fn add_bond(
        &mut self,
        a: usize,
        b: usize,
        symbol: Option<BondSymbol>,
        position: usize,
    ) -> Result<(), SmilesError> {
        if a == b {
            return Err(SmilesError::Syntax {
                position,
                message: "ring closure bonds an atom to itself".into(),
            });
        }
        let key = (a.min(b), a.max(b));
        if !self.pairs.insert(key) {
            return Err(SmilesError::Syntax {
                position,
                message: format!("duplicate bond between atoms {} and {}", key.0, key.1),
            });
        }
        let order = match symbol {
            Some(s) => {
                if s == BondSymbol::Directional {
                    self.warnings
                        .push(format!("discarded bond stereo at position {position}"));
                }
                s.order()
            }
            None if self.specs[a].aromatic && self.specs[b].aromatic => BondOrder::Aromatic,
            None => BondOrder::Single,
        };
        self.bonds.push(Bond { a, b, order });
        Ok(())
    }
}

/// Parses a SMILES string into a [`MolecularGraph`].
pub fn parse_with(smiles: &str, options: ParseOptions) -> Result<MolecularGraph, SmilesError> {
    let tokens = tokenize(smiles)?;
    let mut builder = Builder {
        specs: Vec::new(),
        bonds: Vec::new(),
        pairs: HashSet::new(),
        warnings: Vec::new(),
    };
    let mut prev: Option<usize> = None;
    let mut pending: Option<(BondSymbol, usize)> = None;
    let mut branches: Vec<(usize, usize)> = Vec::new();
    let mut rings: BTreeMap<u32, OpenRing> = BTreeMap::new();
    let mut last_kind: Option<TokenKind> = None;

    for tok in &tokens {
        match tok.kind {
            TokenKind::Atom | TokenKind::BracketAtom => {
                let spec = if tok.kind == TokenKind::Atom {
                    organic_atom(&tok.text)
                } else {
                    bracket_atom(tok)?
                };
                if spec.chiral {
                    builder
                        .warnings
                        .push(format!("discarded chirality at position {}", tok.position));
                }
                let idx = builder.specs.len();
                builder.specs.push(spec);
                if let Some(p) = prev {
                    let symbol = pending.take().map(|(s, _)| s);
                    builder.add_bond(p, idx, symbol, tok.position)?;
                } else if let Some((_, pos)) = pending {
                    return Err(dangling_bond(pos));
                }
                prev = Some(idx);
            }
            TokenKind::Bond => {
                if pending.is_some() {
                    return Err(SmilesError::Syntax {
                        position: tok.position,
                        message: "consecutive bond symbols".into(),
                    });
                }
                if prev.is_none() {
                    return Err(dangling_bond(tok.position));
                }
                pending = Some((BondSymbol::from_text(&tok.text), tok.position));
            }
            TokenKind::RingClosure => {
                let Some(atom) = prev else {
                    return Err(SmilesError::Syntax {
                        position: tok.position,
                        message: "ring closure before any atom".into(),
                    });
                };
                if matches!(
                    last_kind,
                    Some(TokenKind::BranchOpen | TokenKind::BranchClose | TokenKind::Dot)
                ) {
                    return Err(SmilesError::Syntax {
                        position: tok.position,
                        message: "ring closure must follow an atom or bond".into(),
                    });
                }
                let label: u32 =
                    tok.text
                        .trim_start_matches('%')
                        .parse()
                        .map_err(|_| SmilesError::Syntax {
                            position: tok.position,
                            message: "bad ring closure label".into(),
                        })?;
                let bond = pending.take().map(|(s, _)| s);
                match rings.remove(&label) {
                    Some(open) => {
                        let symbol = match (open.bond, bond) {
                            (Some(x), Some(y)) if x.order() != y.order() => {
                                return Err(SmilesError::Syntax {
                                    position: tok.position,
                                    message: format!("conflicting bond symbols on ring {label}"),
                                })
                            }
                            (Some(x), _) => Some(x),
                            (None, y) => y,
                        };
                        builder.add_bond(open.atom, atom, symbol, tok.position)?;
                    }
                    None => {
                        rings.insert(
                            label,
                            OpenRing {
                                atom,
                                bond,
                                position: tok.position,
                            },
                        );
                    }
                }
            }
            TokenKind::BranchOpen => {
                let Some(atom) = prev else {
                    return Err(SmilesError::UnbalancedBranch {
                        position: tok.position,
                    });
                };
                if let Some((_, pos)) = pending {
                    return Err(dangling_bond(pos));
                }
                branches.push((atom, tok.position));
            }
            TokenKind::BranchClose => {
                if let Some((_, pos)) = pending {
                    return Err(dangling_bond(pos));
                }
                if last_kind == Some(TokenKind::BranchOpen) {
                    return Err(SmilesError::Syntax {
                        position: tok.position,
                        message: "empty branch".into(),
                    });
                }
                match branches.pop() {
                    Some((atom, _)) => prev = Some(atom),
                    None => {
                        return Err(SmilesError::UnbalancedBranch {
                            position: tok.position,
                        })
                    }
                }
            }
            TokenKind::Dot => {
                if let Some((_, pos)) = pending {
                    return Err(dangling_bond(pos));
                }
                if let Some(&(_, position)) = branches.last() {
                    return Err(SmilesError::UnbalancedBranch { position });
                }
                if prev.is_none() {
                    return Err(SmilesError::Syntax {
                        position: tok.position,
                        message: "fragment separator without a preceding atom".into(),
                    });
                }
                prev = None;
            }
        }
        last_kind = Some(tok.kind);
    }

    if let Some((_, pos)) = pending {
        return Err(dangling_bond(pos));
    }
    if let Some(&(_, position)) = branches.last() {
        return Err(SmilesError::UnbalancedBranch { position });
    }
    if let Some((&label, open)) = rings.iter().next() {
        return Err(SmilesError::UnmatchedRingClosure {
            label,
            position: open.position,
        });
    }
    if prev.is_none() {
        return Err(SmilesError::Syntax {
            position: tokens.last().map_or(0, |t| t.position),
            message: "trailing fragment separator".into(),
        });
    }

    finish(builder, smiles.trim(), options)
}

fn dangling_bond(position: usize) -> SmilesError {
    SmilesError::Syntax {
        position,
        message: "bond symbol is not between two atoms".into(),
    }
}

fn organic_atom(text: &str) -> AtomSpec {
    let aromatic = text.chars().next().is_some_and(char::is_lowercase);
    let element = if aromatic {
        text.to_ascii_uppercase()
    } else {
        text.to_string()
    };
    AtomSpec {
        element,
        aromatic,
        isotope: None,
        explicit_h: None,
        charge: 0,
        chiral: false,
    }
}

fn bracket_atom(tok: &Token) -> Result<AtomSpec, SmilesError> {
    let inner: Vec<char> = tok.text[1..tok.text.len() - 1].chars().collect();
    let err = |offset: usize, message: &str| SmilesError::Syntax {
        position: tok.position + 1 + offset,
        message: message.to_string(),
    };
    let mut i = 0;

    let digits = |i: &mut usize| -> Option<u32> {
        let start = *i;
        while *i < inner.len() && inner[*i].is_ascii_digit() {
            *i += 1;
        }
        if *i == start {
            None
        } else {
            inner[start..*i].iter().collect::<String>().parse().ok()
        }
    };

    let isotope = digits(&mut i);

    let (element, aromatic) = match inner.get(i) {
        Some(c) if c.is_ascii_uppercase() => {
            let two: Option<String> = inner
                .get(i + 1)
                .filter(|n| n.is_ascii_lowercase())
                .map(|n| [*c, *n].iter().collect());
            match two {
                Some(sym) if is_element(&sym) => {
                    i += 2;
                    (sym, false)
                }
                _ => {
                    let sym = c.to_string();
                    if !is_element(&sym) {
                        return Err(err(i, "unknown element symbol"));
                    }
                    i += 1;
                    (sym, false)
                }
            }
        }
        Some(c) if c.is_ascii_lowercase() => {
            let two: String = inner[i..(i + 2).min(inner.len())].iter().collect();
            if two == "se" || two == "as" {
                i += 2;
                (capitalize(&two), true)
            } else if matches!(c, 'b' | 'c' | 'n' | 'o' | 'p' | 's') {
                i += 1;
                (c.to_ascii_uppercase().to_string(), true)
            } else {
                return Err(err(i, "unknown aromatic symbol"));
            }
        }
        _ => return Err(err(i, "bracket atom lacks an element symbol")),
    };
    debug_assert!(!aromatic || can_be_aromatic(&element));

    let mut chiral = false;
    if inner.get(i) == Some(&'@') {
        chiral = true;
        while inner.get(i) == Some(&'@') {
            i += 1;
        }
        // Extended classes such as @TH1, @SP2, @OH12.
        if inner.get(i).is_some_and(char::is_ascii_uppercase)
            && inner.get(i + 1).is_some_and(char::is_ascii_uppercase)
            && inner.get(i + 2).is_some_and(char::is_ascii_digit)
        {
            i += 2;
            digits(&mut i);
        }
    }

    let mut explicit_h = 0;
    if inner.get(i) == Some(&'H') {
        i += 1;
        explicit_h = digits(&mut i).unwrap_or(1);
    }

    let mut charge = 0i32;
    if let Some(&sign) = inner.get(i).filter(|c| **c == '+' || **c == '-') {
        let unit = if sign == '+' { 1 } else { -1 };
        i += 1;
        if let Some(n) = digits(&mut i) {
            charge = unit * n as i32;
        } else {
            charge = unit;
            while inner.get(i) == Some(&sign) {
                charge += unit;
                i += 1;
            }
        }
    }

    if inner.get(i) == Some(&':') {
        i += 1;
        if digits(&mut i).is_none() {
            return Err(err(i, "atom class needs digits"));
        }
    }

    if i != inner.len() {
        return Err(err(i, "unexpected character in bracket atom"));
    }

    Ok(AtomSpec {
        element,
        aromatic,
        isotope,
        explicit_h: Some(explicit_h),
        charge,
        chiral,
    })
}

fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_ascii_uppercase().to_string() + c.as_str(),
        None => String::new(),
    }
}

fn finish(
    builder: Builder,
    source: &str,
    options: ParseOptions,
) -> Result<MolecularGraph, SmilesError> {
    let Builder {
        specs,
        bonds,
        mut warnings,
        ..
    } = builder;
    let n = specs.len();
    let mut bond_sum = vec![0u32; n];
    for b in &bonds {
        bond_sum[b.a] += b.order.valence();
        bond_sum[b.b] += b.order.valence();
    }
    let ring = ring_membership(n, &bonds);

    let mut atoms = Vec::with_capacity(n);
    for (index, spec) in specs.into_iter().enumerate() {
        let implicit_h = if spec.explicit_h.is_some() {
            0
        } else {
            match implicit_hydrogens(&spec.element, spec.charge, spec.aromatic, bond_sum[index]) {
                Some(h) => h,
                None if options.strict_valence => {
                    return Err(SmilesError::Valence {
                        atom: index,
                        element: spec.element,
                        bond_sum: bond_sum[index],
                    })
                }
                None => {
                    warnings.push(format!(
                        "atom {index} ({}) exceeds its default valences; implicit H set to 0",
                        spec.element
                    ));
                    0
                }
            }
        };
        atoms.push(Atom {
            index,
            element: spec.element,
            formal_charge: spec.charge,
            aromatic: spec.aromatic,
            explicit_h: spec.explicit_h,
            implicit_h,
            isotope: spec.isotope,
            in_ring: ring[index],
        });
    }

    Ok(MolecularGraph {
        atoms,
        bonds,
        source_smiles: source.to_string(),
        warnings,
    })
}

/// Implicit hydrogen count for an organic-subset atom, or `None` when the
/// bond-order sum exceeds every allowed valence.
///
/// The smallest valence that accommodates the bonds is chosen. Aromatic
/// atoms give up one further hydrogen to the pi system when one is left.
pub(crate) fn implicit_hydrogens(
    element: &str,
    charge: i32,
    aromatic: bool,
    bond_sum: u32,
) -> Option<u32> {
    let valences = charged_valences(element, charge);
    let target = valences.iter().copied().find(|&v| v >= bond_sum)?;
    let mut h = target - bond_sum;
    if aromatic && h > 0 {
        h -= 1;
    }
    Some(h)
}

/// An atom is in a ring iff one of its bonds is not a bridge.
fn ring_membership(n: usize, bonds: &[Bond]) -> Vec<bool> {
    let mut adj: Vec<Vec<(usize, usize)>> = vec![Vec::new(); n];
    for (i, b) in bonds.iter().enumerate() {
        adj[b.a].push((b.b, i));
        adj[b.b].push((b.a, i));
    }
    let mut in_ring = vec![false; n];
    for (skip, bond) in bonds.iter().enumerate() {
        if in_ring[bond.a] && in_ring[bond.b] {
            continue;
        }
        // Is bond.b reachable from bond.a without this bond?
        let mut seen = vec![false; n];
        let mut queue = VecDeque::from([bond.a]);
        seen[bond.a] = true;
        let mut cyclic = false;
        while let Some(u) = queue.pop_front() {
            for &(v, e) in &adj[u] {
                if e == skip || seen[v] {
                    continue;
                }
                if v == bond.b {
                    cyclic = true;
                    break;
                }
                seen[v] = true;
                queue.push_back(v);
            }
            if cyclic {
                break;
            }
        }
        if cyclic {
            in_ring[bond.a] = true;
            in_ring[bond.b] = true;
        }
    }
    in_ring
}

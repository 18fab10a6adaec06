//! Precomputed molecule embeddings keyed by SMILES, stored as EMBTAB v1.
//!
//! ```text
//! #EMBTAB v1 dim=3
//! # optional comments
//! CCO<TAB>0.1 0.2 0.3
//! ```
//!
//! Values are written with 9 significant digits (C `%.9g`).

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use rand_distr::{Distribution, StandardNormal};
use sha2::{Digest, Sha256};

const HEADER_PREFIX: &str = "#EMBTAB v1 dim=";

#[derive(Debug, thiserror::Error)]
pub enum EmbeddingError {
    #[error("io error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: {reason}")]
    Format { line: usize, reason: String },
    #[error("line {line}: expected {expected} values, found {found}")]
    DimMismatch {
        line: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: key {key:?} repeated with a different vector")]
    ConflictingDuplicate { line: usize, key: String },
    #[error("no embedding for {smiles:?}")]
    MissingKey { smiles: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    dim: usize,
    keys: Vec<String>,
    vectors: Vec<Vec<f64>>,
    index: HashMap<String, usize>,
    pub source_tag: String,
}

impl EmbeddingTable {
    pub fn new(dim: usize, source_tag: impl Into<String>) -> Self {
        EmbeddingTable {
            dim,
            keys: Vec::new(),
            vectors: Vec::new(),
            index: HashMap::new(),
            source_tag: source_tag.into(),
        }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.keys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.keys.is_empty()
    }

    /// Keys in insertion order.
    pub fn keys(&self) -> impl Iterator<Item = &str> {
        self.keys.iter().map(String::as_str)
    }

    pub fn contains(&self, smiles: &str) -> bool {
        self.index.contains_key(smiles.trim())
    }

    pub fn lookup(&self, smiles: &str) -> Result<&[f64], EmbeddingError> {
        self.index
            .get(smiles.trim())
            .map(|&i| self.vectors[i].as_slice())
            .ok_or_else(|| EmbeddingError::MissingKey {
                smiles: smiles.trim().to_string(),
            })
    }

    /// Inserts a vector; an identical re-insert is a no-op.
    pub fn insert(&mut self, smiles: &str, vector: Vec<f64>) -> Result<(), EmbeddingError> {
        self.insert_at(smiles, vector, 0)
    }

    fn insert_at(
        &mut self,
        smiles: &str,
        vector: Vec<f64>,
        line: usize,
    ) -> Result<(), EmbeddingError> {
        if vector.len() != self.dim {
            return Err(EmbeddingError::DimMismatch {
                line,
                expected: self.dim,
                found: vector.len(),
            });
        }
        if let Some(bad) = vector.iter().position(|v| !v.is_finite()) {
            return Err(EmbeddingError::Format {
                line,
                reason: format!("value {} is not finite", bad + 1),
            });
        }
        let key = smiles.trim();
        if key.is_empty() || key.starts_with('#') || key.contains('\t') {
            return Err(EmbeddingError::Format {
                line,
                reason: format!("invalid key {key:?}"),
            });
        }
        match self.index.get(key) {
            Some(&i) => {
                let same = self.vectors[i]
                    .iter()
                    .zip(&vector)
                    .all(|(a, b)| a.to_bits() == b.to_bits());
                if same {
                    Ok(())
                } else {
                    Err(EmbeddingError::ConflictingDuplicate {
                        line,
                        key: key.to_string(),
                    })
                }
            }
            None => {
                self.index.insert(key.to_string(), self.keys.len());
                self.keys.push(key.to_string());
                self.vectors.push(vector);
                Ok(())
            }
        }
    }

    pub fn parse_str(text: &str, source_tag: &str) -> Result<Self, EmbeddingError> {
        let mut lines = text.split('\n').enumerate();
        let (_, header) = lines.next().ok_or_else(|| EmbeddingError::Format {
            line: 1,
            reason: "missing header".into(),
        })?;
        let dim: usize = header
            .strip_suffix('\r')
            .unwrap_or(header)
            .strip_prefix(HEADER_PREFIX)
            .and_then(|d| d.trim().parse().ok())
            .filter(|&d| d > 0)
            .ok_or_else(|| EmbeddingError::Format {
                line: 1,
                reason: format!("expected header `{HEADER_PREFIX}<d>`"),
            })?;
        let mut table = EmbeddingTable::new(dim, source_tag);
        for (i, raw) in lines {
            let line = i + 1;
            let raw = raw.strip_suffix('\r').unwrap_or(raw);
            if raw.trim().is_empty() || raw.starts_with('#') {
                continue;
            }
            let (key, values) = raw.split_once('\t').ok_or_else(|| EmbeddingError::Format {
                line,
                reason: "missing tab between key and values".into(),
            })?;
            let vector = values
                .split_whitespace()
                .map(|v| {
                    v.parse::<f64>().map_err(|_| EmbeddingError::Format {
                        line,
                        reason: format!("unparseable value {v:?}"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            table.insert_at(key, vector, line)?;
        }
        Ok(table)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, EmbeddingError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path)?;
        Self::parse_str(&text, &path.display().to_string())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> io::Result<()> {
        writeln!(out, "{HEADER_PREFIX}{}", self.dim)?;
        let mut line = String::new();
        for (key, vector) in self.keys.iter().zip(&self.vectors) {
            line.clear();
            line.push_str(key);
            line.push('\t');
            for (i, v) in vector.iter().enumerate() {
                if i > 0 {
                    line.push(' ');
                }
                line.push_str(&format_sig9(*v));
            }
            line.push('\n');
            out.write_all(line.as_bytes())?;
        }
        Ok(())
    }

    pub fn save(&self, path: impl AsRef<Path>) -> io::Result<()> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        fs::write(path, buf)
    }
}

/// Formats like C's `%.9g`.
pub fn format_sig9(x: f64) -> String {
    const PRECISION: i32 = 9;
    if x == 0.0 {
        return if x.is_sign_negative() { "-0" } else { "0" }.to_string();
    }
    let sci = format!("{:.*e}", (PRECISION - 1) as usize, x);
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..PRECISION).contains(&exp) {
        let decimals = (PRECISION - 1 - exp) as usize;
        trim_fraction(format!("{x:.decimals$}"))
    } else {
        let mantissa = trim_fraction(mantissa.to_string());
        let sign = if exp < 0 { '-' } else { '+' };
        format!("{mantissa}e{sign}{:02}", exp.abs())
    }
}

fn trim_fraction(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

/// Deterministic unit-norm stand-in for a language-model embedding.
///
/// The SMILES (whitespace-stripped) and seed are hashed into a ChaCha20 seed
/// and `dim` standard normal draws are normalized to length one.
pub fn pseudo_embed(smiles: &str, seed: u64, dim: usize) -> Vec<f64> {
    assert!(dim >= 1, "embedding dim must be positive");
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update((dim as u64).to_le_bytes());
    hasher.update(smiles.trim().as_bytes());
    let digest = hasher.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    let mut rng = ChaCha20Rng::from_seed(key);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Table of [`pseudo_embed`] vectors for each distinct key.
pub fn pseudo_table<'a, I>(keys: I, seed: u64, dim: usize) -> EmbeddingTable
where
    I: IntoIterator<Item = &'a str>,
{
    let mut table = EmbeddingTable::new(dim, format!("pseudo seed={seed} dim={dim}"));
    for key in keys {
        if !table.contains(key) {
            table
                .insert(key, pseudo_embed(key, seed, dim))
                .expect("pseudo embeddings are finite and sized");
        }
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn load_minimal() {
        let t = EmbeddingTable::parse_str("#EMBTAB v1 dim=3\nCCO\t0.1 0.2 0.3\n", "mem").unwrap();
        assert_eq!(t.dim(), 3);
        assert_eq!(t.len(), 1);
        assert_eq!(t.lookup("CCO").unwrap(), &[0.1, 0.2, 0.3]);
    }

    #[test]
    fn dim_mismatch_reports_line() {
        let err =
            EmbeddingTable::parse_str("#EMBTAB v1 dim=3\n# c\nCCO\t0.1 0.2\n", "mem").unwrap_err();
        assert!(matches!(
            err,
            EmbeddingError::DimMismatch {
                line: 3,
                expected: 3,
                found: 2
            }
        ));
    }

    #[test]
    fn duplicates() {
        let same = "#EMBTAB v1 dim=2\nCCO\t1 2\nCCO\t1.0 2.0\n";
        assert_eq!(EmbeddingTable::parse_str(same, "m").unwrap().len(), 1);
        let diff = "#EMBTAB v1 dim=2\nCCO\t1 2\nCCO\t1 3\n";
        assert!(matches!(
            EmbeddingTable::parse_str(diff, "m"),
            Err(EmbeddingError::ConflictingDuplicate { line: 3, .. })
        ));
    }

    #[test]
    fn malformed_inputs() {
        for bad in [
            "",
            "#EMBTAB v2 dim=3\n",
            "#EMBTAB v1 dim=0\n",
            "#EMBTAB v1 dim=1\nCCO 1\n",
            "#EMBTAB v1 dim=1\nCCO\tx\n",
            "#EMBTAB v1 dim=1\nCCO\tNaN\n",
            "#EMBTAB v1 dim=1\n \t1\n",
        ] {
            assert!(
                matches!(
                    EmbeddingTable::parse_str(bad, "m"),
                    Err(EmbeddingError::Format { .. })
                ),
                "{bad:?}"
            );
        }
    }

    #[test]
    fn lookup_semantics() {
        let t = EmbeddingTable::parse_str("#EMBTAB v1 dim=1\n CCO \t0.5\n", "m").unwrap();
        assert_eq!(t.lookup("CCO").unwrap(), &[0.5]);
        assert_eq!(t.lookup("  CCO\n").unwrap(), &[0.5]);
        assert!(matches!(
            t.lookup("CCN"),
            Err(EmbeddingError::MissingKey { smiles }) if smiles == "CCN"
        ));
    }

    #[test]
    fn sig9_matches_printf() {
        // Reference strings from Python's "%.9g".
        let cases = [
            (0.1, "0.1"),
            (1.0, "1"),
            (-0.0123456789012, "-0.0123456789"),
            (123456789.0, "123456789"),
            (1234567890.0, "1.23456789e+09"),
            (0.0001, "0.0001"),
            (0.00001234, "1.234e-05"),
            (1e-300, "1e-300"),
            (0.999999999999, "1"),
            (2.5e-5, "2.5e-05"),
            (99999.99999, "100000"),
        ];
        for (x, want) in cases {
            assert_eq!(format_sig9(x), want, "{x}");
        }
    }

    #[test]
    fn pseudo_embed_contract() {
        let a = pseudo_embed("CCO", 1, 768);
        let b = pseudo_embed("CCO", 1, 768);
        assert_eq!(a, b);
        let norm: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!((norm - 1.0).abs() < 1e-12);
        let c = pseudo_embed("CCN", 1, 768);
        assert_ne!(a, c);
        assert_ne!(a, pseudo_embed("CCO", 2, 768));
        assert_eq!(pseudo_embed(" CCO ", 1, 768), a);
    }

    proptest! {
        #[test]
        fn save_load_roundtrip(
            rows in proptest::collection::vec(
                ("[A-Za-z0-9()=][A-Za-z0-9()=#]{0,11}", proptest::collection::vec(-1e6f64..1e6, 4)),
                0..8,
            )
        ) {
            let mut text = String::from("#EMBTAB v1 dim=4\n");
            let mut seen = std::collections::HashSet::new();
            for (k, v) in &rows {
                if !seen.insert(k.clone()) {
                    continue;
                }
                let vals: Vec<String> = v.iter().map(|x| format_sig9(*x)).collect();
                text.push_str(&format!("{k}\t{}\n", vals.join(" ")));
            }
            let table = EmbeddingTable::parse_str(&text, "p").unwrap();
            let mut out = Vec::new();
            table.write_to(&mut out).unwrap();
            prop_assert_eq!(String::from_utf8(out).unwrap(), text);
        }

        #[test]
        fn pseudo_embed_unit_norm(s in "[CNOc1()=]{1,16}", seed in any::<u64>(), dim in 1usize..64) {
            let v = pseudo_embed(&s, seed, dim);
            prop_assert_eq!(v.len(), dim);
            let norm: f64 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
            prop_assert!((norm - 1.0).abs() < 1e-12);
        }
    }
}

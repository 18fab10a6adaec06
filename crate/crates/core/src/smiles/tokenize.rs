use super::SmilesError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TokenKind {
    Atom,
    BracketAtom,
    Bond,
    RingClosure,
    BranchOpen,
    BranchClose,
    Dot,
}

/// A lexical unit of a SMILES string.
///
/// `position` is the character offset of the token within the
/// whitespace-stripped input.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    pub text: String,
    pub position: usize,
}

/// Splits a SMILES string into tokens.
///
/// Surrounding whitespace is stripped first; the concatenated token texts
/// reproduce the stripped string exactly.
pub fn tokenize(smiles: &str) -> Result<Vec<Token>, SmilesError> {
    let src = smiles.trim();
    if src.is_empty() {
        return Err(SmilesError::Empty);
    }
    let chars: Vec<char> = src.chars().collect();
    let mut tokens = Vec::new();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        let start = i;
        let kind = match c {
            'B' | 'C' => {
                // Br and Cl are the only two-letter organic-subset symbols.
                if (c == 'B' && chars.get(i + 1) == Some(&'r'))
                    || (c == 'C' && chars.get(i + 1) == Some(&'l'))
                {
                    i += 2;
                } else {
                    i += 1;
                }
                TokenKind::Atom
            }
            'N' | 'O' | 'P' | 'S' | 'F' | 'I' | 'b' | 'c' | 'n' | 'o' | 'p' | 's' => {
                i += 1;
                TokenKind::Atom
            }
            '[' => {
                let close = chars[i + 1..]
                    .iter()
                    .position(|&ch| ch == ']' || ch == '[')
                    .map(|off| i + 1 + off);
                match close {
                    Some(j) if chars[j] == ']' => {
                        i = j + 1;
                        TokenKind::BracketAtom
                    }
                    _ => return Err(SmilesError::UnterminatedBracket { position: start }),
                }
            }
            '-' | '=' | '#' | ':' | '/' | '\\' => {
                i += 1;
                TokenKind::Bond
            }
            '0'..='9' => {
                i += 1;
                TokenKind::RingClosure
            }
            '%' => {
                let two_digits = chars.get(i + 1).is_some_and(char::is_ascii_digit)
                    && chars.get(i + 2).is_some_and(char::is_ascii_digit);
                if !two_digits {
                    return Err(SmilesError::Syntax {
                        position: start,
                        message: "'%' must be followed by exactly two digits".into(),
                    });
                }
                i += 3;
                TokenKind::RingClosure
            }
            '(' => {
                i += 1;
                TokenKind::BranchOpen
            }
            ')' => {
                i += 1;
                TokenKind::BranchClose
            }
            '.' => {
                i += 1;
                TokenKind::Dot
            }
            ']' => {
                return Err(SmilesError::Syntax {
                    position: start,
                    message: "']' without matching '['".into(),
                })
            }
            other => {
                return Err(SmilesError::Syntax {
                    position: start,
                    message: format!("unexpected character {other:?}"),
                })
            }
        };
        tokens.push(Token {
            kind,
            text: chars[start..i].iter().collect(),
            position: start,
        });
    }
    Ok(tokens)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn kinds_and_text(s: &str) -> Vec<(TokenKind, String)> {
        tokenize(s)
            .unwrap()
            .into_iter()
            .map(|t| (t.kind, t.text))
            .collect()
    }

    #[test]
    fn ring_bond_sequence() {
        use TokenKind::*;
        let got = kinds_and_text("C1=CC");
        let want = vec![
            (Atom, "C"),
            (RingClosure, "1"),
            (Bond, "="),
            (Atom, "C"),
            (Atom, "C"),
        ];
        assert_eq!(
            got,
            want.into_iter()
                .map(|(k, t)| (k, t.to_string()))
                .collect::<Vec<_>>()
        );
    }

    #[test]
    fn bracket_atom_is_one_token() {
        assert_eq!(
            kinds_and_text("[NH4+]"),
            vec![(TokenKind::BracketAtom, "[NH4+]".to_string())]
        );
    }

    #[test]
    fn unknown_character() {
        match tokenize("C?C") {
            Err(SmilesError::Syntax { position, .. }) => assert_eq!(position, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unterminated_bracket() {
        assert!(matches!(
            tokenize("C[NH4+"),
            Err(SmilesError::UnterminatedBracket { position: 1 })
        ));
        assert!(matches!(
            tokenize("[C[N]"),
            Err(SmilesError::UnterminatedBracket { position: 0 })
        ));
    }

    #[test]
    fn two_letter_and_percent() {
        use TokenKind::*;
        assert_eq!(
            kinds_and_text("ClC%12CBr"),
            vec![
                (Atom, "Cl".to_string()),
                (Atom, "C".to_string()),
                (RingClosure, "%12".to_string()),
                (Atom, "C".to_string()),
                (Atom, "Br".to_string()),
            ]
        );
        assert!(tokenize("C%1").is_err());
    }

    #[test]
    fn whitespace_and_empty() {
        assert!(matches!(tokenize("   "), Err(SmilesError::Empty)));
        let t = tokenize("  CO\n").unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].position, 0);
    }

    proptest! {
        #[test]
        fn tokens_cover_input(s in "[CNOcnos()=#1-3\\[\\]H+.%]{1,24}") {
            if let Ok(tokens) = tokenize(&s) {
                let joined: String = tokens.iter().map(|t| t.text.as_str()).collect();
                prop_assert_eq!(joined, s.trim());
                let total: usize = tokens.iter().map(|t| t.text.chars().count()).sum();
                prop_assert_eq!(total, s.trim().chars().count());
                for t in &tokens {
                    if t.kind == TokenKind::RingClosure {
                        let ok = (t.text.len() == 1 && t.text.chars().all(|c| c.is_ascii_digit()))
                            || (t.text.len() == 3 && t.text.starts_with('%'));
                        prop_assert!(ok);
                    }
                }
            }
        }
    }
}

//! Periodic table lookups and default valence rules.

const SYMBOLS: [&str; 118] = [
    "H", "He", "Li", "Be", "B", "C", "N", "O", "F", "Ne", "Na", "Mg", "Al", "Si", "P", "S", "Cl",
    "Ar", "K", "Ca", "Sc", "Ti", "V", "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As",
    "Se", "Br", "Kr", "Rb", "Sr", "Y", "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In",
    "Sn", "Sb", "Te", "I", "Xe", "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb",
    "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf", "Ta", "W", "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl",
    "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th", "Pa", "U", "Np", "Pu", "Am", "Cm", "Bk",
    "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs", "Mt", "Ds", "Rg", "Cn", "Nh",
    "Fl", "Mc", "Lv", "Ts", "Og",
];

/// Elements that may carry the aromatic (lowercase) form.
pub const AROMATIC_ELEMENTS: [&str; 8] = ["B", "C", "N", "O", "P", "S", "Se", "As"];

pub fn is_element(symbol: &str) -> bool {
    SYMBOLS.contains(&symbol)
}

pub fn can_be_aromatic(symbol: &str) -> bool {
    AROMATIC_ELEMENTS.contains(&symbol)
}

/// Uncharged default valences of the organic subset, ascending.
pub fn default_valences(element: &str) -> &'static [u32] {
    match element {
        "B" => &[3],
        "C" => &[4],
        "N" => &[3],
        "O" => &[2],
        "P" => &[3, 5],
        "S" => &[2, 4, 6],
        "F" | "Cl" | "Br" | "I" => &[1],
        _ => &[],
    }
}

/// Default valences shifted for a formal charge.
///
/// Cations of the nitrogen family (N, P) gain `charge` valence; any anion
/// loses `|charge|`. Other cations keep their neutral valences. Valences
/// that would drop below zero are discarded.
pub fn charged_valences(element: &str, charge: i32) -> Vec<u32> {
    let base = default_valences(element);
    let shift: i64 = if charge > 0 && matches!(element, "N" | "P") {
        i64::from(charge)
    } else if charge < 0 {
        -i64::from(charge.unsigned_abs())
    } else {
        0
    };
    base.iter()
        .map(|&v| i64::from(v) + shift)
        .filter(|&v| v >= 0)
        .map(|v| v as u32)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn symbols_are_unique_and_valid() {
        let mut seen = std::collections::HashSet::new();
        for s in SYMBOLS {
            assert!(seen.insert(s), "duplicate {s}");
        }
        assert!(is_element("Cl"));
        assert!(!is_element("Xx"));
        assert!(!is_element("CL"));
    }

    #[test]
    fn charge_shifts() {
        assert_eq!(charged_valences("N", 1), vec![4]);
        assert_eq!(charged_valences("O", -1), vec![1]);
        assert_eq!(charged_valences("S", -1), vec![1, 3, 5]);
        assert_eq!(charged_valences("C", 1), vec![4]);
        assert_eq!(charged_valences("F", -2), Vec::<u32>::new());
        assert!(charged_valences("Fe", 2).is_empty());
    }
}

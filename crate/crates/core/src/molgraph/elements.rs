//! Element symbols and the fixed 72-entry element vocabulary.

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

/// Atomic numbers that have an embedding row: H through Ba plus the heavier
/// elements that show up in patent reaction data.
pub const VOCABULARY: [u8; 72] = [
    1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15, 16, 17, 18, 19, 20, 21, 22, 23, 24, 25, 26,
    27, 28, 29, 30, 31, 32, 33, 34, 35, 36, 37, 38, 39, 40, 41, 42, 43, 44, 45, 46, 47, 48, 49, 50,
    51, 52, 53, 54, 55, 56, 57, 58, 62, 64, 70, 73, 74, 75, 76, 77, 78, 79, 80, 81, 82, 83,
];

pub const VOCABULARY_SIZE: usize = VOCABULARY.len();

pub fn symbol(atomic_number: u8) -> Option<&'static str> {
    SYMBOLS
        .get((atomic_number as usize).checked_sub(1)?)
        .copied()
}

pub fn atomic_number(symbol: &str) -> Option<u8> {
    SYMBOLS
        .iter()
        .position(|s| *s == symbol)
        .map(|i| (i + 1) as u8)
}

/// Row of `atomic_number` in the embedding table.
pub fn vocab_index(atomic_number: u8) -> Option<usize> {
    VOCABULARY.iter().position(|&z| z == atomic_number)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn vocabulary_is_sorted_and_unique() {
        assert!(VOCABULARY.windows(2).all(|w| w[0] < w[1]));
        assert_eq!(VOCABULARY_SIZE, 72);
    }

    #[test]
    fn symbol_lookup() {
        assert_eq!(atomic_number("Cl"), Some(17));
        assert_eq!(symbol(6), Some("C"));
        assert_eq!(symbol(0), None);
        assert_eq!(vocab_index(6), Some(5));
        assert_eq!(vocab_index(92), None);
    }
}

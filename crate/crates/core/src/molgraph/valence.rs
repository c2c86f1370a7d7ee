use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::elements;
use super::graph::MolGraph;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ValenceViolation {
    pub atom: usize,
    /// Bond-order sum plus explicit hydrogens, in half units.
    pub used_halves: u32,
    pub max_valence: u32,
}

/// Maximum valence per element symbol. Elements absent from the table are not checked.
///
/// Charge shifts the limit: groups 15-17 gain one per positive charge
/// (ammonium, oxonium) and lose one per negative charge; carbon loses one per
/// unit of either sign; boron gains one per negative charge.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ValenceTable {
    pub max_valence: BTreeMap<String, u32>,
}

impl Default for ValenceTable {
    fn default() -> Self {
        let entries = [
            ("H", 1),
            ("B", 3),
            ("C", 4),
            ("N", 3),
            ("O", 2),
            ("F", 1),
            ("Si", 4),
            ("P", 5),
            ("S", 6),
            ("Cl", 1),
            ("Se", 6),
            ("Br", 1),
            ("I", 1),
        ];
        Self {
            max_valence: entries.iter().map(|&(s, v)| (s.to_string(), v)).collect(),
        }
    }
}

impl ValenceTable {
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        toml::from_str(text)
    }

    /// Allowed valence for an element at a given charge, if the element is tabulated.
    pub fn limit(&self, element: u8, charge: i8) -> Option<u32> {
        let base = *self.max_valence.get(elements::symbol(element)?)? as i32;
        let c = charge as i32;
        let adjusted = match element {
            6 | 14 => base - c.abs(),
            5 => base - c,
            7 | 8 | 9 | 15 | 16 | 17 | 34 | 35 | 53 => base + c,
            _ => base,
        };
        Some(adjusted.max(0) as u32)
    }

    pub fn violations(&self, g: &MolGraph) -> Vec<ValenceViolation> {
        let mut out = Vec::new();
        for (i, a) in g.atoms().iter().enumerate() {
            let Some(limit) = self.limit(a.element, a.charge) else {
                continue;
            };
            let used: u32 = g.neighbors(i).map(|(_, b)| b.order_halves()).sum::<u32>()
                + 2 * a.explicit_h_count as u32;
            if used > 2 * limit {
                out.push(ValenceViolation {
                    atom: i,
                    used_halves: used,
                    max_valence: limit,
                });
            }
        }
        out
    }
}

/// Valence violations under the default table.
pub fn validate_valence(g: &MolGraph) -> Vec<ValenceViolation> {
    ValenceTable::default().violations(g)
}

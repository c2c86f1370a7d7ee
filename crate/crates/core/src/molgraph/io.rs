//! Reaction file formats.
//!
//! Format A is one `reactants>reagents>products` SMILES line per reaction.
//! Format B is JSON lines:
//!
//! ```text
//! {"id": "r1",
//!  "input":   {"atoms": [{"element": "C", "charge": 0, "hs": 3, "map": 1, "reagent": false}, ...],
//!              "bonds": [[0, 1, "SINGLE"], ...]},
//!  "product": {"atoms": [...], "bonds": [...]}}
//! ```
//!
//! `charge`, `hs`, `map` and `reagent` may be omitted. Gold triples are
//! derived from the atom maps on load.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::edit::{extract_triples, ReactionTriple};
use super::elements::{atomic_number, symbol, vocab_index};
use super::graph::{Atom, BondType, MolGraph};
use super::smiles::{parse_smiles, write_smiles, SmilesError};
use super::{EditError, GraphError};

#[derive(Clone, Debug, PartialEq)]
pub struct ReactionRecord {
    pub id: String,
    /// Reactants and reagents; reagent atoms are flagged.
    pub input: MolGraph,
    pub product: MolGraph,
    pub gold: BTreeSet<ReactionTriple>,
}

#[derive(Debug, Error)]
pub enum FormatError {
    #[error("line {line}: {source}")]
    Smiles { line: usize, source: SmilesError },
    #[error("line {line}: expected `reactants>reagents>products`")]
    Fields { line: usize },
    #[error("line {line}: malformed JSON record: {message}")]
    Json { line: usize, message: String },
    #[error("line {line}: unknown element `{symbol}`")]
    UnknownElement { line: usize, symbol: String },
    #[error("line {line}: {source}")]
    Graph { line: usize, source: GraphError },
    #[error("line {line}: {source}")]
    Edit { line: usize, source: EditError },
}

/// Why a syntactically valid record was left out.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SkippedRecord {
    pub line: usize,
    pub id: String,
    pub reason: String,
}

impl ReactionRecord {
    /// Derives gold triples. Returns `Ok(None)` when a gold triple touches a
    /// reagent atom.
    pub fn new(id: String, input: MolGraph, product: MolGraph) -> Result<Option<Self>, EditError> {
        let gold = extract_triples(&input, &product)?;
        let touches_reagent = gold
            .iter()
            .any(|t| input.atom(t.u).is_reagent || input.atom(t.v).is_reagent);
        if touches_reagent {
            return Ok(None);
        }
        Ok(Some(Self {
            id,
            input,
            product,
            gold,
        }))
    }

    pub fn to_json(&self) -> RecordJson {
        RecordJson {
            id: self.id.clone(),
            input: GraphJson::from_graph(&self.input),
            product: GraphJson::from_graph(&self.product),
        }
    }
}

fn is_zero_i8(x: &i8) -> bool {
    *x == 0
}

fn is_zero_u8(x: &u8) -> bool {
    *x == 0
}

fn is_false(x: &bool) -> bool {
    !*x
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AtomJson {
    pub element: String,
    #[serde(default, skip_serializing_if = "is_zero_i8")]
    pub charge: i8,
    #[serde(default, skip_serializing_if = "is_zero_u8")]
    pub hs: u8,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub map: Option<u32>,
    #[serde(default, skip_serializing_if = "is_false")]
    pub reagent: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraphJson {
    pub atoms: Vec<AtomJson>,
    pub bonds: Vec<(usize, usize, BondType)>,
}

impl GraphJson {
    pub fn from_graph(g: &MolGraph) -> Self {
        Self {
            atoms: g
                .atoms()
                .iter()
                .map(|a| AtomJson {
                    element: symbol(a.element).unwrap_or("?").to_string(),
                    charge: a.charge,
                    hs: a.explicit_h_count,
                    map: a.map_number,
                    reagent: a.is_reagent,
                })
                .collect(),
            bonds: g.bonds(),
        }
    }

    /// Builds the graph; errors carry the given line number.
    pub fn to_graph(&self, line: usize) -> Result<MolGraph, FormatError> {
        let mut atoms = Vec::with_capacity(self.atoms.len());
        for a in &self.atoms {
            let z = atomic_number(&a.element)
                .filter(|&z| vocab_index(z).is_some())
                .ok_or_else(|| FormatError::UnknownElement {
                    line,
                    symbol: a.element.clone(),
                })?;
            let mut atom = Atom::new(z)
                .with_charge(a.charge)
                .with_hs(a.hs)
                .reagent(a.reagent);
            if let Some(m) = a.map {
                atom = atom.with_map(m);
            }
            atoms.push(atom);
        }
        MolGraph::from_parts(atoms, &self.bonds)
            .map_err(|source| FormatError::Graph { line, source })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RecordJson {
    pub id: String,
    pub input: GraphJson,
    pub product: GraphJson,
}

/// Parses one format A line. `Ok(None)` means the record was skipped because
/// its gold edits touch a reagent.
pub fn parse_format_a_line(
    text: &str,
    line: usize,
    id: String,
) -> Result<Option<ReactionRecord>, FormatError> {
    let fields: Vec<&str> = text.trim().split('>').collect();
    if fields.len() != 3 {
        return Err(FormatError::Fields { line });
    }
    let parse = |s: &str| -> Result<MolGraph, FormatError> {
        if s.trim().is_empty() {
            return Ok(MolGraph::new());
        }
        parse_smiles(s.trim()).map_err(|source| FormatError::Smiles { line, source })
    };
    let reactants = parse(fields[0])?;
    let reagents = parse(fields[1])?.with_reagent_flag(true);
    let product = parse(fields[2])?;
    let input = reactants.union(&reagents);
    ReactionRecord::new(id, input, product).map_err(|source| FormatError::Edit { line, source })
}

/// Reads format A text. Blank lines and lines starting with `#` are ignored.
pub fn read_format_a(text: &str) -> Result<(Vec<ReactionRecord>, Vec<SkippedRecord>), FormatError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let reaction = trimmed.split_whitespace().next().unwrap_or("");
        let id = format!("line{line}");
        match parse_format_a_line(reaction, line, id.clone())? {
            Some(r) => records.push(r),
            None => skipped.push(reagent_skip(line, id)),
        }
    }
    Ok((records, skipped))
}

fn reagent_skip(line: usize, id: String) -> SkippedRecord {
    SkippedRecord {
        line,
        id,
        reason: "gold edit touches a reagent atom".to_string(),
    }
}

/// Reads format B text. Blank lines are ignored.
pub fn read_format_b(text: &str) -> Result<(Vec<ReactionRecord>, Vec<SkippedRecord>), FormatError> {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for (k, raw) in text.lines().enumerate() {
        let line = k + 1;
        if raw.trim().is_empty() {
            continue;
        }
        let rec: RecordJson = serde_json::from_str(raw).map_err(|e| FormatError::Json {
            line,
            message: e.to_string(),
        })?;
        let input = rec.input.to_graph(line)?;
        let product = rec.product.to_graph(line)?;
        match ReactionRecord::new(rec.id.clone(), input, product)
            .map_err(|source| FormatError::Edit { line, source })?
        {
            Some(r) => records.push(r),
            None => skipped.push(reagent_skip(line, rec.id)),
        }
    }
    Ok((records, skipped))
}

/// One JSON object per line, each terminated by a newline.
pub fn write_format_b(records: &[ReactionRecord]) -> String {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(&r.to_json()).expect("record serializes"));
        out.push('\n');
    }
    out
}

/// Format A line for a record (reagents in the middle field).
pub fn write_format_a_line(r: &ReactionRecord) -> String {
    let reactant_idx: Vec<usize> = (0..r.input.len())
        .filter(|&i| !r.input.atom(i).is_reagent)
        .collect();
    let reagent_idx: Vec<usize> = (0..r.input.len())
        .filter(|&i| r.input.atom(i).is_reagent)
        .collect();
    format!(
        "{}>{}>{}",
        write_smiles(&r.input.subgraph(&reactant_idx)),
        write_smiles(&r.input.subgraph(&reagent_idx).with_reagent_flag(false)),
        write_smiles(&r.product)
    )
}

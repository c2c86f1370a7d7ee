//! Molecular graphs: data model, SMILES, edits, hashing and valence checks.

mod edit;
mod elements;
mod features;
mod graph;
mod hash;
mod io;
mod smiles;
mod valence;

pub use edit::{apply_all, apply_triple, extract_triples, ReactionTriple};
pub use elements::{atomic_number, symbol, vocab_index, VOCABULARY, VOCABULARY_SIZE};
pub use features::{atom_attributes, attribute_matrix, ATTRIBUTE_COUNT};
pub use graph::{Atom, BondType, MolGraph};
pub use hash::{canonical_hash, GraphDigest};
pub use io::{
    parse_format_a_line, read_format_a, read_format_b, write_format_a_line, write_format_b,
    AtomJson, FormatError, GraphJson, ReactionRecord, RecordJson, SkippedRecord,
};
pub use smiles::{parse_smiles, write_smiles, SmilesError, SmilesErrorKind};
pub use valence::{validate_valence, ValenceTable, ValenceViolation};

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum GraphError {
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
    #[error("self-loop on atom {0}")]
    SelfLoop(usize),
    #[error("NULL bond between {0} and {1} cannot be stored")]
    NullBond(usize, usize),
    #[error("duplicate bond between {0} and {1}")]
    DuplicateBond(usize, usize),
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum EditError {
    #[error("edit endpoints are the same atom {0}")]
    SameAtom(usize),
    #[error("atom index {0} out of range")]
    AtomOutOfRange(usize),
    #[error("bond ({u}, {v}) is already {bond}")]
    NoOp { u: usize, v: usize, bond: BondType },
    #[error("duplicate map number {map} in {side}")]
    DuplicateMap { side: &'static str, map: u32 },
    #[error("product atom {0} has no map number")]
    UnmappedProductAtom(usize),
    #[error("product map number {0} does not occur in the input")]
    MissingInInput(u32),
}

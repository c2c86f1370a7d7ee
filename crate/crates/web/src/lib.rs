//! WebAssembly bindings for the static demo page in `www/`.
//!
//! Every export takes plain strings and returns a JSON string, so the page
//! needs no generated type glue beyond the wasm-bindgen loader.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use wasm_bindgen::prelude::wasm_bindgen;

use gtpn_core::molgraph::{
    canonical_hash, extract_triples, parse_format_a_line, parse_smiles, symbol, validate_valence,
    write_format_a_line, write_smiles, MolGraph,
};
use gtpn_core::harness::{toy_record, ToySpec};

#[derive(Serialize)]
struct AtomView {
    index: usize,
    element: String,
    charge: i8,
    hs: u8,
    map: Option<u32>,
    degree: u8,
    reagent: bool,
}

#[derive(Serialize)]
struct GraphView {
    smiles: String,
    atoms: Vec<AtomView>,
    bonds: Vec<(usize, usize, String)>,
    components: usize,
    hash: String,
    valence_violations: Vec<usize>,
}

#[derive(Serialize)]
struct EditView {
    u: usize,
    v: usize,
    bond: String,
}

#[derive(Serialize)]
#[serde(untagged)]
enum Reply<T: Serialize> {
    Ok(T),
    Err { error: String },
}

fn reply<T: Serialize>(r: Result<T, String>) -> String {
    let r = match r {
        Ok(v) => Reply::Ok(v),
        Err(error) => Reply::Err { error },
    };
    serde_json::to_string(&r).expect("reply serializes")
}

fn view(g: &MolGraph) -> GraphView {
    GraphView {
        smiles: write_smiles(g),
        atoms: g
            .atoms()
            .iter()
            .enumerate()
            .map(|(i, a)| AtomView {
                index: i,
                element: symbol(a.element).unwrap_or("?").to_string(),
                charge: a.charge,
                hs: a.explicit_h_count,
                map: a.map_number,
                degree: a.degree,
                reagent: a.is_reagent,
            })
            .collect(),
        bonds: g.bonds().into_iter().map(|(i, j, b)| (i, j, b.name().to_string())).collect(),
        components: g.components().len(),
        hash: canonical_hash(g, false).to_string(),
        valence_violations: validate_valence(g).iter().map(|v| v.atom).collect(),
    }
}

/// Atoms, bonds, canonical hash and valence problems of a SMILES string.
#[wasm_bindgen]
pub fn inspect(smiles: &str) -> String {
    reply(parse_smiles(smiles.trim()).map(|g| view(&g)).map_err(|e| e.to_string()))
}

#[derive(Serialize)]
struct ReactionView {
    input: GraphView,
    product: GraphView,
    edits: Vec<EditView>,
}

fn reaction_view(input: &MolGraph, product: &MolGraph) -> Result<ReactionView, String> {
    let edits = extract_triples(input, product).map_err(|e| e.to_string())?;
    Ok(ReactionView {
        input: view(input),
        product: view(product),
        edits: edits
            .iter()
            .map(|t| EditView {
                u: t.u,
                v: t.v,
                bond: t.new_bond.name().to_string(),
            })
            .collect(),
    })
}

/// Bond edits turning the reactants of a mapped reaction SMILES
/// (`reactants>reagents>products`) into its products.
#[wasm_bindgen]
pub fn reaction_edits(reaction: &str) -> String {
    let r = parse_format_a_line(reaction.trim(), 1, "input".into())
        .map_err(|e| e.to_string())
        .and_then(|rec| rec.ok_or_else(|| "an edit touches a reagent atom".to_string()))
        .and_then(|rec| reaction_view(&rec.input, &rec.product));
    reply(r)
}

#[derive(Serialize)]
struct ToyView {
    reaction: String,
    #[serde(flatten)]
    detail: ReactionView,
}

/// One synthetic reaction drawn from `seed`.
#[wasm_bindgen]
pub fn toy_reaction(seed: u32, nodes_min: u32, nodes_max: u32) -> String {
    let spec = ToySpec {
        nodes_min: nodes_min as usize,
        nodes_max: nodes_max as usize,
        ..ToySpec::default()
    };
    let r = spec
        .check()
        .map_err(|e| e.to_string())
        .and_then(|_| {
            let mut rng = ChaCha8Rng::seed_from_u64(u64::from(seed));
            toy_record(&spec, &mut rng, format!("toy-{seed}")).map_err(|e| e.to_string())
        })
        .and_then(|rec| {
            Ok(ToyView {
                reaction: write_format_a_line(&rec),
                detail: reaction_view(&rec.input, &rec.product)?,
            })
        });
    reply(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn inspect_reports_atoms_and_errors() {
        let v: serde_json::Value = serde_json::from_str(&inspect("[CH3:1][OH:2]")).unwrap();
        assert_eq!(v["atoms"].as_array().unwrap().len(), 2);
        assert_eq!(v["bonds"][0][2], "SINGLE");
        let e: serde_json::Value = serde_json::from_str(&inspect("C((")).unwrap();
        assert!(e["error"].is_string());
    }

    #[test]
    fn reaction_edits_lists_triples() {
        let v: serde_json::Value =
            serde_json::from_str(&reaction_edits("[CH4:1].[OH2:2]>>[CH3:1][OH:2]")).unwrap();
        assert_eq!(v["edits"][0]["bond"], "SINGLE");
        assert_eq!((v["edits"][0]["u"].as_u64(), v["edits"][0]["v"].as_u64()), (Some(0), Some(1)));
    }

    #[test]
    fn toy_reaction_is_seeded() {
        assert_eq!(toy_reaction(3, 6, 8), toy_reaction(3, 6, 8));
        let v: serde_json::Value = serde_json::from_str(&toy_reaction(3, 6, 8)).unwrap();
        assert!(!v["edits"].as_array().unwrap().is_empty());
        let e: serde_json::Value = serde_json::from_str(&toy_reaction(3, 8, 6)).unwrap();
        assert!(e["error"].is_string());
    }
}

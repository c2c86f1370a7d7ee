use std::path::Path;

use gtpn_core::harness::Config;

fn load(name: &str) -> Config {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    let cfg = Config::load(&path).unwrap();
    cfg.validate().unwrap();
    cfg
}

#[test]
fn shipped_configs_parse_and_validate() {
    let toy = load("toy.toml");
    let full = load("uspto.toml");
    let small = load("uspto-15k.toml");
    assert_eq!(toy.policy(), full.policy());
    assert_eq!(full.policy(), small.policy());
    assert_eq!(full.policy(), Config::default().policy());
    assert_eq!((full.lr_factor, full.lr_patience, full.lr_min), (0.8, 500, 2e-5));
    assert_eq!((small.lr_factor, small.lr_patience, small.lr_min), (0.5, 1000, 5e-5));
    assert_eq!(full.iterations, 1_000_000);
    assert_eq!(full.batch_size, 20);
}

#[test]
fn sample_data_files_load() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data");
    let text = std::fs::read_to_string(dir.join("reactions.txt")).unwrap();
    let (records, skipped) = gtpn_core::molgraph::read_format_a(&text).unwrap();
    assert_eq!(records.len(), 5);
    assert!(skipped.is_empty());
    let gold: Vec<usize> = records.iter().map(|r| r.gold.len()).collect();
    assert_eq!(gold, [2, 2, 1, 2, 2]);

    let text = std::fs::read_to_string(dir.join("toy-sample.jsonl")).unwrap();
    let (records, skipped) = gtpn_core::molgraph::read_format_b(&text).unwrap();
    assert_eq!(records.len(), 5);
    assert!(skipped.is_empty());
}

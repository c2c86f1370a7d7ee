use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use gtpn_core::diffcore::Checkpoint;

/// `println!` that reports a closed stdout as an error instead of panicking.
macro_rules! outln {
    ($($arg:tt)*) => {
        writeln!(std::io::stdout(), $($arg)*)
    };
}
use gtpn_core::harness::{
    coverage_at_k, evaluate, gen_toy_dataset, predict, prediction_lines, recall_at_k,
    run_gradcheck, score_dump, Config, RunObserver, GRADCHECK_TOLERANCE,
};
use gtpn_core::molgraph::{parse_smiles, read_format_a, read_format_b, write_format_b, ReactionRecord};
use gtpn_core::policy::PolicyConfig;
use gtpn_core::training::{fit, Model};

#[derive(Parser)]
#[command(name = "gtpn", version, about = "Reaction product prediction by graph edit sequences")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// TOML config file; missing keys take their defaults.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a config key, e.g. `--set top_k=5`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Seed for every random choice; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
}

impl Common {
    fn load(&self) -> Result<Config> {
        let base = match &self.config {
            Some(p) => Config::load(p)?,
            None => Config::default(),
        };
        let mut cfg = base.with_overrides(&self.overrides)?;
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate toy train/valid/test splits.
    GenData {
        #[command(flatten)]
        common: Common,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Train a model.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: Option<PathBuf>,
        /// Output directory for the log, checkpoints and final model.
        #[arg(long)]
        out: PathBuf,
        /// Continue from a checkpoint instead of fresh parameters.
        #[arg(long)]
        init: Option<PathBuf>,
    },
    /// Report precision, coverage and recall on a dataset.
    Eval {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        beam: Option<usize>,
        /// Largest k of the coverage and recall curves.
        #[arg(long, default_value_t = 20)]
        max_k: usize,
        /// Also write the full report, per-reaction outcomes included.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Print ranked products as JSON lines.
    Predict {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        /// Dataset whose inputs are decoded.
        #[arg(long, conflicts_with = "smiles")]
        data: Option<PathBuf>,
        /// A single input, mapped SMILES.
        #[arg(long)]
        smiles: Option<String>,
        #[arg(long)]
        beam: Option<usize>,
    },
    /// Check loss gradients against finite differences on the bundled fixture.
    Gradcheck {
        #[command(flatten)]
        common: Common,
        /// Use the model widths from the config instead of small ones.
        #[arg(long)]
        from_config: bool,
    },
    /// Dump step-0 pair scores and print coverage and recall curves.
    Pairscore {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        /// Score dump output (JSON lines).
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 20)]
        max_k: usize,
    },
}

/// Reads JSON-lines records from `.jsonl`/`.json` files and reaction SMILES
/// otherwise.
fn read_records(path: &Path) -> Result<Vec<ReactionRecord>> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read data file {}", path.display()))?;
    let is_json = matches!(path.extension().and_then(|e| e.to_str()), Some("jsonl" | "json"));
    let (records, skipped) = if is_json { read_format_b(&text) } else { read_format_a(&text) }
        .with_context(|| format!("malformed data file {}", path.display()))?;
    for s in &skipped {
        eprintln!("skipped {} (line {}): {}", s.id, s.line, s.reason);
    }
    Ok(records)
}

fn load_model(path: &Path) -> Result<Model> {
    let text = fs::read_to_string(path).with_context(|| format!("cannot read checkpoint {}", path.display()))?;
    let ck = Checkpoint::from_json(&text).with_context(|| format!("invalid checkpoint {}", path.display()))?;
    Ok(Model::from_checkpoint(&ck)?)
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn gen_data(cfg: &Config, out: &Path) -> Result<()> {
    let data = gen_toy_dataset(&cfg.toy_spec(), cfg.seed)?;
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    for (name, split) in [("train", &data.train), ("valid", &data.valid), ("test", &data.test)] {
        write_file(&out.join(format!("{name}.jsonl")), &write_format_b(split))?;
        outln!("{name}: {} records", split.len())?;
    }
    Ok(())
}

fn train(cfg: &Config, train: &Path, valid: Option<&Path>, out: &Path, init: Option<&Path>) -> Result<()> {
    let train_set = read_records(train)?;
    if train_set.is_empty() {
        bail!("training set {} has no usable records", train.display());
    }
    let mut valid_set = match valid {
        Some(p) => read_records(p)?,
        None => Vec::new(),
    };
    if cfg.eval_limit > 0 {
        valid_set.truncate(cfg.eval_limit);
    }
    fs::create_dir_all(out).with_context(|| format!("cannot create {}", out.display()))?;
    let mut model = match init {
        Some(p) => load_model(p)?,
        None => Model::new(cfg.policy(), cfg.seed)?,
    };
    let extra = serde_json::to_value(cfg)?;
    let log_path = out.join("log.jsonl");
    let log = fs::File::create(&log_path).with_context(|| format!("cannot create {}", log_path.display()))?;
    let mut obs = RunObserver {
        valid: valid_set,
        beam_width: cfg.beam_width,
        log: Some(Box::new(BufWriter::new(log))),
        checkpoint_dir: Some(out.to_path_buf()),
        extra: extra.clone(),
        errors: Vec::new(),
        echo: true,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let summary = fit(&mut model, &train_set, &cfg.train(), &mut rng, &mut obs);
    if let Some(mut w) = obs.log.take() {
        w.flush().context("cannot flush training log")?;
    }
    let summary = summary?;
    for e in &obs.errors {
        eprintln!("warning: {e}");
    }
    write_file(&out.join("model.json"), &model.checkpoint(extra).to_json())?;
    outln!("{}", serde_json::to_string(&summary)?)?;
    Ok(())
}

fn eval(cfg: &Config, model: &Path, data: &Path, beam: Option<usize>, max_k: usize, report: Option<&Path>) -> Result<()> {
    let model = load_model(model)?;
    let records = read_records(data)?;
    let r = evaluate(&model, &records, beam.unwrap_or(cfg.beam_width), max_k)?;
    let summary = serde_json::json!({
        "reactions": r.reactions,
        "beam_width": r.beam_width,
        "precision": r.precision,
        "precision_raw": r.precision_raw,
        "precision_valid": r.precision_valid,
        "coverage": r.coverage,
        "recall": r.recall,
    });
    outln!("{}", serde_json::to_string_pretty(&summary)?)?;
    if let Some(p) = report {
        write_file(p, &serde_json::to_string_pretty(&r)?)?;
    }
    Ok(())
}

fn run_predict(cfg: &Config, model: &Path, data: Option<&Path>, smiles: Option<&str>, beam: Option<usize>) -> Result<()> {
    let model = load_model(model)?;
    let width = beam.unwrap_or(cfg.beam_width);
    let inputs: Vec<(String, gtpn_core::molgraph::MolGraph)> = match (data, smiles) {
        (Some(p), _) => read_records(p)?.into_iter().map(|r| (r.id, r.input)).collect(),
        (None, Some(s)) => vec![("input".into(), parse_smiles(s).context("cannot parse --smiles")?)],
        (None, None) => bail!("predict needs --data or --smiles"),
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    for (id, g) in inputs {
        let cands = predict(&model, &g, width).with_context(|| format!("cannot decode {id}"))?;
        for line in prediction_lines(&id, &cands) {
            writeln!(out, "{}", serde_json::to_string(&line)?)?;
        }
    }
    Ok(())
}

fn gradcheck(cfg: &Config, from_config: bool) -> Result<()> {
    let policy = if from_config { cfg.policy() } else { PolicyConfig::small() };
    let start = std::time::Instant::now();
    let r = run_gradcheck(policy, cfg.seed)?;
    outln!(
        "max_rel_error {:.3e} at {}[{}] (analytic {:.6e}, numeric {:.6e}); {} entries in {:.1}s",
        r.max_rel_error,
        r.worst_param,
        r.worst_index,
        r.analytic,
        r.numeric,
        r.checked,
        start.elapsed().as_secs_f64()
    )?;
    if r.max_rel_error >= GRADCHECK_TOLERANCE {
        bail!("gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}", r.max_rel_error);
    }
    Ok(())
}

fn pairscore(model: &Path, data: &Path, out: Option<&Path>, max_k: usize) -> Result<()> {
    let model = load_model(model)?;
    let records = read_records(data)?;
    if records.is_empty() {
        bail!("data file {} has no usable records", data.display());
    }
    let dumps = records
        .iter()
        .map(|r| score_dump(&model, r))
        .collect::<Result<Vec<_>, _>>()?;
    if let Some(p) = out {
        let mut text = String::new();
        for d in &dumps {
            text.push_str(&serde_json::to_string(d)?);
            text.push('\n');
        }
        write_file(p, &text)?;
    }
    outln!("k\tcoverage\trecall")?;
    for k in 1..=max_k {
        let c = coverage_at_k(&dumps, k);
        let r = recall_at_k(&dumps, k);
        let fmt = |v: Option<f64>| v.map_or("-".to_string(), |v| format!("{v:.4}"));
        outln!("{k}\t{}\t{}", fmt(c), fmt(r))?;
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenData { common, out } => gen_data(&common.load()?, &out),
        Command::Train {
            common,
            train: t,
            valid,
            out,
            init,
        } => train(&common.load()?, &t, valid.as_deref(), &out, init.as_deref()),
        Command::Eval {
            common,
            model,
            data,
            beam,
            max_k,
            report,
        } => eval(&common.load()?, &model, &data, beam, max_k, report.as_deref()),
        Command::Predict {
            common,
            model,
            data,
            smiles,
            beam,
        } => run_predict(&common.load()?, &model, data.as_deref(), smiles.as_deref(), beam),
        Command::Gradcheck { common, from_config } => gradcheck(&common.load()?, from_config),
        Command::Pairscore {
            common,
            model,
            data,
            out,
            max_k,
        } => {
            common.load()?;
            pairscore(&model, &data, out.as_deref(), max_k)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if e.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe) => {
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

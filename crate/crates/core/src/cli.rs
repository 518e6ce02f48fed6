//! Command-line entry point.
//!
//! Value resolution: command-line flag, then the `--config` JSON object (flat
//! snake_case keys), then the built-in default. The seed additionally falls
//! back to `GEONEG_SEED` before its default of 0.

use std::ffi::OsString;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::contrastive::{train, Optimizer, Strategy, TrainConfig, TrainRun};
use crate::corpus::{build_negatives, load_dataset, write_negatives, Corpus, Family, TemplateMix};
use crate::eval::{
    contamination_filter, evaluate, max_similarity_audit, ratio_sweep, separation_scores, sweep_csv, DEFAULT_CUTOFF,
};
use crate::negatives::DEFAULT_COUNT;
use crate::{Error, Result};

pub const SEED_ENV: &str = "GEONEG_SEED";
pub const EXIT_RUNTIME: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Parser, Debug)]
#[command(name = "geoneg", version, about = "Hard-negative contrastive toolkit for geometric diagrams and captions")]
struct Cli {
    /// Flat JSON object supplying defaults for any flag.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate scenes, captions and SVGs.
    Gen(GenArgs),
    /// Build one family of negatives for a corpus.
    Negatives(NegativesArgs),
    /// Train the dual encoder.
    Train(TrainArgs),
    /// Hit@1 of a trained run on the held-out evaluation sets.
    Eval(EvalArgs),
    /// Contamination filter, similarity thresholds and separation scores.
    Audit(AuditArgs),
    /// One training run and evaluation per negative ratio.
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    #[arg(short = 'n', long, value_parser = clap::value_parser!(u64).range(1..))]
    n: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Four comma-separated template weights.
    #[arg(long)]
    mix: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct NegativesArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    family: Option<Family>,
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    count: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Defaults to the corpus directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct TrainFlags {
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    negative_ratio: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    steps: Option<usize>,
    #[arg(long)]
    optimizer: Option<Optimizer>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    /// Negative families used for training; all present ones by default.
    #[arg(long, value_delimiter = ',')]
    families: Option<Vec<Family>>,
}

#[derive(Args, Debug)]
struct TrainArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    run: Option<PathBuf>,
    /// Metrics CSV; defaults to `eval.csv` in the run directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct AuditArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long)]
    cutoff: Option<f64>,
    #[arg(long, value_delimiter = ',')]
    thresholds: Option<Vec<f64>>,
    #[arg(long)]
    seed: Option<u64>,
    /// Report directory; defaults to the corpus directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    corpus: Option<PathBuf>,
    #[arg(long, value_delimiter = ',')]
    ratios: Option<Vec<usize>>,
    /// Evaluation set scored after each run.
    #[arg(long)]
    eval_set: Option<String>,
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    train: TrainFlags,
}

/// Flat JSON configuration.
struct Config(Map<String, Value>);

impl Config {
    fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(Config(Map::new())) };
        let text = fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
        match serde_json::from_str(&text)? {
            Value::Object(m) => Ok(Config(m)),
            _ => Err(Error::InvalidConfig(format!("{}: expected a JSON object", path.display()))),
        }
    }

    fn get<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>> {
        if flag.is_some() {
            return Ok(flag);
        }
        self.0
            .get(key)
            .map(|v| {
                serde_json::from_value(v.clone()).map_err(|e| Error::InvalidConfig(format!("config key `{key}`: {e}")))
            })
            .transpose()
    }

    fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T> {
        Ok(self.get(flag, key)?.unwrap_or(default))
    }

    fn path(&self, flag: Option<PathBuf>, key: &str) -> Result<PathBuf> {
        self.get(flag, key)?.ok_or_else(|| Error::InvalidConfig(format!("missing --{}", key.replace('_', "-"))))
    }

    fn seed(&self, flag: Option<u64>) -> Result<u64> {
        if let Some(s) = self.get(flag, "seed")? {
            return Ok(s);
        }
        match std::env::var(SEED_ENV) {
            Ok(v) => v.trim().parse().map_err(|_| Error::InvalidConfig(format!("{SEED_ENV}={v} is not a u64"))),
            Err(_) => Ok(0),
        }
    }

    fn train_config(&self, f: TrainFlags) -> Result<(TrainConfig, Option<Vec<Family>>)> {
        let d = TrainConfig::default();
        let cfg = TrainConfig {
            strategy: self.or(f.strategy, "strategy", d.strategy)?,
            negative_ratio: self.or(f.negative_ratio, "negative_ratio", d.negative_ratio)?,
            learning_rate: self.or(f.learning_rate, "learning_rate", d.learning_rate)?,
            steps: self.or(f.steps, "steps", d.steps)?,
            seed: self.seed(f.seed)?,
            optimizer: self.or(f.optimizer, "optimizer", d.optimizer)?,
            batch_size: self.or(f.batch_size, "batch_size", d.batch_size)?,
        };
        cfg.validate()?;
        Ok((cfg, self.get(f.families, "families")?))
    }
}

/// Parses `args` (program name first), runs the command and returns the exit code.
pub fn run<I, S>(args: I) -> i32
where
    I: IntoIterator<Item = S>,
    S: Into<OsString> + Clone,
{
    let _ = env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info"))
        .target(env_logger::Target::Stderr)
        .try_init();
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    match dispatch(cli) {
        Ok(()) => 0,
        Err(e) => {
            log::error!("{e}");
            if matches!(e, Error::InvalidConfig(_)) {
                EXIT_USAGE
            } else {
                EXIT_RUNTIME
            }
        }
    }
}

fn dispatch(cli: Cli) -> Result<()> {
    let cfg = Config::load(cli.config.as_deref())?;
    match cli.command {
        Command::Gen(a) => cmd_gen(&cfg, a),
        Command::Negatives(a) => cmd_negatives(&cfg, a),
        Command::Train(a) => cmd_train(&cfg, a),
        Command::Eval(a) => cmd_eval(&cfg, a),
        Command::Audit(a) => cmd_audit(&cfg, a),
        Command::Sweep(a) => cmd_sweep(&cfg, a),
    }
}

fn write(path: &Path, contents: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| Error::file(parent, e))?;
    }
    fs::write(path, contents).map_err(|e| Error::file(path, e))
}

fn cmd_gen(cfg: &Config, a: GenArgs) -> Result<()> {
    let n = cfg.or(a.n, "n", 64)?;
    if n == 0 {
        return Err(Error::InvalidConfig("n must be at least 1".into()));
    }
    let seed = cfg.seed(a.seed)?;
    let mix = match cfg.get(a.mix, "mix")? {
        Some(s) => s.parse()?,
        None => TemplateMix::default(),
    };
    let out = cfg.path(a.out, "out")?;
    let corpus = Corpus::generate(n as usize, seed, &mix)?;
    corpus.write(&out)?;
    log::info!("wrote {n} scenes to {}", out.display());
    Ok(())
}

fn cmd_negatives(cfg: &Config, a: NegativesArgs) -> Result<()> {
    let dir = cfg.path(a.corpus, "corpus")?;
    let family = cfg.get(a.family, "family")?.ok_or_else(|| Error::InvalidConfig("missing --family".into()))?;
    let count = cfg.or(a.count, "count", DEFAULT_COUNT as u64)? as usize;
    if count == 0 {
        return Err(Error::InvalidConfig("count must be at least 1".into()));
    }
    let seed = cfg.seed(a.seed)?;
    let out = cfg.get(a.out, "out")?.unwrap_or_else(|| dir.clone());
    let corpus = Corpus::load(&dir)?;
    let set = build_negatives(&corpus, family, count, seed)?;
    for (id, why) in &set.skipped {
        log::warn!("skipped {id}: no applicable {why}");
    }
    write_negatives(&out, family, &set)?;
    log::info!("wrote {} {family} groups ({} skipped)", set.groups.len(), set.skipped.len());
    if !set.skipped.is_empty() {
        log::warn!("{} warnings", set.skipped.len());
    }
    Ok(())
}

fn cmd_train(cfg: &Config, a: TrainArgs) -> Result<()> {
    let dir = cfg.path(a.corpus, "corpus")?;
    let out = cfg.path(a.out, "out")?;
    let (config, families) = cfg.train_config(a.train)?;
    let ds = load_dataset::<f64>(&dir, families.as_deref())?;
    log::info!("training {:?} on {} pairs, {} groups", config.strategy, ds.data.pairs.len(), ds.data.groups.len());
    let run = train(&ds.data, &config)?;
    run.save(&out)?;
    log::info!("final loss {:.6}; run saved to {}", run.final_loss(), out.display());
    Ok(())
}

fn cmd_eval(cfg: &Config, a: EvalArgs) -> Result<()> {
    let dir = cfg.path(a.corpus, "corpus")?;
    let run_dir = cfg.path(a.run, "run")?;
    let run = TrainRun::<f64>::load(&run_dir)?;
    let ds = load_dataset::<f64>(&dir, None)?;
    if ds.eval_sets.is_empty() {
        return Err(Error::Empty("evaluation sets (no negatives files in the corpus)"));
    }
    let mut csv = String::from("set,items,hit_at_1\n");
    let mut jsonl = String::new();
    let mut stdout = std::io::stdout().lock();
    for set in &ds.eval_sets {
        let hit = evaluate(set, &run.encoder, &ds.data)?;
        writeln!(stdout, "{} Hit@1 {hit:.4} ({} items)", set.name.as_str(), set.items.len())?;
        csv.push_str(&format!("{},{},{hit}\n", set.name.as_str(), set.items.len()));
        jsonl.push_str(&set.to_jsonl());
    }
    let out = cfg.get(a.out, "out")?.unwrap_or_else(|| run_dir.join("eval.csv"));
    write(&out, &csv)?;
    write(&out.with_file_name("evalsets.jsonl"), &jsonl)?;
    Ok(())
}

fn cmd_audit(cfg: &Config, a: AuditArgs) -> Result<()> {
    let dir = cfg.path(a.corpus, "corpus")?;
    let cutoff = cfg.or(a.cutoff, "cutoff", DEFAULT_CUTOFF)?;
    let mut thresholds = cfg.or(a.thresholds, "thresholds", vec![0.8, 0.9, 0.95])?;
    thresholds.push(cutoff);
    let seed = cfg.seed(a.seed)?;
    let out = cfg.get(a.out, "out")?.unwrap_or_else(|| dir.clone());
    let corpus = Corpus::load(&dir)?;
    let start = crate::corpus::holdout_start(corpus.len());
    let train_m = corpus.caption_embeddings::<f64>(0..start)?;
    let test_m = corpus.caption_embeddings::<f64>(start..corpus.len())?;

    let (filtered, mut report) = contamination_filter(&train_m, &test_m, cutoff)?;
    if !filtered.is_empty() {
        let removed = std::mem::take(&mut report.removed);
        report = max_similarity_audit(&test_m, &filtered, &thresholds)?;
        report.removed = removed;
    }

    let mut stdout = std::io::stdout().lock();
    writeln!(
        stdout,
        "contamination filter at {cutoff}: removed {} of {} training captions",
        report.removed.len(),
        train_m.len()
    )?;
    for line in report.threshold_lines() {
        writeln!(stdout, "{line}")?;
    }
    let mut md = format!("# Audit\n\n## Held-out captions vs filtered training captions\n\n{}", report.markdown());

    let rule_path = dir.join(crate::corpus::RULE_CAPTIONS_FILE);
    if rule_path.is_file() {
        let negs: Vec<crate::caption::CaptionRecord> = crate::corpus::read_jsonl(&rule_path)?;
        let rows = negs.iter().map(|c| crate::encoder::text_features::<f64>(&c.text).values).collect();
        let neg_m = crate::encoder::EmbeddingMatrix::from_rows(
            crate::encoder::TEXT_DIM,
            negs.iter().map(|c| c.id.clone()).collect(),
            rows,
        )?;
        let positives = corpus.caption_embeddings::<f64>(0..corpus.len())?;
        let s = separation_scores(&positives, &neg_m, seed)?;
        writeln!(
            stdout,
            "separation positive vs rule-negative captions: kmeans {:.4} natural {:.4}",
            s.kmeans_accuracy, s.natural_score
        )?;
        md.push_str(&format!(
            "\n## Separation of positive and rule-negative captions\n\n| kmeans accuracy | natural score |\n|---|---|\n| {:.4} | {:.4} |\n",
            s.kmeans_accuracy, s.natural_score
        ));
    }
    write(&out.join("audit.md"), &md)?;
    write(&out.join("audit.csv"), &report.csv())?;
    Ok(())
}

fn cmd_sweep(cfg: &Config, a: SweepArgs) -> Result<()> {
    let dir = cfg.path(a.corpus, "corpus")?;
    let ratios = cfg.or(a.ratios, "ratios", vec![5, 10, 20, 30, 50])?;
    let set_name = cfg.or(a.eval_set, "eval_set", "retrieval-neg".to_string())?;
    let out = cfg.get(a.out, "out")?.unwrap_or_else(|| dir.join("sweep.csv"));
    let (config, families) = cfg.train_config(a.train)?;
    let ds = load_dataset::<f64>(&dir, families.as_deref())?;
    let set = ds.eval_sets.iter().find(|s| s.name.as_str() == set_name).ok_or_else(|| {
        Error::InvalidConfig(format!(
            "no `{set_name}` evaluation set; known: {:?}",
            ds.eval_sets.iter().map(|s| s.name.as_str()).collect::<Vec<_>>()
        ))
    })?;
    let rows = ratio_sweep(&ds.data, &config, &ratios, set)?;
    let csv = sweep_csv(&rows);
    write(&out, &csv)?;
    std::io::stdout().lock().write_all(csv.as_bytes())?;
    Ok(())
}

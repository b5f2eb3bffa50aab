use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};

use mhd_asr::data::{generate_dataset, Dataset, Split};
use mhd_asr::decoding::beam_search;
use mhd_asr::encoder::FeatureSequence;
use mhd_asr::experiment::{
    self, decode_split, decode_text, load_model, parse_decodes, results_table, run_experiment, score,
    ExperimentConfig, ResultsRow, Variant,
};
use mhd_asr::export::export_attention;
use mhd_asr::gradcheck::{self, Scope};
use mhd_asr::kv::KeyValues;

/// Multi-head decoder ASR experiments on a synthetic transduction task.
#[derive(Parser)]
#[command(name = "mhd", version)]
struct Cli {
    /// Worker threads for per-utterance parallelism (0 = all cores).
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic dataset.
    Generate {
        #[command(flatten)]
        common: Common,
    },
    /// Train a variant, saving `last/` and `best/` checkpoints.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Continue from `<out>/last` if it exists.
        #[arg(long)]
        resume: bool,
    },
    /// Beam-decode a split with a checkpoint, writing `id<TAB>text` lines.
    Decode {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
    },
    /// Score decodes against dataset references.
    Eval {
        #[arg(long)]
        data: PathBuf,
        /// File of `id<TAB>text` lines.
        #[arg(long)]
        hyp: PathBuf,
        /// Fail unless the error rate is at most this value.
        #[arg(long)]
        max_cer: Option<f64>,
    },
    /// Finite-difference gradient check.
    Gradcheck {
        #[arg(long, default_value = "all")]
        scope: Scope,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = gradcheck::TOLERANCE)]
        tolerance: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export per-head attention images and matrices for one utterance.
    Visualize {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        checkpoint: PathBuf,
        /// Utterance id; defaults to the first test utterance.
        #[arg(long)]
        utt: Option<String>,
    },
    /// Train and evaluate several variants over several seeds.
    Compare {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        data: PathBuf,
        /// Comma-separated variant names.
        #[arg(long, value_delimiter = ',')]
        variants: Vec<Variant>,
        /// Comma-separated training seeds.
        #[arg(long, value_delimiter = ',', default_value = "1")]
        seeds: Vec<u64>,
    },
}

#[derive(Args)]
struct Common {
    /// Configuration file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one configuration key; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
    /// Seeds data generation (generate) or training (other commands).
    #[arg(long)]
    seed: Option<u64>,
    /// Sets `experiment.variant`.
    #[arg(long)]
    variant: Option<Variant>,
    /// Sets `beam.size`.
    #[arg(long)]
    beam: Option<usize>,
    /// Output directory or file.
    #[arg(long)]
    out: PathBuf,
}

impl Common {
    fn config(&self, seed_key: &str) -> Result<ExperimentConfig> {
        let mut kv = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                KeyValues::parse(&text).with_context(|| format!("parsing {}", path.display()))?
            }
            None => KeyValues::new(),
        };
        for s in &self.sets {
            kv.set_assignment(s)?;
        }
        if let Some(seed) = self.seed {
            kv.set(seed_key, seed);
        }
        if let Some(v) = &self.variant {
            kv.set("experiment.variant", v);
        }
        if let Some(b) = self.beam {
            kv.set("beam.size", b);
        }
        let cfg = ExperimentConfig::from_kv(&kv)?;
        cfg.validate()?;
        Ok(cfg)
    }
}

fn load_dataset(dir: &Path) -> Result<Dataset> {
    Dataset::load(dir).with_context(|| format!("loading dataset from {}", dir.display()))
}

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    fs::write(path, contents).with_context(|| format!("writing {}", path.display()))
}

fn print_epoch(m: &mhd_asr::training::EpochMetrics) {
    eprintln!(
        "epoch {:>2}  train {:.4}  valid {:.4}  eps {:.0e}{}",
        m.epoch,
        m.train_loss,
        m.valid_loss,
        m.eps,
        if m.improved { "  *" } else { "" }
    );
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Generate { common } => {
            let cfg = common.config("data.seed")?;
            let data = generate_dataset(&cfg.data)?;
            data.save(&common.out)?;
            println!(
                "wrote {} train, {} dev, {} test utterances to {}",
                data.len(Split::Train),
                data.len(Split::Dev),
                data.len(Split::Test),
                common.out.display()
            );
        }
        Command::Train { common, data, resume } => {
            let cfg = common.config("train.seed")?;
            let dataset = load_dataset(&data)?;
            let outcome = experiment::train(&cfg, &dataset, &common.out, resume, print_epoch)?;
            write(&common.out.join("config.txt"), cfg.to_kv().to_text())?;
            println!(
                "trained {} for {} epochs, best valid loss {}",
                cfg.variant,
                outcome.epochs,
                outcome.best_valid.map_or("n/a".into(), |v| format!("{v:.6}"))
            );
        }
        Command::Decode {
            common,
            data,
            checkpoint,
            split,
        } => {
            let cfg = common.config("train.seed")?;
            let dataset = load_dataset(&data)?;
            let model = load_model(&checkpoint)?;
            let decoded = decode_split(&model, &dataset, split, &cfg.beam)?;
            write(&common.out, decode_text(&decoded))?;
        }
        Command::Eval { data, hyp, max_cer } => {
            let dataset = load_dataset(&data)?;
            let text = fs::read_to_string(&hyp).with_context(|| format!("reading {}", hyp.display()))?;
            let count = score(&dataset, &parse_decodes(&text)?)?;
            println!("cer\t{:.4}\nedits\t{}\nreference\t{}", count.rate(), count.edits, count.reference);
            if let Some(max) = max_cer {
                return Ok(count.rate() <= max);
            }
        }
        Command::Gradcheck {
            scope,
            seed,
            tolerance,
            out,
        } => {
            let report = gradcheck::run(scope, seed)?;
            let table = report.to_table();
            print!("{table}");
            if let Some(out) = out {
                write(&out, &table)?;
            }
            let ok = report.passed(tolerance);
            println!(
                "{}: max relative error {:.3e} (tolerance {tolerance:e})",
                if ok { "PASS" } else { "FAIL" },
                report.max_rel_err()
            );
            return Ok(ok);
        }
        Command::Visualize {
            common,
            data,
            checkpoint,
            utt,
        } => {
            let cfg = common.config("train.seed")?;
            let dataset = load_dataset(&data)?;
            let model = load_model(&checkpoint)?;
            let u = match &utt {
                Some(id) => dataset.find(id).with_context(|| format!("no utterance {id:?}"))?,
                None => dataset.split(Split::Test).next().context("test split is empty")?,
            };
            let x = FeatureSequence::new(u.features.clone())?.cast::<f64>();
            let result = beam_search(&model, &x, &cfg.beam)?;
            for path in export_attention(&result.trace, &common.out, &u.id)? {
                println!("{}", path.display());
            }
            println!("{}\tref {}\thyp {}", u.id, u.text, model.vocab().decode(&result.tokens));
        }
        Command::Compare {
            common,
            data,
            variants,
            seeds,
        } => {
            let base = common.config("train.seed")?;
            let dataset = load_dataset(&data)?;
            let variants = if variants.is_empty() {
                Variant::STANDARD.iter().map(|v| v.parse()).collect::<mhd_asr::Result<_>>()?
            } else {
                variants
            };
            let mut table = format!("seed\t{}\n", ResultsRow::HEADER);
            let mut rows = Vec::new();
            for &seed in &seeds {
                for v in &variants {
                    let mut cfg = base.clone();
                    cfg.variant = v.clone();
                    cfg.train.seed = seed;
                    let dir = common.out.join(v.to_string()).join(format!("seed{seed}"));
                    eprintln!("== {v} seed {seed}");
                    let row = run_experiment(&cfg, &dataset, &dir, print_epoch)?;
                    println!("{seed}\t{}", row.to_line());
                    table.push_str(&format!("{seed}\t{}\n", row.to_line()));
                    rows.push(row);
                }
            }
            write(&common.out.join("results.tsv"), &table)?;
            let mut means = Vec::new();
            for v in &variants {
                let name = v.to_string();
                let mine: Vec<&ResultsRow> = rows.iter().filter(|r| r.variant == name).collect();
                let n = mine.len() as f64;
                means.push(ResultsRow {
                    variant: name,
                    cer: mine.iter().map(|r| r.cer).sum::<f64>() / n,
                    epochs: mine.iter().map(|r| r.epochs).max().unwrap_or(0),
                    seconds: mine.iter().map(|r| r.seconds).sum::<f64>() / n,
                });
            }
            write(&common.out.join("summary.tsv"), results_table(&means))?;
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.threads > 0 {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(cli.threads).build_global() {
            eprintln!("error: {e}");
            return ExitCode::FAILURE;
        }
    }
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

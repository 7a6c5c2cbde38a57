use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use glossbench_core::dataset::{check_split_disjointness, gen_synthetic, load_dataset};
use glossbench_core::metrics::mover::OovPolicy;
use glossbench_core::tokenizer::train_tokenizer;
use glossbench_core::{ArchTag, Dataset, SubwordVocab};
use glossbench_harness::service::{self, ServiceConfig};
use glossbench_harness::tune::{render, run_trial, tune_with};
use glossbench_harness::{build_leaderboard, validate_submission, MetricsConfig, ScoreReport, Scorer, Store, Submission, Track};
use glossbench_hyperopt::SearchSpace;
use glossbench_neural::baselines::{train_defmod, train_revdict, DefmodModel, RevdictModel, TrainConfig, DEFMOD_KIND, REVDICT_KIND};
use glossbench_neural::char_ae::{train_char_ae, CharAeConfig, CharAutoencoder, CHAR_AE_KIND};
use glossbench_neural::Checkpoint;

#[derive(Parser)]
#[command(name = "glossbench", version, about = "Definition modeling and reverse dictionary toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a submission against a reference split; exits 1 when invalid.
    Validate {
        #[arg(long)]
        submission: PathBuf,
        #[arg(long)]
        reference: PathBuf,
    },
    /// Score a submission file.
    #[command(subcommand)]
    Score(ScoreCmd),
    /// Aggregate score reports into a leaderboard.
    Leaderboard {
        /// Read every report from a service store.
        #[arg(long, conflicts_with = "reports")]
        store: Option<PathBuf>,
        /// Score report files.
        #[arg(long, num_args = 1..)]
        reports: Vec<PathBuf>,
    },
    /// Run the HTTP submission service.
    Serve {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train, encode with or decode with a subword vocabulary.
    #[command(subcommand)]
    Tokenizer(TokenizerCmd),
    /// Train a baseline model or write predictions from a checkpoint.
    #[command(subcommand)]
    Baseline(BaselineCmd),
    /// Train the character autoencoder or embed words with it.
    #[command(subcommand, name = "char-ae")]
    CharAe(CharAeCmd),
    /// Bayesian hyperparameter search over a shell command.
    Tune {
        #[arg(long)]
        space: PathBuf,
        #[arg(long)]
        budget: usize,
        #[arg(long, default_value_t = 10)]
        init: usize,
        /// Command template with `{param}` placeholders; its last output
        /// line is the objective to minimize.
        #[arg(long)]
        cmd: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "tune_log.json")]
        log: PathBuf,
    },
    /// Write a synthetic dataset.
    GenSynthetic {
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        dim: usize,
        /// File of whitespace-separated gloss words; a small built-in list otherwise.
        #[arg(long)]
        vocab: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Report vector collisions between two splits.
    CheckSplits {
        #[arg(long)]
        a: PathBuf,
        #[arg(long)]
        b: PathBuf,
        #[arg(long)]
        arch: ArchTag,
        #[arg(long, default_value_t = 0.0)]
        tol: f64,
    },
}

#[derive(Args)]
struct Output {
    /// Write here instead of stdout.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum ScoreCmd {
    Revdict {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        targets: PathBuf,
        #[arg(long)]
        arch: ArchTag,
        /// Include per-item values.
        #[arg(long)]
        verbose: bool,
        #[arg(long, default_value_t = 1)]
        threads: usize,
        #[command(flatten)]
        output: Output,
    },
    Defmod {
        #[arg(long)]
        preds: PathBuf,
        #[arg(long)]
        refs: PathBuf,
        /// JSON map token -> vector used by mover similarity.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        /// JSON map token -> idf weight.
        #[arg(long)]
        idf: Option<PathBuf>,
        /// Fail on tokens missing from the embedding table instead of dropping them.
        #[arg(long)]
        strict: bool,
        #[arg(long)]
        verbose: bool,
        #[command(flatten)]
        output: Output,
    },
}

#[derive(Subcommand)]
enum TokenizerCmd {
    /// Learn merges from a dataset file (its glosses) or a plain text file (its lines).
    Train {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the ids of a text, space separated.
    Encode {
        #[arg(long)]
        vocab: PathBuf,
        text: String,
    },
    /// Print the text for space-separated ids.
    Decode {
        #[arg(long)]
        vocab: PathBuf,
        ids: String,
    },
}

#[derive(Subcommand)]
enum BaselineCmd {
    Train {
        #[arg(long)]
        track: Track,
        #[arg(long)]
        arch: ArchTag,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        /// Training configuration JSON; missing keys take defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Existing tokenizer; otherwise one is trained on the training glosses.
        #[arg(long)]
        tokenizer: Option<PathBuf>,
        #[arg(long, default_value_t = 8000)]
        vocab_size: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a submission with the model's predictions for every input item.
    Predict {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "baseline")]
        participant: String,
        /// Submission id; defaults to the output file stem.
        #[arg(long)]
        id: Option<String>,
        #[arg(long, default_value_t = 1)]
        beam: usize,
        #[arg(long, default_value_t = 64)]
        max_len: usize,
    },
}

#[derive(Subcommand)]
enum CharAeCmd {
    Train {
        /// One word per line, or a dataset file (its definienda).
        #[arg(long)]
        words: PathBuf,
        /// JSON with optional "model" and "train" sections.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a token -> vector map usable as a mover-similarity table.
    Embed {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        words: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Default, Serialize, Deserialize)]
#[serde(default)]
struct CharAeRun {
    model: CharAeConfig,
    train: TrainConfig,
}

const DEFAULT_VOCAB: &str = "a an the of to in for with by from as or and that which one who something \
    act state place person thing part kind way form quality small large make cause give take become move \
    used having being relating water light sound animal plant tool body";

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

fn emit(output: &Output, text: &str) -> Result<()> {
    match &output.out {
        Some(p) => write(p, text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn load_json<T: serde::de::DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => serde_json::from_str(&read(p)?).with_context(|| format!("parsing {}", p.display())),
        None => Ok(T::default()),
    }
}

/// Words from a dataset file, or one per non-empty line.
fn read_words(path: &Path) -> Result<Vec<String>> {
    let text = read(path)?;
    if let Ok(ds) = Dataset::from_json_str(&text) {
        return Ok(ds.items.into_iter().map(|d| d.word).collect());
    }
    Ok(text.lines().map(str::trim).filter(|l| !l.is_empty()).map(String::from).collect())
}

fn score(sub: &Submission, reference: &Dataset, cfg: MetricsConfig) -> Result<ScoreReport> {
    let scorer = Scorer::new(cfg)?;
    match scorer.score(sub, reference) {
        Err(glossbench_harness::HarnessError::InvalidSubmission(v)) => {
            eprint!("{}", v.to_json());
            bail!("submission is invalid")
        }
        other => Ok(other?),
    }
}

fn run(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Validate { submission, reference } => {
            let report = validate_submission(&Submission::load(&submission)?, &load_dataset(&reference)?);
            print!("{}", report.to_json());
            return Ok(if report.is_valid() { 0 } else { 1 });
        }
        Command::Score(ScoreCmd::Revdict {
            preds,
            targets,
            arch,
            verbose,
            threads,
            output,
        }) => {
            let mut sub = Submission::load(&preds)?;
            match sub.arch {
                Some(a) if a != arch => bail!("submission arch {a} does not match --arch {arch}"),
                _ => sub.arch = Some(arch),
            }
            if sub.track != Track::Revdict {
                bail!("{} is a {} submission", preds.display(), sub.track);
            }
            let cfg = MetricsConfig {
                per_item: verbose,
                threads,
                ..Default::default()
            };
            emit(&output, &score(&sub, &load_dataset(&targets)?, cfg)?.to_json())?;
        }
        Command::Score(ScoreCmd::Defmod {
            preds,
            refs,
            embeddings,
            idf,
            strict,
            verbose,
            output,
        }) => {
            let sub = Submission::load(&preds)?;
            if sub.track != Track::Defmod {
                bail!("{} is a {} submission", preds.display(), sub.track);
            }
            let cfg = MetricsConfig {
                per_item: verbose,
                embeddings,
                idf,
                oov: if strict { OovPolicy::Strict } else { OovPolicy::Drop },
                ..Default::default()
            };
            emit(&output, &score(&sub, &load_dataset(&refs)?, cfg)?.to_json())?;
        }
        Command::Leaderboard { store, reports } => {
            let all: Vec<ScoreReport> = match store {
                Some(dir) => Store::open(dir)?.reports(),
                None => reports
                    .iter()
                    .map(|p| Ok(serde_json::from_str(&read(p)?)?))
                    .collect::<Result<_>>()?,
            };
            print!("{}", build_leaderboard(&all).to_json());
        }
        Command::Serve { config } => {
            let cfg = ServiceConfig::load(&config)?;
            tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?
                .block_on(service::serve(cfg))?;
        }
        Command::Tokenizer(cmd) => tokenizer(cmd)?,
        Command::Baseline(cmd) => baseline(cmd)?,
        Command::CharAe(cmd) => char_ae(cmd)?,
        Command::Tune {
            space,
            budget,
            init,
            cmd,
            seed,
            log,
        } => {
            let space: SearchSpace = serde_json::from_str(&read(&space)?)?;
            space.validate()?;
            let log = tune_with(&space, budget, init, seed, &log, |config| {
                let command = render(&cmd, config);
                let v = run_trial(&command);
                eprintln!("{v}\t{command}");
                v
            })?;
            let best = glossbench_harness::tune::best(&log).context("no trials")?;
            println!("{}", serde_json::to_string_pretty(best)?);
        }
        Command::GenSynthetic {
            seed,
            n,
            dim,
            vocab,
            out,
        } => {
            let text = match vocab {
                Some(p) => read(&p)?,
                None => DEFAULT_VOCAB.to_string(),
            };
            let words: Vec<&str> = text.split_whitespace().collect();
            gen_synthetic(seed, n, dim, &words)?.save(&out)?;
        }
        Command::CheckSplits { a, b, arch, tol } => {
            let found = check_split_disjointness(&load_dataset(&a)?, &load_dataset(&b)?, arch, tol)?;
            let pairs: Vec<Value> = found
                .iter()
                .map(|c| serde_json::json!({ "a": c.a_id, "b": c.b_id }))
                .collect();
            println!("{}", serde_json::to_string_pretty(&pairs)?);
            return Ok(if found.is_empty() { 0 } else { 1 });
        }
    }
    Ok(0)
}

fn tokenizer(cmd: TokenizerCmd) -> Result<()> {
    match cmd {
        TokenizerCmd::Train { input, vocab_size, out } => {
            let text = read(&input)?;
            let corpus: Vec<String> = match Dataset::from_json_str(&text) {
                Ok(ds) => ds.items.into_iter().map(|d| d.gloss).collect(),
                Err(_) => text.lines().map(String::from).collect(),
            };
            train_tokenizer(&corpus, vocab_size)?.save(&out)?;
        }
        TokenizerCmd::Encode { vocab, text } => {
            let ids: Vec<String> = SubwordVocab::load(&vocab)?.encode(&text).iter().map(u32::to_string).collect();
            println!("{}", ids.join(" "));
        }
        TokenizerCmd::Decode { vocab, ids } => {
            let ids: Vec<u32> = ids
                .split_whitespace()
                .map(|s| s.parse().with_context(|| format!("bad id \"{s}\"")))
                .collect::<Result<_>>()?;
            println!("{}", SubwordVocab::load(&vocab)?.decode(&ids));
        }
    }
    Ok(())
}

fn baseline(cmd: BaselineCmd) -> Result<()> {
    match cmd {
        BaselineCmd::Train {
            track,
            arch,
            train,
            valid,
            config,
            tokenizer,
            vocab_size,
            out,
        } => {
            let cfg: TrainConfig = load_json(config.as_deref())?;
            let (train, valid) = (load_dataset(&train)?, load_dataset(&valid)?);
            let tok = match tokenizer {
                Some(p) => SubwordVocab::load(&p)?,
                None => {
                    let glosses: Vec<&str> = train.items.iter().map(|d| d.gloss.as_str()).collect();
                    train_tokenizer(&glosses, vocab_size)?
                }
            };
            let (report, ck) = match track {
                Track::Revdict => {
                    let (_, r, ck) = train_revdict(&train, &valid, arch, &tok, &cfg)?;
                    (r, ck)
                }
                Track::Defmod => {
                    let (_, r, ck) = train_defmod(&train, &valid, arch, &tok, &cfg)?;
                    (r, ck)
                }
            };
            ck.save(&out)?;
            println!("{}", serde_json::to_string_pretty(&report)?);
        }
        BaselineCmd::Predict {
            ckpt,
            input,
            out,
            participant,
            id,
            beam,
            max_len,
        } => {
            let ck = Checkpoint::load(&ckpt)?;
            let data = load_dataset(&input)?;
            let mut items = BTreeMap::new();
            let (track, arch) = match ck.header.kind.as_str() {
                REVDICT_KIND => {
                    let model = RevdictModel::from_checkpoint(&ck)?;
                    for d in &data.items {
                        items.insert(d.id.clone(), Value::from(model.predict_gloss(&d.gloss)?));
                    }
                    (Track::Revdict, model.net.meta.arch)
                }
                DEFMOD_KIND => {
                    let model = DefmodModel::from_checkpoint(&ck)?;
                    let arch = model.net.meta.arch;
                    for d in &data.items {
                        let v = d.embedding(arch).with_context(|| format!("{} has no {arch} vector", d.id))?;
                        items.insert(d.id.clone(), Value::from(model.generate_gloss(v, beam, max_len)?));
                    }
                    (Track::Defmod, arch)
                }
                other => bail!("checkpoint kind \"{other}\" is not a baseline"),
            };
            let id = id.unwrap_or_else(|| out.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default());
            let sub = Submission {
                id,
                participant,
                track,
                language: data.language.clone(),
                arch: Some(arch),
                timestamp: String::new(),
                items,
            };
            write(&out, &sub.to_json())?;
        }
    }
    Ok(())
}

fn char_ae(cmd: CharAeCmd) -> Result<()> {
    match cmd {
        CharAeCmd::Train { words, config, out } => {
            let run: CharAeRun = load_json(config.as_deref())?;
            let words = read_words(&words)?;
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let (model, report) = train_char_ae(&refs, &run.model, &run.train)?;
            model.to_checkpoint().save(&out)?;
            let acc = model.reconstruction_accuracy(&refs)?;
            println!(
                "{}",
                serde_json::to_string_pretty(&serde_json::json!({ "report": report, "reconstruction_accuracy": acc }))?
            );
        }
        CharAeCmd::Embed { ckpt, words, out } => {
            let ck = Checkpoint::load(&ckpt)?;
            ck.expect_kind(CHAR_AE_KIND)?;
            let model = CharAutoencoder::from_checkpoint(&ck)?;
            let words = read_words(&words)?;
            let refs: Vec<&str> = words.iter().map(String::as_str).collect();
            let mut table = BTreeMap::new();
            for (w, v) in refs.iter().zip(model.embed_words(&refs)?) {
                table.insert(*w, v);
            }
            write(&out, &serde_json::to_string(&table)?)?;
        }
    }
    Ok(())
}

fn main() {
    match run(Cli::parse()) {
        Ok(code) => std::process::exit(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            std::process::exit(2);
        }
    }
}

//! The `weakbias` command line.
//!
//! Every subcommand maps onto one library operation. Settings come from
//! `--config` (TOML, or JSON by extension), generic `--set key=value`
//! overrides and the subcommand's own flags, in increasing precedence.
//! Failures print one JSON line on stderr and exit with 2 (usage), 3 (input)
//! or 4 (numeric).

use std::ffi::OsString;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::classifier::{
    ablate_zero_text, load_checkpoint, predict_corpus, rank_images_for_word, save_checkpoint, select_visual_words,
    train_stage1_with, train_stage2_with, train_word_head_with, EmbeddingTable, VisualWords,
};
use crate::config::{ConfigFormat, RunConfig};
use crate::corpus::{build_vocabulary, load_corpus, split, tokenize, Corpus, SideLabel};
use crate::dedup::{build_index, deduplicate, knn_distance_histogram, save_report};
use crate::doc2vec::{self, load_model, nearest_words, save_model, QueryEmbedding};
use crate::error::{Error, ErrorKind, Result};
use crate::eval::{self, group_accuracy, top_k_source_accuracy, Grouping};
use crate::observe::{EpochLog, Observer};
use crate::synth::{make_synthetic, PlantedWord, SyntheticSpec};

#[derive(Debug, Parser)]
#[command(name = "weakbias", version, about = "Weakly-supervised image bias prediction with text as privileged information")]
pub struct Cli {
    /// Config file; `.json` is read as JSON, anything else as TOML.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Root seed. Falls back to the config file, then WEAKBIAS_SEED, then 0.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Override a config key, e.g. `--set stage1.epochs=5`. Repeatable.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Emit progress as JSON lines on stderr.
    #[arg(long, global = true)]
    json_logs: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct CorpusArg {
    /// Corpus JSONL (default: paths.corpus).
    #[arg(long)]
    corpus: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum GroupBy {
    Source,
    Topic,
}

impl From<GroupBy> for Grouping {
    fn from(g: GroupBy) -> Self {
        match g {
            GroupBy::Source => Grouping::Source,
            GroupBy::Topic => Grouping::Topic,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum QueryMethod {
    Inferred,
    Mean,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum DumpFormat {
    Toml,
    Json,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Build the vocabulary and Huffman codes and print them as JSON.
    Vocab {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        min_count: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train paragraph vectors; writes the model and the training embeddings.
    TrainText {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Embedding sidecar for the training documents.
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        dim: Option<usize>,
        #[arg(long)]
        window: Option<usize>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        min_count: Option<u64>,
    },
    /// Infer embeddings for a corpus (JSONL out) or a single text.
    InferText {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, conflicts_with = "text")]
        corpus: Option<PathBuf>,
        #[arg(long)]
        text: Option<String>,
        #[arg(long)]
        steps: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Words whose vectors are closest to a query phrase.
    NearestWords {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        n: usize,
        #[arg(long, value_enum, default_value_t = QueryMethod::Inferred)]
        method: QueryMethod,
    },
    /// Remove near-duplicate samples.
    Dedup {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Squared-distance threshold (default: dedup.threshold).
        #[arg(long)]
        threshold: Option<f32>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        report: Option<PathBuf>,
        /// Also write a histogram of sampled kNN distances.
        #[arg(long)]
        histogram: Option<PathBuf>,
    },
    /// Train trunk, fusion and bias head with text embeddings.
    TrainStage1 {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Freeze the trunk and train the image-only head.
    TrainStage2 {
        #[command(flatten)]
        input: CorpusArg,
        /// Stage-1 checkpoint.
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
    },
    /// Evaluate a stage-1 model with its text pathway zeroed.
    Ablate {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GroupBy::Source)]
        group_by: GroupBy,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain on articles cut to their first k sentences.
    TruncationSweep {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long, value_delimiter = ',', required = true)]
        k: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Retrain with and without one source and compare on that source.
    Loso {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        test: Option<PathBuf>,
        #[arg(long)]
        source: String,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Pick the frequent words whose images are least dispersed.
    SelectWords {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        top_frequent: Option<usize>,
        #[arg(long)]
        keep: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Train the word-presence head on top of a stage-1 model.
    TrainWords {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        /// Output of `select-words`.
        #[arg(long)]
        words: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Samples ranked by a word head's score for one word.
    RankImages {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        embeddings: Option<PathBuf>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        word: String,
        #[arg(long, default_value_t = 100)]
        top: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Stage-2 accuracy with per-source or per-topic breakdown.
    Eval {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = GroupBy::Source)]
        group_by: GroupBy,
        /// Add mean accuracy over the k largest groups, e.g. `--top-k 20,100`.
        #[arg(long, value_delimiter = ',')]
        top_k: Vec<usize>,
        /// Weight the top-k mean by group size.
        #[arg(long)]
        weighted: bool,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Per-group rows as CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
    },
    /// Write a seeded synthetic corpus.
    MakeSynthetic {
        #[arg(long)]
        out: PathBuf,
        /// Generator settings as JSON or TOML; flags below take precedence.
        #[arg(long)]
        spec: Option<PathBuf>,
        #[arg(long)]
        n_samples: Option<usize>,
        #[arg(long)]
        left_fraction: Option<f64>,
        #[arg(long)]
        label_correlation: Option<f64>,
        #[arg(long)]
        noise: Option<f64>,
        #[arg(long)]
        nuisance_dims: Option<usize>,
        /// Plant this word on a tight feature cluster.
        #[arg(long)]
        planted_word: Option<String>,
    },
    /// Stratified train/test split.
    Split {
        #[command(flatten)]
        input: CorpusArg,
        #[arg(long)]
        train_out: PathBuf,
        #[arg(long)]
        test_out: PathBuf,
        #[arg(long, default_value_t = 0.2)]
        test_fraction: f64,
    },
    /// Print the effective configuration.
    Config {
        #[arg(long, value_enum, default_value_t = DumpFormat::Toml)]
        format: DumpFormat,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Progress sink for the training loops.
struct Logger {
    json: bool,
}

impl Logger {
    fn note(&self, event: &str, path: &Path) {
        if self.json {
            eprintln!("{}", json!({"event": event, "path": path}));
        } else {
            eprintln!("{event} {}", path.display());
        }
    }

    fn warn(&self, message: &str) {
        if self.json {
            eprintln!("{}", json!({"event": "warning", "message": message}));
        } else {
            eprintln!("warning: {message}");
        }
    }
}

impl Observer for Logger {
    fn epoch(&mut self, log: &EpochLog) {
        if self.json {
            let mut line = json!({"event": "epoch", "stage": log.stage, "epoch": log.epoch, "loss": log.loss});
            if log.skipped > 0 {
                line["skipped"] = json!(log.skipped);
            }
            eprintln!("{line}");
        } else {
            eprintln!("{} epoch {} loss {:.6}", log.stage, log.epoch, log.loss);
        }
    }
}

/// Parses `args` (program name first) and runs the command.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind as K;
            if matches!(e.kind(), K::DisplayHelp | K::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let rendered = e.to_string();
            let first = rendered.lines().next().unwrap_or("").trim_start_matches("error: ");
            eprintln!("{}", json!({"error": "usage", "message": first}));
            return ExitCode::from(2);
        }
    };
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let (kind, code) = match e.kind() {
                ErrorKind::Usage => ("usage", 2),
                ErrorKind::Input => ("input", 3),
                ErrorKind::Numeric => ("numeric", 4),
            };
            eprintln!("{}", json!({"error": kind, "message": e.to_string()}));
            ExitCode::from(code)
        }
    }
}

pub fn main() -> ExitCode {
    run(std::env::args_os())
}

struct Context {
    config: RunConfig,
    log: Logger,
}

impl Context {
    fn corpus_path(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.config.paths.corpus.clone())
            .ok_or_else(|| Error::invalid("no corpus given: pass --corpus or set paths.corpus"))
    }

    fn test_path(&self, flag: Option<PathBuf>) -> Result<PathBuf> {
        flag.or_else(|| self.config.paths.test_corpus.clone())
            .ok_or_else(|| Error::invalid("no test corpus given: pass --test or set paths.test_corpus"))
    }

    fn embeddings_path(&self, flag: Option<PathBuf>) -> PathBuf {
        flag.or_else(|| self.config.paths.embeddings.clone())
            .unwrap_or_else(|| self.model_file("embeddings.jsonl"))
    }

    fn model_file(&self, name: &str) -> PathBuf {
        self.config.paths.models.join(name)
    }

    fn report_file(&self, name: &str) -> PathBuf {
        self.config.paths.reports.join(name)
    }
}

fn execute(cli: Cli) -> Result<()> {
    let base = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    overrides.extend(command_overrides(&cli.command));
    let config = base.with_overrides(overrides.iter().map(String::as_str))?;
    config.validate()?;
    let mut cx = Context {
        config,
        log: Logger { json: cli.json_logs },
    };
    dispatch(cli.command, &mut cx)
}

/// Subcommand flags that shadow config keys, rendered as overrides.
fn command_overrides(command: &Command) -> Vec<String> {
    let mut out = Vec::new();
    let mut put = |key: &str, value: Option<String>| {
        if let Some(v) = value {
            out.push(format!("{key}={v}"));
        }
    };
    match command {
        Command::Vocab { min_count, .. } => put("doc2vec.min_count", min_count.map(|v| v.to_string())),
        Command::TrainText {
            dim,
            window,
            epochs,
            min_count,
            ..
        } => {
            put("doc2vec.dim", dim.map(|v| v.to_string()));
            put("classifier.text_dim", dim.map(|v| v.to_string()));
            put("doc2vec.window", window.map(|v| v.to_string()));
            put("doc2vec.epochs", epochs.map(|v| v.to_string()));
            put("doc2vec.min_count", min_count.map(|v| v.to_string()));
        }
        Command::InferText { steps, .. } => put("doc2vec.infer_steps", steps.map(|v| v.to_string())),
        Command::Dedup { threshold, k, .. } => {
            put("dedup.threshold", threshold.map(|v| format!("{v:?}")));
            put("hnsw.k", k.map(|v| v.to_string()));
        }
        Command::TrainStage1 { epochs, lr, .. } => {
            put("stage1.epochs", epochs.map(|v| v.to_string()));
            put("stage1.lr", lr.map(|v| format!("{v:?}")));
        }
        Command::TrainStage2 { epochs, lr, .. } => {
            put("stage2.epochs", epochs.map(|v| v.to_string()));
            put("stage2.lr", lr.map(|v| format!("{v:?}")));
        }
        Command::SelectWords { top_frequent, keep, .. } => {
            put("words.top_frequent", top_frequent.map(|v| v.to_string()));
            put("words.keep", keep.map(|v| v.to_string()));
        }
        Command::TrainWords { epochs, .. } => put("words.train.epochs", epochs.map(|v| v.to_string())),
        _ => {}
    }
    out
}

fn ensure_parent(path: &Path) -> Result<()> {
    match path.parent().filter(|d| !d.as_os_str().is_empty()) {
        Some(dir) => std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e)),
        None => Ok(()),
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    ensure_parent(path)?;
    File::create(path).map(BufWriter::new).map_err(io_at(path))
}

fn io_at(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |e| Error::io(path, e)
}

/// Pretty JSON to `out`, or to stdout.
fn emit_json(value: &impl Serialize, out: Option<&Path>, log: &Logger) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::invalid(e.to_string()))?;
    match out {
        Some(path) => {
            let mut w = create(path)?;
            writeln!(w, "{text}").and_then(|_| w.flush()).map_err(io_at(path))?;
            log.note("wrote", path);
        }
        None => println!("{text}"),
    }
    Ok(())
}

fn labels(corpus: &Corpus) -> Vec<SideLabel> {
    corpus.iter().map(|s| s.side).collect()
}

fn dispatch(command: Command, cx: &mut Context) -> Result<()> {
    match command {
        Command::Vocab { input, out, .. } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let vocab = build_vocabulary(&corpus, cx.config.doc2vec.min_count)?;
            let words: Vec<_> = (0..vocab.len())
                .map(|i| {
                    let code: String = vocab.code(i).iter().map(|b| if *b == 0 { '0' } else { '1' }).collect();
                    json!({"word": vocab.word(i), "count": vocab.counts()[i], "code": code})
                })
                .collect();
            let report = json!({
                "size": vocab.len(),
                "min_count": vocab.min_count(),
                "inner_nodes": vocab.inner_nodes(),
                "words": words,
            });
            emit_json(&report, out.as_deref(), &cx.log)
        }
        Command::TrainText {
            input, out, embeddings, ..
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let config = cx.config.pipeline()?.doc2vec;
            let model = doc2vec::train_pvdm_with(&corpus, &config, &mut cx.log)?;
            let model_path = out.unwrap_or_else(|| cx.model_file("doc2vec.pvdm"));
            ensure_parent(&model_path)?;
            save_model(&model, &model_path)?;
            cx.log.note("wrote", &model_path);
            let emb_path = embeddings.unwrap_or_else(|| cx.model_file("embeddings.jsonl"));
            ensure_parent(&emb_path)?;
            EmbeddingTable::from_model(&model, &corpus)?.save(&emb_path)?;
            cx.log.note("wrote", &emb_path);
            Ok(())
        }
        Command::InferText {
            model,
            corpus,
            text,
            out,
            ..
        } => {
            let model = load_model(model.unwrap_or_else(|| cx.model_file("doc2vec.pvdm")))?;
            let steps = cx.config.doc2vec.infer_steps;
            let seed = cx.config.derived_seed("infer")?;
            if let Some(text) = text {
                let e = model.infer_document(&tokenize(&text), steps, seed)?;
                return emit_json(&json!({"embedding": e.values}), out.as_deref(), &cx.log);
            }
            let corpus = load_corpus(cx.corpus_path(corpus)?)?;
            let mut table = EmbeddingTable::new(model.dim());
            for s in corpus.iter() {
                let e = model
                    .infer_document(&s.tokens, steps, seed)
                    .map_err(|e| Error::invalid(format!("sample {:?}: {e}", s.id)))?;
                table.insert(s.id.clone(), e.values)?;
            }
            match out {
                Some(path) => {
                    ensure_parent(&path)?;
                    table.save(&path)?;
                    cx.log.note("wrote", &path);
                    Ok(())
                }
                None => {
                    let stdout = std::io::stdout();
                    table.write_to(stdout.lock()).map_err(io_at(Path::new("<stdout>")))
                }
            }
        }
        Command::NearestWords { model, query, n, method } => {
            let model = load_model(model.unwrap_or_else(|| cx.model_file("doc2vec.pvdm")))?;
            let method = match method {
                QueryMethod::Inferred => QueryEmbedding::Inferred,
                QueryMethod::Mean => QueryEmbedding::WordMean,
            };
            let ranked = nearest_words(&model, &tokenize(&query), n, method, cx.config.derived_seed("infer")?)?;
            let rows: Vec<_> = ranked.into_iter().map(|(w, s)| json!({"word": w, "similarity": s})).collect();
            emit_json(&rows, None, &cx.log)
        }
        Command::Dedup {
            input,
            out,
            report,
            histogram,
            ..
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let params = cx.config.hnsw_params()?;
            for w in params.validate()? {
                cx.log.warn(&w);
            }
            if let Some(path) = histogram {
                let index = build_index(&corpus, &params)?;
                let h = knn_distance_histogram(&index, 1000, params.k.min(20), 20, params.seed);
                emit_json(&h, Some(&path), &cx.log)?;
                if cx.config.dedup.threshold.is_none() {
                    return Ok(());
                }
            }
            let threshold = cx
                .config
                .dedup
                .threshold
                .ok_or_else(|| Error::invalid("dedup needs --threshold or dedup.threshold"))?;
            let (kept, clusters) = deduplicate(&corpus, &params, threshold)?;
            let out = out.unwrap_or_else(|| cx.model_file("dedup.jsonl"));
            ensure_parent(&out)?;
            kept.save(&out)?;
            cx.log.note("wrote", &out);
            let report = report.unwrap_or_else(|| cx.report_file("clusters.jsonl"));
            ensure_parent(&report)?;
            save_report(&clusters, &report)?;
            cx.log.note("wrote", &report);
            Ok(())
        }
        Command::TrainStage1 {
            input, embeddings, out, ..
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let table = EmbeddingTable::load(cx.embeddings_path(embeddings))?;
            let p = cx.config.pipeline()?;
            let model = train_stage1_with(&corpus, &table, &p.classifier, &p.stage1, &mut cx.log)?;
            let out = out.unwrap_or_else(|| cx.model_file("stage1.wbck"));
            ensure_parent(&out)?;
            save_checkpoint(&model, &out)?;
            cx.log.note("wrote", &out);
            Ok(())
        }
        Command::TrainStage2 { input, model, out, .. } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let stage1 = load_checkpoint(model.unwrap_or_else(|| cx.model_file("stage1.wbck")))?;
            let p = cx.config.pipeline()?;
            let model = train_stage2_with(&stage1, &corpus, &p.stage2, &mut cx.log)?;
            let out = out.unwrap_or_else(|| cx.model_file("stage2.wbck"));
            ensure_parent(&out)?;
            save_checkpoint(&model, &out)?;
            cx.log.note("wrote", &out);
            Ok(())
        }
        Command::Ablate {
            input,
            model,
            group_by,
            out,
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let stage1 = load_checkpoint(model.unwrap_or_else(|| cx.model_file("stage1.wbck")))?;
            let ablated = ablate_zero_text(&stage1);
            let grouping = Grouping::from(group_by);
            let mut report = group_accuracy(&ablated.predict_corpus(&corpus)?, &labels(&corpus), &grouping.keys(&corpus))?;
            report.metadata.insert("evaluator".into(), json!("zero_text"));
            report.metadata.insert("grouping".into(), json!(grouping));
            emit_json(&report, Some(&out.unwrap_or_else(|| cx.report_file("ablation.json"))), &cx.log)
        }
        Command::TruncationSweep { input, test, k, out } => {
            let train = load_corpus(cx.corpus_path(input.corpus)?)?;
            let test = load_corpus(cx.test_path(test)?)?;
            let p = cx.config.pipeline()?;
            let sweep = eval::sentence_truncation_sweep(&train, &test, &k, &p, &mut cx.log)?;
            emit_json(&sweep, Some(&out.unwrap_or_else(|| cx.report_file("truncation.json"))), &cx.log)
        }
        Command::Loso {
            input,
            test,
            source,
            out,
        } => {
            let train = load_corpus(cx.corpus_path(input.corpus)?)?;
            let test = load_corpus(cx.test_path(test)?)?;
            let p = cx.config.pipeline()?;
            let result = eval::leave_one_source_out(&train, &test, &source, &p, &mut cx.log)?;
            emit_json(&result, Some(&out.unwrap_or_else(|| cx.report_file("loso.json"))), &cx.log)
        }
        Command::SelectWords { input, out, .. } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let words = select_visual_words(&corpus, cx.config.words.top_frequent, cx.config.words.keep);
            if let Some(w) = &words.warning {
                cx.log.warn(w);
            }
            emit_json(&words, Some(&out.unwrap_or_else(|| cx.model_file("visual_words.json"))), &cx.log)
        }
        Command::TrainWords {
            input,
            embeddings,
            model,
            words,
            out,
            ..
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let table = EmbeddingTable::load(cx.embeddings_path(embeddings))?;
            let stage1 = load_checkpoint(model.unwrap_or_else(|| cx.model_file("stage1.wbck")))?;
            let words_path = words.unwrap_or_else(|| cx.model_file("visual_words.json"));
            let text = std::fs::read_to_string(&words_path).map_err(io_at(&words_path))?;
            let selected: VisualWords = serde_json::from_str(&text)
                .map_err(|e| Error::Format(format!("{}: {e}", words_path.display())))?;
            let spec = cx.config.words_spec()?;
            let model = train_word_head_with(&stage1, &corpus, &table, &selected.words, &spec, &mut cx.log)?;
            let out = out.unwrap_or_else(|| cx.model_file("words.wbck"));
            ensure_parent(&out)?;
            save_checkpoint(&model, &out)?;
            cx.log.note("wrote", &out);
            Ok(())
        }
        Command::RankImages {
            input,
            embeddings,
            model,
            word,
            top,
            out,
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let table = EmbeddingTable::load(cx.embeddings_path(embeddings))?;
            let model = load_checkpoint(model.unwrap_or_else(|| cx.model_file("words.wbck")))?;
            let ranked = rank_images_for_word(&model, &corpus, &table, &word, top)?;
            let rows: Vec<_> = ranked.into_iter().map(|(id, s)| json!({"id": id, "score": s})).collect();
            emit_json(&rows, out.as_deref(), &cx.log)
        }
        Command::Eval {
            input,
            model,
            group_by,
            top_k,
            weighted,
            out,
            csv,
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let model = load_checkpoint(model.unwrap_or_else(|| cx.model_file("stage2.wbck")))?;
            let grouping = Grouping::from(group_by);
            let predictions = predict_corpus(&model, &corpus)?;
            let mut report = group_accuracy(&predictions, &labels(&corpus), &grouping.keys(&corpus))?;
            report.metadata.insert("evaluator".into(), json!("stage2"));
            report.metadata.insert("grouping".into(), json!(grouping));
            for k in top_k {
                let t = top_k_source_accuracy(&report, k, weighted)?;
                if let Some(w) = &t.warning {
                    cx.log.warn(w);
                }
                report.metadata.insert(
                    format!("top_{k}"),
                    json!({"accuracy": t.accuracy, "groups_used": t.sources_used, "weighted": weighted}),
                );
            }
            if let Some(path) = csv {
                let mut w = create(&path)?;
                report.write_csv(&mut w).map_err(io_at(&path))?;
                cx.log.note("wrote", &path);
            }
            emit_json(&report, Some(&out.unwrap_or_else(|| cx.report_file("eval.json"))), &cx.log)
        }
        Command::MakeSynthetic {
            out,
            spec,
            n_samples,
            left_fraction,
            label_correlation,
            noise,
            nuisance_dims,
            planted_word,
        } => {
            let mut s = match spec {
                Some(path) => {
                    let text = std::fs::read_to_string(&path).map_err(io_at(&path))?;
                    match ConfigFormat::of_path(&path) {
                        ConfigFormat::Json => serde_json::from_str(&text).map_err(|e| Error::invalid(e.to_string()))?,
                        ConfigFormat::Toml => toml::from_str(&text).map_err(|e| Error::invalid(e.to_string()))?,
                    }
                }
                None => SyntheticSpec::default(),
            };
            s.seed = cx.config.root_seed()?;
            s.n_samples = n_samples.unwrap_or(s.n_samples);
            s.left_fraction = left_fraction.or(s.left_fraction);
            s.label_correlation = label_correlation.unwrap_or(s.label_correlation);
            s.noise = noise.unwrap_or(s.noise);
            s.nuisance_dims = nuisance_dims.unwrap_or(s.nuisance_dims);
            if let Some(word) = planted_word {
                s.planted = Some(PlantedWord {
                    word,
                    ..PlantedWord::default()
                });
            }
            let corpus = make_synthetic(&s)?;
            ensure_parent(&out)?;
            corpus.save(&out)?;
            cx.log.note("wrote", &out);
            Ok(())
        }
        Command::Split {
            input,
            train_out,
            test_out,
            test_fraction,
        } => {
            let corpus = load_corpus(cx.corpus_path(input.corpus)?)?;
            let (train, test) = split(&corpus, test_fraction, cx.config.derived_seed("split")?)?;
            for (part, path) in [(&train, &train_out), (&test, &test_out)] {
                ensure_parent(path)?;
                part.save(path)?;
                cx.log.note("wrote", path);
            }
            Ok(())
        }
        Command::Config { format, out } => {
            let format = match format {
                DumpFormat::Toml => ConfigFormat::Toml,
                DumpFormat::Json => ConfigFormat::Json,
            };
            let text = cx.config.dump(format)?;
            match out {
                Some(path) => {
                    let mut w = create(&path)?;
                    w.write_all(text.as_bytes()).and_then(|_| w.flush()).map_err(io_at(&path))?;
                    cx.log.note("wrote", &path);
                }
                None => print!("{text}"),
            }
            Ok(())
        }
    }
}

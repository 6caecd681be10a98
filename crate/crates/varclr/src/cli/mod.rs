//! The `varclr` command-line interface: one subcommand per pipeline stage,
//! seeded and scriptable, with machine-readable outputs.
//!
//! Exit codes: 0 on success, 1 on domain errors (bad data, failed
//! tokenization, missing targets), 2 on usage errors.

mod commands;

use std::ffi::OsString;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand, ValueEnum};

use crate::encoders::EncoderKind;

const VERSION_NOTE: &str = "0.1.0 (formats: checkpoint 1, vocab 1, index 1)";

/// Tool and format versions, as printed by `--version` and recorded in run
/// manifests.
pub fn version_string() -> String {
    format!("varclr {VERSION_NOTE}")
}

#[derive(Debug, Parser)]
#[command(
    name = "varclr",
    version = VERSION_NOTE,
    about = "Contrastive subword representations for variable names",
    arg_required_else_help = true,
    disable_help_subcommand = true
)]
pub struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Worker threads for parallel stages (index building). The default of
    /// 1 keeps every stage fully sequential.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum EncoderArg {
    Avg,
    Lstm,
}

impl From<EncoderArg> for EncoderKind {
    fn from(a: EncoderArg) -> Self {
        match a {
            EncoderArg::Avg => EncoderKind::Avg,
            EncoderArg::Lstm => EncoderKind::Lstm,
        }
    }
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Mine rename pairs from unified diff streams into a TSV corpus.
    Mine {
        /// Diff file or directory of diff files (e.g. `git log -p` output).
        #[arg(long)]
        diffs: std::path::PathBuf,
        /// Keep only commits changing fewer than this many lines.
        #[arg(long, default_value_t = 6)]
        max_lines: usize,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Train a byte-pair-encoding vocabulary on an identifier corpus.
    TrainBpe {
        /// Identifier corpus: one name per line, or TSV whose first two
        /// columns are names (a mined pairs file works directly).
        #[arg(long)]
        corpus: std::path::PathBuf,
        #[arg(long, default_value_t = 10_000)]
        vocab_size: usize,
        #[arg(long, default_value_t = 2)]
        min_freq: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Print the subword segmentation of each name.
    Tokenize {
        #[arg(long)]
        vocab: std::path::PathBuf,
        #[arg(required = true)]
        names: Vec<String>,
    },
    /// Contrastively pre-train an encoder on a rename-pair corpus.
    Train {
        /// Pairs TSV: `before<TAB>after[<TAB>commit]`.
        #[arg(long)]
        pairs: std::path::PathBuf,
        #[arg(long)]
        vocab: std::path::PathBuf,
        #[arg(long, value_enum, default_value_t = EncoderArg::Avg)]
        encoder: EncoderArg,
        /// Embedding dimension.
        #[arg(long, default_value_t = 768)]
        dim: usize,
        /// LSTM hidden size per direction (ignored by the avg encoder).
        #[arg(long, default_value_t = 150)]
        hidden: usize,
        #[arg(long, default_value_t = 1024)]
        batch: usize,
        /// Softmax temperature.
        #[arg(long, default_value_t = 0.05)]
        tau: f64,
        /// Learning rate.
        #[arg(long, default_value_t = 0.001)]
        lr: f64,
        #[arg(long, default_value_t = 30)]
        epochs: usize,
        #[arg(long, default_value_t = 10)]
        patience: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Embedding text file to overlay onto the random initialization.
        #[arg(long)]
        init_embeddings: Option<std::path::PathBuf>,
        /// Fraction of the training split to use (data-size ablations).
        #[arg(long, default_value_t = 1.0)]
        data_fraction: f64,
        /// Fraction of pairs held out for validation.
        #[arg(long, default_value_t = 0.05)]
        val_fraction: f64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Print the cosine similarity of two names under a trained encoder.
    Score {
        #[arg(long)]
        ckpt: std::path::PathBuf,
        var1: String,
        var2: String,
    },
    /// Correlate encoder (or baseline) scores against a benchmark CSV.
    Eval {
        #[arg(long, required_unless_present = "baseline")]
        ckpt: Option<std::path::PathBuf>,
        /// CSV with header `var1,var2,relatedness,similarity`.
        #[arg(long)]
        benchmark: std::path::PathBuf,
        /// Score with a baseline instead of an encoder.
        #[arg(long, value_parser = ["levenshtein"])]
        baseline: Option<String>,
    },
    /// Encode a name pool into a search index file.
    Index {
        #[arg(long)]
        ckpt: std::path::PathBuf,
        /// Pool file: one identifier per line.
        #[arg(long)]
        pool: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Top-k most similar pool names for a query.
    Search {
        #[arg(long)]
        index: std::path::PathBuf,
        #[arg(long)]
        query: String,
        #[arg(long, default_value_t = 10)]
        k: usize,
        /// Drop the query itself from the candidates.
        #[arg(long, default_value_t = false)]
        exclude_query: bool,
    },
    /// Hit@K curve for a set of (query, target) pairs.
    Hitk {
        #[arg(long)]
        index: std::path::PathBuf,
        /// Query/target TSV (`query<TAB>target`).
        #[arg(long, required_unless_present = "benchmark")]
        pairs: Option<std::path::PathBuf>,
        /// Alternatively: build queries from a benchmark CSV by similarity
        /// threshold.
        #[arg(long, conflicts_with = "pairs")]
        benchmark: Option<std::path::PathBuf>,
        /// Keep benchmark pairs with human similarity strictly above this.
        #[arg(long, default_value_t = 0.4)]
        threshold: f64,
        /// Emit both query directions for each benchmark pair.
        #[arg(long, default_value_t = false)]
        both_directions: bool,
        #[arg(long, value_delimiter = ',', default_value = "1,5,10,25,50,100,250,500,1000")]
        ks: Vec<usize>,
        #[arg(long, default_value_t = false)]
        exclude_query: bool,
        /// Output CSV (`k,hit_rate`); stdout when omitted.
        #[arg(long)]
        out: Option<std::path::PathBuf>,
    },
    /// Generate a seeded keyboard-typo dataset from a name pool.
    TypoGen {
        #[arg(long)]
        pool: std::path::PathBuf,
        #[arg(long, default_value_t = 1023)]
        count: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: std::path::PathBuf,
    },
    /// Write a checkpoint's embedding table in the embedding text format.
    ExportEmbeddings {
        #[arg(long)]
        ckpt: std::path::PathBuf,
        #[arg(long)]
        out: std::path::PathBuf,
    },
}

/// Parse `argv` and run the selected command. Returns the process exit
/// code; diagnostics go to stderr as single lines.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(err) => {
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = err.print();
            return code;
        }
    };
    match commands::run(cli.command, cli.workers) {
        Ok(()) => 0,
        Err(err) => {
            eprintln!("varclr: {err}");
            1
        }
    }
}

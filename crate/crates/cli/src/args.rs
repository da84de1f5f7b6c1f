use std::path::PathBuf;

use chartcons::{Factoring, TagStrategy};
use clap::{Args, Parser, Subcommand, ValueEnum};

/// Chart-constrained PCFG and TAG parsing.
///
/// Output paths default to standard output. Exit status is 0 on success,
/// 1 on a usage error and 2 on a data error.
#[derive(Debug, Parser)]
#[command(name = "chartcons", version)]
pub struct Cli {
    /// Seed for every random choice; overrides the config file.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with `seed` and `[tagger]`, `[logistic]`, `[supertag]` tables.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Treebank transforms and grammar extraction.
    #[command(subcommand)]
    Treebank(TreebankCmd),
    /// Gold constraint extraction and constraint scoring.
    #[command(subcommand)]
    Constraints(ConstraintsCmd),
    /// Train and apply the begin/end boundary tagger.
    #[command(subcommand)]
    Tagger(TaggerCmd),
    /// Parse sentences with a PCFG or a TAG.
    #[command(subcommand)]
    Parse(ParseCmd),
    /// Train and apply supertaggers.
    #[command(subcommand)]
    Supertag(SupertagCmd),
    /// Score parser output.
    #[command(subcommand)]
    Eval(EvalCmd),
    /// Compare pruning configurations on a treebank.
    #[command(subcommand)]
    Bench(BenchCmd),
}

#[derive(Debug, Args)]
pub struct Binarization {
    /// Horizontal markovization order.
    #[arg(long, default_value_t = 2)]
    pub markov: usize,
    #[arg(long, default_value = "right", value_parser = parse_factoring)]
    pub factoring: Factoring,
}

fn parse_factoring(s: &str) -> Result<Factoring, String> {
    s.parse()
}

fn parse_strategy(s: &str) -> Result<TagStrategy, String> {
    s.parse()
}

#[derive(Debug, Subcommand)]
pub enum TreebankCmd {
    /// Binarize every tree.
    Binarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bin: Binarization,
    },
    /// Undo binarization.
    Debinarize {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Binarize and extract a maximum-likelihood PCFG.
    ExtractPcfg {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        bin: Binarization,
        /// Keep words as terminals instead of POS tags.
        #[arg(long)]
        words: bool,
    },
    /// Extract a spinal TAG keyed by POS tags.
    ExtractTag {
        #[arg(long)]
        treebank: PathBuf,
        /// Head rules `LABEL<TAB>left|right<TAB>CHILD ...[<TAB>ARG ...]`;
        /// defaults to the rules of the synthetic treebank.
        #[arg(long)]
        head_rules: Option<PathBuf>,
        /// Right-binarize elementary trees with this markovization order.
        #[arg(long)]
        binarize: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write the gold trees for TAG parsing, with modifiers split
        /// off into their own nodes.
        #[arg(long)]
        trees_out: Option<PathBuf>,
    },
    /// Sample a synthetic treebank.
    Synth {
        #[arg(long, default_value_t = 2000)]
        sentences: usize,
        #[arg(long, default_value_t = 2)]
        min_len: usize,
        #[arg(long, default_value_t = 40)]
        max_len: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ConstraintsCmd {
    /// Constraints read off gold trees.
    Gold {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Precision, recall and accuracy of predicted against gold constraints.
    Eval {
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaggerKind {
    Lstm,
    Logistic,
}

#[derive(Debug, Subcommand)]
pub enum TaggerCmd {
    /// Train a BiLSTM or logistic boundary tagger on a treebank.
    Train {
        #[arg(long)]
        treebank: PathBuf,
        /// Held-out treebank for epoch selection.
        #[arg(long)]
        dev: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = TaggerKind::Lstm)]
        kind: TaggerKind,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        lr: Option<f64>,
        #[arg(long)]
        hidden: Option<usize>,
    },
    /// Predict a constraints file at threshold `--theta`.
    Predict {
        #[arg(long)]
        model: PathBuf,
        /// Treebank or `word/POS` lines.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 0.5)]
        theta: f64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

// Where chart constraints come from.
#[derive(Debug, Args)]
pub struct ConstraintSource {
    /// Constraints file, one line per input sentence id.
    #[arg(long, conflicts_with = "tagger")]
    pub constraints: Option<PathBuf>,
    /// Boundary tagger model; constraints are predicted at `--theta`.
    #[arg(long)]
    pub tagger: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
}

#[derive(Debug, Args)]
pub struct RunOpts {
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    /// Parse the first N sentences once before measuring.
    #[arg(long, default_value_t = 0)]
    pub warmup: usize,
}

#[derive(Debug, Args)]
pub struct CtfOpts {
    /// Coarse-to-fine pruning with this `fine<TAB>coarse` map file, or
    /// `default` to strip decorations from labels.
    #[arg(long)]
    pub ctf: Option<String>,
    #[arg(long, default_value_t = 1e-5)]
    pub ctf_threshold: f64,
}

#[derive(Debug, Subcommand)]
pub enum ParseCmd {
    /// CKY parsing with a binarized PCFG.
    Pcfg {
        #[arg(long)]
        grammar: PathBuf,
        /// Treebank (gold trees enable scoring) or `word/POS` lines.
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        source: ConstraintSource,
        #[command(flatten)]
        ctf: CtfOpts,
        /// The grammar's terminals are words rather than POS tags.
        #[arg(long)]
        words: bool,
        #[command(flatten)]
        bin: Binarization,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        run: RunOpts,
    },
    /// TAG parsing with a full grammar or with supertags.
    Tag {
        /// Full TAG grammar; not needed with `--supertag`.
        #[arg(long, required_unless_present = "supertag")]
        grammar: Option<PathBuf>,
        #[arg(long)]
        input: PathBuf,
        #[command(flatten)]
        source: ConstraintSource,
        #[arg(long, default_value = "cc", value_parser = parse_strategy)]
        strategy: TagStrategy,
        /// Supertagger model; parse with top-k sentence grammars.
        #[arg(long, requires = "inventory", conflicts_with = "grammar")]
        supertag: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        /// The grammar is anchored by words rather than POS tags.
        #[arg(long)]
        words: bool,
        /// Head rules the grammar was extracted with; gold trees are
        /// rewritten with modifiers split off before scoring.
        #[arg(long)]
        head_rules: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        stats: Option<PathBuf>,
        #[command(flatten)]
        run: RunOpts,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SupertaggerKind {
    Lstm,
    Frequency,
}

#[derive(Debug, Subcommand)]
pub enum SupertagCmd {
    /// Extract the supertag inventory from a treebank and train a model.
    Train {
        #[arg(long)]
        treebank: PathBuf,
        #[arg(long)]
        head_rules: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = SupertaggerKind::Lstm)]
        kind: SupertaggerKind,
        #[arg(long)]
        out: PathBuf,
        /// Where to write the inventory of elementary trees.
        #[arg(long)]
        inventory_out: PathBuf,
        #[arg(long)]
        epochs: Option<usize>,
    },
    /// Top-k supertags per token, one sentence per line.
    Predict {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        inventory: PathBuf,
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum EvalCmd {
    /// Labeled bracket scores; a predicted line `()` is a failed parse.
    Parseval {
        #[arg(long)]
        gold: PathBuf,
        #[arg(long)]
        pred: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct BenchOpts {
    /// Test treebank.
    #[arg(long)]
    pub treebank: PathBuf,
    /// Comma-separated run names.
    #[arg(long, value_delimiter = ',')]
    pub runs: Vec<String>,
    /// Run that speedups are relative to; defaults to the first run.
    #[arg(long)]
    pub baseline: Option<String>,
    /// Boundary tagger for predicted constraints; gold constraints otherwise.
    #[arg(long)]
    pub tagger: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    pub theta: f64,
    #[arg(long, default_value_t = 1)]
    pub jobs: usize,
    #[arg(long, default_value_t = 10)]
    pub warmup: usize,
    /// Directory for `report.tsv` and one `<run>.tsv` per run.
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
pub enum BenchCmd {
    /// Runs: none, cc, ctf, ctf+cc.
    Pcfg {
        #[arg(long)]
        grammar: PathBuf,
        #[command(flatten)]
        opts: BenchOpts,
        /// Map file for the ctf runs; the default map strips decorations.
        #[arg(long)]
        ctf_map: Option<PathBuf>,
        #[arg(long, default_value_t = 1e-5)]
        ctf_threshold: f64,
        #[arg(long)]
        words: bool,
        #[command(flatten)]
        bin: Binarization,
    },
    /// Runs: full, full+cc, full+be (need `--grammar`) and supertag,
    /// supertag+cc, supertag+be (need `--supertag` and `--inventory`).
    Tag {
        #[arg(long)]
        grammar: Option<PathBuf>,
        #[command(flatten)]
        opts: BenchOpts,
        #[arg(long, requires = "inventory")]
        supertag: Option<PathBuf>,
        #[arg(long)]
        inventory: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        k: usize,
        #[arg(long)]
        words: bool,
        /// Head rules the grammar was extracted with; gold trees and gold
        /// constraints use the trees with modifiers split off.
        #[arg(long)]
        head_rules: Option<PathBuf>,
    },
}

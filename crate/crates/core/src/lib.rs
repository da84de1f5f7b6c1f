//! Generalized chart constraints for PCFG and TAG chart parsing.
//!
//! Chart parsers in this crate consult an [`Allowable`] predicate before
//! they enter a consequent item into the chart. Begin/end constraints,
//! coarse-to-fine pruning and supertag filtering are all such predicates
//! and compose by conjunction.

pub mod cky;
pub mod constraints;
pub mod ctf;
pub mod eval;
pub mod grammar;
pub mod item;
pub mod pipeline;
pub mod supertag;
pub mod synth;
pub mod tag;
pub mod tagger;
pub mod tree;

pub use cky::{chart_stats, parse, viterbi, Chart, ChartStats, CkyParser};
pub use constraints::{
    constraints_from_file, constraints_to_file, from_probs, gold_constraints, pcfg_allowable,
    pcfg_allowable_with, tag_allowable_be, tag_allowable_cc, tag_allowable_cc_with,
    BeginEndConstraints, ConstraintError, PcfgConstraintFilter, TagConstraintFilter, TagStrategy,
};
pub use grammar::{extract_pcfg, GrammarError, NtId, Pcfg, Rhs, Rule};
pub use item::{AllowAll, Allowable, AllowableExt, Both, DotState, PcfgItem, TagItem};
pub use tree::{
    binarize, binarize_with, debinarize, read_ptb, read_ptb_binarized, write_ptb, Factoring, Tree,
    TreebankError,
};

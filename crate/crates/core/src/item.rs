//! Chart items and the allowability interface shared by all chart parsers.
//!
//! A parser asks its predicate before it enters a consequent item into the
//! chart; items that are refused are never derived.

use crate::grammar::NtId;

/// CKY item `[A, i, k]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PcfgItem {
    pub label: NtId,
    /// The label was introduced by binarization.
    pub is_new: bool,
    pub i: usize,
    pub k: usize,
}

impl PcfgItem {
    pub fn width(&self) -> usize {
        self.k - self.i
    }
}

/// Progress through the children of an elementary-tree node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DotState {
    /// The first `d` children (`0 < d < arity`) have been recognized.
    Partial(u16),
    /// All children recognized, adjunction not yet decided.
    Bottom,
    /// Adjunction (or null adjunction) done.
    Top,
}

/// TAG item `[X, i, j, k, l]`. `gap` is `Some((j, k))` when the node
/// dominates the foot of an auxiliary tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct TagItem {
    pub node: u32,
    pub state: DotState,
    pub i: usize,
    pub gap: Option<(usize, usize)>,
    pub l: usize,
    /// `i` is not a constituent boundary (the node was introduced by
    /// binarizing an elementary tree).
    pub open_begin: bool,
    /// `l` is not a constituent boundary (the item covers only a prefix of
    /// the node's children).
    pub open_end: bool,
}

impl TagItem {
    /// An item for a complete node with no binarization marks.
    pub fn new(i: usize, gap: Option<(usize, usize)>, l: usize) -> TagItem {
        TagItem {
            node: 0,
            state: DotState::Top,
            i,
            gap,
            l,
            open_begin: false,
            open_end: false,
        }
    }

    pub fn width(&self) -> usize {
        self.l - self.i
    }
}

/// A pure predicate over chart items.
pub trait Allowable<I: ?Sized> {
    fn allows(&self, item: &I) -> bool;

    /// A verdict shared by every item over `[i, k)` whose binarization flag
    /// is `is_new`, if the predicate can give one without seeing the label.
    /// Span-indexed parsers use it to skip or accept whole cells; it must
    /// agree with [`Allowable::allows`].
    fn span_verdict(&self, _i: usize, _k: usize, _is_new: bool) -> Option<bool> {
        None
    }
}

impl<I: ?Sized, F: Fn(&I) -> bool> Allowable<I> for F {
    fn allows(&self, item: &I) -> bool {
        self(item)
    }
}

/// Allows every item; the unpruned parser.
#[derive(Debug, Clone, Copy, Default)]
pub struct AllowAll;

impl<I: ?Sized> Allowable<I> for AllowAll {
    fn allows(&self, _: &I) -> bool {
        true
    }

    fn span_verdict(&self, _: usize, _: usize, _: bool) -> Option<bool> {
        Some(true)
    }
}

/// Conjunction of two predicates.
#[derive(Debug, Clone, Copy)]
pub struct Both<A, B>(pub A, pub B);

impl<I: ?Sized, A: Allowable<I>, B: Allowable<I>> Allowable<I> for Both<A, B> {
    fn allows(&self, item: &I) -> bool {
        self.0.allows(item) && self.1.allows(item)
    }

    fn span_verdict(&self, i: usize, k: usize, is_new: bool) -> Option<bool> {
        match (
            self.0.span_verdict(i, k, is_new),
            self.1.span_verdict(i, k, is_new),
        ) {
            (Some(false), _) | (_, Some(false)) => Some(false),
            (Some(true), Some(true)) => Some(true),
            _ => None,
        }
    }
}

impl<I: ?Sized> Allowable<I> for Box<dyn Allowable<I> + '_> {
    fn allows(&self, item: &I) -> bool {
        (**self).allows(item)
    }

    fn span_verdict(&self, i: usize, k: usize, is_new: bool) -> Option<bool> {
        (**self).span_verdict(i, k, is_new)
    }
}

pub trait AllowableExt<I: ?Sized>: Allowable<I> + Sized {
    fn and<B: Allowable<I>>(self, other: B) -> Both<Self, B> {
        Both(self, other)
    }
}

impl<I: ?Sized, A: Allowable<I>> AllowableExt<I> for A {}

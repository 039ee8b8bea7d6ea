//! Time geometry of an epoch: the d-ary tree over its slots.
//!
//! Node labels depend only on `(epoch_id, level, index)`; a parent's label
//! never depends on its children. When the slot count is not a power of the
//! fanout the tree is built over `fanout^height` virtual leaves and leaves
//! past the last real slot, plus any inner node with no real leaf below it,
//! do not exist.

use std::collections::BTreeSet;
use std::fmt;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum TreeError {
    #[error("fanout must be at least 2, got {0}")]
    Fanout(u32),
    #[error("slot duration must be positive and not exceed the epoch length")]
    SlotDuration,
    #[error("tree over {slots} slots with fanout {fanout} is too deep")]
    TooDeep { slots: u64, fanout: u32 },
    #[error("slot {slot} out of range (epoch has {slots} slots)")]
    SlotOutOfRange { slot: u64, slots: u64 },
    #[error("invalid range {first}..={last} for {slots} slots")]
    BadRange { first: u64, last: u64, slots: u64 },
    #[error("label {0} does not belong to this tree")]
    ForeignLabel(NodeLabel),
}

/// Public time geometry shared by every party.
///
/// `epoch_len` and `delta` are in seconds; epoch `e` covers
/// `[e * epoch_len, (e + 1) * epoch_len)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct EpochConfig {
    epoch_id: u64,
    epoch_len: u64,
    delta: u64,
    fanout: u32,
    slots: u64,
    height: u8,
}

const MAX_HEIGHT: u32 = 63;

impl EpochConfig {
    pub fn new(epoch_id: u64, epoch_len: u64, delta: u64, fanout: u32) -> Result<Self, TreeError> {
        if fanout < 2 {
            return Err(TreeError::Fanout(fanout));
        }
        if delta == 0 || delta > epoch_len {
            return Err(TreeError::SlotDuration);
        }
        let slots = epoch_len.div_ceil(delta);
        let mut height = 0u32;
        let mut width: u64 = 1;
        while width < slots {
            width = width
                .checked_mul(fanout as u64)
                .filter(|_| height < MAX_HEIGHT)
                .ok_or(TreeError::TooDeep { slots, fanout })?;
            height += 1;
        }
        Ok(EpochConfig { epoch_id, epoch_len, delta, fanout, slots, height: height as u8 })
    }

    /// Same geometry, different epoch.
    pub fn with_epoch(&self, epoch_id: u64) -> Self {
        EpochConfig { epoch_id, ..*self }
    }

    pub fn epoch_id(&self) -> u64 {
        self.epoch_id
    }

    pub fn epoch_len(&self) -> u64 {
        self.epoch_len
    }

    pub fn delta(&self) -> u64 {
        self.delta
    }

    pub fn fanout(&self) -> u32 {
        self.fanout
    }

    /// Number of real slots `T`.
    pub fn slots(&self) -> u64 {
        self.slots
    }

    /// `ceil(log_fanout(T))`; leaves live at this level.
    pub fn height(&self) -> u8 {
        self.height
    }

    pub fn root(&self) -> NodeLabel {
        NodeLabel { epoch_id: self.epoch_id, level: 0, index: 0 }
    }

    pub fn leaf(&self, slot: u64) -> Result<NodeLabel, TreeError> {
        self.check_slot(slot)?;
        Ok(NodeLabel { epoch_id: self.epoch_id, level: self.height, index: slot })
    }

    fn check_slot(&self, slot: u64) -> Result<(), TreeError> {
        if slot >= self.slots {
            return Err(TreeError::SlotOutOfRange { slot, slots: self.slots });
        }
        Ok(())
    }

    /// Number of (virtual) leaves under one node at `level`.
    fn span(&self, level: u8) -> u64 {
        (self.fanout as u64).pow((self.height - level) as u32)
    }

    /// Real leaf slots under `label`, or `None` when the node does not exist.
    pub fn leaf_range(&self, label: &NodeLabel) -> Option<SlotRange> {
        if label.epoch_id != self.epoch_id || label.level > self.height {
            return None;
        }
        let width = (self.fanout as u64).pow(label.level as u32);
        if label.index >= width {
            return None;
        }
        let span = self.span(label.level);
        let first = label.index * span;
        if first >= self.slots {
            return None;
        }
        let last = (first + span - 1).min(self.slots - 1);
        Some(SlotRange { first, last })
    }

    pub fn contains(&self, label: &NodeLabel) -> bool {
        self.leaf_range(label).is_some()
    }

    /// Slot containing second `offset` of the epoch.
    pub fn slot_at(&self, offset_secs: u64) -> Option<u64> {
        let slot = offset_secs / self.delta;
        (slot < self.slots).then_some(slot)
    }

    pub fn full_range(&self) -> SlotRange {
        SlotRange { first: 0, last: self.slots - 1 }
    }
}

/// Tree node identity. `e`, `e0`, `e01` in the familiar notation correspond to
/// `(level 0, index 0)`, `(1, 0)`, `(2, 1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeLabel {
    pub epoch_id: u64,
    pub level: u8,
    pub index: u64,
}

pub const LABEL_BYTES: usize = 17;

impl NodeLabel {
    /// `epoch_id u64 BE ‖ level u8 ‖ index u64 BE`; this is what latchkeys sign.
    pub fn canonical_bytes(&self) -> [u8; LABEL_BYTES] {
        let mut out = [0u8; LABEL_BYTES];
        out[..8].copy_from_slice(&self.epoch_id.to_be_bytes());
        out[8] = self.level;
        out[9..].copy_from_slice(&self.index.to_be_bytes());
        out
    }

    /// Digit-string notation for a given fanout (`e`, `e0`, `e01`, ...).
    pub fn notation(&self, fanout: u32) -> String {
        let mut digits = Vec::with_capacity(self.level as usize);
        let mut idx = self.index;
        for _ in 0..self.level {
            let d = (idx % fanout as u64) as u32;
            digits.push(std::char::from_digit(d, 36).unwrap_or('?'));
            idx /= fanout as u64;
        }
        digits.reverse();
        let mut s = String::from("e");
        s.extend(digits);
        s
    }
}

impl fmt::Display for NodeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/L{}#{}", self.epoch_id, self.level, self.index)
    }
}

/// Inclusive slot range.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SlotRange {
    pub first: u64,
    pub last: u64,
}

impl SlotRange {
    pub fn new(cfg: &EpochConfig, first: u64, last: u64) -> Result<Self, TreeError> {
        if first > last || last >= cfg.slots() {
            return Err(TreeError::BadRange { first, last, slots: cfg.slots() });
        }
        Ok(SlotRange { first, last })
    }

    /// `[rts, T-1]`.
    pub fn suffix(cfg: &EpochConfig, rts: u64) -> Result<Self, TreeError> {
        Self::new(cfg, rts, cfg.slots().saturating_sub(1))
    }

    pub fn contains(&self, slot: u64) -> bool {
        self.first <= slot && slot <= self.last
    }

    pub fn covers(&self, other: &SlotRange) -> bool {
        self.first <= other.first && other.last <= self.last
    }

    pub fn len(&self) -> u64 {
        self.last - self.first + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn slots(&self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }
}

pub fn tree_height(cfg: &EpochConfig) -> u8 {
    cfg.height()
}

/// Labels from the leaf of `slot` up to the root (length `height + 1`).
pub fn path_to_root(cfg: &EpochConfig, slot: u64) -> Result<Vec<NodeLabel>, TreeError> {
    let mut node = cfg.leaf(slot)?;
    let mut path = Vec::with_capacity(cfg.height() as usize + 1);
    path.push(node);
    while let Some(parent) = parent_label(cfg, &node) {
        path.push(parent);
        node = parent;
    }
    Ok(path)
}

pub fn parent_label(cfg: &EpochConfig, label: &NodeLabel) -> Option<NodeLabel> {
    if label.level == 0 || !cfg.contains(label) {
        return None;
    }
    Some(NodeLabel { epoch_id: label.epoch_id, level: label.level - 1, index: label.index / cfg.fanout() as u64 })
}

/// Existing children of `label` (virtual subtrees are skipped).
pub fn children(cfg: &EpochConfig, label: &NodeLabel) -> Vec<NodeLabel> {
    if label.level >= cfg.height() || !cfg.contains(label) {
        return Vec::new();
    }
    let d = cfg.fanout() as u64;
    (0..d)
        .map(|c| NodeLabel { epoch_id: label.epoch_id, level: label.level + 1, index: label.index * d + c })
        .filter(|child| cfg.contains(child))
        .collect()
}

/// `label` and all of its existing descendants.
pub fn labels_under(cfg: &EpochConfig, label: &NodeLabel) -> Result<BTreeSet<NodeLabel>, TreeError> {
    if !cfg.contains(label) {
        return Err(TreeError::ForeignLabel(*label));
    }
    let mut out = BTreeSet::new();
    let mut stack = vec![*label];
    while let Some(node) = stack.pop() {
        stack.extend(children(cfg, &node));
        out.insert(node);
    }
    Ok(out)
}

/// Minimal label set whose subtrees cover exactly the slots in `range`.
///
/// A node is used iff all of its real leaves are in the range and its parent's
/// are not. This is the fixpoint of repeatedly replacing complete sibling
/// groups by their parent, computed top-down so it costs `O(d * height)` nodes
/// instead of touching every leaf.
pub fn safe_cover(cfg: &EpochConfig, range: &SlotRange) -> Result<BTreeSet<NodeLabel>, TreeError> {
    SlotRange::new(cfg, range.first, range.last)?;
    let mut cover = BTreeSet::new();
    let mut stack = vec![cfg.root()];
    while let Some(node) = stack.pop() {
        let Some(leaves) = cfg.leaf_range(&node) else { continue };
        if leaves.last < range.first || leaves.first > range.last {
            continue;
        }
        if range.covers(&leaves) {
            cover.insert(node);
        } else {
            stack.extend(children(cfg, &node));
        }
    }
    Ok(cover)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig3() -> EpochConfig {
        EpochConfig::new(0, 60, 15, 2).unwrap()
    }

    fn lbl(cfg: &EpochConfig, s: &str) -> NodeLabel {
        // "e01" -> level 2, index 0b01
        let digits = &s[1..];
        let index = digits.chars().fold(0u64, |acc, c| acc * cfg.fanout() as u64 + c.to_digit(10).unwrap() as u64);
        NodeLabel { epoch_id: cfg.epoch_id(), level: digits.len() as u8, index }
    }

    fn names(cfg: &EpochConfig, set: impl IntoIterator<Item = NodeLabel>) -> Vec<String> {
        let mut v: Vec<String> = set.into_iter().map(|l| l.notation(cfg.fanout())).collect();
        v.sort();
        v
    }

    #[test]
    fn heights() {
        assert_eq!(tree_height(&fig3()), 2);
        assert_eq!(tree_height(&EpochConfig::new(0, 86_400, 60, 2).unwrap()), 11);
        assert_eq!(tree_height(&EpochConfig::new(0, 10, 10, 2).unwrap()), 0);
        assert_eq!(tree_height(&EpochConfig::new(0, 86_400, 600, 2).unwrap()), 8);
        assert_eq!(EpochConfig::new(0, 86_400, 600, 2).unwrap().slots(), 144);
    }

    #[test]
    fn config_validation() {
        assert_eq!(EpochConfig::new(0, 60, 15, 1), Err(TreeError::Fanout(1)));
        assert_eq!(EpochConfig::new(0, 60, 0, 2), Err(TreeError::SlotDuration));
        assert_eq!(EpochConfig::new(0, 60, 61, 2), Err(TreeError::SlotDuration));
        // partial last slot still counts
        assert_eq!(EpochConfig::new(0, 61, 15, 2).unwrap().slots(), 5);
        assert!(matches!(EpochConfig::new(0, u64::MAX, 1, 2), Err(TreeError::TooDeep { .. })));
    }

    #[test]
    fn figure3_paths() {
        let cfg = fig3();
        assert_eq!(names(&cfg, path_to_root(&cfg, 0).unwrap()), vec!["e", "e0", "e00"]);
        let p = path_to_root(&cfg, 0).unwrap();
        assert_eq!(p[0], lbl(&cfg, "e00"));
        assert_eq!(p[2], cfg.root());
        let p3 = path_to_root(&cfg, 3).unwrap();
        assert_eq!(p3, vec![lbl(&cfg, "e11"), lbl(&cfg, "e1"), lbl(&cfg, "e")]);
        assert_eq!(path_to_root(&cfg, 4), Err(TreeError::SlotOutOfRange { slot: 4, slots: 4 }));
        let single = EpochConfig::new(0, 10, 10, 2).unwrap();
        assert_eq!(path_to_root(&single, 0).unwrap(), vec![single.root()]);
    }

    #[test]
    fn figure3_covers() {
        let cfg = fig3();
        let c = safe_cover(&cfg, &SlotRange::new(&cfg, 1, 3).unwrap()).unwrap();
        assert_eq!(names(&cfg, c), vec!["e01", "e1"]);
        let c = safe_cover(&cfg, &SlotRange::new(&cfg, 0, 3).unwrap()).unwrap();
        assert_eq!(names(&cfg, c), vec!["e"]);
        let c = safe_cover(&cfg, &SlotRange::new(&cfg, 2, 2).unwrap()).unwrap();
        assert_eq!(names(&cfg, c), vec!["e10"]);
    }

    #[test]
    fn descendants_and_parents() {
        let cfg = fig3();
        assert_eq!(names(&cfg, labels_under(&cfg, &lbl(&cfg, "e0")).unwrap()), vec!["e0", "e00", "e01"]);
        assert_eq!(names(&cfg, labels_under(&cfg, &lbl(&cfg, "e11")).unwrap()), vec!["e11"]);
        assert_eq!(labels_under(&cfg, &cfg.root()).unwrap().len(), 7);
        assert_eq!(parent_label(&cfg, &lbl(&cfg, "e01")), Some(lbl(&cfg, "e0")));
        assert_eq!(parent_label(&cfg, &lbl(&cfg, "e1")), Some(cfg.root()));
        assert_eq!(parent_label(&cfg, &cfg.root()), None);
    }

    #[test]
    fn virtual_leaves_do_not_exist() {
        // T = 3 over a 4-leaf tree: e11 is virtual
        let cfg = EpochConfig::new(0, 45, 15, 2).unwrap();
        assert_eq!(cfg.height(), 2);
        assert!(!cfg.contains(&lbl(&cfg, "e11")));
        assert!(cfg.contains(&lbl(&cfg, "e1")));
        assert_eq!(names(&cfg, labels_under(&cfg, &lbl(&cfg, "e1")).unwrap()), vec!["e1", "e10"]);
        let c = safe_cover(&cfg, &SlotRange::new(&cfg, 2, 2).unwrap()).unwrap();
        assert_eq!(names(&cfg, c), vec!["e1"]);
        // T = 5 with fanout 2: height 3, the whole right half beyond slot 4 is virtual
        let cfg = EpochConfig::new(0, 5, 1, 2).unwrap();
        assert_eq!(cfg.height(), 3);
        assert!(!cfg.contains(&NodeLabel { epoch_id: 0, level: 2, index: 3 }));
        assert_eq!(labels_under(&cfg, &cfg.root()).unwrap().len(), 5 + 3 + 2 + 1);
    }

    #[test]
    fn canonical_bytes_layout() {
        let l = NodeLabel { epoch_id: 0x0102, level: 3, index: 5 };
        let b = l.canonical_bytes();
        assert_eq!(&b[..8], &[0, 0, 0, 0, 0, 0, 1, 2]);
        assert_eq!(b[8], 3);
        assert_eq!(&b[9..], &[0, 0, 0, 0, 0, 0, 0, 5]);
    }

    /// Brute-force oracle: leaf set, then replace complete sibling groups by
    /// their parent until nothing changes.
    fn bottom_up_cover(cfg: &EpochConfig, range: &SlotRange) -> BTreeSet<NodeLabel> {
        let mut set: BTreeSet<NodeLabel> = range.slots().map(|s| cfg.leaf(s).unwrap()).collect();
        loop {
            let mut changed = false;
            let snapshot: Vec<NodeLabel> = set.iter().copied().collect();
            for node in snapshot {
                if !set.contains(&node) {
                    continue;
                }
                let Some(parent) = parent_label(cfg, &node) else { continue };
                let sibs = children(cfg, &parent);
                if sibs.iter().all(|s| set.contains(s)) {
                    for s in &sibs {
                        set.remove(s);
                    }
                    set.insert(parent);
                    changed = true;
                }
            }
            if !changed {
                return set;
            }
        }
    }

    fn check_cover_properties(cfg: &EpochConfig) {
        let t = cfg.slots();
        let paths: Vec<Vec<NodeLabel>> = (0..t).map(|s| path_to_root(cfg, s).unwrap()).collect();
        for first in 0..t {
            for last in first..t {
                let range = SlotRange::new(cfg, first, last).unwrap();
                let cover = safe_cover(cfg, &range).unwrap();
                for (s, path) in paths.iter().enumerate() {
                    let hit = path.iter().any(|l| cover.contains(l));
                    assert_eq!(
                        hit,
                        range.contains(s as u64),
                        "T={t} d={} range {first}..={last} slot {s}",
                        cfg.fanout()
                    );
                }
                // minimality: no cover member's parent has all real leaves in range
                for node in &cover {
                    if let Some(p) = parent_label(cfg, node) {
                        assert!(!range.covers(&cfg.leaf_range(&p).unwrap()));
                    }
                }
                assert_eq!(cover, bottom_up_cover(cfg, &range));
                if cover.contains(&cfg.root()) {
                    assert_eq!(range, cfg.full_range());
                }
            }
        }
    }

    #[test]
    fn cover_exhaustive_small_trees() {
        for d in 2..=4u32 {
            for t in 1..=40u64 {
                check_cover_properties(&EpochConfig::new(0, t, 1, d).unwrap());
            }
        }
    }

    #[test]
    fn suffix_cover_is_logarithmic_binary() {
        for t in 1..=512u64 {
            let cfg = EpochConfig::new(0, t, 1, 2).unwrap();
            let h = cfg.height().max(1) as usize;
            for rts in 0..t {
                let c = safe_cover(&cfg, &SlotRange::suffix(&cfg, rts).unwrap()).unwrap();
                assert!(c.len() <= h, "T={t} rts={rts} |cover|={}", c.len());
            }
        }
    }

    #[test]
    fn labels_do_not_depend_on_children() {
        let a = EpochConfig::new(3, 64, 1, 2).unwrap();
        let b = EpochConfig::new(3, 64, 1, 2).unwrap();
        assert_eq!(path_to_root(&a, 17).unwrap(), path_to_root(&b, 17).unwrap());
        let root = a.root();
        assert_eq!(root.canonical_bytes(), NodeLabel { epoch_id: 3, level: 0, index: 0 }.canonical_bytes());
    }

    proptest::proptest! {
        #[test]
        fn path_is_parent_chain(t in 1u64..5000, d in 2u32..6, slot_seed in 0u64..u64::MAX) {
            let cfg = EpochConfig::new(1, t, 1, d).unwrap();
            let slot = slot_seed % t;
            let path = path_to_root(&cfg, slot).unwrap();
            proptest::prop_assert_eq!(path.len(), cfg.height() as usize + 1);
            for w in path.windows(2) {
                proptest::prop_assert_eq!(parent_label(&cfg, &w[0]), Some(w[1]));
            }
            proptest::prop_assert_eq!(*path.last().unwrap(), cfg.root());
        }

        #[test]
        fn canonical_bytes_injective(a in (0u64..4, 0u8..20, 0u64..1000), b in (0u64..4, 0u8..20, 0u64..1000)) {
            let la = NodeLabel { epoch_id: a.0, level: a.1, index: a.2 };
            let lb = NodeLabel { epoch_id: b.0, level: b.1, index: b.2 };
            proptest::prop_assert_eq!(la == lb, la.canonical_bytes() == lb.canonical_bytes());
        }
    }
}

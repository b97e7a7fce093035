//! Best-first CART classification trees on Gini impurity and their
//! translation into rule sets.
//!
//! Split scores are compared in exact integer arithmetic so that ties resolve
//! by feature index, then threshold, independently of rounding.

use alloc::boxed::Box;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureSchema, LabeledDataset};
use crate::metrics::Confusion;
use crate::rules::{Condition, Rule, RuleError, RuleSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CartError {
    #[error("max_leaves must be at least 1")]
    InvalidLeafBudget,
    #[error("no training rows")]
    Empty,
    #[error("rows and targets differ in length")]
    LengthMismatch,
    #[error("rows have inconsistent widths")]
    RaggedRows,
    #[error("target {0} is not binary")]
    InvalidTarget(u8),
    #[error(transparent)]
    Rule(#[from] RuleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum TreeNode {
    /// Samples with `x[feature] <= threshold` go left.
    Internal {
        feature: usize,
        threshold: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
    Leaf { label: u8, count: usize },
}

impl TreeNode {
    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut node = self;
        loop {
            match node {
                TreeNode::Leaf { label, .. } => return *label,
                TreeNode::Internal {
                    feature,
                    threshold,
                    left,
                    right,
                } => node = if x[*feature] <= *threshold { left } else { right },
            }
        }
    }

    pub fn n_leaves(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 1,
            TreeNode::Internal { left, right, .. } => left.n_leaves() + right.n_leaves(),
        }
    }

    pub fn depth(&self) -> usize {
        match self {
            TreeNode::Leaf { .. } => 0,
            TreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CartTree {
    pub root: TreeNode,
    pub n_features: usize,
    /// All targets were the same class.
    pub degenerate: bool,
}

impl CartTree {
    pub fn predict(&self, x: &[f64]) -> u8 {
        self.root.predict(x)
    }

    pub fn n_leaves(&self) -> usize {
        self.root.n_leaves()
    }
}

/// Non-negative rational `num / den`.
#[derive(Debug, Clone, Copy)]
struct Frac {
    num: u128,
    den: u128,
}

impl Frac {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.num * other.den).cmp(&(other.num * self.den))
    }
}

/// `(p^2 + q^2) / n`, which grows as a node gets purer.
fn purity(pos: usize, n: usize) -> (u128, u128) {
    let (p, q) = (pos as u128, (n - pos) as u128);
    (p * p + q * q, n as u128)
}

/// Decrease in count-weighted Gini impurity when the node splits into `l` and `r`.
fn split_gain(pos_l: usize, n_l: usize, pos_r: usize, n_r: usize) -> Frac {
    let (a, b) = purity(pos_l, n_l);
    let (c, d) = purity(pos_r, n_r);
    let (e, n) = purity(pos_l + pos_r, n_l + n_r);
    let children = (a * d + c * b) * n;
    let parent = e * b * d;
    Frac {
        num: children.saturating_sub(parent),
        den: b * d * n,
    }
}

#[derive(Debug, Clone, Copy)]
struct Split {
    feature: usize,
    threshold: f64,
    gain: Frac,
}

fn best_split(rows: &[&[f64]], targets: &[u8], idx: &[usize], n_features: usize) -> Option<Split> {
    let n = idx.len();
    let total_pos = idx.iter().filter(|&&i| targets[i] == 1).count();
    if total_pos == 0 || total_pos == n {
        return None;
    }
    let mut best: Option<Split> = None;
    let mut order = idx.to_vec();
    for f in 0..n_features {
        order.sort_by(|&a, &b| rows[a][f].total_cmp(&rows[b][f]));
        let mut pos_l = 0;
        for k in 0..n - 1 {
            pos_l += usize::from(targets[order[k]] == 1);
            let (lo, hi) = (rows[order[k]][f], rows[order[k + 1]][f]);
            if lo == hi {
                continue;
            }
            let gain = split_gain(pos_l, k + 1, total_pos - pos_l, n - k - 1);
            // features and thresholds are visited in increasing order, so a
            // strict comparison keeps the earliest of tied candidates
            if best.map_or(gain.num > 0, |b| gain.cmp(&b.gain) == Ordering::Greater) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Split {
                    feature: f,
                    threshold,
                    gain,
                });
            }
        }
    }
    best
}

fn majority(targets: &[u8], idx: &[usize]) -> u8 {
    let pos = idx.iter().filter(|&&i| targets[i] == 1).count();
    u8::from(2 * pos > idx.len())
}

enum Slot {
    Open(Vec<usize>),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// Grows a tree best-first: the leaf whose split removes the most impurity is
/// expanded next, until `max_leaves` leaves exist or no split helps. Ties go
/// to the leaf created first.
pub fn fit_cart<R: AsRef<[f64]>>(rows: &[R], targets: &[u8], max_leaves: usize) -> Result<CartTree, CartError> {
    if max_leaves == 0 {
        return Err(CartError::InvalidLeafBudget);
    }
    if rows.is_empty() {
        return Err(CartError::Empty);
    }
    if rows.len() != targets.len() {
        return Err(CartError::LengthMismatch);
    }
    if let Some(&t) = targets.iter().find(|&&t| t > 1) {
        return Err(CartError::InvalidTarget(t));
    }
    let rows: Vec<&[f64]> = rows.iter().map(AsRef::as_ref).collect();
    let m = rows[0].len();
    if rows.iter().any(|r| r.len() != m) {
        return Err(CartError::RaggedRows);
    }
    let degenerate = targets.iter().all(|&t| t == targets[0]);

    let mut slots = vec![Slot::Open((0..rows.len()).collect())];
    // candidate splits of currently open leaves, by slot index
    let mut frontier: Vec<(usize, Split)> = Vec::new();
    if let Some(s) = best_split(&rows, targets, &(0..rows.len()).collect::<Vec<_>>(), m) {
        frontier.push((0, s));
    }
    let mut leaves = 1;
    while leaves < max_leaves && !frontier.is_empty() {
        let mut pick = 0;
        for k in 1..frontier.len() {
            if frontier[k].1.gain.cmp(&frontier[pick].1.gain) == Ordering::Greater {
                pick = k;
            }
        }
        let (slot, split) = frontier.remove(pick);
        let Slot::Open(idx) = core::mem::replace(&mut slots[slot], Slot::Open(Vec::new())) else {
            unreachable!("frontier only holds open slots");
        };
        let (l_idx, r_idx): (Vec<usize>, Vec<usize>) =
            idx.iter().partition(|&&i| rows[i][split.feature] <= split.threshold);
        let (l, r) = (slots.len(), slots.len() + 1);
        for (k, child) in [(l, &l_idx), (r, &r_idx)] {
            if let Some(s) = best_split(&rows, targets, child, m) {
                frontier.push((k, s));
            }
        }
        slots.push(Slot::Open(l_idx));
        slots.push(Slot::Open(r_idx));
        slots[slot] = Slot::Split {
            feature: split.feature,
            threshold: split.threshold,
            left: l,
            right: r,
        };
        leaves += 1;
    }

    fn build(slots: &mut [Slot], k: usize, targets: &[u8]) -> TreeNode {
        match core::mem::replace(&mut slots[k], Slot::Open(Vec::new())) {
            Slot::Open(idx) => TreeNode::Leaf {
                label: majority(targets, &idx),
                count: idx.len(),
            },
            Slot::Split {
                feature,
                threshold,
                left,
                right,
            } => TreeNode::Internal {
                feature,
                threshold,
                left: Box::new(build(slots, left, targets)),
                right: Box::new(build(slots, right, targets)),
            },
        }
    }
    Ok(CartTree {
        root: build(&mut slots, 0, targets),
        n_features: m,
        degenerate,
    })
}

/// Rules extracted from a tree, one per leaf in left-to-right order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurrogateRuleSet {
    pub rules: RuleSet,
    pub n_rules: usize,
    pub degenerate: bool,
}

/// Turns every root-to-leaf path into a rule. Repeated splits on one feature
/// are intersected; open sides are closed with the observed range of `data`.
/// The left branch keeps `<= t` and the right `> t`, so rule evaluation
/// reproduces the tree exactly.
pub fn tree_to_rules(tree: &CartTree, data: &LabeledDataset) -> Result<SurrogateRuleSet, CartError> {
    tree_to_rules_with(tree, data.schema(), data.bounds())
}

pub fn tree_to_rules_with(
    tree: &CartTree,
    schema: &FeatureSchema,
    bounds: &[(f64, f64)],
) -> Result<SurrogateRuleSet, CartError> {
    let mut rules = Vec::new();
    let mut path = Vec::new();
    collect_paths(&tree.root, schema, &mut path, &mut rules)?;
    let raw = RuleSet::new(["0", "1"], rules)?;
    let rules = raw.complete_bounds_with(schema, bounds)?;
    Ok(SurrogateRuleSet {
        n_rules: rules.len(),
        rules,
        degenerate: tree.degenerate,
    })
}

fn collect_paths(
    node: &TreeNode,
    schema: &FeatureSchema,
    path: &mut Vec<Condition>,
    out: &mut Vec<Rule>,
) -> Result<(), CartError> {
    match node {
        TreeNode::Leaf { label, .. } => {
            let name = format!("leaf{}", out.len() + 1);
            out.push(Rule::new(&name, path.clone(), *label)?);
        }
        TreeNode::Internal {
            feature,
            threshold,
            left,
            right,
        } => {
            let name = schema.name(*feature);
            path.push(Condition::at_most(name, *threshold));
            collect_paths(left, schema, path, out)?;
            path.pop();
            path.push(Condition::greater_than(name, *threshold));
            collect_paths(right, schema, path, out)?;
            path.pop();
        }
    }
    Ok(())
}

/// Agreement of a rule set with black-box labels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fidelity {
    pub accuracy: f64,
    /// Positive-class F1; absent when neither side predicts class 1.
    pub f1: Option<f64>,
    pub f1_macro: Option<f64>,
    /// Rows on which no rule fired.
    pub uncovered: usize,
}

pub fn fidelity<R: AsRef<[f64]>>(
    rules: &RuleSet,
    schema: &FeatureSchema,
    rows: &[R],
    blackbox: &[u8],
) -> Result<Fidelity, CartError> {
    if rows.len() != blackbox.len() {
        return Err(CartError::LengthMismatch);
    }
    if rows.is_empty() {
        return Err(CartError::Empty);
    }
    let bound = rules.bind(schema)?;
    let mut uncovered = 0;
    let preds: Vec<u8> = rows
        .iter()
        .zip(blackbox)
        .map(|(row, &b)| {
            bound.evaluate(row.as_ref()).unwrap_or_else(|| {
                uncovered += 1;
                1 - b
            })
        })
        .collect();
    if uncovered > 0 {
        log::warn!("{uncovered} rows not covered by any surrogate rule");
    }
    let c = Confusion::from_labels(blackbox, &preds);
    Ok(Fidelity {
        accuracy: c.accuracy().unwrap_or(0.0),
        f1: c.f1(),
        f1_macro: c.f1_macro(),
        uncovered,
    })
}

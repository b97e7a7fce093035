//! Threshold discretisation of the feature space and binary encoding of rules
//! and per-sample local explanations.
//!
//! The thresholds of feature `v` are the sorted union of every lower and upper
//! bound that appears on `v` across a family of rule sets. Consecutive
//! thresholds delimit the intervals of `v`; a rule is encoded with one bit per
//! interval, set when the interval lies inside the rule's condition on `v` (or
//! when the rule has no condition on `v`). The per-feature segments are
//! concatenated in dataset feature order.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{FeatureSchema, LabeledDataset};
use crate::rules::{Rule, RuleError, RuleSet};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum VectorizeError {
    #[error("unknown variable `{0}`")]
    UnknownVariable(String),
    #[error("rule `{rule}` has an open bound on `{variable}`; complete bounds first")]
    IncompleteBounds { rule: String, variable: String },
    #[error("bound {value} of rule `{rule}` on `{variable}` is not a threshold of the map")]
    ThresholdMismatch {
        rule: String,
        variable: String,
        value: f64,
    },
    #[error(transparent)]
    Rule(#[from] RuleError),
}

/// Ordered thresholds per feature (dataset feature order).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscretizationMap {
    pub features: Vec<String>,
    pub thresholds: Vec<Vec<f64>>,
}

impl DiscretizationMap {
    pub fn empty(schema: &FeatureSchema) -> Self {
        Self {
            features: schema.names().to_vec(),
            thresholds: alloc::vec![Vec::new(); schema.len()],
        }
    }

    /// Number of intervals of feature `k`.
    pub fn segment_len(&self, k: usize) -> usize {
        self.thresholds[k].len().saturating_sub(1)
    }

    /// Total vector length `w`.
    pub fn width(&self) -> usize {
        (0..self.thresholds.len()).map(|k| self.segment_len(k)).sum()
    }

    pub fn thresholds_of(&self, name: &str) -> Option<&[f64]> {
        self.features
            .iter()
            .position(|f| f == name)
            .map(|k| self.thresholds[k].as_slice())
    }

    fn contains(&self, k: usize, v: f64) -> bool {
        self.thresholds[k]
            .binary_search_by(|t| t.total_cmp(&v))
            .is_ok()
    }
}

/// Sorted, deduplicated union of all bounds per feature across `rulesets`.
pub fn collect_thresholds(
    rulesets: &[&RuleSet],
    schema: &FeatureSchema,
) -> Result<DiscretizationMap, VectorizeError> {
    let mut map = DiscretizationMap::empty(schema);
    for rs in rulesets {
        for rule in &rs.rules {
            for c in &rule.conditions {
                let k = schema
                    .index_of(&c.variable)
                    .ok_or_else(|| VectorizeError::UnknownVariable(c.variable.clone()))?;
                let (lo, hi) = c.interval().ok_or_else(|| VectorizeError::IncompleteBounds {
                    rule: rule.name.clone(),
                    variable: c.variable.clone(),
                })?;
                map.thresholds[k].push(lo);
                map.thresholds[k].push(hi);
            }
        }
    }
    for t in &mut map.thresholds {
        t.sort_by(f64::total_cmp);
        t.dedup();
    }
    Ok(map)
}

/// Fixed-length bit vector.
#[derive(Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ExplanationVector {
    len: usize,
    words: Vec<u64>,
}

impl ExplanationVector {
    pub fn zeros(len: usize) -> Self {
        Self {
            len,
            words: alloc::vec![0; len.div_ceil(64)],
        }
    }

    pub fn ones(len: usize) -> Self {
        let mut v = Self::zeros(len);
        (0..len).for_each(|i| v.set(i, true));
        v
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut v = Self::zeros(bits.len());
        for (i, &b) in bits.iter().enumerate() {
            v.set(i, b);
        }
        v
    }

    /// Parses a string of `0` and `1` characters.
    pub fn parse(bits: &str) -> Option<Self> {
        let bits: Option<Vec<bool>> = bits
            .chars()
            .map(|c| match c {
                '0' => Some(false),
                '1' => Some(true),
                _ => None,
            })
            .collect();
        Some(Self::from_bits(&bits?))
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> bool {
        assert!(i < self.len);
        self.words[i / 64] >> (i % 64) & 1 == 1
    }

    pub fn set(&mut self, i: usize, bit: bool) {
        assert!(i < self.len);
        let mask = 1u64 << (i % 64);
        if bit {
            self.words[i / 64] |= mask;
        } else {
            self.words[i / 64] &= !mask;
        }
    }

    pub fn count_ones(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    /// Number of positions set in both vectors.
    pub fn and_count(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a & b).count_ones() as usize)
            .sum()
    }

    /// Number of positions where the vectors differ.
    pub fn hamming(&self, other: &Self) -> usize {
        self.words
            .iter()
            .zip(&other.words)
            .map(|(a, b)| (a ^ b).count_ones() as usize)
            .sum()
    }

    pub fn complement(&self) -> Self {
        let mut out = self.clone();
        (0..self.len).for_each(|i| out.set(i, !self.get(i)));
        out
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|i| self.get(i))
    }
}

impl fmt::Display for ExplanationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for b in self.bits() {
            f.write_str(if b { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for ExplanationVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "ExplanationVector({self})")
    }
}

/// Encodes `rule` against `dmap`. Bounds must be complete and present in the map.
pub fn vectorize_rule(
    rule: &Rule,
    dmap: &DiscretizationMap,
    schema: &FeatureSchema,
) -> Result<ExplanationVector, VectorizeError> {
    let mut per_feature: Vec<Option<(f64, f64)>> = alloc::vec![None; dmap.thresholds.len()];
    for c in &rule.conditions {
        let k = schema
            .index_of(&c.variable)
            .ok_or_else(|| VectorizeError::UnknownVariable(c.variable.clone()))?;
        let (lo, hi) = c.interval().ok_or_else(|| VectorizeError::IncompleteBounds {
            rule: rule.name.clone(),
            variable: c.variable.clone(),
        })?;
        for v in [lo, hi] {
            if !dmap.contains(k, v) {
                return Err(VectorizeError::ThresholdMismatch {
                    rule: rule.name.clone(),
                    variable: c.variable.clone(),
                    value: v,
                });
            }
        }
        let merged = match per_feature[k] {
            Some((a, b)) => (a.max(lo), b.min(hi)),
            None => (lo, hi),
        };
        per_feature[k] = Some(merged);
    }

    let mut out = ExplanationVector::zeros(dmap.width());
    let mut pos = 0;
    for (k, t) in dmap.thresholds.iter().enumerate() {
        for w in t.windows(2) {
            let bit = match per_feature[k] {
                None => true,
                Some((lo, hi)) => lo <= w[0] && w[1] <= hi,
            };
            out.set(pos, bit);
            pos += 1;
        }
    }
    Ok(out)
}

/// Per-sample local explanations of one rule set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LocalExplanations {
    /// Vector of each rule, in rule order.
    pub rule_vectors: Vec<ExplanationVector>,
    /// Index of the rule explaining each sample, `None` when no rule fires.
    pub assigned: Vec<Option<usize>>,
    /// Samples satisfied by more than one rule (resolved by rule order).
    pub multi_matches: usize,
}

impl LocalExplanations {
    pub fn len(&self) -> usize {
        self.assigned.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assigned.is_empty()
    }

    pub fn get(&self, sample: usize) -> Option<&ExplanationVector> {
        self.assigned[sample].map(|j| &self.rule_vectors[j])
    }

    pub fn rule_of(&self, sample: usize) -> Option<usize> {
        self.assigned[sample]
    }
}

/// Assigns to every row of `data` the vector of the rule it satisfies.
///
/// Rule satisfaction uses the same bound semantics as rule evaluation, so the
/// assigned rule is always the one evaluation would fire.
pub fn assign_local_explanations(
    rs: &RuleSet,
    data: &LabeledDataset,
    dmap: &DiscretizationMap,
) -> Result<LocalExplanations, VectorizeError> {
    let rule_vectors = rs
        .rules
        .iter()
        .map(|r| vectorize_rule(r, dmap, data.schema()))
        .collect::<Result<Vec<_>, _>>()?;
    let bound = rs.bind(data.schema())?;
    let mut multi_matches = 0;
    let assigned = data
        .rows()
        .map(|row| {
            let mut hits = bound.matching(row);
            let first = hits.next();
            if first.is_some() && hits.next().is_some() {
                multi_matches += 1;
            }
            first
        })
        .collect();
    if multi_matches > 0 {
        log::warn!("{multi_matches} samples satisfy more than one rule; first match used");
    }
    Ok(LocalExplanations {
        rule_vectors,
        assigned,
        multi_matches,
    })
}

/// Indices where every rule set provides an explanation.
pub fn restrict_to_common(assignments: &[&LocalExplanations]) -> Vec<usize> {
    let Some(first) = assignments.first() else {
        return Vec::new();
    };
    (0..first.len())
        .filter(|&s| assignments.iter().all(|a| a.assigned[s].is_some()))
        .collect()
}

/// Debug view of a map and the rule vectors it produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VectorDump {
    pub thresholds: Vec<(String, Vec<f64>)>,
    pub width: usize,
    pub rules: Vec<RuleBits>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RuleBits {
    pub ruleset: String,
    pub rule: String,
    pub bits: String,
}

pub fn dump(
    dmap: &DiscretizationMap,
    rulesets: &[(&str, &RuleSet)],
    schema: &FeatureSchema,
) -> Result<VectorDump, VectorizeError> {
    let mut rules = Vec::new();
    for (name, rs) in rulesets {
        for r in &rs.rules {
            rules.push(RuleBits {
                ruleset: name.to_string(),
                rule: r.name.clone(),
                bits: vectorize_rule(r, dmap, schema)?.to_string(),
            });
        }
    }
    Ok(VectorDump {
        thresholds: dmap
            .features
            .iter()
            .cloned()
            .zip(dmap.thresholds.iter().cloned())
            .collect(),
        width: dmap.width(),
        rules,
    })
}

//! Similarity of binary explanation vectors and its aggregation over samples,
//! rule-set pairs and families of model instances.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::vectorize::{ExplanationVector, LocalExplanations};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimilarityError {
    #[error("vector lengths differ: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("vectors have length zero")]
    ZeroLength,
    #[error("no samples to compare")]
    EmptyDomain,
    #[error("at least two rule sets are required, got {0}")]
    TooFewRuleSets(usize),
    #[error("sample {0} has no explanation in every rule set")]
    NotCovered(usize),
    #[error("unknown similarity `{0}`")]
    UnknownKind(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SimilarityKind {
    Xnor,
    Jaccard,
    Cosine,
    Dice,
}

impl SimilarityKind {
    pub const ALL: [SimilarityKind; 4] = [Self::Xnor, Self::Jaccard, Self::Cosine, Self::Dice];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Xnor => "xnor",
            Self::Jaccard => "jaccard",
            Self::Cosine => "cosine",
            Self::Dice => "dice",
        }
    }
}

impl fmt::Display for SimilarityKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SimilarityKind {
    type Err = SimilarityError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| SimilarityError::UnknownKind(s.to_string()))
    }
}

/// Similarity of two equal-length vectors.
///
/// When both vectors are all zero, Jaccard, Cosine and Dice return 1; when
/// exactly one is, they return 0.
pub fn vector_similarity(
    kind: SimilarityKind,
    a: &ExplanationVector,
    b: &ExplanationVector,
) -> Result<f64, SimilarityError> {
    if a.len() != b.len() {
        return Err(SimilarityError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(SimilarityError::ZeroLength);
    }
    let w = a.len() as f64;
    let inter = a.and_count(b) as f64;
    let (na, nb) = (a.count_ones() as f64, b.count_ones() as f64);
    if kind == SimilarityKind::Xnor {
        return Ok((w - a.hamming(b) as f64) / w);
    }
    if na == 0.0 || nb == 0.0 {
        return Ok(if na == nb { 1.0 } else { 0.0 });
    }
    Ok(match kind {
        SimilarityKind::Jaccard => inter / (na + nb - inter),
        SimilarityKind::Cosine => inter / libm::sqrt(na * nb),
        SimilarityKind::Dice => 2.0 * inter / (na + nb),
        SimilarityKind::Xnor => unreachable!(),
    })
}

/// Mean per-sample similarity between two rule sets' explanations over `indices`.
///
/// Samples are grouped by the pair of rules explaining them, so each distinct
/// rule pair is scored once.
pub fn ruleset_similarity(
    kind: SimilarityKind,
    a: &LocalExplanations,
    b: &LocalExplanations,
    indices: &[usize],
) -> Result<f64, SimilarityError> {
    if indices.is_empty() {
        return Err(SimilarityError::EmptyDomain);
    }
    let (na, nb) = (a.rule_vectors.len(), b.rule_vectors.len());
    let mut counts = alloc::vec![0usize; na * nb];
    for &s in indices {
        match (a.rule_of(s), b.rule_of(s)) {
            (Some(i), Some(j)) => counts[i * nb + j] += 1,
            _ => return Err(SimilarityError::NotCovered(s)),
        }
    }
    let mut total = 0.0;
    for (idx, &c) in counts.iter().enumerate() {
        if c > 0 {
            let (i, j) = (idx / nb, idx % nb);
            total += c as f64 * vector_similarity(kind, &a.rule_vectors[i], &b.rule_vectors[j])?;
        }
    }
    Ok(total / indices.len() as f64)
}

/// Mean of [`ruleset_similarity`] over every unordered pair of rule sets.
pub fn multiset_similarity(
    kind: SimilarityKind,
    sets: &[&LocalExplanations],
    indices: &[usize],
) -> Result<f64, SimilarityError> {
    if sets.len() < 2 {
        return Err(SimilarityError::TooFewRuleSets(sets.len()));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for f in 0..sets.len() {
        for g in 0..f {
            total += ruleset_similarity(kind, sets[f], sets[g], indices)?;
            pairs += 1;
        }
    }
    Ok(total / pairs as f64)
}

/// Symmetric matrix of pairwise rule-set similarities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RobustnessMatrix {
    pub kind: SimilarityKind,
    pub size: usize,
    pub entries: Vec<f64>,
}

impl RobustnessMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.size + j]
    }

    /// Mean of the strict upper triangle.
    pub fn off_diagonal_mean(&self) -> f64 {
        let mut total = 0.0;
        let mut n = 0usize;
        for i in 0..self.size {
            for j in i + 1..self.size {
                total += self.get(i, j);
                n += 1;
            }
        }
        if n == 0 {
            1.0
        } else {
            total / n as f64
        }
    }

    /// Mean over every entry, diagonal included.
    pub fn full_mean(&self) -> f64 {
        self.entries.iter().sum::<f64>() / self.entries.len() as f64
    }

    pub fn rows(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.entries.chunks_exact(self.size.max(1))
    }
}

pub fn robustness_matrix(
    kind: SimilarityKind,
    instances: &[&LocalExplanations],
    indices: &[usize],
) -> Result<RobustnessMatrix, SimilarityError> {
    if indices.is_empty() {
        return Err(SimilarityError::EmptyDomain);
    }
    let n = instances.len();
    let mut entries = alloc::vec![1.0; n * n];
    for i in 0..n {
        for j in i + 1..n {
            let s = ruleset_similarity(kind, instances[i], instances[j], indices)?;
            entries[i * n + j] = s;
            entries[j * n + i] = s;
        }
    }
    Ok(RobustnessMatrix {
        kind,
        size: n,
        entries,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairScore {
    pub a: String,
    pub b: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityReport {
    pub kind: SimilarityKind,
    pub pair_scores: Vec<PairScore>,
    pub overall: f64,
    pub n_samples: usize,
}

impl SimilarityReport {
    /// Scores every unordered pair of the named rule sets over `indices`.
    pub fn compute(
        kind: SimilarityKind,
        sets: &[(&str, &LocalExplanations)],
        indices: &[usize],
    ) -> Result<Self, SimilarityError> {
        if sets.len() < 2 {
            return Err(SimilarityError::TooFewRuleSets(sets.len()));
        }
        let mut pair_scores = Vec::new();
        for f in 0..sets.len() {
            for g in f + 1..sets.len() {
                pair_scores.push(PairScore {
                    a: sets[f].0.to_string(),
                    b: sets[g].0.to_string(),
                    score: ruleset_similarity(kind, sets[f].1, sets[g].1, indices)?,
                });
            }
        }
        let overall = pair_scores.iter().map(|p| p.score).sum::<f64>() / pair_scores.len() as f64;
        Ok(Self {
            kind,
            pair_scores,
            overall,
            n_samples: indices.len(),
        })
    }

    pub fn score(&self, a: &str, b: &str) -> Option<f64> {
        self.pair_scores
            .iter()
            .find(|p| (p.a == a && p.b == b) || (p.a == b && p.b == a))
            .map(|p| p.score)
    }
}

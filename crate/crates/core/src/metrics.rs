//! Binary classification metrics and the protocol-relative metrics
//! (relative accuracy, relative recall, relative specificity).
//!
//! Relative metrics only look at samples where the protocol is right: RA is the
//! share of those samples that the model also gets right.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("input lengths differ")]
    LengthMismatch,
    #[error("probability {0} outside [0, 1]")]
    InvalidProbability(f64),
    #[error("label {0} is not binary")]
    InvalidLabel(u8),
    #[error("the protocol is never correct on these samples")]
    ProtocolNeverCorrect,
    #[error("denominator set is empty")]
    EmptyDenominator,
}

/// How `RS` treats samples where the protocol makes no prediction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RsMode {
    /// A missing protocol prediction counts as "not class c".
    Literal,
    /// Only samples where the protocol predicted a class other than c.
    #[default]
    Strict,
}

/// Ground truth, model output and protocol output for the same samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionBundle {
    pub y: Vec<u8>,
    pub p: Vec<f64>,
    pub y_hat: Vec<u8>,
    pub r: Vec<Option<u8>>,
    pub threshold: f64,
}

impl PredictionBundle {
    /// Binarises `p` at `threshold` (`y_hat = 1` iff `p >= threshold`).
    pub fn from_probabilities(
        y: Vec<u8>,
        p: Vec<f64>,
        r: Vec<Option<u8>>,
        threshold: f64,
    ) -> Result<Self, MetricsError> {
        if let Some(&bad) = p.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(MetricsError::InvalidProbability(bad));
        }
        let y_hat = p.iter().map(|&v| u8::from(v >= threshold)).collect();
        Self::validated(Self {
            y,
            p,
            y_hat,
            r,
            threshold,
        })
    }

    /// Hard predictions only; `p` is set to `y_hat`.
    pub fn from_predictions(y: Vec<u8>, y_hat: Vec<u8>, r: Vec<Option<u8>>) -> Result<Self, MetricsError> {
        let p = y_hat.iter().map(|&v| v as f64).collect();
        Self::validated(Self {
            y,
            p,
            y_hat,
            r,
            threshold: 0.5,
        })
    }

    fn validated(b: Self) -> Result<Self, MetricsError> {
        let n = b.y.len();
        if b.p.len() != n || b.y_hat.len() != n || b.r.len() != n {
            return Err(MetricsError::LengthMismatch);
        }
        let labels = b.y.iter().chain(&b.y_hat).chain(b.r.iter().flatten());
        if let Some(&bad) = labels.into_iter().find(|&&v| v > 1) {
            return Err(MetricsError::InvalidLabel(bad));
        }
        Ok(b)
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn confusion(&self) -> Confusion {
        Confusion::from_labels(&self.y, &self.y_hat)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
}

impl Confusion {
    pub fn from_labels(y: &[u8], y_hat: &[u8]) -> Self {
        let mut c = Self::default();
        for (&t, &h) in y.iter().zip(y_hat) {
            match (t, h) {
                (1, 1) => c.tp += 1,
                (0, 1) => c.fp += 1,
                (0, 0) => c.tn += 1,
                _ => c.fn_ += 1,
            }
        }
        c
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }

    pub fn accuracy(&self) -> Option<f64> {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn precision(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fp)
    }

    pub fn recall(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> Option<f64> {
        ratio(self.tn, self.tn + self.fp)
    }

    /// F1 of the positive class.
    pub fn f1(&self) -> Option<f64> {
        ratio(2 * self.tp, 2 * self.tp + self.fp + self.fn_)
    }

    /// Unweighted mean of the F1 scores of both classes.
    pub fn f1_macro(&self) -> Option<f64> {
        let neg = ratio(2 * self.tn, 2 * self.tn + self.fp + self.fn_)?;
        Some((self.f1()? + neg) / 2.0)
    }

    pub fn balanced_accuracy(&self) -> Option<f64> {
        Some((self.recall()? + self.specificity()?) / 2.0)
    }

    pub fn mcc(&self) -> Option<f64> {
        let (tp, fp, tn, fn_) = (
            self.tp as f64,
            self.fp as f64,
            self.tn as f64,
            self.fn_ as f64,
        );
        let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
        if denom == 0.0 {
            return None;
        }
        Some((tp * tn - fp * fn_) / libm::sqrt(denom))
    }
}

fn ratio(num: usize, den: usize) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// Area under the ROC curve via the rank-sum statistic with midranks for ties.
pub fn roc_auc(y: &[u8], scores: &[f64]) -> Option<f64> {
    let n1 = y.iter().filter(|&&v| v == 1).count();
    let n0 = y.len() - n1;
    if n1 == 0 || n0 == 0 {
        return None;
    }
    let mut order: Vec<usize> = (0..y.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            if y[k] == 1 {
                rank_sum_pos += midrank;
            }
        }
        i = j + 1;
    }
    let (n1, n0) = (n1 as f64, n0 as f64);
    Some((rank_sum_pos - n1 * (n1 + 1.0) / 2.0) / (n1 * n0))
}

/// `|{r = y = ŷ}| / |{r = y}|`; a missing protocol prediction never equals `y`.
pub fn relative_accuracy(b: &PredictionBundle) -> Result<f64, MetricsError> {
    let mut num = 0;
    let mut den = 0;
    for i in 0..b.len() {
        if b.r[i] == Some(b.y[i]) {
            den += 1;
            num += usize::from(b.y_hat[i] == b.y[i]);
        }
    }
    ratio(num, den).ok_or(MetricsError::ProtocolNeverCorrect)
}

/// `|{r = y = ŷ = c}| / |{r = y = c}|`.
pub fn relative_recall(b: &PredictionBundle, c: u8) -> Result<f64, MetricsError> {
    let mut num = 0;
    let mut den = 0;
    for i in 0..b.len() {
        if b.y[i] == c && b.r[i] == Some(c) {
            den += 1;
            num += usize::from(b.y_hat[i] == c);
        }
    }
    ratio(num, den).ok_or(MetricsError::EmptyDenominator)
}

/// `|{y ≠ c, r ≠ c, ŷ ≠ c}| / |{y ≠ c, r ≠ c}|`, with `mode` deciding whether a
/// missing protocol prediction satisfies `r ≠ c`.
pub fn relative_specificity(b: &PredictionBundle, c: u8, mode: RsMode) -> Result<f64, MetricsError> {
    let mut num = 0;
    let mut den = 0;
    for i in 0..b.len() {
        let r_not_c = match b.r[i] {
            Some(v) => v != c,
            None => mode == RsMode::Literal,
        };
        if b.y[i] != c && r_not_c {
            den += 1;
            num += usize::from(b.y_hat[i] != c);
        }
    }
    ratio(num, den).ok_or(MetricsError::EmptyDenominator)
}

/// Standard and relative metrics; undefined values are `None`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub mcc: Option<f64>,
    pub f1: Option<f64>,
    pub f1_macro: Option<f64>,
    pub a: Option<f64>,
    pub ba: Option<f64>,
    pub roc_auc: Option<f64>,
    pub p: Option<f64>,
    pub r: Option<f64>,
    pub ra: Option<f64>,
    pub rr: Option<f64>,
    /// Strict reading: only samples the protocol labelled.
    pub rs: Option<f64>,
    pub rs_literal: Option<f64>,
    pub counts: Confusion,
}

/// Metric names used as keys in reports, in table order.
pub const METRIC_NAMES: [&str; 12] = [
    "mcc", "f1", "f1_macro", "a", "ba", "roc_auc", "p", "r", "ra", "rr", "rs", "rs_literal",
];

impl MetricsReport {
    /// Standard metrics with positive class 1; relative fields are left empty.
    pub fn standard(b: &PredictionBundle) -> Self {
        let c = b.confusion();
        Self {
            mcc: c.mcc(),
            f1: c.f1(),
            f1_macro: c.f1_macro(),
            a: c.accuracy(),
            ba: c.balanced_accuracy(),
            roc_auc: roc_auc(&b.y, &b.p),
            p: c.precision(),
            r: c.recall(),
            ra: None,
            rr: None,
            rs: None,
            rs_literal: None,
            counts: c,
        }
    }

    /// Standard metrics plus RA, and RR / RS with respect to `positive`.
    pub fn compute(b: &PredictionBundle, positive: u8) -> Self {
        let mut out = Self::standard(b);
        out.ra = relative_accuracy(b).ok();
        out.rr = relative_recall(b, positive).ok();
        out.rs = relative_specificity(b, positive, RsMode::Strict).ok();
        out.rs_literal = relative_specificity(b, positive, RsMode::Literal).ok();
        out
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        match name {
            "mcc" => self.mcc,
            "f1" => self.f1,
            "f1_macro" => self.f1_macro,
            "a" => self.a,
            "ba" => self.ba,
            "roc_auc" => self.roc_auc,
            "p" => self.p,
            "r" => self.r,
            "ra" => self.ra,
            "rr" => self.rr,
            "rs" => self.rs,
            "rs_literal" => self.rs_literal,
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn close(a: Option<f64>, b: f64) -> bool {
        a.is_some_and(|a| (a - b).abs() < 1e-12)
    }

    #[test]
    fn perfect_predictions() {
        let b = PredictionBundle::from_predictions(vec![1, 0, 1, 0], vec![1, 0, 1, 0], vec![None; 4]).unwrap();
        let m = MetricsReport::standard(&b);
        assert_eq!((m.a, m.mcc, m.f1), (Some(1.0), Some(1.0), Some(1.0)));
        let b = PredictionBundle::from_probabilities(vec![1, 0], vec![0.9, 0.1], vec![None; 2], 0.5).unwrap();
        assert_eq!(MetricsReport::standard(&b).roc_auc, Some(1.0));
    }

    #[test]
    fn one_of_each_cell() {
        let b = PredictionBundle::from_predictions(vec![1, 1, 0, 0], vec![1, 0, 1, 0], vec![None; 4]).unwrap();
        let m = MetricsReport::standard(&b);
        assert_eq!(m.counts, Confusion { tp: 1, fp: 1, tn: 1, fn_: 1 });
        assert_eq!((m.a, m.p, m.r, m.mcc), (Some(0.5), Some(0.5), Some(0.5), Some(0.0)));
        assert_eq!(m.f1_macro, Some(0.5));
    }

    #[test]
    fn single_class_metrics_are_absent() {
        let b = PredictionBundle::from_predictions(vec![1, 1], vec![1, 0], vec![None; 2]).unwrap();
        let m = MetricsReport::standard(&b);
        assert_eq!(m.roc_auc, None);
        assert_eq!(m.ba, None);
        assert_eq!(m.mcc, None);
        assert_eq!(m.a, Some(0.5));
    }

    #[test]
    fn roc_with_ties_uses_midranks() {
        // pairs (pos, neg): (0.5,0.5) tie -> 0.5, (0.5,0.2) -> 1, (0.9,0.5) -> 1, (0.9,0.2) -> 1
        let auc = roc_auc(&[1, 1, 0, 0], &[0.5, 0.9, 0.5, 0.2]).unwrap();
        assert!((auc - 3.5 / 4.0).abs() < 1e-15);
    }

    #[test]
    fn relative_accuracy_counts() {
        // protocol correct on samples 0..4, model right on three of them
        let y = vec![1, 0, 1, 0, 1, 0];
        let r = vec![Some(1), Some(0), Some(1), Some(0), Some(0), None];
        let y_hat = vec![1, 0, 0, 0, 1, 1];
        let b = PredictionBundle::from_predictions(y, y_hat, r).unwrap();
        assert!(close(relative_accuracy(&b).ok(), 0.75));
    }

    #[test]
    fn relative_accuracy_requires_correct_protocol() {
        let b = PredictionBundle::from_predictions(vec![1, 0], vec![1, 0], vec![Some(0), None]).unwrap();
        assert_eq!(relative_accuracy(&b), Err(MetricsError::ProtocolNeverCorrect));
        assert_eq!(relative_recall(&b, 1), Err(MetricsError::EmptyDenominator));
    }

    #[test]
    fn relative_recall_counts() {
        let y = vec![1, 1, 1, 1, 0];
        let r = vec![Some(1), Some(1), Some(1), None, Some(1)];
        let y_hat = vec![1, 0, 1, 0, 1];
        let b = PredictionBundle::from_predictions(y, y_hat, r).unwrap();
        assert!(close(relative_recall(&b, 1).ok(), 2.0 / 3.0));
    }

    #[test]
    fn relative_specificity_modes() {
        // four qualifying negatives under the literal reading, model flips one
        let y = vec![0, 0, 0, 0, 1, 0];
        let r = vec![Some(0), Some(0), None, None, Some(0), Some(1)];
        let y_hat = vec![0, 0, 1, 0, 1, 1];
        let b = PredictionBundle::from_predictions(y, y_hat, r).unwrap();
        assert!(close(relative_specificity(&b, 1, RsMode::Literal).ok(), 0.75));
        assert!(close(relative_specificity(&b, 1, RsMode::Strict).ok(), 1.0));
    }

    #[test]
    fn model_matching_protocol_scores_one() {
        let y = vec![1, 0, 1, 0, 1];
        let r = vec![Some(1), Some(0), Some(0), None, Some(1)];
        let y_hat = vec![1, 0, 0, 0, 1];
        let b = PredictionBundle::from_predictions(y, y_hat, r).unwrap();
        let m = MetricsReport::compute(&b, 1);
        assert_eq!((m.ra, m.rr, m.rs, m.rs_literal), (Some(1.0), Some(1.0), Some(1.0), Some(1.0)));
    }

    #[test]
    fn bundle_validation() {
        assert_eq!(
            PredictionBundle::from_probabilities(vec![1], vec![1.5], vec![None], 0.5),
            Err(MetricsError::InvalidProbability(1.5))
        );
        assert_eq!(
            PredictionBundle::from_predictions(vec![1, 0], vec![1], vec![None, None]),
            Err(MetricsError::LengthMismatch)
        );
        let b = PredictionBundle::from_probabilities(vec![1, 0], vec![0.5, 0.49], vec![None; 2], 0.5).unwrap();
        assert_eq!(b.y_hat, vec![1, 0]);
    }

    fn arb_case() -> impl proptest::strategy::Strategy<Value = (Vec<u8>, Vec<u8>, Vec<Option<u8>>, Vec<f64>)> {
        use proptest::prelude::*;
        (4usize..60).prop_flat_map(|n| {
            (
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(0u8..2, n),
                proptest::collection::vec(proptest::option::of(0u8..2), n),
                proptest::collection::vec(0.0f64..1.0, n),
            )
        })
    }

    proptest::proptest! {
        #[test]
        fn ra_equals_restricted_accuracy((y, y_hat, r, _p) in arb_case()) {
            let b = PredictionBundle::from_predictions(y.clone(), y_hat.clone(), r.clone()).unwrap();
            let keep: Vec<usize> = (0..y.len()).filter(|&i| r[i] == Some(y[i])).collect();
            match relative_accuracy(&b) {
                Ok(ra) => {
                    let ys: Vec<u8> = keep.iter().map(|&i| y[i]).collect();
                    let hs: Vec<u8> = keep.iter().map(|&i| y_hat[i]).collect();
                    let acc = Confusion::from_labels(&ys, &hs).accuracy().unwrap();
                    proptest::prop_assert!((ra - acc).abs() < 1e-15);
                }
                Err(_) => proptest::prop_assert!(keep.is_empty()),
            }
        }

        #[test]
        fn roc_invariant_under_monotone_transform((y, _h, _r, p) in arb_case()) {
            let q: Vec<f64> = p.iter().map(|&v| libm::exp(3.0 * v) - 7.0).collect();
            proptest::prop_assert_eq!(roc_auc(&y, &p), roc_auc(&y, &q));
        }

        #[test]
        fn mcc_flips_sign_on_complement(y_hat in proptest::collection::vec(0u8..2, 10)) {
            let y: Vec<u8> = (0..10).map(|i| (i % 2) as u8).collect();
            let comp: Vec<u8> = y_hat.iter().map(|&v| 1 - v).collect();
            let a = Confusion::from_labels(&y, &y_hat).mcc();
            let b = Confusion::from_labels(&y, &comp).mcc();
            if let (Some(a), Some(b)) = (a, b) {
                proptest::prop_assert!((a + b).abs() < 1e-12);
            }
        }

        #[test]
        fn bounded_ranges((y, y_hat, r, _p) in arb_case()) {
            let b = PredictionBundle::from_predictions(y, y_hat, r).unwrap();
            let m = MetricsReport::compute(&b, 1);
            for name in METRIC_NAMES {
                if let Some(v) = m.get(name) {
                    let lo = if name == "mcc" { -1.0 - 1e-12 } else { 0.0 };
                    proptest::prop_assert!(v >= lo && v <= 1.0 + 1e-12, "{} = {}", name, v);
                }
            }
        }
    }
}

//! Core record and parameter types shared across the crate.

use std::fmt;
use std::sync::Arc;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Opaque identifier of a call center.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct GroupId(Arc<str>);

impl GroupId {
    pub fn new(id: impl AsRef<str>) -> Self {
        GroupId(Arc::from(id.as_ref()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for GroupId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for GroupId {
    fn from(s: &str) -> Self {
        GroupId::new(s)
    }
}

/// A survey or predicted CSAT level on the 1-5 scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct CsatLevel(u8);

impl CsatLevel {
    pub const ALL: [CsatLevel; 5] = [
        CsatLevel(1),
        CsatLevel(2),
        CsatLevel(3),
        CsatLevel(4),
        CsatLevel(5),
    ];

    pub fn new(level: i64) -> Option<Self> {
        (1..=5).contains(&level).then_some(CsatLevel(level as u8))
    }

    pub fn get(self) -> u8 {
        self.0
    }

    /// Zero-based position in a 5-vector of class counts.
    pub fn index(self) -> usize {
        usize::from(self.0 - 1)
    }

    pub fn from_index(index: usize) -> Option<Self> {
        Self::new(index as i64 + 1)
    }

    /// Satisfied calls are those at level 4 or 5. The same boundary splits
    /// "high" from "low" CSAT for group eligibility.
    pub fn is_satisfied(self) -> bool {
        self.0 >= 4
    }
}

impl TryFrom<u8> for CsatLevel {
    type Error = String;

    fn try_from(v: u8) -> std::result::Result<Self, Self::Error> {
        CsatLevel::new(i64::from(v)).ok_or_else(|| format!("CSAT level {v} outside 1..=5"))
    }
}

impl From<CsatLevel> for u8 {
    fn from(level: CsatLevel) -> u8 {
        level.0
    }
}

impl fmt::Display for CsatLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// One scored call: the classifier's low-CSAT probability plus an optional survey answer.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredCall<T> {
    pub call_id: String,
    pub group_id: GroupId,
    pub date: NaiveDate,
    proba: T,
    pub survey_csat: Option<CsatLevel>,
}

impl<T: Scalar> ScoredCall<T> {
    pub fn new(
        call_id: impl Into<String>,
        group_id: GroupId,
        date: NaiveDate,
        proba: T,
        survey_csat: Option<CsatLevel>,
    ) -> std::result::Result<Self, RejectReason> {
        if !(proba >= T::zero() && proba <= T::one()) {
            return Err(RejectReason::OutOfRangeProba(proba.as_f64()));
        }
        Ok(ScoredCall {
            call_id: call_id.into(),
            group_id,
            date,
            proba,
            survey_csat,
        })
    }

    /// Probability of the low-CSAT class, always within `[0, 1]`.
    pub fn proba(&self) -> T {
        self.proba
    }

    pub fn is_labeled(&self) -> bool {
        self.survey_csat.is_some()
    }
}

/// Unvalidated record as it appears in the input CSV.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RawRecord {
    pub call_id: String,
    pub group_id: String,
    pub date: String,
    pub proba: String,
    #[serde(default)]
    pub survey_csat: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "reason", content = "value")]
pub enum RejectReason {
    OutOfRangeProba(f64),
    UnparseableProba(String),
    OutOfRangeCsat(i64),
    UnparseableCsat(String),
    UnparseableTimestamp(String),
    MissingField(&'static str),
    Malformed(String),
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RejectReason::OutOfRangeProba(p) => write!(f, "OutOfRangeProba: {p} not in [0,1]"),
            RejectReason::UnparseableProba(s) => write!(f, "UnparseableProba: {s:?}"),
            RejectReason::OutOfRangeCsat(v) => write!(f, "OutOfRangeCsat: {v} not in 1..=5"),
            RejectReason::UnparseableCsat(s) => write!(f, "UnparseableCsat: {s:?}"),
            RejectReason::UnparseableTimestamp(s) => write!(f, "UnparseableTimestamp: {s:?}"),
            RejectReason::MissingField(name) => write!(f, "MissingField: {name}"),
            RejectReason::Malformed(msg) => write!(f, "Malformed: {msg}"),
        }
    }
}

/// A rejected input row. `row` is the 1-based data row number (header excluded).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Rejection {
    pub row: usize,
    #[serde(flatten)]
    pub reason: RejectReason,
}

impl fmt::Display for Rejection {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "row {}: {}", self.row, self.reason)
    }
}

pub fn validate_call<T: Scalar>(raw: &RawRecord, row: usize) -> std::result::Result<ScoredCall<T>, Rejection> {
    let reject = |reason| Rejection { row, reason };

    let call_id = raw.call_id.trim();
    if call_id.is_empty() {
        return Err(reject(RejectReason::MissingField("call_id")));
    }
    let group_id = raw.group_id.trim();
    if group_id.is_empty() {
        return Err(reject(RejectReason::MissingField("group_id")));
    }
    let date = NaiveDate::parse_from_str(raw.date.trim(), "%Y-%m-%d")
        .map_err(|_| reject(RejectReason::UnparseableTimestamp(raw.date.clone())))?;

    let proba_text = raw.proba.trim();
    if proba_text.is_empty() {
        return Err(reject(RejectReason::MissingField("proba")));
    }
    let proba: f64 = proba_text
        .parse()
        .map_err(|_| reject(RejectReason::UnparseableProba(raw.proba.clone())))?;
    if !(0.0..=1.0).contains(&proba) {
        return Err(reject(RejectReason::OutOfRangeProba(proba)));
    }

    let csat_text = raw.survey_csat.trim();
    let survey_csat = if csat_text.is_empty() {
        None
    } else {
        let v: i64 = csat_text
            .parse()
            .map_err(|_| reject(RejectReason::UnparseableCsat(raw.survey_csat.clone())))?;
        Some(CsatLevel::new(v).ok_or_else(|| reject(RejectReason::OutOfRangeCsat(v)))?)
    };

    // f32 rounding can push a value like 0.99999999 to 1.0, which is still in range.
    ScoredCall::new(call_id, GroupId::new(group_id), date, T::of(proba), survey_csat).map_err(reject)
}

/// The four class boundaries, strictly descending and strictly inside (0, 1).
///
/// `t12` separates pCSAT 1 from 2, ..., `t45` separates 4 from 5.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Thresholds<T> {
    t12: T,
    t23: T,
    t34: T,
    t45: T,
}

impl<T: Scalar> Thresholds<T> {
    pub fn new(t12: T, t23: T, t34: T, t45: T) -> Result<Self> {
        let inside = |t: T| t > T::zero() && t < T::one();
        if ![t12, t23, t34, t45].into_iter().all(inside) {
            return Err(Error::InvalidThresholds(format!(
                "all thresholds must lie strictly inside (0,1): ({t12}, {t23}, {t34}, {t45})"
            )));
        }
        if !(t12 > t23 && t23 > t34 && t34 > t45) {
            return Err(Error::InvalidThresholds(format!(
                "thresholds must be strictly descending: ({t12}, {t23}, {t34}, {t45})"
            )));
        }
        Ok(Thresholds { t12, t23, t34, t45 })
    }

    pub fn from_array(t: [T; 4]) -> Result<Self> {
        Self::new(t[0], t[1], t[2], t[3])
    }

    pub fn t12(&self) -> T {
        self.t12
    }

    pub fn t23(&self) -> T {
        self.t23
    }

    pub fn t34(&self) -> T {
        self.t34
    }

    pub fn t45(&self) -> T {
        self.t45
    }

    /// `[t12, t23, t34, t45]`, descending.
    pub fn as_array(&self) -> [T; 4] {
        [self.t12, self.t23, self.t34, self.t45]
    }

    pub fn cast<U: Scalar>(&self) -> Result<Thresholds<U>> {
        let a = self.as_array();
        Thresholds::new(U::of(a[0].as_f64()), U::of(a[1].as_f64()), U::of(a[2].as_f64()), U::of(a[3].as_f64()))
    }
}

impl Default for Thresholds<f64> {
    /// Evenly spaced placeholder used when no baseline is configured.
    fn default() -> Self {
        Thresholds::new(0.8, 0.6, 0.4, 0.2).expect("default thresholds are ordered")
    }
}

impl Default for Thresholds<f32> {
    fn default() -> Self {
        Thresholds::new(0.8, 0.6, 0.4, 0.2).expect("default thresholds are ordered")
    }
}

/// Counts per CSAT class 1..=5.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct OrdinalDistribution {
    counts: [u64; 5],
}

impl OrdinalDistribution {
    pub fn from_counts(counts: [u64; 5]) -> Self {
        OrdinalDistribution { counts }
    }

    pub fn from_labels<I: IntoIterator<Item = CsatLevel>>(labels: I) -> Self {
        let mut dist = OrdinalDistribution::default();
        for level in labels {
            dist.add(level);
        }
        dist
    }

    pub fn add(&mut self, level: CsatLevel) {
        self.counts[level.index()] += 1;
    }

    pub fn count(&self, level: CsatLevel) -> u64 {
        self.counts[level.index()]
    }

    pub fn counts(&self) -> [u64; 5] {
        self.counts
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn is_empty(&self) -> bool {
        self.total() == 0
    }
}

/// Loss components between a predicted and an observed distribution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown<T> {
    /// Absolute difference in share of satisfied calls (fraction units unless configured otherwise).
    pub delta_pct_satisfied: T,
    /// Absolute difference of means on the 1-5 scale.
    pub delta_mean: T,
    /// Mean squared error between the unit-normalized count vectors.
    pub mse: T,
    pub total: T,
}

impl<T: Scalar> LossBreakdown<T> {
    pub fn from_components(delta_pct_satisfied: T, delta_mean: T, mse: T) -> Self {
        LossBreakdown {
            delta_pct_satisfied,
            delta_mean,
            mse,
            total: delta_pct_satisfied + delta_mean + mse,
        }
    }

    pub fn zero() -> Self {
        Self::from_components(T::zero(), T::zero(), T::zero())
    }
}

/// Survey response counts for one group over a training window.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct GroupTrainingStats {
    pub group_id: GroupId,
    pub n_responses: u64,
    pub n_high: u64,
    pub n_low: u64,
}

impl GroupTrainingStats {
    pub fn new(group_id: GroupId) -> Self {
        GroupTrainingStats {
            group_id,
            n_responses: 0,
            n_high: 0,
            n_low: 0,
        }
    }

    pub fn record(&mut self, level: CsatLevel) {
        self.n_responses += 1;
        if level.is_satisfied() {
            self.n_high += 1;
        } else {
            self.n_low += 1;
        }
    }

    /// Stats over the labeled calls in `calls`; unlabeled calls are ignored.
    pub fn from_calls<'a, T: Scalar>(
        group_id: GroupId,
        calls: impl IntoIterator<Item = &'a ScoredCall<T>>,
    ) -> Self {
        let mut stats = GroupTrainingStats::new(group_id);
        for level in calls.into_iter().filter_map(|c| c.survey_csat) {
            stats.record(level);
        }
        stats
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn raw(proba: &str, csat: &str) -> RawRecord {
        RawRecord {
            call_id: "c1".into(),
            group_id: "g1".into(),
            date: "2024-06-17".into(),
            proba: proba.into(),
            survey_csat: csat.into(),
        }
    }

    #[test]
    fn validates_labeled_call() {
        let call: ScoredCall<f64> = validate_call(&raw("0.93", "1"), 1).unwrap();
        assert_eq!(call.proba(), 0.93);
        assert_eq!(call.survey_csat, CsatLevel::new(1));
        assert_eq!(call.date, NaiveDate::from_ymd_opt(2024, 6, 17).unwrap());
    }

    #[test]
    fn missing_label_is_allowed() {
        let call: ScoredCall<f64> = validate_call(&raw("0.5", ""), 1).unwrap();
        assert!(!call.is_labeled());
    }

    #[test]
    fn rejects_out_of_range_values() {
        let err = validate_call::<f64>(&raw("1.2", "3"), 7).unwrap_err();
        assert_eq!(err.row, 7);
        assert_eq!(err.reason, RejectReason::OutOfRangeProba(1.2));

        let err = validate_call::<f64>(&raw("0.2", "6"), 2).unwrap_err();
        assert_eq!(err.reason, RejectReason::OutOfRangeCsat(6));

        let err = validate_call::<f64>(&raw("NaN", ""), 2).unwrap_err();
        assert!(matches!(err.reason, RejectReason::OutOfRangeProba(p) if p.is_nan()));

        let mut r = raw("0.2", "");
        r.date = "17/06/2024".into();
        let err = validate_call::<f64>(&r, 3).unwrap_err();
        assert!(matches!(err.reason, RejectReason::UnparseableTimestamp(_)));
    }

    #[test]
    fn f32_calls_validate() {
        let call: ScoredCall<f32> = validate_call(&raw("0.999999999", "5"), 1).unwrap();
        assert!(call.proba() <= 1.0);
    }

    #[test]
    fn thresholds_require_strict_descending_order() {
        assert!(Thresholds::new(0.9, 0.7, 0.5, 0.3).is_ok());
        assert!(Thresholds::new(0.9, 0.7, 0.7, 0.3).is_err());
        assert!(Thresholds::new(0.3, 0.5, 0.7, 0.9).is_err());
        assert!(Thresholds::new(1.0, 0.7, 0.5, 0.3).is_err());
        assert!(Thresholds::new(0.9, 0.7, 0.5, 0.0).is_err());
        assert!(Thresholds::new(0.9, f64::NAN, 0.5, 0.1).is_err());
    }

    #[test]
    fn stats_split_high_and_low() {
        let mut s = GroupTrainingStats::new("g".into());
        for v in [1, 3, 4, 5, 5] {
            s.record(CsatLevel::new(v).unwrap());
        }
        assert_eq!((s.n_responses, s.n_high, s.n_low), (5, 3, 2));
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn non_descending_quadruples_rejected(mut t in prop::array::uniform4(0.001f64..0.999)) {
                t.sort_by(|a, b| a.partial_cmp(b).unwrap());
                // ascending, or contains ties after sorting: never strictly descending
                prop_assert!(Thresholds::from_array(t).is_err());
                t.reverse();
                let strict = t.windows(2).all(|w| w[0] > w[1]);
                prop_assert_eq!(Thresholds::from_array(t).is_ok(), strict);
            }

            #[test]
            fn distribution_total_matches_label_count(labels in prop::collection::vec(1i64..=5, 0..200)) {
                let dist = OrdinalDistribution::from_labels(labels.iter().map(|&v| CsatLevel::new(v).unwrap()));
                prop_assert_eq!(dist.total(), labels.len() as u64);
            }
        }
    }
}

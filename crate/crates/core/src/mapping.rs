//! Probability to pCSAT mapping through four thresholds.
//!
//! A high low-CSAT probability means a dissatisfied customer, so pCSAT 1 sits above
//! `t12` and pCSAT 5 sits at or below `t45`.

use serde::{Deserialize, Serialize};

use crate::domain::{CsatLevel, OrdinalDistribution, ScoredCall, Thresholds};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Which class a probability lands in when it equals a threshold exactly.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryMode {
    /// `p == t` maps to the more satisfied class: pCSAT 1 requires `p > t12`.
    #[default]
    Higher,
    /// `p == t` maps to the less satisfied class: pCSAT 1 requires `p >= t12`.
    Lower,
}

impl BoundaryMode {
    /// True when `p` falls on the dissatisfied side of threshold `t`.
    #[inline]
    pub fn above<T: Scalar>(self, p: T, t: T) -> bool {
        match self {
            BoundaryMode::Higher => p > t,
            BoundaryMode::Lower => p >= t,
        }
    }
}

impl std::str::FromStr for BoundaryMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "higher" => Ok(BoundaryMode::Higher),
            "lower" => Ok(BoundaryMode::Lower),
            other => Err(Error::InvalidConfig(format!(
                "boundary_mode must be `higher` or `lower`, got {other:?}"
            ))),
        }
    }
}

pub fn map_proba<T: Scalar>(p: T, th: &Thresholds<T>) -> CsatLevel {
    map_proba_with(p, th, BoundaryMode::Higher)
}

pub fn map_proba_with<T: Scalar>(p: T, th: &Thresholds<T>, mode: BoundaryMode) -> CsatLevel {
    // number of thresholds p sits above; thresholds descend, so stop at the first one
    let level = if mode.above(p, th.t12()) {
        1
    } else if mode.above(p, th.t23()) {
        2
    } else if mode.above(p, th.t34()) {
        3
    } else if mode.above(p, th.t45()) {
        4
    } else {
        5
    };
    CsatLevel::new(level).expect("level in 1..=5")
}

pub fn map_all<'a, T: Scalar>(
    calls: impl IntoIterator<Item = &'a ScoredCall<T>>,
    th: &Thresholds<T>,
) -> Result<OrdinalDistribution> {
    map_all_with(calls, th, BoundaryMode::Higher)
}

pub fn map_all_with<'a, T: Scalar>(
    calls: impl IntoIterator<Item = &'a ScoredCall<T>>,
    th: &Thresholds<T>,
    mode: BoundaryMode,
) -> Result<OrdinalDistribution> {
    map_probas(calls.into_iter().map(|c| c.proba()), th, mode)
}

/// Distribution of pCSAT over raw probabilities.
pub fn map_probas<T: Scalar>(
    probas: impl IntoIterator<Item = T>,
    th: &Thresholds<T>,
    mode: BoundaryMode,
) -> Result<OrdinalDistribution> {
    let dist = OrdinalDistribution::from_labels(probas.into_iter().map(|p| map_proba_with(p, th, mode)));
    if dist.is_empty() {
        return Err(Error::EmptyInput);
    }
    Ok(dist)
}

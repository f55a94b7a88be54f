//! Distribution-matching loss between predicted and survey CSAT.
//!
//! The loss is the sum of three terms: the gap in share of satisfied calls, the gap
//! in mean CSAT, and the mean squared error between the two count vectors after
//! normalizing each to unit Euclidean length.

use serde::{Deserialize, Serialize};

use crate::domain::{LossBreakdown, OrdinalDistribution};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// The squared-error term averages over the five classes rather than summing.
pub const MSE_DIVISOR: usize = 5;

/// Units of the satisfied-share term.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PctUnit {
    /// Share in `[0, 1]`; a 1% gap contributes 0.01.
    #[default]
    Fraction,
    /// Percentage points; a 1% gap contributes 1.0.
    Points,
}

impl std::str::FromStr for PctUnit {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fraction" => Ok(PctUnit::Fraction),
            "points" => Ok(PctUnit::Points),
            other => Err(Error::InvalidConfig(format!(
                "pct_unit must be `fraction` or `points`, got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LossOptions {
    pub pct_unit: PctUnit,
}

pub fn mean_of<T: Scalar>(dist: &OrdinalDistribution) -> Result<T> {
    let total = nonzero_total(dist)?;
    let weighted = dist
        .counts()
        .iter()
        .enumerate()
        .fold(T::zero(), |acc, (i, &n)| acc + T::of(n as f64) * T::of_count(i + 1));
    Ok(weighted / total)
}

pub fn pct_satisfied<T: Scalar>(dist: &OrdinalDistribution) -> Result<T> {
    let total = nonzero_total(dist)?;
    let [_, _, _, c4, c5] = dist.counts();
    Ok(T::of((c4 + c5) as f64) / total)
}

pub fn normalize_unit<T: Scalar>(dist: &OrdinalDistribution) -> Result<[T; 5]> {
    nonzero_total::<T>(dist)?;
    let counts = dist.counts().map(|n| T::of(n as f64));
    let norm = counts.iter().fold(T::zero(), |acc, &c| acc + c * c).sqrt();
    Ok(counts.map(|c| c / norm))
}

fn nonzero_total<T: Scalar>(dist: &OrdinalDistribution) -> Result<T> {
    match dist.total() {
        0 => Err(Error::EmptyDistribution),
        n => Ok(T::of(n as f64)),
    }
}

pub fn loss_between<T: Scalar>(pred: &OrdinalDistribution, obs: &OrdinalDistribution) -> Result<LossBreakdown<T>> {
    loss_between_with(pred, obs, LossOptions::default())
}

pub fn loss_between_with<T: Scalar>(
    pred: &OrdinalDistribution,
    obs: &OrdinalDistribution,
    opts: LossOptions,
) -> Result<LossBreakdown<T>> {
    LossTarget::new(obs, opts)?.loss(pred)
}

/// `mean(pred) - mean(obs)`, kept for diagnostics alongside the absolute term.
pub fn signed_mean_delta<T: Scalar>(pred: &OrdinalDistribution, obs: &OrdinalDistribution) -> Result<T> {
    Ok(mean_of::<T>(pred)? - mean_of::<T>(obs)?)
}

/// Summary statistics of an observed distribution, computed once and reused across
/// many candidate predictions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTarget<T> {
    mean: T,
    pct: T,
    unit: [T; 5],
    opts: LossOptions,
}

impl<T: Scalar> LossTarget<T> {
    pub fn new(obs: &OrdinalDistribution, opts: LossOptions) -> Result<Self> {
        Ok(LossTarget {
            mean: mean_of(obs)?,
            pct: pct_satisfied(obs)?,
            unit: normalize_unit(obs)?,
            opts,
        })
    }

    pub fn mean(&self) -> T {
        self.mean
    }

    pub fn loss(&self, pred: &OrdinalDistribution) -> Result<LossBreakdown<T>> {
        let mut delta_pct = (pct_satisfied::<T>(pred)? - self.pct).abs();
        if self.opts.pct_unit == PctUnit::Points {
            delta_pct = delta_pct * T::of(100.0);
        }
        let delta_mean = (mean_of::<T>(pred)? - self.mean).abs();
        let unit = normalize_unit::<T>(pred)?;
        let sq = unit
            .iter()
            .zip(&self.unit)
            .fold(T::zero(), |acc, (&a, &b)| acc + (a - b) * (a - b));
        let mse = sq / T::of_count(MSE_DIVISOR);
        Ok(LossBreakdown::from_components(delta_pct, delta_mean, mse))
    }
}

//! Which thresholds each group gets: the global fit, its own fit, or the baseline.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::domain::{GroupId, GroupTrainingStats, Thresholds};
use crate::error::{Error, Result};
use crate::optimizer::FitResult;
use crate::scalar::Scalar;

pub const DEFAULT_HYBRID_CUTOFF: u64 = 200;
pub const DEFAULT_MIN_HIGH: u64 = 5;
pub const DEFAULT_MIN_LOW: u64 = 5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyMode {
    Global,
    PerGroup,
    /// Global thresholds below `hybrid_cutoff` survey responses, per-group at or above it.
    #[default]
    Hybrid,
}

impl std::str::FromStr for StrategyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "global" => Ok(StrategyMode::Global),
            "per_group" => Ok(StrategyMode::PerGroup),
            "hybrid" => Ok(StrategyMode::Hybrid),
            other => Err(Error::InvalidConfig(format!(
                "mode must be one of global, per_group, hybrid; got {other:?}"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyConfig<T> {
    pub mode: StrategyMode,
    pub hybrid_cutoff: u64,
    pub min_high: u64,
    pub min_low: u64,
    pub baseline_thresholds: Thresholds<T>,
}

impl<T: Scalar> StrategyConfig<T> {
    pub fn new(mode: StrategyMode, baseline_thresholds: Thresholds<T>) -> Self {
        StrategyConfig {
            mode,
            hybrid_cutoff: DEFAULT_HYBRID_CUTOFF,
            min_high: DEFAULT_MIN_HIGH,
            min_low: DEFAULT_MIN_LOW,
            baseline_thresholds,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.hybrid_cutoff < 1 {
            return Err(Error::InvalidConfig("hybrid_cutoff must be at least 1".into()));
        }
        Ok(())
    }
}

impl Default for StrategyConfig<f64> {
    fn default() -> Self {
        StrategyConfig::new(StrategyMode::default(), Thresholds::default())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Eligibility {
    Eligible,
    Excluded,
}

/// A group is eligible with at least `min_high` satisfied and `min_low` unsatisfied responses.
pub fn eligibility<T>(stats: &GroupTrainingStats, cfg: &StrategyConfig<T>) -> Eligibility {
    if stats.n_high >= cfg.min_high && stats.n_low >= cfg.min_low {
        Eligibility::Eligible
    } else {
        Eligibility::Excluded
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    Baseline,
    Global,
    PerGroup,
}

impl Provenance {
    pub fn as_str(self) -> &'static str {
        match self {
            Provenance::Baseline => "baseline",
            Provenance::Global => "global",
            Provenance::PerGroup => "per_group",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Assignment<T> {
    pub thresholds: Thresholds<T>,
    pub provenance: Provenance,
}

pub fn assign_thresholds<T: Scalar>(
    groups: &BTreeMap<GroupId, GroupTrainingStats>,
    global_fit: &FitResult<T>,
    per_group_fits: &BTreeMap<GroupId, FitResult<T>>,
    cfg: &StrategyConfig<T>,
) -> Result<BTreeMap<GroupId, Assignment<T>>> {
    let per_group = |id: &GroupId| -> Result<Assignment<T>> {
        let fit = per_group_fits
            .get(id)
            .ok_or_else(|| Error::MissingFit(id.to_string()))?;
        Ok(Assignment {
            thresholds: fit.thresholds,
            provenance: Provenance::PerGroup,
        })
    };
    let global = Assignment {
        thresholds: global_fit.thresholds,
        provenance: Provenance::Global,
    };
    let baseline = Assignment {
        thresholds: cfg.baseline_thresholds,
        provenance: Provenance::Baseline,
    };

    groups
        .iter()
        .map(|(id, stats)| {
            let assignment = match (eligibility(stats, cfg), cfg.mode) {
                (Eligibility::Excluded, _) => baseline,
                (Eligibility::Eligible, StrategyMode::Global) => global,
                (Eligibility::Eligible, StrategyMode::PerGroup) => per_group(id)?,
                (Eligibility::Eligible, StrategyMode::Hybrid) if stats.n_responses < cfg.hybrid_cutoff => global,
                (Eligibility::Eligible, StrategyMode::Hybrid) => per_group(id)?,
            };
            Ok((id.clone(), assignment))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::LossBreakdown;

    fn stats(id: &str, n_high: u64, n_low: u64) -> GroupTrainingStats {
        GroupTrainingStats {
            group_id: id.into(),
            n_responses: n_high + n_low,
            n_high,
            n_low,
        }
    }

    fn fit(t: [f64; 4]) -> FitResult<f64> {
        FitResult {
            thresholds: Thresholds::from_array(t).unwrap(),
            loss: LossBreakdown::zero(),
            iterations_run: 1,
            iteration_of_best: 1,
            seed: 0,
            warm_start_selected: false,
            history: vec![],
        }
    }

    #[test]
    fn eligibility_rule() {
        let cfg = StrategyConfig::default();
        assert_eq!(eligibility(&stats("a", 5, 5), &cfg), Eligibility::Eligible);
        assert_eq!(eligibility(&stats("a", 4, 100), &cfg), Eligibility::Excluded);
        assert_eq!(eligibility(&stats("a", 100, 4), &cfg), Eligibility::Excluded);
        assert_eq!(eligibility(&stats("a", 0, 0), &cfg), Eligibility::Excluded);
    }

    #[test]
    fn hybrid_cutoff_boundary() {
        let cfg = StrategyConfig::default();
        let groups: BTreeMap<_, _> = [stats("small", 100, 99), stats("big", 100, 100), stats("tiny", 1, 1)]
            .into_iter()
            .map(|s| (s.group_id.clone(), s))
            .collect();
        let global = fit([0.9, 0.7, 0.5, 0.3]);
        let per: BTreeMap<_, _> = [("small", fit([0.95, 0.6, 0.4, 0.1])), ("big", fit([0.85, 0.65, 0.45, 0.25]))]
            .into_iter()
            .map(|(k, v)| (GroupId::new(k), v))
            .collect();
        let out = assign_thresholds(&groups, &global, &per, &cfg).unwrap();
        assert_eq!(out.len(), 3);
        assert_eq!(out[&GroupId::new("small")].provenance, Provenance::Global);
        assert_eq!(out[&GroupId::new("small")].thresholds, global.thresholds);
        assert_eq!(out[&GroupId::new("big")].provenance, Provenance::PerGroup);
        assert_eq!(out[&GroupId::new("big")].thresholds, per[&GroupId::new("big")].thresholds);
        assert_eq!(out[&GroupId::new("tiny")].provenance, Provenance::Baseline);
        assert_eq!(out[&GroupId::new("tiny")].thresholds, cfg.baseline_thresholds);
    }

    #[test]
    fn hybrid_reduces_to_pure_modes() {
        let groups: BTreeMap<_, _> = [stats("a", 10, 10), stats("b", 300, 300)]
            .into_iter()
            .map(|s| (s.group_id.clone(), s))
            .collect();
        let global = fit([0.9, 0.7, 0.5, 0.3]);
        let per: BTreeMap<_, _> = ["a", "b"]
            .into_iter()
            .map(|k| (GroupId::new(k), fit([0.8, 0.6, 0.4, 0.2])))
            .collect();
        let run = |mode, cutoff| {
            let cfg = StrategyConfig {
                mode,
                hybrid_cutoff: cutoff,
                ..StrategyConfig::default()
            };
            assign_thresholds(&groups, &global, &per, &cfg).unwrap()
        };
        assert_eq!(run(StrategyMode::Hybrid, u64::MAX), run(StrategyMode::Global, 1));
        // cutoff 0 is rejected by validate(); cutoff 1 is the smallest and already sends every eligible group to per-group
        assert_eq!(run(StrategyMode::Hybrid, 1), run(StrategyMode::PerGroup, 1));
    }

    #[test]
    fn missing_fit_is_an_error() {
        let groups: BTreeMap<_, _> = [stats("a", 300, 300)]
            .into_iter()
            .map(|s| (s.group_id.clone(), s))
            .collect();
        let err = assign_thresholds(&groups, &fit([0.9, 0.7, 0.5, 0.3]), &BTreeMap::new(), &StrategyConfig::default())
            .unwrap_err();
        assert!(matches!(err, Error::MissingFit(g) if g == "a"));
    }
}

#![allow(dead_code)]

use chrono::NaiveDate;
use pcsat::experiment::{ExperimentConfig, TrialWindows};
use pcsat::strategy::{StrategyConfig, StrategyMode};
use pcsat::synth::{SynthConfig, VolumeTier};
use pcsat::Thresholds;

pub fn date(y: i32, m: u32, d: u32) -> NaiveDate {
    NaiveDate::from_ymd_opt(y, m, d).unwrap()
}

/// First and last day of the default synthetic range; the seven default trials span it exactly.
pub fn span() -> (NaiveDate, NaiveDate) {
    (date(2023, 6, 24), date(2024, 6, 17))
}

pub fn synth(tiers: &[(usize, f64)], response_rate: f64, seed: u64) -> SynthConfig {
    let (start, end) = span();
    let mut cfg = SynthConfig::new(1, 1.0, start, end, seed);
    cfg.tiers = tiers
        .iter()
        .map(|&(n_groups, calls_per_day)| VolumeTier {
            n_groups,
            calls_per_day,
        })
        .collect();
    cfg.survey_response_rate = response_rate;
    cfg
}

pub fn experiment(iterations: usize, bootstrap_resamples: usize, seed: u64) -> ExperimentConfig<f64> {
    let mut cfg = ExperimentConfig::new(
        TrialWindows::new(span().0),
        StrategyConfig::new(StrategyMode::Hybrid, Thresholds::default()),
        seed,
    );
    cfg.iterations = iterations;
    cfg.bootstrap_resamples = bootstrap_resamples;
    cfg
}

//! Run configuration for `simulate`, read from flat `key = value` text.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use chrono::NaiveDate;
use serde::Serialize;

use crate::domain::Thresholds;
use crate::error::{Error, Result};
use crate::experiment::{default_bins, ExperimentConfig, TrialWindows, VolumeBin};
use crate::io::parse_key_values;
use crate::strategy::StrategyConfig;
use crate::synth::{BetaParams, SynthConfig, VolumeTier};

pub const KEYS: &[&str] = &[
    "input",
    "seed",
    "iterations",
    "bootstrap_resamples",
    "warm_start",
    "workers",
    "mode",
    "hybrid_cutoff",
    "min_high",
    "min_low",
    "baseline",
    "train_days",
    "test_days",
    "stride_days",
    "n_trials",
    "start_date",
    "bins",
    "boundary_mode",
    "pct_unit",
    "synth_tiers",
    "synth_start",
    "synth_end",
    "synth_response_rate",
    "synth_prior",
    "synth_link_means",
    "synth_link_concentration",
    "synth_group_shift_sd",
    "synth_drift_per_day",
    "synth_seed",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    /// Call CSV to evaluate; synthetic data is generated when absent.
    pub input: Option<PathBuf>,
    /// First training day; defaults to the earliest date in the data.
    pub start_date: Option<NaiveDate>,
    pub experiment: ExperimentConfig<f64>,
    pub synth: SynthConfig,
    pub workers: Option<usize>,
}

fn date(s: &str) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(s.trim(), "%Y-%m-%d")
        .map_err(|_| Error::InvalidConfig(format!("expected YYYY-MM-DD date, got {s:?}")))
}

fn num<T: FromStr>(key: &str, s: &str) -> Result<T> {
    s.trim()
        .parse()
        .map_err(|_| Error::InvalidConfig(format!("{key}: cannot parse {s:?}")))
}

fn list<const N: usize>(key: &str, s: &str) -> Result<[f64; N]> {
    let values: Vec<f64> = s.split(',').map(|v| num(key, v)).collect::<Result<_>>()?;
    values
        .try_into()
        .map_err(|v: Vec<f64>| Error::InvalidConfig(format!("{key}: expected {N} values, got {}", v.len())))
}

/// Parses `4,0.9,...` style baseline thresholds.
pub fn parse_thresholds_list(s: &str) -> Result<Thresholds<f64>> {
    Thresholds::from_array(list::<4>("baseline", s)?)
}

/// Parses `NxRATE,NxRATE,...`, e.g. `30x0.5,30x2`.
pub fn parse_tiers(s: &str) -> Result<Vec<VolumeTier>> {
    s.split(',')
        .map(|item| {
            let (n, rate) = item
                .trim()
                .split_once('x')
                .ok_or_else(|| Error::InvalidConfig(format!("synth_tiers: expected NxRATE, got {item:?}")))?;
            Ok(VolumeTier {
                n_groups: num("synth_tiers", n)?,
                calls_per_day: num("synth_tiers", rate)?,
            })
        })
        .collect()
}

pub fn parse_bins(s: &str) -> Result<Vec<VolumeBin>> {
    s.split(',').map(VolumeBin::parse).collect()
}

impl Default for RunConfig {
    fn default() -> Self {
        let synth_start = NaiveDate::from_ymd_opt(2023, 6, 24).expect("valid date");
        let synth_end = NaiveDate::from_ymd_opt(2024, 6, 17).expect("valid date");
        RunConfig {
            input: None,
            start_date: None,
            experiment: ExperimentConfig::new(TrialWindows::new(synth_start), StrategyConfig::default(), 0),
            synth: SynthConfig::new(20, 10.0, synth_start, synth_end, 0),
            workers: None,
        }
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_key_values(&parse_key_values(text)?)
    }

    pub fn from_key_values(kv: &BTreeMap<String, String>) -> Result<Self> {
        if let Some(unknown) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::InvalidConfig(format!("unknown config key {unknown:?}")));
        }
        let mut cfg = RunConfig::default();
        let get = |k: &str| kv.get(k).map(String::as_str);

        let exp = &mut cfg.experiment;
        if let Some(v) = get("seed") {
            exp.seed = num("seed", v)?;
        }
        cfg.synth.seed = match get("synth_seed") {
            Some(v) => num("synth_seed", v)?,
            None => exp.seed,
        };
        if let Some(v) = get("iterations") {
            exp.iterations = num("iterations", v)?;
        }
        if let Some(v) = get("bootstrap_resamples") {
            exp.bootstrap_resamples = num("bootstrap_resamples", v)?;
        }
        if let Some(v) = get("warm_start") {
            exp.warm_start = num("warm_start", v)?;
        }
        if let Some(v) = get("mode") {
            exp.strategy.mode = v.parse()?;
        }
        if let Some(v) = get("hybrid_cutoff") {
            exp.strategy.hybrid_cutoff = num("hybrid_cutoff", v)?;
        }
        if let Some(v) = get("min_high") {
            exp.strategy.min_high = num("min_high", v)?;
        }
        if let Some(v) = get("min_low") {
            exp.strategy.min_low = num("min_low", v)?;
        }
        if let Some(v) = get("baseline") {
            exp.strategy.baseline_thresholds = parse_thresholds_list(v)?;
        }
        if let Some(v) = get("train_days") {
            exp.windows.train_days = num("train_days", v)?;
        }
        if let Some(v) = get("test_days") {
            exp.windows.test_days = num("test_days", v)?;
        }
        if let Some(v) = get("stride_days") {
            exp.windows.stride_days = num("stride_days", v)?;
        }
        if let Some(v) = get("n_trials") {
            exp.windows.n_trials = num("n_trials", v)?;
        }
        exp.bins = match get("bins") {
            Some(v) => parse_bins(v)?,
            None => default_bins(),
        };
        if let Some(v) = get("boundary_mode") {
            exp.boundary = v.parse()?;
        }
        if let Some(v) = get("pct_unit") {
            exp.loss.pct_unit = v.parse()?;
        }
        if let Some(v) = get("start_date") {
            cfg.start_date = Some(date(v)?);
        }
        if let Some(v) = get("input") {
            cfg.input = Some(PathBuf::from(v));
        }
        if let Some(v) = get("workers") {
            let n: usize = num("workers", v)?;
            if n == 0 {
                return Err(Error::InvalidConfig("workers must be at least 1".into()));
            }
            cfg.workers = Some(n);
        }

        let synth = &mut cfg.synth;
        if let Some(v) = get("synth_tiers") {
            synth.tiers = parse_tiers(v)?;
        }
        if let Some(v) = get("synth_start") {
            synth.start = date(v)?;
        }
        if let Some(v) = get("synth_end") {
            synth.end = date(v)?;
        }
        if let Some(v) = get("synth_response_rate") {
            synth.survey_response_rate = num("synth_response_rate", v)?;
        }
        if let Some(v) = get("synth_prior") {
            synth.csat_prior = list::<5>("synth_prior", v)?;
        }
        let concentration = match get("synth_link_concentration") {
            Some(v) => Some(num::<f64>("synth_link_concentration", v)?),
            None => None,
        };
        let means = match get("synth_link_means") {
            Some(v) => Some(list::<5>("synth_link_means", v)?),
            None => None,
        };
        if means.is_some() || concentration.is_some() {
            let means = means.unwrap_or_else(|| synth.proba_link.map(|b| b.mean()));
            let k = concentration.unwrap_or(20.0);
            synth.proba_link = means.map(|m| BetaParams::from_mean(m, k));
        }
        if let Some(v) = get("synth_group_shift_sd") {
            synth.group_shift_sd = num("synth_group_shift_sd", v)?;
        }
        if let Some(v) = get("synth_drift_per_day") {
            synth.drift_per_day = Some(num("synth_drift_per_day", v)?);
        }

        cfg.experiment.validate()?;
        if cfg.input.is_none() {
            cfg.synth.validate()?;
        }
        Ok(cfg)
    }
}

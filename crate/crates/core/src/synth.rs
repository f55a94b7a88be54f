//! Synthetic multi-group call populations.
//!
//! Each group draws its own CSAT class prior from a Dirichlet. Each call draws a
//! true class from that prior (optionally drifting over time), then a low-CSAT
//! probability from the class's Beta link, optionally shifted on the logit scale by
//! a per-group offset that mimics a classifier that is biased differently for each
//! call center. A call is surveyed with probability `survey_response_rate`.

use chrono::{Days, NaiveDate};
use rand::Rng;
use rand_distr::{Beta, Dirichlet, Distribution, Normal, Poisson};
use rayon::prelude::*;
use serde::Serialize;

use crate::domain::{CsatLevel, GroupId, ScoredCall};
use crate::error::{Error, Result};
use crate::rng::{self, StreamRng};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BetaParams {
    pub alpha: f64,
    pub beta: f64,
}

impl BetaParams {
    /// Beta with the given mean and concentration `alpha + beta`.
    pub fn from_mean(mean: f64, concentration: f64) -> Self {
        BetaParams {
            alpha: mean * concentration,
            beta: (1.0 - mean) * concentration,
        }
    }

    pub fn mean(&self) -> f64 {
        self.alpha / (self.alpha + self.beta)
    }
}

/// `n_groups` groups that each receive on average `calls_per_day` calls per day.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct VolumeTier {
    pub n_groups: usize,
    pub calls_per_day: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SynthConfig {
    pub tiers: Vec<VolumeTier>,
    /// Inclusive date range.
    pub start: NaiveDate,
    pub end: NaiveDate,
    pub survey_response_rate: f64,
    /// Dirichlet concentration over classes 1..=5.
    pub csat_prior: [f64; 5],
    /// Beta link per class 1..=5; means must strictly decrease.
    pub proba_link: [BetaParams; 5],
    /// Std-dev of the per-group logit offset added to every proba. 0 disables it.
    pub group_shift_sd: f64,
    /// Fraction per day by which each group's prior moves toward a second
    /// Dirichlet draw, counted from `start` and capped at 1.
    pub drift_per_day: Option<f64>,
    pub seed: u64,
}

pub const DEFAULT_RESPONSE_RATE: f64 = 0.08;

impl SynthConfig {
    /// A single-tier population with the default prior and link.
    pub fn new(n_groups: usize, calls_per_day: f64, start: NaiveDate, end: NaiveDate, seed: u64) -> Self {
        SynthConfig {
            tiers: vec![VolumeTier {
                n_groups,
                calls_per_day,
            }],
            start,
            end,
            survey_response_rate: DEFAULT_RESPONSE_RATE,
            csat_prior: [2.0, 1.0, 1.0, 2.0, 4.0],
            proba_link: default_link(),
            group_shift_sd: 0.0,
            drift_per_day: None,
            seed,
        }
    }

    pub fn n_groups(&self) -> usize {
        self.tiers.iter().map(|t| t.n_groups).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.end < self.start {
            return bad(format!("empty date range {} .. {}", self.start, self.end));
        }
        if self.tiers.is_empty() || self.n_groups() == 0 {
            return bad("no groups configured".into());
        }
        if let Some(t) = self.tiers.iter().find(|t| !(t.calls_per_day >= 0.0 && t.calls_per_day.is_finite())) {
            return bad(format!("calls_per_day must be finite and >= 0, got {}", t.calls_per_day));
        }
        if !(self.survey_response_rate > 0.0 && self.survey_response_rate <= 1.0) {
            return bad(format!("survey_response_rate must be in (0,1], got {}", self.survey_response_rate));
        }
        if !self.csat_prior.iter().all(|&a| a > 0.0 && a.is_finite()) {
            return bad(format!("Dirichlet concentrations must be > 0: {:?}", self.csat_prior));
        }
        if !self
            .proba_link
            .iter()
            .all(|b| b.alpha > 0.0 && b.beta > 0.0 && b.alpha.is_finite() && b.beta.is_finite())
        {
            return bad("Beta parameters must be > 0".into());
        }
        if !self.proba_link.windows(2).all(|w| w[0].mean() > w[1].mean()) {
            return bad("proba_link class means must strictly decrease from class 1 to class 5".into());
        }
        if !(self.group_shift_sd >= 0.0 && self.group_shift_sd.is_finite()) {
            return bad(format!("group_shift_sd must be >= 0, got {}", self.group_shift_sd));
        }
        if let Some(d) = self.drift_per_day {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("drift_per_day must be >= 0, got {d}"));
            }
        }
        Ok(())
    }
}

pub fn default_link() -> [BetaParams; 5] {
    [0.85, 0.7, 0.5, 0.3, 0.12].map(|m| BetaParams::from_mean(m, 20.0))
}

pub fn group_id(index: usize) -> GroupId {
    GroupId::new(format!("g{index:04}"))
}

/// Calls ordered by (group, date, index within day).
pub fn generate<T: Scalar>(cfg: &SynthConfig) -> Result<Vec<ScoredCall<T>>> {
    cfg.validate()?;
    let rates: Vec<f64> = cfg
        .tiers
        .iter()
        .flat_map(|t| std::iter::repeat_n(t.calls_per_day, t.n_groups))
        .collect();
    let per_group: Vec<Vec<ScoredCall<T>>> = rates
        .par_iter()
        .enumerate()
        .map(|(g, &rate)| generate_group(cfg, g, rate))
        .collect::<Result<_>>()?;
    Ok(per_group.into_iter().flatten().collect())
}

/// Per-group draws that precede the call stream.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupParams {
    /// Class prior at `start`.
    pub prior: [f64; 5],
    /// Prior the group drifts toward when `drift_per_day` is set.
    pub drift_target: [f64; 5],
    /// Logit shift added to every proba of the group.
    pub shift: f64,
}

impl GroupParams {
    /// Class prior in effect `day` days after `start`.
    pub fn prior_at(&self, cfg: &SynthConfig, day: u64) -> [f64; 5] {
        let lambda = cfg.drift_per_day.map_or(0.0, |d| (d * day as f64).min(1.0));
        std::array::from_fn(|i| (1.0 - lambda) * self.prior[i] + lambda * self.drift_target[i])
    }
}

/// The parameters `generate` draws for group `index`.
pub fn group_params(cfg: &SynthConfig, index: usize) -> Result<GroupParams> {
    cfg.validate()?;
    let mut rng = rng::stream(cfg.seed, &["synth", group_id(index).as_str()]);
    draw_group_params(cfg, &mut rng)
}

fn draw_group_params<R: Rng + ?Sized>(cfg: &SynthConfig, rng: &mut R) -> Result<GroupParams> {
    let dirichlet = Dirichlet::new(cfg.csat_prior).map_err(|e| Error::InvalidConfig(e.to_string()))?;
    let prior: [f64; 5] = dirichlet.sample(rng);
    let drift_target: [f64; 5] = dirichlet.sample(rng);
    let shift = if cfg.group_shift_sd > 0.0 {
        Normal::new(0.0, cfg.group_shift_sd).map_err(|e| Error::InvalidConfig(e.to_string()))?.sample(rng)
    } else {
        0.0
    };
    Ok(GroupParams {
        prior,
        drift_target,
        shift,
    })
}

fn generate_group<T: Scalar>(cfg: &SynthConfig, index: usize, rate: f64) -> Result<Vec<ScoredCall<T>>> {
    let gid = group_id(index);
    let mut rng: StreamRng = rng::stream(cfg.seed, &["synth", gid.as_str()]);
    let params = draw_group_params(cfg, &mut rng)?;
    let shift = params.shift;
    let links: Vec<Beta<f64>> = cfg
        .proba_link
        .iter()
        .map(|b| Beta::new(b.alpha, b.beta).map_err(|e| Error::InvalidConfig(e.to_string())))
        .collect::<Result<_>>()?;
    let volume = if rate > 0.0 {
        Some(Poisson::new(rate).map_err(|e| Error::InvalidConfig(e.to_string()))?)
    } else {
        None
    };

    let n_days = (cfg.end - cfg.start).num_days() as u64 + 1;
    let mut calls = Vec::new();
    for day in 0..n_days {
        let date = cfg.start + Days::new(day);
        let n = volume.as_ref().map_or(0, |v| v.sample(&mut rng) as usize);
        let class_prior = params.prior_at(cfg, day);
        for k in 0..n {
            let class = draw_class(&class_prior, &mut rng);
            let mut p = links[class].sample(&mut rng);
            if shift != 0.0 {
                p = logistic(logit(p) + shift);
            }
            let surveyed = rng.random::<f64>() < cfg.survey_response_rate;
            let level = CsatLevel::from_index(class).expect("class index in 0..5");
            let call_id = format!("{}-{}-{k:04}", gid, date.format("%Y%m%d"));
            let call = ScoredCall::new(call_id, gid.clone(), date, T::of(p.clamp(0.0, 1.0)), surveyed.then_some(level))
                .expect("proba clamped to [0,1]");
            calls.push(call);
        }
    }
    Ok(calls)
}

fn draw_class<R: Rng + ?Sized>(prior: &[f64; 5], rng: &mut R) -> usize {
    let total: f64 = prior.iter().sum();
    let mut u = rng.random::<f64>() * total;
    for (i, &w) in prior.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    4
}

fn logit(p: f64) -> f64 {
    let p = p.clamp(1e-12, 1.0 - 1e-12);
    (p / (1.0 - p)).ln()
}

fn logistic(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

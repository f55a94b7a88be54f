//! Rolling-trial evaluation harness.
//!
//! Each trial fits thresholds on a training window and evaluates five conditions
//! per eligible group:
//!
//! | condition          | thresholds           | evaluated on                      |
//! |--------------------|----------------------|-----------------------------------|
//! | `baseline`         | configured baseline  | test window                       |
//! | `global_threshold` | fit on pooled groups | test window                       |
//! | `group_threshold`  | fit on the group     | test window                       |
//! | `train_period`     | fit on the group     | training window                   |
//! | `bootstrap_train`  | fit on the group     | resamples of the training window  |
//!
//! Every evaluation compares pCSAT with survey CSAT over the same labeled calls.
//! Randomness is keyed by (seed, trial, group, purpose), so trials and groups can
//! run on any number of workers in any order with identical output.

use std::collections::BTreeMap;
use std::fmt;

use chrono::{Days, NaiveDate};
use log::debug;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::domain::{CsatLevel, GroupId, GroupTrainingStats, LossBreakdown, OrdinalDistribution, ScoredCall, Thresholds};
use crate::error::{Error, Result};
use crate::loss::{LossOptions, LossTarget};
use crate::mapping::{map_proba_with, BoundaryMode};
use crate::optimizer::{fit_random_search, FitResult, LabeledPool, SearchOptions, DEFAULT_ITERATIONS};
use crate::rng;
use crate::scalar::Scalar;
use crate::strategy::{eligibility, Eligibility, StrategyConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct TrialWindows {
    pub train_days: u32,
    pub test_days: u32,
    pub stride_days: u32,
    pub n_trials: u32,
    pub start_date: NaiveDate,
}

impl TrialWindows {
    pub fn new(start_date: NaiveDate) -> Self {
        TrialWindows {
            train_days: 60,
            test_days: 120,
            stride_days: 30,
            n_trials: 7,
            start_date,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_days == 0 || self.test_days == 0 || self.stride_days == 0 || self.n_trials == 0 {
            return Err(Error::InvalidConfig(
                "train_days, test_days, stride_days and n_trials must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// Half-open `[start, end)` training window of trial `k`.
    pub fn train_window(&self, k: u32) -> (NaiveDate, NaiveDate) {
        let start = self.start_date + Days::new(u64::from(k) * u64::from(self.stride_days));
        (start, start + Days::new(u64::from(self.train_days)))
    }

    /// Half-open test window of trial `k`, immediately after its training window.
    pub fn test_window(&self, k: u32) -> (NaiveDate, NaiveDate) {
        let (_, train_end) = self.train_window(k);
        (train_end, train_end + Days::new(u64::from(self.test_days)))
    }

    /// Last day (inclusive) any trial reads.
    pub fn last_day(&self) -> NaiveDate {
        self.test_window(self.n_trials - 1).1 - Days::new(1)
    }
}

fn in_window(date: NaiveDate, (start, end): (NaiveDate, NaiveDate)) -> bool {
    start <= date && date < end
}

/// Survey-response volume bin. `upper: None` is unbounded.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VolumeBin {
    pub label: String,
    pub lower: u64,
    pub upper: Option<u64>,
}

impl VolumeBin {
    pub fn contains(&self, n: u64) -> bool {
        n >= self.lower && self.upper.is_none_or(|u| n <= u)
    }

    /// Parses `a-b` or `>a` (the latter meaning `a+1` and up).
    pub fn parse(text: &str) -> Result<Self> {
        let s = text.trim();
        let bad = || Error::InvalidConfig(format!("bad volume bin {text:?}; expected `a-b` or `>a`"));
        if let Some(rest) = s.strip_prefix('>') {
            let a: u64 = rest.trim().parse().map_err(|_| bad())?;
            return Ok(VolumeBin {
                label: format!(">{a}"),
                lower: a + 1,
                upper: None,
            });
        }
        let (a, b) = s.split_once('-').ok_or_else(bad)?;
        let lower: u64 = a.trim().parse().map_err(|_| bad())?;
        let upper: u64 = b.trim().parse().map_err(|_| bad())?;
        if upper < lower {
            return Err(bad());
        }
        Ok(VolumeBin {
            label: format!("{lower}-{upper}"),
            lower,
            upper: Some(upper),
        })
    }
}

pub fn default_bins() -> Vec<VolumeBin> {
    ["1-50", "51-200", "201-500", "501-1000", ">1000"]
        .iter()
        .map(|s| VolumeBin::parse(s).expect("default bins parse"))
        .collect()
}

/// Bins must tile `[1, inf)` without gaps or overlaps, in ascending order.
pub fn validate_bins(bins: &[VolumeBin]) -> Result<()> {
    let mut next = 1u64;
    for (i, bin) in bins.iter().enumerate() {
        if bin.lower != next {
            return Err(Error::InvalidConfig(format!(
                "volume bin {:?} should start at {next}",
                bin.label
            )));
        }
        match bin.upper {
            Some(u) => next = u + 1,
            None if i + 1 == bins.len() => return Ok(()),
            None => {
                return Err(Error::InvalidConfig(format!(
                    "unbounded volume bin {:?} must be last",
                    bin.label
                )))
            }
        }
    }
    Err(Error::InvalidConfig("last volume bin must be unbounded".into()))
}

pub fn bin_for(n: u64, bins: &[VolumeBin]) -> Option<&VolumeBin> {
    bins.iter().find(|b| b.contains(n))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Condition {
    Baseline,
    GlobalThreshold,
    GroupThreshold,
    TrainPeriod,
    BootstrapTrain,
}

impl Condition {
    pub const ALL: [Condition; 5] = [
        Condition::Baseline,
        Condition::GlobalThreshold,
        Condition::GroupThreshold,
        Condition::TrainPeriod,
        Condition::BootstrapTrain,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Condition::Baseline => "baseline",
            Condition::GlobalThreshold => "global_threshold",
            Condition::GroupThreshold => "group_threshold",
            Condition::TrainPeriod => "train_period",
            Condition::BootstrapTrain => "bootstrap_train",
        }
    }
}

impl fmt::Display for Condition {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionReport<T> {
    pub trial_index: u32,
    pub group_id: GroupId,
    pub condition: Condition,
    pub bin: String,
    pub n_train_responses: u64,
    /// Labeled calls of the group in the trial's test window (a group attribute,
    /// reported on every condition row).
    pub n_test_responses: u64,
    pub metrics: LossBreakdown<T>,
    pub delta_mean_signed: T,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SkipRecord {
    pub trial_index: u32,
    pub group_id: GroupId,
    pub reason: String,
}

/// Fit metadata kept for the run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitRecord<T> {
    pub trial_index: u32,
    /// `None` for the pooled global fit.
    pub group_id: Option<GroupId>,
    pub thresholds: Thresholds<T>,
    pub train_loss: T,
    pub warm_start_selected: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig<T> {
    pub windows: TrialWindows,
    pub strategy: StrategyConfig<T>,
    pub iterations: usize,
    pub seed: u64,
    pub bootstrap_resamples: usize,
    pub warm_start: bool,
    pub bins: Vec<VolumeBin>,
    pub boundary: BoundaryMode,
    pub loss: LossOptions,
}

pub const DEFAULT_BOOTSTRAP_RESAMPLES: usize = 200;

impl<T: Scalar> ExperimentConfig<T> {
    pub fn new(windows: TrialWindows, strategy: StrategyConfig<T>, seed: u64) -> Self {
        ExperimentConfig {
            windows,
            strategy,
            iterations: DEFAULT_ITERATIONS,
            seed,
            bootstrap_resamples: DEFAULT_BOOTSTRAP_RESAMPLES,
            warm_start: true,
            bins: default_bins(),
            boundary: BoundaryMode::default(),
            loss: LossOptions::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.windows.validate()?;
        self.strategy.validate()?;
        validate_bins(&self.bins)?;
        if self.bootstrap_resamples == 0 {
            return Err(Error::InvalidConfig("bootstrap_resamples must be at least 1".into()));
        }
        if self.iterations == 0 && !self.warm_start {
            return Err(Error::NoCandidates);
        }
        Ok(())
    }

    fn search_options(&self, seed: u64) -> SearchOptions<T> {
        let opts = SearchOptions::new(self.iterations, seed)
            .with_boundary(self.boundary)
            .with_loss(self.loss);
        if self.warm_start {
            opts.with_warm_start(self.strategy.baseline_thresholds)
        } else {
            opts
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialOutcome<T> {
    pub reports: Vec<ConditionReport<T>>,
    pub skips: Vec<SkipRecord>,
    pub fits: Vec<FitRecord<T>>,
}

impl<T> TrialOutcome<T> {
    fn empty() -> Self {
        TrialOutcome {
            reports: Vec::new(),
            skips: Vec::new(),
            fits: Vec::new(),
        }
    }

    fn extend(&mut self, other: TrialOutcome<T>) {
        self.reports.extend(other.reports);
        self.skips.extend(other.skips);
        self.fits.extend(other.fits);
    }
}

/// Seed of the fit over the pool made of `members`. A pool with the same members
/// in the same trial always gets the same stream, whether it is the global pool or
/// a single group's.
fn fit_seed(seed: u64, trial: u32, members: &[&GroupId]) -> u64 {
    let trial = trial.to_string();
    let mut labels: Vec<&str> = vec!["fit", &trial];
    labels.extend(members.iter().map(|g| g.as_str()));
    rng::derive_seed(seed, &labels)
}

/// Labeled calls per group, in input order.
fn labeled_by_group<T: Scalar>(calls: &[ScoredCall<T>]) -> BTreeMap<GroupId, Vec<&ScoredCall<T>>> {
    let mut map: BTreeMap<GroupId, Vec<&ScoredCall<T>>> = BTreeMap::new();
    for call in calls.iter().filter(|c| c.is_labeled()) {
        map.entry(call.group_id.clone()).or_default().push(call);
    }
    map
}

pub fn run_trials<T: Scalar>(calls: &[ScoredCall<T>], cfg: &ExperimentConfig<T>) -> Result<TrialOutcome<T>> {
    cfg.validate()?;
    check_coverage(calls, &cfg.windows)?;
    let by_group = labeled_by_group(calls);
    let outcomes: Vec<TrialOutcome<T>> = (0..cfg.windows.n_trials)
        .into_par_iter()
        .map(|k| run_trial_indexed(calls, &by_group, cfg, k))
        .collect::<Result<_>>()?;
    let mut all = TrialOutcome::empty();
    for outcome in outcomes {
        all.extend(outcome);
    }
    Ok(all)
}

/// One trial in isolation; output equals the matching slice of [`run_trials`].
pub fn run_trial<T: Scalar>(calls: &[ScoredCall<T>], cfg: &ExperimentConfig<T>, k: u32) -> Result<TrialOutcome<T>> {
    cfg.validate()?;
    check_coverage(calls, &cfg.windows)?;
    if k >= cfg.windows.n_trials {
        return Err(Error::InvalidConfig(format!(
            "trial {k} out of range (n_trials = {})",
            cfg.windows.n_trials
        )));
    }
    run_trial_indexed(calls, &labeled_by_group(calls), cfg, k)
}

fn check_coverage<T: Scalar>(calls: &[ScoredCall<T>], windows: &TrialWindows) -> Result<()> {
    let first = calls.iter().map(|c| c.date).min().ok_or(Error::EmptyInput)?;
    let last = calls.iter().map(|c| c.date).max().ok_or(Error::EmptyInput)?;
    if windows.start_date < first || windows.last_day() > last {
        return Err(Error::InsufficientData(format!(
            "trials need data from {} to {}, input covers {} to {}",
            windows.start_date,
            windows.last_day(),
            first,
            last
        )));
    }
    Ok(())
}

struct GroupWindowData<'a, T> {
    id: &'a GroupId,
    train: Vec<&'a ScoredCall<T>>,
    test: Vec<&'a ScoredCall<T>>,
}

fn run_trial_indexed<T: Scalar>(
    calls: &[ScoredCall<T>],
    by_group: &BTreeMap<GroupId, Vec<&ScoredCall<T>>>,
    cfg: &ExperimentConfig<T>,
    k: u32,
) -> Result<TrialOutcome<T>> {
    let train_w = cfg.windows.train_window(k);
    let test_w = cfg.windows.test_window(k);
    let mut outcome = TrialOutcome::empty();

    let mut eligible: Vec<GroupWindowData<'_, T>> = Vec::new();
    for (id, group_calls) in by_group {
        let train: Vec<_> = group_calls.iter().copied().filter(|c| in_window(c.date, train_w)).collect();
        if train.is_empty() {
            continue;
        }
        let stats = GroupTrainingStats::from_calls(id.clone(), train.iter().copied());
        if eligibility(&stats, &cfg.strategy) == Eligibility::Excluded {
            outcome.skips.push(SkipRecord {
                trial_index: k,
                group_id: id.clone(),
                reason: format!("ineligible: {} high / {} low responses in training window", stats.n_high, stats.n_low),
            });
            continue;
        }
        let test = group_calls.iter().copied().filter(|c| in_window(c.date, test_w)).collect();
        eligible.push(GroupWindowData { id, train, test });
    }
    if eligible.is_empty() {
        return Err(Error::NoEligibleGroups { trial: k as usize });
    }

    // Pooled training calls of eligible groups, in input order.
    let members: Vec<&GroupId> = eligible.iter().map(|g| g.id).collect();
    let global_pool = LabeledPool::from_calls(
        calls
            .iter()
            .filter(|c| c.is_labeled() && in_window(c.date, train_w) && members.binary_search(&&c.group_id).is_ok()),
    )?;
    let global_fit = fit_random_search(&global_pool, &cfg.search_options(fit_seed(cfg.seed, k, &members)))?;
    outcome.fits.push(FitRecord {
        trial_index: k,
        group_id: None,
        thresholds: global_fit.thresholds,
        train_loss: global_fit.loss.total,
        warm_start_selected: global_fit.warm_start_selected,
    });

    let per_group: Vec<Result<TrialOutcome<T>>> = eligible
        .par_iter()
        .map(|g| evaluate_group(g, &global_fit, cfg, k))
        .collect();
    for result in per_group {
        outcome.extend(result?);
    }
    Ok(outcome)
}

fn evaluate_group<T: Scalar>(
    g: &GroupWindowData<'_, T>,
    global_fit: &FitResult<T>,
    cfg: &ExperimentConfig<T>,
    k: u32,
) -> Result<TrialOutcome<T>> {
    let mut outcome = TrialOutcome::empty();
    if g.test.is_empty() {
        debug!("trial {k}: skipping group {} with no test-window responses", g.id);
        outcome.skips.push(SkipRecord {
            trial_index: k,
            group_id: g.id.clone(),
            reason: "no survey responses in test window".into(),
        });
        return Ok(outcome);
    }

    let train_pool = LabeledPool::from_calls(g.train.iter().copied())?;
    let group_fit = fit_random_search(&train_pool, &cfg.search_options(fit_seed(cfg.seed, k, &[g.id])))?;
    outcome.fits.push(FitRecord {
        trial_index: k,
        group_id: Some(g.id.clone()),
        thresholds: group_fit.thresholds,
        train_loss: group_fit.loss.total,
        warm_start_selected: group_fit.warm_start_selected,
    });

    let n_train = g.train.len() as u64;
    let n_test = g.test.len() as u64;
    let bin = bin_for(n_train, &cfg.bins)
        .map(|b| b.label.clone())
        .unwrap_or_else(|| "unbinned".into());
    let report = |condition, (metrics, delta_mean_signed): (LossBreakdown<T>, T)| ConditionReport {
        trial_index: k,
        group_id: g.id.clone(),
        condition,
        bin: bin.clone(),
        n_train_responses: n_train,
        n_test_responses: n_test,
        metrics,
        delta_mean_signed,
    };

    let eval = |th: &Thresholds<T>, calls: &[&ScoredCall<T>]| evaluate(calls, th, cfg.boundary, cfg.loss);
    outcome
        .reports
        .push(report(Condition::Baseline, eval(&cfg.strategy.baseline_thresholds, &g.test)?));
    outcome
        .reports
        .push(report(Condition::GlobalThreshold, eval(&global_fit.thresholds, &g.test)?));
    outcome
        .reports
        .push(report(Condition::GroupThreshold, eval(&group_fit.thresholds, &g.test)?));
    outcome
        .reports
        .push(report(Condition::TrainPeriod, eval(&group_fit.thresholds, &g.train)?));

    let mut rng = rng::stream(cfg.seed, &["bootstrap", &k.to_string(), g.id.as_str()]);
    let boot = bootstrap(&g.train, &group_fit.thresholds, cfg, &mut rng)?;
    outcome.reports.push(report(Condition::BootstrapTrain, boot));
    Ok(outcome)
}

/// Loss (and signed mean gap) of `th` over labeled `calls`.
pub fn evaluate<T: Scalar>(
    calls: &[&ScoredCall<T>],
    th: &Thresholds<T>,
    boundary: BoundaryMode,
    loss: LossOptions,
) -> Result<(LossBreakdown<T>, T)> {
    let mut pred = OrdinalDistribution::default();
    let mut obs = OrdinalDistribution::default();
    for call in calls {
        let level = call.survey_csat.ok_or(Error::EmptyInput)?;
        obs.add(level);
        pred.add(map_proba_with(call.proba(), th, boundary));
    }
    compare(&pred, &obs, loss)
}

fn compare<T: Scalar>(pred: &OrdinalDistribution, obs: &OrdinalDistribution, opts: LossOptions) -> Result<(LossBreakdown<T>, T)> {
    let target = LossTarget::new(obs, opts)?;
    let metrics = target.loss(pred)?;
    let signed = crate::loss::mean_of::<T>(pred)? - target.mean();
    Ok((metrics, signed))
}

/// Mean absolute metrics over with-replacement resamples of `train` (same size).
fn bootstrap<T: Scalar, R: Rng + ?Sized>(
    train: &[&ScoredCall<T>],
    th: &Thresholds<T>,
    cfg: &ExperimentConfig<T>,
    rng: &mut R,
) -> Result<(LossBreakdown<T>, T)> {
    let pairs: Vec<(CsatLevel, CsatLevel)> = train
        .iter()
        .map(|c| {
            let obs = c.survey_csat.ok_or(Error::EmptyInput)?;
            Ok((map_proba_with(c.proba(), th, cfg.boundary), obs))
        })
        .collect::<Result<_>>()?;
    let n = pairs.len();
    let (mut pct, mut mean, mut mse, mut signed) = (T::zero(), T::zero(), T::zero(), T::zero());
    for _ in 0..cfg.bootstrap_resamples {
        let mut pred = OrdinalDistribution::default();
        let mut obs = OrdinalDistribution::default();
        for _ in 0..n {
            let (p, o) = pairs[rng.random_range(0..n)];
            pred.add(p);
            obs.add(o);
        }
        let (m, s) = compare::<T>(&pred, &obs, cfg.loss)?;
        pct = pct + m.delta_pct_satisfied;
        mean = mean + m.delta_mean;
        mse = mse + m.mse;
        signed = signed + s;
    }
    let b = T::of_count(cfg.bootstrap_resamples);
    Ok((LossBreakdown::from_components(pct / b, mean / b, mse / b), signed / b))
}

/// Mean metrics of one (bin, condition) cell.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinCell<T> {
    pub bin: String,
    pub condition: Condition,
    pub n: usize,
    pub delta_pct_satisfied: T,
    pub delta_mean_signed: T,
    pub delta_mean_abs: T,
    pub mse: T,
    pub loss_total: T,
}

/// Arithmetic mean of each metric per (bin, condition), binning by training-window
/// survey responses. Cells without reports are omitted. Output follows bin order,
/// then condition order.
pub fn aggregate_bins<T: Scalar>(reports: &[ConditionReport<T>], bins: &[VolumeBin]) -> Vec<BinCell<T>> {
    let mut cells = Vec::new();
    for bin in bins {
        for condition in Condition::ALL {
            let members: Vec<&ConditionReport<T>> = reports
                .iter()
                .filter(|r| r.condition == condition && bin.contains(r.n_train_responses))
                .collect();
            if members.is_empty() {
                continue;
            }
            let n = T::of_count(members.len());
            let avg = |f: &dyn Fn(&ConditionReport<T>) -> T| members.iter().fold(T::zero(), |acc, r| acc + f(r)) / n;
            cells.push(BinCell {
                bin: bin.label.clone(),
                condition,
                n: members.len(),
                delta_pct_satisfied: avg(&|r| r.metrics.delta_pct_satisfied),
                delta_mean_signed: avg(&|r| r.delta_mean_signed),
                delta_mean_abs: avg(&|r| r.metrics.delta_mean),
                mse: avg(&|r| r.metrics.mse),
                loss_total: avg(&|r| r.metrics.total),
            });
        }
    }
    cells
}

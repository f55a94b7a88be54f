//! Threshold fitting.
//!
//! [`fit_random_search`] is the production fitter: draw four uniform values per
//! iteration, sort them into descending thresholds, keep the candidate with the
//! lowest loss. [`fit_exhaustive`] enumerates every distinct class assignment of a
//! small pool and serves as a test oracle.

use rand::Rng;
use serde::Serialize;

use crate::domain::{CsatLevel, LossBreakdown, OrdinalDistribution, ScoredCall, Thresholds};
use crate::error::{Error, Result};
use crate::loss::{loss_between_with, LossOptions, LossTarget};
use crate::mapping::{map_probas, BoundaryMode};
use crate::rng;
use crate::scalar::Scalar;

pub const DEFAULT_ITERATIONS: usize = 5000;
pub const DEFAULT_MAX_DISTINCT: usize = 40;

/// Starting value of the running best loss. Every attainable loss is below it.
pub const INITIAL_BEST_LOSS: f64 = 1000.0;

/// Labeled calls to fit on, reduced to (proba, survey level) pairs.
#[derive(Debug, Clone)]
pub struct LabeledPool<T> {
    probas: Vec<T>,
    labels: Vec<CsatLevel>,
    sorted: Vec<T>,
    observed: OrdinalDistribution,
}

impl<T: Scalar> LabeledPool<T> {
    /// Keeps the labeled calls, in order. Fails with `EmptyInput` if there are none.
    pub fn from_calls<'a>(calls: impl IntoIterator<Item = &'a ScoredCall<T>>) -> Result<Self> {
        Self::from_pairs(
            calls
                .into_iter()
                .filter_map(|c| c.survey_csat.map(|level| (c.proba(), level))),
        )
    }

    pub fn from_pairs(pairs: impl IntoIterator<Item = (T, CsatLevel)>) -> Result<Self> {
        let (probas, labels): (Vec<T>, Vec<CsatLevel>) = pairs.into_iter().unzip();
        if probas.is_empty() {
            return Err(Error::EmptyInput);
        }
        if let Some(p) = probas.iter().find(|&&p| !(p >= T::zero() && p <= T::one())) {
            return Err(Error::InvalidConfig(format!("pool proba {p} outside [0,1]")));
        }
        let mut sorted = probas.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("probas are not NaN"));
        let observed = OrdinalDistribution::from_labels(labels.iter().copied());
        Ok(LabeledPool {
            probas,
            labels,
            sorted,
            observed,
        })
    }

    pub fn len(&self) -> usize {
        self.probas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probas.is_empty()
    }

    pub fn probas(&self) -> &[T] {
        &self.probas
    }

    pub fn labels(&self) -> &[CsatLevel] {
        &self.labels
    }

    /// Survey CSAT distribution of the pool.
    pub fn observed(&self) -> &OrdinalDistribution {
        &self.observed
    }

    /// Sorted distinct probabilities, ascending.
    pub fn distinct_probas(&self) -> Vec<T> {
        let mut d = self.sorted.clone();
        d.dedup();
        d
    }

    /// pCSAT distribution under `th`, computed by binary search over the sorted
    /// probabilities. Agrees with [`crate::mapping::map_probas`].
    pub fn predicted(&self, th: &Thresholds<T>, mode: BoundaryMode) -> OrdinalDistribution {
        let at_or_below = |t: T| -> u64 {
            let k = match mode {
                BoundaryMode::Higher => self.sorted.partition_point(|&p| p <= t),
                BoundaryMode::Lower => self.sorted.partition_point(|&p| p < t),
            };
            k as u64
        };
        let [t12, t23, t34, t45] = th.as_array().map(at_or_below);
        let n = self.sorted.len() as u64;
        OrdinalDistribution::from_counts([n - t12, t12 - t23, t23 - t34, t34 - t45, t45])
    }

    pub fn loss(&self, th: &Thresholds<T>, mode: BoundaryMode, opts: LossOptions) -> Result<LossBreakdown<T>> {
        loss_between_with(&self.predicted(th, mode), &self.observed, opts)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOptions<T> {
    pub iterations: usize,
    pub seed: u64,
    /// Evaluated as iteration 0, so the fit never does worse than it.
    pub warm_start: Option<Thresholds<T>>,
    pub boundary: BoundaryMode,
    pub loss: LossOptions,
}

impl<T> SearchOptions<T> {
    pub fn new(iterations: usize, seed: u64) -> Self {
        SearchOptions {
            iterations,
            seed,
            warm_start: None,
            boundary: BoundaryMode::default(),
            loss: LossOptions::default(),
        }
    }

    pub fn with_warm_start(mut self, th: Thresholds<T>) -> Self {
        self.warm_start = Some(th);
        self
    }

    pub fn with_boundary(mut self, mode: BoundaryMode) -> Self {
        self.boundary = mode;
        self
    }

    pub fn with_loss(mut self, opts: LossOptions) -> Self {
        self.loss = opts;
        self
    }
}

impl<T> Default for SearchOptions<T> {
    fn default() -> Self {
        Self::new(DEFAULT_ITERATIONS, 0)
    }
}

/// A new running best, recorded at the iteration where it was found.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Improvement<T> {
    pub iteration: usize,
    pub loss: T,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FitResult<T> {
    pub thresholds: Thresholds<T>,
    pub loss: LossBreakdown<T>,
    pub iterations_run: usize,
    pub iteration_of_best: usize,
    pub seed: u64,
    /// The warm start was never beaten by a drawn candidate.
    pub warm_start_selected: bool,
    /// Running-best trace, one entry per strict improvement.
    pub history: Vec<Improvement<T>>,
}

impl<T: Scalar> FitResult<T> {
    /// Best loss among iterations `0..=iteration`, if any candidate had been seen by then.
    pub fn best_loss_at(&self, iteration: usize) -> Option<T> {
        self.history
            .iter()
            .take_while(|imp| imp.iteration <= iteration)
            .last()
            .map(|imp| imp.loss)
    }
}

/// Draws four uniform values in (0,1), sorted descending. Redraws on ties or on
/// values that collapse to 0 or 1 in `T`.
pub fn draw_thresholds<T: Scalar, R: Rng + ?Sized>(rng: &mut R) -> Thresholds<T> {
    loop {
        let mut t: [T; 4] = std::array::from_fn(|_| T::of(rng.random::<f64>()));
        t.sort_by(|a, b| b.partial_cmp(a).expect("uniform draws are not NaN"));
        if let Ok(th) = Thresholds::from_array(t) {
            return th;
        }
    }
}

pub fn fit_random_search<T: Scalar>(pool: &LabeledPool<T>, opts: &SearchOptions<T>) -> Result<FitResult<T>> {
    if opts.iterations == 0 && opts.warm_start.is_none() {
        return Err(Error::NoCandidates);
    }
    let target = LossTarget::new(pool.observed(), opts.loss)?;
    let mut rng = rng::seeded(opts.seed);

    let mut best_total = T::of(INITIAL_BEST_LOSS);
    let mut best: Option<(Thresholds<T>, LossBreakdown<T>, usize)> = None;
    let mut history = Vec::new();

    let mut consider = |iteration: usize, th: Thresholds<T>| -> Result<()> {
        let loss = target.loss(&pool.predicted(&th, opts.boundary))?;
        if loss.total < best_total {
            best_total = loss.total;
            best = Some((th, loss, iteration));
            history.push(Improvement {
                iteration,
                loss: loss.total,
            });
        }
        Ok(())
    };

    if let Some(th) = opts.warm_start {
        consider(0, th)?;
    }
    for iteration in 1..=opts.iterations {
        consider(iteration, draw_thresholds(&mut rng))?;
    }

    let (thresholds, loss, iteration_of_best) = best.ok_or(Error::NoCandidates)?;
    Ok(FitResult {
        thresholds,
        loss,
        iterations_run: opts.iterations,
        iteration_of_best,
        seed: opts.seed,
        warm_start_selected: opts.warm_start.is_some() && iteration_of_best == 0,
        history,
    })
}

/// Open probability interval in which a threshold induces one fixed split of the pool.
#[derive(Debug, Clone, Copy)]
struct Gap<T> {
    lo: T,
    hi: T,
}

/// Global optimum over all class assignments reachable by thresholds.
///
/// Candidate positions are the open gaps between adjacent distinct probabilities,
/// plus the gap below the smallest and above the largest. Each multiset of four
/// positions is one equivalence class of thresholds; thresholds sharing a gap are
/// spread evenly inside it. Every candidate is mapped call by call, independently of
/// the binary-search path the random search uses.
pub fn fit_exhaustive<T: Scalar>(
    pool: &LabeledPool<T>,
    max_distinct: usize,
    boundary: BoundaryMode,
    loss_opts: LossOptions,
) -> Result<FitResult<T>> {
    let distinct = pool.distinct_probas();
    if distinct.len() > max_distinct {
        return Err(Error::TooLarge {
            distinct: distinct.len(),
            max: max_distinct,
        });
    }

    let mut gaps = Vec::with_capacity(distinct.len() + 1);
    let (first, last) = (distinct[0], distinct[distinct.len() - 1]);
    if first > T::zero() {
        gaps.push(Gap { lo: T::zero(), hi: first });
    }
    gaps.extend(distinct.windows(2).map(|w| Gap { lo: w[0], hi: w[1] }));
    if last < T::one() {
        gaps.push(Gap { lo: last, hi: T::one() });
    }

    let probas = pool.probas();
    let mut best: Option<(Thresholds<T>, LossBreakdown<T>, usize)> = None;
    let mut history = Vec::new();
    let mut evaluated = 0usize;
    let g = gaps.len();
    for a in 0..g {
        for b in a..g {
            for c in b..g {
                for d in c..g {
                    let Some(th) = place(&gaps, [a, b, c, d]) else {
                        continue;
                    };
                    evaluated += 1;
                    let pred = map_probas(probas.iter().copied(), &th, boundary)?;
                    let loss = loss_between_with(&pred, pool.observed(), loss_opts)?;
                    if best.as_ref().is_none_or(|(_, l, _)| loss.total < l.total) {
                        best = Some((th, loss, evaluated));
                        history.push(Improvement {
                            iteration: evaluated,
                            loss: loss.total,
                        });
                    }
                }
            }
        }
    }

    let (thresholds, loss, iteration_of_best) = best.ok_or(Error::NoCandidates)?;
    Ok(FitResult {
        thresholds,
        loss,
        iterations_run: evaluated,
        iteration_of_best,
        seed: 0,
        warm_start_selected: false,
        history,
    })
}

/// Thresholds for gap indices in ascending order (`idx[0]` holds `t45`).
fn place<T: Scalar>(gaps: &[Gap<T>], idx: [usize; 4]) -> Option<Thresholds<T>> {
    let mut ascending = [T::zero(); 4];
    let mut i = 0;
    while i < 4 {
        let gap = gaps[idx[i]];
        let k = idx[i..].iter().take_while(|&&j| j == idx[i]).count();
        for j in 0..k {
            let frac = T::of_count(j + 1) / T::of_count(k + 1);
            ascending[i + j] = gap.lo + (gap.hi - gap.lo) * frac;
        }
        i += k;
    }
    Thresholds::new(ascending[3], ascending[2], ascending[1], ascending[0]).ok()
}

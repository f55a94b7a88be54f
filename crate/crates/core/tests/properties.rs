use pcsat::mapping::{map_all, map_proba, map_proba_with, map_probas};
use pcsat::optimizer::{fit_exhaustive, fit_random_search, DEFAULT_MAX_DISTINCT};
use pcsat::loss::LossOptions;
use pcsat::{BoundaryMode, CsatLevel, Error, LabeledPool, OrdinalDistribution, ScoredCall, SearchOptions, Thresholds};
use chrono::NaiveDate;
use proptest::prelude::*;

fn thresholds() -> impl Strategy<Value = Thresholds> {
    prop::array::uniform4(0.001f64..0.999)
        .prop_map(|mut t| {
            t.sort_by(|a, b| b.partial_cmp(a).unwrap());
            t
        })
        .prop_filter_map("strictly descending", |t| Thresholds::from_array(t).ok())
}

fn level(l: i64) -> CsatLevel {
    CsatLevel::new(l).unwrap()
}

fn call(p: f64) -> ScoredCall {
    let d = NaiveDate::from_ymd_opt(2024, 1, 1).unwrap();
    ScoredCall::new("c", "g".into(), d, p, None).unwrap()
}

#[test]
fn map_all_examples() {
    let th = Thresholds::new(0.9, 0.7, 0.5, 0.3).unwrap();
    let calls: Vec<_> = [0.05, 0.35, 0.55, 0.75, 0.95].into_iter().map(call).collect();
    assert_eq!(map_all(&calls, &th).unwrap().counts(), [1, 1, 1, 1, 1]);

    let zeros: Vec<_> = (0..10).map(|_| call(0.0)).collect();
    assert_eq!(map_all(&zeros, &Thresholds::default()).unwrap().counts(), [0, 0, 0, 0, 10]);

    let th = Thresholds::new(0.9, 0.7, 0.5, 0.3).unwrap();
    assert_eq!(map_all(&[call(0.93)], &th).unwrap().counts(), [1, 0, 0, 0, 0]);
    let none: [ScoredCall; 0] = [];
    assert!(matches!(map_all(&none, &th), Err(Error::EmptyInput)));
}

#[test]
fn hand_boundary_table() {
    let th = Thresholds::new(0.8, 0.6, 0.4, 0.2).unwrap();
    let ps = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0];
    let higher: Vec<u8> = ps.iter().map(|&p| map_proba(p, &th).get()).collect();
    assert_eq!(higher, [5, 5, 4, 3, 2, 1]);
    let lower: Vec<u8> = ps.iter().map(|&p| map_proba_with(p, &th, BoundaryMode::Lower).get()).collect();
    assert_eq!(lower, [5, 4, 3, 2, 1, 1]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn mapping_is_monotone(th in thresholds(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        prop_assert!(map_proba(lo, &th) >= map_proba(hi, &th));
    }

    #[test]
    fn mapping_partitions(th in thresholds(), ps in prop::collection::vec(0.0f64..=1.0, 1..100)) {
        let d = map_probas(ps.iter().copied(), &th, BoundaryMode::Higher).unwrap();
        prop_assert_eq!(d.total(), ps.len() as u64);
    }

    #[test]
    fn raising_thresholds_never_lowers_pcsat(th in thresholds(), p in 0.0f64..=1.0, bump in 0.0f64..0.5) {
        let t = th.as_array();
        let raised = [t[0] + bump * (1.0 - t[0]), t[1] + bump * (1.0 - t[1]), t[2] + bump * (1.0 - t[2]), t[3] + bump * (1.0 - t[3])];
        if let Ok(raised) = Thresholds::from_array(raised) {
            prop_assert!(map_proba(p, &raised) >= map_proba(p, &th));
        }
    }

    #[test]
    fn threshold_value_maps_to_more_satisfied_side(th in thresholds()) {
        for (i, t) in th.as_array().into_iter().enumerate() {
            prop_assert_eq!(map_proba(t, &th).get() as usize, i + 2);
        }
    }

    #[test]
    fn fast_path_agrees_with_mapping(th in thresholds(), pairs in pool_pairs(60), lower in any::<bool>()) {
        let mode = if lower { BoundaryMode::Lower } else { BoundaryMode::Higher };
        let pool = LabeledPool::from_pairs(pairs).unwrap();
        let direct = map_probas(pool.probas().iter().copied(), &th, mode).unwrap();
        prop_assert_eq!(pool.predicted(&th, mode), direct);
    }
}

/// Probas on a 0.05 grid, so pools stay under the oracle size limit and hit thresholds exactly.
fn pool_pairs(max: usize) -> impl Strategy<Value = Vec<(f64, CsatLevel)>> {
    prop::collection::vec((0u32..=20, 1i64..=5), 1..max)
        .prop_map(|v| v.into_iter().map(|(k, l)| (k as f64 / 20.0, level(l))).collect())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn oracle_dominates_random_search(pairs in pool_pairs(30), seed in any::<u64>()) {
        let pool = LabeledPool::from_pairs(pairs).unwrap();
        let rs = fit_random_search(&pool, &SearchOptions::new(500, seed)).unwrap();
        let ex = fit_exhaustive(&pool, DEFAULT_MAX_DISTINCT, BoundaryMode::Higher, LossOptions::default()).unwrap();
        prop_assert!(ex.loss.total <= rs.loss.total + 1e-12);
    }

    #[test]
    fn warm_start_never_loses(pairs in pool_pairs(40), seed in any::<u64>(), warm in thresholds()) {
        let pool = LabeledPool::from_pairs(pairs).unwrap();
        let warm_loss = pool.loss(&warm, BoundaryMode::Higher, LossOptions::default()).unwrap();
        let fit = fit_random_search(&pool, &SearchOptions::new(50, seed).with_warm_start(warm)).unwrap();
        prop_assert!(fit.loss.total <= warm_loss.total);
        prop_assert!(fit.iteration_of_best <= fit.iterations_run);
    }

    #[test]
    fn perturbing_within_gap_keeps_loss(pairs in pool_pairs(30), nudge in prop::array::uniform4(0.0f64..1.0)) {
        let pool = LabeledPool::from_pairs(pairs).unwrap();
        let ex = fit_exhaustive(&pool, DEFAULT_MAX_DISTINCT, BoundaryMode::Higher, LossOptions::default()).unwrap();
        let distinct = pool.distinct_probas();
        // Move each threshold to another point of its enclosing open gap, keeping the order.
        let t = ex.thresholds.as_array();
        let gap = |x: f64| {
            let lo = distinct.iter().copied().filter(|&p| p < x).fold(0.0, f64::max);
            let hi = distinct.iter().copied().filter(|&p| p > x).fold(1.0, f64::min);
            (lo, hi)
        };
        let mut moved = [0.0; 4];
        for i in 0..4 {
            let (lo, hi) = gap(t[i]);
            moved[i] = lo + (hi - lo) * (0.05 + 0.9 * nudge[i]);
        }
        moved.sort_by(|a, b| b.partial_cmp(a).unwrap());
        if let Ok(moved) = Thresholds::from_array(moved) {
            let l = pool.loss(&moved, BoundaryMode::Higher, LossOptions::default()).unwrap();
            prop_assert!((l.total - ex.loss.total).abs() < 1e-12);
        }
    }

    #[test]
    fn random_search_is_deterministic(pairs in pool_pairs(40), seed in any::<u64>()) {
        let pool = LabeledPool::from_pairs(pairs).unwrap();
        let a = fit_random_search(&pool, &SearchOptions::new(200, seed)).unwrap();
        let b = fit_random_search(&pool, &SearchOptions::new(200, seed)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn fit_loss_is_best_over_replayed_candidates(pairs in pool_pairs(40), seed in any::<u64>()) {
        use pcsat::optimizer::draw_thresholds;
        let pool = LabeledPool::from_pairs(pairs).unwrap();
        let fit = fit_random_search(&pool, &SearchOptions::new(100, seed)).unwrap();
        let mut rng = pcsat::rng::seeded(seed);
        for _ in 0..100 {
            let th: Thresholds = draw_thresholds(&mut rng);
            let l = pool.loss(&th, BoundaryMode::Higher, LossOptions::default()).unwrap();
            prop_assert!(fit.loss.total <= l.total);
        }
    }
}

#[test]
fn f32_pool_fits() {
    let pairs = [(0.9f32, 1), (0.7, 2), (0.5, 3), (0.3, 4), (0.1, 5)].map(|(p, l)| (p, level(l)));
    let pool = pcsat::LabeledPoolF32::from_pairs(pairs).unwrap();
    let ex = fit_exhaustive(&pool, DEFAULT_MAX_DISTINCT, BoundaryMode::Higher, LossOptions::default()).unwrap();
    assert_eq!(ex.loss.total, 0.0);
    let fit = fit_random_search(&pool, &pcsat::optimizer::SearchOptions::<f32>::new(5000, 1)).unwrap();
    assert!(fit.loss.total >= ex.loss.total);
    let _: OrdinalDistribution = pool.predicted(&fit.thresholds, BoundaryMode::Higher);
}

use con4m::metrics::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Counts true/false positives by looping over every (pred, truth) pair.
fn brute_force_f1(pred: &[usize], truth: &[usize], classes: usize) -> Vec<f64> {
    (0..classes)
        .map(|c| {
            let mut tp = 0.0;
            let mut fp = 0.0;
            let mut fne = 0.0;
            for i in 0..pred.len() {
                match (pred[i] == c, truth[i] == c) {
                    (true, true) => tp += 1.0,
                    (true, false) => fp += 1.0,
                    (false, true) => fne += 1.0,
                    _ => {}
                }
            }
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fne > 0.0 { tp / (tp + fne) } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .collect()
}

/// Largest one-to-one matching by exhaustive search, scored as F1.
fn brute_force_best(a: &[usize], b: &[usize], tau: usize) -> f64 {
    fn best(a: &[usize], b: &[usize], used: &mut Vec<bool>, tau: usize) -> usize {
        let Some((&first, rest)) = a.split_first() else { return 0 };
        let mut top = best(rest, b, used, tau);
        for j in 0..b.len() {
            if !used[j] && first.abs_diff(b[j]) <= tau {
                used[j] = true;
                top = top.max(1 + best(rest, b, used, tau));
                used[j] = false;
            }
        }
        top
    }
    if a.is_empty() || b.is_empty() {
        return if a.is_empty() && b.is_empty() { 1.0 } else { 0.0 };
    }
    let m = best(a, b, &mut vec![false; b.len()], tau) as f64;
    if m == 0.0 {
        return 0.0;
    }
    let (p, r) = (m / a.len() as f64, m / b.len() as f64);
    2.0 * p * r / (p + r)
}

fn labels(max_len: usize, classes: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (1..=max_len).prop_flat_map(move |n| {
        (
            prop::collection::vec(0..classes, n),
            prop::collection::vec(0..classes, n),
        )
    })
}

proptest! {
    #[test]
    fn f1_matches_pair_counting((pred, truth) in labels(50, 4)) {
        let m = classification_metrics(&pred, &truth, 4).unwrap();
        let oracle = brute_force_f1(&pred, &truth, 4);
        for (a, b) in m.per_class_f1.iter().zip(&oracle) {
            prop_assert!((a - b).abs() < 1e-12);
        }
        prop_assert!((m.macro_f1 - oracle.iter().sum::<f64>() / 4.0).abs() < 1e-12);
        let hits = pred.iter().zip(&truth).filter(|(a, b)| a == b).count();
        prop_assert_eq!(m.accuracy, hits as f64 / pred.len() as f64);
    }

    #[test]
    fn macro_f1_ignores_class_names((pred, truth) in labels(40, 3)) {
        let perm = [2, 0, 1];
        let rp: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
        let rt: Vec<usize> = truth.iter().map(|&c| perm[c]).collect();
        let a = classification_metrics(&pred, &truth, 3).unwrap().macro_f1;
        let b = classification_metrics(&rp, &rt, 3).unwrap().macro_f1;
        prop_assert!((a - b).abs() < 1e-12);
    }

    #[test]
    fn c_score_is_symmetric(
        a in prop::collection::btree_set(1usize..60, 0..8),
        b in prop::collection::btree_set(1usize..60, 0..8),
        tau in 0usize..4,
    ) {
        let a: Vec<usize> = a.into_iter().collect();
        let b: Vec<usize> = b.into_iter().collect();
        let s = c_score_points(&a, &b, tau);
        prop_assert!((s - c_score_points(&b, &a, tau)).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&s));
        prop_assert!(s >= brute_force_best(&a, &b, tau) - 1e-12);
    }
}

fn random_joint(rng: &mut ChaCha8Rng) -> DiscreteJoint {
    let (ny, nx, na) = (rng.random_range(2..4), rng.random_range(2..4), rng.random_range(2..4));
    let raw: Vec<Vec<Vec<f64>>> = (0..ny)
        .map(|_| (0..nx).map(|_| (0..na).map(|_| rng.random_range(0.0..1.0f64).powi(3)).collect()).collect())
        .collect();
    let total: f64 = raw.iter().flatten().flatten().sum();
    let mut t: Vec<Vec<Vec<f64>>> = raw.iter().map(|p| p.iter().map(|r| r.iter().map(|v| v / total).collect()).collect()).collect();
    // Absorb the rounding remainder so the table sums to one.
    let s: f64 = t.iter().flatten().flatten().sum();
    t[0][0][0] += 1.0 - s;
    DiscreteJoint::new(t).unwrap()
}

#[test]
fn context_never_loses_information() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..100 {
        let g = mi_gain(&random_joint(&mut rng));
        assert!(g.gain >= -1e-12, "{g:?}");
    }
}

#[test]
fn mi_closed_forms() {
    // y = x, uniform binary; any x_A.
    let mut t = vec![vec![vec![0.0; 2]; 2]; 2];
    for y in 0..2 {
        t[y][y][0] = 0.25;
        t[y][y][1] = 0.25;
    }
    let g = mi_gain(&DiscreteJoint::new(t).unwrap());
    assert!((g.i_y_x - 1.0).abs() < 1e-9 && g.gain.abs() < 1e-9);

    // y independent of x, x_A = y.
    let py = [0.3, 0.7];
    let px = [0.4, 0.6];
    let mut t = vec![vec![vec![0.0; 2]; 2]; 2];
    for y in 0..2 {
        for x in 0..2 {
            t[y][x][y] = py[y] * px[x];
        }
    }
    let g = mi_gain(&DiscreteJoint::new(t).unwrap());
    assert!(g.i_y_x.abs() < 1e-9);
    assert!((g.gain - entropy(&py)).abs() < 1e-9);

    let g = mi_gain(&DiscreteJoint::independent(&[0.5, 0.5], &[0.2, 0.8], &[0.1, 0.9]).unwrap());
    assert!(g.i_y_x.abs() < 1e-12 && g.i_y_x_context.abs() < 1e-12);
}

#[test]
fn invalid_joints_are_rejected() {
    assert!(DiscreteJoint::new(vec![vec![vec![0.5, 0.6]]]).is_err());
    assert!(DiscreteJoint::new(vec![vec![vec![1.5, -0.5]]]).is_err());
    assert!(DiscreteJoint::new(vec![]).is_err());
    assert!(DiscreteJoint::new(vec![vec![vec![0.5], vec![0.25, 0.25]]]).is_err());
}

#[test]
fn interval_report_pools_segments() {
    let pairs = vec![(vec![0, 0, 1, 1], vec![0, 0, 1, 1]), (vec![1, 1, 1], vec![1, 1, 0])];
    let r = evaluate_intervals(&pairs, 2, 2).unwrap();
    assert_eq!(r.segments, 7);
    assert_eq!(r.intervals, 2);
    assert!((r.accuracy - 6.0 / 7.0).abs() < 1e-12);
    assert_eq!(r.c_score, 0.5);
    assert!(r.positive_f1.is_some());
    let s = summarize_folds(&[r.clone(), r]);
    assert_eq!(s.folds, 2);
    assert_eq!(s.macro_f1.std, 0.0);
    let json = serde_json::to_string(&s).unwrap();
    assert_eq!(serde_json::from_str::<FoldSummary>(&json).unwrap(), s);
}

use con4m::autodiff::Tensor;
use con4m::data::{disturb_dataset, generate_mvd, make_splits, GeneratorConfig, SplitScheme, TimeInterval};
use con4m::trainer::*;
use proptest::prelude::*;

fn dataset(seed: u64, ratio: f64) -> Vec<TimeInterval> {
    let g = GeneratorConfig {
        intervals: 8,
        runs_per_interval: 4,
        ..GeneratorConfig::default()
    };
    disturb_dataset(&generate_mvd(&g, seed).unwrap(), ratio, seed + 100).unwrap()
}

fn small_config(epochs: usize) -> TrainRunConfig {
    let mut cfg = TrainRunConfig::default();
    cfg.per_level = 6;
    cfg.schedule.epochs = epochs;
    cfg.schedule.e_g = 1;
    cfg
}

fn row(t: &Tensor, i: usize) -> Vec<f64> {
    t.row(i).to_vec()
}

#[test]
fn update_hand_example() {
    let y0 = Tensor::from_rows(&[vec![1.0, 0.0]]).unwrap();
    let p_hat = Tensor::from_rows(&[vec![0.6, 0.4]]).unwrap();
    let p_bar = Tensor::from_rows(&[vec![0.8, 0.2]]).unwrap();
    let p = harmonized_target(&y0, &p_hat, &p_bar, 0.5).unwrap();
    // 0.5·1 + 0.5·(0.75·0.6 + 0.25·0.8)
    assert!((p.get(0, 0) - 0.825).abs() < 1e-12);
    assert!((p.get(0, 1) - 0.175).abs() < 1e-12);
}

#[test]
fn full_trust_with_agreeing_history_copies_it() {
    let q = Tensor::from_rows(&[vec![0.3, 0.7], vec![0.9, 0.1]]).unwrap();
    let mut s = LabelState::new(vec![0, 1], 2).unwrap();
    s.push(q.clone(), q.clone());
    s.update(1.0).unwrap();
    for i in 0..2 {
        for (a, b) in row(&s.p_e, i).iter().zip(row(&q, i)) {
            assert!((a - b).abs() < 1e-12);
        }
    }
    assert_eq!(s.y_cur, vec![1, 0]);
}

#[test]
fn omega_closed_form() {
    let raw: Vec<f64> = (0..5).map(|m| (-0.5 * m as f64).exp()).collect();
    let z: f64 = raw.iter().sum();
    let expected = [0.4286, 0.2600, 0.1577, 0.0957, 0.0580];
    for e in 4..40 {
        let w = omega(e);
        assert_eq!(w.len(), 5);
        for m in 0..5 {
            assert!((w[m] - raw[m] / z).abs() < 1e-12);
            assert!((w[m] - expected[m]).abs() < 1e-4);
        }
    }
    for e in 0..10 {
        let w = omega(e);
        assert!(w.windows(2).all(|p| p[0] > p[1]));
        assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn ties_go_to_the_lowest_class() {
    let mut s = LabelState::new(vec![1], 2).unwrap();
    let half = Tensor::from_rows(&[vec![0.5, 0.5]]).unwrap();
    s.push(half.clone(), half);
    s.update(1.0).unwrap();
    assert_eq!(s.y_cur, vec![0]);
}

#[test]
fn empty_history_is_a_contract_error() {
    let mut s = LabelState::new(vec![0, 1], 2).unwrap();
    assert!(s.update(0.5).is_err());
}

fn stochastic_rows(n: usize, c: usize) -> impl Strategy<Value = Tensor> {
    prop::collection::vec(prop::collection::vec(0.01f64..1.0, c), n).prop_map(|rows| {
        let rows: Vec<Vec<f64>> = rows
            .into_iter()
            .map(|r| {
                let s: f64 = r.iter().sum();
                r.into_iter().map(|v| v / s).collect()
            })
            .collect();
        Tensor::from_rows(&rows).unwrap()
    })
}

proptest! {
    #[test]
    fn target_is_a_convex_combination(
        p_hat in stochastic_rows(6, 3),
        p_bar in stochastic_rows(6, 3),
        y in prop::collection::vec(0usize..3, 6),
        eta in 0.0f64..=1.0,
    ) {
        let s = LabelState::new(y, 3).unwrap();
        let p = harmonized_target(&s.y0_onehot(), &p_hat, &p_bar, eta).unwrap();
        for i in 0..6 {
            let r = row(&p, i);
            prop_assert!(r.iter().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!((r.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn trust_moves_monotonically_away_from_y0(
        p_hat in stochastic_rows(5, 2),
        p_bar in stochastic_rows(5, 2),
        y in prop::collection::vec(0usize..2, 5),
        a in 0.0f64..=1.0,
        b in 0.0f64..=1.0,
    ) {
        let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
        let y0 = LabelState::new(y, 2).unwrap().y0_onehot();
        let dist = |eta: f64| {
            let p = harmonized_target(&y0, &p_hat, &p_bar, eta).unwrap();
            p.data().iter().zip(y0.data()).map(|(x, y)| (x - y).abs()).sum::<f64>()
        };
        prop_assert!(dist(lo) <= dist(hi) + 1e-12);
    }

    #[test]
    fn admitted_levels_grow_and_saturate(e in 0usize..200, e_g in 0usize..10, levels in 1usize..8) {
        let now = curriculum_active_levels(e, e_g, levels);
        let next = curriculum_active_levels(e + 1, e_g, levels);
        prop_assert!(!now.is_empty() && now.len() <= next.len() && next.len() <= levels);
        prop_assert_eq!(now[0], 1);
        if e >= (levels - 1) * e_g {
            prop_assert_eq!(now.len(), levels);
        }
    }
}

#[test]
fn supervised_smoke_run_reduces_loss() {
    let data = dataset(3, 0.0);
    let fold = make_splits(4, SplitScheme::new(2, 1, 1)).unwrap().folds.remove(0);
    let mut cfg = small_config(10);
    cfg.schedule.e_g = 0;
    cfg.schedule.e_eta = usize::MAX;
    let out = train(&cfg, &data, &fold).unwrap();
    let losses: Vec<f64> = out.log.epochs.iter().map(|e| e.loss).collect();
    assert!(losses[9] < losses[0], "{losses:?}");
    assert!(out.log.epochs.iter().all(|e| e.eta < 1e-15 && e.label_changes == 0));
    assert!(out.labels.iter().all(|s| s.y_cur == s.y0 && s.history.len() <= HISTORY_LEN));
}

#[test]
fn same_seed_runs_are_identical() {
    let data = dataset(5, 0.4);
    let fold = make_splits(4, SplitScheme::new(2, 1, 1)).unwrap().folds.remove(3);
    let mut cfg = small_config(4);
    cfg.schedule.e_eta = 2;
    cfg.seed = 9;
    let a = train(&cfg, &data, &fold).unwrap();
    let b = train(&cfg, &data, &fold).unwrap();
    assert_eq!(serde_json::to_string(&a.log).unwrap(), serde_json::to_string(&b.log).unwrap());
    assert_eq!(a.best, b.best);
    assert_eq!(a.last, b.last);
    assert_eq!(a.labels, b.labels);
    cfg.seed = 10;
    let c = train(&cfg, &data, &fold).unwrap();
    assert_ne!(a.last, c.last);
}

#[test]
fn log_tracks_the_schedules() {
    let data = dataset(7, 0.4);
    let fold = make_splits(4, SplitScheme::new(2, 1, 1)).unwrap().folds.remove(0);
    let mut cfg = small_config(6);
    cfg.schedule.e_eta = 3;
    let before = serde_json::to_string(&data).unwrap();
    let out = train(&cfg, &data, &fold).unwrap();
    let etas: Vec<f64> = out.log.epochs.iter().map(|e| e.eta).collect();
    assert_eq!(etas.iter().position(|&e| e == 1.0), Some(3));
    assert_eq!(etas[..3], [0.0, 1.0 / 3.0, 2.0 / 3.0]);
    let levels: Vec<usize> = out.log.epochs.iter().map(|e| e.active_levels).collect();
    assert_eq!(levels, vec![1, 2, 3, 4, 5, 5]);
    assert!(out.log.epochs.windows(2).all(|w| w[0].admitted_intervals <= w[1].admitted_intervals));
    assert_eq!(out.log.epochs[0].label_changes, 0);
    assert_eq!(out.log.heldout_digest_before, out.log.heldout_digest_after);
    assert_eq!(serde_json::to_string(&data).unwrap(), before);
    let best = &out.log.epochs[out.log.best_epoch];
    assert!(out.log.epochs.iter().all(|e| e.val_macro_f1 <= best.val_macro_f1));
    let r = &out.log.label_recovery;
    assert_eq!(r.disturbed + r.intact, out.log.train_segments);
}

#[test]
fn heldout_digests_cover_every_label() {
    let a = labels_digest([[0usize, 1].as_slice(), [1].as_slice()]);
    let b = labels_digest([[0usize].as_slice(), [1, 1].as_slice()]);
    let c = labels_digest([[0usize, 1].as_slice(), [1].as_slice()]);
    assert_ne!(a, b);
    assert_eq!(a, c);
    assert_eq!(a.len(), 64);
}

#[test]
fn config_errors_precede_training() {
    let data = dataset(1, 0.0);
    let fold = make_splits(4, SplitScheme::new(2, 1, 1)).unwrap().folds.remove(0);
    for tweak in [
        (|c: &mut TrainRunConfig| c.batch_size = 0) as fn(&mut TrainRunConfig),
        |c| c.lr = 0.0,
        |c| c.seq_len = 1000,
        |c| c.schedule.levels = 0,
        |c| c.model.encoder.features = 3,
    ] {
        let mut cfg = small_config(1);
        tweak(&mut cfg);
        assert!(train(&cfg, &data, &fold).is_err());
    }
}

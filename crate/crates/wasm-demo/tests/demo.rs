use con4m_wasm_demo::{prior_row, run_levels, tanh_fit_json};

#[test]
fn prior_row_is_a_centred_distribution() {
    let row = prior_row(9, 4, 1.5).unwrap();
    assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    assert!(row.windows(2).take(4).all(|w| w[0] < w[1]));
    for d in 1..5 {
        assert!((row[4 - d] - row[4 + d]).abs() < 1e-15);
    }
    let narrow = prior_row(9, 4, 0.5).unwrap();
    assert!(narrow[4] > row[4]);
    assert!(prior_row(9, 9, 1.0).is_err());
    assert!(prior_row(9, 0, 0.0).is_err());
}

#[test]
fn tanh_fit_reports_a_step() {
    let mut seq = vec![0.0; 16];
    seq[15] = 1.0;
    let v: serde_json::Value = serde_json::from_str(&tanh_fit_json(&seq).unwrap()).unwrap();
    let curve: Vec<f64> = v["curve"].as_array().unwrap().iter().map(|x| x.as_f64().unwrap()).collect();
    assert_eq!(curve.len(), 16);
    assert!(curve[14] < 0.5 && curve[15] > 0.5);
    assert!(v["k"].as_f64().is_some());
    assert!(tanh_fit_json(&[]).is_err());
    assert!(tanh_fit_json(&[0.2, 1.5]).is_err());
}

#[test]
fn levels_cover_the_run() {
    let l = run_levels(10, 5).unwrap();
    assert_eq!(l.len(), 10);
    assert_eq!(l[4], 1);
    assert_eq!(l[9], 5);
    assert!(run_levels(0, 5).is_err());
}

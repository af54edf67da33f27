mod common;

use terrastyle_core::nst::{preprocess, run_transfer, FeatureExtractor, Silent, TransferObjective, TransferParams, DEFAULT_WEIGHT_SEED};

#[test]
fn default_lr0_gives_one_percent_first_step() {
    let (content, style) = common::desk_pair();
    let ex = FeatureExtractor::seeded(DEFAULT_WEIGHT_SEED);
    let p = TransferParams::default();
    let obj = TransferObjective::new(&ex, &preprocess(&content), &preprocess(&style), &p).unwrap();
    let (_, g) = obj.evaluate(&preprocess(&content)).unwrap();
    let rms = (g.data().iter().map(|&v| (v as f64).powi(2)).sum::<f64>() / g.data().len() as f64).sqrt();
    let step = p.lr0 * rms;
    assert!((step / 2.55 - 1.0).abs() < 0.05, "first RMS step {step}");
}

#[test]
fn desk_run_style_falls_in_every_ten_iteration_window() {
    let (content, style) = common::desk_pair();
    let ex = FeatureExtractor::seeded(DEFAULT_WEIGHT_SEED);
    let p = TransferParams {
        iterations: 200,
        progress_every: 10,
        ..Default::default()
    };
    let run = run_transfer(&ex, &content, &style, &p, &mut Silent).unwrap();
    let styles: Vec<f64> = run.history.iter().map(|l| l.style).collect();
    assert_eq!(styles.len(), 21);
    for (k, w) in styles.windows(2).enumerate() {
        assert!(w[1] < w[0], "style rose between iterations {} and {}", 10 * k, 10 * k + 10);
    }
    for l in &run.history {
        let sum = p.alpha * l.content + p.beta * l.style + p.gamma * l.tv;
        assert!((l.total - sum).abs() <= 1e-6 * sum.abs());
    }
}

#[test]
fn transfer_is_deterministic() {
    let (content, style) = common::desk_pair();
    let ex = FeatureExtractor::seeded(DEFAULT_WEIGHT_SEED);
    for init_mode in ["content", "random"] {
        let p: TransferParams =
            serde_json::from_value(serde_json::json!({"iterations": 12, "init_mode": init_mode, "seed": 3, "first_step_rms": 2.55})).unwrap();
        let a = run_transfer(&ex, &content, &style, &p, &mut Silent).unwrap();
        let b = run_transfer(&ex, &content, &style, &p, &mut Silent).unwrap();
        assert_eq!(a.map, b.map);
        assert_eq!(a.history, b.history);
    }
}

#[test]
fn zero_iterations_return_the_resampled_content() {
    let (content, style) = common::desk_pair();
    let ex = FeatureExtractor::seeded(DEFAULT_WEIGHT_SEED);
    let p = TransferParams {
        iterations: 0,
        ..Default::default()
    };
    let out = run_transfer(&ex, &content, &style.resample(96, 96), &p, &mut Silent).unwrap();
    let expect = content.resample(96, 96);
    assert_eq!(out.map.dims(), (96, 96));
    for (a, b) in out.map.values().iter().zip(expect.values()) {
        assert!((a - b).abs() < 1e-6);
    }
    assert_eq!(out.history.len(), 1);
}

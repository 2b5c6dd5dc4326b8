use asss_core::asss::{retrieve_subset, train_asss, AsssConfig, SelectionMode};
use asss_core::dataio::Dataset;
use asss_core::gradcheck::{check_selector, SELECTOR_TOLERANCE};
use asss_core::seed;
use ndarray::Array2;
use rand::Rng;

#[test]
fn fidelity_only_gradient_matches_differences() {
    for (tau, s) in [(1.0, 1), (0.5, 2), (0.2, 3)] {
        let r = check_selector(0.0, 0.0, tau, s).unwrap();
        assert!(r.passed, "{r:?}");
        assert!(r.max_rel_error < SELECTOR_TOLERANCE);
    }
}

/// Class 0: eight prototypes far from the boundary, each repeated 50 times.
/// Near the boundary x0 = 0: 200 unique rows, labelled by the sign of x0.
fn duplicate_heavy(seed_value: u64) -> (Dataset, Vec<bool>) {
    let mut rng = seed::rng(seed_value);
    let mut rows: Vec<[f64; 2]> = Vec::new();
    let mut labels = Vec::new();
    let mut boundary = Vec::new();
    for _ in 0..8 {
        let p = [rng.random_range(-6.0..-4.0), rng.random_range(-2.0..2.0)];
        for _ in 0..50 {
            rows.push(p);
            labels.push(0);
            boundary.push(false);
        }
    }
    for _ in 0..200 {
        let x0: f64 = rng.random_range(-1.0..1.0);
        rows.push([x0, rng.random_range(-2.0..2.0)]);
        labels.push(usize::from(x0 > 0.0));
        boundary.push(true);
    }
    let x = Array2::from_shape_vec((rows.len(), 2), rows.concat()).unwrap();
    let ds = Dataset::new(
        x,
        labels,
        vec!["a".into(), "b".into()],
        vec!["x0".into(), "x1".into()],
        "dup",
    )
    .unwrap();
    (ds, boundary)
}

#[test]
fn boundary_rows_outscore_duplicates() {
    let mut gaps = Vec::new();
    for s in 0..5u64 {
        let (ds, boundary) = duplicate_heavy(s);
        let cfg = AsssConfig {
            total_iters: 300,
            batch_size: 64,
            seed: 100 + s,
            ..AsssConfig::default()
        };
        let out = train_asss(&ds, &cfg).unwrap();
        let m = (ds.len() * 3).div_ceil(10);
        let sel =
            retrieve_subset(&out.selector, ds.features.view(), SelectionMode::TopM(m)).unwrap();
        let mean = |want: bool| {
            let v: Vec<f64> = sel
                .scores
                .iter()
                .zip(&boundary)
                .filter(|(_, &b)| b == want)
                .map(|(s, _)| *s)
                .collect();
            v.iter().sum::<f64>() / v.len() as f64
        };
        gaps.push(mean(true) - mean(false));
    }
    let avg = gaps.iter().sum::<f64>() / gaps.len() as f64;
    assert!(
        avg > 0.0,
        "boundary minus duplicate mean score per seed: {gaps:?}"
    );
}

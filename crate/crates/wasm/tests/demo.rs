use molrg_core::metrics::snr_closed_form;
use molrg_core::schedule::STANDARD_GRID;
use molrg_wasm::demo::{posterior_scatter, snr_curve, tradeoff};

#[test]
fn snr_curve_matches_core() {
    let v = snr_curve(&STANDARD_GRID, 0.2, 5, 3).unwrap();
    assert_eq!(v.len(), STANDARD_GRID.len());
    for (s, x) in STANDARD_GRID.iter().zip(&v) {
        assert_eq!(*x, snr_closed_form(*s, 0.2, 5, 3).unwrap());
    }
}

#[test]
fn tradeoff_is_flattened_triples() {
    let v = tradeoff(&STANDARD_GRID, 0.2, 5, 3).unwrap();
    assert_eq!(v.len(), 3 * STANDARD_GRID.len());
    for (i, t) in v.chunks(3).enumerate() {
        assert!((t[0] - STANDARD_GRID[i].powi(2) / 0.04).abs() < 1e-12);
        assert!(t[1] >= t[2]);
    }
}

#[test]
fn scatter_is_deterministic_and_separates_classes_at_low_noise() {
    let a = posterior_scatter(30, 1, 0.05, 0.02, 300, 4).unwrap();
    assert_eq!(a, posterior_scatter(30, 1, 0.05, 0.02, 300, 4).unwrap());
    assert_eq!(a.len(), 900);
    // With one direction per class the nearest class direction recovers the label for almost every point.
    let dirs = [(1.0, 0.0), (-0.5, 0.75f64.sqrt()), (-0.5, -(0.75f64.sqrt()))];
    let hits = a
        .chunks(3)
        .filter(|p| {
            let score = |(u, v): (f64, f64)| (p[0] * u + p[1] * v).abs();
            let best = (0..3).max_by(|&i, &j| score(dirs[i]).total_cmp(&score(dirs[j]))).unwrap();
            best as f64 == p[2]
        })
        .count();
    assert!(hits >= 270, "{hits}/300");
}

#[test]
fn bad_arguments_are_errors() {
    assert!(snr_curve(&[0.1], 0.0, 5, 3).is_err());
    assert!(tradeoff(&[0.1], 0.2, 5, 1).is_err());
    assert!(posterior_scatter(5, 3, 0.2, 0.1, 10, 0).is_err());
}

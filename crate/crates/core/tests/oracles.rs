use std::f64::consts::PI;

use loglip_core::coeffs::{sine_series_exact, sine_series_partial};
use loglip_core::ldp::{mc_log_prob, McConfig, PathEvent};
use loglip_core::lyapunov::{stroock_bound, SINE_BOUND_CONSTANT};
use loglip_core::coeffs::CoefficientField;

#[test]
fn sine_series_partial_sum_reference() {
    // Independently summed in extended precision.
    let reference = 0.426_238_398_038_646_78;
    assert!((sine_series_partial(0.3, 0.3, 1_000_000) - reference).abs() < 1e-12);
}

#[test]
fn sine_series_closed_form_on_the_diagonal() {
    let exact = 0.5 * (0.3 * PI - 0.09);
    assert!((sine_series_exact(0.3, 0.3) - exact).abs() < 1e-14);
    let partial = sine_series_partial(0.3, 0.3, 1_000_000);
    assert!((partial - exact).abs() < 1e-5);
}

#[test]
fn stroock_reference_value() {
    let p = stroock_bound(1.0, 0.0, 1.0, 3.0, 1).unwrap();
    assert!((p - 0.022_217_993_076_484_612).abs() < 1e-15);
}

#[test]
fn sine_bound_constant() {
    assert!((SINE_BOUND_CONSTANT - 2.0 * (PI * PI / 2.0 + 1.0)).abs() < 1e-14);
    assert!((SINE_BOUND_CONSTANT - 11.869_604_401_089_358).abs() < 1e-12);
}

#[test]
fn reflection_principle_for_level_crossing() {
    // P(sup_{t≤1} √ε W_t ≥ 1) = 2Φ̄(1/√ε); ε = 0.4 gives 0.113846…
    // The discrete monitor undershoots by O(n^{-1/2}); at n = 1024 the bias
    // is below 0.006.
    let field = CoefficientField::constant(vec![0.0], vec![1.0], 1).unwrap();
    let cfg = McConfig { epsilon: 0.4, x0: vec![0.0], horizon: 1.0, steps: 1024, trials: 20_000, seed: 77 };
    let est = mc_log_prob(&field, &PathEvent::LevelCrossing { coordinate: 0, level: 1.0 }, &cfg).unwrap();
    let exact = 0.113_846_298_006_658_05;
    let p = est.hits.p();
    assert!(p <= exact + 3.0 * est.hits.se());
    assert!(p >= exact - 0.006 - 3.0 * est.hits.se(), "{p}");
}

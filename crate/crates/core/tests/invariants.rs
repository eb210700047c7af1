use proptest::prelude::*;

use loglip_core::coeffs::{truncate_field, CoefficientField, SineSeriesField};
use loglip_core::ldp::{rate_functional, wilson_interval, PathEvent, RateOptions, Z95};
use loglip_core::lyapunov::stroock_bound;
use loglip_core::paths::{refine_brownian, sample_brownian, BrownianStream, TimeGrid};
use loglip_core::sde::{coupled_pair, euler_maruyama, hitting_times, SdeRun};
use loglip_core::skeleton::euler_polygon;

fn sine() -> CoefficientField {
    SineSeriesField::exact().with_diffusion(1.0).into_field()
}

fn same_bits(a: &[f64], b: &[f64]) -> bool {
    a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn euler_maruyama_is_the_polygon_of_the_scaled_driver(
        seed in any::<u64>(), trial in 0u64..1000, eps in 1e-4f64..2.0,
        x1 in -3.0f64..3.0, x2 in -3.0f64..3.0,
    ) {
        let field = sine();
        let driver = sample_brownian(2, TimeGrid::unit(128).unwrap(), seed, trial);
        let em = euler_maruyama(&SdeRun::new(field.clone(), eps, vec![x1, x2], driver.clone()).unwrap()).unwrap();
        let poly = euler_polygon(&field, &driver.path().scaled(eps.sqrt()), &[x1, x2]).unwrap();
        prop_assert!(same_bits(em.states(), poly.states()));
    }

    #[test]
    fn driver_is_a_pure_function_of_its_key(seed in any::<u64>(), trial in 0u64..1000) {
        let g = TimeGrid::unit(64).unwrap();
        let a = sample_brownian(2, g, seed, trial);
        let b = sample_brownian(2, g, seed, trial);
        let c = sample_brownian(2, g, seed, trial + 1);
        prop_assert!(same_bits(a.path().values(), b.path().values()));
        prop_assert!(!same_bits(a.path().values(), c.path().values()));
        prop_assert!(a.path().node(0).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn streaming_driver_matches_stored_driver(seed in any::<u64>(), trial in 0u64..100) {
        let g = TimeGrid::unit(50).unwrap();
        let w = sample_brownian(3, g, seed, trial);
        let mut s = BrownianStream::new(3, g, seed, trial);
        let (mut prev, mut next) = (vec![0.0; 3], vec![0.0; 3]);
        for k in 1..g.nodes() {
            s.next_node(&prev, &mut next);
            prop_assert!(same_bits(&next, w.path().node(k)));
            prev.copy_from_slice(&next);
        }
    }

    #[test]
    fn bridge_refinement_keeps_coarse_nodes(seed in any::<u64>(), levels in 1usize..4) {
        let w = sample_brownian(2, TimeGrid::unit(16).unwrap(), seed, 0);
        let mut fine = w.clone();
        for _ in 0..levels {
            fine = refine_brownian(&fine);
        }
        prop_assert_eq!(fine.grid().steps(), 16 << levels);
        let back = fine.path().restrict(1 << levels).unwrap();
        prop_assert!(same_bits(back.values(), w.path().values()));
    }

    #[test]
    fn coupled_pair_is_symmetric(seed in any::<u64>(), d in 0.0f64..1.0) {
        let field = sine();
        let w = sample_brownian(2, TimeGrid::unit(64).unwrap(), seed, 0);
        let (a, b) = coupled_pair(&field, 0.1, &w, &[0.2, 0.1], &[0.2 + d, 0.1]).unwrap();
        let (b2, a2) = coupled_pair(&field, 0.1, &w, &[0.2 + d, 0.1], &[0.2, 0.1]).unwrap();
        prop_assert!(same_bits(a.states(), a2.states()));
        prop_assert!(same_bits(b.states(), b2.states()));
        if d == 0.0 {
            prop_assert!(same_bits(a.states(), b.states()));
        }
    }

    #[test]
    fn truncation_is_invisible_inside_the_ball(x in -2.9f64..2.9, scale in 0.0f64..2.0) {
        let field = CoefficientField::log_growth(1, scale).unwrap();
        let cut = truncate_field(&field, 3.0, 256).unwrap();
        let (b, s) = field.eval(&[x]).unwrap();
        let (bt, st) = cut.eval(&[x]).unwrap();
        prop_assert_eq!(b, bt);
        prop_assert_eq!(s, st);
    }

    #[test]
    fn exit_ball_event_is_monotone_in_radius(seed in any::<u64>(), r1 in 0.05f64..2.0, r2 in 0.05f64..2.0) {
        let (lo, hi) = if r1 < r2 { (r1, r2) } else { (r2, r1) };
        let w = sample_brownian(2, TimeGrid::unit(64).unwrap(), seed, 0);
        let traj = euler_maruyama(&SdeRun::new(sine(), 0.5, vec![0.0, 0.0], w).unwrap()).unwrap();
        let (outer, inner) = (PathEvent::ExitBall { radius: hi }, PathEvent::ExitBall { radius: lo });
        prop_assert!(!outer.holds(&traj) || inner.holds(&traj));
    }

    #[test]
    fn hitting_times_are_ordered(seed in any::<u64>()) {
        let w = sample_brownian(1, TimeGrid::unit(256).unwrap(), seed, 0);
        let field = CoefficientField::constant(vec![0.0], vec![1.0], 1).unwrap();
        let traj = euler_maruyama(&SdeRun::new(field, 1.0, vec![0.0], w).unwrap()).unwrap();
        let times = hitting_times(&traj, &[0.25, 0.5, 1.0, 2.0]);
        let hit: Vec<f64> = times.iter().map_while(|t| *t).collect();
        prop_assert!(times[hit.len()..].iter().all(Option::is_none));
        prop_assert!(hit.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn stroock_bound_decreases_in_radius(a in 0.1f64..3.0, r in 0.5f64..5.0, dr in 0.0f64..2.0, d in 1usize..4) {
        let p = stroock_bound(a, 0.0, 1.0, r, d).unwrap();
        let q = stroock_bound(a, 0.0, 1.0, r + dr, d).unwrap();
        prop_assert!(q <= p);
    }

    #[test]
    fn wilson_interval_brackets_the_proportion(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = (frac * n as f64).floor() as u64;
        let (lo, hi) = wilson_interval(k, n, Z95);
        let p = k as f64 / n as f64;
        prop_assert!(0.0 <= lo && lo <= p + 1e-12 && p <= hi + 1e-12 && hi <= 1.0);
    }
}

#[test]
fn additive_noise_paths_scale_with_root_epsilon() {
    let field = CoefficientField::constant(vec![0.0, 0.0], vec![1.0, 0.0, 0.0, 1.0], 2).unwrap();
    let w = sample_brownian(2, TimeGrid::unit(100).unwrap(), 5, 0);
    let a = euler_maruyama(&SdeRun::new(field.clone(), 0.01, vec![0.0; 2], w.clone()).unwrap()).unwrap();
    let b = euler_maruyama(&SdeRun::new(field, 1.0, vec![0.0; 2], w).unwrap()).unwrap();
    for (x, y) in a.states().iter().zip(b.states()) {
        assert!((x - 0.1 * y).abs() <= 1e-14 * (1.0 + y.abs()));
    }
}

#[test]
fn terminal_rate_is_stable_under_knot_doubling() {
    // Additive noise σ: the straight line is optimal, I = a²/(2σ²T).
    let field = CoefficientField::constant(vec![0.0], vec![1.5], 1).unwrap();
    let event = PathEvent::TerminalHit { target: vec![1.2], tol: 0.0 };
    let exact = 1.2f64.powi(2) / (2.0 * 1.5f64.powi(2));
    let mut values = Vec::new();
    for knots in [8, 16, 32] {
        let opts = RateOptions { x0: vec![0.0], knots, restarts: 2, ..RateOptions::default() };
        let r = rate_functional(&field, &event, &opts).unwrap();
        assert!((r.value - exact).abs() < 1e-3, "knots {knots}: {}", r.value);
        values.push(r.value);
    }
    assert!((values[0] - values[2]).abs() < 1e-3);
}

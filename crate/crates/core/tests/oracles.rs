//! Closed-form values checked against brute-force integration.

use approx::assert_relative_eq;
use proptest::prelude::*;

use stabindex::analytic::{k_threshold, lyapunov_v_dot, sigma_eps_bounds, Cones};
use stabindex::integrator::classify;
use stabindex::measure::{basin_map, estimate_fraction, MeasureOptions, Window};
use stabindex::system::eval_quadrant;
use stabindex::{integrate, BasinLabel, IntegratorConfig, State, SystemSpec};

/// Fraction of an `n × n` grid of cell centres in `[0, eps]²` whose
/// trajectories converge, integrated without region certificates.
fn grid_fraction(spec: &SystemSpec, eps: f64, n: usize) -> f64 {
    let cfg = IntegratorConfig { certify: false, r_in: 1e-3 * eps, t_max: 1e9, ..IntegratorConfig::for_spec(spec) };
    let h = eps / n as f64;
    let mut hits = 0;
    for i in 0..n {
        for j in 0..n {
            let s = State::new((i as f64 + 0.5) * h, (j as f64 + 0.5) * h);
            hits += usize::from(integrate(spec, s, &cfg).unwrap().kind.reaches_origin());
        }
    }
    hits as f64 / (n * n) as f64
}

/// The basin boundary of power-attract is the curve `y = k_thr·x^e` with
/// `e = a·p`, so `1 − Σ_ε = k_thr·ε^{e−1}/(e + 1)`.
fn attract_miss(a: f64, p: f64, eps: f64) -> f64 {
    let e = a * p;
    k_threshold(a).unwrap() * eps.powf(e - 1.0) / (e + 1.0)
}

#[test]
fn exact_boundary_values() {
    assert_relative_eq!(attract_miss(2.0, 1.0, 0.1), 0.05, max_relative = 1e-14);
    assert_relative_eq!(attract_miss(2.0, 2.0, 0.5), 0.3 * 0.125, max_relative = 1e-14);
    assert_relative_eq!(attract_miss(3.0, 1.0, 0.1), 1.25 * 0.01 / 4.0, max_relative = 1e-14);
}

#[test]
fn brute_force_grid_matches_bounds_and_boundary() {
    let spec = SystemSpec::power_attract(2.0).unwrap();
    let miss = 1.0 - grid_fraction(&spec, 0.1, 300);
    let b = sigma_eps_bounds(&spec, 0.1, Cones { k_in: 1.6, k_out: 1.0 }).unwrap();
    assert!(miss >= 1.0 - b.upper && miss <= 1.0 - b.lower, "{miss}");
    assert!((1.0 / 30.0..=0.16 / 3.0).contains(&miss));
    // A 300-cell grid resolves the boundary to about one cell per column.
    assert!((miss - 0.05).abs() < 2.0 / 300.0, "{miss}");

    let sq = SystemSpec::transformed(2.0, 2.0).unwrap();
    let miss = 1.0 - grid_fraction(&sq, 0.5, 200);
    assert!((miss - 0.0375).abs() < 2.0 / 200.0, "{miss}");
}

#[test]
fn sampled_fraction_matches_boundary() {
    for (spec, eps, exact) in [
        (SystemSpec::power_attract(2.0).unwrap(), 0.1, 0.05),
        (SystemSpec::power_attract(3.0).unwrap(), 0.1, attract_miss(3.0, 1.0, 0.1)),
        (SystemSpec::transformed(2.0, 2.0).unwrap(), 0.5, 0.0375),
    ] {
        let opts = MeasureOptions::for_spec(&spec);
        let s = estimate_fraction(&spec, eps, None, 100_000, 3, &opts).unwrap();
        let miss = 1.0 - s.fraction();
        assert!((miss - exact).abs() <= 4.0 * s.binomial_stderr(), "{spec}: {miss} vs {exact}");
    }
}

#[test]
fn repel_lower_bound_value() {
    let spec = SystemSpec::power_repel(0.5).unwrap();
    let b = sigma_eps_bounds(&spec, 0.01, Cones::default_for(&spec)).unwrap();
    assert_relative_eq!(b.lower, 0.01 / 3.0, max_relative = 1e-9);
}

#[test]
fn attract_map_boundary_band() {
    let spec = SystemSpec::power_attract(2.0).unwrap();
    let opts = MeasureOptions::for_spec(&spec);
    let cells = basin_map(&spec, Window::square(0.0, 1.0), 100, 100, None, &opts).unwrap();
    assert_eq!(cells.len(), 10_000);
    for c in &cells {
        let x2 = c.x * c.x;
        match c.label {
            BasinLabel::InBasin => assert!(c.y > x2, "{c:?}"),
            BasinLabel::OutOfBasin => assert!(c.y < 1.5 * x2, "{c:?}"),
            BasinLabel::InLocalBasin => panic!("global map"),
        }
    }
    let band = cells.iter().filter(|c| c.y > c.x * c.x && c.y < 1.5 * c.x * c.x).count();
    assert!(band > 0);
}

#[test]
fn classify_single_point() {
    let spec = SystemSpec::power_attract(2.0).unwrap();
    let cfg = IntegratorConfig::for_spec(&spec);
    for cones in [true, false] {
        let c = classify(&spec, State::new(0.1, 0.02), &cfg, cones).unwrap();
        assert_eq!(c.label, BasinLabel::InBasin);
    }
}

proptest! {
    #[test]
    fn lyapunov_derivative_by_chain_rule(x in 0.05f64..5.0, y in 1e-3f64..5.0) {
        let spec = SystemSpec::phi_system();
        let v = eval_quadrant(&spec, State::new(x, y)).unwrap();
        let chain = (v.dx * y - x * v.dy) / (y * y);
        let direct = lyapunov_v_dot(State::new(x, y)).unwrap();
        // The chain-rule form cancels two terms of size x·y.
        let tol = 1e-9 * direct.abs() + 1e-15 * x * (y + v.dy.abs() / y) / y;
        prop_assert!((chain - direct).abs() <= tol, "{chain} vs {direct}");
    }
}

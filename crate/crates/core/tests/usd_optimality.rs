use cow_zero::usd::{optimal_usd, regime_closed_form, select_regime, usd_feasible, ProtocolParams, Regime};
use proptest::prelude::*;

fn solve(mu: f64, f: f64) -> cow_zero::UsdSolution {
    optimal_usd(&ProtocolParams::new(mu, f, 10).unwrap()).unwrap()
}

/// Largest `(1-f) g_s + f g_d` over feasible `(g_s, g_s, g_d)` on a grid.
fn grid_best(mu: f64, f: f64, step: f64) -> f64 {
    let n = (1.0 / step).round() as usize;
    let mut best = 0.0f64;
    for i in 0..=n {
        let gs = i as f64 * step;
        // feasibility is monotone in g_d, so stop at the first failure
        for j in 0..=n {
            let gd = j as f64 * step;
            if !usd_feasible(mu, [gs, gs, gd]).unwrap() {
                break;
            }
            best = best.max((1.0 - f) * gs + f * gd);
        }
    }
    best
}

#[test]
fn regime_one_matches_grid_search() {
    let s = solve(0.06, 0.155);
    assert!(usd_feasible(0.06, [s.q_ss, s.q_ss, s.q_ds]).unwrap());
    let best = grid_best(0.06, 0.155, 1e-3);
    assert!((best - s.p_c).abs() <= 2e-3, "grid {best} vs {}", s.p_c);
}

#[test]
fn each_regime_is_optimal_on_grid() {
    for (mu, f, regime) in [(0.3, 0.1, Regime::R1), (1.0, 0.5, Regime::R2), (0.1, 0.9, Regime::R3), (0.4, 0.75, Regime::R3)] {
        let s = solve(mu, f);
        assert_eq!(s.regime, regime, "mu={mu} f={f}");
        assert!(usd_feasible(mu, [s.q_ss, s.q_ss, s.q_ds]).unwrap());
        let best = grid_best(mu, f, 1e-3);
        assert!(best <= s.p_c + 2e-3 && best >= s.p_c - 2e-3, "mu={mu} f={f}: grid {best} vs {}", s.p_c);
    }
}

#[test]
fn optimum_sits_on_feasibility_boundary() {
    for (mu, f) in [(0.06, 0.155), (1.0, 0.5), (0.1, 0.9)] {
        let s = solve(mu, f);
        let bumped = [(s.q_ss + 1e-3).min(1.0), (s.q_ss + 1e-3).min(1.0), (s.q_ds + 1e-3).min(1.0)];
        assert!(!usd_feasible(mu, bumped).unwrap());
    }
}

#[test]
fn regime_boundaries_are_continuous() {
    for i in 1..=100 {
        let mu = 0.03 * i as f64;
        let e = (-mu).exp();
        let f = 2.0 * e / (1.0 + 2.0 * e);
        let r1 = regime_closed_form(Regime::R1, mu, f);
        let r2 = regime_closed_form(Regime::R2, mu, f);
        assert!((r1.0 - r2.0).abs() <= 1e-12 && (r1.1 - r2.1).abs() <= 1e-12, "mu={mu}");

        let c2 = (mu / 2.0).cosh().powi(2);
        let f = 2.0 * c2 / (1.0 + 2.0 * c2);
        let r2 = regime_closed_form(Regime::R2, mu, f);
        let r3 = regime_closed_form(Regime::R3, mu, f);
        assert!((r2.0 - r3.0).abs() <= 1e-12 && (r2.1 - r3.1).abs() <= 1e-12, "mu={mu}");
    }
}

#[test]
fn conclusive_probability_grows_with_intensity() {
    for f in [0.05, 0.155, 0.5, 0.7, 0.9] {
        let mut prev = 0.0;
        for i in 0..1000 {
            let mu = 5.0 * i as f64 / 999.0;
            let p = solve(mu, f).p_c;
            assert!(p >= prev, "f={f} mu={mu}: {p} < {prev}");
            prev = p;
        }
    }
}

#[test]
fn typical_experiments_fall_in_first_regime() {
    for mu in [0.05, 0.1, 0.3, 0.5] {
        for f in [0.05, 0.1, 0.15] {
            assert_eq!(select_regime(mu, f / (2.0 * (1.0 - f))), Regime::R1);
        }
    }
}

proptest! {
    #[test]
    fn solution_invariants(mu in 0.0f64..8.0, f in 0.001f64..0.999) {
        let s = solve(mu, f);
        prop_assert!((0.0..=1.0).contains(&s.q_ss));
        prop_assert!((0.0..=1.0).contains(&s.q_ds));
        prop_assert!(s.p_c >= 0.0 && s.p_c < 1.0);
        prop_assert!((s.p_c - ((1.0 - f) * s.q_ss + f * s.q_ds)).abs() <= 1e-14);
        prop_assert_eq!(s.p_cond[0], s.p_cond[1]);
        if s.p_c > 0.0 {
            prop_assert!((s.p_cond.iter().sum::<f64>() - 1.0).abs() <= 1e-14);
        }
        if s.regime == Regime::R1 {
            prop_assert_eq!(s.p_cond[2], 0.0);
        }
        prop_assert!(usd_feasible(mu, [s.q_ss, s.q_ss, s.q_ds]).unwrap());
    }

    #[test]
    fn inconclusive_measurement_always_feasible(mu in 0.0f64..50.0) {
        prop_assert!(usd_feasible(mu, [0.0, 0.0, 0.0]).unwrap());
    }
}

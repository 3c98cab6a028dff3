mod common;

use common::{dist, linear_additive, linear_diffusion, norm, params};
use proptest::prelude::*;
use rps_core::harness::{fit_rate, mse_convergence, ConvergenceSettings};
use rps_core::model::{
    derive_coercivity, preset, probe_monotonicity, scheme_constants, step_bound, SdeModel, PRESET_NAMES,
};
use rps_core::pullback::{contraction_gap, periodicity_check, pullback_solve};
use rps_core::scheme::{em_step, pe_step, project, projection_radius, Admissibility, SchemeConfig, SchemeKind};
use rps_core::wiener::{generate, generate_window, GridSpec, DEFAULT_MEMORY_BUDGET};

fn state(max_dim: usize) -> impl Strategy<Value = Vec<f64>> {
    (1..=max_dim).prop_flat_map(|d| prop::collection::vec(-50.0f64..50.0, d))
}

proptest! {
    #[test]
    fn projection_is_idempotent(x in state(5), h in 1e-4f64..1.0, gamma in 1u8..=3) {
        let p = project(&x, h, gamma as f64);
        prop_assert_eq!(project(&p, h, gamma as f64), p);
    }

    #[test]
    fn projection_is_nonexpansive(
        (x, y) in (1usize..=5).prop_flat_map(|d| (
            prop::collection::vec(-50.0f64..50.0, d),
            prop::collection::vec(-50.0f64..50.0, d),
        )),
        h in 1e-4f64..1.0,
        gamma in 1u8..=3,
    ) {
        let g = gamma as f64;
        let (px, py) = (project(&x, h, g), project(&y, h, g));
        prop_assert!(dist(&px, &py) <= dist(&x, &y) + 1e-12);
    }

    #[test]
    fn projection_caps(x in state(5), h in 1e-4f64..1.0, gamma in 1u8..=3) {
        let g = gamma as f64;
        let p = project(&x, h, g);
        prop_assert!(norm(&p) <= projection_radius(h, g));
        prop_assert!(norm(&p) <= norm(&x));
    }

    #[test]
    fn projection_distance_bound(x in state(5), h in 1e-4f64..1.0, gamma in 1u8..=3) {
        let g = gamma as f64;
        let p = project(&x, h, g);
        prop_assert!(dist(&x, &p) <= h * h * norm(&x).powf(4.0 * g + 1.0));
    }

    #[test]
    fn preset_drift_bounded_on_ball(x in -1e6f64..1e6, t in -100.0f64..100.0, h in 1e-4f64..1.0) {
        for name in PRESET_NAMES {
            let model = preset(name).unwrap();
            let l1 = 2.0 * model.params().growth_c2;
            let y = project(&[x], h, model.gamma());
            let mut f = [0.0];
            model.drift(t, &y, &mut f);
            prop_assert!(f[0].abs() <= l1 / h.sqrt(), "{name}: |f| = {}", f[0].abs());
        }
    }

    #[test]
    fn schemes_agree_inside_ball(x in -1.0f64..1.0, dw in -0.1f64..0.1, t in -5.0f64..5.0) {
        let model = linear_diffusion(1.0, 0.5, 0.5, 2.0);
        let h = 0.01;
        prop_assert_eq!(pe_step(&model, t, &[x], h, &[dw]).unwrap(), em_step(&model, t, &[x], h, &[dw]).unwrap());
    }

    #[test]
    fn coarsening_composes(levels in 2u32..=10, a in 0u32..=4, b in 0u32..=4, seed in any::<u64>()) {
        prop_assume!(a + b <= levels);
        let path = generate(GridSpec::new(-1.0, 2.0, levels).unwrap(), 2, seed, 3).unwrap();
        let (fa, fb) = (1usize << a, 1usize << b);
        let twice = path.coarsen(fa).unwrap().coarsen(fb).unwrap();
        let once = path.coarsen(fa * fb).unwrap();
        for i in 0..once.steps() {
            prop_assert_eq!(twice.increment_at(i, 1).unwrap(), once.increment_at(i, 1).unwrap());
            prop_assert_eq!(path.increment_at(i, fa * fb).unwrap(), once.increment_at(i, 1).unwrap());
        }
    }

    #[test]
    fn coarsening_conserves_endpoint(levels in 0u32..=12, k in 0u32..=12, seed in any::<u64>(), stream in 0u64..1000) {
        prop_assume!(k <= levels);
        let path = generate(GridSpec::new(0.0, 1.0, levels).unwrap(), 1, seed, stream).unwrap();
        prop_assert_eq!(path.coarsen(1 << k).unwrap().terminal_value(), path.terminal_value());
    }

    #[test]
    fn shifts_form_a_group(a in -16i64..=16, b in -16i64..=16, node in 0i64..=32, seed in any::<u64>()) {
        let grid = GridSpec::new(0.0, 1.0, 5).unwrap();
        let path = generate_window(grid, 1, seed, 0, 40, 40, DEFAULT_MEMORY_BUDGET).unwrap();
        let composed = path.shift(a).unwrap().shift(b).unwrap();
        let direct = path.shift(a + b).unwrap();
        prop_assert_eq!(composed.value_at(node).unwrap(), direct.value_at(node).unwrap());
        let mut expected = vec![0.0];
        path.increment_between(a, a + node, &mut expected).unwrap();
        prop_assert_eq!(path.shift(a).unwrap().value_at(node).unwrap(), expected);
        prop_assert_eq!(path.shift(a).unwrap().value_at(0).unwrap(), vec![0.0]);
    }

    #[test]
    fn coercivity_is_monotone(
        alpha1 in -2.0f64..2.0, eps in 1e-3f64..2.0, p1 in 1.5f64..8.0,
        f0 in 0.0f64..5.0, g0 in 0.0f64..5.0, df in 0.0f64..5.0, dg in 0.0f64..5.0,
    ) {
        let base = derive_coercivity(alpha1, eps, p1, 1.0, f0, g0).unwrap().1;
        prop_assert!(derive_coercivity(alpha1, eps, p1, 1.0, f0 + df, g0).unwrap().1 >= base);
        prop_assert!(derive_coercivity(alpha1, eps, p1, 1.0, f0, g0 + dg).unwrap().1 >= base);
    }

    #[test]
    fn step_bound_range_and_monotonicity(
        gap in 1e-3f64..20.0, stiff in 0.1f64..50.0, extra in 0.0f64..10.0, p1 in 1.0f64..8.0, dp in 0.0f64..4.0,
    ) {
        let b = step_bound(gap, stiff, p1, gap / 2.0, 1.0).unwrap();
        prop_assert!(b > 0.0 && b <= 1.0);
        prop_assert!(step_bound(gap, stiff + extra, p1, gap / 2.0, 1.0).unwrap() <= b);
        if gap / (2.0 * stiff * stiff) < 1.0 {
            prop_assert!(step_bound(gap, stiff, p1 + dp, gap / 2.0, 1.0).unwrap() <= b);
        }
    }

    #[test]
    fn fit_rate_rescaling(c in 1e-3f64..1e3, kappa in 0.1f64..2.0, scale in 1e-3f64..1e3, noise in prop::collection::vec(-0.2f64..0.2, 4)) {
        let pts: Vec<(f64, f64)> = (0..4).map(|i| {
            let h = 0.5f64.powi(i + 3);
            (h, c * h.powf(kappa) * noise[i as usize].exp())
        }).collect();
        let scaled: Vec<(f64, f64)> = pts.iter().map(|&(h, e)| (h, scale * e)).collect();
        let (a, b) = (fit_rate(&pts).unwrap(), fit_rate(&scaled).unwrap());
        prop_assert!((a.kappa - b.kappa).abs() < 1e-9);
        prop_assert!((a.residual - b.residual).abs() < 1e-9);
        prop_assert!((b.log_c - a.log_c - scale.ln()).abs() < 1e-9);
    }
}

#[test]
fn increments_have_unit_variance_and_no_lag_correlation() {
    let path = generate(GridSpec::new(0.0, 1.0, 17).unwrap(), 1, 2024, 0).unwrap();
    let n = 100_000;
    let scale = (1.0 / path.grid().h_fine()).sqrt();
    let z: Vec<f64> = (0..n).map(|i| scale * path.increment_at(i, 1).unwrap()[0]).collect();
    let mean = z.iter().sum::<f64>() / n as f64;
    let var = z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let lag = z.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum::<f64>() / ((n - 1) as f64 * var);
    assert!((0.98..=1.02).contains(&var), "variance {var}");
    assert!(lag.abs() < 0.01, "lag-1 autocorrelation {lag}");
}

#[test]
fn globally_monotone_drift_probe() {
    let model = SdeModel::new(
        "cubic",
        params(1.0, -1.0, 2.0),
        |_: f64, x: &[f64], out: &mut [f64]| out[0] = -x[0].powi(3) - x[0],
        |_: f64, _: &[f64], out: &mut [f64]| out.fill(0.0),
    )
    .unwrap();
    for radius in [0.1, 1.0, 10.0, 100.0] {
        let a = probe_monotonicity(&model, radius, 10_000, 5).unwrap();
        assert!(a <= -1.0 + 1e-9, "radius {radius}: {a}");
    }
}

#[test]
fn coercivity_constant_diverges_as_epsilon_vanishes() {
    let c = |eps: f64| derive_coercivity(0.0, eps, 4.0, 1.0, 1.0, 0.0).unwrap().1;
    assert!(c(1e-12) > 1e11);
    assert!(c(1e-6) < c(1e-9));
}

#[test]
fn preset_scheme_constants() {
    let m = preset("example1-multiplicative").unwrap();
    let k = scheme_constants(&m, 0.5, 1.0).unwrap();
    assert_eq!((k.l1, k.l2), (4.0, 4.5));
    assert_eq!(k.alpha2, m.alpha1() + 0.5);
}

#[test]
fn deterministic_contraction_is_geometric() {
    let model = linear_additive(2.0, 0.0);
    let h = 0.05;
    let cfg = SchemeConfig::new(h).with_admissibility(Admissibility::Off);
    let g = contraction_gap(&model, &cfg, 1, &[0], &[0.5], &[-0.25], 0.0, 2.0).unwrap();
    let q = (1.0 - 2.0 * h) * (1.0 - 2.0 * h);
    for r in &g.step_ratio {
        assert!((r - q).abs() < 1e-12, "{r} vs {q}");
    }
}

#[test]
fn mean_square_contraction_rate() {
    let (lambda, sigma, p1, h) = (1.0, 0.1, 2.0, 0.1);
    let alpha1 = (2.0 * p1 - 1.0) * sigma * sigma / 2.0;
    let model = linear_diffusion(lambda, sigma, alpha1, p1);
    let cfg = SchemeConfig::new(h).with_admissibility(Admissibility::Off);
    let streams: Vec<u64> = (0..2000).collect();
    let g = contraction_gap(&model, &cfg, 9, &streams, &[1.0], &[-1.0], 0.0, 5.0).unwrap();
    let bound = 1.0 - (lambda - alpha1) * h;
    for (r, s) in g.step_ratio.iter().zip(&g.step_ratio_sem) {
        assert!(*r <= bound + 5.0 * s, "{r} > {bound} + 5*{s}");
    }
}

#[test]
fn periodicity_with_zero_shift_is_exact() {
    for name in PRESET_NAMES {
        let model = preset(name).unwrap();
        let cfg = SchemeConfig::new(0.01).with_admissibility(Admissibility::Off);
        for seed in [0, 1, 99] {
            assert_eq!(
                periodicity_check(&model, &cfg, seed, &[0.3], -2.0, (0.0, 1.0), 0).unwrap(),
                0.0
            );
        }
    }
}

#[test]
fn pullback_forgets_initial_value() {
    let model = preset("example1-multiplicative").unwrap();
    let cfg = SchemeConfig::new(0.01).with_admissibility(Admissibility::Off);
    let a = pullback_solve(&model, &cfg, 11, 0, &[0.8], (-1.0, 0.0), 12, 1e-6).unwrap();
    let b = pullback_solve(&model, &cfg, 11, 0, &[-0.5], (-1.0, 0.0), 12, 1e-6).unwrap();
    assert!(a.converged && b.converged);
    let k = a.k_used.min(b.k_used);
    let gap = a.terminal_states[&k]
        .iter()
        .zip(&b.terminal_states[&k])
        .fold(0.0f64, |m, (x, y)| m.max(dist(x, y)));
    assert!(gap * gap < 1e-4, "sup gap {gap}");
}

#[test]
fn pullback_gaps_shrink() {
    let model = preset("example1-multiplicative").unwrap();
    let cfg = SchemeConfig::new(0.01).with_admissibility(Admissibility::Off);
    let r = pullback_solve(&model, &cfg, 3, 0, &[0.3], (-1.0, 0.0), 6, f64::MIN_POSITIVE).unwrap();
    assert_eq!(r.cauchy_gaps.len(), r.k_used - 1);
    for w in r.cauchy_gaps.windows(2) {
        assert!(w[1] <= w[0] + 1e-12, "{:?}", r.cauchy_gaps);
    }
}

#[test]
fn mse_grows_with_step_on_presets() {
    for (name, t0, t_end, xi) in [
        ("example1-multiplicative", -2.0, 2.0, 0.3),
        ("example2-additive", -2.0, 2.0, 0.5),
    ] {
        let model = preset(name).unwrap();
        let s = ConvergenceSettings {
            t0,
            t_end,
            ref_levels: 12,
            test_exponents: vec![6, 7, 8, 9],
            m_paths: 100,
            seed: 5,
            xi: vec![xi],
            kind: SchemeKind::ProjectedEuler,
            admissibility: Admissibility::Off,
        };
        let r = mse_convergence(&model, &s).unwrap();
        for w in r.points.windows(2) {
            let slack = 3.0 * (w[0].sem.powi(2) + w[1].sem.powi(2)).sqrt();
            assert!(w[1].mse + slack >= w[0].mse, "{name}: {:?}", r.points);
        }
    }
}

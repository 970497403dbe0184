use proptest::prelude::*;

use spikelab::continuation::{stability_hint, steady_newton, SteadyProblem};
use spikelab::model::{DomainMode, Grid1D, ModelParams};
use spikelab::nlep::{classify_branch, Verdict};
use spikelab::outer::{homog_roots, nucleation_threshold, solve_v0_mu};
use spikelab::sim::{
    auto_grid, blended_spike, simulate, InitialCondition, SimConfig, SpikeLevel,
};
use spikelab::smalleig::small_lambda_roots;
use spikelab::Complex64;

fn base(dv: f64) -> ModelParams {
    ModelParams::builder()
        .a(0.5)
        .b(1.0)
        .c(1.0)
        .l(4.0)
        .delta1(1e-4)
        .dv(dv)
        .build()
        .unwrap()
}

#[test]
fn half_domain_matches_mirrored_full_domain() {
    let p = base(2.0);
    let run = |grid: Grid1D| {
        let mut cfg = SimConfig::new(p, grid.mode(), 2.0).unwrap();
        cfg.grid = grid;
        cfg.dt = 0.02;
        cfg.initial = InitialCondition::AsymptoticSpike {
            center: 0.0,
            level: SpikeLevel::Upper,
        };
        simulate(&cfg).unwrap().final_state.fields
    };
    let half = run(Grid1D::half(4.0, 801).unwrap());
    let full = run(Grid1D::full(4.0, 1601).unwrap());
    let off = 800;
    let worst = (0..801)
        .map(|i| {
            let du = (half.u[i] - full.u[off + i]).abs() / half.u[i].abs().max(1.0);
            let mirror = (full.u[off + i] - full.u[off - i]).abs() / half.u[i].abs().max(1.0);
            du.max(mirror)
        })
        .fold(0.0, f64::max);
    assert!(worst < 1e-8, "{worst}");
}

#[test]
fn tiny_theta_matches_quasi_static_inhibitor() {
    let run = |theta: f64| {
        let p = ModelParams::builder()
            .a(0.5)
            .l(4.0)
            .delta1(1e-4)
            .dv(2.0)
            .theta(theta)
            .build()
            .unwrap();
        let mut cfg = SimConfig::new(p, DomainMode::Half, 1.0).unwrap();
        cfg.grid = Grid1D::half(4.0, 801).unwrap();
        cfg.dt = 0.01;
        simulate(&cfg).unwrap().final_state.fields
    };
    let a = run(0.0);
    let b = run(1e-8);
    let rel = a.max_abs_diff(&b) / a.u.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    assert!(rel < 1e-6, "{rel}");
}

#[test]
fn steady_state_agrees_with_outer_solve() {
    let p = base(2.0);
    let grid = auto_grid(&p, DomainMode::Half, 401).unwrap();
    let prob = SteadyProblem::new(p, grid.clone()).unwrap();
    let init = blended_spike(&grid, &p, 0.0, SpikeLevel::Coupled).unwrap();
    let sol = steady_newton(&prob, &init, 2.0, 30).unwrap();
    let v0 = sol.state.v[0] * p.sqrt_delta1();
    let want = solve_v0_mu(&p, None).unwrap().v0;
    assert!((v0 / want - 1.0).abs() < 0.05, "{v0} vs {want}");
    let mu = sol.state.u[grid.n() - 1];
    let want_mu = solve_v0_mu(&p, None).unwrap().mu;
    assert!((mu / want_mu - 1.0).abs() < 0.05, "{mu} vs {want_mu}");
    assert!(stability_hint(&prob, &sol.state, 2.0).unwrap() < 0.0);
}

#[test]
fn outer_solve_exists_only_above_threshold() {
    let d = nucleation_threshold(&base(2.0)).unwrap().d_nuc().unwrap();
    assert!(solve_v0_mu(&base(d * 1.05), None).is_ok());
    assert!(solve_v0_mu(&base(d * 0.9), None).is_err());
}

#[test]
fn homogeneous_branches_have_opposite_verdicts() {
    for dv in [1.0, 1.5, 2.0] {
        let p = ModelParams::builder()
            .a(0.014)
            .b(0.0005)
            .c(3.0)
            .l(1000.0)
            .delta1(1e-3)
            .dv(dv)
            .build()
            .unwrap();
        let r = homog_roots(&p).unwrap();
        assert!(r.v0_plus > r.v0_minus);
        assert_eq!(classify_branch(r.v0_plus, &p), Verdict::Stable, "dv={dv}");
        assert_eq!(classify_branch(r.v0_minus, &p), Verdict::Unstable, "dv={dv}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn drift_pair_solves_its_quadratic(tau in 0.05f64..5.0, c in 0.5f64..2.0, dv in 0.5f64..3.0) {
        let p = base(dv).with_c(c).unwrap();
        let d = small_lambda_roots(tau, &p).unwrap();
        let [a, b, k] = d.coeffs;
        for l in d.lambda_pair {
            let r = l * l * a + l * b + Complex64::new(k, 0.0);
            prop_assert!(r.norm() <= 1e-9 * (a.abs() * l.norm_sqr() + b.abs() * l.norm() + k.abs()));
        }
        // growth switches on at tau_h
        let growing = d.lambda_pair[0].re > 0.0;
        prop_assert_eq!(growing, tau > d.tau_h);
    }

    #[test]
    fn nucleation_threshold_scales_with_length(l in 2.0f64..8.0) {
        let p = base(2.0).with_l(l).unwrap();
        let d = nucleation_threshold(&p).unwrap().d_nuc().unwrap();
        prop_assert!(d > 0.0 && d.is_finite());
        let q = base(2.0).with_l(1.5 * l).unwrap();
        let dq = nucleation_threshold(&q).unwrap().d_nuc().unwrap();
        prop_assert!(dq > d);
    }
}

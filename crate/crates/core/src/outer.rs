//! Outer problem on `0 < x <= l`: the reduced ODE `Dv (f(u) u_x)_x = R(u)`,
//! its first integral `G`, the quadrature `chi`, the nucleation threshold,
//! the coupled `(V0, mu)` amplitude solve and the closed-form small-`a` and
//! homogeneous-background roots.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::profile::{gamma_of, u0p_of};
use crate::newton::damped_newton2;
use crate::quad;

const POLE_TOL: f64 = 1e-12;
const QUAD_TOL: f64 = 1e-13;
pub use crate::newton::NEWTON_TOL;

fn pole_guard(u: f64, p: &ModelParams) -> Result<f64> {
    let s = u - p.a();
    if s.abs() < POLE_TOL {
        Err(Error::PoleAtBackground { u })
    } else {
        Ok(s)
    }
}

/// `R(u) = u^2 - b c u^2 / (u - a)`.
pub fn r_of(u: f64, p: &ModelParams) -> Result<f64> {
    let s = pole_guard(u, p)?;
    Ok(u * u - p.b() * p.c() * u * u / s)
}

/// `f(u) = c u (2a - u) / (u - a)^2`.
pub fn f_of(u: f64, p: &ModelParams) -> Result<f64> {
    let s = pole_guard(u, p)?;
    Ok(p.c() * u * (2.0 * p.a() - u) / (s * s))
}

/// `R'(u) = 2u + b f(u)`.
pub fn r_prime(u: f64, p: &ModelParams) -> Result<f64> {
    Ok(2.0 * u + p.b() * f_of(u, p)?)
}

/// Closed-form antiderivative of `-R f`.
pub fn g_of(xi: f64, p: &ModelParams) -> Result<f64> {
    if xi <= p.a() {
        return Err(Error::PoleAtBackground { u: xi });
    }
    let s = pole_guard(xi, p)?;
    let (a, b, c) = (p.a(), p.b(), p.c());
    let a3 = a * a * a;
    let a4 = a3 * a;
    Ok(c * (s * s * s / 3.0 + 0.5 * (2.0 * a - b * c) * s * s - 2.0 * a * b * c * s
        - 2.0 * a3 * s.ln()
        + (a4 - 2.0 * a3 * b * c) / s
        - a4 * b * c / (2.0 * s * s)))
}

fn check_bracket(mu: f64, u0p: f64, p: &ModelParams) -> Result<()> {
    if !(u0p > p.a()) {
        return Err(Error::OutOfRange {
            what: "u(0+)",
            value: u0p,
        });
    }
    if !(mu >= u0p && mu <= 2.0 * p.a() * (1.0 + 1e-14)) {
        return Err(Error::OutOfRange {
            what: "mu",
            value: mu,
        });
    }
    Ok(())
}

/// `2 int_{u_lo}^{mu} sqrt(G(mu) - G) R'/R^2` with `xi = mu - s^2`.
fn chi_integral(mu: f64, u_lo: f64, g_mu: f64, p: &ModelParams) -> Result<f64> {
    if u_lo >= mu {
        return Ok(0.0);
    }
    let s_max = (mu - u_lo).sqrt();
    let integrand = |s: f64| {
        let xi = mu - s * s;
        let gap = (g_mu - g_of(xi, p).unwrap_or(f64::NAN)).max(0.0);
        let r = r_of(xi, p).unwrap_or(f64::NAN);
        let rp = r_prime(xi, p).unwrap_or(f64::NAN);
        2.0 * s * gap.sqrt() * rp / (r * r)
    };
    Ok(2.0 * quad::integrate(integrand, 0.0, s_max, QUAD_TOL)?)
}

/// `chi(mu)` in the integrated-by-parts form (no endpoint singularity).
pub fn chi_of(mu: f64, u0p: f64, p: &ModelParams) -> Result<f64> {
    check_bracket(mu, u0p, p)?;
    let g_mu = g_of(mu, p)?;
    let boundary = -2.0 * (g_mu - g_of(u0p, p)?).max(0.0).sqrt() / r_of(u0p, p)?;
    Ok(boundary + chi_integral(mu, u0p, g_mu, p)?)
}

/// `int_{u0p}^{u} f / sqrt(G(mu) - G)` for `u0p <= u <= mu`.
pub fn chi_partial(u: f64, mu: f64, u0p: f64, p: &ModelParams) -> Result<f64> {
    check_bracket(mu, u0p, p)?;
    if !(u >= u0p && u <= mu) {
        return Err(Error::OutOfRange {
            what: "u",
            value: u,
        });
    }
    let g_mu = g_of(mu, p)?;
    let top = 2.0 * (g_mu - g_of(u, p)?).max(0.0).sqrt() / r_of(u, p)?;
    let bottom = 2.0 * (g_mu - g_of(u0p, p)?).max(0.0).sqrt() / r_of(u0p, p)?;
    let full = chi_integral(mu, u0p, g_mu, p)?;
    let head = chi_integral(mu, u, g_mu, p)?;
    Ok(top - bottom + full - head)
}

/// Direct quadrature of the improper form; only sensible for `mu < 2a`.
pub fn chi_improper(mu: f64, u0p: f64, p: &ModelParams) -> Result<f64> {
    check_bracket(mu, u0p, p)?;
    let g_mu = g_of(mu, p)?;
    let s_max = (mu - u0p).sqrt();
    let integrand = |s: f64| {
        let xi = mu - s * s;
        let gap = g_mu - g_of(xi, p).unwrap_or(f64::NAN);
        2.0 * s * f_of(xi, p).unwrap_or(f64::NAN) / gap.sqrt()
    };
    quad::integrate(integrand, 0.0, s_max, 1e-11)
}

/// Outcome of the nucleation analysis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NucleationResult {
    Nucleating {
        chi_max: f64,
        d_nuc: f64,
        v0: f64,
        u0p: f64,
    },
    /// `bc < a`: the outer branch relaxes to `u_inf = a + bc < 2a`.
    Homogeneous { u_inf: f64 },
}

impl NucleationResult {
    pub fn d_nuc(&self) -> Result<f64> {
        match *self {
            NucleationResult::Nucleating { d_nuc, .. } => Ok(d_nuc),
            NucleationResult::Homogeneous { u_inf } => Err(Error::RegimeMismatch(format!(
                "no nucleation threshold: homogeneous state u_inf = {u_inf} lies below 2a"
            ))),
        }
    }
}

/// Left side minus right side of the flux matching condition.
fn flux_mismatch(v0: f64, mu: f64, dv: f64, p: &ModelParams) -> Result<(f64, f64)> {
    let gamma = gamma_of(p.a(), p.c(), p.delta1(), v0)?;
    let u0p = u0p_of(v0, gamma, p);
    check_bracket(mu, u0p, p)?;
    let lhs = 3.0 * v0 * v0 * (1.0 - 2.0 * gamma).sqrt()
        / ((2.0 * p.delta1()).sqrt() * dv.sqrt() * p.c() * p.c());
    let gap = g_of(mu, p)? - g_of(u0p, p)?;
    Ok((lhs - gap.max(0.0).sqrt(), u0p))
}

/// Nucleation threshold `D_nuc = 2 l^2 / chi(2a)^2`.
///
/// With `mu = 2a` both matching equations still involve `Dv`, so the pair
/// `(V0, Dv)` is solved together.
pub fn nucleation_threshold(p: &ModelParams) -> Result<NucleationResult> {
    if !p.is_nucleating() {
        return Ok(NucleationResult::Homogeneous {
            u_inf: p.a() + p.b() * p.c(),
        });
    }
    let mu = 2.0 * p.a();
    let lroot = (2.0f64).sqrt() * p.l();
    // start: chi_max with u(0+) taken from the V0+ spike, then V0+ at that Dv
    let gamma0 = gamma_of(p.a(), p.c(), p.delta1(), smalla_plus_asymptotic(p))?;
    let chi0 = chi_of(mu, u0p_of(smalla_plus_asymptotic(p), gamma0, p), p)?;
    let dv0 = 2.0 * p.l() * p.l() / (chi0 * chi0);
    let v0_start = smalla_plus_asymptotic(&p.with_dv(dv0)?);

    let residual = |z: [f64; 2]| -> Result<[f64; 2]> {
        let (v0, ln_dv) = (z[0], z[1]);
        let dv = ln_dv.exp();
        let (e1, u0p) = flux_mismatch(v0, mu, dv, p)?;
        let e2 = chi_of(mu, u0p, p)? - lroot / dv.sqrt();
        Ok([e1, e2])
    };
    let mut last_err = None;
    for scale in [1.0, 0.8, 1.25, 0.6, 1.6] {
        match damped_newton2([v0_start * scale, dv0.ln()], &residual, NEWTON_TOL) {
            Ok((z, _)) => {
                let v0 = z[0];
                let gamma = gamma_of(p.a(), p.c(), p.delta1(), v0)?;
                let u0p = u0p_of(v0, gamma, p);
                let chi_max = chi_of(mu, u0p, p)?;
                return Ok(NucleationResult::Nucleating {
                    chi_max,
                    d_nuc: 2.0 * p.l() * p.l() / (chi_max * chi_max),
                    v0,
                    u0p,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one start"))
}

/// Converged coupled solve of the matching conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OuterSolve {
    pub v0: f64,
    pub mu: f64,
    pub u0p: f64,
    pub gamma: f64,
    pub chi_of_mu: f64,
    pub converged: bool,
    pub residuals: [f64; 2],
}

/// Solve the flux-matching and `chi(mu) = sqrt(2/Dv) l` equations for
/// `(V0, mu)`. Without a guess the small-`a` root `V0+` and `mu = 1.5a`
/// are tried first, then a grid of `mu` starts.
pub fn solve_v0_mu(p: &ModelParams, initial_guess: Option<(f64, f64)>) -> Result<OuterSolve> {
    if !p.is_nucleating() {
        return Err(Error::RegimeMismatch(format!(
            "coupled solve needs bc > a (a = {}, bc = {})",
            p.a(),
            p.b() * p.c()
        )));
    }
    let a = p.a();
    let target = (2.0 / p.dv()).sqrt() * p.l();
    let residual = |z: [f64; 2]| -> Result<[f64; 2]> {
        let (v0, mu) = (z[0], z[1]);
        let (e1, u0p) = flux_mismatch(v0, mu, p.dv(), p)?;
        Ok([e1, chi_of(mu, u0p, p)? - target])
    };
    let v0p = smalla_plus_asymptotic(p);
    let mut starts = Vec::new();
    if let Some(g) = initial_guess {
        starts.push(g);
    }
    starts.push((v0p, 1.5 * a));
    for frac in [0.2, 0.05, 0.35, 0.65, 0.8, 0.9, 0.97] {
        starts.push((v0p, a * (1.0 + frac)));
    }
    let mut last_err = None;
    for (v0, mu) in starts {
        match damped_newton2([v0, mu], &residual, NEWTON_TOL) {
            Ok((z, r)) => {
                let gamma = gamma_of(a, p.c(), p.delta1(), z[0])?;
                let u0p = u0p_of(z[0], gamma, p);
                return Ok(OuterSolve {
                    v0: z[0],
                    mu: z[1],
                    u0p,
                    gamma,
                    chi_of_mu: chi_of(z[1], u0p, p)?,
                    converged: true,
                    residuals: r,
                });
            }
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("at least one start"))
}

/// Outer `u(x)` from `chi(u) = sqrt(2/Dv) |x|`, for `|x| <= l`.
pub fn outer_u_profile(x: &[f64], solve: &OuterSolve, p: &ModelParams) -> Result<Vec<f64>> {
    let scale = (2.0 / p.dv()).sqrt();
    let (lo, hi) = (solve.u0p, solve.mu);
    let chi_top = chi_partial(hi, hi, lo, p)?;
    x.iter()
        .map(|&xi| {
            if xi.abs() > p.l() * (1.0 + 1e-12) {
                return Err(Error::OutOfRange {
                    what: "x",
                    value: xi,
                });
            }
            let target = scale * xi.abs();
            if target <= 0.0 {
                return Ok(lo);
            }
            if target >= chi_top {
                return Ok(hi);
            }
            let (mut a, mut b) = (lo, hi);
            while b - a > 1e-13 * hi {
                let m = 0.5 * (a + b);
                if chi_partial(m, hi, lo, p)? < target {
                    a = m;
                } else {
                    b = m;
                }
            }
            Ok(0.5 * (a + b))
        })
        .collect()
}

fn tanh_kappa(p: &ModelParams) -> f64 {
    p.kappa().tanh()
}

fn smalla_plus_asymptotic(p: &ModelParams) -> f64 {
    (p.b() * p.dv()).sqrt() * p.c() * p.c() * tanh_kappa(p) / 3.0
}

/// Stable real roots of `A x^2 + B x + C`, larger first.
fn real_quadratic_roots(qa: f64, qb: f64, qc: f64) -> Result<(f64, f64)> {
    let disc = qb * qb - 4.0 * qa * qc;
    if disc < 0.0 {
        return Err(Error::ComplexRoots { discriminant: disc });
    }
    let q = -0.5 * (qb + qb.signum() * disc.sqrt());
    if q == 0.0 {
        return Ok((0.0, 0.0));
    }
    let (r1, r2) = (q / qa, qc / q);
    Ok((r1.max(r2), r1.min(r2)))
}

/// Exact roots of the small-`a` amplitude quadratic and their leading-order
/// forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SmallARoots {
    pub v0_plus: f64,
    pub v0_minus: f64,
    pub v0_plus_asym: f64,
    pub v0_minus_asym: f64,
    /// `[A, B, C]` of `A V^2 + B V + C = 0`.
    pub coeffs: [f64; 3],
}

fn amplitude_quadratic(p: &ModelParams, plateau_root: f64) -> [f64; 3] {
    let t = tanh_kappa(p);
    let c2 = p.c() * p.c();
    let sd = p.sqrt_delta1();
    [
        3.0,
        -(3.0 * p.a() * p.c() * sd + (p.b() * p.dv()).sqrt() * c2 * t),
        (p.dv() / p.b()).sqrt() * plateau_root * plateau_root * c2 * sd * t,
    ]
}

pub fn smalla_roots(p: &ModelParams) -> Result<SmallARoots> {
    let coeffs = amplitude_quadratic(p, p.a());
    let (hi, lo) = real_quadratic_roots(coeffs[0], coeffs[1], coeffs[2])?;
    Ok(SmallARoots {
        v0_plus: hi,
        v0_minus: lo,
        v0_plus_asym: smalla_plus_asymptotic(p),
        v0_minus_asym: p.sqrt_delta1() * p.a() * p.a() / p.b(),
        coeffs,
    })
}

/// Roots of the amplitude quadratic with the outer background `a + bc`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HomogRoots {
    pub v0_plus: f64,
    pub v0_minus: f64,
    /// `v(0) = V0 / sqrt(delta1)` on each branch.
    pub v_plus: f64,
    pub v_minus: f64,
    pub coeffs: [f64; 3],
}

pub fn homog_roots(p: &ModelParams) -> Result<HomogRoots> {
    let coeffs = amplitude_quadratic(p, p.a() + p.b() * p.c());
    let (hi, lo) = real_quadratic_roots(coeffs[0], coeffs[1], coeffs[2])?;
    let sd = p.sqrt_delta1();
    Ok(HomogRoots {
        v0_plus: hi,
        v0_minus: lo,
        v_plus: hi / sd,
        v_minus: lo / sd,
        coeffs,
    })
}

/// Outer background used by [`v_outer_profile`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Background {
    SmallA,
    Homogeneous,
}

/// Cosh-shaped outer inhibitor with `v(0) = V0/sqrt(delta1)` and
/// `v_x(+-l) = 0`.
pub fn v_outer_profile(x: &[f64], v0: f64, p: &ModelParams, background: Background) -> Vec<f64> {
    let u_bg = match background {
        Background::SmallA => p.a(),
        Background::Homogeneous => p.a() + p.b() * p.c(),
    };
    let plateau = u_bg * u_bg / p.b();
    let k = (p.b() / p.dv()).sqrt();
    let l = p.l();
    let amp = v0 / p.sqrt_delta1() - plateau;
    x.iter()
        .map(|&xi| {
            let d = xi.abs().min(l);
            // cosh(k(l-d))/cosh(kl) without overflow
            let ratio = ((-k * d).exp() + (-k * (2.0 * l - d)).exp()) / (1.0 + (-2.0 * k * l).exp());
            plateau + amp * ratio
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn nuc_params() -> ModelParams {
        ModelParams::builder()
            .a(0.5)
            .b(1.0)
            .c(1.0)
            .l(4.0)
            .delta1(1e-4)
            .build()
            .unwrap()
    }

    fn wide_params(dv: f64) -> ModelParams {
        ModelParams::builder()
            .a(1.0)
            .b(3.0)
            .c(1.0)
            .l(3.0)
            .delta1(1e-4)
            .dv(dv)
            .build()
            .unwrap()
    }

    #[test]
    fn r_special_values() {
        let p = nuc_params();
        let a = p.a();
        let bc = p.b() * p.c();
        assert!((r_of(2.0 * a, &p).unwrap() - 4.0 * a * (a - bc)).abs() < 1e-14);
        assert!(r_of(a + bc, &p).unwrap().abs() < 1e-14);
        assert!(matches!(
            r_of(a, &p),
            Err(Error::PoleAtBackground { .. })
        ));
    }

    #[test]
    fn g_prime_is_minus_r_f() {
        let p = nuc_params();
        let a = p.a();
        for i in 0..40 {
            let xi = a + 0.01 + (a - 0.01) * i as f64 / 39.0;
            let h = 1e-6 * xi;
            let d = (g_of(xi + h, &p).unwrap() - g_of(xi - h, &p).unwrap()) / (2.0 * h);
            let want = -r_of(xi, &p).unwrap() * f_of(xi, &p).unwrap();
            assert!((d - want).abs() <= 1e-6 * want.abs() + 1e-8, "{xi}: {d} vs {want}");
            if xi < 2.0 * a {
                assert!(want > 0.0);
            }
        }
    }

    #[test]
    fn chi_vanishes_at_lower_end() {
        let p = nuc_params();
        let u0p = 0.51;
        assert!(chi_of(u0p, u0p, &p).unwrap().abs() < 1e-14);
        assert!(chi_of(u0p + 1e-8, u0p, &p).unwrap() < 1e-2);
    }

    #[test]
    fn proper_and_improper_chi_agree() {
        let p = nuc_params();
        let a = chi_of(0.8, 0.507, &p).unwrap();
        let b = chi_improper(0.8, 0.507, &p).unwrap();
        assert!((a - b).abs() < 1e-8, "{a} {b}");
        let top = chi_partial(0.8, 0.8, 0.507, &p).unwrap();
        assert!((top - a).abs() < 1e-12);
    }

    #[test]
    fn nucleation_threshold_value() {
        let p = nuc_params();
        let r = nucleation_threshold(&p).unwrap();
        let d = r.d_nuc().unwrap();
        assert!((d - 1.06).abs() < 0.03 * 1.06, "D_nuc = {d}");
        let homog = ModelParams::builder().a(1.5).build().unwrap();
        let r = nucleation_threshold(&homog).unwrap();
        assert_eq!(r, NucleationResult::Homogeneous { u_inf: 2.5 });
        assert!(matches!(r.d_nuc(), Err(Error::RegimeMismatch(_))));
    }

    #[test]
    fn solve_residuals_and_ordering() {
        let p = wide_params(3.0);
        let s = solve_v0_mu(&p, None).unwrap();
        assert!(s.converged);
        assert!(s.residuals.iter().all(|r| r.abs() < NEWTON_TOL));
        assert!(p.a() < s.u0p && s.u0p < s.mu && s.mu <= 2.0 * p.a());
        assert!((s.v0 - 1.0017).abs() < 2e-3, "{}", s.v0);
    }

    #[test]
    fn solve_fails_below_threshold() {
        let p = wide_params(1.0);
        assert!(solve_v0_mu(&p, None).is_err());
    }

    #[test]
    fn solver_failure_brackets_nucleation_threshold() {
        let p = nuc_params();
        let d_nuc = nucleation_threshold(&p).unwrap().d_nuc().unwrap();
        let mut ok = 1.1 * d_nuc;
        let mut bad = 0.95 * d_nuc;
        let mut guess = solve_v0_mu(&p.with_dv(ok).unwrap(), None)
            .map(|s| (s.v0, s.mu))
            .unwrap();
        while (ok - bad) / d_nuc > 2e-4 {
            let mid = 0.5 * (ok + bad);
            match solve_v0_mu(&p.with_dv(mid).unwrap(), Some(guess)) {
                Ok(s) => {
                    ok = mid;
                    guess = (s.v0, s.mu);
                }
                Err(_) => bad = mid,
            }
        }
        assert!((ok - d_nuc).abs() < 1e-3 * d_nuc, "{ok} vs {d_nuc}");
    }

    #[test]
    fn outer_profile_endpoints_monotone_and_shooting() {
        let p = wide_params(3.0);
        let s = solve_v0_mu(&p, None).unwrap();
        let n = 61;
        let xs: Vec<f64> = (0..n).map(|i| p.l() * i as f64 / (n - 1) as f64).collect();
        let u = outer_u_profile(&xs, &s, &p).unwrap();
        assert!((u[0] - s.u0p).abs() < 1e-8);
        assert!((u[n - 1] - s.mu).abs() < 1e-8);
        assert!(u.windows(2).all(|w| w[1] > w[0]));

        // RK4 on (u, q = f u_x) backward from x = l
        let rhs = |u: f64, q: f64| -> (f64, f64) {
            (q / f_of(u, &p).unwrap(), r_of(u, &p).unwrap() / p.dv())
        };
        let steps = 6000;
        let h = -p.l() / steps as f64;
        let (mut uu, mut q) = (s.mu, 0.0);
        let mut worst: f64 = 0.0;
        for k in 0..steps {
            let (k1u, k1q) = rhs(uu, q);
            let (k2u, k2q) = rhs(uu + 0.5 * h * k1u, q + 0.5 * h * k1q);
            let (k3u, k3q) = rhs(uu + 0.5 * h * k2u, q + 0.5 * h * k2q);
            let (k4u, k4q) = rhs(uu + h * k3u, q + h * k3q);
            uu += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
            q += h / 6.0 * (k1q + 2.0 * k2q + 2.0 * k3q + k4q);
            let x = p.l() + (k + 1) as f64 * h;
            if (k + 1) % 100 == 0 {
                let idx = ((x / p.l()) * (n - 1) as f64).round() as usize;
                worst = worst.max((uu - u[idx]).abs());
            }
        }
        assert!(worst < 1e-4, "shooting mismatch {worst}");
    }

    #[test]
    fn small_a_limits() {
        let p = ModelParams::builder().a(0.0).l(40.0).build().unwrap();
        let r = smalla_roots(&p).unwrap();
        assert!((r.v0_plus - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(r.v0_minus, 0.0);
        let p = ModelParams::builder().a(0.1).l(3.0).build().unwrap();
        let r = smalla_roots(&p).unwrap();
        assert!((r.v0_plus - r.v0_plus_asym).abs() < 0.01 * r.v0_plus_asym);
        assert!((r.v0_minus - r.v0_minus_asym).abs() < 0.05 * r.v0_minus_asym);
    }

    #[test]
    fn homogeneous_roots_small_b() {
        let p = ModelParams::builder()
            .delta1(1e-3)
            .a(0.014)
            .b(0.0005)
            .c(3.0)
            .l(1000.0)
            .dv(1.0)
            .build()
            .unwrap();
        let r = homog_roots(&p).unwrap();
        assert!((r.v_plus - 1.47).abs() < 0.05 * 1.47, "{}", r.v_plus);
        assert!((r.v_minus - 0.69).abs() < 0.05 * 0.69, "{}", r.v_minus);
    }

    #[test]
    fn homogeneous_reduces_to_small_a_when_bc_vanishes() {
        let base = ModelParams::builder().a(0.05).build().unwrap();
        let small = amplitude_quadratic(&base, base.a());
        let mut prev = f64::INFINITY;
        for c in [1e-1, 1e-2, 1e-3, 1e-4] {
            let p = base.with_c(c).unwrap();
            let h = amplitude_quadratic(&p, p.a() + p.b() * p.c());
            let s = amplitude_quadratic(&p, p.a());
            let gap = (h[2] / s[2] - 1.0).abs();
            assert!(gap < prev);
            prev = gap;
        }
        assert!(prev < 1e-2);
        assert!(small[2] > 0.0);
    }

    #[test]
    fn v_outer_small_a_residual() {
        let p = ModelParams::builder().a(0.1).l(2.0).dv(0.7).build().unwrap();
        let n = 401;
        let h = 2.0 * p.l() / (n - 1) as f64;
        let xs: Vec<f64> = (0..n).map(|i| -p.l() + i as f64 * h).collect();
        let v = v_outer_profile(&xs, 0.3, &p, Background::SmallA);
        assert!((v[n / 2] - 0.3 / p.sqrt_delta1()).abs() < 1e-9);
        // exact profile: check the ODE with the analytic second derivative
        let k = (p.b() / p.dv()).sqrt();
        let plateau = p.a() * p.a() / p.b();
        for (i, &x) in xs.iter().enumerate() {
            if i == n / 2 {
                continue;
            }
            let vxx = k * k * (v[i] - plateau);
            let res = p.dv() * vxx - p.b() * v[i] + p.a() * p.a();
            assert!(res.abs() < 1e-8 * v[n / 2], "x={x} res={res}");
        }
        let d = (v[n - 1] - v[n - 2]) / h;
        assert!(d.abs() < k * k * (v[n - 1] - plateau) * h);
    }

    proptest! {
        #[test]
        fn lemma_signs(t in 0.001f64..0.999) {
            let p = nuc_params();
            let u = p.a() * (1.0 + t);
            prop_assert!(r_of(u, &p).unwrap() < 0.0);
            prop_assert!(f_of(u, &p).unwrap() > 0.0);
            prop_assert!(r_prime(u, &p).unwrap() > 0.0);
        }

        #[test]
        fn r_prime_finite_difference(t in 0.01f64..0.99) {
            let p = nuc_params();
            let u = p.a() * (1.0 + t);
            let h = 1e-6;
            let d = (r_of(u + h, &p).unwrap() - r_of(u - h, &p).unwrap()) / (2.0 * h);
            let want = r_prime(u, &p).unwrap();
            prop_assert!((d - want).abs() < 1e-6 * want.abs().max(1.0));
        }

        #[test]
        fn chi_monotone(t1 in 0.05f64..1.0, t2 in 0.05f64..1.0) {
            prop_assume!((t1 - t2).abs() > 1e-3);
            let p = nuc_params();
            let u0p = 0.507;
            let mu = |t: f64| u0p + t * (2.0 * p.a() - u0p);
            let (c1, c2) = (chi_of(mu(t1), u0p, &p).unwrap(), chi_of(mu(t2), u0p, &p).unwrap());
            prop_assert_eq!(c1 < c2, t1 < t2);
        }

        #[test]
        fn quadratic_root_residuals(a in 0.0f64..0.5, dv in 0.2f64..3.0, l in 0.5f64..5.0) {
            let p = ModelParams::builder().a(a).dv(dv).l(l).build().unwrap();
            if let Ok(r) = smalla_roots(&p) {
                let [qa, qb, qc] = r.coeffs;
                for v in [r.v0_plus, r.v0_minus] {
                    let scale = qa * v * v + qb.abs() * v + qc.abs();
                    prop_assert!((qa * v * v + qb * v + qc).abs() <= 1e-12 * scale.max(1e-300));
                }
            }
        }
    }
}

//! Small (drift) eigenvalues for `theta = 0, tau > 0`: the threshold
//! `tau_h`, the quadratic for `lambda`, its asymptotic real and imaginary
//! parts, and the outer correction `eta`.

use std::sync::OnceLock;

use num_complex::Complex64;

use crate::error::Result;
use crate::model::ModelParams;
use crate::profile::{moments, MomentTable};

fn moments0() -> Result<MomentTable> {
    static TABLE: OnceLock<MomentTable> = OnceLock::new();
    if let Some(m) = TABLE.get() {
        return Ok(*m);
    }
    let m = moments(0.0)?;
    Ok(*TABLE.get_or_init(|| m))
}

/// `tau_h = c J1/J2` from quadrature, and the closed form `7c/6`.
pub fn tau_h_threshold(c: f64) -> Result<(f64, f64)> {
    let m = moments0()?;
    Ok((7.0 * c / 6.0, c * m.j1 / m.j2))
}

/// `k = (J3/3)(b/Dv) sech^2(sqrt(b/Dv) l)`.
pub fn k_factor(p: &ModelParams) -> Result<f64> {
    let m = moments0()?;
    let sech = 1.0 / p.kappa().cosh();
    Ok(m.j3 / 3.0 * p.b() / p.dv() * sech * sech)
}

/// Drift spectrum at a given `tau`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DriftSpectrum {
    pub tau: f64,
    pub tau_h: f64,
    pub k: f64,
    /// Roots of `J1 tau l^2 + (J1 c - tau J2 + delta1 k tau) l + delta1 k c = 0`,
    /// larger real part first.
    pub lambda_pair: [Complex64; 2],
    /// `-delta1 k / (J1 - tau J2 / c)`, the root with `tau/(c + tau l)`
    /// frozen at `tau/c`.
    pub lambda_linearized: f64,
    pub re_asym: f64,
    pub im_asym: f64,
    /// `[A, B, C]` of the quadratic above.
    pub coeffs: [f64; 3],
}

pub fn small_lambda_roots(tau: f64, p: &ModelParams) -> Result<DriftSpectrum> {
    let m = moments0()?;
    let k = k_factor(p)?;
    let (c, d1) = (p.c(), p.delta1());
    let qa = m.j1 * tau;
    let qb = m.j1 * c - tau * m.j2 + d1 * k * tau;
    let qc = d1 * k * c;
    let disc = qb * qb - 4.0 * qa * qc;
    let lambda_pair = if qa == 0.0 {
        let r = Complex64::new(-qc / qb, 0.0);
        [r, r]
    } else if disc >= 0.0 {
        let q = -0.5 * (qb + qb.signum() * disc.sqrt());
        let (r1, r2) = (q / qa, qc / q);
        [
            Complex64::new(r1.max(r2), 0.0),
            Complex64::new(r1.min(r2), 0.0),
        ]
    } else {
        let re = -qb / (2.0 * qa);
        let im = (-disc).sqrt() / (2.0 * qa);
        [Complex64::new(re, im), Complex64::new(re, -im)]
    };
    let tau_h = 7.0 * c / 6.0;
    Ok(DriftSpectrum {
        tau,
        tau_h,
        k,
        lambda_pair,
        lambda_linearized: -d1 * k / (m.j1 - tau * m.j2 / c),
        re_asym: 3.0 / (7.0 * tau) * (tau - tau_h),
        im_asym: (d1 * 5.0 / 6.0 * k * c / tau).sqrt(),
        coeffs: [qa, qb, qc],
    })
}

/// Outer drift correction `eta(x)` on `[-l, l]`: odd, `eta_x(+-l) = 0`,
/// jump `-(V0/(c Dv)) J0` across the spike.
#[derive(Debug, Clone, PartialEq)]
pub struct EtaProfile {
    pub x: Vec<f64>,
    /// Nodal values; the node at `x = 0` holds the mean of the one-sided limits.
    pub eta: Vec<f64>,
    pub jump: f64,
    pub eta_x_mean: f64,
    amp: f64,
    k: f64,
    l: f64,
}

impl EtaProfile {
    /// `eta(x)` with `side` selecting the one-sided limit at `x = 0`
    /// (`true` for `0+`).
    pub fn eval(&self, x: f64, right: bool) -> f64 {
        if x > 0.0 || (x == 0.0 && right) {
            -self.amp * (self.k * (x - self.l)).cosh()
        } else {
            self.amp * (self.k * (x + self.l)).cosh()
        }
    }
}

pub fn eta_profile(p: &ModelParams, v0: f64, n: usize) -> Result<EtaProfile> {
    let m = moments0()?;
    let (c, dv, l) = (p.c(), p.dv(), p.l());
    let k = (p.b() / dv).sqrt();
    let amp = v0 * m.j0 / (2.0 * c * dv * p.kappa().cosh());
    let grid = crate::model::Grid1D::full(l, n)?;
    let mut prof = EtaProfile {
        x: grid.x().to_vec(),
        eta: Vec::new(),
        jump: -v0 * m.j0 / (c * dv),
        eta_x_mean: v0 / (2.0 * c * dv) * k * m.j0 * p.kappa().tanh(),
        amp,
        k,
        l,
    };
    prof.eta = prof
        .x
        .iter()
        .map(|&x| {
            if x == 0.0 {
                0.5 * (prof.eval(0.0, true) + prof.eval(0.0, false))
            } else {
                prof.eval(x, x > 0.0)
            }
        })
        .collect();
    Ok(prof)
}

/// `<eta_x>` on the upper branch: `(b c / (6 Dv)) J0 tanh^2(kappa)`.
pub fn eta_x_mean_upper(p: &ModelParams) -> Result<f64> {
    let m = moments0()?;
    let t = p.kappa().tanh();
    Ok(p.b() * p.c() / (6.0 * p.dv()) * m.j0 * t * t)
}

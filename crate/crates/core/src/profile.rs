//! Inner-region asymptotics of a single spike: the core shift `gamma`, the
//! homoclinic `w_c`, its moment integrals and the far-field flux handed to
//! the outer problem.

use crate::error::{Error, Result};
use crate::model::ModelParams;

/// Default discriminant margin for [`gamma_of`].
pub const GAMMA_MARGIN: f64 = 1e-10;

/// Smaller root of `gamma^2 - gamma + a c sqrt(delta1) / V0 = 0`.
pub fn gamma_of(a: f64, c: f64, delta1: f64, v0: f64) -> Result<f64> {
    gamma_with_margin(a, c, delta1, v0, GAMMA_MARGIN)
}

pub fn gamma_with_margin(a: f64, c: f64, delta1: f64, v0: f64, margin: f64) -> Result<f64> {
    if !(v0 > 0.0 && v0.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "V0",
            reason: format!("must be positive, got {v0}"),
        });
    }
    let q = a * c * delta1.sqrt() / v0;
    let disc = 1.0 - 4.0 * q;
    if disc < margin {
        return Err(Error::GammaBranchCollision { discriminant: disc });
    }
    // (1 - sqrt(d))/2 rewritten without cancellation
    Ok(2.0 * q / (1.0 + disc.sqrt()))
}

/// `w_c(y) = (3/2)(1-2g) sech^2(sqrt(1-2g) y / 2)`.
pub fn wc_eval(y: f64, gamma: f64) -> f64 {
    let s2 = 1.0 - 2.0 * gamma;
    let sech = 1.0 / (0.5 * s2.sqrt() * y.abs()).cosh();
    1.5 * s2 * sech * sech
}

pub fn wc_prime(y: f64, gamma: f64) -> f64 {
    let s2 = 1.0 - 2.0 * gamma;
    let k = 0.5 * s2.sqrt();
    let z = k * y;
    let sech = 1.0 / z.cosh();
    -3.0 * s2 * k * sech * sech * z.tanh()
}

/// Leading-order inner solution at stretched coordinate `y`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InnerSample {
    pub u0: f64,
    pub w0: f64,
    pub v0: f64,
}

pub fn inner_profile(y: f64, v0: f64, c: f64, gamma: f64) -> Result<InnerSample> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::OutOfRange {
            what: "gamma",
            value: gamma,
        });
    }
    if !(v0 > 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "V0",
            reason: format!("need V0 > 0 and c > 0, got V0={v0}, c={c}"),
        });
    }
    let u0 = v0 / c * (wc_eval(y, gamma) + gamma);
    Ok(InnerSample { u0, w0: u0 / c, v0 })
}

/// Moment integrals of `w_c`.
///
/// `i1`, `i2` are half-line; the `j*` are over the whole line.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentTable {
    pub i1: f64,
    pub i2: f64,
    pub j0: f64,
    pub j1: f64,
    pub j2: f64,
    pub j3: f64,
}

impl MomentTable {
    /// Closed-form values at `gamma = 0`.
    pub fn analytic_gamma0() -> Self {
        MomentTable {
            i1: 3.0,
            i2: 3.0,
            j0: 6.0,
            j1: 6.0 / 5.0,
            j2: 36.0 / 35.0,
            j3: 36.0 / 5.0,
        }
    }
}

const MOMENT_CUTOFF: f64 = 40.0;
const MOMENT_TOL: f64 = 1e-8;

// antiderivatives of sech^{2m} in t = tanh
fn sech_pow_antideriv(m: usize, t: f64) -> f64 {
    let t2 = t * t;
    match m {
        1 => t,
        2 => t - t * t2 / 3.0,
        3 => t - 2.0 * t * t2 / 3.0 + t * t2 * t2 / 5.0,
        4 => t - t * t2 + 0.6 * t * t2 * t2 - t * t2 * t2 * t2 / 7.0,
        _ => unreachable!("only m <= 4 is needed"),
    }
}

/// `[int S, int S^2, int S^3, int S^4]` over `y in [y0, inf)`, `S = sech^2(k y)`.
fn sech_tails(k: f64, y0: f64) -> [f64; 4] {
    let t = (k * y0).tanh();
    let mut out = [0.0; 4];
    for (m, o) in out.iter_mut().enumerate() {
        *o = (sech_pow_antideriv(m + 1, 1.0) - sech_pow_antideriv(m + 1, t)) / k;
    }
    out
}

/// Half-line integrands `[w, w^2, w_y^2, w w_y^2, w^3]`.
fn moment_integrands(y: f64, gamma: f64) -> [f64; 5] {
    let w = wc_eval(y, gamma);
    let wy = wc_prime(y, gamma);
    [w, w * w, wy * wy, w * wy * wy, w * w * w]
}

fn simpson_moments(gamma: f64, panels: usize) -> [f64; 5] {
    let h = MOMENT_CUTOFF / panels as f64;
    let mut acc = [0.0; 5];
    for i in 0..=panels {
        let wgt = if i == 0 || i == panels {
            1.0
        } else if i % 2 == 1 {
            4.0
        } else {
            2.0
        };
        let f = moment_integrands(i as f64 * h, gamma);
        for (a, v) in acc.iter_mut().zip(f) {
            *a += wgt * v;
        }
    }
    acc.map(|a| a * h / 3.0)
}

/// Quadrature moments of `w_c` for `0 <= gamma < 1/2`.
pub fn moments(gamma: f64) -> Result<MomentTable> {
    if !(0.0..0.5).contains(&gamma) {
        return Err(Error::OutOfRange {
            what: "gamma",
            value: gamma,
        });
    }
    let s2 = 1.0 - 2.0 * gamma;
    let amp = 1.5 * s2;
    let k = 0.5 * s2.sqrt();
    let [t1, t2, t3, t4] = sech_tails(k, MOMENT_CUTOFF);
    let tails = [
        amp * t1,
        amp * amp * t2,
        4.0 * amp * amp * k * k * (t2 - t3),
        4.0 * amp.powi(3) * k * k * (t3 - t4),
        amp.powi(3) * t3,
    ];

    let mut panels = 2000;
    let mut coarse = simpson_moments(gamma, panels);
    loop {
        panels *= 2;
        let fine = simpson_moments(gamma, panels);
        let diff = coarse
            .iter()
            .zip(&fine)
            .map(|(c, f)| (f - c).abs())
            .fold(0.0, f64::max);
        let extrap: Vec<f64> = coarse
            .iter()
            .zip(&fine)
            .zip(&tails)
            .map(|((c, f), t)| f + (f - c) / 15.0 + t)
            .collect();
        if diff < MOMENT_TOL {
            return Ok(MomentTable {
                i1: extrap[0],
                i2: extrap[1],
                j0: 2.0 * extrap[1],
                j1: 2.0 * extrap[2],
                j2: 2.0 * extrap[3],
                j3: 2.0 * extrap[4],
            });
        }
        if panels > 1 << 20 {
            return Err(Error::QuadratureNotConverged {
                estimate: extrap[0],
                error: diff,
            });
        }
        coarse = fine;
    }
}

/// Inner data of a spike of level `V0` under parameters `p`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeProfile {
    pub v0: f64,
    pub gamma: f64,
    pub u0p: f64,
    pub flux_coeff: f64,
    pub moments: MomentTable,
}

impl SpikeProfile {
    pub fn new(v0: f64, p: &ModelParams) -> Result<Self> {
        let gamma = gamma_of(p.a(), p.c(), p.delta1(), v0)?;
        let mut profile = SpikeProfile {
            v0,
            gamma,
            u0p: u0p_of(v0, gamma, p),
            flux_coeff: 0.0,
            moments: moments(gamma)?,
        };
        profile.flux_coeff = far_field_flux(&profile, p);
        Ok(profile)
    }
}

/// Outer boundary value `u(0+) = V0 gamma / (c sqrt(delta1))`.
pub fn u0p_of(v0: f64, gamma: f64, p: &ModelParams) -> f64 {
    v0 * gamma / (p.c() * p.sqrt_delta1())
}

/// `|v_x(0+)| = 3 V0^2 sqrt(1-2g) / (sqrt(delta1) Dv c^2)`.
pub fn far_field_flux(profile: &SpikeProfile, p: &ModelParams) -> f64 {
    3.0 * profile.v0 * profile.v0 * (1.0 - 2.0 * profile.gamma).sqrt()
        / (p.sqrt_delta1() * p.dv() * p.c() * p.c())
}

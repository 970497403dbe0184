//! Large eigenvalues: the local operators `L_0` and `L_lambda` on a
//! truncated line, the resolvent integrals `f` and `g`, the nonlocal
//! multiplier `A(lambda; theta)` and the amplitude-Hopf thresholds.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::{condition_lower_bound, sym_tridiag_eigenvector, sym_tridiag_top_eigenvalues, Tridiag};
use crate::model::ModelParams;
use crate::newton::damped_newton2;
use crate::profile::{wc_eval, wc_prime};
use crate::quad::simpson;

/// Condition estimate beyond which a resolvent solve is rejected.
pub const CONDITION_LIMIT: f64 = 1e12;
/// Root tolerance for the Hopf systems.
pub const HOPF_TOL: f64 = 1e-11;

/// Truncation of `d^2/dy^2 - 1 + kappa w_c` to `[-Ly, Ly]` with Dirichlet
/// ends and second-order differences.
///
/// Resolvent integrals are computed on the grid and on its halving and
/// Richardson-extrapolated, which leaves an `O(h^4)` error.
#[derive(Debug, Clone)]
pub struct LineOperator {
    coarse: Level,
    fine: Level,
    ly: f64,
}

#[derive(Debug, Clone)]
struct Level {
    h: f64,
    y: Vec<f64>,
    w: Vec<f64>,
}

impl Level {
    fn new(n: usize, ly: f64) -> Self {
        let h = 2.0 * ly / (n - 1) as f64;
        let y: Vec<f64> = (0..n).map(|i| -ly + i as f64 * h).collect();
        let w = y.iter().map(|&y| wc_eval(y, 0.0)).collect();
        Level { h, y, w }
    }

    fn n(&self) -> usize {
        self.y.len()
    }

    /// `int w (L - lambda)^{-1} w^2` with potential weight `kappa`.
    fn resolvent_integral(&self, lambda: Complex64, kappa: Complex64) -> Result<Complex64> {
        let n = self.n();
        let m = n - 2;
        let inv_h2 = 1.0 / (self.h * self.h);
        let off = vec![Complex64::new(inv_h2, 0.0); m];
        let diag: Vec<Complex64> = self.w[1..n - 1]
            .iter()
            .map(|&w| Complex64::new(-2.0 * inv_h2 - 1.0, 0.0) + kappa * w - lambda)
            .collect();
        let rhs: Vec<Complex64> = self.w[1..n - 1]
            .iter()
            .map(|&w| Complex64::new(w * w, 0.0))
            .collect();
        let lu = Tridiag::factor(&off, &diag, &off).map_err(|_| Error::NearSingularResolvent {
            lambda,
            condition: f64::INFINITY,
            distance: 0.0,
        })?;
        let phi = lu.solve(&rhs)?;
        let cond = condition_lower_bound(lu.norm_inf(), &phi, &rhs);
        if !(cond < CONDITION_LIMIT) {
            let nb = rhs.iter().map(|z| z.norm()).fold(0.0, f64::max);
            let nx = phi.iter().map(|z| z.norm()).fold(0.0, f64::max);
            return Err(Error::NearSingularResolvent {
                lambda,
                condition: cond,
                distance: nb / nx,
            });
        }
        let mut integrand = vec![Complex64::new(0.0, 0.0); n];
        for i in 1..n - 1 {
            integrand[i] = phi[i - 1] * self.w[i];
        }
        Ok(simpson(&integrand, self.h))
    }

    fn tridiag(&self, kappa: f64) -> (Vec<f64>, Vec<f64>) {
        let n = self.n();
        let inv_h2 = 1.0 / (self.h * self.h);
        let d = self.w[1..n - 1]
            .iter()
            .map(|&w| -2.0 * inv_h2 - 1.0 + kappa * w)
            .collect();
        (d, vec![inv_h2; n - 3])
    }
}

impl Default for LineOperator {
    fn default() -> Self {
        LineOperator::new(4001, 20.0).expect("default operator is valid")
    }
}

impl LineOperator {
    /// `n` nodes on `[-Ly, Ly]`; `n` must be odd so the grid halves cleanly.
    pub fn new(n: usize, ly: f64) -> Result<Self> {
        if n < 11 || n % 2 == 0 {
            return Err(Error::InvalidParameter {
                name: "n",
                reason: format!("need an odd node count >= 11, got {n}"),
            });
        }
        if !(ly >= 20.0 && ly.is_finite()) {
            return Err(Error::InvalidParameter {
                name: "Ly",
                reason: format!("truncation must be >= 20, got {ly}"),
            });
        }
        Ok(LineOperator {
            coarse: Level::new(n, ly),
            fine: Level::new(2 * n - 1, ly),
            ly,
        })
    }

    /// Same spacing as the default operator on `[-Ly, Ly]`.
    pub fn with_truncation(ly: f64) -> Result<Self> {
        let n = (200.0 * ly).round() as usize + 1;
        Self::new(n | 1, ly)
    }

    pub fn n(&self) -> usize {
        self.coarse.n()
    }

    pub fn ly(&self) -> f64 {
        self.ly
    }

    pub fn h(&self) -> f64 {
        self.coarse.h
    }

    pub fn y(&self) -> &[f64] {
        &self.coarse.y
    }

    fn extrapolated(&self, lambda: Complex64, kappa: Complex64) -> Result<Complex64> {
        let c = self.coarse.resolvent_integral(lambda, kappa)?;
        let f = self.fine.resolvent_integral(lambda, kappa)?;
        Ok(f + (f - c) / 3.0)
    }

    /// `f(lambda) = int w (L_0 - lambda)^{-1} w^2`.
    pub fn f_lambda(&self, lambda: Complex64) -> Result<Complex64> {
        self.extrapolated(lambda, Complex64::new(2.0, 0.0))
    }

    /// `g(lambda; c, tau) = int w (L_lambda - lambda)^{-1} w^2`.
    pub fn g_lambda(&self, lambda: Complex64, c: f64, tau: f64) -> Result<Complex64> {
        self.extrapolated(lambda, l_lambda_weight(lambda, c, tau))
    }

    /// The `k` largest eigenvalues of the discretised `d^2 - 1 + kappa w_c`.
    pub fn top_eigenvalues(&self, kappa: f64, k: usize) -> Vec<f64> {
        let (d, e) = self.coarse.tridiag(kappa);
        sym_tridiag_top_eigenvalues(&d, &e, k, 1e-12)
    }

    /// Interior-node eigenvector for an eigenvalue from [`Self::top_eigenvalues`].
    pub fn eigenvector(&self, kappa: f64, lambda: f64) -> Result<Vec<f64>> {
        let (d, e) = self.coarse.tridiag(kappa);
        sym_tridiag_eigenvector(&d, &e, lambda)
    }

    /// `w_c'` sampled on the interior nodes (same layout as eigenvectors).
    pub fn wc_prime_interior(&self) -> Vec<f64> {
        let y = &self.coarse.y;
        y[1..y.len() - 1].iter().map(|&y| wc_prime(y, 0.0)).collect()
    }
}

/// Potential weight `2 + tau lambda / (c + tau lambda)` of `L_lambda`.
pub fn l_lambda_weight(lambda: Complex64, c: f64, tau: f64) -> Complex64 {
    let tl = lambda * tau;
    Complex64::new(2.0, 0.0) + tl / (tl + c)
}

/// `tanh` for complex arguments, stable for large `|Re z|`.
pub fn ctanh(z: Complex64) -> Complex64 {
    if z.re < 0.0 {
        return -ctanh(-z);
    }
    let e = (-2.0 * z).exp();
    (Complex64::new(1.0, 0.0) - e) / (Complex64::new(1.0, 0.0) + e)
}

/// General multiplier `c^2 sqrt(Dv) sqrt(b + theta lambda)
/// tanh(sqrt((b + theta lambda)/Dv) l) / V0` (principal roots).
pub fn a_multiplier(lambda: Complex64, theta: f64, p: &ModelParams, v0: f64) -> Complex64 {
    let q = (lambda * theta + p.b()).sqrt();
    let arg = q / p.dv().sqrt() * p.l();
    q * ctanh(arg) * (p.c() * p.c() * p.dv().sqrt() / v0)
}

/// Multiplier on the upper branch `V0 = V0+`:
/// `3 sqrt(1 + theta_hat lambda) tanh(kappa sqrt(..)) / tanh(kappa)`.
pub fn a_multiplier_upper(lambda: Complex64, theta: f64, p: &ModelParams) -> Complex64 {
    let s = (lambda * (theta / p.b()) + 1.0).sqrt();
    let k = p.kappa();
    s * ctanh(s * k) * (3.0 / k.tanh())
}

/// Large-eigenvalue verdict.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Stable,
    Unstable,
    Neutral,
    Hopf,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Verdict::Stable => "stable",
            Verdict::Unstable => "unstable",
            Verdict::Neutral => "neutral",
            Verdict::Hopf => "hopf",
        };
        f.write_str(s)
    }
}

/// Threshold comparison `A` against 6 for `theta = tau = 0`.
pub fn classify_branch(v0: f64, p: &ModelParams) -> Verdict {
    classify_multiplier(a_multiplier(Complex64::new(0.0, 0.0), 0.0, p, v0).re)
}

pub fn classify_multiplier(a: f64) -> Verdict {
    if (a - 6.0).abs() < 1e-8 {
        Verdict::Neutral
    } else if a > 6.0 {
        Verdict::Unstable
    } else {
        Verdict::Stable
    }
}

/// Outcome of an eigenvalue or threshold computation.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectrumResult {
    /// Critical eigenvalue(s); for Hopf thresholds `i omega`.
    pub lambda: Vec<Complex64>,
    pub threshold: Option<f64>,
    pub omega: Option<f64>,
    pub verdict: Verdict,
    /// `|f(i omega) - A|` (or `|g - 3|`) at the returned pair.
    pub residual: f64,
}

impl SpectrumResult {
    fn hopf(omega: f64, threshold: f64, residual: f64) -> Self {
        SpectrumResult {
            lambda: vec![Complex64::new(0.0, omega)],
            threshold: Some(threshold),
            omega: Some(omega),
            verdict: Verdict::Hopf,
            residual,
        }
    }
}

fn hopf_solve(
    starts: &[(f64, f64)],
    eval: impl Fn(f64, f64) -> Result<Complex64>,
) -> Result<(f64, f64, f64)> {
    let residual = |z: [f64; 2]| -> Result<[f64; 2]> {
        if !(z[0] > 0.0 && z[1] > 0.0) {
            return Err(Error::OutOfRange {
                what: "hopf iterate",
                value: z[0].min(z[1]),
            });
        }
        let r = eval(z[0], z[1])?;
        Ok([r.re, r.im])
    };
    let mut last_err = None;
    for &(omega, par) in starts {
        match damped_newton2([omega, par], &residual, HOPF_TOL) {
            Ok((z, r)) => return Ok((z[0], z[1], r[0].hypot(r[1]))),
            Err(e) => last_err = Some(e),
        }
    }
    Err(last_err.expect("non-empty start list"))
}

fn omega_grid(par_starts: &[f64]) -> Vec<(f64, f64)> {
    let mut v = Vec::new();
    for &par in par_starts {
        for k in 0..8 {
            v.push((0.2 + 2.8 * k as f64 / 7.0, par));
        }
    }
    v
}

/// Amplitude-Hopf threshold in `theta` on the upper branch (`tau = 0`).
pub fn hopf_theta(p: &ModelParams, op: &LineOperator) -> Result<SpectrumResult> {
    hopf_theta_from(p, op, None)
}

fn hopf_theta_from(
    p: &ModelParams,
    op: &LineOperator,
    guess: Option<(f64, f64)>,
) -> Result<SpectrumResult> {
    let mut starts: Vec<(f64, f64)> = guess.into_iter().collect();
    starts.push((0.9, 2.0 * p.b()));
    starts.extend(omega_grid(&[1.0 * p.b(), 3.0 * p.b(), 6.0 * p.b()]));
    let (omega, theta, res) = hopf_solve(&starts, |omega, theta| {
        let lam = Complex64::new(0.0, omega);
        Ok(op.f_lambda(lam)? - a_multiplier_upper(lam, theta, p))
    })?;
    Ok(SpectrumResult::hopf(omega, theta, res))
}

/// `theta_h` along a sweep of `Dv`, each solve seeded by the previous one.
pub fn hopf_theta_curve(
    p: &ModelParams,
    dvs: &[f64],
    op: &LineOperator,
) -> Result<Vec<(f64, SpectrumResult)>> {
    let mut out = Vec::with_capacity(dvs.len());
    let mut guess = None;
    for &dv in dvs {
        let q = p.with_dv(dv)?;
        let r = hopf_theta_from(&q, op, guess)?;
        guess = Some((r.omega.unwrap_or(0.9), r.threshold.unwrap_or(2.0)));
        out.push((dv, r));
    }
    Ok(out)
}

/// Amplitude-Hopf threshold `tau_lh` of `g(lambda; c, tau) = 3` (`theta = 0`).
pub fn hopf_tau_large(c: f64, op: &LineOperator) -> Result<SpectrumResult> {
    if !(c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "c",
            reason: format!("must be positive, got {c}"),
        });
    }
    let mut starts = vec![(0.5, 6.0 * c)];
    starts.extend(omega_grid(&[3.0 * c, 10.0 * c]));
    let (omega, tau, res) = hopf_solve(&starts, |omega, tau| {
        Ok(op.g_lambda(Complex64::new(0.0, omega), c, tau)? - 3.0)
    })?;
    Ok(SpectrumResult::hopf(omega, tau, res))
}

/// Positive root of `4 + 3 tau l/(c + tau l) - 2l - sqrt(1 + l) = 0`, the
/// location of the pole of `g`.
pub fn lambda0_root(tau: f64, c: f64) -> Result<f64> {
    if !(tau >= 0.0 && c > 0.0) {
        return Err(Error::InvalidParameter {
            name: "tau",
            reason: format!("need tau >= 0 and c > 0, got tau={tau}, c={c}"),
        });
    }
    let h = |l: f64| 4.0 + 3.0 * tau * l / (c + tau * l) - 2.0 * l - (1.0 + l).sqrt();
    let (mut lo, mut hi) = (0.0f64, 4.0f64);
    if h(lo) * h(hi) > 0.0 {
        return Err(Error::NoRootInBracket { lo, hi });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let hm = h(mid);
        if hm == 0.0 {
            return Ok(mid);
        }
        if hm > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn z(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn f_at_zero_is_six() {
        let op = LineOperator::default();
        let f0 = op.f_lambda(z(0.0, 0.0)).unwrap();
        assert!((f0.re - 6.0).abs() < 1e-6, "{f0}");
        assert!(f0.im.abs() < 1e-12);
    }

    #[test]
    fn f_sign_structure() {
        let op = LineOperator::default();
        let f2 = op.f_lambda(z(2.0, 0.0)).unwrap();
        assert!(f2.re < 0.0);
        let f50 = op.f_lambda(z(50.0, 0.0)).unwrap();
        assert!(f50.norm() < 0.5);
        let below = op.f_lambda(z(1.25 - 1e-3, 0.0)).unwrap().re;
        let above = op.f_lambda(z(1.25 + 1e-3, 0.0)).unwrap().re;
        assert!((1.0 / below) > 0.0 && (1.0 / above) < 0.0);
    }

    #[test]
    fn g_reduces_to_f_at_tau_zero() {
        let op = LineOperator::new(1001, 20.0).unwrap();
        for lam in [z(0.3, 0.0), z(0.1, 0.8), z(2.0, -1.0)] {
            let f = op.f_lambda(lam).unwrap();
            let g = op.g_lambda(lam, 1.3, 0.0).unwrap();
            assert!((f - g).norm() < 1e-10);
        }
        for tau in [0.5, 4.0] {
            let g0 = op.g_lambda(z(0.0, 0.0), 0.7, tau).unwrap();
            assert!((g0 - op.f_lambda(z(0.0, 0.0)).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn upper_multiplier_limits() {
        let p = ModelParams::builder().a(0.01).l(1.0).build().unwrap();
        let a0 = a_multiplier_upper(z(0.0, 0.0), 1.0, &p);
        assert!((a0 - 3.0).norm() < 1e-14);
        let far = ModelParams::builder().l(200.0).build().unwrap();
        let lam = z(0.2, 0.7);
        let a = a_multiplier_upper(lam, 2.0, &far);
        let want = (lam * 2.0 + 1.0).sqrt() * 3.0;
        assert!((a - want).norm() < 1e-12);
    }

    #[test]
    fn general_multiplier_on_both_branches() {
        let p = ModelParams::builder().a(0.01).l(1.0).build().unwrap();
        let r = crate::outer::smalla_roots(&p).unwrap();
        let a_plus = a_multiplier(z(0.0, 0.0), 0.0, &p, r.v0_plus_asym);
        assert!((a_plus.re - 3.0).abs() < 1e-12);
        assert_eq!(classify_branch(r.v0_plus_asym, &p), Verdict::Stable);
        assert_eq!(classify_branch(r.v0_minus_asym, &p), Verdict::Unstable);
        // A(V0-) without the tanh: c^2 b sqrt(b Dv)/(a^2 sqrt(delta1)) * tanh
        let a_minus = a_multiplier(z(0.0, 0.0), 0.0, &p, r.v0_minus_asym).re;
        let want = p.c().powi(2) * p.b() * (p.b() * p.dv()).sqrt() * p.kappa().tanh()
            / (p.a() * p.a() * p.sqrt_delta1());
        assert!((a_minus - want).abs() < 1e-9 * want);
        let v_neutral = a_plus.re * r.v0_plus_asym / 6.0;
        assert_eq!(classify_branch(v_neutral, &p), Verdict::Neutral);
    }

    #[test]
    fn l0_spectrum_top_pair() {
        let op = LineOperator::default();
        let top = op.top_eigenvalues(2.0, 2);
        assert!((top[0] - 1.25).abs() < 1e-3, "{top:?}");
        assert!(top[1].abs() < 1e-3, "{top:?}");
        let v = op.eigenvector(2.0, top[1]).unwrap();
        let wp = op.wc_prime_interior();
        let dot: f64 = v.iter().zip(&wp).map(|(a, b)| a * b).sum();
        let nw = wp.iter().map(|x| x * x).sum::<f64>().sqrt();
        assert!(dot.abs() / nw > 0.999);
    }

    #[test]
    fn lambda0_values() {
        assert!((lambda0_root(0.0, 1.0).unwrap() - 1.25).abs() < 1e-10);
        let inf = lambda0_root(1e6, 1.0).unwrap();
        assert!((inf - (29.0 - 73f64.sqrt()) / 8.0).abs() < 1e-5);
        let mut prev = 0.0;
        for k in 0..=20 {
            let l = lambda0_root(5.0 * k as f64, 1.0).unwrap();
            assert!(l > prev || k == 0);
            assert!(l < (29.0 - 73f64.sqrt()) / 8.0);
            prev = l;
        }
    }

    #[test]
    fn lambda0_is_fixed_point_of_l_lambda() {
        let op = LineOperator::default();
        for (tau, c) in [(0.0, 1.0), (2.0, 0.5), (1e6, 1.0)] {
            let l0 = lambda0_root(tau, c).unwrap();
            let kappa = l_lambda_weight(z(l0, 0.0), c, tau).re;
            let top = op.top_eigenvalues(kappa, 1)[0];
            assert!((top - l0).abs() < 1e-3, "tau={tau}: {top} vs {l0}");
        }
    }

    #[test]
    fn resolvent_is_analytic() {
        let op = LineOperator::new(2001, 20.0).unwrap();
        let pts = [
            z(0.3, 0.4),
            z(-0.5, 1.0),
            z(2.0, 0.5),
            z(0.8, -0.9),
            z(3.0, 2.0),
            z(0.1, 0.1),
            z(-1.5, -0.3),
            z(1.0, 0.6),
            z(0.5, 2.5),
            z(4.0, -1.0),
        ];
        // f_x = -i f_y for analytic f
        let mismatch = |eval: &dyn Fn(Complex64) -> Complex64, lam: Complex64| {
            let h = 1e-5;
            let dx = (eval(lam + h) - eval(lam - h)) / (2.0 * h);
            let dy = (eval(lam + z(0.0, h)) - eval(lam - z(0.0, h))) / (2.0 * h);
            (dx + z(0.0, 1.0) * dy).norm()
        };
        for lam in pts {
            let f = mismatch(&|l| op.f_lambda(l).unwrap(), lam);
            let g = mismatch(&|l| op.g_lambda(l, 1.0, 2.0).unwrap(), lam);
            assert!(f < 1e-5 && g < 1e-5, "lambda={lam}: {f} {g}");
        }
    }

    #[test]
    fn hopf_theta_unit_interval() {
        let p = ModelParams::builder()
            .a(0.01)
            .b(1.0)
            .c(1.0)
            .l(1.0)
            .dv(1.0)
            .build()
            .unwrap();
        let op = LineOperator::default();
        let r = hopf_theta(&p, &op).unwrap();
        let th = r.threshold.unwrap();
        assert!((th - 1.34).abs() < 0.05 * 1.34, "{th}");
        assert!(r.residual < 1e-8);
    }

    #[test]
    fn hopf_tau_large_scales_with_c() {
        let op = LineOperator::new(2001, 20.0).unwrap();
        let t1 = hopf_tau_large(1.0, &op).unwrap().threshold.unwrap();
        let t2 = hopf_tau_large(2.0, &op).unwrap().threshold.unwrap();
        assert!((t2 / t1 - 2.0).abs() < 1e-6);
    }
}

//! Steady states of the discretised system and pseudo-arclength
//! continuation in `D_v` with fold detection.
//!
//! Unknowns are interleaved per node, `z = [u_0, v_0, w_0, u_1, ...]`, so
//! the Jacobian is banded with three sub- and super-diagonals.

use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::linalg::{BandLu, BandMatrix};
use crate::model::{DomainMode, FieldTriple, Grid1D, ModelParams};
use crate::sim::{auto_grid, blended_spike, SpikeLevel};

/// Scaled residual bound for an accepted steady state.
pub const STEADY_TOL: f64 = 1e-10;

/// The discretised steady problem `F(z; D_v) = 0` on a fixed grid.
#[derive(Debug, Clone)]
pub struct SteadyProblem {
    params: ModelParams,
    grid: Grid1D,
}

fn pack(f: &FieldTriple) -> Vec<f64> {
    let mut z = Vec::with_capacity(3 * f.len());
    for i in 0..f.len() {
        z.extend_from_slice(&[f.u[i], f.v[i], f.w[i]]);
    }
    z
}

fn unpack(z: &[f64]) -> FieldTriple {
    let n = z.len() / 3;
    let pick = |s: usize| (0..n).map(|i| z[3 * i + s]).collect();
    FieldTriple {
        u: pick(0),
        v: pick(1),
        w: pick(2),
    }
}

/// Ghost-node Laplacian stencil at node `i`: `(neighbour, weight)` pairs
/// without the `1/h^2` factor; the centre weight is always `-2`.
fn stencil(i: usize, n: usize) -> [(usize, f64); 2] {
    if i == 0 {
        [(1, 2.0), (1, 0.0)]
    } else if i == n - 1 {
        [(n - 2, 2.0), (n - 2, 0.0)]
    } else {
        [(i - 1, 1.0), (i + 1, 1.0)]
    }
}

impl SteadyProblem {
    pub fn new(params: ModelParams, grid: Grid1D) -> Result<Self> {
        if (grid.l() - params.l()).abs() > 1e-12 * params.l() {
            return Err(Error::InvalidParameter {
                name: "l",
                reason: format!("grid length {} differs from l = {}", grid.l(), params.l()),
            });
        }
        Ok(SteadyProblem { params, grid })
    }

    pub fn grid(&self) -> &Grid1D {
        &self.grid
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn diffusivities(&self, dv: f64) -> [f64; 3] {
        [self.params.delta1(), dv, self.params.delta2()]
    }

    pub fn residual(&self, z: &[f64], dv: f64) -> Result<Vec<f64>> {
        let n = self.grid.n();
        if z.len() != 3 * n {
            return Err(Error::LengthMismatch {
                expected: 3 * n,
                got: z.len(),
            });
        }
        let p = &self.params;
        let inv = 1.0 / (self.grid.h() * self.grid.h());
        let d = self.diffusivities(dv);
        let mut r = vec![0.0; 3 * n];
        for i in 0..n {
            let (u, v, w) = (z[3 * i], z[3 * i + 1], z[3 * i + 2]);
            let vw = v * w;
            if vw.abs() < crate::model::DENOMINATOR_TOL {
                return Err(Error::DegenerateDenominator {
                    index: i,
                    value: vw.abs(),
                });
            }
            let kin = [p.a() - u + u * u * u / vw, u * u - p.b() * v, u - p.c() * w];
            for s in 0..3 {
                let nb: f64 = stencil(i, n).iter().map(|&(j, c)| c * z[3 * j + s]).sum();
                r[3 * i + s] = d[s] * (nb - 2.0 * z[3 * i + s]) * inv + kin[s];
            }
        }
        Ok(r)
    }

    /// `dF/dD_v`: the discrete Laplacian of `v` in the `v` rows.
    pub fn d_dv(&self, z: &[f64]) -> Vec<f64> {
        let n = self.grid.n();
        let inv = 1.0 / (self.grid.h() * self.grid.h());
        let mut r = vec![0.0; 3 * n];
        for i in 0..n {
            let nb: f64 = stencil(i, n).iter().map(|&(j, c)| c * z[3 * j + 1]).sum();
            r[3 * i + 1] = (nb - 2.0 * z[3 * i + 1]) * inv;
        }
        r
    }

    pub fn jacobian(&self, z: &[f64], dv: f64) -> BandMatrix {
        let n = self.grid.n();
        let p = &self.params;
        let inv = 1.0 / (self.grid.h() * self.grid.h());
        let d = self.diffusivities(dv);
        let mut jac = BandMatrix::zeros(3 * n, 3, 3);
        for i in 0..n {
            let (u, v, w) = (z[3 * i], z[3 * i + 1], z[3 * i + 2]);
            let (ui, vi, wi) = (3 * i, 3 * i + 1, 3 * i + 2);
            for s in 0..3 {
                let row = 3 * i + s;
                jac.add(row, row, -2.0 * d[s] * inv);
                for (j, c) in stencil(i, n) {
                    if c != 0.0 {
                        jac.add(row, 3 * j + s, c * d[s] * inv);
                    }
                }
            }
            let q = u * u / (v * w);
            jac.add(ui, ui, -1.0 + 3.0 * q);
            jac.add(ui, vi, -q * u / v);
            jac.add(ui, wi, -q * u / w);
            jac.add(vi, ui, 2.0 * u);
            jac.add(vi, vi, -p.b());
            jac.add(wi, ui, 1.0);
            jac.add(wi, wi, -p.c());
        }
        jac
    }

    /// Row scales `2 D/h^2 + decay`; the steady residual is measured as
    /// `max |F_i| / scale_i`.
    fn scales(&self, dv: f64) -> Vec<f64> {
        let inv = 1.0 / (self.grid.h() * self.grid.h());
        let d = self.diffusivities(dv);
        let decay = [1.0, self.params.b(), self.params.c()];
        (0..3 * self.grid.n())
            .map(|k| 2.0 * d[k % 3] * inv + decay[k % 3])
            .collect()
    }

    pub fn residual_norm(&self, z: &[f64], dv: f64) -> Result<f64> {
        let r = self.residual(z, dv)?;
        Ok(scaled_norm(&r, &self.scales(dv)))
    }
}

fn scaled_norm(r: &[f64], scales: &[f64]) -> f64 {
    r.iter()
        .zip(scales)
        .map(|(r, s)| (r / s).abs())
        .fold(0.0, f64::max)
}

fn admissible(z: &[f64]) -> bool {
    z.chunks(3)
        .all(|c| c.iter().all(|x| x.is_finite()) && c[1] > 0.0 && c[2] > 0.0)
}

/// Converged steady state with its iteration history.
#[derive(Debug, Clone, PartialEq)]
pub struct SteadySolution {
    pub state: FieldTriple,
    pub residual: f64,
    pub iterations: usize,
    pub history: Vec<f64>,
}

/// Damped Newton on `F(z; D_v) = 0` from `initial`.
pub fn steady_newton(
    prob: &SteadyProblem,
    initial: &FieldTriple,
    dv: f64,
    max_iter: usize,
) -> Result<SteadySolution> {
    let mut z = pack(initial);
    let scales = prob.scales(dv);
    let mut r = prob.residual(&z, dv)?;
    let mut norm = scaled_norm(&r, &scales);
    let mut history = vec![norm];
    let mut polished = false;
    for it in 0..max_iter {
        if norm == 0.0 || polished {
            return Ok(SteadySolution {
                state: unpack(&z),
                residual: norm,
                iterations: it,
                history,
            });
        }
        // one extra step below tolerance: the state error is the residual
        // times the Jacobian condition
        polished = norm < STEADY_TOL;
        let lu = prob.jacobian(&z, dv).factor()?;
        let dz = lu.solve(&r)?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..30 {
            let trial: Vec<f64> = z.iter().zip(&dz).map(|(a, b)| a - lambda * b).collect();
            if admissible(&trial) {
                if let Ok(rt) = prob.residual(&trial, dv) {
                    let nt = scaled_norm(&rt, &scales);
                    if nt < (1.0 - 1e-4 * lambda) * norm {
                        z = trial;
                        r = rt;
                        norm = nt;
                        accepted = true;
                        break;
                    }
                }
            }
            lambda *= 0.5;
        }
        if accepted {
            history.push(norm);
        } else if !polished {
            break;
        }
    }
    if norm < STEADY_TOL {
        return Ok(SteadySolution {
            state: unpack(&z),
            residual: norm,
            iterations: history.len() - 1,
            history,
        });
    }
    Err(Error::NewtonDiverged {
        iterations: history.len() - 1,
        residual: norm,
        trace: history,
    })
}

/// Smallest-magnitude eigenvalue estimate of `J phi = lambda M phi`,
/// `M = diag(1, theta, tau)`, by inverse iteration. Negative means the
/// slowest mode decays.
pub fn stability_hint(prob: &SteadyProblem, state: &FieldTriple, dv: f64) -> Result<f64> {
    let z = pack(state);
    let lu = prob.jacobian(&z, dv).factor()?;
    let m = [1.0, prob.params.theta(), prob.params.tau()];
    Ok(inverse_iteration(&lu, &m, z.len()))
}

fn inverse_iteration(lu: &BandLu, m: &[f64; 3], len: usize) -> f64 {
    let mut x: Vec<f64> = (0..len).map(|k| 1.0 + 0.1 * ((k / 3) % 7) as f64).collect();
    let mut lambda = 0.0;
    for _ in 0..60 {
        let mx: Vec<f64> = x.iter().enumerate().map(|(k, v)| m[k % 3] * v).collect();
        let y = match lu.solve(&mx) {
            Ok(y) => y,
            Err(_) => return 0.0,
        };
        let xx: f64 = x.iter().map(|v| v * v).sum();
        let xy: f64 = x.iter().zip(&y).map(|(a, b)| a * b).sum();
        if xy == 0.0 {
            return f64::INFINITY;
        }
        let next = xx / xy;
        let norm = y.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0 && norm.is_finite()) {
            return next;
        }
        x = y.into_iter().map(|v| v / norm).collect();
        if (next - lambda).abs() <= 1e-10 * next.abs() {
            return next;
        }
        lambda = next;
    }
    lambda
}

/// Knobs of [`continue_branch`].
#[derive(Debug, Clone, PartialEq)]
pub struct ContinuationConfig {
    pub ds: f64,
    pub ds_min: f64,
    pub ds_max: f64,
    pub max_points: usize,
    pub max_newton: usize,
    /// Arclength resolution of fold refinement.
    pub fold_tol: f64,
    pub mode: DomainMode,
    /// Node count; `None` resolves the core with ten nodes per `sqrt(delta1)`.
    pub n: Option<usize>,
    pub level: SpikeLevel,
}

impl Default for ContinuationConfig {
    fn default() -> Self {
        ContinuationConfig {
            ds: 0.02,
            ds_min: 1e-4,
            ds_max: 0.1,
            max_points: 400,
            max_newton: 30,
            fold_tol: 1e-6,
            mode: DomainMode::Half,
            n: None,
            level: SpikeLevel::Coupled,
        }
    }
}

/// One accepted point on a branch.
#[derive(Debug, Clone, PartialEq)]
pub struct BranchPoint {
    pub dv: f64,
    /// `u(l)`.
    pub mu: f64,
    /// `v(0) sqrt(delta1)`.
    pub v0: f64,
    pub state: FieldTriple,
    pub arclength: f64,
    pub fold: bool,
    pub stability_hint: f64,
    /// `D_v` component of the unit tangent.
    pub tangent_dv: f64,
    pub residual: f64,
}

/// A traced branch; `failure` records why tracing stopped early.
#[derive(Debug, Clone, PartialEq)]
pub struct Branch {
    pub points: Vec<BranchPoint>,
    pub failure: Option<Error>,
}

impl Branch {
    pub fn folds(&self) -> impl Iterator<Item = &BranchPoint> {
        self.points.iter().filter(|p| p.fold)
    }

    /// CSV `arclength,Dv,mu,v0,fold`.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("arclength,Dv,mu,v0,fold\n");
        for p in &self.points {
            let _ = writeln!(
                out,
                "{},{},{},{},{}",
                p.arclength,
                p.dv,
                p.mu,
                p.v0,
                u8::from(p.fold)
            );
        }
        out
    }
}

/// Continuation state: unknowns, `D_v`, unit tangent.
#[derive(Debug, Clone)]
struct Point {
    z: Vec<f64>,
    dv: f64,
    tz: Vec<f64>,
    td: f64,
    residual: f64,
}

struct Tracer<'a> {
    prob: &'a SteadyProblem,
    omega: f64,
    max_newton: usize,
}

impl Tracer<'_> {
    fn ip(&self, az: &[f64], ad: f64, bz: &[f64], bd: f64) -> f64 {
        self.omega * az.iter().zip(bz).map(|(a, b)| a * b).sum::<f64>() + ad * bd
    }

    fn with_params(&self, dv: f64) -> Result<SteadyProblem> {
        SteadyProblem::new(self.prob.params.with_dv(dv)?, self.prob.grid.clone())
    }

    /// Unit tangent at `(z, dv)` oriented along `(rz, rd)`.
    fn tangent(&self, z: &[f64], dv: f64, rz: &[f64], rd: f64) -> Result<(Vec<f64>, f64)> {
        let lu = self.prob.jacobian(z, dv).factor()?;
        let b = lu.solve(&self.prob.d_dv(z))?;
        let mut tz: Vec<f64> = b.iter().map(|x| -x).collect();
        let mut td = 1.0;
        let norm = self.ip(&tz, td, &tz, td).sqrt();
        let sign = if self.ip(&tz, td, rz, rd) < 0.0 { -1.0 } else { 1.0 };
        tz.iter_mut().for_each(|x| *x *= sign / norm);
        td *= sign / norm;
        Ok((tz, td))
    }

    /// Newton on the bordered system from `x + sigma t`.
    fn correct(&self, from: &Point, sigma: f64) -> Result<(Point, usize)> {
        let mut z: Vec<f64> = from
            .z
            .iter()
            .zip(&from.tz)
            .map(|(z, t)| z + sigma * t)
            .collect();
        let mut dv = from.dv + sigma * from.td;
        let (zp, dp) = (z.clone(), dv);
        for it in 0..self.max_newton {
            if !(dv > 0.0) || !admissible(&z) {
                break;
            }
            let prob = self.with_params(dv)?;
            let f = prob.residual(&z, dv)?;
            let dz: Vec<f64> = z.iter().zip(&zp).map(|(a, b)| a - b).collect();
            let ncon = self.ip(&from.tz, from.td, &dz, dv - dp);
            let norm = scaled_norm(&f, &prob.scales(dv));
            if norm < STEADY_TOL && ncon.abs() < 1e-12 {
                let (tz, td) = self.tangent(&z, dv, &from.tz, from.td)?;
                return Ok((
                    Point {
                        z,
                        dv,
                        tz,
                        td,
                        residual: norm,
                    },
                    it,
                ));
            }
            let lu = prob.jacobian(&z, dv).factor()?;
            let a = lu.solve(&f)?;
            let b = lu.solve(&prob.d_dv(&z))?;
            let den = from.td - self.ip(&from.tz, 0.0, &b, 0.0);
            let dd = (-ncon + self.ip(&from.tz, 0.0, &a, 0.0)) / den;
            if !dd.is_finite() {
                break;
            }
            for k in 0..z.len() {
                z[k] -= a[k] + b[k] * dd;
            }
            dv += dd;
        }
        Err(Error::StepFailure {
            dv: from.dv,
            retries: 0,
        })
    }

    fn branch_point(&self, x: &Point, arclength: f64, fold: bool) -> Result<BranchPoint> {
        let prob = self.with_params(x.dv)?;
        let state = unpack(&x.z);
        let grid = &prob.grid;
        Ok(BranchPoint {
            dv: x.dv,
            mu: state.u[grid.n() - 1],
            v0: state.v[grid.center_index()] * prob.params.sqrt_delta1(),
            stability_hint: stability_hint(&prob, &state, x.dv)?,
            state,
            arclength,
            fold,
            tangent_dv: x.td,
            residual: x.residual,
        })
    }
}

/// Grid used by [`continue_branch`] for the given config.
pub fn branch_grid(p: &ModelParams, cfg: &ContinuationConfig) -> Result<Grid1D> {
    match cfg.n {
        Some(n) => Grid1D::new(p.l(), n, cfg.mode),
        None => auto_grid(p, cfg.mode, 401),
    }
}

/// Trace the one-spike branch from `dv_start` towards `dv_target`.
///
/// Tracing stops when `D_v` leaves the interval spanned by the two, after
/// `max_points`, or when a step fails below `ds_min` (reported in
/// [`Branch::failure`]).
pub fn continue_branch(
    p: &ModelParams,
    dv_start: f64,
    dv_target: f64,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    let p0 = p.with_dv(dv_start)?;
    let grid = branch_grid(&p0, cfg)?;
    let guess = blended_spike(&grid, &p0, 0.0, cfg.level)?;
    let prob = SteadyProblem::new(p0, grid)?;
    let start = steady_newton(&prob, &guess, dv_start, cfg.max_newton)?;
    continue_from(&prob, &start.state, dv_start, dv_target, cfg)
}

/// As [`continue_branch`] from a converged state on `prob`'s grid.
pub fn continue_from(
    prob: &SteadyProblem,
    start: &FieldTriple,
    dv_start: f64,
    dv_target: f64,
    cfg: &ContinuationConfig,
) -> Result<Branch> {
    let z0 = pack(start);
    let tracer = Tracer {
        prob,
        omega: 1.0 / z0.len() as f64,
        max_newton: cfg.max_newton.min(15),
    };
    let lo = dv_start.min(dv_target);
    let hi = dv_start.max(dv_target);
    let dir = (dv_target - dv_start).signum();
    let zeros = vec![0.0; z0.len()];
    let (tz, td) = tracer.tangent(&z0, dv_start, &zeros, dir)?;
    let residual = prob.with_dv_residual(&z0, dv_start)?;
    let mut x = Point {
        z: z0,
        dv: dv_start,
        tz,
        td,
        residual,
    };
    let mut points = vec![tracer.branch_point(&x, 0.0, false)?];
    let mut s = 0.0;
    let mut ds = cfg.ds.clamp(cfg.ds_min, cfg.ds_max);
    let mut failure = None;
    let mut retries = 0;
    while points.len() < cfg.max_points {
        let (next, iters) = match tracer.correct(&x, ds) {
            Ok(r) => r,
            Err(_) => {
                retries += 1;
                ds *= 0.5;
                if ds < cfg.ds_min {
                    failure = Some(Error::StepFailure { dv: x.dv, retries });
                    break;
                }
                continue;
            }
        };
        retries = 0;
        if next.td * x.td < 0.0 {
            let (fold, sigma) = refine_fold(&tracer, &x, ds, cfg.fold_tol)?;
            points.push(tracer.branch_point(&fold, s + sigma, true)?);
        }
        s += ds;
        x = next;
        points.push(tracer.branch_point(&x, s, false)?);
        if x.dv < lo || x.dv > hi {
            break;
        }
        if iters <= 3 {
            ds = (1.5 * ds).min(cfg.ds_max);
        } else if iters >= 8 {
            ds = (0.7 * ds).max(cfg.ds_min);
        }
    }
    Ok(Branch { points, failure })
}

impl SteadyProblem {
    fn with_dv_residual(&self, z: &[f64], dv: f64) -> Result<f64> {
        SteadyProblem::new(self.params.with_dv(dv)?, self.grid.clone())?.residual_norm(z, dv)
    }
}

/// Bisection in arclength on the sign of the tangent's `D_v` component.
fn refine_fold(tracer: &Tracer, x: &Point, ds: f64, tol: f64) -> Result<(Point, f64)> {
    let (mut a, mut b) = (0.0, ds);
    let mut best: Option<(Point, f64)> = None;
    while b - a > tol {
        let m = 0.5 * (a + b);
        let (pm, _) = tracer.correct(x, m)?;
        if pm.td * x.td > 0.0 {
            a = m;
        } else {
            b = m;
        }
        best = Some((pm, m));
    }
    match best {
        Some(r) => Ok(r),
        None => Ok((tracer.correct(x, 0.5 * (a + b))?.0, 0.5 * (a + b))),
    }
}

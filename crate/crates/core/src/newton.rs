//! Small damped Newton iteration shared by the two-unknown root problems.

use crate::error::{Error, Result};

/// Residual bound for the coupled amplitude solve.
pub const NEWTON_TOL: f64 = 1e-10;
const MAX_NEWTON: usize = 60;
const MAX_BACKTRACK: usize = 30;

/// `2x2` damped Newton with forward-difference Jacobian.
///
/// `residual` returns an error when an iterate leaves the feasible set;
/// such trial steps are halved, up to 30 times.
pub(crate) fn damped_newton2(
    mut z: [f64; 2],
    residual: &impl Fn([f64; 2]) -> Result<[f64; 2]>,
    tol: f64,
) -> Result<([f64; 2], [f64; 2])> {
    let norm = |r: [f64; 2]| r[0].abs().max(r[1].abs());
    let mut r = residual(z)?;
    let mut trace = vec![norm(r)];
    for it in 0..MAX_NEWTON {
        if norm(r) < tol {
            return Ok((z, r));
        }
        let mut jac = [[0.0; 2]; 2];
        for j in 0..2 {
            let mut h = 1e-7 * z[j].abs().max(1e-3);
            let mut zp = z;
            zp[j] += h;
            let rp = match residual(zp) {
                Ok(v) => v,
                Err(_) => {
                    h = -h;
                    zp[j] = z[j] + h;
                    residual(zp)?
                }
            };
            for i in 0..2 {
                jac[i][j] = (rp[i] - r[i]) / h;
            }
        }
        let det = jac[0][0] * jac[1][1] - jac[0][1] * jac[1][0];
        if det == 0.0 || !det.is_finite() {
            return Err(Error::NewtonDiverged {
                iterations: it,
                residual: norm(r),
                trace,
            });
        }
        let dz = [
            -(jac[1][1] * r[0] - jac[0][1] * r[1]) / det,
            -(-jac[1][0] * r[0] + jac[0][0] * r[1]) / det,
        ];
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACK {
            let trial = [z[0] + step * dz[0], z[1] + step * dz[1]];
            if let Ok(rt) = residual(trial) {
                if norm(rt) < (1.0 - 1e-4 * step) * norm(r) || norm(rt) < tol {
                    accepted = Some((trial, rt));
                    break;
                }
            }
            step *= 0.5;
        }
        match accepted {
            Some((zt, rt)) => {
                z = zt;
                r = rt;
                trace.push(norm(r));
            }
            None => {
                return Err(Error::NewtonDiverged {
                    iterations: it,
                    residual: norm(r),
                    trace,
                })
            }
        }
    }
    if norm(r) < tol {
        return Ok((z, r));
    }
    Err(Error::NewtonDiverged {
        iterations: MAX_NEWTON,
        residual: norm(r),
        trace,
    })
}

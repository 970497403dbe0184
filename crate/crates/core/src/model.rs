//! Model parameters, the 1-D grid, nodal field storage and the reaction and
//! diffusion operators shared by the simulator and the continuation engine.
//!
//! The model is
//!
//! ```text
//!   u_t       = a - u + u^3/(w v) + delta1 u_xx
//!   theta v_t = u^2 - b v          + Dv     v_xx
//!   tau   w_t = u - c w            + delta2 w_xx
//! ```
//!
//! on `|x| <= l` with homogeneous Neumann conditions.

use crate::error::{Error, Result};

/// Default guard for `|v w|` in the cubic reaction term.
pub const DENOMINATOR_TOL: f64 = 1e-12;

/// Physical constants of the three-component model.
///
/// Construct with [`ModelParams::builder`]; every constructor validates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelParams {
    pub(crate) a: f64,
    pub(crate) b: f64,
    pub(crate) c: f64,
    pub(crate) delta1: f64,
    pub(crate) delta2: f64,
    pub(crate) dv: f64,
    pub(crate) theta: f64,
    pub(crate) tau: f64,
    pub(crate) l: f64,
}

#[derive(Debug, Clone, Copy)]
pub struct ParamsBuilder {
    a: f64,
    b: f64,
    c: f64,
    delta1: f64,
    delta2: Option<f64>,
    dv: f64,
    theta: f64,
    tau: f64,
    l: f64,
}

impl Default for ParamsBuilder {
    fn default() -> Self {
        ParamsBuilder {
            a: 0.5,
            b: 1.0,
            c: 1.0,
            delta1: 1e-4,
            delta2: None,
            dv: 1.0,
            theta: 0.0,
            tau: 0.0,
            l: 4.0,
        }
    }
}

impl ParamsBuilder {
    pub fn a(mut self, v: f64) -> Self {
        self.a = v;
        self
    }
    pub fn b(mut self, v: f64) -> Self {
        self.b = v;
        self
    }
    pub fn c(mut self, v: f64) -> Self {
        self.c = v;
        self
    }
    pub fn delta1(mut self, v: f64) -> Self {
        self.delta1 = v;
        self
    }
    /// Overrides the default `delta2 = delta1^2`.
    pub fn delta2(mut self, v: f64) -> Self {
        self.delta2 = Some(v);
        self
    }
    pub fn dv(mut self, v: f64) -> Self {
        self.dv = v;
        self
    }
    pub fn theta(mut self, v: f64) -> Self {
        self.theta = v;
        self
    }
    pub fn tau(mut self, v: f64) -> Self {
        self.tau = v;
        self
    }
    pub fn l(mut self, v: f64) -> Self {
        self.l = v;
        self
    }

    pub fn build(self) -> Result<ModelParams> {
        let p = ModelParams {
            a: self.a,
            b: self.b,
            c: self.c,
            delta1: self.delta1,
            delta2: self.delta2.unwrap_or(self.delta1 * self.delta1),
            dv: self.dv,
            theta: self.theta,
            tau: self.tau,
            l: self.l,
        };
        p.validate()?;
        Ok(p)
    }
}

fn check(name: &'static str, value: f64, strict: bool) -> Result<()> {
    let ok = value.is_finite() && if strict { value > 0.0 } else { value >= 0.0 };
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidParameter {
            name,
            reason: format!(
                "must be finite and {} 0, got {value}",
                if strict { ">" } else { ">=" }
            ),
        })
    }
}

impl ModelParams {
    pub fn builder() -> ParamsBuilder {
        ParamsBuilder::default()
    }

    pub fn validate(&self) -> Result<()> {
        check("a", self.a, false)?;
        check("b", self.b, true)?;
        check("c", self.c, true)?;
        check("delta1", self.delta1, true)?;
        check("delta2", self.delta2, true)?;
        check("Dv", self.dv, true)?;
        check("theta", self.theta, false)?;
        check("tau", self.tau, false)?;
        check("l", self.l, true)
    }

    pub fn a(&self) -> f64 {
        self.a
    }
    pub fn b(&self) -> f64 {
        self.b
    }
    pub fn c(&self) -> f64 {
        self.c
    }
    pub fn delta1(&self) -> f64 {
        self.delta1
    }
    pub fn delta2(&self) -> f64 {
        self.delta2
    }
    pub fn dv(&self) -> f64 {
        self.dv
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }
    pub fn tau(&self) -> f64 {
        self.tau
    }
    pub fn l(&self) -> f64 {
        self.l
    }

    /// Copy with a different inhibitor diffusivity (used by sweeps and ramps).
    pub fn with_dv(&self, dv: f64) -> Result<Self> {
        let p = ModelParams { dv, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_theta(&self, theta: f64) -> Result<Self> {
        let p = ModelParams { theta, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_tau(&self, tau: f64) -> Result<Self> {
        let p = ModelParams { tau, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_a(&self, a: f64) -> Result<Self> {
        let p = ModelParams { a, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_l(&self, l: f64) -> Result<Self> {
        let p = ModelParams { l, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn with_c(&self, c: f64) -> Result<Self> {
        let p = ModelParams { c, ..*self };
        p.validate()?;
        Ok(p)
    }

    pub fn sqrt_delta1(&self) -> f64 {
        self.delta1.sqrt()
    }

    /// `sqrt(b/Dv) * l`, the argument of every tanh/sech factor.
    pub fn kappa(&self) -> f64 {
        (self.b / self.dv).sqrt() * self.l
    }

    /// The spatially homogeneous steady state `(a+bc, (a+bc)^2/b, (a+bc)/c)`.
    pub fn homogeneous_state(&self) -> (f64, f64, f64) {
        let u = self.a + self.b * self.c;
        (u, u * u / self.b, u / self.c)
    }

    /// True when the outer problem admits a saddle-node (bc > a).
    pub fn is_nucleating(&self) -> bool {
        self.b * self.c > self.a
    }
}

/// Whether a grid covers `[-l, l]` or the half interval `[0, l]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DomainMode {
    Full,
    Half,
}

impl std::str::FromStr for DomainMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "full" => Ok(DomainMode::Full),
            "half" => Ok(DomainMode::Half),
            _ => Err(Error::Parse(format!("unknown domain mode `{s}`"))),
        }
    }
}

/// Uniform 1-D grid with both endpoints on nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid1D {
    x: Vec<f64>,
    h: f64,
    mode: DomainMode,
}

impl Grid1D {
    pub fn new(l: f64, n: usize, mode: DomainMode) -> Result<Self> {
        if n < 3 {
            return Err(Error::GridTooSmall(n));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::InvalidParameter {
                name: "l",
                reason: format!("must be positive, got {l}"),
            });
        }
        let (x0, x1) = match mode {
            DomainMode::Full => (-l, l),
            DomainMode::Half => (0.0, l),
        };
        let h = (x1 - x0) / (n - 1) as f64;
        let mut x: Vec<f64> = (0..n).map(|i| x0 + i as f64 * h).collect();
        x[n - 1] = x1;
        if mode == DomainMode::Full {
            for i in 0..n / 2 {
                x[n - 1 - i] = -x[i];
            }
            if n % 2 == 1 {
                x[n / 2] = 0.0;
            }
        }
        Ok(Grid1D { x, h, mode })
    }

    pub fn full(l: f64, n: usize) -> Result<Self> {
        Self::new(l, n, DomainMode::Full)
    }

    pub fn half(l: f64, n: usize) -> Result<Self> {
        Self::new(l, n, DomainMode::Half)
    }

    /// Smallest odd node count on the domain with spacing at most `h_max`.
    pub fn with_max_spacing(l: f64, h_max: f64, mode: DomainMode) -> Result<Self> {
        let len = match mode {
            DomainMode::Full => 2.0 * l,
            DomainMode::Half => l,
        };
        let mut n = (len / h_max).ceil() as usize + 1;
        if n % 2 == 0 {
            n += 1;
        }
        Self::new(l, n.max(3), mode)
    }

    pub fn n(&self) -> usize {
        self.x.len()
    }
    pub fn h(&self) -> f64 {
        self.h
    }
    pub fn x(&self) -> &[f64] {
        &self.x
    }
    pub fn mode(&self) -> DomainMode {
        self.mode
    }
    pub fn l(&self) -> f64 {
        self.x[self.x.len() - 1]
    }

    /// Index of the node at the spike centre (x = 0).
    pub fn center_index(&self) -> usize {
        match self.mode {
            DomainMode::Half => 0,
            DomainMode::Full => self
                .x
                .iter()
                .enumerate()
                .min_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))
                .map(|(i, _)| i)
                .unwrap_or(0),
        }
    }

    /// Trapezoid-weighted integral of nodal data.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        let n = f.len();
        let inner: f64 = f[1..n - 1].iter().sum();
        self.h * (inner + 0.5 * (f[0] + f[n - 1]))
    }
}

/// Nodal values of the three species.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldTriple {
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub w: Vec<f64>,
}

impl FieldTriple {
    pub fn new(u: Vec<f64>, v: Vec<f64>, w: Vec<f64>) -> Result<Self> {
        if v.len() != u.len() {
            return Err(Error::LengthMismatch {
                expected: u.len(),
                got: v.len(),
            });
        }
        if w.len() != u.len() {
            return Err(Error::LengthMismatch {
                expected: u.len(),
                got: w.len(),
            });
        }
        Ok(FieldTriple { u, v, w })
    }

    pub fn constant(n: usize, u: f64, v: f64, w: f64) -> Self {
        FieldTriple {
            u: vec![u; n],
            v: vec![v; n],
            w: vec![w; n],
        }
    }

    /// The homogeneous steady state sampled on `n` nodes.
    pub fn homogeneous(p: &ModelParams, n: usize) -> Self {
        let (u, v, w) = p.homogeneous_state();
        Self::constant(n, u, v, w)
    }

    pub fn len(&self) -> usize {
        self.u.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u.is_empty()
    }

    pub fn is_finite(&self) -> bool {
        self.u
            .iter()
            .chain(&self.v)
            .chain(&self.w)
            .all(|x| x.is_finite())
    }

    /// Max-norm distance over all three species.
    pub fn max_abs_diff(&self, other: &FieldTriple) -> f64 {
        let d = |a: &[f64], b: &[f64]| {
            a.iter()
                .zip(b)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0, f64::max)
        };
        d(&self.u, &other.u)
            .max(d(&self.v, &other.v))
            .max(d(&self.w, &other.w))
    }
}

/// Nodewise kinetics `(a - u + u^3/(wv), u^2 - bv, u - cw)`; diffusion excluded.
pub fn reaction_terms(fields: &FieldTriple, p: &ModelParams) -> Result<FieldTriple> {
    reaction_terms_with_tol(fields, p, DENOMINATOR_TOL)
}

pub fn reaction_terms_with_tol(
    fields: &FieldTriple,
    p: &ModelParams,
    tol: f64,
) -> Result<FieldTriple> {
    let n = fields.len();
    let mut out = FieldTriple::constant(n, 0.0, 0.0, 0.0);
    for i in 0..n {
        let (u, v, w) = (fields.u[i], fields.v[i], fields.w[i]);
        let vw = v * w;
        if vw.abs() < tol {
            return Err(Error::DegenerateDenominator {
                index: i,
                value: vw.abs(),
            });
        }
        out.u[i] = p.a - u + u * u * u / vw;
        out.v[i] = u * u - p.b * v;
        out.w[i] = u - p.c * w;
    }
    Ok(out)
}

/// Second-order Laplacian with homogeneous Neumann conditions imposed by
/// ghost-node reflection (`f[-1] = f[1]`, `f[n] = f[n-2]`).
pub fn laplacian_neumann(field: &[f64], h: f64) -> Result<Vec<f64>> {
    let n = field.len();
    if n < 3 {
        return Err(Error::GridTooSmall(n));
    }
    let inv = 1.0 / (h * h);
    let mut out = vec![0.0; n];
    out[0] = 2.0 * (field[1] - field[0]) * inv;
    for i in 1..n - 1 {
        // neighbour sum first: keeps mirrored data bitwise mirrored
        out[i] = ((field[i - 1] + field[i + 1]) - 2.0 * field[i]) * inv;
    }
    out[n - 1] = 2.0 * (field[n - 2] - field[n - 1]) * inv;
    Ok(out)
}

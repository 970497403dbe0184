//! Time-dependent simulation: first-order IMEX stepping, `D_v` ramps,
//! spike tracking and event detection.
//!
//! Each step updates `w` and `v` from `u^n` with diffusion and linear decay
//! implicit, then `u` with the cubic source explicit:
//!
//! ```text
//!   (tau/dt + c - delta2 L) w' = tau/dt w + u
//!   (theta/dt + b - Dv L) v'   = theta/dt v + u^2
//!   (1/dt + 1 - delta1 L) u'   = u/dt + a + u^3/(w' v')
//! ```
//!
//! With `theta = 0` or `tau = 0` the corresponding line is the elliptic
//! quasi-static solve.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::linalg::Tridiag;
use crate::model::{DomainMode, FieldTriple, Grid1D, ModelParams};
use crate::outer::{self, Background};
use crate::profile::{gamma_of, wc_eval};

/// `max u` above which a run is declared blown up.
pub const BLOW_UP: f64 = 1e8;
const MAX_HALVINGS: u32 = 12;
const RECOVER_AFTER: u32 = 20;

/// Schedule for `D_v(t)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ramp {
    /// `D_v = d0 - rate t`.
    Linear { d0: f64, rate: f64 },
    /// `D_v = d0 exp(-rho t)`.
    Exponential { d0: f64, rho: f64 },
}

impl Ramp {
    pub fn dv_at(&self, t: f64) -> f64 {
        match *self {
            Ramp::Linear { d0, rate } => d0 - rate * t,
            Ramp::Exponential { d0, rho } => d0 * (-rho * t).exp(),
        }
    }

    /// Time at which the ramp passes `dv`, if it does.
    pub fn time_of(&self, dv: f64) -> Option<f64> {
        match *self {
            Ramp::Linear { d0, rate } if rate != 0.0 => Some((d0 - dv) / rate),
            Ramp::Exponential { d0, rho } if rho != 0.0 && dv > 0.0 => Some((d0 / dv).ln() / rho),
            _ => None,
        }
    }
}

/// Spike level used by [`InitialCondition::AsymptoticSpike`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SpikeLevel {
    /// Coupled `(V0, mu)` solve of the outer problem (needs `bc > a`).
    Coupled,
    /// Upper root `V0+` of the amplitude quadratic.
    Upper,
    /// Lower root `V0-`.
    Lower,
    /// Explicit `V0 = v(0) sqrt(delta1)`.
    Level(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCondition {
    /// Inner asymptotic spike blended into the outer solution.
    AsymptoticSpike { center: f64, level: SpikeLevel },
    /// Homogeneous state times `1 + amplitude * U(-1, 1)` noise in `u`.
    HomogeneousPerturbed { seed: u64, amplitude: f64 },
    /// Last time slice of a snapshot CSV.
    FromFile(PathBuf),
}

/// Everything [`simulate`] needs.
#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub params: ModelParams,
    pub grid: Grid1D,
    pub t_end: f64,
    pub dt: f64,
    pub ramp: Option<Ramp>,
    pub initial: InitialCondition,
    /// Base steps between track samples.
    pub output_stride: usize,
    /// Track samples between field snapshots; `None` keeps only the final state.
    pub snapshot_every: Option<usize>,
    pub tracker: TrackerConfig,
}

/// Grid with at least `n_min` nodes and at least ten nodes per core width
/// `sqrt(delta1)`.
pub fn auto_grid(p: &ModelParams, mode: DomainMode, n_min: usize) -> Result<Grid1D> {
    let len = match mode {
        DomainMode::Full => 2.0 * p.l(),
        DomainMode::Half => p.l(),
    };
    let h_min_nodes = len / (n_min.max(3) - 1) as f64;
    Grid1D::with_max_spacing(p.l(), h_min_nodes.min(0.1 * p.sqrt_delta1()), mode)
}

impl SimConfig {
    /// Defaults: `dt = 1e-3`, at least 2001 nodes on the full interval
    /// (1001 on the half), refined to resolve the core.
    pub fn new(params: ModelParams, mode: DomainMode, t_end: f64) -> Result<Self> {
        let n_min = match mode {
            DomainMode::Full => 2001,
            DomainMode::Half => 1001,
        };
        Ok(SimConfig {
            params,
            grid: auto_grid(&params, mode, n_min)?,
            t_end,
            dt: 1e-3,
            ramp: None,
            initial: InitialCondition::AsymptoticSpike {
                center: 0.0,
                level: SpikeLevel::Upper,
            },
            output_stride: 10,
            snapshot_every: None,
            tracker: TrackerConfig::default(),
        })
    }

    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad("dt", format!("must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad("t_end", format!("must be non-negative, got {}", self.t_end));
        }
        if self.output_stride == 0 {
            return bad("output_stride", "must be at least 1".into());
        }
        if (self.grid.l() - self.params.l()).abs() > 1e-12 * self.params.l() {
            return bad(
                "l",
                format!("grid length {} differs from l = {}", self.grid.l(), self.params.l()),
            );
        }
        if let Some(r) = self.ramp {
            let (d0, d1) = (r.dv_at(0.0), r.dv_at(self.t_end));
            if !(d0 > 0.0 && d1 > 0.0 && d0.is_finite() && d1.is_finite()) {
                return bad("ramp", format!("D_v leaves (0, inf) on [0, t_end]: {d0} -> {d1}"));
            }
        }
        Ok(())
    }

    fn dv_at(&self, t: f64) -> f64 {
        self.ramp.map_or(self.params.dv(), |r| r.dv_at(t))
    }
}

fn smoothstep(t: f64) -> f64 {
    let t = t.clamp(0.0, 1.0);
    t * t * (3.0 - 2.0 * t)
}

/// Smaller root of `c u^2 - v u + a v = 0` (the outer `u` for given `v`),
/// or the fold value `v / 2c` when no real root exists.
fn outer_u_from_v(v: f64, p: &ModelParams) -> f64 {
    let (a, c) = (p.a(), p.c());
    let disc = v * v - 4.0 * a * c * v;
    if disc <= 0.0 {
        v / (2.0 * c)
    } else {
        2.0 * a * v / (v + disc.sqrt())
    }
}

/// Inner spike of level `V0` blended into the outer solution with a `C^1`
/// partition of unity over `5 sqrt(delta1) <= |x - center| <= 10 sqrt(delta1)`.
pub fn blended_spike(
    grid: &Grid1D,
    p: &ModelParams,
    center: f64,
    level: SpikeLevel,
) -> Result<FieldTriple> {
    let l = p.l();
    let dist: Vec<f64> = grid
        .x()
        .iter()
        .map(|&x| (x - center).abs().min(l))
        .collect();
    let background = if p.is_nucleating() {
        Background::SmallA
    } else {
        Background::Homogeneous
    };
    let roots = || -> Result<(f64, f64)> {
        if p.is_nucleating() {
            let r = outer::smalla_roots(p)?;
            Ok((r.v0_plus, r.v0_minus))
        } else {
            let r = outer::homog_roots(p)?;
            Ok((r.v0_plus, r.v0_minus))
        }
    };
    let (v0, u_out, v_out) = match level {
        SpikeLevel::Coupled => {
            let solve = outer::solve_v0_mu(p, None)?;
            let u = outer::outer_u_profile(&dist, &solve, p)?;
            let v: Vec<f64> = u
                .iter()
                .map(|&u| p.c() * u * u / (u - p.a()).max(1e-12))
                .collect();
            (solve.v0, u, v)
        }
        other => {
            let v0 = match other {
                SpikeLevel::Upper => roots()?.0,
                SpikeLevel::Lower => roots()?.1,
                SpikeLevel::Level(v) => v,
                SpikeLevel::Coupled => unreachable!(),
            };
            let v = outer::v_outer_profile(&dist, v0, p, background);
            let u = v.iter().map(|&v| outer_u_from_v(v, p)).collect();
            (v0, u, v)
        }
    };
    let sd = p.sqrt_delta1();
    let gamma = gamma_of(p.a(), p.c(), p.delta1(), v0)?;
    let scale = v0 / (p.c() * sd);
    let n = grid.n();
    let mut f = FieldTriple::constant(n, 0.0, 0.0, 0.0);
    for i in 0..n {
        let d = dist[i];
        let s = 1.0 - smoothstep((d / sd - 5.0) / 5.0);
        let u_in = scale * (wc_eval(d / sd, gamma) + gamma);
        f.u[i] = s * u_in + (1.0 - s) * u_out[i];
        f.v[i] = s * v0 / sd + (1.0 - s) * v_out[i];
        f.w[i] = f.u[i] / p.c();
    }
    Ok(f)
}

/// Homogeneous state with multiplicative uniform noise on `u`.
pub fn perturbed_homogeneous(
    grid: &Grid1D,
    p: &ModelParams,
    seed: u64,
    amplitude: f64,
) -> FieldTriple {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut f = FieldTriple::homogeneous(p, grid.n());
    for u in f.u.iter_mut() {
        *u *= 1.0 + amplitude * rng.gen_range(-1.0..=1.0);
    }
    f
}

/// Read the last time slice of a `t,x,u,v,w` snapshot file.
pub fn read_snapshot_csv(path: &Path) -> Result<FieldTriple> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse(format!("{}: empty file", path.display())))?;
    if header.trim() != "t,x,u,v,w" {
        return Err(Error::Parse(format!(
            "{}: expected header `t,x,u,v,w`, got `{header}`",
            path.display()
        )));
    }
    let mut rows: Vec<[f64; 5]> = Vec::new();
    for (k, line) in lines.enumerate() {
        let vals: Vec<f64> = line
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| Error::Parse(format!("{}: row {}: {e}", path.display(), k + 2)))?;
        let row: [f64; 5] = vals.try_into().map_err(|_| {
            Error::Parse(format!("{}: row {} needs 5 columns", path.display(), k + 2))
        })?;
        rows.push(row);
    }
    let t_last = rows
        .last()
        .map(|r| r[0])
        .ok_or_else(|| Error::Parse(format!("{}: no data rows", path.display())))?;
    let slice: Vec<&[f64; 5]> = rows.iter().filter(|r| r[0] == t_last).collect();
    FieldTriple::new(
        slice.iter().map(|r| r[2]).collect(),
        slice.iter().map(|r| r[3]).collect(),
        slice.iter().map(|r| r[4]).collect(),
    )
}

/// Build the starting fields for `cfg`.
pub fn initial_state(cfg: &SimConfig) -> Result<FieldTriple> {
    let p = cfg.params.with_dv(cfg.dv_at(0.0))?;
    let f = match &cfg.initial {
        InitialCondition::AsymptoticSpike { center, level } => {
            blended_spike(&cfg.grid, &p, *center, *level)?
        }
        InitialCondition::HomogeneousPerturbed { seed, amplitude } => {
            perturbed_homogeneous(&cfg.grid, &p, *seed, *amplitude)
        }
        InitialCondition::FromFile(path) => read_snapshot_csv(path)?,
    };
    if f.len() != cfg.grid.n() {
        return Err(Error::LengthMismatch {
            expected: cfg.grid.n(),
            got: f.len(),
        });
    }
    Ok(f)
}

/// `shift I - diff L` for the ghost-node Neumann Laplacian.
fn helmholtz(n: usize, h: f64, shift: f64, diff: f64) -> Result<Tridiag<f64>> {
    let k = diff / (h * h);
    let mut lower = vec![-k; n];
    let mut upper = vec![-k; n];
    let diag = vec![shift + 2.0 * k; n];
    upper[0] = -2.0 * k;
    lower[n - 1] = -2.0 * k;
    lower[0] = 0.0;
    upper[n - 1] = 0.0;
    Tridiag::factor(&lower, &diag, &upper)
}

/// IMEX stepper with factorisations cached per `(dt, D_v)`.
#[derive(Debug, Clone)]
pub struct Stepper {
    params: ModelParams,
    h: f64,
    n: usize,
    cache: Option<Factors>,
}

#[derive(Debug, Clone)]
struct Factors {
    dt: f64,
    dv: f64,
    u: Tridiag<f64>,
    v: Tridiag<f64>,
    w: Tridiag<f64>,
}

impl Stepper {
    pub fn new(params: ModelParams, grid: &Grid1D) -> Self {
        Stepper {
            params,
            h: grid.h(),
            n: grid.n(),
            cache: None,
        }
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    fn factors(&mut self, dt: f64, dv: f64) -> Result<&Factors> {
        let fresh = matches!(&self.cache, Some(f) if f.dt == dt && f.dv == dv);
        if !fresh {
            let p = &self.params;
            let (n, h) = (self.n, self.h);
            // keep the u and w factors when only D_v moved
            let (u, w) = match self.cache.take() {
                Some(f) if f.dt == dt => (f.u, f.w),
                _ => (
                    helmholtz(n, h, 1.0 / dt + 1.0, p.delta1())?,
                    helmholtz(n, h, p.tau() / dt + p.c(), p.delta2())?,
                ),
            };
            let v = helmholtz(n, h, p.theta() / dt + p.b(), dv)?;
            self.cache = Some(Factors { dt, dv, u, v, w });
        }
        Ok(self.cache.as_ref().expect("just filled"))
    }

    /// One step of size `dt` with `D_v = dv` at the new time level.
    pub fn step(&mut self, s: &FieldTriple, dt: f64, dv: f64) -> Result<FieldTriple> {
        if s.len() != self.n {
            return Err(Error::LengthMismatch {
                expected: self.n,
                got: s.len(),
            });
        }
        let (p, n) = (self.params, self.n);
        let f = self.factors(dt, dv)?;
        let (th, ta) = (p.theta() / dt, p.tau() / dt);
        let rhs_w: Vec<f64> = s.w.iter().zip(&s.u).map(|(w, u)| ta * w + u).collect();
        let rhs_v: Vec<f64> = s.v.iter().zip(&s.u).map(|(v, u)| th * v + u * u).collect();
        let w = f.w.solve(&rhs_w)?;
        let v = f.v.solve(&rhs_v)?;
        check_positive(&w, 'w')?;
        check_positive(&v, 'v')?;
        let rhs_u: Vec<f64> = (0..n)
            .map(|i| {
                let u = s.u[i];
                u / dt + p.a() + u * u * u / (w[i] * v[i])
            })
            .collect();
        let u = f.u.solve(&rhs_u)?;
        check_positive(&u, 'u')?;
        let max_u = u.iter().fold(0.0_f64, |m, &x| m.max(x));
        if max_u > BLOW_UP {
            return Err(Error::BlowUpDetected { max_u });
        }
        Ok(FieldTriple { u, v, w })
    }
}

fn check_positive(x: &[f64], species: char) -> Result<()> {
    match x.iter().position(|v| !(v.is_finite() && *v > 0.0)) {
        Some(index) => Err(Error::PositivityLost { species, index }),
        None => Ok(()),
    }
}

/// Spike detection settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    /// Candidate maxima must reach this fraction of `max u`.
    pub threshold: f64,
    /// Minimum separation between spikes, in cells.
    pub min_sep_cells: usize,
    /// `max u` must exceed `min_contrast * min u` for any spike to count.
    pub min_contrast: f64,
}

impl Default for TrackerConfig {
    fn default() -> Self {
        TrackerConfig {
            threshold: 0.5,
            min_sep_cells: 10,
            min_contrast: 2.0,
        }
    }
}

/// A detected spike: parabolic-refined position and peak value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spike {
    pub position: f64,
    pub amplitude: f64,
}

/// Local maxima of `u` (boundary maxima included), sorted by position.
pub fn track_spikes(u: &[f64], grid: &Grid1D, cfg: &TrackerConfig) -> Vec<Spike> {
    let n = u.len();
    if n < 3 || n != grid.n() {
        return Vec::new();
    }
    let (lo, hi) = u
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &x| (lo.min(x), hi.max(x)));
    if !(hi > cfg.min_contrast * lo.max(0.0)) || hi <= lo {
        return Vec::new();
    }
    // Neumann reflection gives the ghost neighbours at both ends
    let nb = |i: usize| -> (f64, f64) {
        let left = if i == 0 { u[1] } else { u[i - 1] };
        let right = if i == n - 1 { u[n - 2] } else { u[i + 1] };
        (left, right)
    };
    let mut cand: Vec<usize> = (0..n)
        .filter(|&i| {
            let (l, r) = nb(i);
            u[i] >= cfg.threshold * hi && u[i] >= l && u[i] >= r && (u[i] > l || u[i] > r)
        })
        .collect();
    cand.sort_by(|&i, &j| u[j].total_cmp(&u[i]).then(i.cmp(&j)));
    let mut kept: Vec<usize> = Vec::new();
    for i in cand {
        if kept.iter().all(|&k| k.abs_diff(i) >= cfg.min_sep_cells) {
            kept.push(i);
        }
    }
    kept.sort_unstable();
    let h = grid.h();
    kept.into_iter()
        .map(|i| {
            let (l, r) = nb(i);
            let curv = l - 2.0 * u[i] + r;
            let (off, amp) = if curv < 0.0 {
                let off = 0.5 * (l - r) / curv;
                (off.clamp(-0.5, 0.5), u[i] - 0.125 * (l - r) * (l - r) / curv)
            } else {
                (0.0, u[i])
            };
            let x = (grid.x()[i] + off * h).clamp(grid.x()[0], grid.x()[n - 1]);
            Spike {
                position: x,
                amplitude: amp,
            }
        })
        .collect()
}

/// Tracked spike with a persistent identifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackedSpike {
    pub id: usize,
    pub position: f64,
    pub amplitude: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackSample {
    pub t: f64,
    pub dv: f64,
    pub max_u: f64,
    pub spikes: Vec<TrackedSpike>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventKind {
    Nucleation,
    Annihilation,
    OscillationOnset,
}

impl std::fmt::Display for EventKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EventKind::Nucleation => "nucleation",
            EventKind::Annihilation => "annihilation",
            EventKind::OscillationOnset => "oscillation_onset",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Event {
    pub t: f64,
    pub kind: EventKind,
    pub detail: String,
}

/// Spike time series of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct SpikeTrack {
    /// Grid spacing, the length unit of the event thresholds.
    pub h: f64,
    pub samples: Vec<TrackSample>,
    pub events: Vec<Event>,
    next_id: usize,
}

impl SpikeTrack {
    pub fn new(h: f64) -> Self {
        SpikeTrack {
            h,
            samples: Vec::new(),
            events: Vec::new(),
            next_id: 0,
        }
    }

    /// Append a sample, matching spikes to the previous sample by nearest
    /// position within `max_jump`.
    pub fn push(&mut self, t: f64, dv: f64, max_u: f64, spikes: &[Spike], max_jump: f64) {
        let prev: Vec<TrackedSpike> = self
            .samples
            .last()
            .map(|s| s.spikes.clone())
            .unwrap_or_default();
        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (i, s) in spikes.iter().enumerate() {
            for (j, q) in prev.iter().enumerate() {
                let d = (s.position - q.position).abs();
                if d <= max_jump {
                    pairs.push((d, i, j));
                }
            }
        }
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
        let mut ids: Vec<Option<usize>> = vec![None; spikes.len()];
        let mut used = vec![false; prev.len()];
        for (_, i, j) in pairs {
            if ids[i].is_none() && !used[j] {
                ids[i] = Some(prev[j].id);
                used[j] = true;
            }
        }
        let tracked = spikes
            .iter()
            .zip(ids)
            .map(|(s, id)| {
                let id = id.unwrap_or_else(|| {
                    self.next_id += 1;
                    self.next_id - 1
                });
                TrackedSpike {
                    id,
                    position: s.position,
                    amplitude: s.amplitude,
                }
            })
            .collect();
        self.samples.push(TrackSample {
            t,
            dv,
            max_u,
            spikes: tracked,
        });
    }

    pub fn counts(&self) -> Vec<usize> {
        self.samples.iter().map(|s| s.spikes.len()).collect()
    }

    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.t).collect()
    }

    /// `(t, position)` series of spike `id`.
    pub fn positions(&self, id: usize) -> Vec<(f64, f64)> {
        self.samples
            .iter()
            .filter_map(|s| {
                s.spikes
                    .iter()
                    .find(|k| k.id == id)
                    .map(|k| (s.t, k.position))
            })
            .collect()
    }

    pub fn ids(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = self
            .samples
            .iter()
            .flat_map(|s| s.spikes.iter().map(|k| k.id))
            .collect();
        ids.sort_unstable();
        ids.dedup();
        ids
    }

    /// `D_v` at the first event of the given kind.
    pub fn first_event_dv(&self, kind: EventKind) -> Option<f64> {
        let e = self.events.iter().find(|e| e.kind == kind)?;
        self.samples.iter().find(|s| s.t >= e.t).map(|s| s.dv)
    }
}

/// Event detection thresholds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EventConfig {
    /// Samples a count change must persist.
    pub persistence: usize,
    /// Oscillation window as a fraction of the run length.
    pub window_fraction: f64,
    /// Peak-to-peak threshold in grid cells.
    pub amplitude_cells: f64,
}

impl Default for EventConfig {
    fn default() -> Self {
        EventConfig {
            persistence: 20,
            window_fraction: 0.1,
            amplitude_cells: 5.0,
        }
    }
}

pub fn detect_events(track: &SpikeTrack) -> Vec<Event> {
    detect_events_with(track, &EventConfig::default())
}

pub fn detect_events_with(track: &SpikeTrack, cfg: &EventConfig) -> Vec<Event> {
    let s = &track.samples;
    if s.len() < 100 {
        return Vec::new();
    }
    let mut events = Vec::new();
    let counts = track.counts();
    let k = cfg.persistence.max(1);
    let mut current = counts[0];
    let mut i = 1;
    while i < counts.len() {
        let c = counts[i];
        if c != current && i + k <= counts.len() && counts[i..i + k].iter().all(|&x| x == c) {
            let kind = if c > current {
                EventKind::Nucleation
            } else {
                EventKind::Annihilation
            };
            events.push(Event {
                t: s[i].t,
                kind,
                detail: format!("{current}->{c} at Dv={}", s[i].dv),
            });
            current = c;
            i += k;
        } else {
            i += 1;
        }
    }

    let (t0, t1) = (s[0].t, s[s.len() - 1].t);
    let window = cfg.window_fraction * (t1 - t0);
    let limit = cfg.amplitude_cells * track.h;
    let mut onset: Option<(f64, usize, f64)> = None;
    for id in track.ids() {
        let series = track.positions(id);
        let mut start = 0;
        for end in 0..series.len() {
            while series[end].0 - series[start].0 > window {
                start += 1;
            }
            let (lo, hi) = series[start..=end]
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), p| {
                    (lo.min(p.1), hi.max(p.1))
                });
            if hi - lo > limit {
                let t = series[end].0;
                if onset.is_none_or(|o| t < o.0) {
                    onset = Some((t, id, hi - lo));
                }
                break;
            }
        }
    }
    if let Some((t, id, ptp)) = onset {
        events.push(Event {
            t,
            kind: EventKind::OscillationOnset,
            detail: format!("spike {id} peak-to-peak {ptp:.3e}"),
        });
    }
    events.sort_by(|a, b| a.t.total_cmp(&b.t));
    events
}

/// Field snapshot at time `t`.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub dv: f64,
    pub fields: FieldTriple,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimOutput {
    pub track: SpikeTrack,
    pub snapshots: Vec<Snapshot>,
    pub final_state: Snapshot,
    pub steps: usize,
    pub halvings: usize,
}

/// Run `cfg` from its initial condition.
pub fn simulate(cfg: &SimConfig) -> Result<SimOutput> {
    cfg.validate()?;
    let init = initial_state(cfg)?;
    simulate_from(cfg, init)
}

/// Run `cfg` from the supplied fields.
pub fn simulate_from(cfg: &SimConfig, init: FieldTriple) -> Result<SimOutput> {
    cfg.validate()?;
    if init.len() != cfg.grid.n() {
        return Err(Error::LengthMismatch {
            expected: cfg.grid.n(),
            got: init.len(),
        });
    }
    let grid = &cfg.grid;
    let mut stepper = Stepper::new(cfg.params, grid);
    let mut track = SpikeTrack::new(grid.h());
    let max_jump = 2.0 * cfg.tracker.min_sep_cells as f64 * grid.h();
    let record_dt = cfg.output_stride as f64 * cfg.dt;
    let mut snapshots = Vec::new();
    let mut state = init;
    let mut t = 0.0;
    let mut record = 0usize;
    let mut steps = 0usize;
    let mut halvings = 0usize;
    let mut level = 0u32;
    let mut calm = 0u32;

    let mut observe = |t: f64, state: &FieldTriple, record: usize, track: &mut SpikeTrack| {
        let dv = cfg.dv_at(t);
        let max_u = state.u.iter().fold(0.0_f64, |m, &x| m.max(x));
        let spikes = track_spikes(&state.u, grid, &cfg.tracker);
        track.push(t, dv, max_u, &spikes, max_jump);
        if let Some(every) = cfg.snapshot_every {
            if every > 0 && record % every == 0 {
                snapshots.push(Snapshot {
                    t,
                    dv,
                    fields: state.clone(),
                });
            }
        }
    };
    observe(t, &state, record, &mut track);

    while t < cfg.t_end {
        let next_record = ((record + 1) as f64 * record_dt).min(cfg.t_end);
        let dt_level = cfg.dt / f64::powi(2.0, level as i32);
        let dt = dt_level.min(next_record - t);
        let t_new = if dt == next_record - t { next_record } else { t + dt };
        match stepper.step(&state, dt, cfg.dv_at(t_new)) {
            Ok(next) => {
                state = next;
                t = t_new;
                steps += 1;
                if level > 0 {
                    calm += 1;
                    if calm >= RECOVER_AFTER {
                        level -= 1;
                        calm = 0;
                    }
                }
                if t >= next_record {
                    record += 1;
                    observe(t, &state, record, &mut track);
                }
            }
            Err(Error::PositivityLost { .. }) | Err(Error::SingularMatrix { .. })
                if level < MAX_HALVINGS =>
            {
                level += 1;
                calm = 0;
                halvings += 1;
            }
            Err(e) => {
                return Err(Error::SimulationFailed {
                    t,
                    source: Box::new(e),
                })
            }
        }
    }
    track.events = detect_events(&track);
    let final_state = Snapshot {
        t,
        dv: cfg.dv_at(t),
        fields: state,
    };
    Ok(SimOutput {
        track,
        snapshots,
        final_state,
        steps,
        halvings,
    })
}

/// Snapshot CSV `t,x,u,v,w`.
pub fn snapshots_csv(snapshots: &[Snapshot], grid: &Grid1D) -> String {
    let mut out = String::from("t,x,u,v,w\n");
    for s in snapshots {
        for (i, x) in grid.x().iter().enumerate() {
            let f = &s.fields;
            let _ = writeln!(out, "{},{},{},{},{}", s.t, x, f.u[i], f.v[i], f.w[i]);
        }
    }
    out
}

/// Track CSV `t,spike_id,position,amplitude,count`; samples without spikes
/// get one row with empty spike columns.
pub fn track_csv(track: &SpikeTrack) -> String {
    let mut out = String::from("t,spike_id,position,amplitude,count\n");
    for s in &track.samples {
        let count = s.spikes.len();
        if count == 0 {
            let _ = writeln!(out, "{},,,,0", s.t);
        }
        for k in &s.spikes {
            let _ = writeln!(out, "{},{},{},{},{}", s.t, k.id, k.position, k.amplitude, count);
        }
    }
    out
}

/// Event CSV `t,type,detail`.
pub fn events_csv(events: &[Event]) -> String {
    let mut out = String::from("t,type,detail\n");
    for e in events {
        let _ = writeln!(out, "{},{},{}", e.t, e.kind, e.detail.replace(',', ";"));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn coarse(a: f64) -> ModelParams {
        ModelParams::builder()
            .a(a)
            .b(1.0)
            .c(1.0)
            .l(1.0)
            .dv(1.0)
            .delta1(1e-2)
            .build()
            .unwrap()
    }

    #[test]
    fn homogeneous_state_is_fixed() {
        let p = coarse(1.5);
        let grid = Grid1D::half(1.0, 101).unwrap();
        let mut st = Stepper::new(p, &grid);
        let init = FieldTriple::homogeneous(&p, grid.n());
        let mut s = init.clone();
        for _ in 0..10_000 {
            s = st.step(&s, 1e-3, 1.0).unwrap();
        }
        assert!(s.max_abs_diff(&init) < 1e-8);
    }

    #[test]
    fn tracker_single_bump_and_flat() {
        let grid = Grid1D::full(1.0, 401).unwrap();
        let x0 = 0.3013;
        let u: Vec<f64> = grid
            .x()
            .iter()
            .map(|&x| 1.0 / ((x - x0) / 0.05).cosh().powi(2))
            .collect();
        let s = track_spikes(&u, &grid, &TrackerConfig::default());
        assert_eq!(s.len(), 1);
        let h = grid.h();
        assert!((s[0].position - x0).abs() < 0.5 * h * h / 0.05, "{}", s[0].position);
        assert!(track_spikes(&vec![2.0; 401], &grid, &TrackerConfig::default()).is_empty());

        let two: Vec<f64> = grid
            .x()
            .iter()
            .map(|&x| {
                1.0 / ((x - 0.5) / 0.05).cosh().powi(2) + 1.0 / ((x + 0.5) / 0.05).cosh().powi(2)
            })
            .collect();
        let s = track_spikes(&two, &grid, &TrackerConfig::default());
        assert_eq!(s.len(), 2);
        assert!((s[0].position + s[1].position).abs() < 1e-12);
    }

    #[test]
    fn tracker_admits_boundary_maxima() {
        let grid = Grid1D::half(1.0, 201).unwrap();
        let u: Vec<f64> = grid
            .x()
            .iter()
            .map(|&x| 0.1 + (-(x * x) / 0.01).exp() + (-((x - 1.0) * (x - 1.0)) / 0.01).exp())
            .collect();
        let s = track_spikes(&u, &grid, &TrackerConfig::default());
        assert_eq!(s.len(), 2);
        assert_eq!(s[0].position, 0.0);
        assert_eq!(s[1].position, 1.0);
    }

    #[test]
    fn ramps() {
        let lin = Ramp::Linear {
            d0: 2.0,
            rate: 1.5e-4,
        };
        assert!((lin.dv_at(1e4) - 0.5).abs() < 1e-12);
        assert!((lin.time_of(1.07).unwrap() - 6200.0).abs() < 1e-9);
        let ex = Ramp::Exponential { d0: 2.0, rho: 1e-4 };
        assert!((ex.dv_at(ex.time_of(1.07).unwrap()) - 1.07).abs() < 1e-12);
        let p = coarse(0.5);
        let mut cfg = SimConfig::new(p, DomainMode::Half, 2e4).unwrap();
        cfg.ramp = Some(lin);
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn auto_grid_resolves_core() {
        let p = ModelParams::builder().delta1(1e-4).l(4.0).build().unwrap();
        let g = auto_grid(&p, DomainMode::Full, 2001).unwrap();
        assert!(g.h() <= 1e-3 + 1e-15);
        assert!(g.n() >= 8001);
        let q = coarse(0.5);
        assert_eq!(auto_grid(&q, DomainMode::Full, 2001).unwrap().n(), 2001);
    }

    #[test]
    fn perturbation_is_seeded() {
        let p = coarse(1.5);
        let g = Grid1D::half(1.0, 51).unwrap();
        let a = perturbed_homogeneous(&g, &p, 7, 1e-3);
        let b = perturbed_homogeneous(&g, &p, 7, 1e-3);
        let c = perturbed_homogeneous(&g, &p, 8, 1e-3);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn events_from_synthetic_track() {
        let mut tr = SpikeTrack::new(0.01);
        for k in 0..300 {
            let t = k as f64;
            let mut spikes = vec![Spike {
                position: 0.0,
                amplitude: 10.0,
            }];
            if k >= 100 {
                spikes.push(Spike {
                    position: 1.0,
                    amplitude: 10.0,
                });
            }
            if k == 50 {
                spikes.push(Spike {
                    position: -1.0,
                    amplitude: 10.0,
                });
            }
            tr.push(t, 1.0, 10.0, &spikes, 0.2);
        }
        let ev = detect_events(&tr);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::Nucleation);
        assert_eq!(ev[0].t, 100.0);

        let mut osc = SpikeTrack::new(0.01);
        for k in 0..400 {
            let t = k as f64;
            let x = if t < 200.0 { 0.0 } else { 0.2 * (t * 0.3).sin() };
            osc.push(t, 1.0, 1.0, &[Spike { position: x, amplitude: 1.0 }], 0.5);
        }
        let ev = detect_events(&osc);
        assert_eq!(ev.len(), 1);
        assert_eq!(ev[0].kind, EventKind::OscillationOnset);
        assert!(ev[0].t >= 200.0 && ev[0].t < 210.0);
    }

    #[test]
    fn csv_layouts() {
        let grid = Grid1D::half(1.0, 3).unwrap();
        let snap = Snapshot {
            t: 0.5,
            dv: 1.0,
            fields: FieldTriple::constant(3, 1.0, 2.0, 3.0),
        };
        let csv = snapshots_csv(&[snap], &grid);
        assert_eq!(csv.lines().next(), Some("t,x,u,v,w"));
        assert_eq!(csv.lines().count(), 4);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("s.csv");
        std::fs::write(&path, &csv).unwrap();
        assert_eq!(
            read_snapshot_csv(&path).unwrap(),
            FieldTriple::constant(3, 1.0, 2.0, 3.0)
        );
        let tr = SpikeTrack::new(0.1);
        assert_eq!(track_csv(&tr), "t,spike_id,position,amplitude,count\n");
        assert_eq!(events_csv(&[]), "t,type,detail\n");
    }

    #[test]
    fn spike_relaxes_and_is_tracked() {
        let p = ModelParams::builder()
            .a(0.01)
            .b(1.0)
            .c(1.0)
            .l(1.0)
            .dv(1.0)
            .delta1(1e-3)
            .build()
            .unwrap();
        let mut cfg = SimConfig::new(p, DomainMode::Half, 5.0).unwrap();
        cfg.dt = 1e-2;
        let out = simulate(&cfg).unwrap();
        let first = &out.track.samples[0];
        let last = out.track.samples.last().unwrap();
        assert_eq!(first.spikes.len(), 1);
        assert_eq!(last.spikes.len(), 1);
        assert_eq!(last.spikes[0].position, 0.0);
        assert!(out.track.events.is_empty());
        let rel = (last.max_u - first.max_u).abs() / first.max_u;
        assert!(rel < 0.1, "{rel}");
    }

    #[test]
    fn first_order_in_time() {
        let p = ModelParams::builder()
            .a(0.1)
            .b(1.0)
            .c(1.0)
            .l(1.0)
            .dv(1.0)
            .delta1(1e-2)
            .theta(0.5)
            .tau(0.5)
            .build()
            .unwrap();
        let grid = Grid1D::half(1.0, 101).unwrap();
        let init = blended_spike(&grid, &p, 0.0, SpikeLevel::Level(0.25)).unwrap();
        let run = |dt: f64| {
            let mut st = Stepper::new(p, &grid);
            let mut s = init.clone();
            let steps = (1.0 / dt).round() as usize;
            for _ in 0..steps {
                s = st.step(&s, dt, 1.0).unwrap();
            }
            s
        };
        let (a, b, c) = (run(0.02), run(0.01), run(0.005));
        let order = (a.max_abs_diff(&b) / b.max_abs_diff(&c)).log2();
        assert!((0.8..=1.2).contains(&order), "{order}");
    }
}

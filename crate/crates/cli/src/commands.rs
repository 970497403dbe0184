//! Command implementations. Each returns its artifacts in memory so that
//! nothing is written unless the whole run succeeds.

use rayon::prelude::*;

use spikelab::continuation::{continue_branch, ContinuationConfig};
use spikelab::nlep::{hopf_tau_large, hopf_theta, hopf_theta_curve, lambda0_root, LineOperator};
use spikelab::outer::{homog_roots, nucleation_threshold, smalla_roots, solve_v0_mu, NucleationResult};
use spikelab::sim::{
    auto_grid, events_csv, simulate, snapshots_csv, track_csv, EventKind, SimConfig,
};
use spikelab::smalleig::{k_factor, small_lambda_roots, tau_h_threshold};
use spikelab::{Error, Grid1D};

use crate::config::{RawConfig, Settings};

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct Row {
    pub quantity: String,
    pub value: f64,
    pub tolerance: Option<f64>,
    pub source: &'static str,
}

fn row(quantity: impl Into<String>, value: f64, tolerance: Option<f64>, source: &'static str) -> Row {
    Row {
        quantity: quantity.into(),
        value,
        tolerance,
        source,
    }
}

/// Artifacts of a finished run.
#[derive(Debug, Default)]
pub struct Outcome {
    pub rows: Vec<Row>,
    pub files: Vec<(String, String)>,
}

pub fn summary_csv(rows: &[Row]) -> String {
    let mut out = String::from("quantity,value,tolerance,source\n");
    for r in rows {
        let tol = r.tolerance.map(|t| t.to_string()).unwrap_or_default();
        out.push_str(&format!("{},{},{},{}\n", r.quantity, r.value, tol, r.source));
    }
    out
}

pub fn print_rows(rows: &[Row]) {
    for r in rows {
        let v = r.value;
        let shown = if v != 0.0 && (v.abs() < 1e-3 || v.abs() >= 1e6) {
            format!("{v:.6e}")
        } else {
            format!("{v:.6}")
        };
        println!("{:<24} = {:>16}   [{}]", r.quantity, shown, r.source);
    }
}

pub fn run(s: &Settings, raw: &RawConfig) -> Result<Outcome, Error> {
    match s.command.as_str() {
        "equilibrium" => equilibrium(s),
        "nucleation" => nucleation(s),
        "nlep-theta" => nlep_theta(s),
        "nlep-tau" => nlep_tau(s),
        "smalleig" => smalleig(s),
        "simulate" => run_simulation(s),
        "continue" => run_continuation(s),
        "sweep" => sweep(s, raw),
        other => Err(Error::RegimeMismatch(format!("unknown command `{other}`"))),
    }
}

fn equilibrium(s: &Settings) -> Result<Outcome, Error> {
    let p = &s.params;
    let mut rows = Vec::new();
    if p.is_nucleating() {
        let sol = solve_v0_mu(p, None)?;
        rows.push(row("V0", sol.v0, Some(spikelab::outer::NEWTON_TOL), "newton"));
        rows.push(row("mu", sol.mu, Some(spikelab::outer::NEWTON_TOL), "newton"));
        rows.push(row("gamma", sol.gamma, None, "newton"));
        rows.push(row("u0_plus", sol.u0p, None, "newton"));
        let r = smalla_roots(p)?;
        rows.push(row("V0_plus_small_a", r.v0_plus, None, "closed-form"));
        rows.push(row("V0_minus_small_a", r.v0_minus, None, "closed-form"));
    } else {
        let r = homog_roots(p)?;
        rows.push(row("u_inf", p.a() + p.b() * p.c(), None, "closed-form"));
        rows.push(row("V0_plus", r.v0_plus, None, "closed-form"));
        rows.push(row("V0_minus", r.v0_minus, None, "closed-form"));
        rows.push(row("v0_plus", r.v_plus, None, "closed-form"));
        rows.push(row("v0_minus", r.v_minus, None, "closed-form"));
    }
    Ok(Outcome {
        rows,
        files: Vec::new(),
    })
}

fn nucleation(s: &Settings) -> Result<Outcome, Error> {
    let rows = match nucleation_threshold(&s.params)? {
        NucleationResult::Nucleating {
            chi_max,
            d_nuc,
            v0,
            u0p,
        } => vec![
            row("D_nuc", d_nuc, Some(spikelab::outer::NEWTON_TOL), "asymptotic"),
            row("chi_max", chi_max, None, "asymptotic"),
            row("V0_at_fold", v0, None, "asymptotic"),
            row("u0_plus_at_fold", u0p, None, "asymptotic"),
        ],
        NucleationResult::Homogeneous { u_inf } => vec![row("u_inf", u_inf, None, "closed-form")],
    };
    Ok(Outcome {
        rows,
        files: Vec::new(),
    })
}

fn line_operator(s: &Settings) -> Result<LineOperator, Error> {
    LineOperator::new(s.nlep_n, s.ly)
}

fn nlep_theta(s: &Settings) -> Result<Outcome, Error> {
    let op = line_operator(s)?;
    let tol = Some(spikelab::nlep::HOPF_TOL);
    let mut out = Outcome::default();
    if s.dv_values.is_empty() {
        let r = hopf_theta(&s.params, &op)?;
        out.rows.push(row("theta_h", r.threshold.unwrap_or(f64::NAN), tol, "nlep"));
        out.rows.push(row("omega_h", r.omega.unwrap_or(f64::NAN), tol, "nlep"));
        out.rows.push(row("residual", r.residual, None, "nlep"));
    } else {
        let curve = hopf_theta_curve(&s.params, &s.dv_values, &op)?;
        let mut csv = String::from("Dv,theta_h,omega,residual\n");
        for (dv, r) in &curve {
            let th = r.threshold.unwrap_or(f64::NAN);
            csv.push_str(&format!("{dv},{th},{},{}\n", r.omega.unwrap_or(f64::NAN), r.residual));
            out.rows.push(row(format!("theta_h@Dv={dv}"), th, tol, "nlep"));
        }
        out.files.push(("theta_curve.csv".into(), csv));
    }
    Ok(out)
}

fn nlep_tau(s: &Settings) -> Result<Outcome, Error> {
    let op = line_operator(s)?;
    let tol = Some(spikelab::nlep::HOPF_TOL);
    let mut out = Outcome::default();
    let mut csv = String::from("c,tau_lh,omega,residual\n");
    let mut pts = Vec::new();
    for &c in &s.c_values {
        let r = hopf_tau_large(c, &op)?;
        let t = r.threshold.unwrap_or(f64::NAN);
        csv.push_str(&format!("{c},{t},{},{}\n", r.omega.unwrap_or(f64::NAN), r.residual));
        out.rows.push(row(format!("tau_lh@c={c}"), t, tol, "nlep"));
        pts.push((c, t));
    }
    if pts.len() >= 2 {
        let (slope, r2) = fit_through_origin(&pts);
        out.rows.push(row("tau_lh_over_c", slope, None, "fit"));
        out.rows.push(row("fit_r2", r2, None, "fit"));
    }
    out.rows.push(row(
        "lambda0_tau_inf",
        lambda0_root(1e6, 1.0)?,
        Some(1e-12),
        "closed-form",
    ));
    out.files.push(("tau_lh.csv".into(), csv));
    Ok(out)
}

/// Least-squares slope of `y = k x` and the `R^2` of the fit.
pub fn fit_through_origin(pts: &[(f64, f64)]) -> (f64, f64) {
    let sxy: f64 = pts.iter().map(|(x, y)| x * y).sum();
    let sxx: f64 = pts.iter().map(|(x, _)| x * x).sum();
    let k = sxy / sxx;
    let mean = pts.iter().map(|p| p.1).sum::<f64>() / pts.len() as f64;
    let ss_res: f64 = pts.iter().map(|(x, y)| (y - k * x).powi(2)).sum();
    let ss_tot: f64 = pts.iter().map(|(_, y)| (y - mean).powi(2)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    (k, r2)
}

fn smalleig(s: &Settings) -> Result<Outcome, Error> {
    let p = &s.params;
    let (closed, quad) = tau_h_threshold(p.c())?;
    let mut rows = vec![
        row("tau_h", closed, None, "closed-form"),
        row("tau_h_quadrature", quad, Some(1e-8), "quadrature"),
        row("k", k_factor(p)?, None, "closed-form"),
    ];
    if p.tau() > 0.0 {
        let d = small_lambda_roots(p.tau(), p)?;
        for (i, l) in d.lambda_pair.iter().enumerate() {
            rows.push(row(format!("lambda{}_re", i + 1), l.re, None, "quadratic"));
            rows.push(row(format!("lambda{}_im", i + 1), l.im, None, "quadratic"));
        }
        rows.push(row("re_asymptotic", d.re_asym, None, "asymptotic"));
        rows.push(row("im_asymptotic", d.im_asym, None, "asymptotic"));
        rows.push(row("lambda_linearized", d.lambda_linearized, None, "asymptotic"));
    }
    Ok(Outcome {
        rows,
        files: Vec::new(),
    })
}

fn grid_for(s: &Settings) -> Result<Grid1D, Error> {
    match s.n {
        Some(n) => Grid1D::new(s.params.l(), n, s.domain),
        None => {
            let n_min = match s.domain {
                spikelab::DomainMode::Full => 2001,
                spikelab::DomainMode::Half => 1001,
            };
            auto_grid(&s.params, s.domain, n_min)
        }
    }
}

fn run_simulation(s: &Settings) -> Result<Outcome, Error> {
    let cfg = SimConfig {
        params: s.params,
        grid: grid_for(s)?,
        t_end: s.t_end,
        dt: s.dt,
        ramp: s.ramp,
        initial: s.initial.clone(),
        output_stride: s.output_stride,
        snapshot_every: s.snapshot_every,
        tracker: Default::default(),
    };
    let out = simulate(&cfg)?;
    let last = out.track.samples.last().expect("at least the initial sample");
    let f = &out.final_state.fields;
    let centre = cfg.grid.center_index();
    let mut rows = vec![
        row("t_final", out.final_state.t, None, "pde"),
        row("max_u_final", last.max_u, None, "pde"),
        row("V0_final", f.v[centre] * s.params.sqrt_delta1(), None, "pde"),
        row("mu_final", f.u[f.len() - 1], None, "pde"),
        row("spike_count_final", last.spikes.len() as f64, None, "pde"),
        row("events", out.track.events.len() as f64, None, "pde"),
        row("steps", out.steps as f64, None, "pde"),
        row("dt_halvings", out.halvings as f64, None, "pde"),
    ];
    for kind in [EventKind::Nucleation, EventKind::Annihilation, EventKind::OscillationOnset] {
        if let Some(e) = out.track.events.iter().find(|e| e.kind == kind) {
            rows.push(row(format!("first_{kind}_t"), e.t, None, "pde"));
            if let Some(dv) = out.track.first_event_dv(kind) {
                rows.push(row(format!("first_{kind}_Dv"), dv, None, "pde"));
            }
        }
    }
    let mut snaps = out.snapshots.clone();
    if snaps.last().map(|x| x.t) != Some(out.final_state.t) {
        snaps.push(out.final_state.clone());
    }
    Ok(Outcome {
        rows,
        files: vec![
            ("snapshots.csv".into(), snapshots_csv(&snaps, &cfg.grid)),
            ("track.csv".into(), track_csv(&out.track)),
            ("events.csv".into(), events_csv(&out.track.events)),
        ],
    })
}

fn run_continuation(s: &Settings) -> Result<Outcome, Error> {
    let level = match &s.initial {
        spikelab::sim::InitialCondition::AsymptoticSpike { level, .. } => *level,
        _ => spikelab::sim::SpikeLevel::Upper,
    };
    let cfg = ContinuationConfig {
        ds: s.ds,
        max_points: s.max_points,
        mode: s.domain,
        n: s.n,
        level,
        ..Default::default()
    };
    let branch = continue_branch(&s.params, s.dv_start, s.dv_target, &cfg)?;
    let mut rows = vec![row("points", branch.points.len() as f64, None, "continuation")];
    for (i, f) in branch.folds().enumerate() {
        rows.push(row(format!("fold{}_Dv", i + 1), f.dv, Some(cfg.fold_tol), "continuation"));
        rows.push(row(format!("fold{}_mu", i + 1), f.mu, None, "continuation"));
    }
    if let Some(last) = branch.points.last() {
        rows.push(row("Dv_last", last.dv, None, "continuation"));
        rows.push(row("mu_last", last.mu, None, "continuation"));
    }
    let mut files = vec![("branch.csv".to_string(), branch.to_csv())];
    if let Some(e) = &branch.failure {
        files.push(("truncated.txt".into(), format!("{e}\n")));
    }
    Ok(Outcome { rows, files })
}

/// Directory name of sweep run `i`.
pub fn sweep_dir(i: usize, key: &str, value: &str) -> String {
    let safe: String = value
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect();
    format!("run_{i:03}_{key}={safe}")
}

fn sweep(s: &Settings, raw: &RawConfig) -> Result<Outcome, Error> {
    // every run is validated before any is started
    let runs: Vec<(RawConfig, Settings)> = s
        .sweep_values
        .iter()
        .enumerate()
        .map(|(i, v)| {
            let mut r = raw.clone();
            r.command = s.sweep_command.clone();
            r.set(&s.sweep_key, v).map_err(|e| Error::Parse(e.0))?;
            let dir = s.output_dir.join(sweep_dir(i, &s.sweep_key, v));
            r.set("output_dir", &dir.display().to_string())
                .map_err(|e| Error::Parse(e.0))?;
            let st = Settings::from_raw(&r).map_err(|e| Error::Parse(e.0))?;
            Ok((r, st))
        })
        .collect::<Result<_, Error>>()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(s.workers)
        .build()
        .map_err(|e| Error::Io(e.to_string()))?;
    let results: Vec<Result<Vec<Row>, String>> = pool.install(|| {
        runs.par_iter()
            .map(|(r, st)| {
                let res = run(st, r);
                let written = crate::write_run(&st.output_dir, r, &res);
                match (res, written) {
                    (Ok(o), Ok(())) => Ok(o.rows),
                    (Err(e), _) => Err(e.to_string()),
                    (_, Err(e)) => Err(e.to_string()),
                }
            })
            .collect()
    });
    let mut csv = String::from("run,key,value,status,quantity,result,source\n");
    let mut rows = Vec::new();
    let mut failures = 0;
    for (i, (value, res)) in s.sweep_values.iter().zip(&results).enumerate() {
        match res {
            Ok(rs) => {
                for r in rs {
                    csv.push_str(&format!(
                        "{i},{},{value},ok,{},{},{}\n",
                        s.sweep_key, r.quantity, r.value, r.source
                    ));
                }
            }
            Err(e) => {
                failures += 1;
                csv.push_str(&format!(
                    "{i},{},{value},failed,{},,\n",
                    s.sweep_key,
                    e.replace(',', ";")
                ));
            }
        }
    }
    rows.push(row("runs", s.sweep_values.len() as f64, None, "sweep"));
    rows.push(row("failed_runs", failures as f64, None, "sweep"));
    let outcome = Outcome {
        rows,
        files: vec![("sweep.csv".into(), csv)],
    };
    if failures > 0 {
        crate::write_files(&s.output_dir, &outcome.files).map_err(|e| Error::Io(e.to_string()))?;
        return Err(Error::RegimeMismatch(format!(
            "{failures} of {} sweep runs failed; see sweep.csv",
            s.sweep_values.len()
        )));
    }
    Ok(outcome)
}

//! One function per subcommand. Each writes its files and returns the paths.

use std::fmt;
use std::io;
use std::path::PathBuf;

use serde_json::{json, Map, Value};

use wbomd::borndyn::{gibbs_weights, md_correlation, md_equilibrium_density, VerletParams};
use wbomd::diag::{psi_recursion, residual_r0};
use wbomd::langevin::{
    estimate_weights_groundstate, langevin_average, merged_path_average, sample_path, ErgodicEstimate,
};
use wbomd::numerics::{trapezoid, LogLogFit};
use wbomd::quantum::{assemble_hamiltonian, equilibrium_density, solve_eigenproblem, CorrelationOperator};
use wbomd::weyl::{remainder_table, trace_identities};
use wbomd::{MatrixPotential, SpatialGrid};

use crate::config::{grid, ConfigError, ExperimentConfig};
use crate::output::{Cell, Output};

/// Largest boundary-to-peak ratio accepted for Weyl test symbols.
const MAX_DECAY_FLAG: f64 = 1e-8;

#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Numerical(wbomd::Error),
    Io(io::Error),
    /// Results were written but a reliability check failed.
    Unreliable(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(
                wbomd::Error::InvalidParameter { .. }
                | wbomd::Error::StepMismatch { .. }
                | wbomd::Error::Inadmissible { .. },
            ) => 2,
            CliError::Numerical(_) | CliError::Unreliable(_) => 3,
            CliError::Io(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "config error: {e}"),
            CliError::Numerical(e) => write!(f, "numerical error: {e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
            CliError::Unreliable(msg) => write!(f, "reliability check failed: {msg}"),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<wbomd::Error> for CliError {
    fn from(e: wbomd::Error) -> Self {
        CliError::Numerical(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Io(e)
    }
}

pub type CmdResult = Result<Vec<PathBuf>, CliError>;

/// `(L1, Linf)` distance of two densities on `grid`.
fn density_errors(a: &[f64], b: &[f64], grid: &SpatialGrid) -> (f64, f64) {
    let diff: Vec<f64> = a.iter().zip(b).map(|(u, v)| (u - v).abs()).collect();
    (trapezoid(&diff, grid.dx()), diff.iter().copied().fold(0.0, f64::max))
}

fn quantum_density(
    pot: &MatrixPotential,
    grid: &SpatialGrid,
    mass: f64,
    temperature: f64,
) -> wbomd::Result<Vec<f64>> {
    let spec = solve_eigenproblem(&assemble_hamiltonian(pot, grid, mass)?)?;
    equilibrium_density(&spec, temperature)
}

fn slope_json(xs: &[f64], ys: &[f64]) -> Option<Value> {
    if xs.len() < 2 {
        return None;
    }
    LogLogFit::fit(xs, ys).ok().map(|f| {
        json!({ "slope": f.slope, "intercept": f.intercept, "r_squared": f.r_squared })
    })
}

fn insert_slope(map: &mut Map<String, Value>, key: &str, xs: &[f64], ys: &[f64]) {
    if let Some(v) = slope_json(xs, ys) {
        map.insert(key.to_string(), v);
    }
}

fn verlet(cfg: &ExperimentConfig, tau: f64) -> Result<VerletParams, CliError> {
    let params = match cfg.verlet_dt {
        None => VerletParams::for_tau(tau),
        Some(dt) => VerletParams::new(dt, tau).map_err(|_| {
            CliError::Config(ConfigError {
                field: "verlet_dt".into(),
                message: format!("step {dt} does not divide tau = {tau}"),
            })
        })?,
    };
    Ok(params.with_escape_bound(cfg.md_escape_bound))
}

pub fn density(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let pot = cfg.potential()?;
    let g = grid("density_grid", cfg.density_grid)?;
    let t = cfg.density_temperature;
    let q = quantum_density(&pot, &g, cfg.mass, t)?;
    let md = md_equilibrium_density(&pot, t, &g)?;
    let (l1, linf) = density_errors(&q, &md, &g);
    let rows = |rho: &[f64]| -> Vec<Vec<Cell>> {
        g.nodes()
            .into_iter()
            .zip(rho)
            .map(|(x, r)| vec![x.into(), (*r).into()])
            .collect()
    };
    Ok(vec![
        out.csv("density_quantum.csv", &["x", "density"], &rows(&q))?,
        out.csv("density_md.csv", &["x", "density"], &rows(&md))?,
        out.json(
            "density_error.json",
            &json!({
                "mass": cfg.mass,
                "temperature": t,
                "delta": cfg.potential.delta,
                "intervals": g.intervals(),
                "l1": l1,
                "linf": linf,
            }),
        )?,
    ])
}

struct CorrelationRow {
    mass: f64,
    tau: f64,
    quantum: f64,
    md: f64,
    escaped: f64,
    reliable: bool,
}

fn correlation_rows(
    cfg: &ExperimentConfig,
    masses: &[f64],
    taus: &[f64],
) -> Result<Vec<CorrelationRow>, CliError> {
    let pot = cfg.potential()?;
    let qgrid = grid("correlation_grid", cfg.correlation_grid)?;
    let pg = cfg.phase_grid()?;
    let t = cfg.temperature;
    let params: Vec<VerletParams> = taus.iter().map(|&tau| verlet(cfg, tau)).collect::<Result<_, _>>()?;
    // the classical flow does not depend on M
    let md: Vec<_> = taus
        .iter()
        .zip(&params)
        .map(|(&tau, p)| md_correlation(&pot, t, tau, &pg, p))
        .collect::<wbomd::Result<_>>()?;
    let mut rows = Vec::new();
    for &mass in masses {
        let spec = solve_eigenproblem(&assemble_hamiltonian(&pot, &qgrid, mass)?)?;
        let op = CorrelationOperator::new(&spec, t)?;
        for (&tau, m) in taus.iter().zip(&md) {
            rows.push(CorrelationRow {
                mass,
                tau,
                quantum: op.evaluate(tau)?,
                md: m.value,
                escaped: m.escaped_fraction,
                reliable: m.reliable,
            });
        }
    }
    Ok(rows)
}

fn correlation_csv(out: &Output, name: &str, rows: &[CorrelationRow]) -> io::Result<PathBuf> {
    let cells: Vec<Vec<Cell>> = rows
        .iter()
        .map(|r| {
            vec![
                r.tau.into(),
                r.mass.into(),
                r.quantum.into(),
                r.md.into(),
                (r.quantum - r.md).abs().into(),
                r.escaped.into(),
            ]
        })
        .collect();
    out.csv(
        name,
        &["tau", "mass", "quantum", "md", "abs_error", "escaped_fraction"],
        &cells,
    )
}

fn reliability(rows: &[CorrelationRow]) -> Result<(), CliError> {
    match rows.iter().find(|r| !r.reliable) {
        Some(r) => Err(CliError::Unreliable(format!(
            "{:.1}% of MD trajectories escaped at tau = {}",
            100.0 * r.escaped,
            r.tau
        ))),
        None => Ok(()),
    }
}

pub fn correlate(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let rows = correlation_rows(cfg, &[cfg.mass], &cfg.taus)?;
    let path = correlation_csv(out, "correlation.csv", &rows)?;
    reliability(&rows)?;
    Ok(vec![path])
}

pub fn converge_correlation(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let masses = &cfg.correlation_masses;
    let rows = correlation_rows(cfg, masses, &cfg.convergence_taus)?;
    let linf: Vec<f64> = masses
        .iter()
        .map(|m| {
            rows.iter()
                .filter(|r| r.mass == *m)
                .map(|r| (r.quantum - r.md).abs())
                .fold(0.0, f64::max)
        })
        .collect();
    let mut summary = Map::new();
    summary.insert("masses".into(), json!(masses));
    summary.insert("taus".into(), json!(cfg.convergence_taus));
    summary.insert("linf".into(), json!(linf));
    insert_slope(&mut summary, "linf_fit", masses, &linf);
    let paths = vec![
        correlation_csv(out, "correlation_convergence.csv", &rows)?,
        out.json("correlation_convergence.json", &Value::Object(summary))?,
    ];
    reliability(&rows)?;
    Ok(paths)
}

pub fn converge_density(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let g = grid("density_convergence_grid", cfg.density_convergence_grid)?;
    let t = cfg.density_temperature;
    let masses = &cfg.density_masses;
    let mut rows = Vec::new();
    let mut per_delta = Vec::new();
    for &delta in &cfg.density_deltas {
        let pot = cfg.potential_with_delta(delta)?;
        let md = md_equilibrium_density(&pot, t, &g)?;
        let (mut l1s, mut linfs) = (Vec::new(), Vec::new());
        for &mass in masses {
            let q = quantum_density(&pot, &g, mass, t)?;
            let (l1, linf) = density_errors(&q, &md, &g);
            rows.push(vec![delta.into(), mass.into(), l1.into(), linf.into()]);
            l1s.push(l1);
            linfs.push(linf);
        }
        let mut entry = Map::new();
        entry.insert("delta".into(), json!(delta));
        entry.insert("l1".into(), json!(l1s));
        entry.insert("linf".into(), json!(linfs));
        insert_slope(&mut entry, "l1_fit", masses, &l1s);
        insert_slope(&mut entry, "linf_fit", masses, &linfs);
        per_delta.push(Value::Object(entry));
    }
    Ok(vec![
        out.csv("density_convergence.csv", &["delta", "mass", "l1", "linf"], &rows)?,
        out.json(
            "density_convergence.json",
            &json!({ "masses": masses, "intervals": g.intervals(), "by_delta": per_delta }),
        )?,
    ])
}

fn estimate_json(e: &ErgodicEstimate) -> Value {
    json!({ "mean": e.mean, "std_error": e.std_error, "effective_samples": e.effective_samples })
}

pub fn weights(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let pot = cfg.potential()?;
    let t = cfg.temperature;
    let quad = gibbs_weights(&pot, t, &grid("density_grid", cfg.density_grid)?)?;
    let est = estimate_weights_groundstate(&pot, t, &cfg.langevin_params())?;
    let agree: Vec<bool> = (0..pot.dim())
        .map(|j| (est.weights.q[j] - quad.q[j]).abs() <= 3.0 * est.std_error[j])
        .collect();
    Ok(vec![out.json(
        "weights.json",
        &json!({
            "temperature": t,
            "delta": cfg.potential.delta,
            "quadrature": { "q": quad.q },
            "langevin": {
                "q": est.weights.q,
                "std_error": est.std_error,
                "ratios": est.ratios.iter().map(estimate_json).collect::<Vec<_>>(),
            },
            "agree_within_3_std_errors": agree,
        }),
    )?])
}

pub fn sample_langevin(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let pot = cfg.potential()?;
    let params = cfg.langevin_params();
    let t = cfg.temperature;
    let mut rows = Vec::new();
    let mut push = |obs: &str, surface: &str, e: ErgodicEstimate| {
        rows.push(vec![
            obs.into(),
            surface.into(),
            e.mean.into(),
            e.std_error.into(),
            e.effective_samples.into(),
        ]);
    };
    let x2 = |z: wbomd::borndyn::PhasePoint| z.x * z.x;
    let p2 = |z: wbomd::borndyn::PhasePoint| z.p * z.p;
    for j in 0..pot.dim() {
        let label = (j + 1).to_string();
        push("x2", &label, langevin_average(&pot, j, &x2, &params)?);
        push("p2", &label, langevin_average(&pot, j, &p2, &params)?);
    }
    push("x2", "merged", merged_path_average(&pot, t, &x2, &params)?);
    push("p2", "merged", merged_path_average(&pot, t, &p2, &params)?);

    let thin = cfg.langevin.thin;
    let path = sample_path(&pot, 0, &params, 0, thin)?;
    let samples: Vec<Vec<Cell>> = path
        .iter()
        .enumerate()
        .map(|(i, z)| vec![(params.burn_in + (i + 1) * thin).into(), z.x.into(), z.p.into()])
        .collect();
    Ok(vec![
        out.csv(
            "langevin_estimates.csv",
            &["observable", "surface", "mean", "std_error", "effective_samples"],
            &rows,
        )?,
        out.csv("langevin_path.csv", &["step", "x", "p"], &samples)?,
    ])
}

pub fn diag_check(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let d = &cfg.diag;
    let pot = MatrixPotential::three_level_crossing(d.coupling)?;
    let g = grid("diag.grid", d.grid)?;
    let names = ["psi_2_minus_1", "psi_3_minus_2", "lambda_2_minus_1", "r0_kappa_2"];
    let mut series = vec![Vec::new(); names.len()];
    let mut rows = Vec::new();
    for &m in &d.masses {
        let it = psi_recursion(&pot, m, d.kappa, &g)?;
        let two = psi_recursion(&pot, m, 2, &g)?;
        let values = [
            it.psi_steps()[0],
            it.psi_steps()[1],
            it.lambda_steps()[0],
            residual_r0(&two, &g)?.r0_sup,
        ];
        for (k, v) in values.into_iter().enumerate() {
            rows.push(vec![m.into(), names[k].into(), v.into()]);
            series[k].push(v);
        }
    }
    let mut fits = Map::new();
    for (name, ys) in names.iter().zip(&series) {
        insert_slope(&mut fits, name, &d.masses, ys);
    }
    Ok(vec![
        out.csv("diag_orders.csv", &["mass", "quantity", "sup_norm"], &rows)?,
        out.json("diag_orders.json", &json!({ "masses": d.masses, "fits": fits }))?,
    ])
}

pub fn weyl_check(cfg: &ExperimentConfig, out: &Output) -> CmdResult {
    let w = &cfg.weyl;
    let table = remainder_table(&w.masses, &w.orders)?;
    let rows: Vec<Vec<Cell>> = table
        .iter()
        .map(|r| vec![r.order.into(), r.mass.into(), r.norm.into()])
        .collect();
    let traces = w
        .masses
        .iter()
        .map(|&m| trace_identities(m))
        .collect::<wbomd::Result<Vec<_>>>()?;
    let trace_rows: Vec<Vec<Cell>> = traces
        .iter()
        .map(|t| {
            vec![
                t.mass.into(),
                t.trace_error.into(),
                t.composition_error.into(),
                t.analytic_error.into(),
                t.cyclicity_error.into(),
                t.hermiticity_error.into(),
                t.decay_flag.into(),
            ]
        })
        .collect();
    let mut fits = Map::new();
    for &order in &w.orders {
        let norms: Vec<f64> = table.iter().filter(|r| r.order == order).map(|r| r.norm).collect();
        if let Some(mut v) = slope_json(&w.masses, &norms) {
            v["target"] = json!(-((order + 1) as f64) / 2.0);
            fits.insert(format!("m{order}"), v);
        }
    }
    let worst = |f: fn(&wbomd::weyl::TraceReport) -> f64| traces.iter().map(f).fold(0.0, f64::max);
    let decay = worst(|t| t.decay_flag);
    let paths = vec![
        out.csv("weyl_orders.csv", &["m", "mass", "remainder_l2"], &rows)?,
        out.csv(
            "weyl_traces.csv",
            &[
                "mass",
                "trace_error",
                "composition_error",
                "analytic_error",
                "cyclicity_error",
                "hermiticity_error",
                "decay_flag",
            ],
            &trace_rows,
        )?,
        out.json(
            "weyl_orders.json",
            &json!({
                "masses": w.masses,
                "fits": fits,
                "max_trace_error": worst(|t| t.trace_error),
                "max_composition_error": worst(|t| t.composition_error),
                "max_decay_flag": decay,
            }),
        )?,
    ];
    if decay >= MAX_DECAY_FLAG {
        return Err(CliError::Unreliable(format!(
            "test symbols do not decay at the grid boundary (flag {decay:e})"
        )));
    }
    Ok(paths)
}

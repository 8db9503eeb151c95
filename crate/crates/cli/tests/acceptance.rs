//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.
//!
//! Criteria that correspond to a subcommand run the `wbomd` binary and read
//! its JSON/CSV output; the rest call the library directly.

use std::fs;
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use serde_json::Value;

use wbomd::borndyn::{gibbs_weights, verlet_trajectory, PhasePoint, VerletParams};
use wbomd::diag::{psi_recursion, residual_r0};
use wbomd::langevin::{estimate_weights_groundstate, langevin_average, merged_path_average, LangevinParams};
use wbomd::numerics::LogLogFit;
use wbomd::weyl::{remainder_table, trace_identities};
use wbomd::{MatrixPotential, SpatialGrid, Surface};

const T: f64 = 1.9947;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn reference_potential() -> MatrixPotential {
    MatrixPotential::avoided_crossing(0.1, 1.0, 10.0).unwrap()
}

fn simpson(f: impl Fn(f64) -> f64, lo: f64, hi: f64, n: usize) -> f64 {
    let h = (hi - lo) / n as f64;
    let mut s = f(lo) + f(hi);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(lo + i as f64 * h);
    }
    s * h / 3.0
}

/// `(Z_j, <x^2>_j)` for surface `j` on `[-l, l]`.
fn surface_moments(pot: &MatrixPotential, j: usize, t: f64, l: f64) -> (f64, f64) {
    let w = |x: f64| (-pot.surface(j, x).unwrap() / t).exp();
    let z = simpson(w, -l, l, 40_000);
    (z, simpson(|x| x * x * w(x), -l, l, 40_000) / z)
}

/// Runs the binary with its outputs in `out`; `config` is written next to it.
fn wbomd(args: &[&str], config: Option<&str>, out: &Path) -> Result<(), String> {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_wbomd"));
    cmd.args(args).arg("--out").arg(out);
    if let Some(json) = config {
        let path = out.with_extension("json");
        fs::create_dir_all(path.parent().unwrap()).unwrap();
        fs::write(&path, json).unwrap();
        cmd.arg("--config").arg(path);
    }
    let status = cmd.output().map_err(|e| e.to_string())?;
    if status.status.success() {
        Ok(())
    } else {
        Err(format!(
            "exit {:?}: {}",
            status.status.code(),
            String::from_utf8_lossy(&status.stderr).trim()
        ))
    }
}

fn read_json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn fit_of(v: &Value) -> (f64, f64) {
    (v["slope"].as_f64().unwrap(), v["r_squared"].as_f64().unwrap())
}

fn c1_weights(_: &Path) -> Outcome {
    let w = gibbs_weights(&reference_potential(), T, &SpatialGrid::symmetric(8.0, 16_000).unwrap()).unwrap();
    let q1 = w.q[0];
    outcome((0.79..=0.81).contains(&q1), format!("q1 = {q1:.5}"))
}

fn c2_density(dir: &Path) -> Outcome {
    let out = dir.join("c2");
    if let Err(e) = wbomd(&["density", "--preset", "paper"], None, &out) {
        return outcome(false, e);
    }
    let v = read_json(&out.join("density_error.json"));
    let linf = v["linf"].as_f64().unwrap();
    outcome(linf < 5e-3, format!("Linf = {linf:.3e} at N = {}", v["intervals"]))
}

fn c3_density_order(dir: &Path) -> Outcome {
    let out = dir.join("c3");
    if let Err(e) = wbomd(&["converge-density", "--preset", "paper"], None, &out) {
        return outcome(false, e);
    }
    let v = read_json(&out.join("density_convergence.json"));
    let mut pass = true;
    let mut slopes = Vec::new();
    let mut detail = Vec::new();
    for entry in v["by_delta"].as_array().unwrap() {
        for norm in ["l1_fit", "linf_fit"] {
            let (s, r2) = fit_of(&entry[norm]);
            pass &= (-1.2..=-0.8).contains(&s) && r2 >= 0.98;
            slopes.push(s);
            detail.push(format!("delta={} {norm} {s:.3} (R2 {r2:.4})", entry["delta"]));
        }
    }
    // slopes for the two gaps should agree norm by norm
    let spread = (slopes[0] - slopes[2]).abs().max((slopes[1] - slopes[3]).abs());
    pass &= spread < 0.1;
    outcome(pass, format!("{}; delta spread {spread:.3}", detail.join(", ")))
}

fn c4_correlation_order(dir: &Path) -> Outcome {
    let out = dir.join("c4");
    if let Err(e) = wbomd(&["converge-correlation", "--preset", "desk"], None, &out) {
        return outcome(false, e);
    }
    let v = read_json(&out.join("correlation_convergence.json"));
    let (s, r2) = fit_of(&v["linf_fit"]);
    outcome(
        (-1.25..=-0.75).contains(&s),
        format!("Linf slope {s:.3} (R2 {r2:.4}), errors {}", v["linf"]),
    )
}

fn c5_zero_lag(dir: &Path) -> Outcome {
    let out = dir.join("c5");
    let cfg = r#"{"mass": 1000, "taus": [0.0]}"#;
    if let Err(e) = wbomd(&["correlate", "--preset", "desk"], Some(cfg), &out) {
        return outcome(false, e);
    }
    let text = fs::read_to_string(out.join("correlation.csv")).unwrap();
    let row: Vec<f64> = text
        .lines()
        .nth(2)
        .unwrap()
        .split(',')
        .map(|c| c.parse().unwrap())
        .collect();
    let (quantum, md) = (row[2], row[3]);
    let pot = reference_potential();
    let (z1, a1) = surface_moments(&pot, 0, T, 4.5);
    let (z2, a2) = surface_moments(&pot, 1, T, 4.5);
    let oracle = (z1 * a1 + z2 * a2) / (z1 + z2);
    let (eq, em) = ((quantum - oracle).abs() / oracle, (md - oracle).abs() / oracle);
    outcome(
        eq < 1e-3 && em < 1e-3,
        format!("<x^2> oracle {oracle:.6}: quantum rel {eq:.2e}, md rel {em:.2e}"),
    )
}

fn c6_integrator(_: &Path) -> Outcome {
    let harmonic = MatrixPotential::from_surfaces(vec![Surface::harmonic(1.0)]).unwrap();
    let tau = 0.2;
    let err = |n: usize| {
        let p = VerletParams::new(tau / n as f64, tau).unwrap();
        let e = verlet_trajectory(&harmonic, 0, PhasePoint::new(1.0, 0.0), tau, &p).unwrap();
        (e.point.x - tau.cos()).abs().max((e.point.p + tau.sin()).abs())
    };
    let order = err(20) / err(40);

    let pot = reference_potential();
    let z0 = PhasePoint::new(0.7, 0.4);
    let p = VerletParams::for_tau(tau);
    let mut rev = 0.0f64;
    for &(x, v) in &[(0.7, 0.4), (-1.3, 1.1), (0.02, -2.0), (2.1, 0.0)] {
        let fwd = verlet_trajectory(&pot, 0, PhasePoint::new(x, v), tau, &p).unwrap();
        let back = verlet_trajectory(&pot, 0, fwd.point, -tau, &p).unwrap();
        rev = rev.max((back.point.x - x).abs()).max((back.point.p - v).abs());
    }
    let drift = |n: usize| {
        let p = VerletParams::new(tau / n as f64, tau).unwrap();
        let e = verlet_trajectory(&pot, 0, z0, tau, &p).unwrap();
        (e.point.energy(&pot, 0).unwrap() - z0.energy(&pot, 0).unwrap()).abs()
    };
    let drift_ratio = drift(100) / drift(200);
    outcome(
        (order / 4.0 - 1.0).abs() < 0.25 && rev < 1e-10 && drift_ratio > 3.0 && drift_ratio < 5.0,
        format!("error ratio {order:.3}, reversibility {rev:.1e}, drift ratio {drift_ratio:.3}"),
    )
}

fn c7_diag(_: &Path) -> Outcome {
    let pot = MatrixPotential::three_level_crossing(0.5).unwrap();
    let grid = SpatialGrid::symmetric(3.0, 600).unwrap();
    let masses = [1e3, 2e3, 4e3, 8e3];
    let (mut s1, mut s2, mut r0) = (vec![], vec![], vec![]);
    for m in masses {
        let it = psi_recursion(&pot, m, 3, &grid).unwrap();
        s1.push(it.psi_steps()[0]);
        s2.push(it.psi_steps()[1]);
        let two = psi_recursion(&pot, m, 2, &grid).unwrap();
        r0.push(residual_r0(&two, &grid).unwrap().r0_sup);
    }
    let fit = |y: &[f64]| LogLogFit::fit(&masses, y).unwrap().slope;
    let (a, b, c) = (fit(&s1), fit(&s2), fit(&r0));
    outcome(
        (a + 1.0).abs() < 0.1 && (b + 2.0).abs() < 0.15 && (c + 2.0).abs() < 0.2,
        format!("slopes psi2-psi1 {a:.3}, psi3-psi2 {b:.3}, r0 {c:.3}"),
    )
}

fn c8_weyl(_: &Path) -> Outcome {
    let masses = [8.0, 16.0, 32.0, 64.0];
    let mut trace = 0.0f64;
    let mut comp = 0.0f64;
    for m in [8.0, 64.0] {
        let r = trace_identities(m).unwrap();
        trace = trace.max(r.trace_error).max(r.analytic_error);
        comp = comp.max(r.composition_error);
    }
    let rows = remainder_table(&masses, &[0, 1, 2]).unwrap();
    let mut pass = trace < 1e-6 && comp < 1e-5;
    let mut slopes = Vec::new();
    for m in 0..3 {
        let norms: Vec<f64> = rows.iter().filter(|r| r.order == m).map(|r| r.norm).collect();
        let s = LogLogFit::fit(&masses, &norms).unwrap().slope;
        pass &= (s + (m + 1) as f64 / 2.0).abs() < 0.2;
        slopes.push(format!("m={m} {s:.3}"));
    }
    outcome(
        pass,
        format!("trace {trace:.1e}, composition {comp:.1e}, remainder slopes {}", slopes.join(", ")),
    )
}

fn c9_langevin(_: &Path) -> Outcome {
    let harmonic = MatrixPotential::from_surfaces(vec![Surface::harmonic(1.0)]).unwrap();
    let hp = LangevinParams::new(1.0, 1.0, 1e-2, 1_000, 201_000, 1).with_paths(8);
    let p2 = langevin_average(&harmonic, 0, &|z| z.p * z.p, &hp).unwrap();
    let x2 = langevin_average(&harmonic, 0, &|z| z.x * z.x, &hp).unwrap();

    let pot = reference_potential();
    let lp = LangevinParams::new(1.0, T, 2e-3, 5_000, 505_000, 2).with_paths(8);
    let w = estimate_weights_groundstate(&pot, T, &lp).unwrap();
    let (z1, a1) = surface_moments(&pot, 0, T, 8.0);
    let (z2, a2) = surface_moments(&pot, 1, T, 8.0);
    let q1 = z1 / (z1 + z2);
    let oracle = q1 * a1 + (1.0 - q1) * a2;
    let merged = merged_path_average(&pot, T, &|z| z.x * z.x, &lp).unwrap();

    let checks = [
        p2.covers(1.0, 3.0),
        x2.covers(1.0, 3.0),
        (w.weights.q[0] - q1).abs() <= 3.0 * w.std_error[0],
        merged.covers(oracle, 3.0),
    ];
    outcome(
        checks.iter().all(|c| *c),
        format!(
            "<p^2> {:.4}+-{:.4}, <x^2> {:.4}+-{:.4}, q1 {:.4}+-{:.4} vs {q1:.4}, merged <x^2> {:.4}+-{:.4} vs {oracle:.4}",
            p2.mean, p2.std_error, x2.mean, x2.std_error, w.weights.q[0], w.std_error[0], merged.mean, merged.std_error
        ),
    )
}

/// Small enough that all eight subcommands run in seconds.
const TINY: &str = r#"{
  "mass": 50,
  "density_grid": {"x_min": -6, "x_max": 6, "intervals": 200},
  "density_masses": [25, 50],
  "density_convergence_grid": {"x_min": -6, "x_max": 6, "intervals": 200},
  "correlation_grid": {"x_min": -4.5, "x_max": 4.5, "intervals": 200},
  "phase_grid": {"half_width": 4.5, "intervals": 40},
  "taus": [0.0, 0.1],
  "correlation_masses": [25, 50],
  "langevin": {"steps": 25000, "paths": 8, "burn_in": 1000, "thin": 50},
  "diag": {"masses": [1000, 2000], "grid": {"x_min": -3, "x_max": 3, "intervals": 200}},
  "weyl": {"masses": [4, 8], "orders": [0, 1]}
}"#;

const COMMANDS: [&str; 8] = [
    "density",
    "correlate",
    "weights",
    "sample-langevin",
    "diag-check",
    "weyl-check",
    "converge-density",
    "converge-correlation",
];

fn c10_determinism(dir: &Path) -> Outcome {
    let mut compared = 0;
    for cmd in COMMANDS {
        let mut reference: Option<Vec<(String, Vec<u8>)>> = None;
        for threads in ["1", "4", "8"] {
            let out = dir.join(format!("c10-{cmd}-{threads}"));
            if let Err(e) = wbomd(&[cmd, "--preset", "desk", "--seed", "7", "--threads", threads], Some(TINY), &out) {
                return outcome(false, format!("{cmd} --threads {threads}: {e}"));
            }
            let mut files: Vec<(String, Vec<u8>)> = fs::read_dir(&out)
                .unwrap()
                .map(|e| e.unwrap().path())
                .filter(|p| p.extension().is_some_and(|x| x == "csv" || x == "json"))
                .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
                .collect();
            files.sort();
            match &reference {
                None => reference = Some(files),
                Some(r) if *r != files => {
                    return outcome(false, format!("{cmd}: output differs at --threads {threads}"));
                }
                Some(_) => compared += files.len(),
            }
        }
    }
    outcome(true, format!("{} commands, {compared} files identical across 1/4/8 threads", COMMANDS.len()))
}

type Criterion = (&'static str, Duration, fn(&Path) -> Outcome);

fn main() {
    let criteria: [Criterion; 10] = [
        ("1 weight reproduction", Duration::from_secs(1), c1_weights),
        ("2 density agreement", Duration::from_secs(60), c2_density),
        ("3 density convergence order", Duration::from_secs(600), c3_density_order),
        ("4 correlation convergence order", Duration::from_secs(900), c4_correlation_order),
        ("5 zero-lag cross-check", Duration::from_secs(120), c5_zero_lag),
        ("6 integrator properties", Duration::from_secs(60), c6_integrator),
        ("7 diagonalization orders", Duration::from_secs(60), c7_diag),
        ("8 Weyl identities", Duration::from_secs(300), c8_weyl),
        ("9 Langevin statistics", Duration::from_secs(300), c9_langevin),
        ("10 determinism", Duration::from_secs(900), c10_determinism),
    ];
    let filter: Vec<String> = std::env::args().skip(1).filter(|a| !a.starts_with('-')).collect();
    let dir = tempfile::tempdir().unwrap();
    let mut failed = 0;
    for (name, budget, run) in criteria {
        if !filter.is_empty() && !filter.iter().any(|f| name.contains(f.as_str())) {
            continue;
        }
        let start = Instant::now();
        let o = run(dir.path());
        let elapsed = start.elapsed();
        let pass = o.pass && elapsed <= budget;
        failed += !pass as usize;
        println!(
            "{} [{name}] {} ({:.1}s of {}s)",
            if pass { "PASS" } else { "FAIL" },
            o.detail,
            elapsed.as_secs_f64(),
            budget.as_secs()
        );
    }
    if failed > 0 {
        println!("{failed} criteria failed");
        std::process::exit(1);
    }
}

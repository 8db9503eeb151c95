//! Weighted Born-Oppenheimer dynamics: per-surface Hamiltonian flows, Gibbs
//! surface weights, and phase-space quadrature of equilibrium and correlation
//! observables.

use rayon::prelude::*;

use crate::error::{ensure_positive, Error, Result};
use crate::grid::{PhaseSpaceGrid, SpatialGrid};
use crate::model::MatrixPotential;
use crate::numerics::{pairwise_sum, trapezoid};

/// Default upper bound on the Verlet step.
pub const MAX_DEFAULT_DT: f64 = 1e-3;

/// Minimum number of steps used by [`VerletParams::for_tau`].
pub const MIN_DEFAULT_STEPS: usize = 200;

/// Escape fraction above which a correlation estimate is flagged unreliable.
pub const MAX_ESCAPE_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PhasePoint {
    pub x: f64,
    pub p: f64,
}

impl PhasePoint {
    pub fn new(x: f64, p: f64) -> Self {
        Self { x, p }
    }

    /// `p^2/2 + lambda_j(x)`.
    pub fn energy(&self, pot: &MatrixPotential, j: usize) -> Result<f64> {
        Ok(0.5 * self.p * self.p + pot.surface(j, self.x)?)
    }
}

/// `-d lambda_j / dx`.
pub fn surface_force(pot: &MatrixPotential, j: usize, x: f64) -> Result<f64> {
    Ok(-pot.surface_derivative(j, x)?)
}

/// Step size and count for one trajectory of length `|tau|`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VerletParams {
    pub dt: f64,
    pub n_steps: usize,
    /// Trajectories with `|x|` beyond this are stopped and flagged.
    pub escape_bound: f64,
}

impl VerletParams {
    /// Fixed step `dt`; `|tau|` must be an integer multiple of it.
    pub fn new(dt: f64, tau: f64) -> Result<Self> {
        ensure_positive("dt", dt)?;
        let steps = (tau.abs() / dt).round();
        if (steps * dt - tau.abs()).abs() > 1e-12 * tau.abs().max(1.0) {
            return Err(Error::StepMismatch { tau, dt });
        }
        Ok(Self {
            dt,
            n_steps: steps as usize,
            escape_bound: 10.0,
        })
    }

    /// Default step: at most [`MAX_DEFAULT_DT`] and at least [`MIN_DEFAULT_STEPS`]
    /// steps, shrunk so that it divides `|tau|` exactly.
    pub fn for_tau(tau: f64) -> Self {
        let t = tau.abs();
        let steps = ((t / MAX_DEFAULT_DT - 1e-9).ceil() as usize).max(MIN_DEFAULT_STEPS);
        Self {
            dt: if t == 0.0 { MAX_DEFAULT_DT } else { t / steps as f64 },
            n_steps: if t == 0.0 { 0 } else { steps },
            escape_bound: 10.0,
        }
    }

    pub fn with_escape_bound(mut self, bound: f64) -> Self {
        self.escape_bound = bound;
        self
    }

    fn check(&self, tau: f64) -> Result<()> {
        ensure_positive("dt", self.dt)?;
        if (self.n_steps as f64 * self.dt - tau.abs()).abs() > 1e-12 * tau.abs().max(1.0) {
            return Err(Error::StepMismatch { tau, dt: self.dt });
        }
        Ok(())
    }
}

/// End point of a trajectory; `escaped` marks a stopped trajectory whose
/// `point` is the last state inside the escape bound.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryEnd {
    pub point: PhasePoint,
    pub escaped: bool,
}

/// Position Verlet on surface `j`: half drift, kick at the midpoint, half drift.
/// Negative `tau` integrates backwards in time.
pub fn verlet_trajectory(
    pot: &MatrixPotential,
    j: usize,
    z0: PhasePoint,
    tau: f64,
    params: &VerletParams,
) -> Result<TrajectoryEnd> {
    params.check(tau)?;
    let h = params.dt.copysign(if tau < 0.0 { -1.0 } else { 1.0 });
    let (mut x, mut p) = (z0.x, z0.p);
    for _ in 0..params.n_steps {
        let xm = x + 0.5 * h * p;
        let pn = p + h * surface_force(pot, j, xm)?;
        let xn = xm + 0.5 * h * pn;
        if xn.is_nan() || xn.abs() > params.escape_bound {
            return Ok(TrajectoryEnd {
                point: PhasePoint::new(x, p),
                escaped: true,
            });
        }
        x = xn;
        p = pn;
    }
    Ok(TrajectoryEnd {
        point: PhasePoint::new(x, p),
        escaped: false,
    })
}

/// Surface occupation probabilities `q_j = Z_j / sum_k Z_k`.
///
/// `partition[j]` is the trapezoidal `int e^{-(lambda_j(x) - shift)/T} dx`; the
/// shared momentum Gaussian cancels from `q`.
#[derive(Debug, Clone, PartialEq)]
pub struct GibbsWeights {
    pub q: Vec<f64>,
    pub partition: Vec<f64>,
    pub energy_shift: f64,
}

/// Boltzmann factors `e^{-(lambda_j(x_k) - shift)/T}`, indexed `[j][k]`, with
/// `shift = min_{j,k} lambda_j(x_k)`.
fn boltzmann_factors(
    pot: &MatrixPotential,
    temperature: f64,
    grid: &SpatialGrid,
) -> Result<(Vec<Vec<f64>>, f64)> {
    ensure_positive("temperature", temperature)?;
    let d = pot.dim();
    let surfaces: Vec<Vec<f64>> = grid.nodes().into_iter().map(|x| pot.surfaces(x)).collect();
    let shift = surfaces
        .iter()
        .flatten()
        .copied()
        .fold(f64::INFINITY, f64::min);
    if !shift.is_finite() {
        return Err(Error::NonFinitePotential { x: f64::NAN });
    }
    let factors = (0..d)
        .map(|j| {
            surfaces
                .iter()
                .map(|l| (-(l[j] - shift) / temperature).exp())
                .collect()
        })
        .collect();
    Ok((factors, shift))
}

pub fn gibbs_weights(
    pot: &MatrixPotential,
    temperature: f64,
    grid: &SpatialGrid,
) -> Result<GibbsWeights> {
    let (factors, shift) = boltzmann_factors(pot, temperature, grid)?;
    let partition: Vec<f64> = factors.iter().map(|f| trapezoid(f, grid.dx())).collect();
    let total = pairwise_sum(&partition);
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::PartitionUnderflow { temperature });
    }
    Ok(GibbsWeights {
        q: partition.iter().map(|z| z / total).collect(),
        partition,
        energy_shift: shift,
    })
}

/// `sum_j q_j e^{-lambda_j/T} / Z_j` at the grid nodes.
pub fn md_equilibrium_density(
    pot: &MatrixPotential,
    temperature: f64,
    grid: &SpatialGrid,
) -> Result<Vec<f64>> {
    let (factors, _) = boltzmann_factors(pot, temperature, grid)?;
    let total = pairwise_sum(
        &factors
            .iter()
            .map(|f| trapezoid(f, grid.dx()))
            .collect::<Vec<_>>(),
    );
    if !(total.is_finite() && total > 0.0) {
        return Err(Error::PartitionUnderflow { temperature });
    }
    Ok((0..grid.len())
        .map(|k| factors.iter().map(|f| f[k]).sum::<f64>() / total)
        .collect())
}

/// Result of a phase-space correlation quadrature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MdCorrelation {
    pub tau: f64,
    pub value: f64,
    pub escaped_fraction: f64,
    /// Largest Boltzmann factor on the boundary of the phase grid, relative to the interior maximum.
    pub boundary_weight: f64,
    pub reliable: bool,
}

/// `sum_j q_j <x_tau^j x_0>_j` by trapezoidal quadrature over initial points of
/// `phase_grid`, with `x_tau^j` from [`verlet_trajectory`] on surface `j`.
///
/// Rows of the grid are processed in parallel and reduced in index order, so
/// the value does not depend on the thread count.
pub fn md_correlation(
    pot: &MatrixPotential,
    temperature: f64,
    tau: f64,
    phase_grid: &PhaseSpaceGrid,
    params: &VerletParams,
) -> Result<MdCorrelation> {
    params.check(tau)?;
    let (factors, _) = boltzmann_factors(pot, temperature, &phase_grid.x)?;
    let d = pot.dim();
    let xs = phase_grid.x.nodes();
    let ps = phase_grid.p.nodes();
    let wx = phase_grid.x.trapezoid_weights();
    let wp = phase_grid.p.trapezoid_weights();
    let kinetic: Vec<f64> = ps.iter().map(|p| (-0.5 * p * p / temperature).exp()).collect();

    struct Row {
        num: f64,
        den: f64,
        escaped: usize,
    }

    let rows = (0..xs.len())
        .into_par_iter()
        .map(|k| -> Result<Row> {
            let mut num = Vec::with_capacity(d * ps.len());
            let mut den = Vec::with_capacity(d * ps.len());
            let mut escaped = 0;
            for (j, f) in factors.iter().enumerate() {
                for (l, &p) in ps.iter().enumerate() {
                    let w = wx[k] * wp[l] * f[k] * kinetic[l];
                    let end = verlet_trajectory(pot, j, PhasePoint::new(xs[k], p), tau, params)?;
                    escaped += end.escaped as usize;
                    num.push(w * end.point.x * xs[k]);
                    den.push(w);
                }
            }
            Ok(Row {
                num: pairwise_sum(&num),
                den: pairwise_sum(&den),
                escaped,
            })
        })
        .collect::<Result<Vec<Row>>>()?;

    let num = pairwise_sum(&rows.iter().map(|r| r.num).collect::<Vec<_>>());
    let den = pairwise_sum(&rows.iter().map(|r| r.den).collect::<Vec<_>>());
    if !(den.is_finite() && den > 0.0) {
        return Err(Error::PartitionUnderflow { temperature });
    }
    let escaped: usize = rows.iter().map(|r| r.escaped).sum();
    let escaped_fraction = escaped as f64 / (d * phase_grid.len()) as f64;
    Ok(MdCorrelation {
        tau,
        value: num / den,
        escaped_fraction,
        boundary_weight: boundary_weight(&factors, &kinetic),
        reliable: escaped_fraction <= MAX_ESCAPE_FRACTION,
    })
}

/// [`md_correlation`] for several `tau`, each with the default step [`VerletParams::for_tau`].
pub fn md_correlation_curve(
    pot: &MatrixPotential,
    temperature: f64,
    taus: &[f64],
    phase_grid: &PhaseSpaceGrid,
) -> Result<Vec<MdCorrelation>> {
    taus.iter()
        .map(|&tau| md_correlation(pot, temperature, tau, phase_grid, &VerletParams::for_tau(tau)))
        .collect()
}

fn boundary_weight(factors: &[Vec<f64>], kinetic: &[f64]) -> f64 {
    let edge = |v: &[f64]| v[0].max(v[v.len() - 1]);
    let peak = |v: &[f64]| v.iter().copied().fold(0.0, f64::max);
    let kin_peak = peak(kinetic);
    let mut worst = 0.0f64;
    let mut top = 0.0f64;
    for f in factors {
        top = top.max(peak(f) * kin_peak);
        worst = worst.max(edge(f) * kin_peak).max(peak(f) * edge(kinetic));
    }
    if top > 0.0 {
        worst / top
    } else {
        0.0
    }
}

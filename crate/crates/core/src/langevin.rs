//! Ergodic averages along Langevin paths
//! `dx = p dt`, `dp = -lambda'(x) dt - alpha p dt + sqrt(2 alpha T) dW`.
//!
//! Each step is the splitting half kick, half drift, exact Ornstein-Uhlenbeck
//! momentum update, half drift, half kick. Path `i` draws its noise from a
//! ChaCha8 stream selected by `(seed, i)`, so results do not depend on how
//! paths are scheduled.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;

use crate::borndyn::{GibbsWeights, PhasePoint};
use crate::error::{ensure_positive, invalid, Error, Result};
use crate::model::MatrixPotential;
use crate::numerics::soft_min;

pub const MIN_BATCHES: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LangevinParams {
    /// Friction `alpha`.
    pub friction: f64,
    pub temperature: f64,
    pub dt: f64,
    /// Steps discarded before averaging.
    pub burn_in: usize,
    /// Total steps per path, burn-in included.
    pub steps: usize,
    pub seed: u64,
    /// Batches per path for the batch-means error.
    pub batches: usize,
    /// Independent paths, each on its own RNG stream.
    pub paths: usize,
    pub start: PhasePoint,
}

impl LangevinParams {
    pub fn new(friction: f64, temperature: f64, dt: f64, burn_in: usize, steps: usize, seed: u64) -> Self {
        Self {
            friction,
            temperature,
            dt,
            burn_in,
            steps,
            seed,
            batches: MIN_BATCHES,
            paths: 1,
            start: PhasePoint::new(0.0, 0.0),
        }
    }

    pub fn with_paths(mut self, paths: usize) -> Self {
        self.paths = paths;
        self
    }

    pub fn with_batches(mut self, batches: usize) -> Self {
        self.batches = batches;
        self
    }

    pub fn with_start(mut self, start: PhasePoint) -> Self {
        self.start = start;
        self
    }

    pub fn validate(&self) -> Result<()> {
        ensure_positive("friction", self.friction)?;
        ensure_positive("temperature", self.temperature)?;
        ensure_positive("dt", self.dt)?;
        if self.steps <= self.burn_in {
            return Err(invalid("steps", "total steps must exceed burn-in"));
        }
        if self.paths == 0 {
            return Err(invalid("paths", "need at least one path"));
        }
        if self.batches * self.paths < MIN_BATCHES {
            return Err(invalid(
                "batches",
                format!("need at least {MIN_BATCHES} batches over all paths"),
            ));
        }
        if self.steps - self.burn_in < self.batches {
            return Err(invalid("batches", "fewer samples than batches"));
        }
        if !(self.start.x.is_finite() && self.start.p.is_finite()) {
            return Err(invalid("start", "must be finite"));
        }
        Ok(())
    }

    pub fn samples_per_path(&self) -> usize {
        self.steps - self.burn_in
    }
}

/// Time average with a batch-means standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErgodicEstimate {
    pub mean: f64,
    pub std_error: f64,
    /// `var(observable) / std_error^2`; the sample count when the error vanishes.
    pub effective_samples: f64,
}

impl ErgodicEstimate {
    /// `|self - other|` within `k` combined standard errors.
    pub fn agrees_with(&self, other: &ErgodicEstimate, k: f64) -> bool {
        (self.mean - other.mean).abs() <= k * self.std_error.hypot(other.std_error)
    }

    /// `|self - value|` within `k` standard errors.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.std_error
    }
}

/// Scalar potential driving one path.
trait Drive: Sync {
    fn force(&self, x: f64) -> Result<f64>;
}

struct OnSurface<'a> {
    pot: &'a MatrixPotential,
    j: usize,
}

impl Drive for OnSurface<'_> {
    fn force(&self, x: f64) -> Result<f64> {
        Ok(-self.pot.surface_derivative(self.j, x)?)
    }
}

impl Drive for MergedPotential {
    fn force(&self, x: f64) -> Result<f64> {
        Ok(-self.derivative(x)?)
    }
}

/// Runs path `path_id` and calls `visit(step, z)` after every step past burn-in.
fn run_path(
    drive: &dyn Drive,
    params: &LangevinParams,
    path_id: u64,
    mut visit: impl FnMut(usize, PhasePoint),
) -> Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    rng.set_stream(path_id);
    let h = params.dt;
    let c = (-params.friction * h).exp();
    let sigma = (params.temperature * (1.0 - c * c)).sqrt();
    let (mut x, mut p) = (params.start.x, params.start.p);
    let mut f = drive.force(x)?;
    for step in 0..params.steps {
        p += 0.5 * h * f;
        x += 0.5 * h * p;
        let xi: f64 = rng.sample(StandardNormal);
        p = c * p + sigma * xi;
        x += 0.5 * h * p;
        f = drive.force(x)?;
        p += 0.5 * h * f;
        if !(x.is_finite() && p.is_finite()) {
            return Err(Error::NonFiniteState { step });
        }
        if step >= params.burn_in {
            visit(step - params.burn_in, PhasePoint::new(x, p));
        }
    }
    Ok(())
}

/// Batch sums of `m` observables over one path: `[batch][component]`, plus
/// per-component sums of squares.
struct PathStats {
    batch_means: Vec<Vec<f64>>,
    sum_sq: Vec<f64>,
}

fn path_stats(
    drive: &dyn Drive,
    params: &LangevinParams,
    path_id: u64,
    m: usize,
    observable: &(dyn Fn(PhasePoint, &mut [f64]) + Sync),
) -> Result<PathStats> {
    let n = params.samples_per_path();
    let nb = params.batches;
    // batch b holds samples [b n / nb, (b + 1) n / nb)
    let bounds: Vec<usize> = (0..=nb).map(|b| b * n / nb).collect();
    let mut sums = vec![vec![0.0; m]; nb];
    let mut sum_sq = vec![0.0; m];
    let mut buf = vec![0.0; m];
    let mut b = 0;
    run_path(drive, params, path_id, |i, z| {
        while i >= bounds[b + 1] {
            b += 1;
        }
        observable(z, &mut buf);
        for c in 0..m {
            sums[b][c] += buf[c];
            sum_sq[c] += buf[c] * buf[c];
        }
    })?;
    let batch_means = sums
        .into_iter()
        .enumerate()
        .map(|(b, s)| {
            let len = (bounds[b + 1] - bounds[b]) as f64;
            s.into_iter().map(|v| v / len).collect()
        })
        .collect();
    Ok(PathStats { batch_means, sum_sq })
}

/// Batch means of all paths in path order: `[batch][component]`, and the overall variance per component.
fn collect_batches(
    drive: &dyn Drive,
    params: &LangevinParams,
    m: usize,
    observable: &(dyn Fn(PhasePoint, &mut [f64]) + Sync),
) -> Result<(Vec<Vec<f64>>, Vec<f64>)> {
    params.validate()?;
    let stats = (0..params.paths as u64)
        .into_par_iter()
        .map(|id| path_stats(drive, params, id, m, observable))
        .collect::<Result<Vec<_>>>()?;
    let total = (params.samples_per_path() * params.paths) as f64;
    let batches: Vec<Vec<f64>> = stats.iter().flat_map(|s| s.batch_means.clone()).collect();
    let variance = (0..m)
        .map(|c| {
            let mean = batches.iter().map(|b| b[c]).sum::<f64>() / batches.len() as f64;
            let sq: f64 = stats.iter().map(|s| s.sum_sq[c]).sum();
            (sq / total - mean * mean).max(0.0)
        })
        .collect();
    Ok((batches, variance))
}

fn estimate_from(values: &[f64], variance: f64, samples: f64) -> ErgodicEstimate {
    let nb = values.len() as f64;
    let mean = values.iter().sum::<f64>() / nb;
    let var_b = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nb - 1.0);
    let std_error = (var_b / nb).sqrt();
    let effective_samples = if std_error > 0.0 {
        (variance / (std_error * std_error)).max(f64::MIN_POSITIVE)
    } else {
        samples
    };
    ErgodicEstimate {
        mean,
        std_error,
        effective_samples,
    }
}

fn scalar_average(
    drive: &dyn Drive,
    observable: &(dyn Fn(PhasePoint) -> f64 + Sync),
    params: &LangevinParams,
) -> Result<ErgodicEstimate> {
    let wrapped = |z: PhasePoint, out: &mut [f64]| out[0] = observable(z);
    let (batches, variance) = collect_batches(drive, params, 1, &wrapped)?;
    let values: Vec<f64> = batches.iter().map(|b| b[0]).collect();
    let total = (params.samples_per_path() * params.paths) as f64;
    Ok(estimate_from(&values, variance[0], total))
}

/// Time average of `observable` along Langevin paths on surface `j`.
pub fn langevin_average(
    pot: &MatrixPotential,
    j: usize,
    observable: &(dyn Fn(PhasePoint) -> f64 + Sync),
    params: &LangevinParams,
) -> Result<ErgodicEstimate> {
    pot.surface(j, params.start.x)?;
    scalar_average(&OnSurface { pot, j }, observable, params)
}

/// Post-burn-in states of path `path_id` on surface `j`, keeping every `thin`-th step.
pub fn sample_path(
    pot: &MatrixPotential,
    j: usize,
    params: &LangevinParams,
    path_id: u64,
    thin: usize,
) -> Result<Vec<PhasePoint>> {
    params.validate()?;
    pot.surface(j, params.start.x)?;
    let thin = thin.max(1);
    let mut out = Vec::with_capacity(params.samples_per_path() / thin + 1);
    run_path(&OnSurface { pot, j }, params, path_id, |i, z| {
        if (i + 1) % thin == 0 {
            out.push(z);
        }
    })?;
    Ok(out)
}

/// Surface weights with their standard errors, estimated along ground-surface paths.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightEstimate {
    /// `partition[j]` holds `qbar_j = Z_j / Z_1`; `energy_shift` is zero.
    pub weights: GibbsWeights,
    pub std_error: Vec<f64>,
    /// Raw time averages `qbar_j` of `e^{-(lambda_j - lambda_1)/T}`.
    pub ratios: Vec<ErgodicEstimate>,
}

/// `q_j = qbar_j / sum_k qbar_k` with `qbar_j` the time average of
/// `e^{-(lambda_j(x_t) - lambda_1(x_t))/T}` along surface-1 paths.
pub fn estimate_weights_groundstate(
    pot: &MatrixPotential,
    temperature: f64,
    params: &LangevinParams,
) -> Result<WeightEstimate> {
    check_temperature(temperature, params)?;
    let d = pot.dim();
    let observable = |z: PhasePoint, out: &mut [f64]| {
        let l = pot.surfaces(z.x);
        for j in 0..d {
            out[j] = (-(l[j] - l[0]) / temperature).exp();
        }
    };
    let (batches, variance) = collect_batches(&OnSurface { pot, j: 0 }, params, d, &observable)?;
    let total = (params.samples_per_path() * params.paths) as f64;
    let ratios: Vec<ErgodicEstimate> = (0..d)
        .map(|j| {
            let v: Vec<f64> = batches.iter().map(|b| b[j]).collect();
            estimate_from(&v, variance[j], total)
        })
        .collect();
    let qbar: Vec<f64> = ratios.iter().map(|r| r.mean).collect();
    let s: f64 = qbar.iter().sum();
    let q: Vec<f64> = qbar.iter().map(|v| v / s).collect();
    // delta method on batch level: q_j = qbar_j / S linearizes to (r_j - q_j S_b) / S
    let nb = batches.len() as f64;
    let std_error = (0..d)
        .map(|j| {
            let z: Vec<f64> = batches
                .iter()
                .map(|b| (b[j] - q[j] * b.iter().sum::<f64>()) / s)
                .collect();
            let mean = z.iter().sum::<f64>() / nb;
            (z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (nb - 1.0) / nb).sqrt()
        })
        .collect();
    Ok(WeightEstimate {
        weights: GibbsWeights {
            q,
            partition: qbar,
            energy_shift: 0.0,
        },
        std_error,
        ratios,
    })
}

/// `lambdabar(x) = -T ln sum_j e^{-lambda_j(x)/T}`.
#[derive(Debug, Clone)]
pub struct MergedPotential {
    pot: MatrixPotential,
    temperature: f64,
}

pub fn merged_potential(pot: &MatrixPotential, temperature: f64) -> Result<MergedPotential> {
    ensure_positive("temperature", temperature)?;
    Ok(MergedPotential {
        pot: pot.clone(),
        temperature,
    })
}

impl MergedPotential {
    pub fn temperature(&self) -> f64 {
        self.temperature
    }

    pub fn value(&self, x: f64) -> f64 {
        let l = self.pot.surfaces(x);
        if l.len() == 1 {
            return l[0];
        }
        soft_min(&l, self.temperature)
    }

    /// `sum_j w_j lambda_j'(x)` with Boltzmann weights `w_j` normalized at `x`.
    pub fn derivative(&self, x: f64) -> Result<f64> {
        let l = self.pot.surfaces(x);
        let min = l.iter().copied().fold(f64::INFINITY, f64::min);
        let w: Vec<f64> = l.iter().map(|v| (-(v - min) / self.temperature).exp()).collect();
        let s: f64 = w.iter().sum();
        let mut acc = 0.0;
        for (j, wj) in w.iter().enumerate() {
            acc += wj * self.pot.surface_derivative(j, x)?;
        }
        Ok(acc / s)
    }
}

/// Average of a surface-independent observable along Langevin paths on the merged potential.
pub fn merged_path_average(
    pot: &MatrixPotential,
    temperature: f64,
    observable: &(dyn Fn(PhasePoint) -> f64 + Sync),
    params: &LangevinParams,
) -> Result<ErgodicEstimate> {
    check_temperature(temperature, params)?;
    scalar_average(&merged_potential(pot, temperature)?, observable, params)
}

fn check_temperature(temperature: f64, params: &LangevinParams) -> Result<()> {
    ensure_positive("temperature", temperature)?;
    if temperature != params.temperature {
        return Err(invalid(
            "temperature",
            format!(
                "ensemble temperature {temperature} differs from thermostat temperature {}",
                params.temperature
            ),
        ));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Surface;

    fn harmonic() -> MatrixPotential {
        MatrixPotential::from_surfaces(vec![Surface::harmonic(1.0)]).unwrap()
    }

    fn quick(seed: u64) -> LangevinParams {
        LangevinParams::new(1.0, 1.0, 1e-2, 1_000, 101_000, seed).with_paths(4)
    }

    #[test]
    fn equipartition() {
        let p2 = langevin_average(&harmonic(), 0, &|z| z.p * z.p, &quick(7)).unwrap();
        let x2 = langevin_average(&harmonic(), 0, &|z| z.x * z.x, &quick(7)).unwrap();
        assert!(p2.covers(1.0, 3.0), "{p2:?}");
        assert!(x2.covers(1.0, 3.0), "{x2:?}");
        assert!(p2.std_error < 0.05 && x2.effective_samples > 100.0);
    }

    #[test]
    fn deterministic_per_seed() {
        let a = langevin_average(&harmonic(), 0, &|z| z.x, &quick(11)).unwrap();
        let b = langevin_average(&harmonic(), 0, &|z| z.x, &quick(11)).unwrap();
        let c = langevin_average(&harmonic(), 0, &|z| z.x, &quick(12)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a.mean, c.mean);
        let pa = sample_path(&harmonic(), 0, &quick(3), 2, 10).unwrap();
        let pb = sample_path(&harmonic(), 0, &quick(3), 2, 10).unwrap();
        assert_eq!(pa, pb);
        assert_eq!(pa.len(), 10_000);
    }

    #[test]
    fn constant_observable_has_zero_error() {
        let e = langevin_average(&harmonic(), 0, &|_| 2.5, &quick(1)).unwrap();
        assert_eq!(e.mean, 2.5);
        assert_eq!(e.std_error, 0.0);
    }

    #[test]
    fn validation() {
        let mut p = quick(0);
        p.steps = p.burn_in;
        assert!(langevin_average(&harmonic(), 0, &|z| z.x, &p).is_err());
        let p = quick(0).with_paths(1).with_batches(10);
        assert!(langevin_average(&harmonic(), 0, &|z| z.x, &p).is_err());
        assert!(langevin_average(&harmonic(), 3, &|z| z.x, &quick(0)).is_err());
    }

    #[test]
    fn non_finite_state_aborts() {
        let pot = MatrixPotential::from_surfaces(vec![Surface::with_derivative(|x| -x.powi(4), |x| -4.0 * x.powi(3))])
            .unwrap();
        let p = quick(0).with_start(PhasePoint::new(3.0, 0.0));
        assert!(matches!(
            langevin_average(&pot, 0, &|z| z.x, &p),
            Err(Error::NonFiniteState { .. })
        ));
    }

    #[test]
    fn merged_potential_examples() {
        let single = merged_potential(&harmonic(), 0.8).unwrap();
        assert_eq!(single.value(1.3), 0.5 * 1.3 * 1.3);
        let pair = MatrixPotential::from_surfaces(vec![Surface::constant(0.4), Surface::constant(0.4)])
            .unwrap();
        let m = merged_potential(&pair, 2.0).unwrap();
        assert!((m.value(0.0) - (0.4 - 2.0 * 2f64.ln())).abs() < 1e-15);
        let pot = MatrixPotential::avoided_crossing(0.1, 1.0, 10.0).unwrap();
        let m = merged_potential(&pot, 1.9947).unwrap();
        for k in 0..=100 {
            let x = -4.0 + 0.08 * k as f64;
            let l = pot.surfaces(x);
            assert!(m.value(x) <= l[0]);
            let lhs = (-m.value(x) / 1.9947).exp();
            let rhs: f64 = l.iter().map(|v| (-v / 1.9947).exp()).sum();
            assert!((lhs / rhs - 1.0).abs() < 1e-12);
            let h = 1e-5;
            let fd = (m.value(x + h) - m.value(x - h)) / (2.0 * h);
            assert!((m.derivative(x).unwrap() - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn merged_average_of_one_is_one() {
        let pot = MatrixPotential::avoided_crossing(0.1, 1.0, 10.0).unwrap();
        let p = LangevinParams::new(1.0, 1.9947, 1e-3, 100, 10_100, 5);
        let e = merged_path_average(&pot, 1.9947, &|_| 1.0, &p).unwrap();
        assert_eq!(e.mean, 1.0);
        assert!(merged_path_average(&pot, 1.0, &|_| 1.0, &p).is_err());
    }

    #[test]
    fn degenerate_surfaces_share_weight() {
        let pot = MatrixPotential::from_surfaces(vec![Surface::harmonic(1.0), Surface::harmonic(1.0)])
            .unwrap();
        let w = estimate_weights_groundstate(&pot, 1.0, &quick(2)).unwrap();
        assert_eq!(w.weights.q, vec![0.5, 0.5]);
    }
}

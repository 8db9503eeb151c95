//! Finite-difference matrix Schrödinger operator, its spectrum, and the exact
//! canonical density and position correlation computed from it.

use faer::{c64, Mat, Side};
use rayon::prelude::*;

use crate::error::{ensure_positive, Error, Result};
use crate::grid::SpatialGrid;
use crate::model::MatrixPotential;
use crate::numerics::pairwise_sum;

/// States with `(e_n - e_1) / T` above this carry weight below `e^-40` and are
/// dropped from thermal sums.
pub const THERMAL_CUTOFF: f64 = 40.0;

/// Tolerated size of the imaginary part of the correlation trace, relative to its `tau = 0` value.
pub const IMAG_TOLERANCE: f64 = 1e-8;

/// `H_d = -(2M)^-1 Laplacian + V` on the grid nodes, components interleaved per node.
///
/// Row `d k + i` holds component `i` at node `x_k`. The stencil couples to
/// implicit zero values just outside `x_0` and `x_N`.
#[derive(Debug, Clone)]
pub struct DiscreteHamiltonian {
    pub mass: f64,
    pub grid: SpatialGrid,
    pub dim: usize,
    pub matrix: Mat<f64>,
}

impl DiscreteHamiltonian {
    pub fn size(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn max_abs(&self) -> f64 {
        max_abs(&self.matrix)
    }
}

pub fn assemble_hamiltonian(
    pot: &MatrixPotential,
    grid: &SpatialGrid,
    mass: f64,
) -> Result<DiscreteHamiltonian> {
    ensure_positive("mass", mass)?;
    let d = pot.dim();
    let n = d * grid.len();
    let dx = grid.dx();
    let scale = 1.0 / (2.0 * mass * dx * dx);
    let blocks = grid
        .nodes()
        .into_iter()
        .map(|x| pot.evaluate_checked(x))
        .collect::<Result<Vec<_>>>()?;

    let mut h = Mat::<f64>::zeros(n, n);
    for (k, v) in blocks.iter().enumerate() {
        let base = d * k;
        for j in 0..d {
            for i in 0..d {
                // average the two triangles so the assembled matrix is exactly symmetric
                let vij = if i == j { v[(i, i)] } else { 0.5 * (v[(i, j)] + v[(j, i)]) };
                h[(base + i, base + j)] = vij + if i == j { 2.0 * scale } else { 0.0 };
            }
        }
        if k + 1 < grid.len() {
            for i in 0..d {
                h[(base + i, base + d + i)] = -scale;
                h[(base + d + i, base + i)] = -scale;
            }
        }
    }
    Ok(DiscreteHamiltonian {
        mass,
        grid: *grid,
        dim: d,
        matrix: h,
    })
}

/// Full eigen-decomposition `H_d = P diag(e) P^T` with ascending `e`.
///
/// Also carries the grid, level count and mass ratio of the Hamiltonian it came from.
#[derive(Debug, Clone)]
pub struct SpectralDecomposition {
    pub mass: f64,
    pub grid: SpatialGrid,
    pub dim: usize,
    pub eigenvalues: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn solve_eigenproblem(h: &DiscreteHamiltonian) -> Result<SpectralDecomposition> {
    let n = h.size();
    let evd = h
        .matrix
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| Error::EigenNoConvergence {
            size: n,
            max_abs: h.max_abs(),
        })?;
    let s = evd.S().column_vector();
    let eigenvalues: Vec<f64> = (0..n).map(|i| s[i]).collect();
    Ok(SpectralDecomposition {
        mass: h.mass,
        grid: h.grid,
        dim: h.dim,
        eigenvalues,
        vectors: evd.U().to_owned(),
    })
}

impl SpectralDecomposition {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    /// Boltzmann weights `e^{-(e_n - e_1)/T}` of the thermally relevant states.
    pub fn thermal_weights(&self, temperature: f64) -> Result<Vec<f64>> {
        ensure_positive("temperature", temperature)?;
        let e0 = self.eigenvalues[0];
        Ok(self
            .eigenvalues
            .iter()
            .map(|e| (e - e0) / temperature)
            .take_while(|z| *z < THERMAL_CUTOFF)
            .map(|z| (-z).exp())
            .collect())
    }

    /// `max_n ||H phi_n - e_n phi_n||_inf`.
    pub fn max_residual(&self, h: &DiscreteHamiltonian) -> f64 {
        let hp = &h.matrix * &self.vectors;
        let mut r = 0.0f64;
        for j in 0..self.len() {
            for i in 0..self.len() {
                r = r.max((hp[(i, j)] - self.eigenvalues[j] * self.vectors[(i, j)]).abs());
            }
        }
        r
    }

    /// `||P^T P - I||_max`.
    pub fn orthogonality_error(&self) -> f64 {
        let g = self.vectors.transpose() * &self.vectors;
        max_abs(&(g - Mat::<f64>::identity(self.len(), self.len())))
    }
}

/// Canonical position density at the grid nodes, normalized to `sum_k rho_k dx = 1`.
pub fn equilibrium_density(spec: &SpectralDecomposition, temperature: f64) -> Result<Vec<f64>> {
    let w = spec.thermal_weights(temperature)?;
    let d = spec.dim;
    let p = &spec.vectors;
    let rho: Vec<f64> = (0..spec.grid.len())
        .into_par_iter()
        .map(|k| {
            let terms: Vec<f64> = w
                .iter()
                .enumerate()
                .map(|(n, wn)| (0..d).map(|i| p[(d * k + i, n)].powi(2)).sum::<f64>() * wn)
                .collect();
            pairwise_sum(&terms)
        })
        .collect();
    let norm = pairwise_sum(&rho) * spec.grid.dx();
    Ok(rho.into_iter().map(|r| r / norm).collect())
}

/// Precomputed matrix elements for the symmetrized position correlation
/// `trace(x(tau) (x rho + rho x)) / trace(2 rho)` with `rho = e^{-H_d/T}` and
/// `x(tau) = e^{i tau sqrt(M) H_d} x e^{-i tau sqrt(M) H_d}`.
///
/// Only columns `n < s` of `A = P^T X P` are formed, where `s` counts the
/// thermally relevant states; pairs in which both states are outside that set
/// are dropped.
#[derive(Debug, Clone)]
pub struct CorrelationOperator {
    frequency_scale: f64,
    energies: Vec<f64>,
    weights: Vec<f64>,
    /// `A[:, 0..s]`, row-major by column: `a[c * n + r]`.
    a: Vec<f64>,
    partition: f64,
    scale: f64,
}

impl CorrelationOperator {
    pub fn new(spec: &SpectralDecomposition, temperature: f64) -> Result<Self> {
        let w = spec.thermal_weights(temperature)?;
        let s = w.len();
        let n = spec.len();
        let d = spec.dim;
        let positions: Vec<f64> = (0..n).map(|r| spec.grid.node(r / d)).collect();
        let p = &spec.vectors;
        let xp = Mat::from_fn(n, s, |r, c| positions[r] * p[(r, c)]);
        let a_block = p.transpose() * &xp;
        let mut a = vec![0.0; n * s];
        for c in 0..s {
            for r in 0..n {
                a[c * n + r] = a_block[(r, c)];
            }
        }
        let mut op = Self {
            frequency_scale: spec.mass.sqrt(),
            energies: spec.eigenvalues.clone(),
            weights: w,
            a,
            partition: 0.0,
            scale: 1.0,
        };
        op.partition = pairwise_sum(&op.weights);
        op.scale = op.evaluate_complex(0.0).re.abs().max(f64::MIN_POSITIVE);
        Ok(op)
    }

    pub fn thermal_states(&self) -> usize {
        self.weights.len()
    }

    /// Complex trace before the real part is taken.
    pub fn evaluate_complex(&self, tau: f64) -> c64 {
        let n = self.energies.len();
        let s = self.weights.len();
        let omega = tau * self.frequency_scale;
        let e = &self.energies;
        let w = &self.weights;
        let weight = |r: usize| if r < s { w[r] } else { 0.0 };
        let columns: Vec<(f64, f64)> = (0..s)
            .into_par_iter()
            .map(|c| {
                let col = &self.a[c * n..(c + 1) * n];
                let mut re = Vec::with_capacity(n);
                let mut im = Vec::with_capacity(s);
                for r in 0..n {
                    let amp = col[r] * col[r] * (w[c] + weight(r));
                    let (sn, cs) = (omega * (e[r] - e[c])).sin_cos();
                    if r < s {
                        re.push(amp * cs);
                        im.push(amp * sn);
                    } else {
                        // pairs (r, c) and (c, r) with r outside the thermal set:
                        // cosines add, sines cancel
                        re.push(2.0 * amp * cs);
                    }
                }
                (pairwise_sum(&re), pairwise_sum(&im))
            })
            .collect();
        let re: Vec<f64> = columns.iter().map(|c| c.0).collect();
        let im: Vec<f64> = columns.iter().map(|c| c.1).collect();
        let norm = 2.0 * self.partition;
        c64::new(pairwise_sum(&re) / norm, pairwise_sum(&im) / norm)
    }

    /// Real correlation value; errors if the imaginary part is not negligible.
    pub fn evaluate(&self, tau: f64) -> Result<f64> {
        let z = self.evaluate_complex(tau);
        if z.im.abs() > IMAG_TOLERANCE * self.scale {
            return Err(Error::NonRealTrace {
                real: z.re,
                imag: z.im,
            });
        }
        Ok(z.re)
    }
}

/// One-shot form of [`CorrelationOperator::evaluate`].
pub fn quantum_correlation(spec: &SpectralDecomposition, temperature: f64, tau: f64) -> Result<f64> {
    CorrelationOperator::new(spec, temperature)?.evaluate(tau)
}

fn max_abs(m: &Mat<f64>) -> f64 {
    let mut r = 0.0f64;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            r = r.max(m[(i, j)].abs());
        }
    }
    r
}

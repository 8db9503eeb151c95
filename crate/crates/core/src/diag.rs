//! Asymptotic diagonalization of `V + (1/4M) Psi grad(Psi)^T grad(Psi) Psi^T`.
//!
//! `Psi[1]` diagonalizes `V`; `Psi[j+1]` diagonalizes `V + B[j] / (4M)` with
//! `B[j] = Psi[j] grad(Psi[j])^T grad(Psi[j]) Psi[j]^T`, gradients taken by
//! finite differences on the grid.

use faer::Mat;
use rayon::prelude::*;

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::grid::SpatialGrid;
use crate::model::{symmetric_eigen, MatrixPotential};

pub const MAX_KAPPA: usize = 4;

/// Smallest eigenvalue gap accepted on the grid.
pub const MIN_GAP: f64 = 1e-6;

/// One level `Psi[j]`, `Lambda[j]` sampled at the grid nodes.
#[derive(Debug, Clone)]
pub struct Level {
    pub psi: Vec<Mat<f64>>,
    pub lambda: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct DiagonalizationIterate {
    pub mass: f64,
    pub grid: SpatialGrid,
    /// `levels[j - 1]` is level `j`, for `j = 1..=kappa`.
    pub levels: Vec<Level>,
}

impl DiagonalizationIterate {
    pub fn kappa(&self) -> usize {
        self.levels.len()
    }

    /// Level `j`, one-based.
    pub fn level(&self, j: usize) -> &Level {
        &self.levels[j - 1]
    }

    /// `max_k ||Psi[j+1](x_k) - Psi[j](x_k)||_max` for `j = 1..kappa`.
    pub fn psi_steps(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| {
                w[0].psi
                    .iter()
                    .zip(&w[1].psi)
                    .map(|(a, b)| max_abs(&(b - a)))
                    .fold(0.0, f64::max)
            })
            .collect()
    }

    /// `max_k max_i |Lambda[j+1]_i - Lambda[j]_i|` for `j = 1..kappa`.
    pub fn lambda_steps(&self) -> Vec<f64> {
        self.levels
            .windows(2)
            .map(|w| {
                w[0].lambda
                    .iter()
                    .zip(&w[1].lambda)
                    .flat_map(|(a, b)| a.iter().zip(b).map(|(u, v)| (u - v).abs()))
                    .fold(0.0, f64::max)
            })
            .collect()
    }
}

/// `grad(Psi)` by central differences inside and one-sided differences at the ends.
pub fn gradient(psi: &[Mat<f64>], dx: f64) -> Vec<Mat<f64>> {
    let n = psi.len();
    (0..n)
        .map(|k| match k {
            0 => (&psi[1] - &psi[0]) * (1.0 / dx),
            _ if k == n - 1 => (&psi[n - 1] - &psi[n - 2]) * (1.0 / dx),
            _ => (&psi[k + 1] - &psi[k - 1]) * (0.5 / dx),
        })
        .collect()
}

/// `B = Psi grad(Psi)^T grad(Psi) Psi^T` at every node.
pub fn curvature_term(psi: &[Mat<f64>], dx: f64) -> Vec<Mat<f64>> {
    let g = gradient(psi, dx);
    psi.iter()
        .zip(&g)
        .map(|(p, gp)| {
            let inner = gp.transpose() * gp;
            p * &inner * p.transpose()
        })
        .collect()
}

pub fn psi_recursion(
    pot: &MatrixPotential,
    mass: f64,
    kappa: usize,
    grid: &SpatialGrid,
) -> Result<DiagonalizationIterate> {
    ensure_positive("mass", mass)?;
    if kappa == 0 || kappa > MAX_KAPPA {
        return Err(invalid("kappa", format!("must lie in 1..={MAX_KAPPA}, got {kappa}")));
    }
    let nodes = grid.nodes();
    let v: Vec<Mat<f64>> = nodes
        .iter()
        .map(|&x| pot.evaluate_checked(x))
        .collect::<Result<_>>()?;

    let mut first: Vec<_> = nodes.par_iter().map(|&x| pot.eigen(x)).collect();
    check_gaps(&nodes, first.iter().map(|e| e.values.as_slice()))?;
    // continuity along the grid, starting from the model's convention at x_0
    for k in 1..first.len() {
        let (prev, cur) = first.split_at_mut(k);
        align_columns(&mut cur[0].vectors, &prev[k - 1].vectors);
    }
    let mut levels = vec![Level {
        lambda: first.iter().map(|e| e.values.clone()).collect(),
        psi: first.into_iter().map(|e| e.vectors).collect(),
    }];

    let scale = 1.0 / (4.0 * mass);
    for _ in 1..kappa {
        let prev = levels.last().expect("at least one level");
        let b = curvature_term(&prev.psi, grid.dx());
        let next: Vec<_> = (0..nodes.len())
            .into_par_iter()
            .map(|k| {
                let c = &v[k] + &b[k] * scale;
                let mut e = symmetric_eigen(&symmetrize(&c));
                align_columns(&mut e.vectors, &prev.psi[k]);
                e
            })
            .collect();
        check_gaps(&nodes, next.iter().map(|e| e.values.as_slice()))?;
        levels.push(Level {
            lambda: next.iter().map(|e| e.values.clone()).collect(),
            psi: next.into_iter().map(|e| e.vectors).collect(),
        });
    }
    Ok(DiagonalizationIterate {
        mass,
        grid: *grid,
        levels,
    })
}

/// Sup-norms of the residual and of the level-to-level changes.
#[derive(Debug, Clone, PartialEq)]
pub struct ResidualReport {
    pub mass: f64,
    pub kappa: usize,
    /// `max_k ||r_0(x_k)||_max`.
    pub r0_sup: f64,
    /// `||Psi[j+1] - Psi[j]||` for `j = 1..kappa`.
    pub psi_step_sup: Vec<f64>,
    /// `||Lambda[j+1] - Lambda[j]||` for `j = 1..kappa`.
    pub lambda_step_sup: Vec<f64>,
}

/// `r_0 = (1/4M) Psi[kappa]^T (B[kappa] - B[kappa-1]) Psi[kappa]` on the grid.
pub fn residual_r0(iterate: &DiagonalizationIterate, grid: &SpatialGrid) -> Result<ResidualReport> {
    let kappa = iterate.kappa();
    if kappa < 2 {
        return Err(invalid("kappa", "residual needs kappa >= 2"));
    }
    if *grid != iterate.grid {
        return Err(invalid("grid", "differs from the grid of the iterate"));
    }
    let dx = grid.dx();
    let top = &iterate.level(kappa).psi;
    let b_top = curvature_term(top, dx);
    let b_prev = curvature_term(&iterate.level(kappa - 1).psi, dx);
    let scale = 1.0 / (4.0 * iterate.mass);
    let r0_sup = (0..top.len())
        .map(|k| {
            let diff = &b_top[k] - &b_prev[k];
            max_abs(&(top[k].transpose() * &diff * &top[k])) * scale
        })
        .fold(0.0, f64::max);
    Ok(ResidualReport {
        mass: iterate.mass,
        kappa,
        r0_sup,
        psi_step_sup: iterate.psi_steps(),
        lambda_step_sup: iterate.lambda_steps(),
    })
}

fn check_gaps<'a>(nodes: &[f64], values: impl Iterator<Item = &'a [f64]>) -> Result<()> {
    for (x, v) in nodes.iter().zip(values) {
        for i in 1..v.len() {
            let gap = v[i] - v[i - 1];
            if gap < MIN_GAP {
                return Err(Error::DegenerateSurface {
                    x: *x,
                    lower: i - 1,
                    upper: i,
                    gap,
                });
            }
        }
    }
    Ok(())
}

/// Flips columns of `psi` whose overlap with the matching column of `reference` is negative.
fn align_columns(psi: &mut Mat<f64>, reference: &Mat<f64>) {
    for j in 0..psi.ncols() {
        let overlap: f64 = (0..psi.nrows()).map(|i| psi[(i, j)] * reference[(i, j)]).sum();
        if overlap < 0.0 {
            for i in 0..psi.nrows() {
                psi[(i, j)] = -psi[(i, j)];
            }
        }
    }
}

fn symmetrize(c: &Mat<f64>) -> Mat<f64> {
    Mat::from_fn(c.nrows(), c.ncols(), |i, j| 0.5 * (c[(i, j)] + c[(j, i)]))
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

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Surface;

    fn grid() -> SpatialGrid {
        SpatialGrid::symmetric(3.0, 600).unwrap()
    }

    #[test]
    fn first_level_is_the_model_basis() {
        let pot = MatrixPotential::avoided_crossing(0.5, 1.0, 10.0).unwrap();
        let it = psi_recursion(&pot, 1e3, 1, &grid()).unwrap();
        for (k, x) in grid().nodes().into_iter().enumerate() {
            let e = pot.eigen(x);
            assert_eq!(max_abs(&(&it.level(1).psi[k] - &e.vectors)), 0.0);
        }
        assert!(residual_r0(&it, &grid()).is_err());
    }

    #[test]
    fn two_level_correction_is_scalar() {
        // grad(Psi)^T grad(Psi) = theta'^2 I for a 2x2 rotation, so B is a
        // multiple of the identity and the basis does not move.
        let pot = MatrixPotential::avoided_crossing(0.5, 1.0, 10.0).unwrap();
        let it = psi_recursion(&pot, 1e3, 3, &grid()).unwrap();
        assert!(it.psi_steps().iter().all(|s| *s < 1e-12));
        assert!(it.lambda_steps()[0] > 0.0);
    }

    #[test]
    fn constant_potential_has_no_residual() {
        let pot = MatrixPotential::from_surfaces(vec![Surface::constant(0.0), Surface::constant(1.0)])
            .unwrap();
        let it = psi_recursion(&pot, 10.0, 2, &grid()).unwrap();
        assert_eq!(residual_r0(&it, &grid()).unwrap().r0_sup, 0.0);
    }

    #[test]
    fn levels_stay_orthogonal_and_diagonalize() {
        let pot = MatrixPotential::three_level_crossing(0.5).unwrap();
        let g = grid();
        let m = 1e3;
        let it = psi_recursion(&pot, m, 3, &g).unwrap();
        for level in &it.levels {
            for p in &level.psi {
                let err = max_abs(&(p.transpose() * p - Mat::<f64>::identity(3, 3)));
                assert!(err < 1e-10);
            }
        }
        // Psi[3] diagonalizes V + B[2] / 4M
        let b = curvature_term(&it.level(2).psi, g.dx());
        for (k, x) in g.nodes().into_iter().enumerate() {
            let c = pot.evaluate(x) + &b[k] * (1.0 / (4.0 * m));
            let p = &it.level(3).psi[k];
            let dmat = p.transpose() * &c * p;
            for i in 0..3 {
                for j in 0..3 {
                    if i != j {
                        assert!(dmat[(i, j)].abs() < 1e-10);
                    }
                }
                assert!((dmat[(i, i)] - it.level(3).lambda[k][i]).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn rejects_bad_input() {
        let pot = MatrixPotential::three_level_crossing(0.5).unwrap();
        assert!(psi_recursion(&pot, 1e3, 0, &grid()).is_err());
        assert!(psi_recursion(&pot, 1e3, 5, &grid()).is_err());
        let degenerate = MatrixPotential::from_surfaces(vec![Surface::harmonic(1.0), Surface::harmonic(1.0)])
            .unwrap();
        assert!(matches!(
            psi_recursion(&degenerate, 1e3, 2, &grid()),
            Err(Error::DegenerateSurface { x, .. }) if x == -3.0
        ));
        let it = psi_recursion(&pot, 1e3, 2, &grid()).unwrap();
        assert!(residual_r0(&it, &SpatialGrid::symmetric(3.0, 300).unwrap()).is_err());
    }
}

//! Weyl quantization on a truncated phase space.
//!
//! A matrix symbol `A(x, p)` is quantized to the kernel
//! `K_A(x, y) = (sqrt(M) / 2 pi) int e^{i sqrt(M) (x - y) p} A((x + y) / 2, p) dp`.
//! Kernels compose by a weighted matrix product, and the Wigner transform
//! recovers a symbol from a kernel, so the exact composition symbol can be
//! compared against truncated Moyal expansions.

use std::f64::consts::PI;

use faer::{c64, Mat};
use rayon::prelude::*;
use rustfft::FftPlanner;

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::grid::{PhaseSpaceGrid, SpatialGrid};
use crate::numerics::pairwise_sum;

pub const MAX_MOYAL_ORDER: usize = 4;

/// `d x d` complex matrices sampled on a phase-space grid.
///
/// Entry `(i, j)` at node `(x_k, p_l)` is stored at `((k n_p + l) d + i) d + j`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymbolField {
    pub grid: PhaseSpaceGrid,
    pub dim: usize,
    data: Vec<c64>,
}

impl SymbolField {
    pub fn from_fn(
        grid: PhaseSpaceGrid,
        dim: usize,
        f: impl Fn(f64, f64, &mut [c64]) + Sync,
    ) -> Self {
        let xs = grid.x.nodes();
        let ps = grid.p.nodes();
        let dd = dim * dim;
        let rows: Vec<Vec<c64>> = xs
            .par_iter()
            .map(|&x| {
                let mut row = vec![c64::new(0.0, 0.0); ps.len() * dd];
                for (l, &p) in ps.iter().enumerate() {
                    f(x, p, &mut row[l * dd..(l + 1) * dd]);
                }
                row
            })
            .collect();
        Self {
            grid,
            dim,
            data: rows.concat(),
        }
    }

    /// `f(x, p) I_d`.
    pub fn scalar(grid: PhaseSpaceGrid, dim: usize, f: impl Fn(f64, f64) -> f64 + Sync) -> Self {
        Self::from_fn(grid, dim, |x, p, out| {
            let v = f(x, p);
            for i in 0..dim {
                out[i * dim + i] = c64::new(v, 0.0);
            }
        })
    }

    fn zeros_like(&self, grid: PhaseSpaceGrid) -> Self {
        Self {
            grid,
            dim: self.dim,
            data: vec![c64::new(0.0, 0.0); grid.len() * self.dim * self.dim],
        }
    }

    fn block_len(&self) -> usize {
        self.dim * self.dim
    }

    /// The `d x d` block at node `(k, l)`, row-major.
    pub fn at(&self, k: usize, l: usize) -> &[c64] {
        let dd = self.block_len();
        let base = (k * self.grid.p.len() + l) * dd;
        &self.data[base..base + dd]
    }

    fn at_mut(&mut self, k: usize, l: usize) -> &mut [c64] {
        let dd = self.block_len();
        let base = (k * self.grid.p.len() + l) * dd;
        &mut self.data[base..base + dd]
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    /// Largest entry on the boundary of the grid relative to the largest entry overall.
    pub fn decay_flag(&self) -> f64 {
        let (nx, np) = (self.grid.x.len(), self.grid.p.len());
        let block_max = |k: usize, l: usize| self.at(k, l).iter().map(|z| z.norm()).fold(0.0, f64::max);
        let mut edge = 0.0f64;
        for k in 0..nx {
            edge = edge.max(block_max(k, 0)).max(block_max(k, np - 1));
        }
        for l in 0..np {
            edge = edge.max(block_max(0, l)).max(block_max(nx - 1, l));
        }
        let top = self.max_abs();
        if top > 0.0 {
            edge / top
        } else {
            0.0
        }
    }

    /// Every `step`-th x node, keeping both ends.
    pub fn subsample_x(&self, step: usize) -> Result<Self> {
        let n = self.grid.x.intervals();
        if step == 0 || !n.is_multiple_of(step) {
            return Err(invalid("step", format!("{step} does not divide {n} x intervals")));
        }
        let x = SpatialGrid::new(self.grid.x.x_min(), self.grid.x.x_max(), n / step)?;
        let mut out = self.zeros_like(PhaseSpaceGrid::new(x, self.grid.p));
        for k in 0..x.len() {
            for l in 0..self.grid.p.len() {
                out.at_mut(k, l).copy_from_slice(self.at(k * step, l));
            }
        }
        Ok(out)
    }

    fn zip_with(&self, other: &Self, f: impl Fn(c64, c64) -> c64) -> Result<Self> {
        self.check_compatible(other)?;
        Ok(Self {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().zip(&other.data).map(|(a, b)| f(*a, *b)).collect(),
        })
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Result<Self> {
        self.zip_with(other, |a, b| a - b)
    }

    pub fn scale(&self, s: c64) -> Self {
        Self {
            grid: self.grid,
            dim: self.dim,
            data: self.data.iter().map(|z| z * s).collect(),
        }
    }

    /// Pointwise matrix product `A(z) B(z)`.
    pub fn pointwise_product(&self, other: &Self) -> Result<Self> {
        self.check_compatible(other)?;
        let d = self.dim;
        let mut out = self.zeros_like(self.grid);
        for k in 0..self.grid.x.len() {
            for l in 0..self.grid.p.len() {
                let (a, b) = (self.at(k, l), other.at(k, l));
                let c = out.at_mut(k, l);
                for i in 0..d {
                    for j in 0..d {
                        c[i * d + j] = (0..d).map(|r| a[i * d + r] * b[r * d + j]).sum();
                    }
                }
            }
        }
        Ok(out)
    }

    /// Pointwise trace on the grid.
    pub fn trace_field(&self) -> Vec<c64> {
        let d = self.dim;
        self.data
            .chunks(d * d)
            .map(|b| (0..d).map(|i| b[i * d + i]).sum())
            .collect()
    }

    fn check_compatible(&self, other: &Self) -> Result<()> {
        if self.grid != other.grid || self.dim != other.dim {
            return Err(invalid("symbol", "grids or dimensions differ"));
        }
        Ok(())
    }
}

/// `(sqrt(M) / 2 pi) int trace A dz` by the product trapezoidal rule.
pub fn phase_space_trace(a: &SymbolField, mass: f64) -> c64 {
    let w = a.grid.weights();
    let tr = a.trace_field();
    let re: Vec<f64> = tr.iter().zip(&w).map(|(t, w)| t.re * w).collect();
    let im: Vec<f64> = tr.iter().zip(&w).map(|(t, w)| t.im * w).collect();
    c64::new(pairwise_sum(&re), pairwise_sum(&im)) * (mass.sqrt() / (2.0 * PI))
}

/// `(int |A - B|_F^2 dz)^{1/2}` by the product trapezoidal rule.
pub fn l2_distance(a: &SymbolField, b: &SymbolField) -> Result<f64> {
    a.check_compatible(b)?;
    let dd = a.block_len();
    let w = a.grid.weights();
    let terms: Vec<f64> = a
        .data
        .chunks(dd)
        .zip(b.data.chunks(dd))
        .zip(&w)
        .map(|((x, y), w)| w * x.iter().zip(y).map(|(u, v)| (u - v).norm_sqr()).sum::<f64>())
        .collect();
    Ok(pairwise_sum(&terms).sqrt())
}

/// Kernel `K(x_k, x_m)` as a `(n d) x (n d)` matrix of `d x d` blocks.
#[derive(Debug, Clone)]
pub struct OperatorKernel {
    pub nodes: SpatialGrid,
    pub dim: usize,
    pub mass: f64,
    pub matrix: Mat<c64>,
}

impl OperatorKernel {
    pub fn block(&self, k: usize, m: usize) -> Vec<c64> {
        let d = self.dim;
        (0..d * d)
            .map(|r| self.matrix[(k * d + r / d, m * d + r % d)])
            .collect()
    }

    pub fn max_abs(&self) -> f64 {
        let mut r = 0.0f64;
        for j in 0..self.matrix.ncols() {
            for i in 0..self.matrix.nrows() {
                r = r.max(self.matrix[(i, j)].norm());
            }
        }
        r
    }

    /// `||K - K^dagger||_max`.
    pub fn hermiticity_error(&self) -> f64 {
        let n = self.matrix.nrows();
        let mut r = 0.0f64;
        for j in 0..n {
            for i in 0..n {
                r = r.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        r
    }
}

/// Nyquist-type condition `sqrt(M) h p_max <= pi` for kernel spacing `h`.
fn check_admissible(grid: &PhaseSpaceGrid, kernel_spacing: f64, mass: f64) -> Result<()> {
    let p_max = grid.p.max_abs();
    let phase = mass.sqrt() * kernel_spacing * p_max;
    if phase > PI * (1.0 + 1e-12) {
        let span = grid.x.x_max() - grid.x.x_min();
        let needed = (mass.sqrt() * p_max * span / PI).ceil() as usize;
        return Err(Error::Inadmissible {
            mass,
            reason: format!(
                "sqrt(M) dx p_max = {phase:.4} exceeds pi; kernel needs at least {needed} x intervals"
            ),
        });
    }
    Ok(())
}

/// Kernel rows from a midpoint lookup: `mid(k, m, l)` returns the symbol block at
/// `((x_k + x_m)/2, p_l)`.
fn assemble_kernel(
    a: &SymbolField,
    nodes: SpatialGrid,
    mass: f64,
    mid: impl Fn(usize, usize, usize, &mut [c64]) + Sync,
) -> OperatorKernel {
    let d = a.dim;
    let n = nodes.len();
    let h = nodes.dx();
    let ps = a.grid.p.nodes();
    let wp = a.grid.p.trapezoid_weights();
    let np = ps.len();
    let sm = mass.sqrt();
    // e^{i sqrt(M) (k - m) h p_l} wp_l for offsets k - m = -(n-1)..=(n-1)
    let phase: Vec<c64> = (0..2 * n - 1)
        .flat_map(|o| {
            let s = (o as f64 - (n - 1) as f64) * h;
            ps.iter()
                .zip(&wp)
                .map(move |(p, w)| c64::cis(sm * s * p) * *w)
                .collect::<Vec<_>>()
        })
        .collect();
    let pref = sm / (2.0 * PI);
    let rows: Vec<Vec<c64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let mut row = vec![c64::new(0.0, 0.0); d * n * d];
            let mut block = vec![c64::new(0.0, 0.0); d * d];
            for m in 0..n {
                let ph = &phase[(k + n - 1 - m) * np..(k + n - m) * np];
                let mut acc = vec![c64::new(0.0, 0.0); d * d];
                for (l, e) in ph.iter().enumerate() {
                    mid(k, m, l, &mut block);
                    for (a, b) in acc.iter_mut().zip(&block) {
                        *a += e * b;
                    }
                }
                for i in 0..d {
                    for j in 0..d {
                        row[i * n * d + m * d + j] = acc[i * d + j] * pref;
                    }
                }
            }
            row
        })
        .collect();
    let matrix = Mat::from_fn(n * d, n * d, |r, c| rows[r / d][(r % d) * n * d + c]);
    OperatorKernel {
        nodes,
        dim: d,
        mass,
        matrix,
    }
}

/// Kernel on the symbol's own x nodes; midpoints between nodes use the
/// average of the two neighbouring symbol values.
pub fn weyl_quantize(a: &SymbolField, mass: f64) -> Result<OperatorKernel> {
    ensure_positive("mass", mass)?;
    check_admissible(&a.grid, a.grid.x.dx(), mass)?;
    let dd = a.block_len();
    Ok(assemble_kernel(a, a.grid.x, mass, |k, m, l, out| {
        let s = k + m;
        if s % 2 == 0 {
            out.copy_from_slice(a.at(s / 2, l));
        } else {
            let (lo, hi) = (a.at(s / 2, l), a.at(s / 2 + 1, l));
            for r in 0..dd {
                out[r] = (lo[r] + hi[r]) * 0.5;
            }
        }
    }))
}

/// Kernel on every second x node of the symbol, so that all midpoints are
/// symbol nodes and no interpolation is needed.
pub fn weyl_quantize_subsampled(a: &SymbolField, mass: f64) -> Result<OperatorKernel> {
    ensure_positive("mass", mass)?;
    let n = a.grid.x.intervals();
    if !n.is_multiple_of(2) {
        return Err(invalid("symbol", "subsampled kernel needs an even number of x intervals"));
    }
    let nodes = SpatialGrid::new(a.grid.x.x_min(), a.grid.x.x_max(), n / 2)?;
    check_admissible(&a.grid, nodes.dx(), mass)?;
    Ok(assemble_kernel(a, nodes, mass, |k, m, l, out| {
        out.copy_from_slice(a.at(k + m, l));
    }))
}

/// `sum_k trace K(x_k, x_k) dx`.
pub fn trace_of(kernel: &OperatorKernel) -> c64 {
    let d = kernel.dim;
    let h = kernel.nodes.dx();
    let diag: Vec<c64> = (0..kernel.nodes.len())
        .map(|k| (0..d).map(|i| kernel.matrix[(k * d + i, k * d + i)]).sum())
        .collect();
    let re: Vec<f64> = diag.iter().map(|z| z.re).collect();
    let im: Vec<f64> = diag.iter().map(|z| z.im).collect();
    c64::new(pairwise_sum(&re), pairwise_sum(&im)) * h
}

/// Kernel of the operator product: `K_C(x, y) = int K_A(x, z) K_B(z, y) dz`.
pub fn compose(a: &OperatorKernel, b: &OperatorKernel) -> Result<OperatorKernel> {
    if a.nodes != b.nodes || a.dim != b.dim {
        return Err(invalid("kernel", "grids or dimensions differ"));
    }
    if a.mass != b.mass {
        return Err(invalid("kernel", "mass ratios differ"));
    }
    let h = c64::new(a.nodes.dx(), 0.0);
    let product = &a.matrix * &b.matrix;
    let n = product.nrows();
    Ok(OperatorKernel {
        nodes: a.nodes,
        dim: a.dim,
        mass: a.mass,
        matrix: Mat::from_fn(n, n, |i, j| product[(i, j)] * h),
    })
}

/// Wigner transform `C(x, p) = int K(x + s/2, x - s/2) e^{-i sqrt(M) s p} ds` at
/// the kernel nodes and the momenta of `p`; the `s` integral is truncated where
/// `x +- s/2` leaves the kernel grid.
pub fn kernel_symbol(kernel: &OperatorKernel, p: &SpatialGrid) -> SymbolField {
    let d = kernel.dim;
    let n = kernel.nodes.len();
    let h = kernel.nodes.dx();
    let ps = p.nodes();
    let sm = kernel.mass.sqrt();
    let grid = PhaseSpaceGrid::new(kernel.nodes, *p);
    let mut out = SymbolField {
        grid,
        dim: d,
        data: vec![c64::new(0.0, 0.0); grid.len() * d * d],
    };
    let rows: Vec<Vec<c64>> = (0..n)
        .into_par_iter()
        .map(|k| {
            let jm = k.min(n - 1 - k) as i64;
            let mut row = vec![c64::new(0.0, 0.0); ps.len() * d * d];
            for (l, &pl) in ps.iter().enumerate() {
                let mut acc = vec![c64::new(0.0, 0.0); d * d];
                for j in -jm..=jm {
                    let w = if jm > 0 && j.abs() == jm { 0.5 } else { 1.0 };
                    let s = 2.0 * j as f64 * h;
                    let e = c64::cis(-sm * s * pl) * (w * 2.0 * h);
                    let (r, c) = ((k as i64 + j) as usize, (k as i64 - j) as usize);
                    for i in 0..d {
                        for jj in 0..d {
                            acc[i * d + jj] += kernel.matrix[(r * d + i, c * d + jj)] * e;
                        }
                    }
                }
                row[l * d * d..(l + 1) * d * d].copy_from_slice(&acc);
            }
            row
        })
        .collect();
    for (k, row) in rows.into_iter().enumerate() {
        let np = ps.len();
        for l in 0..np {
            out.at_mut(k, l)
                .copy_from_slice(&row[l * d * d..(l + 1) * d * d]);
        }
    }
    out
}

/// Spectral derivatives of each matrix entry along both grid axes.
struct Spectral {
    nx: usize,
    np: usize,
    dd: usize,
    kx: Vec<f64>,
    kp: Vec<f64>,
    /// 2D transform per entry: `hat[e][k * np + l]`.
    hat: Vec<Vec<c64>>,
}

fn angular_frequencies(n: usize, h: f64) -> Vec<f64> {
    // 2 pi * fftfreq(n, h)
    (0..n)
        .map(|i| {
            let f = if i < n.div_ceil(2) { i as f64 } else { i as f64 - n as f64 };
            2.0 * PI * f / (n as f64 * h)
        })
        .collect()
}

fn fft2(data: &mut [c64], nx: usize, np: usize, inverse: bool, planner: &mut FftPlanner<f64>) {
    let fx = if inverse { planner.plan_fft_inverse(nx) } else { planner.plan_fft_forward(nx) };
    let fp = if inverse { planner.plan_fft_inverse(np) } else { planner.plan_fft_forward(np) };
    for row in data.chunks_mut(np) {
        fp.process(row);
    }
    let mut col = vec![c64::new(0.0, 0.0); nx];
    for l in 0..np {
        for k in 0..nx {
            col[k] = data[k * np + l];
        }
        fx.process(&mut col);
        for k in 0..nx {
            data[k * np + l] = col[k];
        }
    }
    if inverse {
        let s = 1.0 / (nx * np) as f64;
        data.iter_mut().for_each(|z| *z *= s);
    }
}

impl Spectral {
    fn new(a: &SymbolField, planner: &mut FftPlanner<f64>) -> Self {
        let (nx, np, dd) = (a.grid.x.len(), a.grid.p.len(), a.block_len());
        let hat = (0..dd)
            .map(|e| {
                let mut v: Vec<c64> = a.data.iter().skip(e).step_by(dd).copied().collect();
                fft2(&mut v, nx, np, false, planner);
                v
            })
            .collect();
        Self {
            nx,
            np,
            dd,
            kx: angular_frequencies(nx, a.grid.x.dx()),
            kp: angular_frequencies(np, a.grid.p.dx()),
            hat,
        }
    }

    /// `d_x^ox d_p^op` of the field, in the same layout as `SymbolField::data`.
    fn derivative(&self, ox: usize, op: usize, planner: &mut FftPlanner<f64>) -> Vec<c64> {
        let i = c64::new(0.0, 1.0);
        let mut out = vec![c64::new(0.0, 0.0); self.nx * self.np * self.dd];
        for (e, hat) in self.hat.iter().enumerate() {
            let mut v: Vec<c64> = hat
                .iter()
                .enumerate()
                .map(|(idx, z)| {
                    let (k, l) = (idx / self.np, idx % self.np);
                    z * (i * self.kx[k]).powu(ox as u32) * (i * self.kp[l]).powu(op as u32)
                })
                .collect();
            fft2(&mut v, self.nx, self.np, true, planner);
            for (idx, z) in v.into_iter().enumerate() {
                out[idx * self.dd + e] = z;
            }
        }
        out
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moyal expansion of the composition symbol truncated after order `m`:
///
/// `sum_{n<=m} (1/n!) (i / (2 sqrt(M)))^n sum_k C(n,k) (-1)^k
///  [d_x^{n-k} d_p^k A] [d_x^k d_p^{n-k} B]`,
///
/// with derivatives by discrete Fourier differentiation on the symbol grid.
pub fn moyal_compose(a: &SymbolField, b: &SymbolField, mass: f64, order: usize) -> Result<SymbolField> {
    ensure_positive("mass", mass)?;
    a.check_compatible(b)?;
    if order > MAX_MOYAL_ORDER {
        return Err(invalid(
            "order",
            format!("Moyal order {order} exceeds the supported maximum {MAX_MOYAL_ORDER}"),
        ));
    }
    let mut out = a.pointwise_product(b)?;
    if order == 0 {
        return Ok(out);
    }
    let mut planner = FftPlanner::new();
    let sa = Spectral::new(a, &mut planner);
    let sb = Spectral::new(b, &mut planner);
    let wrap = |data: Vec<c64>| SymbolField {
        grid: a.grid,
        dim: a.dim,
        data,
    };
    let base = c64::new(0.0, 1.0 / (2.0 * mass.sqrt()));
    let mut factorial = 1.0;
    for n in 1..=order {
        factorial *= n as f64;
        let coeff = base.powu(n as u32) / factorial;
        for k in 0..=n {
            let da = wrap(sa.derivative(n - k, k, &mut planner));
            let db = wrap(sb.derivative(k, n - k, &mut planner));
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            let term = da.pointwise_product(&db)?.scale(coeff * (sign * binomial(n, k)));
            out = out.add(&term)?;
        }
    }
    Ok(out)
}

/// Half-width of the symbol domain used by the study helpers below.
pub const STUDY_HALF_WIDTH: f64 = 6.0;
const STUDY_MAX_DX: f64 = 0.04;
const STUDY_DP: f64 = 0.04;

/// Symbol grid on `[-L, L]^2` whose every-second-node kernel is admissible
/// for `mass` with a 20% margin.
pub fn study_grid(mass: f64) -> Result<PhaseSpaceGrid> {
    ensure_positive("mass", mass)?;
    let l = STUDY_HALF_WIDTH;
    let h = STUDY_MAX_DX.min(0.8 * PI / (4.0 * mass.sqrt() * l));
    let nx = 2 * (l / h).ceil() as usize;
    let np = (2.0 * l / STUDY_DP).round() as usize;
    Ok(PhaseSpaceGrid::new(
        SpatialGrid::symmetric(l, nx)?,
        SpatialGrid::symmetric(l, np)?,
    ))
}

/// Scalar test pair: a centred Gaussian and a shifted, widened Gaussian
/// with a linear factor, so that the pair does not commute.
pub fn gaussian_pair(grid: PhaseSpaceGrid) -> (SymbolField, SymbolField) {
    let a = SymbolField::scalar(grid, 1, |x, p| (-(x * x + p * p)).exp());
    let b = SymbolField::scalar(grid, 1, |x, p| {
        (-((x - 0.5).powi(2) + (p - 0.3).powi(2)) / 1.5).exp() * (1.0 + 0.3 * x)
    });
    (a, b)
}

/// `|| symbol(K_A K_B) - A #_m B ||_{L^2}` on the kernel nodes.
pub fn remainder_norm(a: &SymbolField, b: &SymbolField, mass: f64, order: usize) -> Result<f64> {
    let ka = weyl_quantize_subsampled(a, mass)?;
    let kb = weyl_quantize_subsampled(b, mass)?;
    let exact = kernel_symbol(&compose(&ka, &kb)?, &a.grid.p);
    let truncated = moyal_compose(a, b, mass, order)?.subsample_x(2)?;
    l2_distance(&exact, &truncated)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RemainderRow {
    pub order: usize,
    pub mass: f64,
    pub norm: f64,
}

/// Moyal remainder norms of the Gaussian pair for every `(order, mass)`.
pub fn remainder_table(masses: &[f64], orders: &[usize]) -> Result<Vec<RemainderRow>> {
    let mut rows = Vec::with_capacity(masses.len() * orders.len());
    for &order in orders {
        for &mass in masses {
            let (a, b) = gaussian_pair(study_grid(mass)?);
            let norm = remainder_norm(&a, &b, mass, order)?;
            rows.push(RemainderRow { order, mass, norm });
        }
    }
    Ok(rows)
}

/// Relative errors of the discrete trace identities at one mass ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceReport {
    pub mass: f64,
    /// `trace(A^)` against `(sqrt(M)/2pi) int trace A dz` for `A = e^{-x^2-p^2} I_2`.
    pub trace_error: f64,
    /// `trace(A^ B^)` against `(sqrt(M)/2pi) int trace(AB) dz` for the Gaussian pair.
    pub composition_error: f64,
    /// `trace(A^) 2pi/sqrt(M)` against the analytic value `2 pi`.
    pub analytic_error: f64,
    pub cyclicity_error: f64,
    pub hermiticity_error: f64,
    pub decay_flag: f64,
}

pub fn trace_identities(mass: f64) -> Result<TraceReport> {
    let grid = study_grid(mass)?;
    let g2 = SymbolField::scalar(grid, 2, |x, p| (-(x * x + p * p)).exp());
    let k2 = weyl_quantize_subsampled(&g2, mass)?;
    let tr = trace_of(&k2);
    let ps = phase_space_trace(&g2, mass);
    let scaled = tr * (2.0 * PI / mass.sqrt());

    let (a, b) = gaussian_pair(grid);
    let ka = weyl_quantize_subsampled(&a, mass)?;
    let kb = weyl_quantize_subsampled(&b, mass)?;
    let ab = trace_of(&compose(&ka, &kb)?);
    let ba = trace_of(&compose(&kb, &ka)?);
    let ps_ab = phase_space_trace(&a.pointwise_product(&b)?, mass);
    Ok(TraceReport {
        mass,
        trace_error: (tr - ps).norm() / ps.norm(),
        composition_error: (ab - ps_ab).norm() / ps_ab.norm(),
        analytic_error: (scaled - c64::new(2.0 * PI, 0.0)).norm() / (2.0 * PI),
        cyclicity_error: (ab - ba).norm() / ab.norm(),
        hermiticity_error: k2.hermiticity_error() / k2.max_abs(),
        decay_flag: a.decay_flag().max(b.decay_flag()).max(g2.decay_flag()),
    })
}

//! Small numerical helpers shared by the modules: deterministic summation,
//! trapezoidal quadrature and log-log slope fits.

use crate::error::{Error, Result};

const PAIRWISE_BLOCK: usize = 32;

/// Pairwise (cascade) summation in index order.
///
/// The association tree only depends on the slice length, so the result is
/// bit-identical however the inputs were produced.
pub fn pairwise_sum(values: &[f64]) -> f64 {
    if values.len() <= PAIRWISE_BLOCK {
        return values.iter().fold(0.0, |acc, v| acc + v);
    }
    let mid = values.len() / 2;
    pairwise_sum(&values[..mid]) + pairwise_sum(&values[mid..])
}

/// Trapezoidal rule for samples on a uniform grid with spacing `dx`.
pub fn trapezoid(values: &[f64], dx: f64) -> f64 {
    match values.len() {
        0 | 1 => 0.0,
        n => {
            let interior = pairwise_sum(&values[1..n - 1]);
            dx * (interior + 0.5 * (values[0] + values[n - 1]))
        }
    }
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Least-squares line through `(ln x, ln y)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl LogLogFit {
    pub fn fit(xs: &[f64], ys: &[f64]) -> Result<Self> {
        let pts: Vec<(f64, f64)> = xs
            .iter()
            .zip(ys)
            .filter(|(x, y)| **x > 0.0 && **y > 0.0)
            .map(|(x, y)| (x.ln(), y.ln()))
            .collect();
        if pts.len() < 2 || pts.len() != xs.len().min(ys.len()) {
            return Err(Error::DegenerateFit(pts.len()));
        }
        let n = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let syy: f64 = pts.iter().map(|p| (p.1 - my).powi(2)).sum();
        if sxx == 0.0 {
            return Err(Error::DegenerateFit(1));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ss_res: f64 = pts
            .iter()
            .map(|p| (p.1 - intercept - slope * p.0).powi(2))
            .sum();
        let r_squared = if syy == 0.0 { 1.0 } else { 1.0 - ss_res / syy };
        Ok(Self {
            slope,
            intercept,
            r_squared,
        })
    }
}

/// Numerically stable `-T ln(sum_j exp(-e_j / T))`.
pub fn soft_min(energies: &[f64], temperature: f64) -> f64 {
    let min = energies.iter().copied().fold(f64::INFINITY, f64::min);
    let s: f64 = energies
        .iter()
        .map(|e| (-(e - min) / temperature).exp())
        .sum();
    min - temperature * s.ln()
}

//! Matrix-valued potentials `V(x)` and their adiabatic eigen-decompositions.

use std::fmt;
use std::sync::Arc;

use faer::{Mat, Side};

use crate::error::{ensure_positive, invalid, Error, Result};
use crate::grid::SpatialGrid;

/// Step of the central difference used for surfaces without an analytic derivative.
pub const FD_STEP: f64 = 1e-5;

/// Eigenvalue gap below which a surface derivative is refused.
pub const MIN_DERIVATIVE_GAP: f64 = 1e-10;

pub type ScalarFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;
pub type MatrixFn = Arc<dyn Fn(f64) -> Mat<f64> + Send + Sync>;

/// Sorted eigenvalues with orthonormal eigenvector columns.
#[derive(Debug, Clone)]
pub struct EigenDecomposition {
    pub values: Vec<f64>,
    pub vectors: Mat<f64>,
}

impl EigenDecomposition {
    /// `Psi diag(values) Psi^T`.
    pub fn reconstruct(&self) -> Mat<f64> {
        let d = self.values.len();
        let entry = |i: usize, j: usize| -> f64 {
            (0..d)
                .map(|n| self.values[n] * (self.vectors[(i, n)] * self.vectors[(j, n)]))
                .sum()
        };
        // evaluate each pair once so the result is exactly symmetric
        Mat::from_fn(d, d, |i, j| entry(i.min(j), i.max(j)))
    }
}

/// One scalar adiabatic surface, optionally with its analytic derivative.
#[derive(Clone)]
pub struct Surface {
    value: ScalarFn,
    derivative: Option<ScalarFn>,
}

impl Surface {
    pub fn new(value: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Self {
            value: Arc::new(value),
            derivative: None,
        }
    }

    pub fn with_derivative(
        value: impl Fn(f64) -> f64 + Send + Sync + 'static,
        derivative: impl Fn(f64) -> f64 + Send + Sync + 'static,
    ) -> Self {
        Self {
            value: Arc::new(value),
            derivative: Some(Arc::new(derivative)),
        }
    }

    pub fn constant(c: f64) -> Self {
        Self::with_derivative(move |_| c, |_| 0.0)
    }

    /// `k x^2 / 2`.
    pub fn harmonic(k: f64) -> Self {
        Self::with_derivative(move |x| 0.5 * k * x * x, move |x| k * x)
    }

    pub fn value(&self, x: f64) -> f64 {
        (self.value)(x)
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.derivative {
            Some(d) => d(x),
            None => (self.value(x + FD_STEP) - self.value(x - FD_STEP)) / (2.0 * FD_STEP),
        }
    }
}

#[derive(Clone)]
enum Kind {
    AvoidedCrossing { delta: f64, a: f64, b: f64 },
    /// `V = diag(lambda_1, ..., lambda_d)`, caller promises nondecreasing order.
    Diagonal(Vec<Surface>),
    Callback { dim: usize, eval: MatrixFn },
}

/// A real symmetric `d x d` potential `x -> V(x)`.
#[derive(Clone)]
pub struct MatrixPotential {
    kind: Kind,
    params: Vec<(&'static str, f64)>,
}

impl fmt::Debug for MatrixPotential {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let kind = match &self.kind {
            Kind::AvoidedCrossing { .. } => "avoided-crossing",
            Kind::Diagonal(_) => "diagonal",
            Kind::Callback { .. } => "callback",
        };
        f.debug_struct("MatrixPotential")
            .field("kind", &kind)
            .field("dim", &self.dim())
            .field("params", &self.params)
            .finish()
    }
}

impl MatrixPotential {
    /// The two-level family with eigenvalues
    /// `lambda_1 = x^2 - sqrt(delta^2 + x^2) + a cos(bx) - 1` and
    /// `lambda_2 = x^2 + sqrt(delta^2 + x^2)`.
    ///
    /// `|a| < 1 + 2 delta` is required so that the two surfaces never cross.
    pub fn avoided_crossing(delta: f64, a: f64, b: f64) -> Result<Self> {
        ensure_positive("delta", delta)?;
        if !(a.is_finite() && b.is_finite()) {
            return Err(invalid("a, b", "must be finite"));
        }
        if a.abs() >= 1.0 + 2.0 * delta {
            return Err(invalid(
                "a",
                format!("|a| = {} lets the surfaces cross; need |a| < 1 + 2 delta", a.abs()),
            ));
        }
        Ok(Self {
            kind: Kind::AvoidedCrossing { delta, a, b },
            params: vec![("delta", delta), ("a", a), ("b", b)],
        })
    }

    /// Diagonal potential from surfaces listed in nondecreasing order.
    ///
    /// Surface `j` is the `j`-th function as given, so equal surfaces keep
    /// well-defined derivatives.
    pub fn from_surfaces(surfaces: Vec<Surface>) -> Result<Self> {
        if surfaces.is_empty() {
            return Err(invalid("surfaces", "need at least one surface"));
        }
        Ok(Self {
            kind: Kind::Diagonal(surfaces),
            params: Vec::new(),
        })
    }

    /// Generic potential given by an evaluation callback returning a symmetric `dim x dim` matrix.
    pub fn from_fn(
        dim: usize,
        eval: impl Fn(f64) -> Mat<f64> + Send + Sync + 'static,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dim", "must be positive"));
        }
        Ok(Self {
            kind: Kind::Callback {
                dim,
                eval: Arc::new(eval),
            },
            params: Vec::new(),
        })
    }

    /// Three-level model `x^2 I + [[x, c, c], [c, -x, c], [c, c, 2]]`.
    ///
    /// The lower pair has an avoided crossing at the origin with gap of order `c`;
    /// all three eigenvectors vary with `x`, unlike the two-level family where the
    /// curvature correction is proportional to the identity.
    pub fn three_level_crossing(coupling: f64) -> Result<Self> {
        ensure_positive("coupling", coupling)?;
        let c = coupling;
        let mut pot = Self::from_fn(3, move |x| {
            let x2 = x * x;
            let base = [[x, c, c], [c, -x, c], [c, c, 2.0]];
            Mat::from_fn(3, 3, |i, j| base[i][j] + if i == j { x2 } else { 0.0 })
        })?;
        pot.params = vec![("coupling", c)];
        Ok(pot)
    }

    pub fn dim(&self) -> usize {
        match &self.kind {
            Kind::AvoidedCrossing { .. } => 2,
            Kind::Diagonal(s) => s.len(),
            Kind::Callback { dim, .. } => *dim,
        }
    }

    pub fn params(&self) -> &[(&'static str, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|p| p.1)
    }

    /// `V(x)`.
    pub fn evaluate(&self, x: f64) -> Mat<f64> {
        match &self.kind {
            Kind::AvoidedCrossing { .. } => self.eigen(x).reconstruct(),
            Kind::Diagonal(s) => {
                let d = s.len();
                Mat::from_fn(d, d, |i, j| if i == j { s[i].value(x) } else { 0.0 })
            }
            Kind::Callback { eval, .. } => eval(x),
        }
    }

    /// Like [`evaluate`](Self::evaluate) but rejects non-finite entries.
    pub fn evaluate_checked(&self, x: f64) -> Result<Mat<f64>> {
        let v = self.evaluate(x);
        let d = self.dim();
        if v.nrows() != d || v.ncols() != d {
            return Err(invalid(
                "potential",
                format!("callback returned {}x{} matrix, expected {d}x{d}", v.nrows(), v.ncols()),
            ));
        }
        for j in 0..d {
            for i in 0..d {
                if !v[(i, j)].is_finite() {
                    return Err(Error::NonFinitePotential { x });
                }
            }
        }
        Ok(v)
    }

    /// Ascending eigenvalues and eigenvector columns, first nonzero component positive.
    pub fn eigen(&self, x: f64) -> EigenDecomposition {
        match &self.kind {
            Kind::AvoidedCrossing { delta, a, b } => {
                let (l1, l2) = crossing_values(x, *delta, *a, *b);
                let (c, s) = crossing_rotation(x, *delta);
                // psi_1 = (c, -s), psi_2 = (s, c)
                EigenDecomposition {
                    values: vec![l1, l2],
                    vectors: Mat::from_fn(2, 2, |i, j| match (i, j) {
                        (0, 0) => c,
                        (1, 0) => -s,
                        (0, 1) => s,
                        _ => c,
                    }),
                }
            }
            Kind::Diagonal(surfaces) => {
                let vals: Vec<f64> = surfaces.iter().map(|s| s.value(x)).collect();
                let order = sorted_order(&vals);
                let d = vals.len();
                EigenDecomposition {
                    values: order.iter().map(|&k| vals[k]).collect(),
                    vectors: Mat::from_fn(d, d, |i, j| if order[j] == i { 1.0 } else { 0.0 }),
                }
            }
            Kind::Callback { .. } => symmetric_eigen(&self.evaluate(x)),
        }
    }

    /// `lambda_j(x)` for the zero-based surface index `j`.
    pub fn surface(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        Ok(match &self.kind {
            Kind::AvoidedCrossing { delta, a, b } => {
                let (l1, l2) = crossing_values(x, *delta, *a, *b);
                if j == 0 {
                    l1
                } else {
                    l2
                }
            }
            Kind::Diagonal(s) => s[j].value(x),
            _ => self.eigen(x).values[j],
        })
    }

    /// All surfaces at `x`, ascending.
    pub fn surfaces(&self, x: f64) -> Vec<f64> {
        match &self.kind {
            Kind::AvoidedCrossing { delta, a, b } => {
                let (l1, l2) = crossing_values(x, *delta, *a, *b);
                vec![l1, l2]
            }
            _ => self.eigen(x).values,
        }
    }

    /// `d lambda_j / dx`.
    ///
    /// Analytic for the avoided-crossing family and for surfaces built with a
    /// derivative; otherwise a central difference with step [`FD_STEP`] after
    /// checking that `lambda_j` is separated from its neighbours.
    pub fn surface_derivative(&self, j: usize, x: f64) -> Result<f64> {
        self.check_index(j)?;
        match &self.kind {
            Kind::AvoidedCrossing { delta, a, b } => {
                let s = (delta * delta + x * x).sqrt();
                Ok(if j == 0 {
                    2.0 * x - x / s - a * b * (b * x).sin()
                } else {
                    2.0 * x + x / s
                })
            }
            // supplied surfaces are smooth functions in their own right
            Kind::Diagonal(surfaces) => Ok(surfaces[j].derivative(x)),
            Kind::Callback { .. } => {
                self.check_gap(j, x, &self.eigen(x).values)?;
                let up = self.eigen(x + FD_STEP).values[j];
                let down = self.eigen(x - FD_STEP).values[j];
                Ok((up - down) / (2.0 * FD_STEP))
            }
        }
    }

    /// Smallest gap between consecutive eigenvalues over the grid, with its location.
    pub fn min_gap(&self, grid: &SpatialGrid) -> (f64, f64) {
        grid.nodes()
            .into_iter()
            .map(|x| {
                let v = self.surfaces(x);
                let g = v.windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
                (g, x)
            })
            .fold((f64::INFINITY, 0.0), |acc, c| if c.0 < acc.0 { c } else { acc })
    }

    fn check_index(&self, j: usize) -> Result<()> {
        if j < self.dim() {
            Ok(())
        } else {
            Err(Error::SurfaceIndex {
                index: j,
                dim: self.dim(),
            })
        }
    }

    fn check_gap(&self, j: usize, x: f64, values: &[f64]) -> Result<()> {
        let neighbours = [j.checked_sub(1), Some(j + 1).filter(|&k| k < values.len())];
        for k in neighbours.into_iter().flatten() {
            let gap = (values[j] - values[k]).abs();
            if gap < MIN_DERIVATIVE_GAP {
                return Err(Error::DegenerateSurface {
                    x,
                    lower: j.min(k),
                    upper: j.max(k),
                    gap,
                });
            }
        }
        Ok(())
    }
}

fn crossing_values(x: f64, delta: f64, a: f64, b: f64) -> (f64, f64) {
    let s = (delta * delta + x * x).sqrt();
    let x2 = x * x;
    (x2 - s + (a * (b * x).cos() - 1.0), x2 + s)
}

/// `(1, r) / sqrt(1 + r^2)` components with `r = (x + s) / delta`, computed without cancellation.
fn crossing_rotation(x: f64, delta: f64) -> (f64, f64) {
    let s = (delta * delta + x * x).sqrt();
    let x_plus_s = if x >= 0.0 { x + s } else { delta * delta / (s - x) };
    let r = x_plus_s / delta;
    let n = r.hypot(1.0);
    (1.0 / n, r / n)
}

fn sorted_order(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&i, &j| values[i].total_cmp(&values[j]));
    order
}

/// Closed-form eigen-decomposition of `[[a, b], [b, c]]`.
///
/// Returns `(lambda_1, lambda_2, Psi)` with `lambda_1 <= lambda_2`; exactly
/// degenerate input returns the identity basis.
pub fn eig2(a: f64, b: f64, c: f64) -> (f64, f64, [[f64; 2]; 2]) {
    let mean = 0.5 * (a + c);
    let half = 0.5 * (a - c);
    let r = half.hypot(b);
    if r == 0.0 {
        return (a, c, [[1.0, 0.0], [0.0, 1.0]]);
    }
    let theta = 0.5 * b.atan2(half);
    let (sn, cs) = theta.sin_cos();
    // upper eigenvector (cos, sin), lower (-sin, cos)
    let mut lower = [-sn, cs];
    let mut upper = [cs, sn];
    fix_sign(&mut lower);
    fix_sign(&mut upper);
    (
        mean - r,
        mean + r,
        [[lower[0], upper[0]], [lower[1], upper[1]]],
    )
}

fn fix_sign(v: &mut [f64]) {
    let scale = v.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    if let Some(first) = v.iter().find(|c| c.abs() > 1e-12 * scale).copied() {
        if first < 0.0 {
            v.iter_mut().for_each(|c| *c = -*c);
        }
    }
}

/// Dense symmetric eigensolve with the same ordering and sign convention as [`eig2`].
pub fn symmetric_eigen(v: &Mat<f64>) -> EigenDecomposition {
    let d = v.nrows();
    if d == 1 {
        return EigenDecomposition {
            values: vec![v[(0, 0)]],
            vectors: Mat::from_fn(1, 1, |_, _| 1.0),
        };
    }
    if d == 2 {
        let (l1, l2, p) = eig2(v[(0, 0)], 0.5 * (v[(0, 1)] + v[(1, 0)]), v[(1, 1)]);
        return EigenDecomposition {
            values: vec![l1, l2],
            vectors: Mat::from_fn(2, 2, |i, j| p[i][j]),
        };
    }
    let evd = v
        .self_adjoint_eigen(Side::Lower)
        .expect("small symmetric eigenproblem converges");
    let s = evd.S().column_vector();
    let u = evd.U();
    let values: Vec<f64> = (0..d).map(|i| s[i]).collect();
    let mut vectors = Mat::from_fn(d, d, |i, j| u[(i, j)]);
    for j in 0..d {
        let mut col: Vec<f64> = (0..d).map(|i| vectors[(i, j)]).collect();
        fix_sign(&mut col);
        for i in 0..d {
            vectors[(i, j)] = col[i];
        }
    }
    EigenDecomposition { values, vectors }
}

//! Matrix-valued fields on a coordinate chart.
//!
//! Base metrics, fiber metrics and gauge potentials are all evaluated as
//! `x ↦ matrix` closures with an optional closed-form first derivative.
//! When no derivative is supplied, callers fall back to central differences.

use std::sync::Arc;

use nalgebra::DMatrix;

pub type MatrixFn = dyn Fn(&[f64]) -> DMatrix<f64> + Send + Sync;
pub type MatrixDerivFn = dyn Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync;

pub trait MatrixField: Send + Sync {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn eval(&self, x: &[f64]) -> DMatrix<f64>;
    /// `∂_λ M` for every coordinate `λ`, if known in closed form.
    fn derivative(&self, _x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        None
    }
}

/// Second-order central difference of `field` at `x` with step `h`.
pub fn central_derivative(field: &dyn MatrixField, x: &[f64], h: f64) -> Vec<DMatrix<f64>> {
    let mut xp = x.to_vec();
    (0..x.len())
        .map(|l| {
            xp[l] = x[l] + h;
            let fp = field.eval(&xp);
            xp[l] = x[l] - h;
            let fm = field.eval(&xp);
            xp[l] = x[l];
            (fp - fm) / (2.0 * h)
        })
        .collect()
}

/// Richardson gap between the step-`h` and step-`h/2` difference quotients.
/// For a smooth field it is O(h²).
pub fn richardson_gap(field: &dyn MatrixField, x: &[f64], h: f64) -> f64 {
    let a = central_derivative(field, x, h);
    let b = central_derivative(field, x, h / 2.0);
    a.iter()
        .zip(&b)
        .map(|(p, q)| (p - q).amax())
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone)]
pub struct ConstantMatrix(pub DMatrix<f64>);

impl MatrixField for ConstantMatrix {
    fn rows(&self) -> usize {
        self.0.nrows()
    }
    fn cols(&self) -> usize {
        self.0.ncols()
    }
    fn eval(&self, _x: &[f64]) -> DMatrix<f64> {
        self.0.clone()
    }
    fn derivative(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        Some(vec![DMatrix::zeros(self.0.nrows(), self.0.ncols()); x.len()])
    }
}

/// `M(x) = c0 + Σ_k x_k c1[k] + Σ_{k,l} x_k x_l c2[k][l]`.
#[derive(Debug, Clone)]
pub struct QuadraticMatrix {
    pub c0: DMatrix<f64>,
    pub c1: Vec<DMatrix<f64>>,
    pub c2: Vec<Vec<DMatrix<f64>>>,
}

impl QuadraticMatrix {
    pub fn constant(c0: DMatrix<f64>, dim: usize) -> Self {
        let z = DMatrix::zeros(c0.nrows(), c0.ncols());
        Self {
            c1: vec![z.clone(); dim],
            c2: vec![vec![z; dim]; dim],
            c0,
        }
    }

    pub fn linear(c0: DMatrix<f64>, c1: Vec<DMatrix<f64>>) -> Self {
        let z = DMatrix::zeros(c0.nrows(), c0.ncols());
        let dim = c1.len();
        Self {
            c0,
            c1,
            c2: vec![vec![z; dim]; dim],
        }
    }
}

impl MatrixField for QuadraticMatrix {
    fn rows(&self) -> usize {
        self.c0.nrows()
    }
    fn cols(&self) -> usize {
        self.c0.ncols()
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = self.c0.clone();
        for (k, xk) in x.iter().enumerate() {
            m += &self.c1[k] * *xk;
            for (l, xl) in x.iter().enumerate() {
                m += &self.c2[k][l] * (xk * xl);
            }
        }
        m
    }
    fn derivative(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        Some(
            (0..x.len())
                .map(|lam| {
                    let mut d = self.c1[lam].clone();
                    for (l, xl) in x.iter().enumerate() {
                        d += (&self.c2[lam][l] + &self.c2[l][lam]) * *xl;
                    }
                    d
                })
                .collect(),
        )
    }
}

/// Conformally flat metric `c / (1 + |x|²)² · δ`.
///
/// `c = 4` is the unit round sphere in stereographic coordinates, `c = 1`
/// the sphere of radius ½.
#[derive(Debug, Clone, Copy)]
pub struct ConformalSphere {
    pub dim: usize,
    pub c: f64,
}

impl MatrixField for ConformalSphere {
    fn rows(&self) -> usize {
        self.dim
    }
    fn cols(&self) -> usize {
        self.dim
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let rho = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        DMatrix::identity(self.dim, self.dim) * (self.c / (rho * rho))
    }
    fn derivative(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let rho = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        let k = -4.0 * self.c / (rho * rho * rho);
        Some(
            x.iter()
                .map(|xl| DMatrix::identity(self.dim, self.dim) * (k * xl))
                .collect(),
        )
    }
}

/// Diagonal metric whose first entry is scaled by `exp(rate · x[coord])`.
#[derive(Debug, Clone)]
pub struct ExpDiagonal {
    pub diag: Vec<f64>,
    pub coord: usize,
    pub rate: f64,
}

impl MatrixField for ExpDiagonal {
    fn rows(&self) -> usize {
        self.diag.len()
    }
    fn cols(&self) -> usize {
        self.diag.len()
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        let mut m = DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(&self.diag));
        m[(0, 0)] *= (self.rate * x[self.coord]).exp();
        m
    }
    fn derivative(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        let n = self.diag.len();
        Some(
            (0..x.len())
                .map(|l| {
                    let mut d = DMatrix::zeros(n, n);
                    if l == self.coord {
                        d[(0, 0)] = self.rate * self.diag[0] * (self.rate * x[l]).exp();
                    }
                    d
                })
                .collect(),
        )
    }
}

/// Closure-backed field.
#[derive(Clone)]
pub struct FnMatrix {
    pub rows: usize,
    pub cols: usize,
    pub f: Arc<MatrixFn>,
    pub df: Option<Arc<MatrixDerivFn>>,
}

impl FnMatrix {
    pub fn new(
        rows: usize,
        cols: usize,
        f: impl Fn(&[f64]) -> DMatrix<f64> + Send + Sync + 'static,
    ) -> Self {
        Self {
            rows,
            cols,
            f: Arc::new(f),
            df: None,
        }
    }

    pub fn with_derivative(
        mut self,
        df: impl Fn(&[f64]) -> Vec<DMatrix<f64>> + Send + Sync + 'static,
    ) -> Self {
        self.df = Some(Arc::new(df));
        self
    }
}

impl std::fmt::Debug for FnMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "FnMatrix({}x{})", self.rows, self.cols)
    }
}

impl MatrixField for FnMatrix {
    fn rows(&self) -> usize {
        self.rows
    }
    fn cols(&self) -> usize {
        self.cols
    }
    fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        (self.f)(x)
    }
    fn derivative(&self, x: &[f64]) -> Option<Vec<DMatrix<f64>>> {
        self.df.as_ref().map(|df| df(x))
    }
}

/// Symmetric positive definite test via Cholesky after a symmetry check.
pub fn is_spd(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() || m.iter().any(|v| !v.is_finite()) {
        return false;
    }
    let scale = m.amax().max(1.0);
    if (m - m.transpose()).amax() > tol * scale {
        return false;
    }
    nalgebra::Cholesky::new(m.clone()).is_some()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quadratic_derivative_matches_differences() {
        let c0 = DMatrix::from_row_slice(2, 2, &[2.0, 0.1, 0.1, 3.0]);
        let c1 = vec![
            DMatrix::from_row_slice(2, 2, &[0.3, 0.2, 0.2, -0.1]),
            DMatrix::from_row_slice(2, 2, &[0.0, 0.5, 0.5, 0.4]),
        ];
        let mut q = QuadraticMatrix::linear(c0, c1);
        q.c2[0][1] = DMatrix::from_row_slice(2, 2, &[0.7, 0.0, 0.0, 0.2]);
        let x = [0.3, -0.4];
        let exact = q.derivative(&x).unwrap();
        let fd = central_derivative(&q, &x, 1e-4);
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).amax() < 1e-10);
        }
    }

    #[test]
    fn conformal_derivative_matches_differences() {
        let g = ConformalSphere { dim: 2, c: 4.0 };
        let x = [0.6, -1.1];
        let exact = g.derivative(&x).unwrap();
        let fd = central_derivative(&g, &x, 1e-5);
        for (a, b) in exact.iter().zip(&fd) {
            assert!((a - b).amax() < 1e-9);
        }
        assert!(richardson_gap(&g, &x, 1e-3) < 1e-6);
    }
}

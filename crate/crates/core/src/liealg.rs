//! Lie-algebra kernel: structure constants, adjoint and coadjoint actions,
//! quaternion and octonion arithmetic, fiber metrics on the algebra.

use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, KkError, Result};
use crate::fields::{central_derivative, is_spd, ConstantMatrix, MatrixField};
use crate::jet::Scalar;
use crate::tensor::Tensor3;

/// Real quaternion `w + x i + y j + z k`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Quaternion<S = f64> {
    pub w: S,
    pub x: S,
    pub y: S,
    pub z: S,
}

impl<S: Scalar> Quaternion<S> {
    pub fn new(w: S, x: S, y: S, z: S) -> Self {
        Self { w, x, y, z }
    }

    pub fn from_array(c: [S; 4]) -> Self {
        Self::new(c[0], c[1], c[2], c[3])
    }

    pub fn to_array(self) -> [S; 4] {
        [self.w, self.x, self.y, self.z]
    }

    pub fn zero() -> Self {
        Self::new(S::zero(), S::zero(), S::zero(), S::zero())
    }

    pub fn real(w: S) -> Self {
        Self::new(w, S::zero(), S::zero(), S::zero())
    }

    /// Purely imaginary quaternion with coefficients on `i, j, k`.
    pub fn imag(v: [S; 3]) -> Self {
        Self::new(S::zero(), v[0], v[1], v[2])
    }

    pub fn conj(self) -> Self {
        Self::new(self.w, -self.x, -self.y, -self.z)
    }

    pub fn norm2(self) -> S {
        self.w * self.w + self.x * self.x + self.y * self.y + self.z * self.z
    }

    pub fn norm(self) -> S {
        self.norm2().sqrt()
    }

    pub fn scale(self, s: S) -> Self {
        Self::new(self.w * s, self.x * s, self.y * s, self.z * s)
    }

    /// Euclidean inner product on ℝ⁴.
    pub fn dot(self, o: Self) -> S {
        self.w * o.w + self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn im(self) -> [S; 3] {
        [self.x, self.y, self.z]
    }
}

impl Quaternion<f64> {
    pub const ONE: Self = Self { w: 1.0, x: 0.0, y: 0.0, z: 0.0 };
    pub const I: Self = Self { w: 0.0, x: 1.0, y: 0.0, z: 0.0 };
    pub const J: Self = Self { w: 0.0, x: 0.0, y: 1.0, z: 0.0 };
    pub const K: Self = Self { w: 0.0, x: 0.0, y: 0.0, z: 1.0 };

    /// `1, i, j, k` by index.
    pub fn basis(n: usize) -> Self {
        [Self::ONE, Self::I, Self::J, Self::K][n]
    }

    pub fn lift<T: Scalar>(self) -> Quaternion<T> {
        Quaternion::new(T::cst(self.w), T::cst(self.x), T::cst(self.y), T::cst(self.z))
    }
}

impl<S: Scalar> Add for Quaternion<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.w + o.w, self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl<S: Scalar> Sub for Quaternion<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(self.w - o.w, self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl<S: Scalar> Neg for Quaternion<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Self::new(-self.w, -self.x, -self.y, -self.z)
    }
}

impl<S: Scalar> Mul for Quaternion<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let (a, b) = (self, o);
        Self::new(
            a.w * b.w - a.x * b.x - a.y * b.y - a.z * b.z,
            a.w * b.x + a.x * b.w + a.y * b.z - a.z * b.y,
            a.w * b.y - a.x * b.z + a.y * b.w + a.z * b.x,
            a.w * b.z + a.x * b.y - a.y * b.x + a.z * b.w,
        )
    }
}

/// Octonion as a Cayley-Dickson pair `a + b·l` of quaternions.
///
/// Coefficient order is `1, i, j, k, l, il, jl, kl`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Octonion {
    pub a: Quaternion,
    pub b: Quaternion,
}

impl Octonion {
    pub fn new(a: Quaternion, b: Quaternion) -> Self {
        Self { a, b }
    }

    pub fn from_array(c: [f64; 8]) -> Self {
        Self {
            a: Quaternion::new(c[0], c[1], c[2], c[3]),
            b: Quaternion::new(c[4], c[5], c[6], c[7]),
        }
    }

    pub fn to_array(self) -> [f64; 8] {
        let (a, b) = (self.a.to_array(), self.b.to_array());
        [a[0], a[1], a[2], a[3], b[0], b[1], b[2], b[3]]
    }

    pub fn basis(n: usize) -> Self {
        let mut c = [0.0; 8];
        c[n] = 1.0;
        Self::from_array(c)
    }

    pub fn conj(self) -> Self {
        Self::new(self.a.conj(), -self.b)
    }

    pub fn norm(self) -> f64 {
        (self.a.norm2() + self.b.norm2()).sqrt()
    }
}

/// Cayley-Dickson product `(a,b)(c,d) = (ac − d̄b, da + bc̄)`.
pub fn oct_mul(x: Octonion, y: Octonion) -> Octonion {
    let (a, b, c, d) = (x.a, x.b, y.a, y.b);
    Octonion::new(a * c - d.conj() * b, d * a + b * c.conj())
}

impl Mul for Octonion {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        oct_mul(self, o)
    }
}

/// Lie algebra given by bracket coefficients `C^c_{ab}` (output, left, right).
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    dim: usize,
    c: Tensor3,
}

impl StructureConstants {
    /// Validates shape and antisymmetry. The Jacobi identity is reported by
    /// [`StructureConstants::jacobi_defect`] rather than enforced, so that
    /// candidate constants can be inspected.
    pub fn new(c: Tensor3) -> Result<Self> {
        let [d0, d1, d2] = c.shape();
        if d0 == 0 || d0 != d1 || d1 != d2 {
            return Err(KkError::Input(format!(
                "structure constants must be d×d×d, got {d0}×{d1}×{d2}"
            )));
        }
        for k in 0..d0 {
            for a in 0..d0 {
                for b in 0..d0 {
                    if (c[(k, a, b)] + c[(k, b, a)]).abs() > 1e-12 {
                        return Err(KkError::Input(format!(
                            "structure constants not antisymmetric at ({k},{a},{b})"
                        )));
                    }
                }
            }
        }
        Ok(Self { dim: d0, c })
    }

    pub fn abelian(dim: usize) -> Self {
        Self {
            dim,
            c: Tensor3::zeros(dim, dim, dim),
        }
    }

    /// `su(2)` on the basis `i, j, k` with the quaternion commutator.
    pub fn su2() -> Self {
        Self::from_quaternion_basis(&[Quaternion::I, Quaternion::J, Quaternion::K])
    }

    /// Reads `[e_a, e_b] = e_a e_b − e_b e_a` off an orthogonal quaternion basis.
    pub fn from_quaternion_basis(basis: &[Quaternion]) -> Self {
        let d = basis.len();
        let mut c = Tensor3::zeros(d, d, d);
        for a in 0..d {
            for b in 0..d {
                let comm = basis[a] * basis[b] - basis[b] * basis[a];
                for (k, e) in basis.iter().enumerate() {
                    c[(k, a, b)] = comm.dot(*e) / e.norm2();
                }
            }
        }
        Self { dim: d, c }
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn coeff(&self, c: usize, a: usize, b: usize) -> f64 {
        self.c[(c, a, b)]
    }

    pub fn tensor(&self) -> &Tensor3 {
        &self.c
    }

    pub fn is_abelian(&self) -> bool {
        self.c.max_abs() == 0.0
    }

    /// Largest violation of the Jacobi identity over all index tuples.
    pub fn jacobi_defect(&self) -> f64 {
        let d = self.dim;
        let c = &self.c;
        let mut worst = 0.0f64;
        for a in 0..d {
            for b in 0..d {
                for cc in 0..d {
                    for f in 0..d {
                        let mut s = 0.0;
                        for e in 0..d {
                            s += c[(e, a, b)] * c[(f, e, cc)]
                                + c[(e, b, cc)] * c[(f, e, a)]
                                + c[(e, cc, a)] * c[(f, e, b)];
                        }
                        worst = worst.max(s.abs());
                    }
                }
            }
        }
        worst
    }

    /// `[ξ, η]^c = C^c_{ab} ξ^a η^b`.
    pub fn bracket(&self, xi: &[f64], eta: &[f64]) -> Result<Vec<f64>> {
        check_len("bracket left", self.dim, xi.len())?;
        check_len("bracket right", self.dim, eta.len())?;
        Ok(self.bracket_unchecked(xi, eta))
    }

    pub(crate) fn bracket_unchecked(&self, xi: &[f64], eta: &[f64]) -> Vec<f64> {
        let d = self.dim;
        let mut out = vec![0.0; d];
        for (k, o) in out.iter_mut().enumerate() {
            for a in 0..d {
                if xi[a] == 0.0 {
                    continue;
                }
                for b in 0..d {
                    *o += self.c[(k, a, b)] * xi[a] * eta[b];
                }
            }
        }
        out
    }

    /// Matrix of `ad_ζ = [ζ, ·]`: entry `(c, b)` is `C^c_{ab} ζ^a`.
    pub fn ad_matrix(&self, zeta: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |c, b| (0..d).map(|a| self.c[(c, a, b)] * zeta[a]).sum())
    }

    /// `ad*_ζ ξ = β̄⁻¹ ad_ζᵀ β̄ ξ`, the β̄-adjoint of `ad_ζ`.
    pub fn ad_star(&self, beta: &DMatrix<f64>, zeta: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        check_len("ad_star ζ", self.dim, zeta.len())?;
        check_len("ad_star ξ", self.dim, xi.len())?;
        let m = self.ad_star_matrix(beta, zeta)?;
        Ok((m * DVector::from_column_slice(xi)).as_slice().to_vec())
    }

    pub fn ad_star_matrix(&self, beta: &DMatrix<f64>, zeta: &[f64]) -> Result<DMatrix<f64>> {
        check_len("ad_star metric", self.dim, beta.nrows())?;
        let inv = spd_inverse(beta).ok_or(KkError::Singular {
            what: "fiber metric",
            point: vec![],
        })?;
        Ok(inv * self.ad_matrix(zeta).transpose() * beta)
    }

    /// Checks `β(ad_ξ ξ₁, ξ₂) + β(ξ₁, ad_ξ ξ₂) = 0` on all basis triples.
    pub fn is_ad_invariant(&self, beta: &DMatrix<f64>) -> bool {
        self.ad_invariance_defect(beta) <= 1e-12 * beta.amax().max(1.0)
    }

    pub fn ad_invariance_defect(&self, beta: &DMatrix<f64>) -> f64 {
        let d = self.dim;
        let mut worst = 0.0f64;
        for a in 0..d {
            let mut e = vec![0.0; d];
            e[a] = 1.0;
            let ad = self.ad_matrix(&e);
            let s = ad.transpose() * beta + beta * &ad;
            worst = worst.max(s.amax());
        }
        worst
    }
}

/// Inverse of a symmetric positive definite matrix, `None` when singular.
pub fn spd_inverse(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if m.iter().any(|v| !v.is_finite()) {
        return None;
    }
    nalgebra::Cholesky::new(m.clone()).map(|c| c.inverse())
}

/// Fiber metric `β̄(x)` on the Lie algebra.
#[derive(Clone)]
pub struct AlgebraMetric {
    dim: usize,
    field: Arc<dyn MatrixField>,
    is_constant: bool,
    tolerance: f64,
    fd_step: f64,
}

impl std::fmt::Debug for AlgebraMetric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("AlgebraMetric")
            .field("dim", &self.dim)
            .field("is_constant", &self.is_constant)
            .field("tolerance", &self.tolerance)
            .finish()
    }
}

impl AlgebraMetric {
    pub fn constant(beta: DMatrix<f64>) -> Result<Self> {
        if !is_spd(&beta, 1e-12) {
            return Err(KkError::Singular {
                what: "fiber metric",
                point: vec![],
            });
        }
        Ok(Self {
            dim: beta.nrows(),
            field: Arc::new(ConstantMatrix(beta)),
            is_constant: true,
            tolerance: 1e-12,
            fd_step: 1e-5,
        })
    }

    pub fn identity(dim: usize) -> Self {
        Self::constant(DMatrix::identity(dim, dim)).expect("identity is positive definite")
    }

    /// A point-dependent metric, checked for positive definiteness on
    /// `samples` before it is accepted.
    pub fn field(field: Arc<dyn MatrixField>, samples: &[Vec<f64>]) -> Result<Self> {
        if field.rows() != field.cols() {
            return Err(KkError::Input("fiber metric must be square".into()));
        }
        for x in samples {
            if !is_spd(&field.eval(x), 1e-12) {
                return Err(KkError::Singular {
                    what: "fiber metric",
                    point: x.clone(),
                });
            }
        }
        Ok(Self {
            dim: field.rows(),
            field,
            is_constant: false,
            tolerance: 1e-12,
            fd_step: 1e-5,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn is_constant(&self) -> bool {
        self.is_constant
    }

    pub fn tolerance(&self) -> f64 {
        self.tolerance
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        self.field.eval(x)
    }

    /// `∂_μ β̄` for each base coordinate.
    pub fn derivative(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        if self.is_constant {
            return vec![DMatrix::zeros(self.dim, self.dim); x.len()];
        }
        self.field
            .derivative(x)
            .unwrap_or_else(|| central_derivative(self.field.as_ref(), x, self.fd_step))
    }

    pub fn field_ref(&self) -> &Arc<dyn MatrixField> {
        &self.field
    }
}

//! Local Kaluza-Klein calculus on a trivialization `U × G`.
//!
//! The adapted frame is `E_μ = ∂_μ − A^a_μ ξ^R_a`, `E_a = ξ^R_a`. In this frame
//! the metric is block diagonal `(ḡ, β̄)` and the frame brackets are
//! `[E_μ,E_ν] = −F^c_{μν} E_c`, `[E_μ,E_a] = [A_μ,ξ_a]^c E_c` and
//! `[E_a,E_b] = −C^c_{ab} E_c`.
//!
//! Frame indices run over `0..m` (horizontal, `μ`) followed by `m..m+d`
//! (vertical, `a`).

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{check_len, KkError, Result};
use crate::fields::{central_derivative, ConformalSphere, ConstantMatrix, MatrixField, QuadraticMatrix};
use crate::liealg::{spd_inverse, AlgebraMetric, StructureConstants};
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Use the closed-form derivative supplied by the field.
    Analytic,
    /// Second-order central differences with the chart's step.
    CentralDifference,
}

/// Coordinate chart of the base with its Riemannian metric `ḡ`.
#[derive(Clone)]
pub struct BaseChart {
    field: Arc<dyn MatrixField>,
    mode: DerivativeMode,
    fd_step: f64,
}

impl std::fmt::Debug for BaseChart {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("BaseChart")
            .field("dim", &self.dim())
            .field("mode", &self.mode)
            .field("fd_step", &self.fd_step)
            .finish()
    }
}

impl BaseChart {
    pub fn new(field: Arc<dyn MatrixField>, mode: DerivativeMode) -> Result<Self> {
        if field.rows() != field.cols() {
            return Err(KkError::Input("base metric must be square".into()));
        }
        if mode == DerivativeMode::Analytic {
            let probe = vec![0.0; field.rows()];
            if field.derivative(&probe).is_none() {
                return Err(KkError::Input(
                    "analytic Christoffel mode needs a metric derivative".into(),
                ));
            }
        }
        Ok(Self {
            field,
            mode,
            fd_step: 1e-5,
        })
    }

    pub fn euclidean(m: usize) -> Self {
        Self::new(
            Arc::new(ConstantMatrix(DMatrix::identity(m, m))),
            DerivativeMode::Analytic,
        )
        .expect("constant metric")
    }

    /// Round sphere in stereographic coordinates, `ḡ = c/(1+|x|²)² δ`.
    pub fn stereographic_sphere(m: usize, c: f64) -> Self {
        Self::new(Arc::new(ConformalSphere { dim: m, c }), DerivativeMode::Analytic)
            .expect("closed-form derivative")
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn with_mode(mut self, mode: DerivativeMode) -> Result<Self> {
        self = Self::new(self.field, mode)?.with_fd_step(self.fd_step);
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.field.rows()
    }

    pub fn mode(&self) -> DerivativeMode {
        self.mode
    }

    pub fn metric(&self, x: &[f64]) -> DMatrix<f64> {
        self.field.eval(x)
    }

    pub fn metric_derivative(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match self.mode {
            DerivativeMode::Analytic => self
                .field
                .derivative(x)
                .expect("checked at construction"),
            DerivativeMode::CentralDifference => {
                central_derivative(self.field.as_ref(), x, self.fd_step)
            }
        }
    }

    /// `Γ̄^ρ_{μν}` as `[ρ][μ][ν]`.
    pub fn christoffel(&self, x: &[f64]) -> Result<Tensor3> {
        check_len("christoffel point", self.dim(), x.len())?;
        let g = self.metric(x);
        let ginv = spd_inverse(&g).ok_or_else(|| KkError::Singular {
            what: "base metric",
            point: x.to_vec(),
        })?;
        Ok(christoffel_from(&ginv, &self.metric_derivative(x)))
    }
}

pub(crate) fn christoffel_from(ginv: &DMatrix<f64>, dg: &[DMatrix<f64>]) -> Tensor3 {
    let m = ginv.nrows();
    // first kind: Γ_{σμν} = ½(∂_μ g_{σν} + ∂_ν g_{σμ} − ∂_σ g_{μν})
    let mut first = Tensor3::zeros(m, m, m);
    for s in 0..m {
        for mu in 0..m {
            for nu in mu..m {
                let v = 0.5 * (dg[mu][(s, nu)] + dg[nu][(s, mu)] - dg[s][(mu, nu)]);
                first[(s, mu, nu)] = v;
                first[(s, nu, mu)] = v;
            }
        }
    }
    let mut gam = Tensor3::zeros(m, m, m);
    for r in 0..m {
        for mu in 0..m {
            for nu in mu..m {
                let v: f64 = (0..m).map(|s| ginv[(r, s)] * first[(s, mu, nu)]).sum();
                gam[(r, mu, nu)] = v;
                gam[(r, nu, mu)] = v;
            }
        }
    }
    gam
}

/// Gauge potential `A^a_μ(x)`, a `d × m` matrix field.
#[derive(Clone)]
pub struct GaugePotential {
    field: Arc<dyn MatrixField>,
    mode: DerivativeMode,
    fd_step: f64,
}

impl std::fmt::Debug for GaugePotential {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GaugePotential")
            .field("d", &self.field.rows())
            .field("m", &self.field.cols())
            .field("mode", &self.mode)
            .finish()
    }
}

impl GaugePotential {
    pub fn new(field: Arc<dyn MatrixField>, mode: DerivativeMode) -> Result<Self> {
        if mode == DerivativeMode::Analytic {
            let probe = vec![0.0; field.cols()];
            if field.derivative(&probe).is_none() {
                return Err(KkError::Input(
                    "analytic gauge mode needs a potential derivative".into(),
                ));
            }
        }
        Ok(Self {
            field,
            mode,
            fd_step: 1e-5,
        })
    }

    pub fn zero(d: usize, m: usize) -> Self {
        Self::constant(DMatrix::zeros(d, m))
    }

    pub fn constant(a: DMatrix<f64>) -> Self {
        Self::new(Arc::new(ConstantMatrix(a)), DerivativeMode::Analytic).expect("constant")
    }

    /// Abelian potential `(B/2)(−y dx + x dy)` on the plane, `F¹_{12} = B`.
    pub fn symmetric_planar(b: f64) -> Self {
        let c1 = vec![
            DMatrix::from_row_slice(1, 2, &[0.0, 0.5 * b]),
            DMatrix::from_row_slice(1, 2, &[-0.5 * b, 0.0]),
        ];
        let q = QuadraticMatrix::linear(DMatrix::zeros(1, 2), c1);
        Self::new(Arc::new(q), DerivativeMode::Analytic).expect("closed form")
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = h;
        self
    }

    pub fn algebra_dim(&self) -> usize {
        self.field.rows()
    }

    pub fn base_dim(&self) -> usize {
        self.field.cols()
    }

    pub fn eval(&self, x: &[f64]) -> DMatrix<f64> {
        self.field.eval(x)
    }

    /// `∂_ν A` for every `ν`; entry `(a, μ)` of element `ν` is `∂_ν A^a_μ`.
    pub fn derivative(&self, x: &[f64]) -> Vec<DMatrix<f64>> {
        match self.mode {
            DerivativeMode::Analytic => self.field.derivative(x).expect("checked"),
            DerivativeMode::CentralDifference => {
                central_derivative(self.field.as_ref(), x, self.fd_step)
            }
        }
    }

    pub fn field_ref(&self) -> &Arc<dyn MatrixField> {
        &self.field
    }
}

/// Local Kaluza-Klein bundle data `(ḡ, A, β̄, C)` over a chart.
#[derive(Debug, Clone)]
pub struct KKLocalModel {
    pub base: BaseChart,
    pub gauge: GaugePotential,
    pub fiber: AlgebraMetric,
    pub algebra: StructureConstants,
}

impl KKLocalModel {
    pub fn new(
        base: BaseChart,
        gauge: GaugePotential,
        fiber: AlgebraMetric,
        algebra: StructureConstants,
    ) -> Result<Self> {
        let (m, d) = (base.dim(), algebra.dim());
        check_len("gauge potential rows", d, gauge.algebra_dim())?;
        check_len("gauge potential columns", m, gauge.base_dim())?;
        check_len("fiber metric", d, fiber.dim())?;
        Ok(Self {
            base,
            gauge,
            fiber,
            algebra,
        })
    }

    pub fn base_dim(&self) -> usize {
        self.base.dim()
    }

    pub fn algebra_dim(&self) -> usize {
        self.algebra.dim()
    }

    /// Evaluates every pointwise quantity needed by the frame calculus.
    pub fn at(&self, x: &[f64]) -> Result<PointData> {
        PointData::new(self, x)
    }

    pub fn christoffel(&self, x: &[f64]) -> Result<Tensor3> {
        self.base.christoffel(x)
    }

    pub fn field_strength(&self, x: &[f64]) -> Result<Tensor3> {
        Ok(self.at(x)?.f)
    }

    pub fn b_coeffs(&self, x: &[f64]) -> Result<Tensor3> {
        Ok(self.at(x)?.b)
    }

    pub fn l_coeffs(&self, x: &[f64]) -> Result<Tensor3> {
        Ok(self.at(x)?.l)
    }

    pub fn kk_metric_components(&self, x: &[f64]) -> Result<DMatrix<f64>> {
        Ok(self.at(x)?.kk_metric())
    }

    pub fn frame_connection(&self, x: &[f64]) -> Result<FrameConnection> {
        Ok(self.at(x)?.frame_connection())
    }

    pub fn oneill_t(&self, x: &[f64]) -> Result<FrameTensor> {
        Ok(self.at(x)?.oneill_t())
    }

    pub fn oneill_a(&self, x: &[f64]) -> Result<FrameTensor> {
        Ok(self.at(x)?.oneill_a())
    }

    pub fn theta_tensor(&self, x: &[f64], frame_vec: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        self.at(x)?.theta(frame_vec, xi)
    }

    pub fn lorentz_force_term(&self, x: &[f64], u: &[f64], v: &[f64]) -> Result<Vec<f64>> {
        let p = self.at(x)?;
        check_len("base velocity", p.m, u.len())?;
        check_len("vertical velocity", p.d, v.len())?;
        Ok(p.lorentz_force(u, v))
    }
}

/// All pointwise data of a [`KKLocalModel`] at one base point.
#[derive(Debug, Clone)]
pub struct PointData {
    pub m: usize,
    pub d: usize,
    pub x: Vec<f64>,
    pub gbar: DMatrix<f64>,
    pub gbar_inv: DMatrix<f64>,
    /// `Γ̄^ρ_{μν}` as `[ρ][μ][ν]`.
    pub gamma: Tensor3,
    /// `A^a_μ`, `d × m`.
    pub a: DMatrix<f64>,
    /// `F^a_{μν}` as `[a][μ][ν]`.
    pub f: Tensor3,
    pub beta: DMatrix<f64>,
    pub beta_inv: DMatrix<f64>,
    pub dbeta: Vec<DMatrix<f64>>,
    /// `B_{aμd}` as `[a][μ][d]`.
    pub b: Tensor3,
    /// `L_{acd}` as `[a][c][d]`.
    pub l: Tensor3,
    /// `ad_{A_μ}` for every `μ`; entry `(c, a)` is `[A_μ, ξ_a]^c`.
    pub ad_a: Vec<DMatrix<f64>>,
    pub algebra: StructureConstants,
}

impl PointData {
    pub fn new(model: &KKLocalModel, x: &[f64]) -> Result<Self> {
        let (m, d) = (model.base_dim(), model.algebra_dim());
        check_len("base point", m, x.len())?;
        if x.iter().any(|v| !v.is_finite()) {
            return Err(KkError::Domain(format!("non-finite base point {x:?}")));
        }
        let gbar = model.base.metric(x);
        let gbar_inv = spd_inverse(&gbar).ok_or_else(|| KkError::Singular {
            what: "base metric",
            point: x.to_vec(),
        })?;
        let gamma = christoffel_from(&gbar_inv, &model.base.metric_derivative(x));
        let beta = model.fiber.eval(x);
        let beta_inv = spd_inverse(&beta).ok_or_else(|| KkError::Singular {
            what: "fiber metric",
            point: x.to_vec(),
        })?;
        let dbeta = model.fiber.derivative(x);
        let a = model.gauge.eval(x);
        let da = model.gauge.derivative(x);
        let sc = &model.algebra;

        let ad_a: Vec<DMatrix<f64>> = (0..m)
            .map(|mu| sc.ad_matrix(a.column(mu).as_slice()))
            .collect();

        let mut f = Tensor3::zeros(d, m, m);
        for mu in 0..m {
            for nu in 0..m {
                let br = sc.bracket_unchecked(a.column(mu).as_slice(), a.column(nu).as_slice());
                for c in 0..d {
                    f[(c, mu, nu)] = da[mu][(c, nu)] - da[nu][(c, mu)] + br[c];
                }
            }
        }

        let mut b = Tensor3::zeros(d, m, d);
        for mu in 0..m {
            let bm = &dbeta[mu] - ad_a[mu].transpose() * &beta - &beta * &ad_a[mu];
            for aa in 0..d {
                for dd in 0..d {
                    b[(aa, mu, dd)] = bm[(aa, dd)];
                }
            }
        }

        // K_{a,cd} = β̄(ξ_a, [ξ_c, ξ_d])
        let mut k = Tensor3::zeros(d, d, d);
        for aa in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    k[(aa, c, dd)] = (0..d).map(|e| beta[(aa, e)] * sc.coeff(e, c, dd)).sum();
                }
            }
        }
        let mut l = Tensor3::zeros(d, d, d);
        for aa in 0..d {
            for c in 0..d {
                for dd in 0..d {
                    l[(aa, c, dd)] = k[(aa, c, dd)] - k[(c, dd, aa)] - k[(dd, aa, c)];
                }
            }
        }

        Ok(Self {
            m,
            d,
            x: x.to_vec(),
            gbar,
            gbar_inv,
            gamma,
            a,
            f,
            beta,
            beta_inv,
            dbeta,
            b,
            l,
            ad_a,
            algebra: sc.clone(),
        })
    }

    /// `−½ β̄_{ab} F^b_{αμ} ḡ^{αρ}`, the horizontal part shared by both mixed
    /// connection blocks, as a `[ρ][μ][a]` array.
    pub fn mixed_horizontal(&self) -> Tensor3 {
        let (m, d) = (self.m, self.d);
        let mut h = Tensor3::zeros(m, m, d);
        for r in 0..m {
            for mu in 0..m {
                for a in 0..d {
                    let mut s = 0.0;
                    for b in 0..d {
                        for al in 0..m {
                            s += self.beta[(a, b)] * self.f[(b, al, mu)] * self.gbar_inv[(al, r)];
                        }
                    }
                    h[(r, mu, a)] = -0.5 * s;
                }
            }
        }
        h
    }

    pub fn kk_metric(&self) -> DMatrix<f64> {
        let (m, d) = (self.m, self.d);
        let ba = &self.beta * &self.a;
        let mut g = DMatrix::zeros(m + d, m + d);
        g.view_mut((0, 0), (m, m))
            .copy_from(&(&self.gbar + self.a.transpose() * &ba));
        g.view_mut((0, m), (m, d)).copy_from(&ba.transpose());
        g.view_mut((m, 0), (d, m)).copy_from(&ba);
        g.view_mut((m, m), (d, d)).copy_from(&self.beta);
        g
    }

    /// Block-diagonal metric of the adapted frame.
    pub fn frame_metric(&self) -> DMatrix<f64> {
        let (m, d) = (self.m, self.d);
        let mut g = DMatrix::zeros(m + d, m + d);
        g.view_mut((0, 0), (m, m)).copy_from(&self.gbar);
        g.view_mut((m, m), (d, d)).copy_from(&self.beta);
        g
    }

    pub fn frame_connection(&self) -> FrameConnection {
        let (m, d) = (self.m, self.d);
        let mut t = FrameTensor::zeros(m, d);
        let h = self.mixed_horizontal();
        let bi = &self.beta_inv;
        for mu in 0..m {
            for nu in 0..m {
                for r in 0..m {
                    t.c[(r, mu, nu)] = self.gamma[(r, mu, nu)];
                }
                for a in 0..d {
                    t.c[(m + a, mu, nu)] = -0.5 * self.f[(a, mu, nu)];
                }
            }
        }
        for mu in 0..m {
            for a in 0..d {
                for r in 0..m {
                    t.c[(r, mu, m + a)] = h[(r, mu, a)];
                    t.c[(r, m + a, mu)] = h[(r, mu, a)];
                }
                // S^±_{ad} = ∂_μβ̄_{ad} ± β̄([A_μ,ξ_a],ξ_d) − β̄(ξ_a,[A_μ,ξ_d])
                let ad = &self.ad_a[mu];
                for bb in 0..d {
                    let mut plus = 0.0;
                    let mut minus = 0.0;
                    for dd in 0..d {
                        let first: f64 = (0..d).map(|c| ad[(c, a)] * self.beta[(c, dd)]).sum();
                        let second: f64 = (0..d).map(|c| self.beta[(a, c)] * ad[(c, dd)]).sum();
                        let s_plus = self.dbeta[mu][(a, dd)] + first - second;
                        plus += bi[(dd, bb)] * s_plus;
                        minus += bi[(dd, bb)] * self.b[(a, mu, dd)];
                    }
                    t.c[(m + bb, mu, m + a)] = 0.5 * plus;
                    t.c[(m + bb, m + a, mu)] = 0.5 * minus;
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                for r in 0..m {
                    let s: f64 = (0..m).map(|mu| self.gbar_inv[(mu, r)] * self.b[(a, mu, b)]).sum();
                    t.c[(r, m + a, m + b)] = -0.5 * s;
                }
                for c in 0..d {
                    let s: f64 = (0..d).map(|dd| bi[(dd, c)] * self.l[(a, b, dd)]).sum();
                    t.c[(m + c, m + a, m + b)] = 0.5 * s;
                }
            }
        }
        t
    }

    /// Frame brackets `[E_I, E_J]^K`.
    pub fn frame_bracket(&self) -> FrameTensor {
        let (m, d) = (self.m, self.d);
        let mut t = FrameTensor::zeros(m, d);
        for mu in 0..m {
            for nu in 0..m {
                for c in 0..d {
                    t.c[(m + c, mu, nu)] = -self.f[(c, mu, nu)];
                }
            }
            for a in 0..d {
                for c in 0..d {
                    t.c[(m + c, mu, m + a)] = self.ad_a[mu][(c, a)];
                    t.c[(m + c, m + a, mu)] = -self.ad_a[mu][(c, a)];
                }
            }
        }
        for a in 0..d {
            for b in 0..d {
                for c in 0..d {
                    t.c[(m + c, m + a, m + b)] = -self.algebra.coeff(c, a, b);
                }
            }
        }
        t
    }

    pub fn oneill_t(&self) -> FrameTensor {
        let (m, d) = (self.m, self.d);
        let mut t = FrameTensor::zeros(m, d);
        for a in 0..d {
            for mu in 0..m {
                for bb in 0..d {
                    let s: f64 = (0..d).map(|dd| self.beta_inv[(dd, bb)] * self.b[(a, mu, dd)]).sum();
                    t.c[(m + bb, m + a, mu)] = 0.5 * s;
                }
            }
            for b in 0..d {
                for r in 0..m {
                    let s: f64 = (0..m).map(|mu| self.gbar_inv[(mu, r)] * self.b[(a, mu, b)]).sum();
                    t.c[(r, m + a, m + b)] = -0.5 * s;
                }
            }
        }
        t
    }

    pub fn oneill_a(&self) -> FrameTensor {
        let (m, d) = (self.m, self.d);
        let mut t = FrameTensor::zeros(m, d);
        let h = self.mixed_horizontal();
        for mu in 0..m {
            for nu in 0..m {
                for a in 0..d {
                    t.c[(m + a, mu, nu)] = -0.5 * self.f[(a, mu, nu)];
                }
            }
            for a in 0..d {
                for r in 0..m {
                    t.c[(r, mu, m + a)] = h[(r, mu, a)];
                }
            }
        }
        t
    }

    /// Difference tensor `Θ(D, ξ*)` in vertical frame components.
    pub fn theta(&self, frame_vec: &[f64], xi: &[f64]) -> Result<Vec<f64>> {
        let (m, d) = (self.m, self.d);
        check_len("frame vector", m + d, frame_vec.len())?;
        check_len("algebra vector", d, xi.len())?;
        let w = &frame_vec[m..];
        let sc = &self.algebra;
        let p = sc.ad_star(&self.beta, xi, w)?;
        let q = sc.ad_star(&self.beta, w, xi)?;
        let mut out: Vec<f64> = p.iter().zip(&q).map(|(a, b)| 0.5 * (a + b)).collect();
        // T(ξ*, D^H) = ½ β̄^{db} B_{aμd} ξ^a D^μ E_b
        for (bb, o) in out.iter_mut().enumerate() {
            for a in 0..d {
                for mu in 0..m {
                    for dd in 0..d {
                        *o += 0.5 * self.beta_inv[(dd, bb)] * self.b[(a, mu, dd)] * xi[a] * frame_vec[mu];
                    }
                }
            }
        }
        Ok(out)
    }

    /// `β̄_{bc} F^c_{αμ} ḡ^{αρ} u^μ v^b`.
    pub fn lorentz_force(&self, u: &[f64], v: &[f64]) -> Vec<f64> {
        let (m, d) = (self.m, self.d);
        // w_c = β̄_{bc} v^b, then F^c_{αμ} u^μ w_c, raised with ḡ^{αρ}
        let w: Vec<f64> = (0..d).map(|c| (0..d).map(|b| self.beta[(b, c)] * v[b]).sum()).collect();
        let low: Vec<f64> = (0..m)
            .map(|al| {
                let mut s = 0.0;
                for c in 0..d {
                    for mu in 0..m {
                        s += self.f[(c, al, mu)] * u[mu] * w[c];
                    }
                }
                s
            })
            .collect();
        (self.gbar_inv.clone() * DVector::from_vec(low)).as_slice().to_vec()
    }

    /// `ḡ^{μρ} B_{aμb} v^a v^b`, the fiber-shape force (without the ½).
    pub fn shape_force(&self, va: &[f64], vb: &[f64]) -> Vec<f64> {
        let (m, d) = (self.m, self.d);
        let low: Vec<f64> = (0..m)
            .map(|mu| {
                let mut s = 0.0;
                for a in 0..d {
                    for b in 0..d {
                        s += self.b[(a, mu, b)] * va[a] * vb[b];
                    }
                }
                s
            })
            .collect();
        (self.gbar_inv.clone() * DVector::from_vec(low)).as_slice().to_vec()
    }
}

/// A (1,2) tensor in adapted frame components: entry `(K, I, J)` is the
/// `E_K` component of `T(E_I, E_J)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameTensor {
    pub m: usize,
    pub d: usize,
    pub c: Tensor3,
}

/// Levi-Civita coefficients: `(K, I, J)` is the `E_K` component of `∇_{E_I} E_J`.
pub type FrameConnection = FrameTensor;

impl FrameTensor {
    pub fn zeros(m: usize, d: usize) -> Self {
        let n = m + d;
        Self {
            m,
            d,
            c: Tensor3::zeros(n, n, n),
        }
    }

    pub fn dim(&self) -> usize {
        self.m + self.d
    }

    pub fn get(&self, k: usize, i: usize, j: usize) -> f64 {
        self.c[(k, i, j)]
    }

    /// Contracts both slots with frame vectors.
    pub fn apply(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let n = self.dim();
        let mut out = vec![0.0; n];
        for i in 0..n {
            if x[i] == 0.0 {
                continue;
            }
            for j in 0..n {
                if y[j] == 0.0 {
                    continue;
                }
                let w = x[i] * y[j];
                for (k, o) in out.iter_mut().enumerate() {
                    *o += self.c[(k, i, j)] * w;
                }
            }
        }
        out
    }

    pub fn max_abs(&self) -> f64 {
        self.c.max_abs()
    }

    pub fn max_diff(&self, other: &FrameTensor) -> f64 {
        self.c.max_diff(&other.c)
    }
}

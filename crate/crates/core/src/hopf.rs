//! The complex Hopf bundle `S³ → S²` and the quaternionic Hopf bundle
//! `S⁷ → S⁴` with their round Kaluza-Klein structure.
//!
//! `S³` is the unit sphere of `ℍ` with the right `U(1)` action `q ↦ q e^{iθ}`.
//! `S⁷` is the unit sphere of `ℍ²` with the diagonal right `SU(2)` action
//! `(q₁, q₂) ↦ (q₁g, q₂g)`. Fundamental fields are `D_a(p) = p·ξ_a` with
//! `ξ = i` (complex) or `ξ ∈ {i, j, k}` (quaternionic). Frame labels follow
//! `D₁ … D₃` (complex) and `D₁ … D₇` (quaternionic), vertical fields first.
//!
//! Both bases are spheres of radius ½, covered by two stereographic charts
//! whose local sections are
//!
//! ```text
//! complex:      s_N(x) = (1 + x₁j + x₂k)/√(1+|x|²)   s_S(x) = (x₁ + x₂i + j)/√(1+|x|²)
//! quaternionic: s_N(x) = (1, x̄)/√(1+|x|²)           s_S(x) = (x, 1)/√(1+|x|²)
//! ```
//!
//! and the chart transition is `x ↦ x/|x|²`.

use std::sync::Arc;

use nalgebra::DMatrix;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, KkError, Result};
use crate::fields::FnMatrix;
use crate::geometry::{BaseChart, DerivativeMode, GaugePotential, KKLocalModel};
use crate::jet::{Jet, Scalar};
use crate::liealg::{AlgebraMetric, Quaternion, StructureConstants};
use crate::tension::{
    dot, lorentz_charge_density, AnalyticMap, BundleEmbedding, BundleJet, Domain, DomainGrid,
    DomainSample, GridMap, MapJet, Target, TargetKind,
};
use crate::wong::{integrate, Method, Trajectory, WongState};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HopfKind {
    Complex,
    Quaternionic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pole {
    North,
    South,
}

impl Pole {
    pub fn index(self) -> usize {
        match self {
            Pole::North => 0,
            Pole::South => 1,
        }
    }

    pub fn from_index(i: usize) -> Self {
        if i == 0 {
            Pole::North
        } else {
            Pole::South
        }
    }

    pub fn other(self) -> Self {
        match self {
            Pole::North => Pole::South,
            Pole::South => Pole::North,
        }
    }
}

impl HopfKind {
    pub fn ambient_dim(self) -> usize {
        match self {
            HopfKind::Complex => 4,
            HopfKind::Quaternionic => 8,
        }
    }

    pub fn algebra_dim(self) -> usize {
        match self {
            HopfKind::Complex => 1,
            HopfKind::Quaternionic => 3,
        }
    }

    pub fn base_dim(self) -> usize {
        match self {
            HopfKind::Complex => 2,
            HopfKind::Quaternionic => 4,
        }
    }

    /// Dimension of the Euclidean space containing the target sphere.
    pub fn target_dim(self) -> usize {
        self.base_dim() + 1
    }

    pub fn frame_len(self) -> usize {
        self.ambient_dim() - 1
    }
}

fn quat<S: Scalar>(p: &[S], k: usize) -> Quaternion<S> {
    Quaternion::new(p[4 * k], p[4 * k + 1], p[4 * k + 2], p[4 * k + 3])
}

fn push_quat<S: Scalar>(out: &mut Vec<S>, q: Quaternion<S>) {
    out.extend_from_slice(&q.to_array());
}

const XI: [Quaternion; 3] = [Quaternion::I, Quaternion::J, Quaternion::K];

/// All frame fields at `p` (which need not be unit: the formulas extend
/// homogeneously off the sphere).
pub fn frame_fields<S: Scalar>(kind: HopfKind, p: &[S]) -> Vec<Vec<S>> {
    match kind {
        HopfKind::Complex => {
            let q = quat(p, 0);
            XI.iter()
                .map(|x| (q * x.lift()).to_array().to_vec())
                .collect()
        }
        HopfKind::Quaternionic => {
            let (q1, q2) = (quat(p, 0), quat(p, 1));
            let mut out = Vec::with_capacity(7);
            for x in XI {
                let mut v = Vec::with_capacity(8);
                push_quat(&mut v, q1 * x.lift());
                push_quat(&mut v, q2 * x.lift());
                out.push(v);
            }
            let (r1, r2) = (q1.norm(), q2.norm());
            let w1 = q1.scale(r2 / r1);
            let w2 = q2.scale(-(r1 / r2));
            let hs = [Quaternion::ONE, -Quaternion::I, -Quaternion::J, -Quaternion::K];
            for h in hs {
                let mut v = Vec::with_capacity(8);
                push_quat(&mut v, w1 * h.lift());
                push_quat(&mut v, w2 * h.lift());
                out.push(v);
            }
            out
        }
    }
}

/// `Im(p̄ᵀ X)` on the Lie-algebra basis: the connection form of the round
/// metric evaluated on any ambient vector.
pub fn omega_generic<S: Scalar>(kind: HopfKind, p: &[S], x: &[S]) -> Vec<S> {
    match kind {
        HopfKind::Complex => vec![(quat(p, 0).conj() * quat(x, 0)).x],
        HopfKind::Quaternionic => {
            let z = quat(p, 0).conj() * quat(x, 0) + quat(p, 1).conj() * quat(x, 1);
            z.im().to_vec()
        }
    }
}

/// Projection onto the unit target sphere:
/// complex `q ↦ q i q̄ ∈ Im ℍ`, quaternionic `(q₁,q₂) ↦ (|q₁|²−|q₂|², 2q₁q̄₂)`.
pub fn project_generic<S: Scalar>(kind: HopfKind, p: &[S]) -> Vec<S> {
    match kind {
        HopfKind::Complex => {
            let q = quat(p, 0);
            (q * Quaternion::I.lift() * q.conj()).im().to_vec()
        }
        HopfKind::Quaternionic => {
            let (q1, q2) = (quat(p, 0), quat(p, 1));
            let w = (q1 * q2.conj()).scale(S::cst(2.0));
            let mut out = vec![q1.norm2() - q2.norm2()];
            out.extend_from_slice(&w.to_array());
            out
        }
    }
}

/// Stereographic coordinates of a target point in the given chart.
pub fn chart_coords_generic<S: Scalar>(kind: HopfKind, pole: Pole, target: &[S]) -> Vec<S> {
    let axis = target[0];
    let den = match pole {
        Pole::North => axis + 1.0,
        Pole::South => -axis + 1.0,
    };
    match kind {
        HopfKind::Complex => vec![-target[2] / den, target[1] / den],
        HopfKind::Quaternionic => target[1..].iter().map(|w| *w / den).collect(),
    }
}

/// Local section over the chart.
pub fn section_generic<S: Scalar>(kind: HopfKind, pole: Pole, x: &[S]) -> Vec<S> {
    let mut rho = S::cst(1.0);
    for xi in x {
        rho += *xi * *xi;
    }
    let r = rho.sqrt().recip();
    let z = S::zero();
    let one = S::cst(1.0);
    let raw: Vec<S> = match (kind, pole) {
        (HopfKind::Complex, Pole::North) => vec![one, z, x[0], x[1]],
        (HopfKind::Complex, Pole::South) => vec![x[0], x[1], one, z],
        (HopfKind::Quaternionic, Pole::North) => vec![one, z, z, z, x[0], -x[1], -x[2], -x[3]],
        (HopfKind::Quaternionic, Pole::South) => vec![x[0], x[1], x[2], x[3], one, z, z, z],
    };
    raw.into_iter().map(|v| v * r).collect()
}

/// Fiber coordinate `g = s(x)⁻¹ p` as a unit quaternion.
pub fn fiber_element_generic<S: Scalar>(kind: HopfKind, s: &[S], p: &[S]) -> Quaternion<S> {
    match kind {
        HopfKind::Complex => quat(s, 0).conj() * quat(p, 0),
        HopfKind::Quaternionic => {
            quat(s, 0).conj() * quat(p, 0) + quat(s, 1).conj() * quat(p, 1)
        }
    }
}

/// `Ad_g ζ = g ζ ḡ` on algebra coefficients.
pub fn adjoint_generic<S: Scalar>(kind: HopfKind, g: Quaternion<S>, zeta: &[S]) -> Vec<S> {
    match kind {
        HopfKind::Complex => zeta.to_vec(),
        HopfKind::Quaternionic => {
            let z = Quaternion::imag([zeta[0], zeta[1], zeta[2]]);
            (g * z * g.conj()).im().to_vec()
        }
    }
}

fn adjoint_matrix(kind: HopfKind, g: Quaternion) -> DMatrix<f64> {
    let d = kind.algebra_dim();
    DMatrix::from_fn(d, d, |r, c| {
        let mut e = vec![0.0; d];
        e[c] = 1.0;
        adjoint_generic(kind, g, &e)[r]
    })
}

/// Closed-form gauge potential of a chart section and its derivative.
fn gauge_field(kind: HopfKind, pole: Pole) -> FnMatrix {
    let (d, m) = (kind.algebra_dim(), kind.base_dim());
    let eval = move |x: &[f64]| -> DMatrix<f64> {
        let rho = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        match kind {
            HopfKind::Complex => {
                let s = if pole == Pole::North { 1.0 } else { -1.0 };
                DMatrix::from_row_slice(1, 2, &[s * x[1] / rho, -s * x[0] / rho])
            }
            HopfKind::Quaternionic => {
                let xq = Quaternion::from_array([x[0], x[1], x[2], x[3]]);
                DMatrix::from_fn(3, 4, |a, mu| {
                    let e = Quaternion::basis(mu);
                    let z = match pole {
                        Pole::North => xq * e.conj(),
                        Pole::South => xq.conj() * e,
                    };
                    z.im()[a] / rho
                })
            }
        }
    };
    let deriv = move |x: &[f64]| -> Vec<DMatrix<f64>> {
        let rho = 1.0 + x.iter().map(|v| v * v).sum::<f64>();
        let a0 = eval(x);
        (0..m)
            .map(|nu| {
                let lin = match kind {
                    HopfKind::Complex => {
                        let s = if pole == Pole::North { 1.0 } else { -1.0 };
                        let mut l = DMatrix::zeros(1, 2);
                        if nu == 1 {
                            l[(0, 0)] = s / rho;
                        } else {
                            l[(0, 1)] = -s / rho;
                        }
                        l
                    }
                    HopfKind::Quaternionic => {
                        let en = Quaternion::basis(nu);
                        DMatrix::from_fn(3, 4, |a, mu| {
                            let e = Quaternion::basis(mu);
                            let z = match pole {
                                Pole::North => en * e.conj(),
                                Pole::South => en.conj() * e,
                            };
                            z.im()[a] / rho
                        })
                    }
                };
                lin - &a0 * (2.0 * x[nu] / rho)
            })
            .collect()
    };
    FnMatrix::new(d, m, eval).with_derivative(deriv)
}

/// One of the two Hopf bundles with both chart models prepared.
#[derive(Debug, Clone)]
pub struct HopfBundle {
    pub kind: HopfKind,
    models: [KKLocalModel; 2],
}

impl HopfBundle {
    pub fn new(kind: HopfKind) -> Self {
        let make = |pole: Pole| {
            let (m, d) = (kind.base_dim(), kind.algebra_dim());
            let base = BaseChart::stereographic_sphere(m, 1.0);
            let gauge = GaugePotential::new(Arc::new(gauge_field(kind, pole)), DerivativeMode::Analytic)
                .expect("closed-form derivative");
            let algebra = match kind {
                HopfKind::Complex => StructureConstants::abelian(1),
                HopfKind::Quaternionic => StructureConstants::su2(),
            };
            KKLocalModel::new(base, gauge, AlgebraMetric::identity(d), algebra).expect("consistent dimensions")
        };
        Self {
            kind,
            models: [make(Pole::North), make(Pole::South)],
        }
    }

    pub fn complex() -> Self {
        Self::new(HopfKind::Complex)
    }

    pub fn quaternionic() -> Self {
        Self::new(HopfKind::Quaternionic)
    }

    pub fn as_local_model(&self, pole: Pole) -> &KKLocalModel {
        &self.models[pole.index()]
    }

    /// Structure constants read off the brackets of the vertical frame,
    /// `[D_a, D_b](p) = p [ξ_a, ξ_b]` for right-module fields.
    pub fn vertical_structure_constants(&self) -> StructureConstants {
        match self.kind {
            HopfKind::Complex => StructureConstants::from_quaternion_basis(&[Quaternion::I]),
            HopfKind::Quaternionic => StructureConstants::from_quaternion_basis(&XI),
        }
    }

    fn check_unit(&self, p: &[f64]) -> Result<()> {
        check_len("total-space point", self.kind.ambient_dim(), p.len())?;
        let r = dot(p, p).sqrt();
        if (r - 1.0).abs() > 1e-9 {
            return Err(KkError::Input(format!("point has norm {r}, expected 1")));
        }
        Ok(())
    }

    pub fn frame(&self, p: &[f64]) -> Vec<Vec<f64>> {
        frame_fields(self.kind, p)
    }

    pub fn project(&self, p: &[f64]) -> Result<Vec<f64>> {
        self.check_unit(p)?;
        Ok(project_generic(self.kind, p))
    }

    /// `ω^a(X) = ⟨X, D_a(p)⟩` for a tangent vector `X` at `p`.
    pub fn connection_form(&self, p: &[f64], x: &[f64]) -> Result<Vec<f64>> {
        self.check_unit(p)?;
        check_len("tangent vector", p.len(), x.len())?;
        if dot(p, x).abs() > 1e-10 * dot(x, x).sqrt().max(1.0) {
            return Err(KkError::Input("vector is not tangent to the sphere".into()));
        }
        Ok(omega_generic(self.kind, p, x))
    }

    /// Frame components of an ambient tangent vector.
    pub fn frame_components(&self, p: &[f64], x: &[f64]) -> Vec<f64> {
        self.frame(p).iter().map(|d| dot(d, x)).collect()
    }

    /// `Ω(D_a, D_b) = −ω([D_a, D_b])` with the bracket of the frame fields
    /// taken exactly by forward differentiation. Labels are 1-based.
    pub fn curvature_numeric(&self, p: &[f64], a: usize, b: usize) -> Result<Vec<f64>> {
        self.check_unit(p)?;
        let d = self.kind.algebra_dim();
        let n = self.kind.frame_len();
        for l in [a, b] {
            if l <= d || l > n {
                return Err(KkError::Input(format!("D_{l} is not a horizontal frame field")));
            }
        }
        let br = match self.kind {
            HopfKind::Complex => frame_bracket::<4>(self.kind, p, a - 1, b - 1),
            HopfKind::Quaternionic => frame_bracket::<8>(self.kind, p, a - 1, b - 1),
        };
        Ok(omega_generic(self.kind, p, &br).into_iter().map(|v| -v).collect())
    }

    /// `Ω(X, Y) = 2 Im(X̄ᵀ Y)` for horizontal `X`, `Y` (algebra coefficients).
    pub fn curvature_form(&self, x: &[f64], y: &[f64]) -> Vec<f64> {
        let z = match self.kind {
            HopfKind::Complex => quat(x, 0).conj() * quat(y, 0),
            HopfKind::Quaternionic => quat(x, 0).conj() * quat(y, 0) + quat(x, 1).conj() * quat(y, 1),
        };
        let im = z.im();
        match self.kind {
            HopfKind::Complex => vec![2.0 * im[0]],
            HopfKind::Quaternionic => im.iter().map(|v| 2.0 * v).collect(),
        }
    }

    /// `⟨V, 𝓕⟩(H)`: the horizontal vector with `ĝ(⟨V,𝓕⟩H, Y) = ⟨V, Ω(H, Y)⟩`.
    pub fn lorentz_endomorphism(&self, p: &[f64], v: &[f64], h: &[f64]) -> Result<Vec<f64>> {
        self.check_unit(p)?;
        check_len("vertical vector", p.len(), v.len())?;
        check_len("horizontal vector", p.len(), h.len())?;
        let frame = self.frame(p);
        let d = self.kind.algebra_dim();
        let vc: Vec<f64> = frame.iter().map(|f| dot(f, v)).collect();
        let hc: Vec<f64> = frame.iter().map(|f| dot(f, h)).collect();
        let scale = dot(v, v).sqrt().max(dot(h, h).sqrt()).max(1.0);
        if vc[d..].iter().any(|c| c.abs() > 1e-10 * scale) || dot(p, v).abs() > 1e-10 * scale {
            return Err(KkError::Input("V must be vertical".into()));
        }
        if hc[..d].iter().any(|c| c.abs() > 1e-10 * scale) || dot(p, h).abs() > 1e-10 * scale {
            return Err(KkError::Input("H must be horizontal".into()));
        }
        let mut out = vec![0.0; p.len()];
        for fb in &frame[d..] {
            let om = self.curvature_form(h, fb);
            let c: f64 = om.iter().zip(&vc[..d]).map(|(a, b)| a * b).sum();
            for (o, f) in out.iter_mut().zip(fb) {
                *o += c * f;
            }
        }
        Ok(out)
    }

    /// Chart whose excluded pole is farther from the target point.
    pub fn preferred_pole(&self, target: &[f64]) -> Pole {
        if target[0] >= 0.0 {
            Pole::North
        } else {
            Pole::South
        }
    }

    pub fn chart_coords(&self, pole: Pole, target: &[f64]) -> Result<Vec<f64>> {
        let axis = target[0];
        let bad = match pole {
            Pole::North => axis + 1.0,
            Pole::South => 1.0 - axis,
        };
        if bad.abs() < 1e-12 {
            return Err(KkError::Domain(format!("{pole:?} chart excludes its pole")));
        }
        Ok(chart_coords_generic(self.kind, pole, target))
    }

    pub fn section(&self, pole: Pole, x: &[f64]) -> Vec<f64> {
        section_generic(self.kind, pole, x)
    }

    /// Target-sphere point with chart coordinates `x`.
    pub fn chart_point(&self, pole: Pole, x: &[f64]) -> Vec<f64> {
        project_generic(self.kind, &self.section(pole, x))
    }

    /// Wong state of the curve `t ↦ p(t)` at a point with velocity `ṗ`.
    pub fn ambient_to_state(&self, pole: Pole, t: f64, p: &[f64], pdot: &[f64]) -> Result<WongState> {
        self.check_unit(p)?;
        let pj: Vec<Jet<1>> = p
            .iter()
            .zip(pdot)
            .map(|(a, b)| {
                let mut j = Jet::<1>::constant(*a);
                j.g[0] = *b;
                j
            })
            .collect();
        let target = project_generic(self.kind, &pj);
        if target[0].v * if pole == Pole::North { 1.0 } else { -1.0 } <= -1.0 + 1e-12 {
            return Err(KkError::Domain(format!("{pole:?} chart excludes its pole")));
        }
        let x = chart_coords_generic(self.kind, pole, &target);
        let s = section_generic(self.kind, pole, &x.iter().map(|j| j.v).collect::<Vec<_>>());
        let g = fiber_element_generic(self.kind, &s, p);
        let om = omega_generic(self.kind, p, pdot);
        Ok(WongState::new(
            t,
            x.iter().map(|j| j.v).collect(),
            x.iter().map(|j| j.g[0]).collect(),
            adjoint_generic(self.kind, g, &om),
        ))
    }

    /// Moves a Wong state to the other chart.
    pub fn switch_chart(&self, from: Pole, state: &WongState) -> WongState {
        let x = &state.x;
        let r2: f64 = dot(x, x);
        let y: Vec<f64> = x.iter().map(|v| v / r2).collect();
        let m = x.len();
        let xu = dot(x, &state.u);
        let u: Vec<f64> = (0..m).map(|i| (state.u[i] * r2 - 2.0 * x[i] * xu) / (r2 * r2)).collect();
        let to = from.other();
        let s_from = self.section(from, x);
        let s_to = self.section(to, &y);
        let h = fiber_element_generic(self.kind, &s_to, &s_from);
        let v = adjoint_generic(self.kind, h, &state.v);
        let d = state.v.len();
        let r = adjoint_matrix(self.kind, h) * DMatrix::from_row_slice(d, d, &state.transport);
        let mut transport = vec![0.0; d * d];
        for i in 0..d {
            for j in 0..d {
                transport[i * d + j] = r[(i, j)];
            }
        }
        WongState {
            t: state.t,
            x: y,
            u,
            v,
            transport,
        }
    }

    /// Fixed-step rk4 Wong integration that moves to the other chart whenever
    /// the base point comes within 0.1 of the excluded pole.
    pub fn integrate_across_charts(&self, pole: Pole, state0: &WongState, t_end: f64, h: f64) -> Result<Vec<(Pole, WongState)>> {
        let mut pole = pole;
        let mut s = state0.clone();
        let mut out = vec![(pole, s.clone())];
        let n = ((t_end - s.t) / h - 1e-9).ceil().max(1.0) as usize;
        let t0 = s.t;
        for k in 0..n {
            let target = self.chart_point(pole, &s.x);
            let excluded = match pole {
                Pole::North => -1.0,
                Pole::South => 1.0,
            };
            if (target[0] - excluded).abs() < 0.1 {
                s = self.switch_chart(pole, &s);
                pole = pole.other();
            }
            let t_next = if k + 1 == n { t_end } else { t0 + (k + 1) as f64 * h };
            let tr: Trajectory = integrate(self.as_local_model(pole), &s, t_next, Method::Rk4 { h: t_next - s.t })?;
            s = tr.last().clone();
            out.push((pole, s.clone()));
        }
        Ok(out)
    }
}

fn frame_bracket<const N: usize>(kind: HopfKind, p: &[f64], a: usize, b: usize) -> Vec<f64> {
    let pj: Vec<Jet<N>> = p.iter().enumerate().map(|(i, v)| Jet::variable(*v, i)).collect();
    let f = frame_fields(kind, &pj);
    let (fa, fb) = (&f[a], &f[b]);
    (0..N)
        .map(|k| {
            (0..N)
                .map(|l| fa[l].v * fb[k].g[l] - fb[l].v * fa[k].g[l])
                .sum()
        })
        .collect()
}

/// Curvature coefficients `Ω(D_a, D_b)` as printed for the two bundles:
/// `−2ω²∧ω³⊗i*` and
/// `2[(−ω⁴∧ω⁵+ω⁶∧ω⁷)⊗i* − (ω⁴∧ω⁶+ω⁵∧ω⁷)⊗j* + (−ω⁴∧ω⁷+ω⁵∧ω⁶)⊗k*]`.
pub fn displayed_curvature(kind: HopfKind, a: usize, b: usize) -> Vec<f64> {
    let table: &[((usize, usize), [f64; 3])] = match kind {
        HopfKind::Complex => &[((2, 3), [-2.0, 0.0, 0.0])],
        HopfKind::Quaternionic => &[
            ((4, 5), [-2.0, 0.0, 0.0]),
            ((6, 7), [2.0, 0.0, 0.0]),
            ((4, 6), [0.0, -2.0, 0.0]),
            ((5, 7), [0.0, -2.0, 0.0]),
            ((4, 7), [0.0, 0.0, -2.0]),
            ((5, 6), [0.0, 0.0, 2.0]),
        ],
    };
    lookup(kind, table, a, b)
}

/// Curvature of the frame `D₄…D₇ = W·(1, −i, −j, −k)` used here:
/// `Ω(D_a, D_b) = 2 Im(h̄_a h_b)`.
pub fn frame_curvature(kind: HopfKind, a: usize, b: usize) -> Vec<f64> {
    let table: &[((usize, usize), [f64; 3])] = match kind {
        HopfKind::Complex => &[((2, 3), [-2.0, 0.0, 0.0])],
        HopfKind::Quaternionic => &[
            ((4, 5), [-2.0, 0.0, 0.0]),
            ((6, 7), [-2.0, 0.0, 0.0]),
            ((4, 6), [0.0, -2.0, 0.0]),
            ((5, 7), [0.0, 2.0, 0.0]),
            ((4, 7), [0.0, 0.0, -2.0]),
            ((5, 6), [0.0, 0.0, -2.0]),
        ],
    };
    lookup(kind, table, a, b)
}

fn lookup(kind: HopfKind, table: &[((usize, usize), [f64; 3])], a: usize, b: usize) -> Vec<f64> {
    let d = kind.algebra_dim();
    for ((i, j), c) in table {
        if (a, b) == (*i, *j) {
            return c[..d].to_vec();
        }
        if (a, b) == (*j, *i) {
            return c[..d].iter().map(|v| -v).collect();
        }
    }
    vec![0.0; d]
}

impl BundleEmbedding for HopfBundle {
    fn ambient_dim(&self) -> usize {
        self.kind.ambient_dim()
    }

    fn chart_count(&self) -> usize {
        2
    }

    fn model(&self, chart: usize) -> &KKLocalModel {
        &self.models[chart]
    }

    fn bundle_jet(&self, jet: &MapJet) -> Result<(usize, BundleJet)> {
        check_len("ambient jet", self.kind.ambient_dim(), jet.value.len())?;
        let target = project_generic(self.kind, &jet.value);
        let pole = self.preferred_pole(&target);
        let bj = match jet.domain_dim() {
            1 => embedded_bundle_jet::<1>(self.kind, pole, jet),
            2 => embedded_bundle_jet::<2>(self.kind, pole, jet),
            3 => embedded_bundle_jet::<3>(self.kind, pole, jet),
            4 => embedded_bundle_jet::<4>(self.kind, pole, jet),
            5 => embedded_bundle_jet::<5>(self.kind, pole, jet),
            6 => embedded_bundle_jet::<6>(self.kind, pole, jet),
            n => return Err(KkError::Unsupported(format!("domain dimension {n}"))),
        };
        Ok((pole.index(), bj))
    }
}

fn embedded_bundle_jet<const N: usize>(kind: HopfKind, pole: Pole, jet: &MapJet) -> BundleJet {
    let p: Vec<Jet<N>> = jet.to_jets::<N>();
    let target = project_generic(kind, &p);
    let x = chart_coords_generic(kind, pole, &target);
    let s = section_generic(kind, pole, &x);
    let g = fiber_element_generic(kind, &s, &p);
    let d = kind.algebra_dim();
    let mut v = Vec::with_capacity(N);
    let mut vj_jets = Vec::with_capacity(N);
    for j in 0..N {
        let dp: Vec<Jet<N>> = p.iter().map(|c| c.partial(j)).collect();
        let om = omega_generic(kind, &p, &dp);
        let vj = adjoint_generic(kind, g, &om);
        v.push(vj.iter().map(|c| c.v).collect::<Vec<f64>>());
        vj_jets.push(vj);
    }
    let dv = (0..N)
        .map(|i| (0..N).map(|j| (0..d).map(|a| vj_jets[j][a].g[i]).collect()).collect())
        .collect();
    BundleJet {
        base: MapJet::from_jets(&x),
        v,
        dv,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TwistFamily {
    /// `Φ̃_α(θ₁,θ₂) = cos α e^{iθ₁} + sin α e^{iθ₂} j` on the flat torus.
    Clifford,
    /// `Ψ̃_α(q₁,q₂) = (cos α q₁, sin α q₂)` on `S³ × S³`.
    Spherical,
}

impl TwistFamily {
    pub fn kind(self) -> HopfKind {
        match self {
            TwistFamily::Clifford => HopfKind::Complex,
            TwistFamily::Spherical => HopfKind::Quaternionic,
        }
    }

    pub fn domain_dim(self) -> usize {
        match self {
            TwistFamily::Clifford => 2,
            TwistFamily::Spherical => 6,
        }
    }
}

/// The α-twisted harmonic immersions into `S³` and `S⁷`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwistedImmersion {
    pub alpha: f64,
    pub family: TwistFamily,
}

/// Unit quaternion in Hopf coordinates `(cos η e^{iξ₁}, sin η e^{iξ₂})`.
fn hopf_coordinates<S: Scalar>(eta: S, xi1: S, xi2: S) -> [S; 4] {
    let (c, s) = (eta.cos(), eta.sin());
    [c * xi1.cos(), c * xi1.sin(), s * xi2.cos(), s * xi2.sin()]
}

impl TwistedImmersion {
    pub fn new(alpha: f64, family: TwistFamily) -> Self {
        Self { alpha, family }
    }

    /// True when α lies on `π/2·ℤ`, where the family degenerates.
    pub fn is_degenerate(&self) -> bool {
        let r = self.alpha / std::f64::consts::FRAC_PI_2;
        (r - r.round()).abs() < 1e-12
    }

    pub fn eval_generic<S: Scalar>(&self, y: &[S]) -> Vec<S> {
        let (ca, sa) = (self.alpha.cos(), self.alpha.sin());
        match self.family {
            TwistFamily::Clifford => vec![
                y[0].cos() * ca,
                y[0].sin() * ca,
                y[1].cos() * sa,
                y[1].sin() * sa,
            ],
            TwistFamily::Spherical => {
                let q1 = hopf_coordinates(y[0], y[1], y[2]);
                let q2 = hopf_coordinates(y[3], y[4], y[5]);
                q1.iter()
                    .map(|v| *v * ca)
                    .chain(q2.iter().map(|v| *v * sa))
                    .collect()
            }
        }
    }

    pub fn eval(&self, y: &[f64]) -> Vec<f64> {
        self.eval_generic(y)
    }

    /// Domain metric: flat torus or the product of round `S³` in Hopf
    /// coordinates `(η, ξ₁, ξ₂)`.
    pub fn domain_metric(&self) -> BaseChart {
        match self.family {
            TwistFamily::Clifford => BaseChart::euclidean(2),
            TwistFamily::Spherical => {
                let f = FnMatrix::new(6, 6, |y: &[f64]| {
                    let mut g = DMatrix::identity(6, 6);
                    for k in 0..2 {
                        let e = y[3 * k];
                        g[(3 * k + 1, 3 * k + 1)] = e.cos().powi(2);
                        g[(3 * k + 2, 3 * k + 2)] = e.sin().powi(2);
                    }
                    g
                })
                .with_derivative(|y: &[f64]| {
                    (0..6)
                        .map(|l| {
                            let mut d = DMatrix::zeros(6, 6);
                            if l % 3 == 0 {
                                let s2 = (2.0 * y[l]).sin();
                                d[(l + 1, l + 1)] = -s2;
                                d[(l + 2, l + 2)] = s2;
                            }
                            d
                        })
                        .collect()
                });
                BaseChart::new(Arc::new(f), DerivativeMode::Analytic).expect("closed form")
            }
        }
    }
}

impl AnalyticMap for TwistedImmersion {
    fn target_dim(&self) -> usize {
        self.family.kind().ambient_dim()
    }

    fn jet(&self, y: &[f64]) -> MapJet {
        match self.family {
            TwistFamily::Clifford => {
                let v: Vec<Jet<2>> = y.iter().enumerate().map(|(i, a)| Jet::variable(*a, i)).collect();
                MapJet::from_jets(&self.eval_generic(&v))
            }
            TwistFamily::Spherical => {
                let v: Vec<Jet<6>> = y.iter().enumerate().map(|(i, a)| Jet::variable(*a, i)).collect();
                MapJet::from_jets(&self.eval_generic(&v))
            }
        }
    }
}

pub fn twisted_map(alpha: f64, family: TwistFamily) -> TwistedImmersion {
    TwistedImmersion::new(alpha, family)
}

/// Uniform sample of `S³ × S³` in Hopf coordinates, keeping away from the
/// coordinate singularities `η ∈ {0, π/2}`.
pub fn sample_s3xs3<R: Rng>(rng: &mut R, count: usize) -> Vec<Vec<f64>> {
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let mut y = Vec::with_capacity(6);
        let mut ok = true;
        for _ in 0..2 {
            let s2: f64 = rng.gen();
            let eta = s2.sqrt().asin();
            if (2.0 * eta).sin() < 1e-3 {
                ok = false;
            }
            y.push(eta);
            y.push(rng.gen_range(0.0..std::f64::consts::TAU));
            y.push(rng.gen_range(0.0..std::f64::consts::TAU));
        }
        if ok {
            out.push(y);
        }
    }
    out
}

/// The twisted map as a [`GridMap`] on its natural domain.
pub fn twisted_grid_map(map: TwistedImmersion, domain: Domain) -> GridMap {
    let kind = TargetKind::Sphere {
        ambient_dim: map.family.kind().ambient_dim(),
    };
    GridMap::from_analytic(domain, kind, Arc::new(map))
}

pub fn clifford_domain(n: usize) -> Domain {
    let tau = std::f64::consts::TAU;
    Domain::Grid(DomainGrid::flat_torus(&[n, n], &[tau, tau]).expect("valid grid"))
}

pub fn spherical_domain(points: Vec<Vec<f64>>) -> Domain {
    Domain::Sample(DomainSample {
        points,
        metric: TwistedImmersion::new(0.0, TwistFamily::Spherical).domain_metric(),
    })
}

/// Lorentz strength of one twisted map: RMS ḡ-norm and the mean component
/// of the Lorentz force along the polar axis of the target sphere.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChargeSample {
    pub alpha: f64,
    pub norm: f64,
    pub signed: f64,
}

pub fn charge_sample(bundle: &HopfBundle, family: TwistFamily, alpha: f64, domain: &Domain) -> Result<ChargeSample> {
    let map = twisted_grid_map(TwistedImmersion::new(alpha, family), domain.clone());
    let dens = lorentz_charge_density(&map, Target::Embedded(bundle))?;
    let mut n2 = 0.0;
    let mut axial = 0.0;
    let mut wsum = 0.0;
    for p in 0..dens.norm.len() {
        let w = domain.weight(p);
        wsum += w;
        n2 += w * dens.norm[p] * dens.norm[p];
        axial += w * axial_component(bundle, Pole::from_index(dens.charts[p]), &dens.base_points[p], &dens.field[p]);
    }
    Ok(ChargeSample {
        alpha,
        norm: (n2 / wsum).sqrt(),
        signed: axial / wsum,
    })
}

/// Polar-axis component of a chart vector pushed to the target sphere.
fn axial_component(bundle: &HopfBundle, pole: Pole, x: &[f64], v: &[f64]) -> f64 {
    let kind = bundle.kind;
    // differentiate the chart parametrization along v with a one-variable jet
    let xj: Vec<Jet<1>> = x
        .iter()
        .zip(v)
        .map(|(a, b)| {
            let mut j = Jet::<1>::constant(*a);
            j.g[0] = *b;
            j
        })
        .collect();
    let target = project_generic(kind, &section_generic(kind, pole, &xj));
    target[0].g[0]
}

#[derive(Debug, Clone, Serialize)]
pub struct ChargeProfile {
    pub family: TwistFamily,
    pub samples: Vec<ChargeSample>,
    /// Interior minima of the norm at which it vanishes.
    pub zeros: Vec<f64>,
    pub warnings: Vec<String>,
}

/// Sweeps α and locates the uncharged members: minima of the squared norm
/// are bracketed by sign changes of its α-derivative along the sweep and
/// refined by bisection; a minimum counts as a zero when the norm there is
/// below `1e-6` of the largest sampled norm.
pub fn charge_profile(family: TwistFamily, alphas: &[f64], domain: &Domain) -> Result<ChargeProfile> {
    let bundle = HopfBundle::new(family.kind());
    let mut warnings = vec![];
    for &a in alphas {
        if TwistedImmersion::new(a, family).is_degenerate() {
            warnings.push(format!("α = {a} lies on π/2·ℤ; the map is not an immersion"));
        }
    }
    let samples: Vec<ChargeSample> = alphas
        .par_iter()
        .map(|&a| charge_sample(&bundle, family, a, domain))
        .collect::<Result<_>>()?;
    let norm2 = |a: f64| -> Result<f64> { Ok(charge_sample(&bundle, family, a, domain)?.norm.powi(2)) };
    let slope = |a: f64| -> Result<f64> {
        let h = 1e-6;
        Ok((norm2(a + h)? - norm2(a - h)?) / (2.0 * h))
    };
    let slopes: Vec<f64> = alphas.par_iter().map(|&a| slope(a)).collect::<Result<_>>()?;
    let max_norm = samples.iter().map(|s| s.norm).fold(0.0, f64::max);
    let mut zeros = vec![];
    for k in 0..alphas.len().saturating_sub(1) {
        if !(slopes[k] < 0.0 && slopes[k + 1] >= 0.0) {
            continue;
        }
        let (mut lo, mut hi) = (alphas[k], alphas[k + 1]);
        for _ in 0..200 {
            if hi - lo < 1e-12 {
                break;
            }
            let mid = 0.5 * (lo + hi);
            if slope(mid)? < 0.0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let a = 0.5 * (lo + hi);
        if norm2(a)?.sqrt() <= 1e-6 * max_norm {
            zeros.push(a);
        }
    }
    Ok(ChargeProfile {
        family,
        samples,
        zeros,
        warnings,
    })
}

/// Grid samples of `Φ̃_α` pushed off by `amplitude·cos(θ₁+θ₂)` along the unit
/// normal `−sin α e^{iθ₁} + cos α e^{iθ₂} j` and normalized back onto `S³`.
pub fn perturbed_clifford(n: usize, alpha: f64, amplitude: f64) -> Result<GridMap> {
    let Domain::Grid(grid) = clifford_domain(n) else { unreachable!() };
    let map = TwistedImmersion::new(alpha, TwistFamily::Clifford);
    let (ca, sa) = (alpha.cos(), alpha.sin());
    let mut values = Vec::with_capacity(4 * grid.len());
    for p in 0..grid.len() {
        let y = grid.coords(p);
        let base = map.eval(&y);
        let normal = [-sa * y[0].cos(), -sa * y[0].sin(), ca * y[1].cos(), ca * y[1].sin()];
        let bump = amplitude * (y[0] + y[1]).cos();
        let v: Vec<f64> = base.iter().zip(&normal).map(|(b, nn)| b + bump * nn).collect();
        let r = dot(&v, &v).sqrt();
        values.extend(v.iter().map(|c| c / r));
    }
    GridMap::from_values(grid, TargetKind::Sphere { ambient_dim: 4 }, values)
}

/// Uniformly distributed point of the unit sphere in `ℝⁿ` (rejection from the cube).
pub fn random_unit_vector<R: Rng>(rng: &mut R, n: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let r = dot(&v, &v).sqrt();
        if r > 1e-3 && r <= 1.0 {
            return v.iter().map(|c| c / r).collect();
        }
    }
}

fn combine(frame: &[Vec<f64>], coeffs: &[f64]) -> Vec<f64> {
    let mut out = vec![0.0; frame[0].len()];
    for (f, c) in frame.iter().zip(coeffs) {
        for (o, x) in out.iter_mut().zip(f) {
            *o += c * x;
        }
    }
    out
}

/// Largest errors of the structural checks over a random sample of points.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct HopfChecks {
    pub points: usize,
    pub orthonormality: f64,
    pub projection_norm: f64,
    pub fiber_invariance: f64,
    /// Numeric curvature against the printed coefficient tables.
    pub curvature_table: f64,
    /// Numeric curvature against the closed form of the frame in use.
    pub frame_table: f64,
    pub curvature_antisymmetry: f64,
    /// `⟨V, Ω(H₁,H₂)⟩ − ĝ(⟨V,𝓕⟩H₁, H₂)`.
    pub lorentz_pairing: f64,
    pub lorentz_antisymmetry: f64,
}

impl HopfChecks {
    pub fn passed(&self) -> bool {
        self.orthonormality < 1e-13
            && self.projection_norm < 1e-12
            && self.fiber_invariance < 1e-13
            && self.curvature_table < 1e-12
            && self.frame_table < 1e-12
            && self.curvature_antisymmetry < 1e-13
            && self.lorentz_pairing < 1e-12
            && self.lorentz_antisymmetry < 1e-12
    }
}

/// Runs every structural check at `points` random points of the total space.
pub fn verify_bundle(bundle: &HopfBundle, points: usize, seed: u64) -> Result<HopfChecks> {
    use rand::SeedableRng;
    let kind = bundle.kind;
    let (n, d) = (kind.ambient_dim(), kind.algebra_dim());
    let labels = d + 1..=kind.frame_len();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut c = HopfChecks {
        points,
        ..Default::default()
    };
    for _ in 0..points {
        let p = random_unit_vector(&mut rng, n);
        let frame = bundle.frame(&p);
        for i in 0..frame.len() {
            for j in 0..frame.len() {
                let e = if i == j { 1.0 } else { 0.0 };
                c.orthonormality = c.orthonormality.max((dot(&frame[i], &frame[j]) - e).abs());
            }
        }
        let pr = bundle.project(&p)?;
        c.projection_norm = c.projection_norm.max((dot(&pr, &pr).sqrt() - 1.0).abs());
        let g = match kind {
            HopfKind::Complex => {
                let t: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
                Quaternion::new(t.cos(), t.sin(), 0.0, 0.0)
            }
            HopfKind::Quaternionic => {
                let v = random_unit_vector(&mut rng, 4);
                Quaternion::from_array([v[0], v[1], v[2], v[3]])
            }
        };
        let mut pg = Vec::with_capacity(n);
        for k in 0..n / 4 {
            push_quat(&mut pg, quat(&p, k) * g);
        }
        let prg = bundle.project(&pg)?;
        c.fiber_invariance = c.fiber_invariance.max(max_diff(&pr, &prg));

        let mut table = vec![vec![vec![0.0; d]; n]; n];
        for a in labels.clone() {
            for b in labels.clone() {
                let om = bundle.curvature_numeric(&p, a, b)?;
                let back = bundle.curvature_numeric(&p, b, a)?;
                c.curvature_table = c.curvature_table.max(max_diff(&om, &displayed_curvature(kind, a, b)));
                c.frame_table = c.frame_table.max(max_diff(&om, &frame_curvature(kind, a, b)));
                let anti: Vec<f64> = back.iter().map(|x| -x).collect();
                c.curvature_antisymmetry = c.curvature_antisymmetry.max(max_diff(&om, &anti));
                table[a - 1][b - 1] = om;
            }
        }

        let vc: Vec<f64> = (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h1c: Vec<f64> = labels.clone().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let h2c: Vec<f64> = labels.clone().map(|_| rng.gen_range(-1.0..1.0)).collect();
        let v = combine(&frame[..d], &vc);
        let h1 = combine(&frame[d..], &h1c);
        let h2 = combine(&frame[d..], &h2c);
        let mut pairing = 0.0;
        for (i, a) in labels.clone().enumerate() {
            for (j, b) in labels.clone().enumerate() {
                let om = &table[a - 1][b - 1];
                pairing += h1c[i] * h2c[j] * dot(&vc, om);
            }
        }
        let f1 = bundle.lorentz_endomorphism(&p, &v, &h1)?;
        let f2 = bundle.lorentz_endomorphism(&p, &v, &h2)?;
        c.lorentz_pairing = c.lorentz_pairing.max((pairing - dot(&f1, &h2)).abs());
        c.lorentz_antisymmetry = c.lorentz_antisymmetry.max((dot(&f1, &h2) + dot(&h1, &f2)).abs());
    }
    Ok(c)
}

fn max_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

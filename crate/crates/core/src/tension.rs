//! Dirichlet energy, tension fields and harmonicity residuals of maps.
//!
//! Maps are sampled on a coordinate domain (a product grid or a scattered
//! sample of points) carrying its own metric `g`. Derivatives come from an
//! analytic evaluator when one is attached and from second-order central
//! differences otherwise. Mixed and pure second derivatives are both taken
//! as a composition of first-difference operators, which makes the discrete
//! Laplacian the exact adjoint of the discrete gradient used for the energy.

use std::sync::Arc;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{check_len, KkError, Result};
use crate::geometry::{BaseChart, KKLocalModel, PointData};
use crate::jet::Jet;
use crate::liealg::spd_inverse;
use crate::tensor::Tensor3;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Axis {
    pub n: usize,
    pub origin: f64,
    pub h: f64,
    pub periodic: bool,
}

/// Product grid with a metric on its coordinates. Points are stored
/// row-major with the last axis fastest.
#[derive(Debug, Clone)]
pub struct DomainGrid {
    pub axes: Vec<Axis>,
    pub metric: BaseChart,
}

impl DomainGrid {
    pub fn new(axes: Vec<Axis>, metric: BaseChart) -> Result<Self> {
        check_len("grid metric", axes.len(), metric.dim())?;
        for a in &axes {
            if !(a.h > 0.0) || a.n < 3 {
                return Err(KkError::Input(format!("bad grid axis {a:?}")));
            }
        }
        Ok(Self { axes, metric })
    }

    /// Flat periodic torus `∏ [0, L_k)` with `n_k` points per axis.
    pub fn flat_torus(counts: &[usize], lengths: &[f64]) -> Result<Self> {
        let axes = counts
            .iter()
            .zip(lengths)
            .map(|(&n, &l)| Axis {
                n,
                origin: 0.0,
                h: l / n as f64,
                periodic: true,
            })
            .collect();
        Self::new(axes, BaseChart::euclidean(counts.len()))
    }

    /// Closed interval `[t0, t1]` with `n` points and metric `dt²`.
    pub fn interval(n: usize, t0: f64, t1: f64) -> Result<Self> {
        let axis = Axis {
            n,
            origin: t0,
            h: (t1 - t0) / (n - 1) as f64,
            periodic: false,
        };
        Self::new(vec![axis], BaseChart::euclidean(1))
    }

    pub fn dim(&self) -> usize {
        self.axes.len()
    }

    pub fn len(&self) -> usize {
        self.axes.iter().map(|a| a.n).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn h_min(&self) -> f64 {
        self.axes.iter().map(|a| a.h).fold(f64::INFINITY, f64::min)
    }

    fn strides(&self) -> Vec<usize> {
        let n = self.dim();
        let mut s = vec![1; n];
        for k in (0..n.saturating_sub(1)).rev() {
            s[k] = s[k + 1] * self.axes[k + 1].n;
        }
        s
    }

    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for k in (0..self.dim()).rev() {
            idx[k] = flat % self.axes[k].n;
            flat /= self.axes[k].n;
        }
        idx
    }

    pub fn coords(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .zip(&self.axes)
            .map(|(&i, a)| a.origin + i as f64 * a.h)
            .collect()
    }

    /// Trapezoidal weight including `√det g`.
    pub fn weight(&self, flat: usize) -> f64 {
        let idx = self.multi_index(flat);
        let mut w = 1.0;
        for (i, a) in idx.iter().zip(&self.axes) {
            w *= a.h;
            if !a.periodic && (*i == 0 || *i + 1 == a.n) {
                w *= 0.5;
            }
        }
        w * self.metric.metric(&self.coords(flat)).determinant().sqrt()
    }

    /// First difference along `axis` of a field with `k` components per
    /// point. `shift` is added per wrap on periodic axes (maps with winding).
    pub fn diff_axis(&self, data: &[f64], k: usize, axis: usize, shift: Option<&[f64]>) -> Vec<f64> {
        let ax = self.axes[axis];
        let stride = self.strides()[axis];
        let inv = 1.0 / (2.0 * ax.h);
        let mut out = vec![0.0; data.len()];
        out.par_chunks_mut(k).enumerate().for_each(|(p, o)| {
            let i = (p / stride) % ax.n;
            let at = |off: isize| -> (usize, f64) {
                let j = i as isize + off;
                let wraps = j.div_euclid(ax.n as isize);
                let jj = j.rem_euclid(ax.n as isize) as usize;
                (p + jj * stride - i * stride, wraps as f64)
            };
            let stencil: &[(isize, f64)] = if ax.periodic || (i > 0 && i + 1 < ax.n) {
                &[(-1, -1.0), (1, 1.0)]
            } else if i == 0 {
                &[(0, -3.0), (1, 4.0), (2, -1.0)]
            } else {
                &[(0, 3.0), (-1, -4.0), (-2, 1.0)]
            };
            for (off, w) in stencil {
                let (q, wraps) = at(*off);
                for c in 0..k {
                    let mut val = data[q * k + c];
                    if let Some(s) = shift {
                        val += wraps * s[c];
                    }
                    o[c] += w * inv * val;
                }
            }
        });
        out
    }
}

/// Scattered sample of a coordinate domain with its metric.
#[derive(Debug, Clone)]
pub struct DomainSample {
    pub points: Vec<Vec<f64>>,
    pub metric: BaseChart,
}

#[derive(Debug, Clone)]
pub enum Domain {
    Grid(DomainGrid),
    Sample(DomainSample),
}

impl Domain {
    pub fn dim(&self) -> usize {
        match self {
            Domain::Grid(g) => g.dim(),
            Domain::Sample(s) => s.metric.dim(),
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Domain::Grid(g) => g.len(),
            Domain::Sample(s) => s.points.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn coords(&self, p: usize) -> Vec<f64> {
        match self {
            Domain::Grid(g) => g.coords(p),
            Domain::Sample(s) => s.points[p].clone(),
        }
    }

    /// Quadrature weight; a sample gets equal weights summing to one.
    pub fn weight(&self, p: usize) -> f64 {
        match self {
            Domain::Grid(g) => g.weight(p),
            Domain::Sample(s) => 1.0 / s.points.len() as f64,
        }
    }

    pub fn metric(&self) -> &BaseChart {
        match self {
            Domain::Grid(g) => &g.metric,
            Domain::Sample(s) => &s.metric,
        }
    }
}

/// Value and first two derivatives of a map at one domain point.
#[derive(Debug, Clone, PartialEq)]
pub struct MapJet {
    pub value: Vec<f64>,
    /// `d1[i][λ] = ∂_i Φ^λ`.
    pub d1: Vec<Vec<f64>>,
    /// `d2[i][j][λ] = ∂_i ∂_j Φ^λ`.
    pub d2: Vec<Vec<Vec<f64>>>,
}

impl MapJet {
    pub fn from_jets<const N: usize>(c: &[Jet<N>]) -> Self {
        Self {
            value: c.iter().map(|j| j.v).collect(),
            d1: (0..N).map(|i| c.iter().map(|j| j.g[i]).collect()).collect(),
            d2: (0..N)
                .map(|i| (0..N).map(|k| c.iter().map(|j| j.h[i][k]).collect()).collect())
                .collect(),
        }
    }

    pub fn to_jets<const N: usize>(&self) -> Vec<Jet<N>> {
        assert_eq!(self.d1.len(), N);
        (0..self.value.len())
            .map(|l| {
                let mut j = Jet::<N>::constant(self.value[l]);
                for i in 0..N {
                    j.g[i] = self.d1[i][l];
                    for k in 0..N {
                        j.h[i][k] = self.d2[i][k][l];
                    }
                }
                j
            })
            .collect()
    }

    pub fn domain_dim(&self) -> usize {
        self.d1.len()
    }

    /// Projects an ambient jet onto one that is tangent to the unit sphere to
    /// second order: `|P| = 1`, `⟨P, ∂P⟩ = 0`, `⟨P, ∂²P⟩ = −⟨∂P, ∂P⟩`.
    pub fn sphere_consistent(&self) -> MapJet {
        let n = self.domain_dim();
        let r = dot(&self.value, &self.value).sqrt();
        let p: Vec<f64> = self.value.iter().map(|v| v / r).collect();
        let d1: Vec<Vec<f64>> = self
            .d1
            .iter()
            .map(|g| {
                let s = dot(g, &p);
                g.iter().zip(&p).map(|(a, b)| a - s * b).collect()
            })
            .collect();
        let d2 = (0..n)
            .map(|i| {
                (0..n)
                    .map(|j| {
                        let h = &self.d2[i][j];
                        let s = dot(h, &p) + dot(&d1[i], &d1[j]);
                        h.iter().zip(&p).map(|(a, b)| a - s * b).collect()
                    })
                    .collect()
            })
            .collect();
        MapJet { value: p, d1, d2 }
    }
}

/// Jet of a map into `U × G` in adapted frame components: the base part as a
/// chart jet, `v[j][a] = A^a(∂_jΦ) + θ^a(∂_jΦ̂)` and `dv[i][j][a] = ∂_i v[j][a]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleJet {
    pub base: MapJet,
    pub v: Vec<Vec<f64>>,
    pub dv: Vec<Vec<Vec<f64>>>,
}

pub trait AnalyticMap: Send + Sync {
    fn target_dim(&self) -> usize;
    fn jet(&self, y: &[f64]) -> MapJet;
}

pub trait AnalyticBundleMap: Send + Sync {
    fn base_dim(&self) -> usize;
    fn algebra_dim(&self) -> usize;
    fn bundle_jet(&self, y: &[f64]) -> BundleJet;
}

/// A principal bundle embedded in a Euclidean space and covered by local
/// Kaluza-Klein charts.
pub trait BundleEmbedding: Send + Sync {
    fn ambient_dim(&self) -> usize;
    fn chart_count(&self) -> usize;
    fn model(&self, chart: usize) -> &KKLocalModel;
    /// Chart choice and frame-component jet for an ambient jet on the total
    /// space. The ambient jet must be tangent to the unit sphere.
    fn bundle_jet(&self, jet: &MapJet) -> Result<(usize, BundleJet)>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TargetKind {
    Chart { dim: usize },
    Sphere { ambient_dim: usize },
    /// Values are `x` followed by `v_j` for every domain axis `j`.
    Bundle { m: usize, d: usize },
}

#[derive(Clone)]
pub enum MapSource {
    Values(Vec<f64>),
    Analytic(Arc<dyn AnalyticMap>),
    AnalyticBundle(Arc<dyn AnalyticBundleMap>),
}

/// A map from a sampled domain into a chart, a sphere or a trivialized bundle.
#[derive(Clone)]
pub struct GridMap {
    pub domain: Domain,
    pub kind: TargetKind,
    pub source: MapSource,
    /// Per periodic axis, the jump of the values across one period.
    pub periodic_shift: Vec<Option<Vec<f64>>>,
}

impl std::fmt::Debug for GridMap {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("GridMap")
            .field("points", &self.domain.len())
            .field("kind", &self.kind)
            .finish()
    }
}

impl GridMap {
    pub fn components(&self) -> usize {
        match self.kind {
            TargetKind::Chart { dim } => dim,
            TargetKind::Sphere { ambient_dim } => ambient_dim,
            TargetKind::Bundle { m, d } => m + self.domain.dim() * d,
        }
    }

    pub fn from_values(grid: DomainGrid, kind: TargetKind, values: Vec<f64>) -> Result<Self> {
        let n = grid.dim();
        let map = Self {
            domain: Domain::Grid(grid),
            kind,
            source: MapSource::Values(values),
            periodic_shift: vec![None; n],
        };
        let MapSource::Values(v) = &map.source else { unreachable!() };
        check_len("map values", map.domain.len() * map.components(), v.len())?;
        if let TargetKind::Sphere { ambient_dim } = kind {
            for (p, c) in v.chunks(ambient_dim).enumerate() {
                if (dot(c, c).sqrt() - 1.0).abs() > 1e-12 {
                    return Err(KkError::Input(format!("sphere value at point {p} is not unit")));
                }
            }
        }
        Ok(map)
    }

    /// Samples `f` on the grid, keeping it attached as the analytic evaluator.
    pub fn from_analytic(domain: Domain, kind: TargetKind, f: Arc<dyn AnalyticMap>) -> Self {
        let n = domain.dim();
        Self {
            domain,
            kind,
            source: MapSource::Analytic(f),
            periodic_shift: vec![None; n],
        }
    }

    pub fn from_analytic_bundle(domain: Domain, f: Arc<dyn AnalyticBundleMap>) -> Self {
        let n = domain.dim();
        let kind = TargetKind::Bundle {
            m: f.base_dim(),
            d: f.algebra_dim(),
        };
        Self {
            domain,
            kind,
            source: MapSource::AnalyticBundle(f),
            periodic_shift: vec![None; n],
        }
    }

    pub fn with_periodic_shift(mut self, axis: usize, shift: Vec<f64>) -> Self {
        self.periodic_shift[axis] = Some(shift);
        self
    }

    /// Replaces an analytic source by its samples on the grid.
    pub fn sampled(&self) -> Result<GridMap> {
        let values = self.values()?;
        Ok(GridMap {
            domain: self.domain.clone(),
            kind: self.kind,
            source: MapSource::Values(values),
            periodic_shift: self.periodic_shift.clone(),
        })
    }

    /// Values at every domain point.
    pub fn values(&self) -> Result<Vec<f64>> {
        match &self.source {
            MapSource::Values(v) => Ok(v.clone()),
            MapSource::Analytic(f) => Ok((0..self.domain.len())
                .into_par_iter()
                .flat_map_iter(|p| f.jet(&self.domain.coords(p)).value)
                .collect()),
            MapSource::AnalyticBundle(f) => Ok((0..self.domain.len())
                .into_par_iter()
                .flat_map_iter(|p| {
                    let bj = f.bundle_jet(&self.domain.coords(p));
                    let mut out = bj.base.value;
                    for vj in bj.v {
                        out.extend(vj);
                    }
                    out
                })
                .collect()),
        }
    }

    /// Jets at every point: analytic when available, else central differences.
    pub fn jets(&self) -> Result<Vec<MapJet>> {
        match &self.source {
            MapSource::Analytic(f) => Ok((0..self.domain.len())
                .into_par_iter()
                .map(|p| f.jet(&self.domain.coords(p)))
                .collect()),
            MapSource::AnalyticBundle(_) => Err(KkError::Input(
                "bundle maps expose bundle jets, not chart jets".into(),
            )),
            MapSource::Values(v) => self.fd_jets(v),
        }
    }

    fn fd_jets(&self, v: &[f64]) -> Result<Vec<MapJet>> {
        let Domain::Grid(grid) = &self.domain else {
            return Err(KkError::Input("finite differences need a grid domain".into()));
        };
        let k = self.components();
        let n = grid.dim();
        let d1: Vec<Vec<f64>> = (0..n)
            .map(|a| grid.diff_axis(v, k, a, self.periodic_shift[a].as_deref()))
            .collect();
        let d2: Vec<Vec<Vec<f64>>> = (0..n)
            .map(|i| (0..n).map(|j| grid.diff_axis(&d1[j], k, i, None)).collect())
            .collect();
        Ok((0..grid.len())
            .into_par_iter()
            .map(|p| MapJet {
                value: v[p * k..(p + 1) * k].to_vec(),
                d1: (0..n).map(|i| d1[i][p * k..(p + 1) * k].to_vec()).collect(),
                d2: (0..n)
                    .map(|i| (0..n).map(|j| d2[i][j][p * k..(p + 1) * k].to_vec()).collect())
                    .collect(),
            })
            .collect())
    }

    /// Bundle jets for a map whose target is a trivialized bundle.
    pub fn bundle_jets(&self) -> Result<Vec<BundleJet>> {
        let TargetKind::Bundle { m, d } = self.kind else {
            return Err(KkError::Input("map target is not a trivialized bundle".into()));
        };
        if let MapSource::AnalyticBundle(f) = &self.source {
            return Ok((0..self.domain.len())
                .into_par_iter()
                .map(|p| f.bundle_jet(&self.domain.coords(p)))
                .collect());
        }
        let n = self.domain.dim();
        Ok(self
            .jets()?
            .into_iter()
            .map(|j| BundleJet {
                base: MapJet {
                    value: j.value[..m].to_vec(),
                    d1: j.d1.iter().map(|r| r[..m].to_vec()).collect(),
                    d2: j.d2.iter().map(|r| r.iter().map(|c| c[..m].to_vec()).collect()).collect(),
                },
                v: (0..n).map(|jj| j.value[m + jj * d..m + (jj + 1) * d].to_vec()).collect(),
                dv: (0..n)
                    .map(|i| (0..n).map(|jj| j.d1[i][m + jj * d..m + (jj + 1) * d].to_vec()).collect())
                    .collect(),
            })
            .collect())
    }
}

/// What a map is measured against.
#[derive(Clone, Copy)]
pub enum Target<'a> {
    Chart(&'a BaseChart),
    Sphere,
    Bundle(&'a KKLocalModel),
    Embedded(&'a dyn BundleEmbedding),
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn quad(g: &DMatrix<f64>, a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        for j in 0..b.len() {
            s += g[(i, j)] * a[i] * b[j];
        }
    }
    s
}

/// Domain geometry at one point: `g^{ij}` and `Γ^k_{ij}`.
#[derive(Debug, Clone)]
pub struct DomainPoint {
    pub ginv: DMatrix<f64>,
    pub gamma: Tensor3,
}

impl DomainPoint {
    pub fn at(metric: &BaseChart, y: &[f64]) -> Result<Self> {
        let g = metric.metric(y);
        let ginv = spd_inverse(&g).ok_or_else(|| KkError::Singular {
            what: "domain metric",
            point: y.to_vec(),
        })?;
        Ok(Self {
            ginv,
            gamma: metric.christoffel(y)?,
        })
    }

    /// `g^{ij}(∂_i∂_j f − Γ^k_{ij} ∂_k f)` for every component, without any
    /// target connection term.
    pub fn laplacian(&self, jet: &MapJet) -> Vec<f64> {
        let n = jet.domain_dim();
        let k = jet.value.len();
        let mut out = vec![0.0; k];
        for i in 0..n {
            for j in 0..n {
                let w = self.ginv[(i, j)];
                if w == 0.0 {
                    continue;
                }
                for l in 0..k {
                    let mut s = jet.d2[i][j][l];
                    for kk in 0..n {
                        s -= self.gamma[(kk, i, j)] * jet.d1[kk][l];
                    }
                    out[l] += w * s;
                }
            }
        }
        out
    }

    fn trace<F: Fn(usize, usize) -> Vec<f64>>(&self, n: usize, len: usize, f: F) -> Vec<f64> {
        let mut out = vec![0.0; len];
        for i in 0..n {
            for j in 0..n {
                let w = self.ginv[(i, j)];
                if w == 0.0 {
                    continue;
                }
                for (o, t) in out.iter_mut().zip(f(i, j)) {
                    *o += w * t;
                }
            }
        }
        out
    }
}

/// Coordinate tension `g^{st}[∂_s∂_tΦ^λ − Γ^l_{st}∂_lΦ^λ + Γ̄^λ_{μν}∂_sΦ^μ∂_tΦ^ν]`.
pub fn chart_tension_at(dp: &DomainPoint, jet: &MapJet, target_gamma: &Tensor3) -> Vec<f64> {
    let n = jet.domain_dim();
    let m = jet.value.len();
    let mut tau = dp.laplacian(jet);
    for i in 0..n {
        for j in 0..n {
            let w = dp.ginv[(i, j)];
            if w == 0.0 {
                continue;
            }
            for (r, t) in tau.iter_mut().enumerate() {
                for mu in 0..m {
                    for nu in 0..m {
                        *t += w * target_gamma[(r, mu, nu)] * jet.d1[i][mu] * jet.d1[j][nu];
                    }
                }
            }
        }
    }
    tau
}

/// Tangential part of the ambient Laplacian for maps into a unit sphere.
pub fn sphere_tension_at(dp: &DomainPoint, jet: &MapJet) -> Vec<f64> {
    let lap = dp.laplacian(jet);
    let s = dot(&lap, &jet.value);
    lap.iter().zip(&jet.value).map(|(a, p)| a - s * p).collect()
}

/// Pointwise pieces of the generalized Wong system for a bundle map.
#[derive(Debug, Clone, PartialEq)]
pub struct BundleResiduals {
    /// Tension of the base map `Φ` in the chart.
    pub base_tension: Vec<f64>,
    /// Lorentz strength `g^{ij} β̄_{bc}F^c_{αμ}ḡ^{αρ} ∂_iΦ^μ v^b_j`.
    pub lorentz: Vec<f64>,
    /// Base tension minus the Lorentz and fiber-shape forces.
    pub horizontal: Vec<f64>,
    /// Vertical tension in frame components (closed form in `B`, `L`).
    pub vertical: Vec<f64>,
    /// `½ g^{ij}(ḡ(u_i,u_j) + β̄(v_i,v_j))`.
    pub energy_density: f64,
}

pub fn bundle_residuals_at(dp: &DomainPoint, bj: &BundleJet, p: &PointData) -> BundleResiduals {
    let (m, d) = (p.m, p.d);
    let n = bj.base.domain_dim();
    let u = &bj.base.d1;
    let v = &bj.v;
    let base_tension = chart_tension_at(dp, &bj.base, &p.gamma);
    let lorentz = dp.trace(n, m, |i, j| p.lorentz_force(&u[i], &v[j]));
    let shape = dp.trace(n, m, |i, j| p.shape_force(&v[i], &v[j]));
    let horizontal: Vec<f64> = (0..m)
        .map(|r| base_tension[r] - lorentz[r] - 0.5 * shape[r])
        .collect();

    let sc = &p.algebra;
    let vertical = dp.trace(n, d, |i, j| {
        // lowered B and L contributions, then raised with β̄⁻¹
        let mut low = vec![0.0; d];
        for (dd, lo) in low.iter_mut().enumerate() {
            for a in 0..d {
                for mu in 0..m {
                    *lo += p.b[(a, mu, dd)] * u[i][mu] * v[j][a];
                }
                for b in 0..d {
                    *lo += 0.5 * p.l[(a, b, dd)] * v[i][a] * v[j][b];
                }
            }
        }
        let au: Vec<f64> = (0..d).map(|a| (0..m).map(|mu| p.a[(a, mu)] * u[i][mu]).sum()).collect();
        let br = sc.bracket_unchecked(&au, &v[j]);
        (0..d)
            .map(|c| (0..d).map(|dd| p.beta_inv[(dd, c)] * low[dd]).sum::<f64>() + br[c])
            .collect()
    });
    let mut vertical = vertical;
    for (c, vc) in vertical.iter_mut().enumerate() {
        for i in 0..n {
            for j in 0..n {
                let w = dp.ginv[(i, j)];
                let mut s = bj.dv[i][j][c];
                for k in 0..n {
                    s -= dp.gamma[(k, i, j)] * v[k][c];
                }
                *vc += w * s;
            }
        }
    }

    let mut e = 0.0;
    for i in 0..n {
        for j in 0..n {
            e += dp.ginv[(i, j)] * (quad(&p.gbar, &u[i], &u[j]) + quad(&p.beta, &v[i], &v[j]));
        }
    }
    BundleResiduals {
        base_tension,
        lorentz,
        horizontal,
        vertical,
        energy_density: 0.5 * e,
    }
}

/// Vertical tension by the trace formula: the pulled-back vertical
/// connection applied to `Φ̃*ω` plus `ω(Tr Φ̃*T)`.
pub fn vertical_trace_at(dp: &DomainPoint, bj: &BundleJet, p: &PointData) -> Vec<f64> {
    let (m, d) = (p.m, p.d);
    let n = bj.base.domain_dim();
    let conn = p.frame_connection();
    let t = p.oneill_t();
    let frame = |i: usize| -> Vec<f64> {
        let mut w = bj.base.d1[i].clone();
        w.extend_from_slice(&bj.v[i]);
        w
    };
    let vert = |j: usize| -> Vec<f64> {
        let mut w = vec![0.0; m];
        w.extend_from_slice(&bj.v[j]);
        w
    };
    let horiz = |j: usize| -> Vec<f64> {
        let mut w = bj.base.d1[j].clone();
        w.extend(std::iter::repeat(0.0).take(d));
        w
    };
    let mut out = vec![0.0; d];
    for i in 0..n {
        for j in 0..n {
            let w = dp.ginv[(i, j)];
            if w == 0.0 {
                continue;
            }
            let nab = conn.apply(&frame(i), &vert(j));
            let tt = t.apply(&vert(i), &horiz(j));
            for c in 0..d {
                let mut s = bj.dv[i][j][c] + nab[m + c] + tt[m + c];
                for k in 0..n {
                    s -= dp.gamma[(k, i, j)] * bj.v[k][c];
                }
                out[c] += w * s;
            }
        }
    }
    out
}

/// Per-point report of a tension evaluation.
#[derive(Debug, Clone, Serialize)]
pub struct TensionReport {
    pub points: usize,
    /// Tension in target components (chart, ambient or frame).
    #[serde(skip)]
    pub tau: Vec<Vec<f64>>,
    #[serde(skip)]
    pub horizontal: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub vertical: Option<Vec<Vec<f64>>>,
    #[serde(skip)]
    pub energy_density: Vec<f64>,
    pub sup_tension: f64,
    pub l2_tension: f64,
    pub sup_horizontal: Option<f64>,
    pub sup_vertical: Option<f64>,
    pub energy: f64,
}

impl TensionReport {
    /// One row per point: coordinates, tension, residuals, energy density.
    pub fn csv(&self, domain: &Domain) -> String {
        let n = domain.dim();
        let k = self.tau.first().map_or(0, |t| t.len());
        let mut head: Vec<String> = (1..=n).map(|i| format!("y{i}")).collect();
        head.extend((1..=k).map(|i| format!("tau{i}")));
        if let Some(h) = &self.horizontal {
            head.extend((1..=h[0].len()).map(|i| format!("h{i}")));
        }
        if let Some(v) = &self.vertical {
            head.extend((1..=v[0].len()).map(|i| format!("w{i}")));
        }
        head.push("energy_density".into());
        let mut out = head.join(",") + "\n";
        for p in 0..self.points {
            let mut row = domain.coords(p);
            row.extend(&self.tau[p]);
            if let Some(h) = &self.horizontal {
                row.extend(&h[p]);
            }
            if let Some(v) = &self.vertical {
                row.extend(&v[p]);
            }
            row.push(self.energy_density[p]);
            let cells: Vec<String> = row.iter().map(|v| crate::wong::fmt17(*v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }
}

struct PointEval {
    tau: Vec<f64>,
    tau_norm2: f64,
    horizontal: Option<(Vec<f64>, f64)>,
    vertical: Option<(Vec<f64>, f64)>,
    density: f64,
}

fn norm_with(g: &DMatrix<f64>, v: &[f64]) -> f64 {
    quad(g, v, v).max(0.0)
}

fn eval_points(map: &GridMap, target: Target<'_>) -> Result<Vec<PointEval>> {
    let domain = &map.domain;
    let metric = domain.metric();
    let n = domain.dim();
    match target {
        Target::Chart(chart) => {
            let jets = map.jets()?;
            jets.par_iter()
                .enumerate()
                .map(|(p, jet)| {
                    let dp = DomainPoint::at(metric, &domain.coords(p))?;
                    let gbar = chart.metric(&jet.value);
                    let gam = chart.christoffel(&jet.value).map_err(|e| {
                        KkError::Domain(format!("map leaves the chart at point {p}: {e}"))
                    })?;
                    let tau = chart_tension_at(&dp, jet, &gam);
                    let mut e = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            e += dp.ginv[(i, j)] * quad(&gbar, &jet.d1[i], &jet.d1[j]);
                        }
                    }
                    Ok(PointEval {
                        tau_norm2: norm_with(&gbar, &tau),
                        tau,
                        horizontal: None,
                        vertical: None,
                        density: 0.5 * e,
                    })
                })
                .collect()
        }
        Target::Sphere => {
            let jets = map.jets()?;
            jets.par_iter()
                .enumerate()
                .map(|(p, jet)| {
                    let dp = DomainPoint::at(metric, &domain.coords(p))?;
                    let tau = sphere_tension_at(&dp, jet);
                    let mut e = 0.0;
                    for i in 0..n {
                        for j in 0..n {
                            e += dp.ginv[(i, j)] * dot(&jet.d1[i], &jet.d1[j]);
                        }
                    }
                    Ok(PointEval {
                        tau_norm2: dot(&tau, &tau),
                        tau,
                        horizontal: None,
                        vertical: None,
                        density: 0.5 * e,
                    })
                })
                .collect()
        }
        Target::Bundle(model) => {
            let bjs = map.bundle_jets()?;
            bjs.par_iter()
                .enumerate()
                .map(|(p, bj)| {
                    let dp = DomainPoint::at(metric, &domain.coords(p))?;
                    let pd = model.at(&bj.base.value).map_err(|e| {
                        KkError::Domain(format!("map leaves the chart at point {p}: {e}"))
                    })?;
                    Ok(bundle_eval(&dp, bj, &pd))
                })
                .collect()
        }
        Target::Embedded(emb) => {
            let jets = map.jets()?;
            jets.par_iter()
                .enumerate()
                .map(|(p, jet)| {
                    let dp = DomainPoint::at(metric, &domain.coords(p))?;
                    let (chart, bj) = emb.bundle_jet(&jet.sphere_consistent())?;
                    let pd = emb.model(chart).at(&bj.base.value)?;
                    Ok(bundle_eval(&dp, &bj, &pd))
                })
                .collect()
        }
    }
}

fn bundle_eval(dp: &DomainPoint, bj: &BundleJet, pd: &PointData) -> PointEval {
    let r = bundle_residuals_at(dp, bj, pd);
    let hn = norm_with(&pd.gbar, &r.horizontal);
    let vn = norm_with(&pd.beta, &r.vertical);
    let mut tau = r.horizontal.clone();
    tau.extend(&r.vertical);
    PointEval {
        tau_norm2: hn + vn,
        tau,
        horizontal: Some((r.horizontal, hn)),
        vertical: Some((r.vertical, vn)),
        density: r.energy_density,
    }
}

fn report(map: &GridMap, evals: Vec<PointEval>) -> TensionReport {
    let domain = &map.domain;
    let mut sup: f64 = 0.0;
    let mut l2 = 0.0;
    let mut energy = 0.0;
    let mut sup_h: Option<f64> = None;
    let mut sup_v: Option<f64> = None;
    for (p, e) in evals.iter().enumerate() {
        let w = domain.weight(p);
        sup = sup.max(e.tau_norm2.sqrt());
        l2 += w * e.tau_norm2;
        energy += w * e.density;
        if let Some((_, h)) = &e.horizontal {
            sup_h = Some(sup_h.unwrap_or(0.0).max(h.sqrt()));
        }
        if let Some((_, v)) = &e.vertical {
            sup_v = Some(sup_v.unwrap_or(0.0).max(v.sqrt()));
        }
    }
    let has_split = evals.first().is_some_and(|e| e.horizontal.is_some());
    TensionReport {
        points: evals.len(),
        horizontal: has_split.then(|| evals.iter().map(|e| e.horizontal.as_ref().unwrap().0.clone()).collect()),
        vertical: has_split.then(|| evals.iter().map(|e| e.vertical.as_ref().unwrap().0.clone()).collect()),
        energy_density: evals.iter().map(|e| e.density).collect(),
        tau: evals.into_iter().map(|e| e.tau).collect(),
        sup_tension: sup,
        l2_tension: l2.sqrt(),
        sup_horizontal: sup_h,
        sup_vertical: sup_v,
        energy,
    }
}

/// `½ ∫ Tr_g(Φ*ḡ) dVol_g` by the grid quadrature.
pub fn dirichlet_energy(map: &GridMap, target: Target<'_>) -> Result<f64> {
    Ok(report(map, eval_points(map, target)?).energy)
}

/// Tension of the map; for bundle targets the per-point tension is the
/// horizontal residual followed by the vertical residual.
pub fn tension_field(map: &GridMap, target: Target<'_>) -> Result<TensionReport> {
    Ok(report(map, eval_points(map, target)?))
}

/// Horizontal and vertical residuals of a map into a bundle.
pub fn bundle_tension(map: &GridMap, target: Target<'_>) -> Result<TensionReport> {
    match target {
        Target::Bundle(_) | Target::Embedded(_) => tension_field(map, target),
        _ => Err(KkError::Input("bundle_tension needs a bundle target".into())),
    }
}

fn bundle_points(map: &GridMap, target: Target<'_>) -> Result<Vec<(DomainPoint, BundleJet, PointData)>> {
    let domain = &map.domain;
    let metric = domain.metric();
    match target {
        Target::Bundle(model) => {
            let bjs = map.bundle_jets()?;
            bjs.into_par_iter()
                .enumerate()
                .map(|(p, bj)| {
                    let dp = DomainPoint::at(metric, &domain.coords(p))?;
                    let pd = model.at(&bj.base.value)?;
                    Ok((dp, bj, pd))
                })
                .collect()
        }
        Target::Embedded(emb) => {
            let jets = map.jets()?;
            jets.par_iter()
                .enumerate()
                .map(|(p, jet)| {
                    let dp = DomainPoint::at(metric, &domain.coords(p))?;
                    let (chart, bj) = emb.bundle_jet(&jet.sphere_consistent())?;
                    let pd = emb.model(chart).at(&bj.base.value)?;
                    Ok((dp, bj, pd))
                })
                .collect()
        }
        _ => Err(KkError::Input("a bundle target is required".into())),
    }
}

/// Vertical tension at every point by the trace formula.
pub fn vertical_residual(map: &GridMap, target: Target<'_>) -> Result<Vec<Vec<f64>>> {
    Ok(bundle_points(map, target)?
        .par_iter()
        .map(|(dp, bj, pd)| vertical_trace_at(dp, bj, pd))
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct LorentzDensity {
    /// Base-chart vectors.
    pub field: Vec<Vec<f64>>,
    /// Pointwise ḡ-norms.
    pub norm: Vec<f64>,
    /// Base points where the field was evaluated.
    pub base_points: Vec<Vec<f64>>,
    /// Chart used at each point (0 for single-chart targets).
    pub charts: Vec<usize>,
    pub sup: f64,
}

pub fn lorentz_charge_density(map: &GridMap, target: Target<'_>) -> Result<LorentzDensity> {
    let domain = &map.domain;
    let metric = domain.metric();
    let rows: Vec<(Vec<f64>, f64, Vec<f64>, usize)> = match target {
        Target::Bundle(model) => map
            .bundle_jets()?
            .par_iter()
            .enumerate()
            .map(|(p, bj)| {
                let dp = DomainPoint::at(metric, &domain.coords(p))?;
                let pd = model.at(&bj.base.value)?;
                Ok(lorentz_row(&dp, bj, &pd, 0))
            })
            .collect::<Result<_>>()?,
        Target::Embedded(emb) => map
            .jets()?
            .par_iter()
            .enumerate()
            .map(|(p, jet)| {
                let dp = DomainPoint::at(metric, &domain.coords(p))?;
                let (chart, bj) = emb.bundle_jet(&jet.sphere_consistent())?;
                let pd = emb.model(chart).at(&bj.base.value)?;
                Ok(lorentz_row(&dp, &bj, &pd, chart))
            })
            .collect::<Result<_>>()?,
        _ => return Err(KkError::Input("a bundle target is required".into())),
    };
    let sup = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let mut out = LorentzDensity {
        field: vec![],
        norm: vec![],
        base_points: vec![],
        charts: vec![],
        sup,
    };
    for (f, nrm, x, c) in rows {
        out.field.push(f);
        out.norm.push(nrm);
        out.base_points.push(x);
        out.charts.push(c);
    }
    Ok(out)
}

fn lorentz_row(dp: &DomainPoint, bj: &BundleJet, pd: &PointData, chart: usize) -> (Vec<f64>, f64, Vec<f64>, usize) {
    let n = bj.base.domain_dim();
    let l = dp.trace(n, pd.m, |i, j| pd.lorentz_force(&bj.base.d1[i], &bj.v[j]));
    let nrm = norm_with(&pd.gbar, &l).sqrt();
    (l, nrm, bj.base.value.clone(), chart)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSettings {
    pub dt: f64,
    pub steps: usize,
    pub renormalize: bool,
    /// Stability constant `c` in `dt < c h²_min`.
    pub cfl: f64,
}

impl Default for FlowSettings {
    fn default() -> Self {
        Self {
            dt: 0.0,
            steps: 0,
            renormalize: true,
            cfl: 0.2,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlowResult {
    pub map: GridMap,
    /// Energy before every step and after the last one.
    pub energy: Vec<f64>,
    /// Sup-norm of the tension before every step and after the last one.
    pub sup_tension: Vec<f64>,
}

impl FlowResult {
    pub fn csv(&self) -> String {
        let mut out = String::from("step,energy,sup_tension\n");
        for (s, (e, t)) in self.energy.iter().zip(&self.sup_tension).enumerate() {
            out.push_str(&format!("{s},{},{}\n", crate::wong::fmt17(*e), crate::wong::fmt17(*t)));
        }
        out
    }
}

/// Explicit Euler for `∂_s Φ = τ(Φ)` on grid values. Sphere targets are
/// re-normalized after each step when requested.
pub fn heat_flow(map: &GridMap, target: Target<'_>, settings: FlowSettings) -> Result<FlowResult> {
    let Domain::Grid(grid) = &map.domain else {
        return Err(KkError::Input("heat flow needs a grid domain".into()));
    };
    let bound = settings.cfl * grid.h_min().powi(2);
    if !(settings.dt > 0.0) || settings.dt >= bound {
        return Err(KkError::Input(format!(
            "time step {} violates the stability bound {bound}",
            settings.dt
        )));
    }
    match (target, map.kind) {
        (Target::Sphere, TargetKind::Sphere { .. }) | (Target::Chart(_), TargetKind::Chart { .. }) => {}
        _ => {
            return Err(KkError::Unsupported(
                "heat flow runs on chart targets and embedded spheres".into(),
            ))
        }
    }
    let k = map.components();
    let mut cur = map.sampled()?;
    let mut energy = Vec::with_capacity(settings.steps + 1);
    let mut sup = Vec::with_capacity(settings.steps + 1);
    for step in 0..=settings.steps {
        let evals = eval_points(&cur, target)?;
        let rep = report(&cur, evals);
        if let Some(&prev) = energy.last() {
            if rep.energy > prev + 1e-12 {
                return Err(KkError::Instability {
                    step,
                    before: prev,
                    after: rep.energy,
                });
            }
        }
        energy.push(rep.energy);
        sup.push(rep.sup_tension);
        if step == settings.steps {
            break;
        }
        let MapSource::Values(vals) = &mut cur.source else { unreachable!() };
        vals.par_chunks_mut(k).zip(rep.tau.par_iter()).for_each(|(v, t)| {
            for (a, b) in v.iter_mut().zip(t) {
                *a += settings.dt * b;
            }
            if settings.renormalize && matches!(target, Target::Sphere) {
                let r = dot(v, v).sqrt();
                v.iter_mut().for_each(|a| *a /= r);
            }
        });
        if vals.iter().any(|v| !v.is_finite()) {
            return Err(KkError::NonFinite(format!("heat flow at step {step}")));
        }
    }
    Ok(FlowResult {
        map: cur,
        energy,
        sup_tension: sup,
    })
}

//! Generalized Wong equations for curves in a local Kaluza-Klein bundle.
//!
//! A curve `γ̃(t) = (x(t), g(t))` in `U × G` is tracked through its base point
//! `x`, base velocity `u = ẋ` and vertical frame velocity
//! `v = A(u) + θ^R(ġ)`. The geodesic equations of the Kaluza-Klein metric in
//! these variables are
//!
//! ```text
//! u̇^ρ = −Γ̄^ρ_{μν}u^μu^ν + β̄_{bc}F^c_{αμ}ḡ^{αρ}u^μv^b + ½ḡ^{μρ}B_{aμb}v^av^b
//! v̇^b = −β̄^{db}B_{aμd}v^au^μ − [A(u), v]^b − ½β̄^{db}L_{acd}v^av^c
//! ```
//!
//! Alongside `(x, u, v)` the integrator carries `R = Ad_{g(t)}` relative to
//! the starting fiber point, `Ṙ = ad_{v − A(u)} R`. The charges
//! `κ = −Rᵀβ̄v` are the momenta of the right action and are conserved for
//! every model; in the abelian case `R = 1` and `κ = −β̄v`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{check_len, KkError, Result};
use crate::geometry::{BaseChart, KKLocalModel, PointData};

#[derive(Debug, Clone, PartialEq)]
pub struct WongState {
    pub t: f64,
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    /// `Ad_{g(t)}` relative to the starting fiber point, row-major `d × d`.
    pub transport: Vec<f64>,
}

impl WongState {
    pub fn new(t: f64, x: Vec<f64>, u: Vec<f64>, v: Vec<f64>) -> Self {
        let d = v.len();
        let mut transport = vec![0.0; d * d];
        for a in 0..d {
            transport[a * d + a] = 1.0;
        }
        Self { t, x, u, v, transport }
    }

    /// Same point with both velocities flipped.
    pub fn reversed(&self) -> Self {
        Self {
            t: self.t,
            x: self.x.clone(),
            u: self.u.iter().map(|a| -a).collect(),
            v: self.v.iter().map(|a| -a).collect(),
            transport: self.transport.clone(),
        }
    }

    fn pack(&self) -> Vec<f64> {
        let mut y = Vec::with_capacity(self.x.len() * 2 + self.v.len() + self.transport.len());
        y.extend_from_slice(&self.x);
        y.extend_from_slice(&self.u);
        y.extend_from_slice(&self.v);
        y.extend_from_slice(&self.transport);
        y
    }

    fn unpack(t: f64, y: &[f64], m: usize, d: usize) -> Self {
        Self {
            t,
            x: y[..m].to_vec(),
            u: y[m..2 * m].to_vec(),
            v: y[2 * m..2 * m + d].to_vec(),
            transport: y[2 * m + d..].to_vec(),
        }
    }

    fn transport_matrix(&self) -> DMatrix<f64> {
        let d = self.v.len();
        DMatrix::from_row_slice(d, d, &self.transport)
    }
}

/// Time derivative of a [`WongState`].
#[derive(Debug, Clone, PartialEq)]
pub struct WongDerivative {
    pub dx: Vec<f64>,
    pub du: Vec<f64>,
    pub dv: Vec<f64>,
    pub dtransport: Vec<f64>,
}

fn check_state(model: &KKLocalModel, s: &WongState) -> Result<()> {
    let (m, d) = (model.base_dim(), model.algebra_dim());
    check_len("state x", m, s.x.len())?;
    check_len("state u", m, s.u.len())?;
    check_len("state v", d, s.v.len())?;
    check_len("state transport", d * d, s.transport.len())
}

pub fn wong_rhs(model: &KKLocalModel, state: &WongState) -> Result<WongDerivative> {
    check_state(model, state)?;
    let p = model.at(&state.x)?;
    Ok(rhs_at(&p, state))
}

fn rhs_at(p: &PointData, s: &WongState) -> WongDerivative {
    let (m, d) = (p.m, p.d);
    let (u, v) = (&s.u, &s.v);
    let mut du = vec![0.0; m];
    for (r, o) in du.iter_mut().enumerate() {
        let mut acc = 0.0;
        for mu in 0..m {
            for nu in 0..m {
                acc += p.gamma[(r, mu, nu)] * u[mu] * u[nu];
            }
        }
        *o = -acc;
    }
    let lor = p.lorentz_force(u, v);
    let shape = p.shape_force(v, v);
    for r in 0..m {
        du[r] += lor[r] + 0.5 * shape[r];
    }

    let au: Vec<f64> = (0..d).map(|a| (0..m).map(|mu| p.a[(a, mu)] * u[mu]).sum()).collect();
    let br = p.algebra.bracket_unchecked(&au, v);
    // lowered: s_d = B_{aμd} v^a u^μ + ½ L_{acd} v^a v^c
    let low: Vec<f64> = (0..d)
        .map(|dd| {
            let mut s = 0.0;
            for a in 0..d {
                if v[a] == 0.0 {
                    continue;
                }
                for mu in 0..m {
                    s += p.b[(a, mu, dd)] * v[a] * u[mu];
                }
                for c in 0..d {
                    s += 0.5 * p.l[(a, c, dd)] * v[a] * v[c];
                }
            }
            s
        })
        .collect();
    let dv: Vec<f64> = (0..d)
        .map(|b| -(0..d).map(|dd| p.beta_inv[(dd, b)] * low[dd]).sum::<f64>() - br[b])
        .collect();

    let w: Vec<f64> = v.iter().zip(&au).map(|(a, b)| a - b).collect();
    let dr = p.algebra.ad_matrix(&w) * s.transport_matrix();
    let mut dtransport = vec![0.0; d * d];
    for i in 0..d {
        for j in 0..d {
            dtransport[i * d + j] = dr[(i, j)];
        }
    }
    WongDerivative {
        dx: u.clone(),
        du,
        dv,
        dtransport,
    }
}

/// Geodesic equation of the base alone, `u̇ = −Γ̄uu`.
pub fn geodesic_rhs(base: &BaseChart, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
    let g = base.christoffel(x)?;
    let m = x.len();
    Ok((0..m)
        .map(|r| {
            let mut acc = 0.0;
            for mu in 0..m {
                for nu in 0..m {
                    acc += g[(r, mu, nu)] * u[mu] * u[nu];
                }
            }
            -acc
        })
        .collect())
}

/// `∇_u u = u̇ + Γ̄uu` for a base curve.
pub fn covariant_acceleration(base: &BaseChart, x: &[f64], u: &[f64], du: &[f64]) -> Result<Vec<f64>> {
    let geo = geodesic_rhs(base, x, u)?;
    Ok(du.iter().zip(&geo).map(|(a, g)| a - g).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Method {
    /// Classical fourth-order Runge-Kutta with fixed step `h`.
    Rk4 { h: f64 },
    /// Dormand-Prince 5(4) with error control.
    Rk45 { atol: f64, rtol: f64 },
}

impl Method {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Method::Rk4 { h } => h > 0.0 && h.is_finite(),
            Method::Rk45 { atol, rtol } => atol > 0.0 && rtol > 0.0 && atol.is_finite() && rtol.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(KkError::Input(format!("invalid integrator settings {self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub samples: Vec<WongState>,
    pub method: Method,
    pub rejected_steps: usize,
}

impl Trajectory {
    pub fn last(&self) -> &WongState {
        self.samples.last().expect("trajectory holds at least the initial state")
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

/// Integrates `ẏ = f(t, y)` from `t0` to `t_end`, recording every accepted step.
/// The last step is shortened to land on `t_end`.
pub fn integrate_ode<F>(
    f: F,
    t0: f64,
    y0: Vec<f64>,
    t_end: f64,
    method: Method,
) -> std::result::Result<(Vec<(f64, Vec<f64>)>, usize), (KkError, Vec<(f64, Vec<f64>)>)>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let mut out = vec![(t0, y0)];
    if let Err(e) = method.validate() {
        return Err((e, out));
    }
    if !(t_end > t0) {
        return Err((KkError::Input(format!("t_end {t_end} must exceed t0 {t0}")), out));
    }
    match method {
        Method::Rk4 { h } => {
            let n = ((t_end - t0) / h - 1e-9).ceil().max(1.0) as usize;
            for i in 0..n {
                let (t, y) = out.last().unwrap().clone();
                let step = if i + 1 == n { t_end - t } else { h };
                match rk4_step(&f, t, &y, step) {
                    Ok(yn) => {
                        let tn = if i + 1 == n { t_end } else { t0 + (i + 1) as f64 * h };
                        out.push((tn, yn));
                    }
                    Err(e) => return Err((e, out)),
                }
            }
            Ok((out, 0))
        }
        Method::Rk45 { atol, rtol } => dopri5(&f, t0, t_end, atol, rtol, out),
    }
}

fn axpy(y: &[f64], h: f64, ks: &[(&[f64], f64)]) -> Vec<f64> {
    let mut o = y.to_vec();
    for (k, c) in ks {
        if *c == 0.0 {
            continue;
        }
        for (oi, ki) in o.iter_mut().zip(k.iter()) {
            *oi += h * c * ki;
        }
    }
    o
}

fn rk4_step<F>(f: &F, t: f64, y: &[f64], h: f64) -> Result<Vec<f64>>
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    let k1 = f(t, y)?;
    let k2 = f(t + 0.5 * h, &axpy(y, h, &[(&k1, 0.5)]))?;
    let k3 = f(t + 0.5 * h, &axpy(y, h, &[(&k2, 0.5)]))?;
    let k4 = f(t + h, &axpy(y, h, &[(&k3, 1.0)]))?;
    Ok(axpy(
        y,
        h,
        &[(&k1, 1.0 / 6.0), (&k2, 1.0 / 3.0), (&k3, 1.0 / 3.0), (&k4, 1.0 / 6.0)],
    ))
}

type OdeOutcome = std::result::Result<(Vec<(f64, Vec<f64>)>, usize), (KkError, Vec<(f64, Vec<f64>)>)>;

fn dopri5<F>(f: &F, t0: f64, t_end: f64, atol: f64, rtol: f64, mut out: Vec<(f64, Vec<f64>)>) -> OdeOutcome
where
    F: Fn(f64, &[f64]) -> Result<Vec<f64>>,
{
    const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
    const A: [[f64; 6]; 7] = [
        [0.0; 6],
        [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
        [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
        [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
        [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
        [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
        [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
    ];
    const E: [f64; 7] = [
        71.0 / 57600.0,
        0.0,
        -71.0 / 16695.0,
        71.0 / 1920.0,
        -17253.0 / 339200.0,
        22.0 / 525.0,
        -1.0 / 40.0,
    ];

    let mut rejected = 0;
    let (mut t, mut y) = out[0].clone();
    let mut k1 = match f(t, &y) {
        Ok(k) => k,
        Err(e) => return Err((e, out)),
    };
    let scale0: f64 = y.iter().fold(0.0, |m, v| m.max(v.abs()));
    let kn: f64 = k1.iter().fold(0.0, |m, v| m.max(v.abs()));
    let mut h = if kn > 0.0 {
        (0.01 * (scale0 * rtol + atol) / kn).max(1e-6).min(t_end - t0)
    } else {
        (t_end - t0) * 1e-3
    };
    while t < t_end {
        let h_min = 1e-14 * t.abs().max(1.0);
        if h < h_min {
            return Err((
                KkError::StepUnderflow {
                    t,
                    partial: Box::new(Trajectory {
                        samples: vec![],
                        method: Method::Rk45 { atol, rtol },
                        rejected_steps: rejected,
                    }),
                },
                out,
            ));
        }
        let last = t + h >= t_end;
        if last {
            h = t_end - t;
        }
        let mut ks: Vec<Vec<f64>> = vec![k1.clone()];
        let mut failed = None;
        for s in 1..7 {
            let terms: Vec<(&[f64], f64)> = (0..s).map(|j| (ks[j].as_slice(), A[s][j])).collect();
            match f(t + C[s] * h, &axpy(&y, h, &terms)) {
                Ok(k) => ks.push(k),
                Err(e) => {
                    failed = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = failed {
            if matches!(e, KkError::Singular { .. } | KkError::Domain(_)) {
                h *= 0.25;
                rejected += 1;
                continue;
            }
            return Err((e, out));
        }
        let terms: Vec<(&[f64], f64)> = (0..6).map(|j| (ks[j].as_slice(), A[6][j])).collect();
        let yn = axpy(&y, h, &terms);
        let mut err = 0.0;
        for i in 0..y.len() {
            let e: f64 = (0..7).map(|s| E[s] * ks[s][i]).sum::<f64>() * h;
            let sc = atol + rtol * y[i].abs().max(yn[i].abs());
            err += (e / sc) * (e / sc);
        }
        let err = (err / y.len().max(1) as f64).sqrt();
        let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
        if err <= 1.0 && err.is_finite() {
            t = if last { t_end } else { t + h };
            y = yn;
            k1 = ks.swap_remove(6);
            out.push((t, y.clone()));
            h *= factor;
        } else {
            rejected += 1;
            h *= if err.is_finite() { factor.min(1.0) } else { 0.2 };
        }
    }
    Ok((out, rejected))
}

/// Integrates the Wong system from `state0` to `t_end`.
pub fn integrate(model: &KKLocalModel, state0: &WongState, t_end: f64, method: Method) -> Result<Trajectory> {
    check_state(model, state0)?;
    let (m, d) = (model.base_dim(), model.algebra_dim());
    let f = |t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let s = WongState::unpack(t, y, m, d);
        let der = wong_rhs(model, &s)?;
        let mut o = der.dx;
        o.extend(der.du);
        o.extend(der.dv);
        o.extend(der.dtransport);
        if o.iter().any(|v| !v.is_finite()) {
            return Err(KkError::NonFinite(format!("Wong right-hand side at t = {t}")));
        }
        Ok(o)
    };
    let to_traj = |pts: Vec<(f64, Vec<f64>)>, rejected| Trajectory {
        samples: pts.into_iter().map(|(t, y)| WongState::unpack(t, &y, m, d)).collect(),
        method,
        rejected_steps: rejected,
    };
    match integrate_ode(f, state0.t, state0.pack(), t_end, method) {
        Ok((pts, rejected)) => Ok(to_traj(pts, rejected)),
        Err((KkError::StepUnderflow { t, partial }, pts)) => Err(KkError::StepUnderflow {
            t,
            partial: Box::new(to_traj(pts, partial.rejected_steps)),
        }),
        Err((e, _)) => Err(e),
    }
}

/// Base geodesics with the same stepper; the samples carry `v = ∅`.
pub fn integrate_geodesic(base: &BaseChart, x0: &[f64], u0: &[f64], t0: f64, t_end: f64, method: Method) -> Result<Vec<(f64, Vec<f64>, Vec<f64>)>> {
    let m = x0.len();
    check_len("geodesic velocity", m, u0.len())?;
    let f = |_t: f64, y: &[f64]| -> Result<Vec<f64>> {
        let mut o = y[m..].to_vec();
        o.extend(geodesic_rhs(base, &y[..m], &y[m..])?);
        Ok(o)
    };
    let mut y0 = x0.to_vec();
    y0.extend_from_slice(u0);
    let (pts, _) = integrate_ode(f, t0, y0, t_end, method).map_err(|(e, _)| e)?;
    Ok(pts
        .into_iter()
        .map(|(t, y)| (t, y[..m].to_vec(), y[m..].to_vec()))
        .collect())
}

/// `ḡ(u,u) + β̄(v,v)`.
pub fn conserved_energy(model: &KKLocalModel, state: &WongState) -> Result<f64> {
    check_state(model, state)?;
    let g = model.base.metric(&state.x);
    let b = model.fiber.eval(&state.x);
    Ok(quad(&g, &state.u) + quad(&b, &state.v))
}

fn quad(g: &DMatrix<f64>, u: &[f64]) -> f64 {
    let n = u.len();
    let mut s = 0.0;
    for i in 0..n {
        for j in 0..n {
            s += g[(i, j)] * u[i] * u[j];
        }
    }
    s
}

/// `κ = −Rᵀ β̄ v` at one state.
pub fn charge(model: &KKLocalModel, state: &WongState) -> Vec<f64> {
    let b = model.fiber.eval(&state.x);
    let bv = b * nalgebra::DVector::from_column_slice(&state.v);
    let k = state.transport_matrix().transpose() * bv;
    k.iter().map(|v| -v).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChargeReport {
    pub series: Vec<Vec<f64>>,
    pub max_drift: f64,
}

pub fn charges(model: &KKLocalModel, traj: &Trajectory) -> ChargeReport {
    let series: Vec<Vec<f64>> = traj.samples.iter().map(|s| charge(model, s)).collect();
    let k0 = series[0].clone();
    let max_drift = series
        .iter()
        .flat_map(|k| k.iter().zip(&k0).map(|(a, b)| (a - b).abs()))
        .fold(0.0, f64::max);
    ChargeReport { series, max_drift }
}

/// Largest relative deviation of the energy from its initial value.
pub fn energy_drift(model: &KKLocalModel, traj: &Trajectory) -> Result<f64> {
    let e0 = conserved_energy(model, &traj.samples[0])?;
    let mut worst = 0.0f64;
    for s in &traj.samples {
        let e = conserved_energy(model, s)?;
        worst = worst.max((e - e0).abs());
    }
    Ok(if e0 > 0.0 { worst / e0 } else { worst })
}

/// Signed geodesic curvature of the base curve at every sample (`m = 2`).
pub fn projected_curvature(model: &KKLocalModel, traj: &Trajectory) -> Result<Vec<f64>> {
    if model.base_dim() != 2 {
        return Err(KkError::Unsupported(format!(
            "projected curvature needs a surface base, got m = {}",
            model.base_dim()
        )));
    }
    traj.samples
        .iter()
        .map(|s| {
            let der = wong_rhs(model, s)?;
            let acc = covariant_acceleration(&model.base, &s.x, &s.u, &der.du)?;
            let g = model.base.metric(&s.x);
            let speed = quad(&g, &s.u).sqrt();
            let cross = s.u[0] * acc[1] - s.u[1] * acc[0];
            Ok(g.determinant().sqrt() * cross / (speed * speed * speed))
        })
        .collect()
}

/// CSV with header `t,x1..xm,u1..um,v1..vd,energy,k1..kd`.
pub fn trajectory_csv(model: &KKLocalModel, traj: &Trajectory) -> Result<String> {
    let (m, d) = (model.base_dim(), model.algebra_dim());
    let mut head = vec!["t".to_string()];
    head.extend((1..=m).map(|i| format!("x{i}")));
    head.extend((1..=m).map(|i| format!("u{i}")));
    head.extend((1..=d).map(|i| format!("v{i}")));
    head.push("energy".into());
    head.extend((1..=d).map(|i| format!("k{i}")));
    let mut out = head.join(",");
    out.push('\n');
    for s in &traj.samples {
        let mut row = vec![s.t];
        row.extend(&s.x);
        row.extend(&s.u);
        row.extend(&s.v);
        row.push(conserved_energy(model, s)?);
        row.extend(charge(model, s));
        let cells: Vec<String> = row.iter().map(|v| fmt17(*v)).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    Ok(out)
}

/// Seventeen significant digits.
pub fn fmt17(v: f64) -> String {
    format!("{v:.16e}")
}

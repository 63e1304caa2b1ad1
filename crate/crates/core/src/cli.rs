//! JSON scenario runner behind the `kkrun` binary.
//!
//! A scenario names one command and a built-in model:
//!
//! ```json
//! { "command": "integrate",
//!   "model": { "name": "larmor", "field": 1.0 },
//!   "initial": { "x": [1.0, 0.0], "u": [0.0, 1.0], "v": [1.0] },
//!   "t_end": 6.283185307179586,
//!   "method": { "kind": "rk4", "h": 1e-3 } }
//! ```
//!
//! Exit codes: 0 success, 2 invalid scenario (nothing written),
//! 3 numeric failure or failed check (summary still written).

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{KkError, Result};
use crate::fields::{ExpDiagonal, QuadraticMatrix};
use crate::geometry::{BaseChart, DerivativeMode, GaugePotential, KKLocalModel};
use crate::hopf::{
    charge_profile, clifford_domain, perturbed_clifford, sample_s3xs3, spherical_domain,
    twisted_grid_map, twisted_map, verify_bundle, HopfBundle, HopfKind, Pole, TwistFamily,
};
use crate::liealg::{AlgebraMetric, StructureConstants};
use crate::tension::{bundle_tension, heat_flow, lorentz_charge_density, Domain, FlowSettings, Target};
use crate::wong::{charges, energy_drift, fmt17, integrate, trajectory_csv, Method, WongState};

pub const EXIT_OK: i32 = 0;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "kkrun", version, about = "Kaluza-Klein geometry scenario runner")]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Run one JSON scenario.
    Run {
        scenario: PathBuf,
        /// Directory receiving the artifacts.
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// Worker threads (defaults to the number of cores).
        #[arg(long)]
        threads: Option<usize>,
        /// Also write a gnuplot script for the CSV artifact.
        #[arg(long)]
        emit_plot: bool,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "name", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelSpec {
    /// Flat plane, `U(1)` fiber, uniform field of strength `field`.
    #[serde(alias = "larmor")]
    FlatAbelian { field: f64 },
    /// Flat plane, `SU(2)` fiber with the bi-invariant metric and the
    /// potential `A(x) = potential + Σ_ν x_ν gradient[ν]` (rows index `su(2)`).
    Su2BiInvariant {
        potential: Vec<Vec<f64>>,
        #[serde(default)]
        gradient: Vec<Vec<Vec<f64>>>,
    },
    /// Flat plane, `U(1)` fiber with `β̄ = exp(rate·x₁)` and a uniform field.
    Dilaton { field: f64, rate: f64 },
    HopfComplex {
        #[serde(default = "default_pole")]
        chart: Pole,
    },
    HopfQuaternionic {
        #[serde(default = "default_pole")]
        chart: Pole,
    },
}

fn default_pole() -> Pole {
    Pole::North
}

impl ModelSpec {
    pub fn label(&self) -> &'static str {
        match self {
            ModelSpec::FlatAbelian { .. } => "flat_abelian",
            ModelSpec::Su2BiInvariant { .. } => "su2_bi_invariant",
            ModelSpec::Dilaton { .. } => "dilaton",
            ModelSpec::HopfComplex { .. } => "hopf_complex",
            ModelSpec::HopfQuaternionic { .. } => "hopf_quaternionic",
        }
    }

    fn hopf(&self) -> Option<(HopfKind, Pole)> {
        match *self {
            ModelSpec::HopfComplex { chart } => Some((HopfKind::Complex, chart)),
            ModelSpec::HopfQuaternionic { chart } => Some((HopfKind::Quaternionic, chart)),
            _ => None,
        }
    }

    pub fn build(&self) -> Result<KKLocalModel> {
        match self {
            ModelSpec::FlatAbelian { field } => {
                finite("field", *field)?;
                KKLocalModel::new(
                    BaseChart::euclidean(2),
                    GaugePotential::symmetric_planar(*field),
                    AlgebraMetric::identity(1),
                    StructureConstants::abelian(1),
                )
            }
            ModelSpec::Su2BiInvariant { potential, gradient } => {
                let c0 = matrix_3x2("potential", potential)?;
                let gauge = if gradient.is_empty() {
                    GaugePotential::constant(c0)
                } else {
                    if gradient.len() != 2 {
                        return Err(KkError::Input("gradient needs one 3×2 block per base coordinate".into()));
                    }
                    let c1 = gradient
                        .iter()
                        .map(|g| matrix_3x2("gradient", g))
                        .collect::<Result<Vec<_>>>()?;
                    GaugePotential::new(Arc::new(QuadraticMatrix::linear(c0, c1)), DerivativeMode::Analytic)?
                };
                KKLocalModel::new(BaseChart::euclidean(2), gauge, AlgebraMetric::identity(3), StructureConstants::su2())
            }
            ModelSpec::Dilaton { field, rate } => {
                finite("field", *field)?;
                finite("rate", *rate)?;
                let beta = ExpDiagonal {
                    diag: vec![1.0],
                    coord: 0,
                    rate: *rate,
                };
                KKLocalModel::new(
                    BaseChart::euclidean(2),
                    GaugePotential::symmetric_planar(*field),
                    AlgebraMetric::field(Arc::new(beta), &[vec![0.0, 0.0]])?,
                    StructureConstants::abelian(1),
                )
            }
            ModelSpec::HopfComplex { chart } | ModelSpec::HopfQuaternionic { chart } => {
                let (kind, _) = self.hopf().expect("hopf model");
                Ok(HopfBundle::new(kind).as_local_model(*chart).clone())
            }
        }
    }
}

fn finite(name: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(KkError::Input(format!("{name} must be finite")))
    }
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(KkError::Input(format!("{name} must be positive, got {v}")))
    }
}

fn matrix_3x2(name: &str, rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    if rows.len() != 3 || rows.iter().any(|r| r.len() != 2) {
        return Err(KkError::Input(format!("{name} must be a 3×2 array")));
    }
    let flat: Vec<f64> = rows.iter().flatten().copied().collect();
    if flat.iter().any(|v| !v.is_finite()) {
        return Err(KkError::Input(format!("{name} has non-finite entries")));
    }
    Ok(DMatrix::from_row_slice(3, 2, &flat))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: Vec<f64>,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlphaRange {
    pub start: f64,
    pub step: f64,
    pub stop: f64,
}

impl AlphaRange {
    /// `start, start+step, …` up to `stop` inclusive, built by index to keep
    /// the grid free of accumulated rounding.
    pub fn values(&self) -> Vec<f64> {
        let n = ((self.stop - self.start) / self.step + 1e-9).floor() as usize;
        (0..=n).map(|k| self.start + k as f64 * self.step).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DomainSpec {
    /// `n × n` periodic grid on the flat torus `[0, 2π)²`.
    TorusGrid { n: usize },
    /// Random points of `S³ × S³`.
    S3xs3Sample { count: usize, seed: u64 },
}

impl DomainSpec {
    fn build(&self) -> Domain {
        match *self {
            DomainSpec::TorusGrid { n } => clifford_domain(n),
            DomainSpec::S3xs3Sample { count, seed } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                spherical_domain(sample_s3xs3(&mut rng, count))
            }
        }
    }

    fn validate(&self, family: TwistFamily) -> Result<()> {
        match (*self, family) {
            (DomainSpec::TorusGrid { n }, TwistFamily::Clifford) if n >= 4 => Ok(()),
            (DomainSpec::S3xs3Sample { count, .. }, TwistFamily::Spherical) if count > 0 => Ok(()),
            _ => Err(KkError::Input(format!("domain {self:?} does not fit the {family:?} family"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "snake_case", deny_unknown_fields)]
pub enum Scenario {
    /// Wong trajectory from an initial state.
    Integrate {
        model: ModelSpec,
        initial: InitialState,
        t_end: f64,
        method: Method,
    },
    /// Bundle residuals of one twisted immersion.
    Tension {
        model: ModelSpec,
        alpha: f64,
        domain: DomainSpec,
    },
    /// Lorentz strength of the twisted family over a range of α.
    Sweep {
        model: ModelSpec,
        alpha: AlphaRange,
        domain: DomainSpec,
    },
    /// Heat flow from a perturbed Clifford torus.
    Flow {
        model: ModelSpec,
        alpha: f64,
        grid: usize,
        amplitude: f64,
        steps: usize,
        /// Time step as a multiple of `h²`.
        dt_factor: f64,
    },
    /// Structural checks of a Hopf bundle at random points.
    Verify { model: ModelSpec, points: usize, seed: u64 },
}

fn family_of(model: &ModelSpec) -> Result<TwistFamily> {
    match model.hopf() {
        Some((HopfKind::Complex, _)) => Ok(TwistFamily::Clifford),
        Some((HopfKind::Quaternionic, _)) => Ok(TwistFamily::Spherical),
        None => Err(KkError::Input(format!("{} has no twisted family", model.label()))),
    }
}

impl Scenario {
    pub fn command(&self) -> &'static str {
        match self {
            Scenario::Integrate { .. } => "integrate",
            Scenario::Tension { .. } => "tension",
            Scenario::Sweep { .. } => "sweep",
            Scenario::Flow { .. } => "flow",
            Scenario::Verify { .. } => "verify",
        }
    }

    pub fn model(&self) -> &ModelSpec {
        match self {
            Scenario::Integrate { model, .. }
            | Scenario::Tension { model, .. }
            | Scenario::Sweep { model, .. }
            | Scenario::Flow { model, .. }
            | Scenario::Verify { model, .. } => model,
        }
    }

    /// Checks everything that can be checked without running.
    pub fn validate(&self) -> Result<()> {
        match self {
            Scenario::Integrate {
                model,
                initial,
                t_end,
                method,
            } => {
                method.validate()?;
                positive("t_end", *t_end)?;
                let m = model.build()?;
                let (bm, d) = (m.base_dim(), m.algebra_dim());
                if initial.x.len() != bm || initial.u.len() != bm || initial.v.len() != d {
                    return Err(KkError::Input(format!(
                        "initial state must have x, u of length {bm} and v of length {d}"
                    )));
                }
                for c in initial.x.iter().chain(&initial.u).chain(&initial.v) {
                    finite("initial state", *c)?;
                }
                Ok(())
            }
            Scenario::Tension { model, alpha, domain } => {
                finite("alpha", *alpha)?;
                domain.validate(family_of(model)?)
            }
            Scenario::Sweep { model, alpha, domain } => {
                positive("alpha.step", alpha.step)?;
                finite("alpha.start", alpha.start)?;
                finite("alpha.stop", alpha.stop)?;
                if alpha.stop <= alpha.start {
                    return Err(KkError::Input("alpha.stop must exceed alpha.start".into()));
                }
                domain.validate(family_of(model)?)
            }
            Scenario::Flow {
                model,
                alpha,
                grid,
                amplitude,
                steps,
                dt_factor,
            } => {
                if family_of(model)? != TwistFamily::Clifford {
                    return Err(KkError::Input("flow runs on the complex Hopf bundle".into()));
                }
                finite("alpha", *alpha)?;
                finite("amplitude", *amplitude)?;
                positive("dt_factor", *dt_factor)?;
                if *grid < 4 || *steps == 0 {
                    return Err(KkError::Input("flow needs grid ≥ 4 and at least one step".into()));
                }
                Ok(())
            }
            Scenario::Verify { model, points, .. } => {
                model
                    .hopf()
                    .ok_or_else(|| KkError::Input("verify runs on hopf_complex or hopf_quaternionic".into()))?;
                if *points == 0 {
                    return Err(KkError::Input("points must be positive".into()));
                }
                Ok(())
            }
        }
    }
}

/// Machine-readable outcome of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub command: String,
    pub model: String,
    pub metrics: BTreeMap<String, f64>,
    pub status: String,
}

/// Result of executing a validated scenario, before anything is written.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub summary: Summary,
    pub csv: String,
    /// gnuplot `using` clause and axis labels for the CSV.
    pub plot: PlotHint,
}

#[derive(Debug, Clone)]
pub struct PlotHint {
    pub using: &'static str,
    pub xlabel: &'static str,
    pub ylabel: &'static str,
    pub logscale_y: bool,
}

/// Runs a validated scenario.
pub fn execute(scenario: &Scenario) -> Result<Outcome> {
    let mut metrics = BTreeMap::new();
    let mut status = "ok".to_string();
    let (csv, plot) = match scenario {
        Scenario::Integrate {
            model,
            initial,
            t_end,
            method,
        } => {
            let m = model.build()?;
            let s0 = WongState::new(0.0, initial.x.clone(), initial.u.clone(), initial.v.clone());
            let traj = integrate(&m, &s0, *t_end, *method)?;
            metrics.insert("energy_drift".into(), energy_drift(&m, &traj)?);
            metrics.insert("charge_drift".into(), charges(&m, &traj).max_drift);
            metrics.insert("samples".into(), traj.len() as f64);
            metrics.insert("rejected_steps".into(), traj.rejected_steps as f64);
            metrics.insert("t_final".into(), traj.last().t);
            let csv = trajectory_csv(&m, &traj)?;
            (
                csv,
                PlotHint {
                    using: "2:3",
                    xlabel: "x1",
                    ylabel: "x2",
                    logscale_y: false,
                },
            )
        }
        Scenario::Tension { model, alpha, domain } => {
            let family = family_of(model)?;
            let bundle = HopfBundle::new(family.kind());
            let dom = domain.build();
            let map = twisted_grid_map(twisted_map(*alpha, family), dom.clone());
            let rep = bundle_tension(&map, Target::Embedded(&bundle))?;
            let lor = lorentz_charge_density(&map, Target::Embedded(&bundle))?;
            metrics.insert("points".into(), rep.points as f64);
            metrics.insert("sup_horizontal".into(), rep.sup_horizontal.unwrap_or(f64::NAN));
            metrics.insert("sup_vertical".into(), rep.sup_vertical.unwrap_or(f64::NAN));
            metrics.insert("sup_tension".into(), rep.sup_tension);
            metrics.insert("energy".into(), rep.energy);
            metrics.insert("sup_lorentz".into(), lor.sup);
            (
                rep.csv(&dom),
                PlotHint {
                    using: "1:2",
                    xlabel: "y1",
                    ylabel: "y2",
                    logscale_y: false,
                },
            )
        }
        Scenario::Sweep { model, alpha, domain } => {
            let family = family_of(model)?;
            let prof = charge_profile(family, &alpha.values(), &domain.build())?;
            for w in &prof.warnings {
                eprintln!("warning: {w}");
            }
            metrics.insert("zeros".into(), prof.zeros.len() as f64);
            if let Some(z) = prof.zeros.first() {
                metrics.insert("zero_alpha".into(), *z);
                metrics.insert("zero_offset_from_quarter_pi".into(), z - std::f64::consts::FRAC_PI_4);
            }
            let max = prof.samples.iter().map(|s| s.norm).fold(0.0, f64::max);
            metrics.insert("max_charge_norm".into(), max);
            metrics.insert("samples".into(), prof.samples.len() as f64);
            let mut csv = String::from("alpha,charge_norm,axial_charge\n");
            for s in &prof.samples {
                csv.push_str(&format!("{},{},{}\n", fmt17(s.alpha), fmt17(s.norm), fmt17(s.signed)));
            }
            (
                csv,
                PlotHint {
                    using: "1:2",
                    xlabel: "alpha",
                    ylabel: "charge_norm",
                    logscale_y: false,
                },
            )
        }
        Scenario::Flow {
            alpha,
            grid,
            amplitude,
            steps,
            dt_factor,
            ..
        } => {
            let map = perturbed_clifford(*grid, *alpha, *amplitude)?;
            let Domain::Grid(g) = &map.domain else { unreachable!() };
            let settings = FlowSettings {
                dt: dt_factor * g.h_min().powi(2),
                steps: *steps,
                ..FlowSettings::default()
            };
            let res = heat_flow(&map, Target::Sphere, settings)?;
            let bundle = HopfBundle::complex();
            let rep = bundle_tension(&res.map, Target::Embedded(&bundle))?;
            metrics.insert("energy_initial".into(), res.energy[0]);
            metrics.insert("energy_final".into(), *res.energy.last().expect("energy history"));
            metrics.insert("sup_tension_initial".into(), res.sup_tension[0]);
            metrics.insert("sup_tension_final".into(), *res.sup_tension.last().expect("tension history"));
            metrics.insert("sup_horizontal".into(), rep.sup_horizontal.unwrap_or(f64::NAN));
            metrics.insert("sup_vertical".into(), rep.sup_vertical.unwrap_or(f64::NAN));
            metrics.insert("dt".into(), settings.dt);
            (
                res.csv(),
                PlotHint {
                    using: "1:3",
                    xlabel: "step",
                    ylabel: "sup_tension",
                    logscale_y: true,
                },
            )
        }
        Scenario::Verify { model, points, seed } => {
            let (kind, _) = model.hopf().expect("validated");
            let checks = verify_bundle(&HopfBundle::new(kind), *points, *seed)?;
            let rows = [
                ("orthonormality_max_error", checks.orthonormality),
                ("projection_norm_max_error", checks.projection_norm),
                ("fiber_invariance_max_error", checks.fiber_invariance),
                ("curvature_table_max_error", checks.curvature_table),
                ("frame_table_max_error", checks.frame_table),
                ("curvature_antisymmetry_max_error", checks.curvature_antisymmetry),
                ("lorentz_pairing_max_error", checks.lorentz_pairing),
                ("lorentz_antisymmetry_max_error", checks.lorentz_antisymmetry),
            ];
            let mut csv = String::from("check,max_error\n");
            for (k, v) in rows {
                metrics.insert(k.into(), v);
                csv.push_str(&format!("{k},{}\n", fmt17(v)));
            }
            metrics.insert("points".into(), *points as f64);
            if !checks.passed() {
                status = "check_failed".into();
            }
            (
                csv,
                PlotHint {
                    using: "0:2:xtic(1)",
                    xlabel: "check",
                    ylabel: "max_error",
                    logscale_y: true,
                },
            )
        }
    };
    Ok(Outcome {
        summary: Summary {
            command: scenario.command().into(),
            model: scenario.model().label().into(),
            metrics,
            status,
        },
        csv,
        plot,
    })
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| KkError::Io(e.error))?;
    Ok(())
}

fn plot_script(stem: &str, command: &str, hint: &PlotHint) -> String {
    let mut s = String::new();
    s.push_str("set datafile separator ','\n");
    s.push_str("set key autotitle columnhead\n");
    s.push_str(&format!("set xlabel '{}'\nset ylabel '{}'\n", hint.xlabel, hint.ylabel));
    if hint.logscale_y {
        s.push_str("set logscale y\n");
    }
    let style = if command == "verify" { "boxes" } else { "lines" };
    s.push_str(&format!("plot '{stem}.csv' using {} with {style}\n", hint.using));
    s
}

/// Reads, validates, executes and writes one scenario; returns the exit code.
pub fn run_file(scenario: &Path, out: &Path, threads: Option<usize>, emit_plot: bool) -> i32 {
    let text = match std::fs::read_to_string(scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", scenario.display());
            return EXIT_INVALID;
        }
    };
    let parsed: Scenario = match serde_json::from_str(&text) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("error: invalid scenario {}: {e}", scenario.display());
            return EXIT_INVALID;
        }
    };
    if let Err(e) = parsed.validate() {
        eprintln!("error: invalid scenario {}: {e}", scenario.display());
        return EXIT_INVALID;
    }
    if threads == Some(0) {
        eprintln!("error: --threads must be positive");
        return EXIT_INVALID;
    }
    let stem = scenario
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());

    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return EXIT_NUMERIC;
        }
    };
    let result = pool.install(|| execute(&parsed));
    if let Err(e) = std::fs::create_dir_all(out) {
        eprintln!("error: cannot create {}: {e}", out.display());
        return EXIT_NUMERIC;
    }
    let summary_path = out.join(format!("{stem}.summary.json"));
    let (summary, code) = match result {
        Ok(outcome) => {
            let csv_path = out.join(format!("{stem}.csv"));
            if let Err(e) = write_atomic(&csv_path, outcome.csv.as_bytes()) {
                eprintln!("error: {e}");
                return EXIT_NUMERIC;
            }
            if emit_plot {
                let gp = plot_script(&stem, parsed.command(), &outcome.plot);
                if let Err(e) = write_atomic(&out.join(format!("{stem}.gp")), gp.as_bytes()) {
                    eprintln!("error: {e}");
                    return EXIT_NUMERIC;
                }
            }
            let code = if outcome.summary.status == "ok" {
                EXIT_OK
            } else {
                eprintln!("error: {} checks failed", parsed.command());
                EXIT_NUMERIC
            };
            (outcome.summary, code)
        }
        Err(e) => {
            eprintln!("error: {e}");
            (
                Summary {
                    command: parsed.command().into(),
                    model: parsed.model().label().into(),
                    metrics: BTreeMap::new(),
                    status: "numeric_failure".into(),
                },
                EXIT_NUMERIC,
            )
        }
    };
    let json = serde_json::to_string_pretty(&summary).expect("summary serializes") + "\n";
    if let Err(e) = write_atomic(&summary_path, json.as_bytes()) {
        eprintln!("error: {e}");
        return EXIT_NUMERIC;
    }
    code
}

/// Entry point shared by the binary and the tests.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match cli.command {
        CliCommand::Run {
            scenario,
            out,
            threads,
            emit_plot,
        } => run_file(&scenario, &out, threads, emit_plot),
    }
}

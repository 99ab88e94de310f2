//! Scenario documents, hypothesis validation, trajectory storage and CSV export.
//!
//! A scenario is a TOML document:
//!
//! ```toml
//! [mesh]
//! nx = 32
//! ny = 32
//! domain = [0.0, 1.0, 0.0, 1.0]   # x0, x1, y0, y1; or: file = "device.fvm"
//!
//! [physics]
//! lambda = 1.0
//! doping = "pn(x_split=0.5, c_plus=1, c_minus=-1)"
//! recombination = "srh(tau_n=1, tau_p=1)"
//! m_cap = 1.62
//!
//! [boundary.left]
//! faces = ["x0"]
//! kind = "dirichlet"
//! n = 1.618                        # p defaults to 1/n, psi to ln(n) - alpha
//!
//! [boundary.insulated]
//! faces = ["y0", "y1"]
//! kind = "neumann"
//!
//! [initial]
//! n0 = "constant(1)"               # or "equilibrium"
//! p0 = "constant(1)"
//!
//! [time]
//! dt = 0.1
//! n_steps = 1000
//! ```
//!
//! Optional `[verify]` and `[solver]` sections tune the checks and solvers.

mod profile;
mod store;

pub use profile::Profile;
pub use store::{
    export_csv, fields_csv, run, run_with_progress, verify_store, ExportKind, TrajectoryStore, VerificationSummary,
    DIAGNOSTICS_CSV_HEADER, FIELDS_CSV_HEADER, STORE_FORMAT,
};

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Hypothesis, Result};
use crate::linalg::LinearSolverKind;
use crate::mesh::file::read_mesh;
use crate::mesh::{build_rectangular_mesh, BoundaryKind, Face, Mesh, Rect, SegmentRule};
use crate::poisson::{compute_alpha, solve_equilibrium, solve_poisson, EquilibriumState, PoissonOptions};
use crate::transport::{Physics, RecombinationKind, RecombinationSpec, State, StepConfig};

/// Relative tolerance of the `N^D P^D = 1` check.
const H3_TOL: f64 = 1e-12;
/// Relative tolerance of the `[0, M]` bound check.
const H4_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum MeshSource {
    Rectangular {
        nx: usize,
        ny: usize,
        domain: Rect,
    },
    /// Mesh file; the contents are kept so the scenario hash covers them.
    File {
        path: String,
        contents: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsSpec {
    pub lambda: f64,
    pub doping: Profile,
    pub recombination: RecombinationSpec,
    pub m_cap: f64,
    /// Quasi-Fermi constant used when `psi` is omitted on a boundary segment.
    pub alpha: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoundarySegment {
    pub name: String,
    pub faces: Vec<Face>,
    pub window: Option<(f64, f64)>,
    pub kind: BoundaryKind,
    /// `(N^D, P^D, Ψ^D)`, present on Dirichlet segments.
    pub values: Option<(f64, f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "initial", rename_all = "snake_case")]
pub enum InitialData {
    Profile { profile: Profile },
    Equilibrium,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeSpec {
    pub dt: f64,
    pub n_steps: usize,
    pub snapshot_stride: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifySpec {
    pub q_list: Vec<f64>,
    pub prop2_q: Vec<f64>,
    pub k_max: usize,
    pub nash_samples: usize,
    pub seed: u64,
}

impl Default for VerifySpec {
    fn default() -> Self {
        Self {
            q_list: crate::diagnostics::DEFAULT_Q_LIST.to_vec(),
            prop2_q: vec![1.0, 2.0, 4.0, 8.0],
            k_max: 4,
            nash_samples: 200,
            seed: 42,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverSpec {
    pub gummel_tol: f64,
    pub gummel_max_iters: usize,
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub max_dt_halvings: usize,
    pub linear: LinearSolverKind,
    pub alpha_tol: f64,
}

impl Default for SolverSpec {
    fn default() -> Self {
        let s = StepConfig::default();
        Self {
            gummel_tol: s.gummel_tol,
            gummel_max_iters: s.gummel_max_iters,
            newton_tol: s.newton_tol,
            newton_max_iters: s.newton_max_iters,
            max_dt_halvings: s.max_dt_halvings,
            linear: s.linear,
            alpha_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub mesh: MeshSource,
    pub physics: PhysicsSpec,
    pub boundary: Vec<BoundarySegment>,
    pub n0: InitialData,
    pub p0: InitialData,
    pub time: TimeSpec,
    pub verify: VerifySpec,
    pub solver: SolverSpec,
}

/// A scenario turned into solver inputs.
#[derive(Debug, Clone)]
pub struct Problem {
    pub mesh: Mesh,
    pub physics: Physics,
    pub m_cap: f64,
    pub alpha: f64,
    pub psi_dirichlet: Vec<f64>,
    pub equilibrium: EquilibriumState,
    pub initial: State,
    pub step: StepConfig,
}

// ---------------------------------------------------------------- raw document

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDoc {
    mesh: RawMesh,
    physics: RawPhysics,
    boundary: BTreeMap<String, RawSegment>,
    initial: RawInitial,
    time: RawTime,
    #[serde(default)]
    verify: RawVerify,
    #[serde(default)]
    solver: RawSolver,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawMesh {
    nx: Option<usize>,
    ny: Option<usize>,
    domain: Option<[f64; 4]>,
    file: Option<String>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPhysics {
    lambda: f64,
    #[serde(default = "zero_profile")]
    doping: String,
    #[serde(default = "no_recombination")]
    recombination: String,
    m_cap: f64,
    alpha: Option<f64>,
}

fn zero_profile() -> String {
    "zero".into()
}

fn no_recombination() -> String {
    "none".into()
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawSegment {
    #[serde(default)]
    faces: Vec<String>,
    window: Option<[f64; 2]>,
    kind: String,
    n: Option<toml::Value>,
    p: Option<toml::Value>,
    psi: Option<toml::Value>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawInitial {
    n0: String,
    p0: String,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTime {
    dt: f64,
    n_steps: usize,
    snapshot_stride: Option<usize>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawVerify {
    q_list: Option<Vec<f64>>,
    prop2_q: Option<Vec<f64>>,
    k_max: Option<usize>,
    nash_samples: Option<usize>,
    seed: Option<u64>,
}

#[derive(Deserialize, Default)]
#[serde(deny_unknown_fields)]
struct RawSolver {
    gummel_tol: Option<f64>,
    gummel_max_iters: Option<usize>,
    newton_tol: Option<f64>,
    newton_max_iters: Option<usize>,
    max_dt_halvings: Option<usize>,
    linear: Option<LinearSolverKind>,
    alpha_tol: Option<f64>,
}

fn scalar(seg: &str, key: &str, v: &toml::Value) -> Result<f64> {
    match v {
        toml::Value::Float(f) => Ok(*f),
        toml::Value::Integer(i) => Ok(*i as f64),
        toml::Value::Array(_) => Err(Error::Scenario(format!(
            "boundary.{seg}.{key}: time-dependent boundary data is not supported"
        ))),
        other => Err(Error::Scenario(format!(
            "boundary.{seg}.{key}: expected a number, got {other}"
        ))),
    }
}

/// Parses `none`, `constant(r0)`, `srh(tau_n, tau_p)` or `auger(c_n, c_p)`.
pub fn parse_recombination(s: &str) -> Result<RecombinationSpec> {
    const FORMS: &[(&str, &[&str])] = &[
        ("none", &[]),
        ("constant", &["r0"]),
        ("srh", &["tau_n", "tau_p"]),
        ("auger", &["c_n", "c_p"]),
    ];
    let (name, v) = profile::parse_call(s, FORMS)?;
    let kind = match name.as_str() {
        "none" => RecombinationKind::None,
        "constant" => RecombinationKind::Constant { r0: v[0] },
        "srh" => RecombinationKind::Srh {
            tau_n: v[0],
            tau_p: v[1],
        },
        _ => RecombinationKind::Auger { c_n: v[0], c_p: v[1] },
    };
    RecombinationSpec::new(kind)
}

fn parse_initial(s: &str) -> Result<InitialData> {
    if s.trim().eq_ignore_ascii_case("equilibrium") {
        Ok(InitialData::Equilibrium)
    } else {
        Ok(InitialData::Profile { profile: s.parse()? })
    }
}

fn positive(name: &str, v: f64) -> Result<f64> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(Error::Scenario(format!("{name} must be positive, got {v}")))
    }
}

impl Scenario {
    /// Parses a scenario document; relative mesh paths resolve against `base_dir`.
    pub fn from_toml(text: &str, base_dir: Option<&Path>) -> Result<Scenario> {
        let raw: RawDoc = toml::from_str(text).map_err(|e| Error::Scenario(e.to_string()))?;

        let mesh = match (raw.mesh.file, raw.mesh.nx, raw.mesh.ny) {
            (Some(path), None, None) => {
                let full = match base_dir {
                    Some(b) => b.join(&path),
                    None => path.clone().into(),
                };
                let contents = std::fs::read_to_string(&full)
                    .map_err(|e| Error::Scenario(format!("cannot read mesh file {}: {e}", full.display())))?;
                MeshSource::File { path, contents }
            }
            (None, Some(nx), Some(ny)) => {
                let d = raw.mesh.domain.unwrap_or([0.0, 1.0, 0.0, 1.0]);
                MeshSource::Rectangular {
                    nx,
                    ny,
                    domain: Rect::new(d[0], d[1], d[2], d[3]),
                }
            }
            _ => return Err(Error::Scenario("[mesh] needs either nx and ny, or file".into())),
        };

        let alpha = raw.physics.alpha.unwrap_or(0.0);
        let physics = PhysicsSpec {
            lambda: positive("physics.lambda", raw.physics.lambda)?,
            doping: raw.physics.doping.parse()?,
            recombination: parse_recombination(&raw.physics.recombination)?,
            m_cap: positive("physics.m_cap", raw.physics.m_cap)?,
            alpha,
        };

        let mut boundary = Vec::new();
        for (name, seg) in raw.boundary {
            let kind = match seg.kind.trim().to_ascii_lowercase().as_str() {
                "dirichlet" => BoundaryKind::Dirichlet,
                "neumann" => BoundaryKind::Neumann,
                other => return Err(Error::Scenario(format!("boundary.{name}: unknown kind '{other}'"))),
            };
            let faces = seg.faces.iter().map(|f| Face::parse(f)).collect::<Result<Vec<_>>>()?;
            let values = match kind {
                BoundaryKind::Neumann => {
                    if seg.n.is_some() || seg.p.is_some() || seg.psi.is_some() {
                        return Err(Error::Scenario(format!(
                            "boundary.{name}: Neumann segments take no values"
                        )));
                    }
                    None
                }
                BoundaryKind::Dirichlet => {
                    let n = scalar(
                        &name,
                        "n",
                        seg.n
                            .as_ref()
                            .ok_or_else(|| Error::Scenario(format!("boundary.{name}: missing n")))?,
                    )?;
                    let p = seg.p.as_ref().map(|v| scalar(&name, "p", v)).transpose()?;
                    let psi = seg.psi.as_ref().map(|v| scalar(&name, "psi", v)).transpose()?;
                    if !(n > 0.0) {
                        return Err(Error::HypothesisViolation {
                            hypothesis: Hypothesis::H3,
                            detail: format!("boundary.{name}: N^D = {n} must be positive for N^D P^D = 1"),
                        });
                    }
                    let p = p.unwrap_or(1.0 / n);
                    let psi = psi.unwrap_or(n.ln() - alpha);
                    Some((n, p, psi))
                }
            };
            boundary.push(BoundarySegment {
                name,
                faces,
                window: seg.window.map(|w| (w[0], w[1])),
                kind,
                values,
            });
        }

        let time = TimeSpec {
            dt: positive("time.dt", raw.time.dt)?,
            n_steps: raw.time.n_steps,
            snapshot_stride: raw.time.snapshot_stride.unwrap_or(10).max(1),
        };
        let dv = VerifySpec::default();
        let verify = VerifySpec {
            q_list: raw.verify.q_list.unwrap_or(dv.q_list),
            prop2_q: raw.verify.prop2_q.unwrap_or(dv.prop2_q),
            k_max: raw.verify.k_max.unwrap_or(dv.k_max),
            nash_samples: raw.verify.nash_samples.unwrap_or(dv.nash_samples),
            seed: raw.verify.seed.unwrap_or(dv.seed),
        };
        if verify
            .q_list
            .iter()
            .chain(&verify.prop2_q)
            .any(|&q| !(q >= 1.0 && q.is_finite()))
        {
            return Err(Error::Scenario("verify: every q must be at least 1".into()));
        }
        if verify.k_max > 20 {
            return Err(Error::Scenario("verify.k_max above 20 is not supported".into()));
        }
        let ds = SolverSpec::default();
        let solver = SolverSpec {
            gummel_tol: raw.solver.gummel_tol.unwrap_or(ds.gummel_tol),
            gummel_max_iters: raw.solver.gummel_max_iters.unwrap_or(ds.gummel_max_iters),
            newton_tol: raw.solver.newton_tol.unwrap_or(ds.newton_tol),
            newton_max_iters: raw.solver.newton_max_iters.unwrap_or(ds.newton_max_iters),
            max_dt_halvings: raw.solver.max_dt_halvings.unwrap_or(ds.max_dt_halvings),
            linear: raw.solver.linear.unwrap_or(ds.linear),
            alpha_tol: raw.solver.alpha_tol.unwrap_or(ds.alpha_tol),
        };

        let scenario = Scenario {
            mesh,
            physics,
            boundary,
            n0: parse_initial(&raw.initial.n0)?,
            p0: parse_initial(&raw.initial.p0)?,
            time,
            verify,
            solver,
        };
        scenario.prepare()?;
        Ok(scenario)
    }

    /// Stable hex SHA-256 of the canonical JSON serialisation.
    pub fn hash(&self) -> String {
        let bytes = serde_json::to_vec(self).expect("scenario serialises");
        Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect()
    }

    /// Overrides the outer and inner solver tolerances.
    pub fn with_tolerance(mut self, tol: f64) -> Result<Scenario> {
        if !(tol > 0.0 && tol < 1.0) {
            return Err(Error::invalid(format!("tolerance {tol} must lie in (0, 1)")));
        }
        self.solver.gummel_tol = tol;
        self.solver.newton_tol = self.solver.newton_tol.min(tol);
        Ok(self)
    }

    pub fn step_config(&self) -> StepConfig {
        StepConfig {
            dt: self.time.dt,
            gummel_tol: self.solver.gummel_tol,
            gummel_max_iters: self.solver.gummel_max_iters,
            newton_tol: self.solver.newton_tol,
            newton_max_iters: self.solver.newton_max_iters,
            max_dt_halvings: self.solver.max_dt_halvings,
            linear: self.solver.linear,
        }
    }

    /// Moment powers recorded along a run: the configured list, `q + 1` for
    /// every checked `q`, and `2^k` for `k ≤ k_max`.
    pub fn recorded_powers(&self) -> Vec<f64> {
        let mut p: Vec<f64> = self.verify.q_list.clone();
        p.extend(self.verify.prop2_q.iter().map(|q| q + 1.0));
        p.extend((0..=self.verify.k_max).map(|k| (1u64 << k) as f64));
        p.sort_by(|a, b| a.total_cmp(b));
        p.dedup();
        p
    }

    pub fn build_mesh(&self) -> Result<Mesh> {
        match &self.mesh {
            MeshSource::Rectangular { nx, ny, domain } => {
                let rules: Vec<SegmentRule> = self
                    .boundary
                    .iter()
                    .map(|s| SegmentRule {
                        name: s.name.clone(),
                        faces: s.faces.clone(),
                        window: s.window,
                        kind: s.kind,
                    })
                    .collect();
                build_rectangular_mesh(*nx, *ny, *domain)?.boundary_partition(&rules)
            }
            MeshSource::File { contents, .. } => {
                let dirichlet: Vec<usize> = self
                    .boundary
                    .iter()
                    .enumerate()
                    .filter(|(_, s)| s.kind == BoundaryKind::Dirichlet)
                    .map(|(i, _)| i)
                    .collect();
                if dirichlet.len() != 1 || self.boundary.iter().any(|s| !s.faces.is_empty() || s.window.is_some()) {
                    return Err(Error::Scenario(
                        "file meshes carry their own boundary tags: give exactly one Dirichlet segment without faces"
                            .into(),
                    ));
                }
                read_mesh(contents)?.assign_dirichlet_segment(dirichlet[0])
            }
        }
    }

    /// Builds the mesh, checks the hypotheses and computes the equilibrium
    /// and the initial state.
    pub fn prepare(&self) -> Result<Problem> {
        let mesh = self.build_mesh()?;
        let p = &self.physics;

        let doping: Vec<f64> = mesh.cells().iter().map(|c| p.doping.value(c.center[0])).collect();
        if let Some(bad) = doping.iter().find(|v| !v.is_finite()) {
            return Err(Error::HypothesisViolation {
                hypothesis: Hypothesis::H1,
                detail: format!("doping value {bad} is not finite"),
            });
        }

        let mut n_d = Vec::with_capacity(mesh.dirichlet_count());
        let mut p_d = Vec::with_capacity(mesh.dirichlet_count());
        let mut psi_d = Vec::with_capacity(mesh.dirichlet_count());
        for &e in mesh.dirichlet_edges() {
            let seg = mesh
                .edge_segment(e)
                .and_then(|s| self.boundary.get(s))
                .ok_or_else(|| Error::Scenario(format!("Dirichlet edge {e} has no segment")))?;
            let (n, pv, psi) = seg
                .values
                .ok_or_else(|| Error::Scenario(format!("boundary.{} has no Dirichlet values", seg.name)))?;
            if !(n.is_finite() && pv.is_finite() && psi.is_finite()) {
                return Err(Error::HypothesisViolation {
                    hypothesis: Hypothesis::H2,
                    detail: format!("boundary.{}: values must be finite", seg.name),
                });
            }
            if (n * pv - 1.0).abs() > H3_TOL {
                return Err(Error::HypothesisViolation {
                    hypothesis: Hypothesis::H3,
                    detail: format!("boundary.{}: N^D P^D = {} differs from 1", seg.name, n * pv),
                });
            }
            n_d.push(n);
            p_d.push(pv);
            psi_d.push(psi);
        }
        let alpha = compute_alpha(&n_d, &psi_d, self.solver.alpha_tol)?;

        let popts = PoissonOptions {
            linear: self.solver.linear,
            ..PoissonOptions::default()
        };
        let equilibrium = solve_equilibrium(&mesh, p.lambda, &doping, alpha, &psi_d, &popts)?;

        let initial_cells = |d: &InitialData, star: &[f64]| -> Vec<f64> {
            match d {
                InitialData::Equilibrium => star.to_vec(),
                InitialData::Profile { profile } => (0..mesh.cell_count())
                    .map(|k| match mesh.cell_rect(k) {
                        Some(r) => profile.cell_mean(&r),
                        None => profile.value(mesh.cells()[k].center[0]),
                    })
                    .collect(),
            }
        };
        let n0 = initial_cells(&self.n0, &equilibrium.n_star);
        let p0 = initial_cells(&self.p0, &equilibrium.p_star);

        let bound = p.m_cap * (1.0 + H4_TOL);
        let check = |what: &str, v: &[f64]| -> Result<()> {
            match v.iter().find(|&&x| !(x >= 0.0 && x <= bound)) {
                Some(bad) => Err(Error::HypothesisViolation {
                    hypothesis: Hypothesis::H4,
                    detail: format!("{what} value {bad} outside [0, M = {}]", p.m_cap),
                }),
                None => Ok(()),
            }
        };
        check("initial N", &n0)?;
        check("initial P", &p0)?;
        check("boundary N", &n_d)?;
        check("boundary P", &p_d)?;
        p.recombination.check_growth_bound()?;

        let psi0 = match (&self.n0, &self.p0) {
            (InitialData::Equilibrium, InitialData::Equilibrium) => equilibrium.psi_star.clone(),
            _ => {
                let rhs: Vec<f64> = (0..mesh.cell_count()).map(|k| p0[k] - n0[k] + doping[k]).collect();
                solve_poisson(&mesh, p.lambda, &rhs, &psi_d, &popts)?
            }
        };
        let initial = State {
            n_cells: n0,
            p_cells: p0,
            psi: psi0,
            n_dirichlet: n_d,
            p_dirichlet: p_d,
            time_index: 0,
        };
        Ok(Problem {
            physics: Physics {
                lambda: p.lambda,
                doping,
                recombination: p.recombination,
            },
            m_cap: p.m_cap,
            alpha,
            psi_dirichlet: psi_d,
            equilibrium,
            initial,
            step: self.step_config(),
            mesh,
        })
    }
}

/// Reads and validates a scenario file.
pub fn load_scenario(path: impl AsRef<Path>) -> Result<Scenario> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    Scenario::from_toml(&text, path.parent())
}

/// Validates a scenario given as text; mesh files resolve against the working directory.
pub fn load_scenario_str(text: &str) -> Result<Scenario> {
    Scenario::from_toml(text, None)
}

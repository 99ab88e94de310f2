//! Scharfetter-Gummel fluxes and the implicit Euler time step.
//!
//! One step solves, for every cell `K`,
//!
//! ```text
//! |K| (N_K - N_K^n) / Δt + Σ_σ F_{K,σ} = -|K| R(N_K, P_K)
//! |K| (P_K - P_K^n) / Δt + Σ_σ G_{K,σ} = -|K| R(N_K, P_K)
//! -λ² Σ_σ τ_σ D_{K,σ} Ψ = |K| (P_K - N_K + C_K)
//! ```
//!
//! with all unknowns at the new level. The coupled system is solved by
//! Gummel iteration: a Newton solve of Poisson with quasi-Fermi levels
//! frozen, then one linear M-matrix solve per carrier with the
//! recombination term lagged at the previous iterate for both carriers,
//! which keeps the iteration symmetric under `N <-> P, Ψ <-> -Ψ`.

mod recombination;

pub use recombination::{recombination_rate, RecombinationKind, RecombinationSpec};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::bernoulli_unchecked as bern;
use crate::linalg::{self, LinearSolverKind, SparseMatrix};
use crate::mesh::{Across, EdgeKind, Mesh};
use crate::poisson::{dirichlet_coupling, PoissonOperator, PotentialField};

/// Densities and potential at one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct State {
    pub n_cells: Vec<f64>,
    pub p_cells: Vec<f64>,
    pub psi: PotentialField,
    pub n_dirichlet: Vec<f64>,
    pub p_dirichlet: Vec<f64>,
    pub time_index: usize,
}

impl State {
    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        let nc = mesh.cell_count();
        let nd = mesh.dirichlet_count();
        if self.n_cells.len() != nc || self.p_cells.len() != nc {
            return Err(Error::invalid("density length does not match mesh"));
        }
        if self.n_dirichlet.len() != nd || self.p_dirichlet.len() != nd {
            return Err(Error::invalid(
                "boundary value length does not match Dirichlet edge count",
            ));
        }
        self.psi.check(mesh)?;
        let all = self
            .n_cells
            .iter()
            .chain(&self.p_cells)
            .chain(&self.n_dirichlet)
            .chain(&self.p_dirichlet);
        for v in all {
            if !(*v >= 0.0) || !v.is_finite() {
                return Err(Error::invalid(format!("density {v} is negative or not finite")));
            }
        }
        Ok(())
    }

    /// `max(‖N‖_∞, ‖P‖_∞, ‖Ψ‖_∞)` over cells.
    pub fn sup_norm(&self) -> f64 {
        self.n_cells
            .iter()
            .chain(&self.p_cells)
            .chain(&self.psi.cells)
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn max_density(&self) -> f64 {
        self.n_cells.iter().chain(&self.p_cells).fold(0.0, |m, &v| m.max(v))
    }

    /// Cellwise sup-norm distance over `N`, `P` and `Ψ`.
    pub fn distance(&self, other: &State) -> f64 {
        let d = |a: &[f64], b: &[f64]| a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
        d(&self.n_cells, &other.n_cells)
            .max(d(&self.p_cells, &other.p_cells))
            .max(d(&self.psi.cells, &other.psi.cells))
    }
}

/// Physical parameters that stay fixed along a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Physics {
    /// Scaled Debye length `λ`.
    pub lambda: f64,
    /// Doping `C_K` per cell.
    pub doping: Vec<f64>,
    pub recombination: RecombinationSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepConfig {
    pub dt: f64,
    /// Accepted sup-norm of the full residual, relative to `1 + ‖state‖_∞`.
    pub gummel_tol: f64,
    pub gummel_max_iters: usize,
    /// Tolerance of the inner Poisson Newton solve.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    /// Number of `Δt` halvings tried before a step is given up.
    pub max_dt_halvings: usize,
    pub linear: LinearSolverKind,
}

impl Default for StepConfig {
    fn default() -> Self {
        Self {
            dt: 0.1,
            gummel_tol: 1e-9,
            gummel_max_iters: 200,
            newton_tol: 1e-12,
            newton_max_iters: 50,
            max_dt_halvings: 3,
            linear: LinearSolverKind::Direct,
        }
    }
}

impl StepConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.dt > 0.0
            && self.dt.is_finite()
            && self.gummel_tol > 0.0
            && self.gummel_tol < 1.0
            && self.newton_tol > 0.0
            && self.newton_tol < 1.0
            && self.gummel_max_iters > 0
            && self.newton_max_iters > 0;
        if ok {
            Ok(())
        } else {
            Err(Error::invalid(format!("invalid step configuration {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Carrier {
    Electron,
    Hole,
}

/// Scharfetter-Gummel flux through `σ` out of `K`, with `d_psi = D_{K,σ} Ψ`.
///
/// Electrons: `τ [B(-DΨ) u_K - B(DΨ) u_{K,σ}]`; holes swap the signs of `DΨ`.
#[inline]
pub fn sg_flux(tau: f64, d_psi: f64, u_k: f64, u_ksigma: f64, carrier: Carrier) -> f64 {
    match carrier {
        Carrier::Electron => tau * (bern(-d_psi) * u_k - bern(d_psi) * u_ksigma),
        Carrier::Hole => tau * (bern(d_psi) * u_k - bern(-d_psi) * u_ksigma),
    }
}

/// Per-edge electron and hole fluxes seen from the edge owner.
pub fn edge_fluxes(state: &State, mesh: &Mesh) -> Vec<(f64, f64)> {
    mesh.edges()
        .iter()
        .enumerate()
        .map(|(e, edge)| {
            let k = edge.kind.owner();
            if let EdgeKind::Neumann { .. } = edge.kind {
                return (0.0, 0.0);
            }
            let d_psi = state.psi.diff(mesh, e, k);
            let n_across = mesh.value_across(&state.n_cells, &state.n_dirichlet, e, k);
            let p_across = mesh.value_across(&state.p_cells, &state.p_dirichlet, e, k);
            (
                sg_flux(edge.tau, d_psi, state.n_cells[k], n_across, Carrier::Electron),
                sg_flux(edge.tau, d_psi, state.p_cells[k], p_across, Carrier::Hole),
            )
        })
        .collect()
}

/// Residuals of the three discrete equations, one entry per cell each.
#[derive(Debug, Clone, PartialEq)]
pub struct Residual {
    pub electron: Vec<f64>,
    pub hole: Vec<f64>,
    pub poisson: Vec<f64>,
}

impl Residual {
    pub fn sup_norm(&self) -> f64 {
        self.electron
            .iter()
            .chain(&self.hole)
            .chain(&self.poisson)
            .fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Evaluates the scheme at `next` given the previous level `prev`.
pub fn residual(next: &State, prev: &State, mesh: &Mesh, physics: &Physics, dt: f64) -> Residual {
    let nc = mesh.cell_count();
    let mut electron = vec![0.0; nc];
    let mut hole = vec![0.0; nc];
    for (e, (f, g)) in edge_fluxes(next, mesh).into_iter().enumerate() {
        match mesh.edges()[e].kind {
            EdgeKind::Interior { k, l } => {
                electron[k] += f;
                electron[l] -= f;
                hole[k] += g;
                hole[l] -= g;
            }
            EdgeKind::Dirichlet { k } => {
                electron[k] += f;
                hole[k] += g;
            }
            EdgeKind::Neumann { .. } => {}
        }
    }
    let l2 = physics.lambda * physics.lambda;
    let mut poisson = vec![0.0; nc];
    for (k, cell) in mesh.cells().iter().enumerate() {
        let (n, p) = (next.n_cells[k], next.p_cells[k]);
        let r = recombination_rate(n, p, &physics.recombination);
        electron[k] += cell.measure * ((n - prev.n_cells[k]) / dt + r);
        hole[k] += cell.measure * ((p - prev.p_cells[k]) / dt + r);
        let mut lap = 0.0;
        for &e in mesh.cell_edges(k) {
            lap += mesh.edges()[e].tau * next.psi.diff(mesh, e, k);
        }
        poisson[k] = -l2 * lap - cell.measure * (p - n + physics.doping[k]);
    }
    Residual {
        electron,
        hole,
        poisson,
    }
}

/// Assembles the linear continuity system for one carrier with `Ψ` fixed.
///
/// The recombination term is linearised as `R₀ (u · partner - 1)` with
/// `R₀` and `partner` given per cell, which keeps the matrix an M-matrix.
#[allow(clippy::too_many_arguments)]
pub fn assemble_continuity(
    mesh: &Mesh,
    psi: &PotentialField,
    prev: &[f64],
    dirichlet: &[f64],
    dt: f64,
    r0: &[f64],
    partner: &[f64],
    carrier: Carrier,
) -> (SparseMatrix, Vec<f64>) {
    let nc = mesh.cell_count();
    let mut diag = vec![0.0; nc];
    let mut rhs = vec![0.0; nc];
    let mut t = Vec::with_capacity(nc + 2 * mesh.edge_count());
    for (e, edge) in mesh.edges().iter().enumerate() {
        let k = edge.kind.owner();
        let d_psi = psi.diff(mesh, e, k);
        // weights on u_K and u_{K,σ} in the flux out of K
        let (own, other) = match carrier {
            Carrier::Electron => (bern(-d_psi), bern(d_psi)),
            Carrier::Hole => (bern(d_psi), bern(-d_psi)),
        };
        match mesh.across(e, k) {
            Across::Cell(l) => {
                diag[k] += edge.tau * own;
                t.push((k, l, -edge.tau * other));
                diag[l] += edge.tau * other;
                t.push((l, k, -edge.tau * own));
            }
            Across::Dirichlet(s) => {
                diag[k] += edge.tau * own;
                rhs[k] += edge.tau * other * dirichlet[s];
            }
            Across::Neumann => {}
        }
    }
    for (k, cell) in mesh.cells().iter().enumerate() {
        diag[k] += cell.measure * (1.0 / dt + r0[k] * partner[k]);
        rhs[k] += cell.measure * (prev[k] / dt + r0[k]);
        t.push((k, k, diag[k]));
    }
    (SparseMatrix::from_triplets(nc, t), rhs)
}

/// Result of one accepted time step.
#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub state: State,
    pub dt_used: f64,
    pub gummel_iterations: usize,
    pub dt_halvings: usize,
    /// Sup-norm of the final residual.
    pub residual: f64,
}

enum Attempt {
    Converged(State, usize, f64),
    Failed {
        reason: &'static str,
        residual: f64,
        iterate: State,
    },
}

/// Time stepper holding the mesh-dependent operators.
pub struct Stepper<'a> {
    mesh: &'a Mesh,
    physics: &'a Physics,
    op: PoissonOperator,
    psi_coupling: Vec<f64>,
}

impl<'a> Stepper<'a> {
    pub fn new(mesh: &'a Mesh, physics: &'a Physics) -> Result<Self> {
        if physics.doping.len() != mesh.cell_count() {
            return Err(Error::invalid("doping length does not match mesh"));
        }
        if !(physics.lambda > 0.0) {
            return Err(Error::invalid("Debye length must be positive"));
        }
        if mesh.dirichlet_count() == 0 {
            return Err(Error::MeasureZeroDirichlet);
        }
        Ok(Self {
            mesh,
            physics,
            op: PoissonOperator::new(mesh),
            psi_coupling: Vec::new(),
        })
    }

    pub fn mesh(&self) -> &Mesh {
        self.mesh
    }

    /// Advances `state` by `cfg.dt`, halving `Δt` on failure.
    pub fn step(&mut self, state: &State, cfg: &StepConfig) -> Result<StepOutcome> {
        cfg.validate()?;
        state.check(self.mesh)?;
        self.psi_coupling = dirichlet_coupling(self.mesh, &state.psi.dirichlet);
        let mut dt = cfg.dt;
        let mut last_failure = None;
        for halvings in 0..=cfg.max_dt_halvings {
            match self.attempt(state, dt, cfg)? {
                Attempt::Converged(mut next, iterations, residual) => {
                    next.time_index = state.time_index + 1;
                    return Ok(StepOutcome {
                        state: next,
                        dt_used: dt,
                        gummel_iterations: iterations,
                        dt_halvings: halvings,
                        residual,
                    });
                }
                Attempt::Failed {
                    reason,
                    residual,
                    iterate,
                } => {
                    last_failure = Some((reason, residual, iterate));
                    dt *= 0.5;
                }
            }
        }
        let (reason, residual, iterate) = last_failure.expect("at least one attempt");
        Err(Error::StepFailure {
            retries: cfg.max_dt_halvings,
            residual,
            reason,
            last_iterate: Box::new(iterate),
        })
    }

    fn attempt(&self, prev: &State, dt: f64, cfg: &StepConfig) -> Result<Attempt> {
        let mesh = self.mesh;
        let rec = &self.physics.recombination;
        let mut it = prev.clone();
        let mut res = residual(&it, prev, mesh, self.physics, dt).sup_norm();
        if res <= cfg.gummel_tol * (1.0 + it.sup_norm()) {
            return Ok(Attempt::Converged(it, 0, res));
        }
        for iteration in 1..=cfg.gummel_max_iters {
            let psi_cells = self.gummel_poisson(&it, cfg)?;
            let psi = PotentialField::new(psi_cells, prev.psi.dirichlet.clone());

            let r0: Vec<f64> = (0..mesh.cell_count())
                .map(|k| rec.prefactor(it.n_cells[k], it.p_cells[k]))
                .collect();
            let (a, b) = assemble_continuity(
                mesh,
                &psi,
                &prev.n_cells,
                &prev.n_dirichlet,
                dt,
                &r0,
                &it.p_cells,
                Carrier::Electron,
            );
            let n_new = linalg::solve(&a, &b, LinearSolverKind::Direct, &self.op.ordering, 1e-12)?;

            let (a, b) = assemble_continuity(
                mesh,
                &psi,
                &prev.p_cells,
                &prev.p_dirichlet,
                dt,
                &r0,
                &it.n_cells,
                Carrier::Hole,
            );
            let p_new = linalg::solve(&a, &b, LinearSolverKind::Direct, &self.op.ordering, 1e-12)?;

            it = State {
                n_cells: n_new,
                p_cells: p_new,
                psi,
                n_dirichlet: prev.n_dirichlet.clone(),
                p_dirichlet: prev.p_dirichlet.clone(),
                time_index: prev.time_index,
            };
            if it.n_cells.iter().chain(&it.p_cells).any(|&v| !(v >= 0.0)) {
                return Ok(Attempt::Failed {
                    reason: "negative density",
                    residual: res,
                    iterate: it,
                });
            }
            res = residual(&it, prev, mesh, self.physics, dt).sup_norm();
            if res <= cfg.gummel_tol * (1.0 + it.sup_norm()) {
                return Ok(Attempt::Converged(it, iteration, res));
            }
            if !res.is_finite() {
                break;
            }
        }
        Ok(Attempt::Failed {
            reason: "Gummel iteration limit",
            residual: res,
            iterate: it,
        })
    }

    /// Newton solve of Poisson with `N ∝ e^{Ψ}`, `P ∝ e^{-Ψ}` around the current iterate.
    fn gummel_poisson(&self, it: &State, cfg: &StepConfig) -> Result<Vec<f64>> {
        let mesh = self.mesh;
        let l2 = self.physics.lambda * self.physics.lambda;
        let base = &it.psi.cells;
        let eval = |psi: &[f64]| -> Vec<f64> {
            let lpsi = self.op.laplacian.mul_vec(psi);
            mesh.cells()
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let d = psi[k] - base[k];
                    let rho = it.p_cells[k] * (-d).exp() - it.n_cells[k] * d.exp() + self.physics.doping[k];
                    l2 * (lpsi[k] - self.psi_coupling[k]) - c.measure * rho
                })
                .collect()
        };
        let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
        let target = cfg.newton_tol * (1.0 + it.sup_norm());
        let mut psi = base.clone();
        let mut f = eval(&psi);
        for _ in 0..cfg.newton_max_iters {
            if sup(&f) <= target {
                break;
            }
            let diag: Vec<f64> = mesh
                .cells()
                .iter()
                .enumerate()
                .map(|(k, c)| {
                    let d = psi[k] - base[k];
                    c.measure * (it.p_cells[k] * (-d).exp() + it.n_cells[k] * d.exp())
                })
                .collect();
            let jac = self.op.shifted(l2, &diag);
            let rhs: Vec<f64> = f.iter().map(|v| -v).collect();
            let delta = linalg::solve(&jac, &rhs, cfg.linear, &self.op.ordering, 1e-13)?;
            let f_norm = norm2(&f);
            let mut t = 1.0;
            let mut accepted = false;
            for _ in 0..30 {
                let trial: Vec<f64> = psi.iter().zip(&delta).map(|(p, d)| p + t * d).collect();
                let ft = eval(&trial);
                if norm2(&ft) < f_norm {
                    psi = trial;
                    f = ft;
                    accepted = true;
                    break;
                }
                t *= 0.5;
            }
            if !accepted {
                break;
            }
        }
        Ok(psi)
    }
}

/// One time step with a freshly built [`Stepper`].
pub fn step(state: &State, mesh: &Mesh, physics: &Physics, cfg: &StepConfig) -> Result<StepOutcome> {
    Stepper::new(mesh, physics)?.step(state, cfg)
}

//! Discrete functionals along a trajectory: relative entropy, entropy
//! production, the Bernoulli lower bound `γ`, and truncated moments `V_q`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernels::{bernoulli_unchecked, entropy_bregman, guarded_log, LOG_FLOOR};
use crate::mesh::{EdgeKind, Mesh};
use crate::poisson::{EquilibriumState, PotentialField};
use crate::transport::{RecombinationSpec, State};

/// Powers recorded by default.
pub const DEFAULT_Q_LIST: [f64; 6] = [1.0, 2.0, 3.0, 5.0, 9.0, 17.0];

/// Cap applied to a recombination term evaluated at `N P = 0`, as a
/// multiple of the problem scale.
const ZERO_PRODUCT_CAP: f64 = 1e6;

/// `|u|_{1,M} = (Σ_σ τ_σ (D_σ u)²)^{1/2}`.
pub fn h1_seminorm(u_cells: &[f64], u_dirichlet: &[f64], mesh: &Mesh) -> f64 {
    h1_seminorm_sq(u_cells, u_dirichlet, mesh).sqrt()
}

fn h1_seminorm_sq(u_cells: &[f64], u_dirichlet: &[f64], mesh: &Mesh) -> f64 {
    mesh.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| !matches!(e.kind, EdgeKind::Neumann { .. }))
        .map(|(i, e)| {
            let d = mesh.diff(u_cells, u_dirichlet, i, e.kind.owner());
            e.tau * d * d
        })
        .sum()
}

/// Cellwise density part of the relative entropy,
/// `|K| [H(N) - H(N*) - ln N* (N - N*) + same for P]`.
pub fn entropy_cell_terms(state: &State, eq: &EquilibriumState, mesh: &Mesh) -> Vec<f64> {
    mesh.cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.measure
                * (entropy_bregman(state.n_cells[k], eq.n_star[k]) + entropy_bregman(state.p_cells[k], eq.p_star[k]))
        })
        .collect()
}

/// Field and density parts of the relative entropy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyParts {
    pub field: f64,
    pub densities: f64,
}

impl EntropyParts {
    pub fn total(&self) -> f64 {
        self.field + self.densities
    }
}

pub fn entropy_parts(state: &State, eq: &EquilibriumState, mesh: &Mesh, lambda: f64) -> EntropyParts {
    let dpsi: Vec<f64> = state
        .psi
        .cells
        .iter()
        .zip(&eq.psi_star.cells)
        .map(|(a, b)| a - b)
        .collect();
    let ddir: Vec<f64> = state
        .psi
        .dirichlet
        .iter()
        .zip(&eq.psi_star.dirichlet)
        .map(|(a, b)| a - b)
        .collect();
    EntropyParts {
        field: 0.5 * lambda * lambda * h1_seminorm_sq(&dpsi, &ddir, mesh),
        densities: entropy_cell_terms(state, eq, mesh).iter().sum(),
    }
}

/// Discrete relative entropy `𝔼`.
pub fn relative_entropy(state: &State, eq: &EquilibriumState, mesh: &Mesh, lambda: f64) -> f64 {
    entropy_parts(state, eq, mesh, lambda).total()
}

/// Entropy production together with a flag raised when a recombination
/// term had to be evaluated at `N P = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Production {
    pub value: f64,
    pub zero_product_flag: bool,
}

/// Discrete entropy production `𝕀`.
///
/// Edge terms with `min(u_K, u_{K,σ}) = 0` are zero. A recombination term
/// at `N P = 0` is replaced by `R₀ · (-ln floor)`, capped, and flagged.
pub fn entropy_production(state: &State, mesh: &Mesh, rec: &RecombinationSpec) -> Production {
    let mut total = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        if let EdgeKind::Neumann { .. } = edge.kind {
            continue;
        }
        let k = edge.kind.owner();
        let n_k = state.n_cells[k];
        let p_k = state.p_cells[k];
        let n_s = mesh.value_across(&state.n_cells, &state.n_dirichlet, e, k);
        let p_s = mesh.value_across(&state.p_cells, &state.p_dirichlet, e, k);
        let dpsi = state.psi.diff(mesh, e, k);
        let wn = n_k.min(n_s);
        if wn > 0.0 {
            let d = (n_s.ln() - n_k.ln()) - dpsi;
            total += edge.tau * wn * d * d;
        }
        let wp = p_k.min(p_s);
        if wp > 0.0 {
            let d = (p_s.ln() - p_k.ln()) + dpsi;
            total += edge.tau * wp * d * d;
        }
    }
    let mut flag = false;
    let scale = 1.0 + state.max_density();
    for (k, c) in mesh.cells().iter().enumerate() {
        let (n, p) = (state.n_cells[k], state.p_cells[k]);
        let r0 = rec.prefactor(n, p);
        if r0 == 0.0 {
            continue;
        }
        let x = n * p;
        let term = if x > 0.0 {
            (x - 1.0) * x.ln()
        } else {
            flag = true;
            (-guarded_log(0.0, LOG_FLOOR)).min(ZERO_PRODUCT_CAP * scale)
        };
        total += c.measure * r0 * term;
    }
    Production {
        value: total,
        zero_product_flag: flag,
    }
}

/// `γ = min_σ B(|D_σ Ψ|)`; Neumann edges have `D_σ Ψ = 0`.
pub fn gamma_bound(psi: &PotentialField, mesh: &Mesh) -> f64 {
    mesh.edges()
        .iter()
        .enumerate()
        .filter(|(_, e)| !matches!(e.kind, EdgeKind::Neumann { .. }))
        .map(|(i, e)| bernoulli_unchecked(psi.diff(mesh, i, e.kind.owner()).abs()))
        .fold(1.0, f64::min)
}

/// A-priori lower bound for `γ` from the entropy at time zero:
/// `|Ψ|_1 ≤ (2 𝔼⁰)^{1/2} / λ + |Ψ*|_1` and `D_σ Ψ ≤ |Ψ|_1 / √c₀`.
pub fn a_priori_gamma(entropy0: f64, eq: &EquilibriumState, mesh: &Mesh, lambda: f64) -> f64 {
    let c_star = h1_seminorm(&eq.psi_star.cells, &eq.psi_star.dirichlet, mesh);
    let s = (2.0 * entropy0.max(0.0)).sqrt() / lambda + c_star;
    let c0 = mesh.regularity_constants().c0;
    bernoulli_unchecked(s / c0.sqrt())
}

#[inline]
fn truncate(u: f64, m_cap: f64) -> f64 {
    (u - m_cap).max(0.0)
}

fn check_power(q: f64) -> Result<()> {
    if q >= 1.0 && q.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("moment power {q} must be at least 1")))
    }
}

/// `V_q = Σ_K |K| [((N_K - M)⁺)^q + ((P_K - M)⁺)^q]`.
pub fn v_moment(state: &State, m_cap: f64, q: f64, mesh: &Mesh) -> Result<f64> {
    check_power(q)?;
    if !(m_cap > 0.0) {
        return Err(Error::invalid("truncation level M must be positive"));
    }
    Ok(mesh
        .cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            c.measure * (truncate(state.n_cells[k], m_cap).powf(q) + truncate(state.p_cells[k], m_cap).powf(q))
        })
        .sum())
}

/// `Σ_σ τ_σ [(D_σ (N_M)^{r/2})² + (D_σ (P_M)^{r/2})²]`, with truncated
/// boundary values on Dirichlet edges.
pub fn truncated_gradient_sum(state: &State, m_cap: f64, r: f64, mesh: &Mesh) -> f64 {
    let h = 0.5 * r;
    let pow = |v: &[f64]| v.iter().map(|&u| truncate(u, m_cap).powf(h)).collect::<Vec<_>>();
    let (nc, nd) = (pow(&state.n_cells), pow(&state.n_dirichlet));
    let (pc, pd) = (pow(&state.p_cells), pow(&state.p_dirichlet));
    h1_seminorm_sq(&nc, &nd, mesh) + h1_seminorm_sq(&pc, &pd, mesh)
}

/// `V_r` and the matching gradient sum at one time level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moment {
    pub r: f64,
    pub v: f64,
    pub grad: f64,
}

/// Scalar diagnostics of one time level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub time_index: usize,
    pub time: f64,
    /// `Δt` of the step that produced this level; zero for the initial level.
    pub dt_used: f64,
    pub entropy: f64,
    pub production: f64,
    pub production_flagged: bool,
    pub gamma: f64,
    pub linf_n: f64,
    pub linf_p: f64,
    pub min_density: f64,
    /// `1 + ‖state‖_∞`, the scale the step residual was measured against.
    pub state_scale: f64,
    /// Sup-norm of the step residual; zero for the initial level.
    pub step_residual: f64,
    pub moments: Vec<Moment>,
    /// `𝔼^{n+1} + Δt 𝕀^{n+1} - 𝔼^n`, absent for the initial level.
    pub dissipation_residual: Option<f64>,
    /// Moment-inequality residuals per checked `q`, absent for the initial level.
    pub prop2: Vec<QResidual>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QResidual {
    pub q: f64,
    pub residual: f64,
}

impl DiagnosticsRecord {
    pub fn moment(&self, r: f64) -> Option<&Moment> {
        self.moments.iter().find(|m| m.r == r)
    }
}

/// Inputs shared by every record of a run.
#[derive(Debug, Clone, Copy)]
pub struct RecordContext<'a> {
    pub mesh: &'a Mesh,
    pub eq: &'a EquilibriumState,
    pub lambda: f64,
    pub recombination: &'a RecombinationSpec,
    pub m_cap: f64,
    pub powers: &'a [f64],
}

/// Evaluates every functional at `state`.
pub fn record(
    ctx: &RecordContext<'_>,
    state: &State,
    time: f64,
    dt_used: f64,
    step_residual: f64,
) -> Result<DiagnosticsRecord> {
    let prod = entropy_production(state, ctx.mesh, ctx.recombination);
    let moments = ctx
        .powers
        .iter()
        .map(|&r| {
            Ok(Moment {
                r,
                v: v_moment(state, ctx.m_cap, r, ctx.mesh)?,
                grad: truncated_gradient_sum(state, ctx.m_cap, r, ctx.mesh),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let sup = |v: &[f64]| v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    Ok(DiagnosticsRecord {
        time_index: state.time_index,
        time,
        dt_used,
        entropy: relative_entropy(state, ctx.eq, ctx.mesh, ctx.lambda),
        production: prod.value,
        production_flagged: prod.zero_product_flag,
        gamma: gamma_bound(&state.psi, ctx.mesh),
        linf_n: sup(&state.n_cells),
        linf_p: sup(&state.p_cells),
        min_density: state
            .n_cells
            .iter()
            .chain(&state.p_cells)
            .fold(f64::INFINITY, |m, &v| m.min(v)),
        state_scale: 1.0 + state.sup_norm(),
        step_residual,
        moments,
        dissipation_residual: None,
        prop2: Vec::new(),
    })
}

/// Outcome of one dissipation check.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DissipationCheck {
    pub residual: f64,
    pub slack: f64,
    pub pass: bool,
}

/// Slack for the dissipation inequality: ten times the largest total
/// residual a converged step may leave, `tol (1 + ‖state‖_∞)` per cell.
pub fn dissipation_slack(tol: f64, state_scale: f64, cell_count: usize) -> f64 {
    10.0 * tol * state_scale * cell_count as f64
}

/// `𝔼^{n+1} + Δt 𝕀^{n+1} - 𝔼^n` for consecutive records.
pub fn dissipation_residual(prev: &DiagnosticsRecord, next: &DiagnosticsRecord) -> Result<f64> {
    if next.time_index != prev.time_index + 1 {
        return Err(Error::Precondition(format!(
            "records {} and {} are not consecutive",
            prev.time_index, next.time_index
        )));
    }
    Ok(next.entropy + next.dt_used * next.production - prev.entropy)
}

pub fn check_dissipation(prev: &DiagnosticsRecord, next: &DiagnosticsRecord, slack: f64) -> Result<DissipationCheck> {
    let residual = dissipation_residual(prev, next)?;
    let lower = next.entropy + next.dt_used * next.production;
    Ok(DissipationCheck {
        residual,
        slack,
        pass: residual <= slack && lower >= -slack,
    })
}

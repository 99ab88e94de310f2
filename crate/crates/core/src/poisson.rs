//! Discrete Poisson equation and the discrete thermal equilibrium.
//!
//! The two-point operator is `(L u)_K = Σ_{σ ∈ E_K} τ_σ (u_K - u_{K,σ})`
//! with the Dirichlet values moved to the right-hand side; Neumann edges
//! contribute nothing. Poisson at one time level reads
//! `λ² (L Ψ)_K = |K| (P_K - N_K + C_K) + λ² Σ_{σ ∈ E_K^D} τ_σ Ψ_σ`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{self, BandOrdering, LinearSolverKind, SparseMatrix};
use crate::mesh::{Across, EdgeKind, Mesh};

/// Largest `|α + Ψ|` accepted before `e^{α+Ψ}` is considered unsafe.
const EXP_GUARD: f64 = 700.0;

/// Cell values `Ψ_K` plus Dirichlet edge values `Ψ_σ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PotentialField {
    pub cells: Vec<f64>,
    pub dirichlet: Vec<f64>,
}

impl PotentialField {
    pub fn new(cells: Vec<f64>, dirichlet: Vec<f64>) -> Self {
        Self { cells, dirichlet }
    }

    pub fn check(&self, mesh: &Mesh) -> Result<()> {
        if self.cells.len() != mesh.cell_count() || self.dirichlet.len() != mesh.dirichlet_count() {
            return Err(Error::invalid("potential field length does not match mesh"));
        }
        if self.cells.iter().chain(&self.dirichlet).any(|v| !v.is_finite()) {
            return Err(Error::invalid("potential field has non-finite entries"));
        }
        Ok(())
    }

    /// `D_{K,σ} Ψ`
    #[inline]
    pub fn diff(&self, mesh: &Mesh, edge: usize, k: usize) -> f64 {
        mesh.diff(&self.cells, &self.dirichlet, edge, k)
    }
}

/// Discrete thermal equilibrium `(α, Ψ*, N*, P*)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumState {
    pub alpha: f64,
    pub psi_star: PotentialField,
    pub n_star: Vec<f64>,
    pub p_star: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PoissonOptions {
    pub linear: LinearSolverKind,
    /// Relative residual accepted from the inner linear solver.
    pub linear_tol: f64,
    /// Newton stopping threshold, multiplied by `1 + ‖C‖_∞`.
    pub newton_tol: f64,
    pub newton_max_iters: usize,
    pub max_halvings: usize,
}

impl Default for PoissonOptions {
    fn default() -> Self {
        Self {
            linear: LinearSolverKind::Direct,
            linear_tol: 1e-12,
            newton_tol: 1e-10,
            newton_max_iters: 100,
            max_halvings: 30,
        }
    }
}

/// `λ`-free two-point operator with Dirichlet rows carrying their `τ_σ`.
pub fn assemble_laplacian(mesh: &Mesh) -> SparseMatrix {
    let mut t = Vec::with_capacity(mesh.cell_count() + 2 * mesh.edge_count());
    for (k, cell_edges) in (0..mesh.cell_count()).map(|k| (k, mesh.cell_edges(k))) {
        let mut diag = 0.0;
        for &e in cell_edges {
            let tau = mesh.edges()[e].tau;
            match mesh.across(e, k) {
                Across::Cell(l) => {
                    diag += tau;
                    t.push((k, l, -tau));
                }
                Across::Dirichlet(_) => diag += tau,
                Across::Neumann => {}
            }
        }
        t.push((k, k, diag));
    }
    SparseMatrix::from_triplets(mesh.cell_count(), t)
}

/// `Σ_{σ ∈ E_K^D} τ_σ u_σ` per cell.
pub fn dirichlet_coupling(mesh: &Mesh, dirichlet: &[f64]) -> Vec<f64> {
    let mut b = vec![0.0; mesh.cell_count()];
    for (slot, &e) in mesh.dirichlet_edges().iter().enumerate() {
        let edge = &mesh.edges()[e];
        if let EdgeKind::Dirichlet { k } = edge.kind {
            b[k] += edge.tau * dirichlet[slot];
        }
    }
    b
}

/// Laplacian and its band ordering, built once per mesh.
#[derive(Debug, Clone)]
pub struct PoissonOperator {
    pub laplacian: SparseMatrix,
    pub ordering: BandOrdering,
}

impl PoissonOperator {
    pub fn new(mesh: &Mesh) -> Self {
        let laplacian = assemble_laplacian(mesh);
        let ordering = BandOrdering::for_pattern(&laplacian);
        Self { laplacian, ordering }
    }

    /// `L` plus a diagonal term.
    pub fn shifted(&self, lambda2: f64, diag: &[f64]) -> SparseMatrix {
        let n = self.laplacian.dim();
        let mut t = Vec::with_capacity(self.laplacian.nnz());
        for i in 0..n {
            for (j, v) in self.laplacian.row(i) {
                let d = if i == j { diag[i] } else { 0.0 };
                t.push((i, j, lambda2 * v + d));
            }
        }
        SparseMatrix::from_triplets(n, t)
    }
}

fn check_dirichlet(mesh: &Mesh, dirichlet: &[f64]) -> Result<()> {
    if mesh.dirichlet_count() == 0 {
        return Err(Error::MeasureZeroDirichlet);
    }
    if dirichlet.len() != mesh.dirichlet_count() {
        return Err(Error::invalid(format!(
            "{} Dirichlet values for {} Dirichlet edges",
            dirichlet.len(),
            mesh.dirichlet_count()
        )));
    }
    Ok(())
}

/// Solves `-λ² Σ τ_σ D_{K,σ} Ψ = |K| rhs_K` with Dirichlet data `dirichlet`.
pub fn solve_poisson(
    mesh: &Mesh,
    lambda: f64,
    rhs_cells: &[f64],
    dirichlet: &[f64],
    opts: &PoissonOptions,
) -> Result<PotentialField> {
    solve_poisson_with(&PoissonOperator::new(mesh), mesh, lambda, rhs_cells, dirichlet, opts)
}

pub fn solve_poisson_with(
    op: &PoissonOperator,
    mesh: &Mesh,
    lambda: f64,
    rhs_cells: &[f64],
    dirichlet: &[f64],
    opts: &PoissonOptions,
) -> Result<PotentialField> {
    if !(lambda > 0.0) {
        return Err(Error::invalid(format!("Debye length must be positive, got {lambda}")));
    }
    check_dirichlet(mesh, dirichlet)?;
    if rhs_cells.len() != mesh.cell_count() {
        return Err(Error::invalid("right-hand side length does not match mesh"));
    }
    let l2 = lambda * lambda;
    let coupling = dirichlet_coupling(mesh, dirichlet);
    let b: Vec<f64> = mesh
        .cells()
        .iter()
        .zip(rhs_cells)
        .zip(&coupling)
        .map(|((c, r), g)| l2 * g + c.measure * r)
        .collect();
    let a = op.shifted(l2, &vec![0.0; mesh.cell_count()]);
    let x = linalg::solve(&a, &b, opts.linear, &op.ordering, opts.linear_tol)?;
    let res = linalg::relative_residual(&a, &x, &b);
    if !(res <= 1e-10) {
        return Err(Error::Solver {
            what: "Poisson solve",
            residual: res,
        });
    }
    Ok(PotentialField::new(x, dirichlet.to_vec()))
}

/// Quasi-Fermi constant from boundary data: mean of `ln N^D_σ - Ψ^D_σ`.
pub fn compute_alpha(nd_edges: &[f64], psid_edges: &[f64], tol: f64) -> Result<f64> {
    if nd_edges.is_empty() || nd_edges.len() != psid_edges.len() {
        return Err(Error::invalid("alpha needs matching, nonempty boundary vectors"));
    }
    if let Some(bad) = nd_edges.iter().find(|&&n| !(n > 0.0)) {
        return Err(Error::invalid(format!("boundary density {bad} must be positive")));
    }
    let cands: Vec<f64> = nd_edges.iter().zip(psid_edges).map(|(n, p)| n.ln() - p).collect();
    let mean = cands.iter().sum::<f64>() / cands.len() as f64;
    let max_deviation = cands.iter().map(|c| (c - mean).abs()).fold(0.0, f64::max);
    if max_deviation > tol {
        return Err(Error::InconsistentBoundaryData { max_deviation, tol });
    }
    Ok(mean)
}

/// Residual of the equilibrium Poisson equation
/// `λ² (L Ψ - g)_K - |K| (e^{-α-Ψ_K} - e^{α+Ψ_K} + C_K)`.
pub fn equilibrium_residual(
    op: &PoissonOperator,
    mesh: &Mesh,
    lambda: f64,
    doping: &[f64],
    alpha: f64,
    psi: &[f64],
    coupling: &[f64],
) -> Vec<f64> {
    let l2 = lambda * lambda;
    let lpsi = op.laplacian.mul_vec(psi);
    mesh.cells()
        .iter()
        .enumerate()
        .map(|(k, c)| {
            let s = alpha + psi[k];
            l2 * (lpsi[k] - coupling[k]) - c.measure * ((-s).exp() - s.exp() + doping[k])
        })
        .collect()
}

fn sup(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn norm_l2(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// Newton history of an equilibrium solve.
#[derive(Debug, Clone, Default)]
pub struct NewtonStats {
    /// Sup-norm residual after each accepted iterate, starting with the initial guess.
    pub residuals: Vec<f64>,
    pub halvings: usize,
}

pub fn solve_equilibrium(
    mesh: &Mesh,
    lambda: f64,
    doping: &[f64],
    alpha: f64,
    psid: &[f64],
    opts: &PoissonOptions,
) -> Result<EquilibriumState> {
    solve_equilibrium_with_stats(mesh, lambda, doping, alpha, psid, opts).map(|(s, _)| s)
}

/// Damped Newton on the equilibrium Poisson equation.
pub fn solve_equilibrium_with_stats(
    mesh: &Mesh,
    lambda: f64,
    doping: &[f64],
    alpha: f64,
    psid: &[f64],
    opts: &PoissonOptions,
) -> Result<(EquilibriumState, NewtonStats)> {
    check_dirichlet(mesh, psid)?;
    if doping.len() != mesh.cell_count() {
        return Err(Error::invalid("doping length does not match mesh"));
    }
    let op = PoissonOperator::new(mesh);
    let l2 = lambda * lambda;
    let norm_c = sup(doping);
    let target = opts.newton_tol * (1.0 + norm_c);
    let coupling = dirichlet_coupling(mesh, psid);

    // Warm start: linear Poisson with the exponential terms cancelled (α + Ψ = 0).
    let mut psi = solve_poisson_with(&op, mesh, lambda, doping, psid, opts)?.cells;
    let mut res = equilibrium_residual(&op, mesh, lambda, doping, alpha, &psi, &coupling);
    if psi.iter().any(|p| (alpha + p).abs() > EXP_GUARD) || res.iter().any(|r| !r.is_finite()) {
        psi = vec![-alpha; mesh.cell_count()];
        res = equilibrium_residual(&op, mesh, lambda, doping, alpha, &psi, &coupling);
    }
    let mut stats = NewtonStats {
        residuals: vec![sup(&res)],
        halvings: 0,
    };
    let mut polished = false;
    for _ in 0..opts.newton_max_iters {
        let r_sup = sup(&res);
        if r_sup <= target {
            if polished || r_sup == 0.0 {
                break;
            }
            polished = true;
        }
        let diag: Vec<f64> = mesh
            .cells()
            .iter()
            .zip(&psi)
            .map(|(c, p)| {
                let s = alpha + p;
                c.measure * ((-s).exp() + s.exp())
            })
            .collect();
        let jac = op.shifted(l2, &diag);
        let minus_res: Vec<f64> = res.iter().map(|r| -r).collect();
        let delta = linalg::solve(&jac, &minus_res, opts.linear, &op.ordering, opts.linear_tol)?;
        let r_norm = norm_l2(&res);
        let mut t = 1.0;
        let mut accepted = None;
        for h in 0..=opts.max_halvings {
            let trial: Vec<f64> = psi.iter().zip(&delta).map(|(p, d)| p + t * d).collect();
            if trial.iter().all(|p| (alpha + p).abs() <= EXP_GUARD) {
                let tr = equilibrium_residual(&op, mesh, lambda, doping, alpha, &trial, &coupling);
                if norm_l2(&tr) < r_norm {
                    stats.halvings += h;
                    accepted = Some((trial, tr));
                    break;
                }
            }
            t *= 0.5;
        }
        match accepted {
            Some((p, r)) => {
                psi = p;
                res = r;
                stats.residuals.push(sup(&res));
            }
            None if r_sup <= target => break,
            None => {
                return Err(Error::NonConvergence {
                    what: "equilibrium Newton line search",
                    iterations: stats.residuals.len(),
                    residual: r_sup,
                })
            }
        }
    }
    let r_sup = sup(&res);
    if !(r_sup <= target) {
        return Err(Error::NonConvergence {
            what: "equilibrium Newton",
            iterations: stats.residuals.len(),
            residual: r_sup,
        });
    }
    let n_star = psi.iter().map(|p| (alpha + p).exp()).collect();
    let p_star = psi.iter().map(|p| (-alpha - p).exp()).collect();
    let state = EquilibriumState {
        alpha,
        psi_star: PotentialField::new(psi, psid.to_vec()),
        n_star,
        p_star,
    };
    Ok((state, stats))
}

//! Moser iteration made executable: explicit constants, the per-step moment
//! inequality, a Nash-inequality probe, and the `W_k` cascade with its
//! uniform bound `κ = 2^{5+d} D 𝒦`.

use std::f64::consts::PI;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{truncated_gradient_sum, v_moment, DiagnosticsRecord};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::mesh::{Across, Mesh, DIM};
use crate::transport::State;

/// Safety factor applied to the measured Nash constant.
pub const NASH_SAFETY: f64 = 2.0;

const DIMF: f64 = DIM as f64;

/// `μ = ‖C‖/λ² + M‖C‖/λ² + R̄(1+2M) + 4R̄`, `ν = M‖C‖/λ² + R̄(1+2M)`.
pub fn derive_mu_nu(norm_c: f64, lambda: f64, m_cap: f64, rbar: f64) -> Result<(f64, f64)> {
    if !(norm_c >= 0.0 && lambda > 0.0 && m_cap > 0.0 && rbar >= 0.0) {
        return Err(Error::invalid("derive_mu_nu needs ‖C‖ ≥ 0, λ > 0, M > 0, R̄ ≥ 0"));
    }
    let c = norm_c / (lambda * lambda);
    let nu = m_cap * c + rbar * (1.0 + 2.0 * m_cap);
    Ok((c + nu + 4.0 * rbar, nu))
}

/// Left side minus right side of the moment inequality for `V_{q+1}`,
/// evaluated from two consecutive states.
#[allow(clippy::too_many_arguments)]
pub fn check_prop2(
    prev: &State,
    next: &State,
    dt: f64,
    q: f64,
    m_cap: f64,
    mu: f64,
    nu: f64,
    gamma: f64,
    mesh: &Mesh,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::invalid(format!("q = {q} must be at least 1")));
    }
    if !(dt > 0.0) {
        return Err(Error::invalid("time step must be positive"));
    }
    let r = q + 1.0;
    let v_next = v_moment(next, m_cap, r, mesh)?;
    let v_prev = v_moment(prev, m_cap, r, mesh)?;
    let grad = truncated_gradient_sum(next, m_cap, r, mesh);
    Ok(prop2_expression(
        v_prev,
        v_next,
        grad,
        dt,
        q,
        mu,
        nu,
        gamma,
        mesh.domain_measure(),
    ))
}

#[allow(clippy::too_many_arguments)]
fn prop2_expression(
    v_prev: f64,
    v_next: f64,
    grad: f64,
    dt: f64,
    q: f64,
    mu: f64,
    nu: f64,
    gamma: f64,
    omega: f64,
) -> f64 {
    (v_next - v_prev) / dt + 4.0 * q / (q + 1.0) * gamma * grad - mu * q * v_next - nu * omega
}

/// Same residual as [`check_prop2`], from stored records carrying `V_{q+1}`
/// and its gradient sum. `γ` is the measured value of the later record.
pub fn check_prop2_records(
    prev: &DiagnosticsRecord,
    next: &DiagnosticsRecord,
    q: f64,
    mu: f64,
    nu: f64,
    omega: f64,
) -> Result<f64> {
    if !(q >= 1.0) {
        return Err(Error::invalid(format!("q = {q} must be at least 1")));
    }
    if next.time_index != prev.time_index + 1 {
        return Err(Error::Precondition(format!(
            "records {} and {} are not consecutive",
            prev.time_index, next.time_index
        )));
    }
    let r = q + 1.0;
    let missing = || Error::invalid(format!("records lack V_{r}"));
    let a = prev.moment(r).ok_or_else(missing)?;
    let b = next.moment(r).ok_or_else(missing)?;
    Ok(prop2_expression(
        a.v,
        b.v,
        b.grad,
        next.dt_used,
        q,
        mu,
        nu,
        next.gamma,
        omega,
    ))
}

/// Slack for the moment inequality: `10 tol (1 + max density)^{q+1}`.
pub fn prop2_slack(tol: f64, max_density: f64, q: f64) -> f64 {
    10.0 * tol * (1.0 + max_density).powf(q + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NashProbeResult {
    pub ratios: Vec<f64>,
    /// Largest observed ratio, the surrogate for `C̃/ξ`.
    pub empirical_constant: f64,
    pub mesh_id: String,
    pub samples: usize,
}

/// `(Σ|K|χ²)^{1+2/d} / [(Σ τ_σ (D_σ χ)²) (Σ|K||χ|)^{4/d}]` with `χ = 0` on
/// Dirichlet edges; `None` for the zero function.
pub fn nash_ratio(chi: &[f64], mesh: &Mesh) -> Option<f64> {
    let mut l2 = 0.0;
    let mut l1 = 0.0;
    for (c, &x) in mesh.cells().iter().zip(chi) {
        l2 += c.measure * x * x;
        l1 += c.measure * x.abs();
    }
    if l1 == 0.0 {
        return None;
    }
    let mut grad = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        let k = edge.kind.owner();
        let d = match mesh.across(e, k) {
            Across::Cell(l) => chi[l] - chi[k],
            Across::Dirichlet(_) => -chi[k],
            Across::Neumann => 0.0,
        };
        grad += edge.tau * d * d;
    }
    Some(l2.powf(1.0 + 2.0 / DIMF) / (grad * l1.powf(4.0 / DIMF)))
}

fn mesh_id(mesh: &Mesh) -> String {
    match mesh.grid() {
        Some(g) => format!("rect {}x{}", g.nx, g.ny),
        None => format!("file {} cells", mesh.cell_count()),
    }
}

/// Draws `samples` random cell functions and records their Nash ratios.
///
/// Samples come in equal shares from three families: combinations of
/// `sin(jπx) cos(kπy)` modes (coordinates normalised to the bounding box,
/// coefficients decaying like `1/(j²+k²)`), positive parts of such
/// combinations, and cones of radius between half a cell and four cells
/// around a random cell centre. The cones resolve the mesh-scale functions
/// that attain the discrete supremum, which smooth modes miss on fine meshes.
pub fn nash_probe(mesh: &Mesh, samples: usize, rng_seed: u64) -> Result<NashProbeResult> {
    if mesh.dirichlet_count() == 0 {
        return Err(Error::MeasureZeroDirichlet);
    }
    if samples == 0 {
        return Err(Error::invalid("nash probe needs at least one sample"));
    }
    let b = mesh.bounds();
    let coords: Vec<(f64, f64)> = mesh
        .cells()
        .iter()
        .map(|c| ((c.center[0] - b.x0) / b.width(), (c.center[1] - b.y0) / b.height()))
        .collect();
    let h = (mesh.domain_measure() / mesh.cell_count() as f64).sqrt();
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut ratios = Vec::with_capacity(samples);
    let mut attempts = 0usize;
    while ratios.len() < samples {
        attempts += 1;
        if attempts > 100 * samples {
            return Err(Error::invalid("nash probe keeps drawing zero samples"));
        }
        let chi: Vec<f64> = match rng.random_range(0..3u8) {
            2 => {
                let centre = mesh.cells()[rng.random_range(0..mesh.cell_count())].center;
                let radius = h * rng.random_range(0.5..4.0);
                mesh.cells()
                    .iter()
                    .map(|c| {
                        let d = (c.center[0] - centre[0]).hypot(c.center[1] - centre[1]);
                        (1.0 - d / radius).max(0.0)
                    })
                    .collect()
            }
            family => {
                let mut coef = [[0.0; 4]; 4];
                for (j, row) in coef.iter_mut().enumerate() {
                    for (k, c) in row.iter_mut().enumerate() {
                        let jj = (j + 1) as f64;
                        *c = rng.random_range(-1.0..1.0) / (jj * jj + (k * k) as f64);
                    }
                }
                coords
                    .iter()
                    .map(|&(x, y)| {
                        let mut v = 0.0;
                        for (j, row) in coef.iter().enumerate() {
                            let s = ((j + 1) as f64 * PI * x).sin();
                            for (k, c) in row.iter().enumerate() {
                                v += c * s * (k as f64 * PI * y).cos();
                            }
                        }
                        if family == 1 {
                            v.max(0.0)
                        } else {
                            v
                        }
                    })
                    .collect()
            }
        };
        if let Some(r) = nash_ratio(&chi, mesh) {
            if r.is_finite() {
                ratios.push(r);
            }
        }
    }
    let empirical_constant = ratios.iter().cloned().fold(0.0, f64::max);
    Ok(NashProbeResult {
        ratios,
        empirical_constant,
        mesh_id: mesh_id(mesh),
        samples,
    })
}

/// Run data the constants are derived from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConstantInputs {
    pub norm_c: f64,
    pub lambda: f64,
    pub m_cap: f64,
    pub rbar: f64,
    /// Lower bound of `B(D_σ Ψ)` over the run.
    pub gamma: f64,
    /// Measured Nash constant before the safety factor.
    pub nash_empirical: f64,
    pub domain_measure: f64,
    /// `sup_n W_0^n`.
    pub sup_w0: f64,
    pub k_max: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoserConstants {
    pub mu: f64,
    pub nu: f64,
    pub a_const: f64,
    pub b_const: f64,
    pub d_const: f64,
    pub kappa_seed: f64,
    pub gamma: f64,
    /// `C̃/ξ` after the safety factor.
    pub nash_constant: f64,
    pub zeta: Vec<f64>,
    pub eps: Vec<f64>,
    pub delta: Vec<f64>,
    pub kappa: f64,
    pub k_max: usize,
}

/// `(γA/q)(μq + γA/q) ≤ 4γq/(q+1)`.
pub fn a_condition(a: f64, mu: f64, gamma: f64, q: f64) -> bool {
    let e = gamma * a / q;
    e * (mu * q + e) <= 4.0 * gamma * q / (q + 1.0)
}

fn a_condition_all(a: f64, mu: f64, gamma: f64, q_max: usize) -> bool {
    (1..=q_max).all(|q| a_condition(a, mu, gamma, q as f64))
}

/// Largest `A ≤ 1` on a bisection grid with the condition holding for
/// `q = 1, …, q_max`.
pub fn choose_a(mu: f64, gamma: f64, q_max: usize) -> f64 {
    if a_condition_all(1.0, mu, gamma, q_max) {
        return 1.0;
    }
    let (mut lo, mut hi) = (0.0, 1.0);
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        if a_condition_all(mid, mu, gamma, q_max) {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    lo
}

impl MoserConstants {
    pub fn derive(inp: &ConstantInputs) -> Result<Self> {
        if !(inp.gamma > 0.0 && inp.gamma <= 1.0) {
            return Err(Error::invalid(format!("γ = {} is outside (0, 1]", inp.gamma)));
        }
        if !(inp.nash_empirical > 0.0 && inp.domain_measure > 0.0 && inp.sup_w0 >= 0.0) {
            return Err(Error::invalid("constant inputs must be positive"));
        }
        let (mu, nu) = derive_mu_nu(inp.norm_c, inp.lambda, inp.m_cap, inp.rbar)?;
        let gamma = inp.gamma;
        let q_max = 1usize << inp.k_max;
        let a = choose_a(mu, gamma, q_max);
        let nash_constant = NASH_SAFETY * inp.nash_empirical;
        // Young split of the Nash inequality: coefficient (C̃/ξ)^{d/2} ε^{-d/2}
        let young = nash_constant.powf(DIMF / 2.0);
        let t = young * a.powf(-DIMF / 2.0);
        let b = gamma.powf(-DIMF / 2.0) * (nu * inp.domain_measure).max(t).max(t * mu);
        let d = b / a;
        let kappa_seed = inp.sup_w0.max(1.0);
        let mut zeta = Vec::new();
        let mut eps = Vec::new();
        let mut delta = Vec::new();
        for k in 1..=inp.k_max {
            let z = ((1u64 << k) - 1) as f64;
            let e = gamma * a / z;
            zeta.push(z);
            eps.push(e);
            delta.push(b * z.powf(DIMF / 2.0) * (z + e) / e);
        }
        Ok(Self {
            mu,
            nu,
            a_const: a,
            b_const: b,
            d_const: d,
            kappa_seed,
            gamma,
            nash_constant,
            zeta,
            eps,
            delta,
            kappa: 2f64.powf(5.0 + DIMF) * d * kappa_seed,
            k_max: inp.k_max,
        })
    }

    /// `ln` of `2δ_k (2δ_{k-1})² ⋯ (2δ_1)^{2^{k-1}} 𝒦^{2^k}`.
    pub fn log_inductive_bound(&self, k: usize) -> f64 {
        let mut log = self.kappa_seed.ln();
        for j in 1..=k {
            log = (2.0 * self.delta[j - 1]).ln() + 2.0 * log;
        }
        log
    }

    /// `ln` of `(2^{5+d} D 𝒦)^{2^k}`.
    pub fn log_closed_bound(&self, k: usize) -> f64 {
        2f64.powi(k as i32) * self.kappa.ln()
    }

    /// `δ_k ≤ D 2^{(2+d/2)k}`, `k ≥ 1`.
    pub fn delta_growth_holds(&self, k: usize) -> bool {
        self.delta[k - 1] <= self.d_const * 2f64.powf((2.0 + DIMF / 2.0) * k as f64)
    }

    /// `ln ∏_{j=0}^{k-1} (2δ_{k-j})^{2^j}`.
    pub fn log_delta_product(&self, k: usize) -> f64 {
        (0..k)
            .map(|j| 2f64.powi(j as i32) * (2.0 * self.delta[k - j - 1]).ln())
            .sum()
    }
}

fn sci(v: Option<f64>) -> String {
    v.map(|x| format!("{x:.5e}")).unwrap_or_else(|| "-".into())
}

/// One row of the cascade table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelRow {
    pub k: usize,
    pub zeta: f64,
    /// `None` on the base level.
    pub eps: Option<f64>,
    pub delta: Option<f64>,
    pub sup_measured: f64,
    /// Time index at which the measured supremum is attained.
    pub argmax: usize,
    pub log_bound_inductive: f64,
    pub log_bound_closed: f64,
    pub delta_growth_ok: bool,
    pub pass: bool,
}

impl LevelRow {
    pub fn bound_inductive(&self) -> f64 {
        self.log_bound_inductive.exp()
    }

    pub fn bound_closed(&self) -> f64 {
        self.log_bound_closed.exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoserReport {
    pub constants: MoserConstants,
    pub levels: Vec<LevelRow>,
    pub a_condition_ok: bool,
    /// `sup_n ‖(N^n - M)⁺‖_∞` and the same for `P`.
    pub sup_nm: f64,
    pub sup_pm: f64,
    pub kappa_ok: bool,
    /// `W_k^{1/2^k} ≤ (2|Ω|)^{1/2^k} max(‖N_M‖_∞, ‖P_M‖_∞)` at every record and level.
    pub lp_consistent: bool,
    pub failures: Vec<String>,
}

pub const MOSER_CSV_HEADER: [&str; 8] = [
    "k",
    "zeta_k",
    "eps_k",
    "delta_k",
    "sup_W_measured",
    "bound_inductive",
    "bound_closed_form",
    "pass",
];

impl MoserReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }

    pub fn to_text(&self) -> String {
        let c = &self.constants;
        let mut s = String::new();
        let _ = writeln!(s, "Moser cascade report");
        let _ = writeln!(s, "  mu      = {}", fmt_f64(c.mu));
        let _ = writeln!(s, "  nu      = {}", fmt_f64(c.nu));
        let _ = writeln!(s, "  gamma   = {}", fmt_f64(c.gamma));
        let _ = writeln!(
            s,
            "  C/xi    = {} (measured x {})",
            fmt_f64(c.nash_constant),
            NASH_SAFETY
        );
        let _ = writeln!(s, "  A       = {}", fmt_f64(c.a_const));
        let _ = writeln!(s, "  B       = {}", fmt_f64(c.b_const));
        let _ = writeln!(s, "  D = B/A = {}", fmt_f64(c.d_const));
        let _ = writeln!(s, "  K seed  = {}", fmt_f64(c.kappa_seed));
        let _ = writeln!(s, "  kappa   = {}", fmt_f64(c.kappa));
        let _ = writeln!(
            s,
            "  A condition for q = 1..{}: {}",
            1usize << c.k_max,
            ok(self.a_condition_ok)
        );
        let _ = writeln!(s);
        let _ = writeln!(
            s,
            "  {:>2} {:>6} {:>12} {:>12} {:>12} {:>8} {:>14} {:>14} {:>6} pass",
            "k", "zeta", "eps", "delta", "sup W", "at n", "ln(inductive)", "ln(closed)", "growth"
        );
        for r in &self.levels {
            let _ = writeln!(
                s,
                "  {:>2} {:>6} {:>12} {:>12} {:>12.5e} {:>8} {:>14.6} {:>14.6} {:>6} {}",
                r.k,
                r.zeta,
                sci(r.eps),
                sci(r.delta),
                r.sup_measured,
                r.argmax,
                r.log_bound_inductive,
                r.log_bound_closed,
                ok(r.delta_growth_ok),
                ok(r.pass)
            );
        }
        let _ = writeln!(s);
        let _ = writeln!(s, "  sup |(N-M)+|_inf = {}", fmt_f64(self.sup_nm));
        let _ = writeln!(s, "  sup |(P-M)+|_inf = {}", fmt_f64(self.sup_pm));
        let _ = writeln!(s, "  kappa dominates: {}", ok(self.kappa_ok));
        let _ = writeln!(s, "  L^(2^k) vs L^inf consistency: {}", ok(self.lp_consistent));
        if self.failures.is_empty() {
            let _ = writeln!(s, "RESULT: PASS");
        } else {
            for f in &self.failures {
                let _ = writeln!(s, "  failure: {f}");
            }
            let _ = writeln!(s, "RESULT: FAIL");
        }
        s
    }

    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(MOSER_CSV_HEADER)?;
        for r in &self.levels {
            out.write_record([
                r.k.to_string(),
                fmt_f64(r.zeta),
                r.eps.map(fmt_f64).unwrap_or_default(),
                r.delta.map(fmt_f64).unwrap_or_default(),
                fmt_f64(r.sup_measured),
                fmt_f64(r.bound_inductive()),
                fmt_f64(r.bound_closed()),
                r.pass.to_string(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }
}

fn ok(b: bool) -> &'static str {
    if b {
        "ok"
    } else {
        "FAIL"
    }
}

/// Builds the cascade report without failing on violated bounds.
pub fn build_moser_report(
    records: &[DiagnosticsRecord],
    constants: &MoserConstants,
    m_cap: f64,
    domain_measure: f64,
) -> Result<MoserReport> {
    let k_max = constants.k_max;
    if records.is_empty() {
        return Err(Error::invalid("empty trajectory"));
    }
    let mut levels = Vec::with_capacity(k_max + 1);
    let mut failures = Vec::new();
    for k in 0..=k_max {
        let r = (1u64 << k) as f64;
        let mut sup = 0.0;
        let mut argmax = records[0].time_index;
        for rec in records {
            let m = rec
                .moment(r)
                .ok_or_else(|| Error::invalid(format!("record {} lacks V_{r}", rec.time_index)))?;
            if m.v > sup {
                sup = m.v;
                argmax = rec.time_index;
            }
        }
        let li = constants.log_inductive_bound(k);
        let lc = constants.log_closed_bound(k);
        let growth = k == 0 || constants.delta_growth_holds(k);
        let within = |log_bound: f64| sup == 0.0 || sup.ln() <= log_bound;
        let pass = within(li) && within(lc) && growth;
        if !within(li) || !within(lc) {
            let n = records
                .iter()
                .find(|rec| {
                    rec.moment(r)
                        .is_some_and(|m| m.v > 0.0 && (m.v.ln() > li || m.v.ln() > lc))
                })
                .map_or(argmax, |rec| rec.time_index);
            failures.push(format!("W_{k} = {} at n = {n} exceeds its bound", fmt_f64(sup)));
        }
        if !growth {
            failures.push(format!("delta_{k} exceeds D 2^((2+d/2)k)"));
        }
        let (zeta, eps, delta) = if k == 0 {
            (0.0, None, None)
        } else {
            (
                constants.zeta[k - 1],
                Some(constants.eps[k - 1]),
                Some(constants.delta[k - 1]),
            )
        };
        levels.push(LevelRow {
            k,
            zeta,
            eps,
            delta,
            sup_measured: sup,
            argmax,
            log_bound_inductive: li,
            log_bound_closed: lc,
            delta_growth_ok: growth,
            pass,
        });
    }
    let a_condition_ok = a_condition_all(constants.a_const, constants.mu, constants.gamma, 1usize << k_max);
    if !a_condition_ok {
        failures.push("A condition fails".into());
    }
    let sup_nm = records.iter().map(|r| (r.linf_n - m_cap).max(0.0)).fold(0.0, f64::max);
    let sup_pm = records.iter().map(|r| (r.linf_p - m_cap).max(0.0)).fold(0.0, f64::max);
    let kappa_ok = sup_nm <= constants.kappa && sup_pm <= constants.kappa;
    if !kappa_ok {
        failures.push(format!(
            "kappa {} below measured truncated sup-norm",
            fmt_f64(constants.kappa)
        ));
    }
    let mut lp_consistent = true;
    for rec in records {
        let linf = (rec.linf_n - m_cap).max(rec.linf_p - m_cap).max(0.0);
        for k in 0..=k_max {
            let r = (1u64 << k) as f64;
            if let Some(m) = rec.moment(r) {
                let lhs = m.v.powf(1.0 / r);
                let rhs = (2.0 * domain_measure).powf(1.0 / r) * linf;
                if lhs > rhs * (1.0 + 1e-12) + 1e-300 {
                    lp_consistent = false;
                }
            }
        }
    }
    if !lp_consistent {
        failures.push("L^(2^k) norm above L^inf norm".into());
    }
    Ok(MoserReport {
        constants: constants.clone(),
        levels,
        a_condition_ok,
        sup_nm,
        sup_pm,
        kappa_ok,
        lp_consistent,
        failures,
    })
}

/// Builds the cascade report and fails on the first violated bound.
pub fn moser_cascade(
    records: &[DiagnosticsRecord],
    constants: &MoserConstants,
    m_cap: f64,
    domain_measure: f64,
) -> Result<MoserReport> {
    let report = build_moser_report(records, constants, m_cap, domain_measure)?;
    match report.failures.first() {
        None => Ok(report),
        Some(f) => Err(Error::Verification(f.clone())),
    }
}

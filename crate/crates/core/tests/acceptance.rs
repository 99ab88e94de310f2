//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits non-zero if any fails.

#![allow(clippy::needless_range_loop)]

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use sgfv_core::diagnostics::dissipation_slack;
use sgfv_core::kernels::bernoulli_unchecked;
use sgfv_core::mesh::{unit_square_with_x_contacts, EdgeKind};
use sgfv_core::moser::{check_prop2_records, nash_probe, prop2_slack};
use sgfv_core::poisson::{solve_poisson, PoissonOptions};
use sgfv_core::scenario::{
    export_csv, load_scenario_str, run, ExportKind, Scenario, TrajectoryStore, DIAGNOSTICS_CSV_HEADER,
    FIELDS_CSV_HEADER,
};
use sgfv_core::transport::{assemble_continuity, sg_flux, step, Carrier};
use sgfv_core::{
    build_rectangular_mesh, BoundaryKind, Physics, PotentialField, RecombinationKind, RecombinationSpec, Rect,
    SegmentRule, State, StepConfig,
};

const GOLDEN: f64 = 1.618_033_988_749_895;

const BERNOULLI_REL_TOL: f64 = 1e-14;
const BERNOULLI_IDENTITY_TOL: f64 = 1e-13;
const EQUILIBRIUM_TOL: f64 = 1e-12;
const EQUILIBRIUM_DRIFT_TOL: f64 = 1e-9;
const EQUILIBRIUM_ENTROPY_TOL: f64 = 1e-12;
const LATE_GROWTH_TOL: f64 = 1e-6;
const PEAK_WINDOW: usize = 2000;
const DENSITY_FLOOR: f64 = -1e-12;
const NASH_SPREAD: f64 = 2.0;
const FLUX_ANTISYMMETRY_TOL: f64 = 1e-13;
const POISSON_LINEAR_TOL: f64 = 1e-10;
const ORACLE_TOL: f64 = 1e-9;

fn minimal_doc(n: usize, initial: &str, steps: usize) -> String {
    format!(
        r#"
[mesh]
nx = {n}
ny = {n}

[physics]
lambda = 1.0
doping = "zero"
recombination = "none"
m_cap = 2.0

[boundary.contacts]
faces = ["x0", "x1"]
kind = "dirichlet"
n = 1.0
psi = 0.0

[boundary.insulated]
faces = ["y0", "y1"]
kind = "neumann"

[initial]
n0 = "{initial}"
p0 = "{initial}"

[time]
dt = 0.1
n_steps = {steps}

[verify]
k_max = 0
"#
    )
}

fn pn_doc(steps: usize, k_max: usize) -> String {
    format!(
        r#"
[mesh]
nx = 32
ny = 32

[physics]
lambda = 1.0
doping = "pn(x_split=0.5, c_plus=1, c_minus=-1)"
recombination = "srh(tau_n=1, tau_p=1)"
m_cap = {GOLDEN:?}

[boundary.left]
faces = ["x0"]
kind = "dirichlet"
n = {GOLDEN:?}

[boundary.right]
faces = ["x1"]
kind = "dirichlet"
n = {inv:?}

[boundary.insulated]
faces = ["y0", "y1"]
kind = "neumann"

[initial]
n0 = "constant(1)"
p0 = "constant(1)"

[time]
dt = 0.1
n_steps = {steps}
snapshot_stride = 10

[verify]
k_max = {k_max}
nash_samples = 200
seed = 42
"#,
        inv = 1.0 / GOLDEN
    )
}

struct Runs {
    pn1000: Option<(TrajectoryStore, Duration)>,
    pn10000: Option<(TrajectoryStore, Duration)>,
}

impl Runs {
    fn pn1000(&mut self) -> &(TrajectoryStore, Duration) {
        self.pn1000.get_or_insert_with(|| timed_run(&pn_doc(1000, 0)))
    }

    fn pn10000(&mut self) -> &(TrajectoryStore, Duration) {
        self.pn10000.get_or_insert_with(|| timed_run(&pn_doc(10_000, 4)))
    }
}

fn timed_run(doc: &str) -> (TrajectoryStore, Duration) {
    let scenario = load_scenario_str(doc).expect("scenario is valid");
    let t = Instant::now();
    let store = run(&scenario).expect("run starts");
    (store, t.elapsed())
}

fn within(elapsed: Duration, limit_s: f64, what: &str) -> Result<(), String> {
    if elapsed.as_secs_f64() < limit_s {
        Ok(())
    } else {
        Err(format!("{what} took {:.1} s, limit {limit_s} s", elapsed.as_secs_f64()))
    }
}

type Outcome = Result<String, String>;
type Criterion = Box<dyn FnMut(&mut Runs) -> Outcome>;

fn bernoulli_kernel() -> Outcome {
    let t = Instant::now();
    let text = include_str!("data/bernoulli_reference.csv");
    let mut worst: f64 = 0.0;
    let mut count = 0;
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    for row in rd.records() {
        let row = row.map_err(|e| e.to_string())?;
        let x: f64 = row[0].parse().map_err(|e| format!("{e}"))?;
        let exact: f64 = row[1].parse().map_err(|e| format!("{e}"))?;
        let rel = ((bernoulli_unchecked(x) - exact) / exact).abs();
        worst = worst.max(rel);
        count += 1;
    }
    if count != 400 {
        return Err(format!("reference table has {count} rows"));
    }
    if worst > BERNOULLI_REL_TOL {
        return Err(format!("max relative error {worst:e}"));
    }
    if bernoulli_unchecked(0.0) != 1.0 {
        return Err("B(0) != 1".into());
    }
    let mut worst_id: f64 = 0.0;
    for i in 0..=2000 {
        let x = -700.0 + 0.7 * i as f64;
        let d = (bernoulli_unchecked(-x) - bernoulli_unchecked(x) - x).abs() / x.abs().max(1.0);
        worst_id = worst_id.max(d);
    }
    if worst_id > BERNOULLI_IDENTITY_TOL {
        return Err(format!("identity error {worst_id:e}"));
    }
    within(t.elapsed(), 1.0, "kernel check")?;
    Ok(format!(
        "max rel err {worst:.2e} over {count} points, identity err {worst_id:.2e}"
    ))
}

fn equilibrium_fixed_point() -> Outcome {
    let t = Instant::now();
    let scenario = load_scenario_str(&minimal_doc(32, "equilibrium", 50)).map_err(|e| e.to_string())?;
    let problem = scenario.prepare().map_err(|e| e.to_string())?;
    let eq = &problem.equilibrium;
    let dev = eq
        .psi_star
        .cells
        .iter()
        .map(|v| v.abs())
        .chain(eq.n_star.iter().chain(&eq.p_star).map(|v| (v - 1.0).abs()))
        .fold(0.0, f64::max);
    if dev > EQUILIBRIUM_TOL {
        return Err(format!("equilibrium deviates by {dev:e}"));
    }
    let store = run(&scenario).map_err(|e| e.to_string())?;
    if !store.complete || store.records.len() != 51 {
        return Err(format!("run incomplete: {:?}", store.failure));
    }
    let first = &store.snapshots[0];
    let drift = store.snapshots.iter().map(|s| s.distance(first)).fold(0.0, f64::max);
    let entropy = store.records.iter().map(|r| r.entropy).fold(0.0, f64::max);
    if drift > EQUILIBRIUM_DRIFT_TOL {
        return Err(format!("drift {drift:e}"));
    }
    if entropy > EQUILIBRIUM_ENTROPY_TOL {
        return Err(format!("entropy {entropy:e}"));
    }
    within(t.elapsed(), 5.0, "equilibrium run")?;
    Ok(format!(
        "deviation {dev:.1e}, drift {drift:.1e}, max entropy {entropy:.1e}"
    ))
}

fn entropy_dissipation(runs: &mut Runs) -> Outcome {
    let (store, elapsed) = runs.pn1000();
    if !store.complete || store.records.len() != 1001 {
        return Err(format!(
            "run incomplete after {} records: {:?}",
            store.records.len(),
            store.failure
        ));
    }
    let tol = store.scenario.solver.gummel_tol;
    let cells = store.mesh.cell_count();
    let mut worst_ratio = f64::NEG_INFINITY;
    for w in store.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        let res = b.entropy + b.dt_used * b.production - a.entropy;
        let slack = dissipation_slack(tol, a.state_scale.max(b.state_scale), cells);
        worst_ratio = worst_ratio.max(res / slack);
        if res > slack {
            return Err(format!("step {}: residual {res:e} > slack {slack:e}", b.time_index));
        }
        if b.entropy < 0.0 {
            return Err(format!("step {}: entropy {}", b.time_index, b.entropy));
        }
    }
    within(*elapsed, 120.0, "1000-step run")?;
    Ok(format!(
        "1000 steps, max residual/slack {worst_ratio:.2e}, E: {:.4e} -> {:.4e}, {:.1} s",
        store.records[0].entropy,
        store.records.last().unwrap().entropy,
        elapsed.as_secs_f64()
    ))
}

fn uniform_bound(runs: &mut Runs) -> Outcome {
    let (store, elapsed) = runs.pn10000();
    if !store.complete || store.records.len() != 10_001 {
        return Err(format!(
            "run incomplete after {} records: {:?}",
            store.records.len(),
            store.failure
        ));
    }
    let sampled: Vec<_> = store.records.iter().filter(|r| r.time_index % 10 == 0).collect();
    let peak = |early: bool| {
        sampled
            .iter()
            .filter(|r| (r.time_index <= PEAK_WINDOW) == early)
            .map(|r| r.linf_n.max(r.linf_p))
            .fold(f64::NEG_INFINITY, f64::max)
    };
    let (early, late) = (peak(true), peak(false));
    if late > early + LATE_GROWTH_TOL {
        return Err(format!("late sup {late} exceeds early sup {early}"));
    }
    let min_density = store
        .records
        .iter()
        .map(|r| r.min_density)
        .fold(f64::INFINITY, f64::min);
    if min_density < DENSITY_FLOOR {
        return Err(format!("density {min_density:e}"));
    }
    within(*elapsed, 900.0, "10000-step run")?;
    Ok(format!(
        "sup up to n=2000: {early:.12}, after: {late:.12}, min density {min_density:.4}, {:.1} s",
        elapsed.as_secs_f64()
    ))
}

fn moment_inequality(runs: &mut Runs) -> Outcome {
    let (store, _) = runs.pn1000();
    let t = Instant::now();
    let tol = store.scenario.solver.gummel_tol;
    let omega = store.mesh.domain_measure();
    let mut worst = f64::NEG_INFINITY;
    let mut checks = 0;
    for w in store.records.windows(2) {
        let (a, b) = (&w[0], &w[1]);
        for q in [1.0, 2.0, 4.0, 8.0] {
            let res = check_prop2_records(a, b, q, store.mu, store.nu, omega).map_err(|e| e.to_string())?;
            let slack = prop2_slack(tol, b.linf_n.max(b.linf_p), q);
            worst = worst.max(res);
            checks += 1;
            if res > slack {
                return Err(format!(
                    "step {} q {q}: residual {res:e} > slack {slack:e}",
                    b.time_index
                ));
            }
        }
    }
    within(t.elapsed(), 10.0, "moment check")?;
    Ok(format!(
        "{checks} checks, mu {:.4}, nu {:.4}, max residual {worst:.4e}",
        store.mu, store.nu
    ))
}

fn nash_probe_refinement() -> Outcome {
    let t = Instant::now();
    let mut maxima = Vec::new();
    for n in [8, 16, 32] {
        let mesh = unit_square_with_x_contacts(n).map_err(|e| e.to_string())?;
        let res = nash_probe(&mesh, 200, 42).map_err(|e| e.to_string())?;
        if res.ratios.len() != 200 || res.ratios.iter().any(|r| !r.is_finite()) {
            return Err(format!("{n}x{n}: non-finite or missing ratios"));
        }
        maxima.push(res.empirical_constant);
    }
    let hi = maxima.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = maxima.iter().cloned().fold(f64::INFINITY, f64::min);
    if hi / lo >= NASH_SPREAD {
        return Err(format!("max ratios {maxima:?} spread by {:.3}", hi / lo));
    }
    within(t.elapsed(), 10.0, "Nash probe")?;
    Ok(format!("max ratios 8/16/32: {maxima:.4?}, spread {:.3}", hi / lo))
}

fn moser_cascade(runs: &mut Runs) -> Outcome {
    let (store, _) = runs.pn10000();
    let t = Instant::now();
    let report = store.moser_report(4, None).map_err(|e| e.to_string())?;
    let c = &report.constants;
    let mut problems = Vec::new();
    for row in &report.levels {
        let measured = row.sup_measured.max(f64::MIN_POSITIVE).ln();
        if row.sup_measured > 0.0 && measured > row.log_bound_closed {
            problems.push(format!("level {} above closed-form bound", row.k));
        }
        if !row.delta_growth_ok {
            problems.push(format!("delta_{} growth", row.k));
        }
    }
    if !report.a_condition_ok {
        problems.push("A condition".into());
    }
    if !(c.kappa >= report.sup_nm && c.kappa >= report.sup_pm) || !report.kappa_ok {
        problems.push("kappa does not dominate".into());
    }
    if !report.passed() {
        problems.extend(report.failures.iter().cloned());
    }
    within(t.elapsed(), 30.0, "Moser report")?;
    if !problems.is_empty() {
        return Err(problems.join("; "));
    }
    Ok(format!(
        "gamma {:.4}, A {:.4}, D {:.4}, kappa {:.4e}, sup (N-M)+ {:.2e}, sup (P-M)+ {:.2e}",
        c.gamma, c.a_const, c.d_const, c.kappa, report.sup_nm, report.sup_pm
    ))
}

/// Newton solve of the three scalar equations of one cell with four
/// Dirichlet edges of transmissibility 2 and unit measure.
fn scalar_oracle(
    prev: (f64, f64),
    bd: (f64, f64, f64),
    lambda: f64,
    c: f64,
    spec: &RecombinationSpec,
    dt: f64,
) -> [f64; 3] {
    let b = |x: f64| if x == 0.0 { 1.0 } else { x / x.exp_m1() };
    let (nd, pd, psid) = bd;
    let f = |v: [f64; 3]| -> [f64; 3] {
        let [n, p, psi] = v;
        let d = psid - psi;
        let r = spec.prefactor(n, p) * (n * p - 1.0);
        [
            (n - prev.0) / dt + 8.0 * (b(-d) * n - b(d) * nd) + r,
            (p - prev.1) / dt + 8.0 * (b(d) * p - b(-d) * pd) + r,
            8.0 * lambda * lambda * (psi - psid) - (p - n + c),
        ]
    };
    let mut v = [prev.0, prev.1, psid];
    for _ in 0..100 {
        let r = f(v);
        let mut j = [[0.0; 3]; 3];
        for col in 0..3 {
            let h = 1e-6 * v[col].abs().max(1.0);
            let (mut up, mut dn) = (v, v);
            up[col] += h;
            dn[col] -= h;
            let (rp, rm) = (f(up), f(dn));
            for row in 0..3 {
                j[row][col] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        // Gaussian elimination with partial pivoting on the augmented system.
        let mut m = [[0.0; 4]; 3];
        for i in 0..3 {
            m[i][..3].copy_from_slice(&j[i]);
            m[i][3] = -r[i];
        }
        for col in 0..3 {
            let piv = (col..3)
                .max_by(|&a, &b| m[a][col].abs().total_cmp(&m[b][col].abs()))
                .unwrap();
            m.swap(col, piv);
            for row in col + 1..3 {
                let f = m[row][col] / m[col][col];
                for k in col..4 {
                    m[row][k] -= f * m[col][k];
                }
            }
        }
        let mut delta = [0.0; 3];
        for i in (0..3).rev() {
            let s: f64 = (i + 1..3).map(|k| m[i][k] * delta[k]).sum();
            delta[i] = (m[i][3] - s) / m[i][i];
        }
        for i in 0..3 {
            v[i] += delta[i];
        }
        if delta.iter().all(|d| d.abs() < 1e-15) {
            break;
        }
    }
    v
}

fn structural_checks(runs: &mut Runs) -> Outcome {
    let (store, _) = runs.pn1000();
    let scenario = &store.scenario;
    let problem = scenario.prepare().map_err(|e| e.to_string())?;
    let mesh = &problem.mesh;

    // One accepted step from a randomly chosen stored state.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let snap = &store.snapshots[rng.random_range(0..store.snapshots.len())];
    let out = step(snap, mesh, &problem.physics, &problem.step).map_err(|e| e.to_string())?;
    let s = &out.state;
    let mut worst: f64 = 0.0;
    for (e, edge) in mesh.edges().iter().enumerate() {
        if let EdgeKind::Interior { k, l } = edge.kind {
            let d_kl = s.psi.diff(mesh, e, k);
            let d_lk = s.psi.diff(mesh, e, l);
            for (u, carrier) in [(&s.n_cells, Carrier::Electron), (&s.p_cells, Carrier::Hole)] {
                let f_kl = sg_flux(edge.tau, d_kl, u[k], u[l], carrier);
                let f_lk = sg_flux(edge.tau, d_lk, u[l], u[k], carrier);
                worst = worst.max((f_kl + f_lk).abs());
            }
        }
    }
    if worst > FLUX_ANTISYMMETRY_TOL {
        return Err(format!("flux antisymmetry {worst:e}"));
    }

    let r0: Vec<f64> = (0..mesh.cell_count())
        .map(|k| problem.physics.recombination.prefactor(s.n_cells[k], s.p_cells[k]))
        .collect();
    for (carrier, prev, dir, partner) in [
        (Carrier::Electron, &snap.n_cells, &s.n_dirichlet, &s.p_cells),
        (Carrier::Hole, &snap.p_cells, &s.p_dirichlet, &s.n_cells),
    ] {
        let (a, _) = assemble_continuity(mesh, &s.psi, prev, dir, out.dt_used, &r0, partner, carrier);
        if !a.has_m_matrix_sign_pattern() {
            return Err(format!("{carrier:?} matrix is not an M-matrix pattern"));
        }
    }

    let lin_mesh = unit_square_with_x_contacts(16).map_err(|e| e.to_string())?;
    let psid: Vec<f64> = lin_mesh
        .dirichlet_edges()
        .iter()
        .map(|&e| lin_mesh.edges()[e].midpoint.unwrap()[0])
        .collect();
    let psi =
        solve_poisson(&lin_mesh, 1.0, &vec![0.0; 256], &psid, &PoissonOptions::default()).map_err(|e| e.to_string())?;
    let lin_err = lin_mesh
        .cells()
        .iter()
        .zip(&psi.cells)
        .map(|(c, v)| (v - c.center[0]).abs())
        .fold(0.0, f64::max);
    if lin_err > POISSON_LINEAR_TOL {
        return Err(format!("linear Poisson error {lin_err:e}"));
    }

    let one = build_rectangular_mesh(1, 1, Rect::unit())
        .and_then(|m| m.boundary_partition(&[SegmentRule::new("all", &[], BoundaryKind::Dirichlet)]))
        .map_err(|e| e.to_string())?;
    let mut oracle_err: f64 = 0.0;
    for (kind, c, dt) in [
        (RecombinationKind::None, 0.3, 0.5),
        (RecombinationKind::Srh { tau_n: 1.0, tau_p: 2.0 }, -0.8, 0.1),
        (RecombinationKind::Auger { c_n: 0.5, c_p: 0.2 }, 1.5, 1.0),
    ] {
        let spec = RecombinationSpec::new(kind).map_err(|e| e.to_string())?;
        let physics = Physics {
            lambda: 0.8,
            doping: vec![c],
            recombination: spec,
        };
        let nd = 1.7f64;
        let prev = State {
            n_cells: vec![0.4],
            p_cells: vec![2.5],
            psi: PotentialField::new(vec![0.0], vec![nd.ln(); 4]),
            n_dirichlet: vec![nd; 4],
            p_dirichlet: vec![1.0 / nd; 4],
            time_index: 0,
        };
        let cfg = StepConfig {
            dt,
            ..StepConfig::default()
        };
        let got = step(&prev, &one, &physics, &cfg).map_err(|e| e.to_string())?.state;
        let want = scalar_oracle((0.4, 2.5), (nd, 1.0 / nd, nd.ln()), 0.8, c, &spec, dt);
        for (g, w) in [got.n_cells[0], got.p_cells[0], got.psi.cells[0]].iter().zip(want) {
            oracle_err = oracle_err.max((g - w).abs());
        }
    }
    if oracle_err > ORACLE_TOL {
        return Err(format!("single-cell oracle mismatch {oracle_err:e}"));
    }
    Ok(format!(
        "step from n={}: antisymmetry {worst:.1e}, linear Poisson {lin_err:.1e}, oracle {oracle_err:.1e}",
        snap.time_index
    ))
}

fn exports(store: &TrajectoryStore) -> Vec<Vec<u8>> {
    let last = store.snapshots.last().unwrap().time_index;
    let mut kinds = vec![ExportKind::Diagnostics, ExportKind::Fields(0), ExportKind::Fields(last)];
    if store.moser.is_some() {
        kinds.push(ExportKind::Moser);
    }
    kinds
        .into_iter()
        .map(|k| {
            let mut buf = Vec::new();
            export_csv(store, k, &mut buf).unwrap();
            buf
        })
        .collect()
}

fn determinism_and_formats() -> Outcome {
    let mut compared = 0;
    for doc in [minimal_doc(16, "constant(1)", 100), pn_doc(100, 4)] {
        let scenario: Scenario = load_scenario_str(&doc).map_err(|e| e.to_string())?;
        let a = exports(&run(&scenario).map_err(|e| e.to_string())?);
        let b = exports(&run(&scenario).map_err(|e| e.to_string())?);
        if a != b {
            return Err("exports differ between identical runs".into());
        }
        compared += a.len();
        let header = |buf: &[u8]| String::from_utf8_lossy(buf).lines().next().unwrap_or("").to_string();
        let mut diag: Vec<String> = DIAGNOSTICS_CSV_HEADER.iter().map(|s| s.to_string()).collect();
        diag.extend(["v_1", "v_2", "v_3", "v_5", "v_9", "v_17"].map(String::from));
        if header(&a[0]) != diag.join(",") {
            return Err(format!("diagnostics header {}", header(&a[0])));
        }
        if header(&a[1]) != FIELDS_CSV_HEADER.join(",") || header(&a[1]) != "cell_id,x,y,N,P,Psi" {
            return Err(format!("fields header {}", header(&a[1])));
        }
        if a.len() == 4
            && header(&a[3]) != "k,zeta_k,eps_k,delta_k,sup_W_measured,bound_inductive,bound_closed_form,pass"
        {
            return Err(format!("moser header {}", header(&a[3])));
        }
    }
    if DIAGNOSTICS_CSV_HEADER.join(",") != "step,time,dt,entropy,production,gamma,linf_n,linf_p,dissipation_residual" {
        return Err("diagnostics column contract".into());
    }
    Ok(format!(
        "{compared} exports byte-identical across repeated runs, headers exact"
    ))
}

fn main() {
    let mut runs = Runs {
        pn1000: None,
        pn10000: None,
    };
    let criteria: Vec<(&str, Criterion)> = vec![
        ("Bernoulli kernel accuracy", Box::new(|_| bernoulli_kernel())),
        ("equilibrium fixed point", Box::new(|_| equilibrium_fixed_point())),
        ("entropy dissipation, 1000-step PN run", Box::new(entropy_dissipation)),
        ("uniform L-infinity bound, 10000-step PN run", Box::new(uniform_bound)),
        ("moment inequality q = 1, 2, 4, 8", Box::new(moment_inequality)),
        ("discrete Nash ratio refinement", Box::new(|_| nash_probe_refinement())),
        ("Moser cascade, k_max = 4", Box::new(moser_cascade)),
        ("structural solver checks", Box::new(structural_checks)),
        ("determinism and CSV formats", Box::new(|_| determinism_and_formats())),
    ];
    let mut failed = 0;
    for (i, (name, mut f)) in criteria.into_iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(|| f(&mut runs))).unwrap_or_else(|p| {
            Err(p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panic".into()))
        });
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("criterion {}: PASS  {name} ({secs:.2} s): {detail}", i + 1),
            Err(detail) => {
                failed += 1;
                println!("criterion {}: FAIL  {name} ({secs:.2} s): {detail}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", 9 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

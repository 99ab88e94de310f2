//! Running a scenario into a trajectory store, re-checking it offline, and
//! exporting CSV.

use std::io::Write;

use serde::{Deserialize, Serialize};

use super::{Problem, Scenario};
use crate::diagnostics::{
    a_priori_gamma, dissipation_residual, dissipation_slack, record, DiagnosticsRecord, QResidual, RecordContext,
};
use crate::error::{Error, Result};
use crate::format::fmt_f64;
use crate::mesh::Mesh;
use crate::moser::{
    build_moser_report, check_prop2_records, derive_mu_nu, nash_probe, prop2_slack, ConstantInputs, MoserConstants,
    MoserReport, NashProbeResult,
};
use crate::poisson::EquilibriumState;
use crate::transport::{State, Stepper};

pub const STORE_FORMAT: &str = "sgfv-trajectory 1";

pub const DIAGNOSTICS_CSV_HEADER: [&str; 9] = [
    "step",
    "time",
    "dt",
    "entropy",
    "production",
    "gamma",
    "linf_n",
    "linf_p",
    "dissipation_residual",
];

pub const FIELDS_CSV_HEADER: [&str; 6] = ["cell_id", "x", "y", "N", "P", "Psi"];

/// Everything a run produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryStore {
    pub format: String,
    pub scenario_hash: String,
    pub scenario: Scenario,
    pub mesh: Mesh,
    pub equilibrium: EquilibriumState,
    /// Moment powers carried by every record.
    pub powers: Vec<f64>,
    pub mu: f64,
    pub nu: f64,
    pub gamma_a_priori: f64,
    pub records: Vec<DiagnosticsRecord>,
    /// Full states every `snapshot_stride` steps, plus the last state.
    pub snapshots: Vec<State>,
    pub complete: bool,
    pub failure: Option<String>,
    pub nash: Option<NashProbeResult>,
    pub moser: Option<MoserReport>,
}

impl TrajectoryStore {
    fn new(scenario: &Scenario, problem: &Problem, mu: f64, nu: f64) -> Self {
        Self {
            format: STORE_FORMAT.to_string(),
            scenario_hash: scenario.hash(),
            scenario: scenario.clone(),
            mesh: problem.mesh.clone(),
            equilibrium: problem.equilibrium.clone(),
            powers: scenario.recorded_powers(),
            mu,
            nu,
            gamma_a_priori: 1.0,
            records: Vec::new(),
            snapshots: Vec::new(),
            complete: false,
            failure: None,
            nash: None,
            moser: None,
        }
    }

    /// Appends a record, which must continue the time index sequence.
    pub fn push_record(&mut self, rec: DiagnosticsRecord) -> Result<()> {
        if let Some(last) = self.records.last() {
            if rec.time_index != last.time_index + 1 {
                return Err(Error::Precondition(format!(
                    "record {} does not follow {}",
                    rec.time_index, last.time_index
                )));
            }
        }
        self.records.push(rec);
        Ok(())
    }

    /// Checks the stored hash against the stored scenario.
    pub fn check_hash(&self) -> Result<()> {
        if self.scenario.hash() == self.scenario_hash {
            Ok(())
        } else {
            Err(Error::Precondition(
                "scenario hash does not match the stored scenario".into(),
            ))
        }
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        let f = std::io::BufWriter::new(std::fs::File::create(path)?);
        serde_json::to_writer(f, self)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let f = std::io::BufReader::new(std::fs::File::open(path)?);
        let store: Self = serde_json::from_reader(f)?;
        if store.format != STORE_FORMAT {
            return Err(Error::invalid(format!("unsupported store format '{}'", store.format)));
        }
        store.check_hash()?;
        Ok(store)
    }

    pub fn snapshot(&self, step: usize) -> Option<&State> {
        self.snapshots.iter().find(|s| s.time_index == step)
    }

    /// Derives the Moser constants from the stored records and a Nash probe.
    pub fn moser_constants(&self, k_max: usize, nash: &NashProbeResult) -> Result<MoserConstants> {
        let p = &self.scenario.physics;
        let norm_c = self.problem_doping_norm();
        let gamma = self.records.iter().map(|r| r.gamma).fold(1.0, f64::min);
        let sup_w0 = self
            .records
            .iter()
            .map(|r| r.moment(1.0).map(|m| m.v))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| Error::invalid("records lack V_1"))?
            .into_iter()
            .fold(0.0, f64::max);
        MoserConstants::derive(&ConstantInputs {
            norm_c,
            lambda: p.lambda,
            m_cap: p.m_cap,
            rbar: p.recombination.rbar,
            gamma,
            nash_empirical: nash.empirical_constant,
            domain_measure: self.mesh.domain_measure(),
            sup_w0,
            k_max,
        })
    }

    fn problem_doping_norm(&self) -> f64 {
        self.mesh
            .cells()
            .iter()
            .map(|c| self.scenario.physics.doping.value(c.center[0]).abs())
            .fold(0.0, f64::max)
    }

    /// Cascade report for `k_max` levels, probing the Nash constant with the
    /// stored probe when one exists and `seed` does not override it.
    pub fn moser_report(&self, k_max: usize, seed: Option<u64>) -> Result<MoserReport> {
        let probe = match (&self.nash, seed) {
            (Some(n), None) => n.clone(),
            _ => nash_probe(
                &self.mesh,
                self.scenario.verify.nash_samples.max(1),
                seed.unwrap_or(self.scenario.verify.seed),
            )?,
        };
        let constants = self.moser_constants(k_max, &probe)?;
        build_moser_report(
            &self.records,
            &constants,
            self.scenario.physics.m_cap,
            self.mesh.domain_measure(),
        )
    }
}

/// Runs a scenario. A step that fails after all retries ends the run and
/// leaves the store flagged incomplete.
pub fn run(scenario: &Scenario) -> Result<TrajectoryStore> {
    run_with_progress(scenario, |_| {})
}

pub fn run_with_progress(scenario: &Scenario, mut progress: impl FnMut(&DiagnosticsRecord)) -> Result<TrajectoryStore> {
    let problem = scenario.prepare()?;
    let norm_c = problem.physics.doping.iter().fold(0.0f64, |m, c| m.max(c.abs()));
    let (mu, nu) = derive_mu_nu(
        norm_c,
        problem.physics.lambda,
        problem.m_cap,
        problem.physics.recombination.rbar,
    )?;
    let mut store = TrajectoryStore::new(scenario, &problem, mu, nu);
    let powers = store.powers.clone();
    let ctx = RecordContext {
        mesh: &problem.mesh,
        eq: &problem.equilibrium,
        lambda: problem.physics.lambda,
        recombination: &problem.physics.recombination,
        m_cap: problem.m_cap,
        powers: &powers,
    };
    let omega = problem.mesh.domain_measure();
    let stride = scenario.time.snapshot_stride.max(1);

    let mut state = problem.initial.clone();
    let rec0 = record(&ctx, &state, 0.0, 0.0, 0.0)?;
    store.gamma_a_priori = a_priori_gamma(
        rec0.entropy,
        &problem.equilibrium,
        &problem.mesh,
        problem.physics.lambda,
    );
    progress(&rec0);
    store.push_record(rec0)?;
    store.snapshots.push(state.clone());

    let mut stepper = Stepper::new(&problem.mesh, &problem.physics)?;
    let mut time = 0.0;
    for _ in 0..scenario.time.n_steps {
        let out = match stepper.step(&state, &problem.step) {
            Ok(o) => o,
            Err(e) => {
                store.failure = Some(e.to_string());
                break;
            }
        };
        time += out.dt_used;
        let mut rec = record(&ctx, &out.state, time, out.dt_used, out.residual)?;
        let prev = store.records.last().expect("initial record");
        rec.dissipation_residual = Some(dissipation_residual(prev, &rec)?);
        rec.prop2 = scenario
            .verify
            .prop2_q
            .iter()
            .map(|&q| {
                Ok(QResidual {
                    q,
                    residual: check_prop2_records(prev, &rec, q, mu, nu, omega)?,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        progress(&rec);
        store.push_record(rec)?;
        state = out.state;
        if state.time_index % stride == 0 {
            store.snapshots.push(state.clone());
        }
    }
    if store.snapshots.last().map(|s| s.time_index) != Some(state.time_index) {
        store.snapshots.push(state);
    }
    store.complete = store.failure.is_none();

    if scenario.verify.k_max > 0 && scenario.verify.nash_samples > 0 {
        let probe = nash_probe(&problem.mesh, scenario.verify.nash_samples, scenario.verify.seed)?;
        let constants = store.moser_constants(scenario.verify.k_max, &probe)?;
        store.moser = Some(build_moser_report(&store.records, &constants, problem.m_cap, omega)?);
        store.nash = Some(probe);
    }
    Ok(store)
}

/// Offline re-check of a stored trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationSummary {
    pub steps: usize,
    pub complete: bool,
    pub tol: f64,
    /// Largest `residual / slack` of the dissipation inequality.
    pub max_dissipation_ratio: f64,
    pub max_dissipation_residual: f64,
    pub dissipation_failures: Vec<usize>,
    pub negative_entropy: Vec<usize>,
    /// Largest `residual / slack` of the moment inequality over all checked `q`.
    pub max_prop2_ratio: f64,
    pub prop2_failures: Vec<(usize, f64)>,
    pub min_density: f64,
    pub negative_density: Vec<usize>,
}

impl VerificationSummary {
    pub fn passed(&self) -> bool {
        self.complete
            && self.dissipation_failures.is_empty()
            && self.negative_entropy.is_empty()
            && self.prop2_failures.is_empty()
            && self.negative_density.is_empty()
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let line = |s: &mut String, name: &str, ok: bool, detail: String| {
            s.push_str(&format!(
                "{:<28} {:<4} {}\n",
                name,
                if ok { "ok" } else { "FAIL" },
                detail
            ));
        };
        line(&mut s, "run complete", self.complete, format!("{} steps", self.steps));
        line(
            &mut s,
            "entropy dissipation",
            self.dissipation_failures.is_empty(),
            format!(
                "max residual {} (max residual/slack {})",
                fmt_f64(self.max_dissipation_residual),
                fmt_f64(self.max_dissipation_ratio)
            ),
        );
        line(
            &mut s,
            "entropy nonnegative",
            self.negative_entropy.is_empty(),
            format!("{} violations", self.negative_entropy.len()),
        );
        line(
            &mut s,
            "moment inequality",
            self.prop2_failures.is_empty(),
            format!("max residual/slack {}", fmt_f64(self.max_prop2_ratio)),
        );
        line(
            &mut s,
            "densities nonnegative",
            self.negative_density.is_empty(),
            format!("min density {}", fmt_f64(self.min_density)),
        );
        s.push_str(if self.passed() {
            "RESULT: PASS\n"
        } else {
            "RESULT: FAIL\n"
        });
        s
    }
}

/// Recomputes the dissipation and moment-inequality residuals from the
/// records. `tol` defaults to the scenario's outer solver tolerance.
pub fn verify_store(store: &TrajectoryStore, tol: Option<f64>) -> Result<VerificationSummary> {
    let tol = tol.unwrap_or(store.scenario.solver.gummel_tol);
    let cells = store.mesh.cell_count();
    let omega = store.mesh.domain_measure();
    let mut v = VerificationSummary {
        steps: store.records.len().saturating_sub(1),
        complete: store.complete,
        tol,
        max_dissipation_ratio: f64::NEG_INFINITY,
        max_dissipation_residual: f64::NEG_INFINITY,
        dissipation_failures: vec![],
        negative_entropy: vec![],
        max_prop2_ratio: f64::NEG_INFINITY,
        prop2_failures: vec![],
        min_density: f64::INFINITY,
        negative_density: vec![],
    };
    for r in &store.records {
        v.min_density = v.min_density.min(r.min_density);
        if r.min_density < 0.0 {
            v.negative_density.push(r.time_index);
        }
    }
    for w in store.records.windows(2) {
        let (prev, next) = (&w[0], &w[1]);
        let res = dissipation_residual(prev, next)?;
        let slack = dissipation_slack(tol, prev.state_scale.max(next.state_scale), cells);
        v.max_dissipation_residual = v.max_dissipation_residual.max(res);
        v.max_dissipation_ratio = v.max_dissipation_ratio.max(res / slack);
        if res > slack {
            v.dissipation_failures.push(next.time_index);
        }
        if next.entropy < -slack || next.entropy + next.dt_used * next.production < -slack {
            v.negative_entropy.push(next.time_index);
        }
        let max_density = next.linf_n.max(next.linf_p);
        for &q in &store.scenario.verify.prop2_q {
            let res = check_prop2_records(prev, next, q, store.mu, store.nu, omega)?;
            let slack = prop2_slack(tol, max_density, q);
            v.max_prop2_ratio = v.max_prop2_ratio.max(res / slack);
            if res > slack {
                v.prop2_failures.push((next.time_index, q));
            }
        }
    }
    Ok(v)
}

/// What [`export_csv`] writes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportKind {
    Diagnostics,
    Fields(usize),
    Moser,
}

/// Writes `cell_id, x, y, N, P, Psi` rows.
pub fn fields_csv<W: Write>(mesh: &Mesh, n: &[f64], p: &[f64], psi: &[f64], w: W) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(FIELDS_CSV_HEADER)?;
    for (k, c) in mesh.cells().iter().enumerate() {
        out.write_record([
            k.to_string(),
            fmt_f64(c.center[0]),
            fmt_f64(c.center[1]),
            fmt_f64(n[k]),
            fmt_f64(p[k]),
            fmt_f64(psi[k]),
        ])?;
    }
    out.flush()?;
    Ok(())
}

fn v_column(q: f64) -> String {
    format!("v_{}", fmt_f64(q))
}

pub fn export_csv<W: Write>(store: &TrajectoryStore, which: ExportKind, w: W) -> Result<()> {
    match which {
        ExportKind::Diagnostics => {
            let mut out = csv::Writer::from_writer(w);
            let q_list = &store.scenario.verify.q_list;
            let mut header: Vec<String> = DIAGNOSTICS_CSV_HEADER.iter().map(|s| s.to_string()).collect();
            header.extend(q_list.iter().map(|&q| v_column(q)));
            out.write_record(&header)?;
            for r in &store.records {
                let mut row = vec![
                    r.time_index.to_string(),
                    fmt_f64(r.time),
                    fmt_f64(r.dt_used),
                    fmt_f64(r.entropy),
                    fmt_f64(r.production),
                    fmt_f64(r.gamma),
                    fmt_f64(r.linf_n),
                    fmt_f64(r.linf_p),
                    r.dissipation_residual.map(fmt_f64).unwrap_or_default(),
                ];
                for &q in q_list {
                    let m = r
                        .moment(q)
                        .ok_or_else(|| Error::invalid(format!("record {} lacks V_{q}", r.time_index)))?;
                    row.push(fmt_f64(m.v));
                }
                out.write_record(&row)?;
            }
            out.flush()?;
            Ok(())
        }
        ExportKind::Fields(step) => {
            let s = store.snapshot(step).ok_or_else(|| {
                let steps: Vec<String> = store.snapshots.iter().map(|s| s.time_index.to_string()).collect();
                Error::invalid(format!(
                    "no stored fields for step {step}; stored steps: {}",
                    if steps.len() > 12 {
                        format!("{} ... {}", steps[..6].join(", "), steps[steps.len() - 3..].join(", "))
                    } else {
                        steps.join(", ")
                    }
                ))
            })?;
            fields_csv(&store.mesh, &s.n_cells, &s.p_cells, &s.psi.cells, w)
        }
        ExportKind::Moser => store
            .moser
            .as_ref()
            .ok_or_else(|| Error::invalid("store has no Moser report (k_max = 0 or no Nash samples)"))?
            .write_csv(w),
    }
}

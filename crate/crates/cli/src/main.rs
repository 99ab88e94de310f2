use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use sgfv_core::format::fmt_f64;
use sgfv_core::mesh::file::read_mesh;
use sgfv_core::moser::nash_probe;
use sgfv_core::scenario::{
    export_csv, fields_csv, load_scenario, run_with_progress, verify_store, ExportKind, Scenario, TrajectoryStore,
};
use sgfv_core::{Error, Mesh};

const EXIT_VERIFY: u8 = 2;
const EXIT_NONCONVERGENCE: u8 = 3;
const EXIT_INVALID: u8 = 4;

#[derive(Parser)]
#[command(
    name = "sgfv",
    version,
    about = "Scharfetter-Gummel drift-diffusion solver with entropy and L-infinity checks"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write store.json, diagnostics.csv and moser.csv.
    Run {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        /// Overrides the solver tolerances.
        #[arg(long)]
        tol: Option<f64>,
        /// Overrides the Nash probe seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Print one line per step.
        #[arg(long)]
        progress: bool,
    },
    /// Solve the thermal equilibrium and write equilibrium.csv.
    Equilibrium {
        scenario: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Re-check the dissipation and moment inequalities of a stored run.
    Verify {
        store: PathBuf,
        /// Tolerance used to scale the slacks; defaults to the run's solver tolerance.
        #[arg(long)]
        tol: Option<f64>,
    },
    /// Sample the discrete Nash ratio on a scenario's mesh or a mesh file.
    NashProbe {
        input: PathBuf,
        #[arg(long, default_value_t = 200)]
        samples: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        /// Write the individual ratios to DIR/nash.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print the Moser cascade table of a stored run.
    MoserReport {
        store: PathBuf,
        #[arg(long, default_value_t = 4)]
        kmax: usize,
        /// Re-probe the Nash constant with this seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Write DIR/moser.csv.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Export CSV from a stored run.
    Export {
        store: PathBuf,
        #[arg(long, value_enum)]
        what: What,
        /// Time index for --what fields.
        #[arg(long)]
        step: Option<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum What {
    Diagnostics,
    Fields,
    Moser,
}

/// Exit status plus message for a failed command.
struct Failure {
    code: u8,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::NonConvergence { .. } | Error::StepFailure { .. } | Error::Solver { .. } => EXIT_NONCONVERGENCE,
            Error::Verification(_) => EXIT_VERIFY,
            _ => EXIT_INVALID,
        };
        Failure {
            code,
            msg: e.to_string(),
        }
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Error::from(e).into()
    }
}

fn fail(code: u8, msg: impl Into<String>) -> Failure {
    Failure { code, msg: msg.into() }
}

type CmdResult = std::result::Result<(), Failure>;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.msg);
            ExitCode::from(f.code)
        }
    }
}

fn dispatch(cmd: Command) -> CmdResult {
    match cmd {
        Command::Run {
            scenario,
            out,
            tol,
            seed,
            progress,
        } => cmd_run(&scenario, &out, tol, seed, progress),
        Command::Equilibrium { scenario, out, tol } => cmd_equilibrium(&scenario, &out, tol),
        Command::Verify { store, tol } => cmd_verify(&store, tol),
        Command::NashProbe {
            input,
            samples,
            seed,
            out,
        } => cmd_nash(&input, samples, seed, out.as_deref()),
        Command::MoserReport { store, kmax, seed, out } => cmd_moser(&store, kmax, seed, out.as_deref()),
        Command::Export { store, what, step, out } => cmd_export(&store, what, step, out.as_deref()),
    }
}

fn load(path: &Path, tol: Option<f64>) -> Result<Scenario, Failure> {
    let s = load_scenario(path)?;
    Ok(match tol {
        Some(t) => s.with_tolerance(t)?,
        None => s,
    })
}

fn create(dir: &Path, name: &str) -> Result<BufWriter<File>, Failure> {
    std::fs::create_dir_all(dir)?;
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

fn cmd_run(path: &Path, out: &Path, tol: Option<f64>, seed: Option<u64>, progress: bool) -> CmdResult {
    let mut scenario = load(path, tol)?;
    if let Some(s) = seed {
        scenario.verify.seed = s;
    }
    let store = run_with_progress(&scenario, |r| {
        if progress {
            eprintln!(
                "step {:>6}  t = {:<10} E = {:<24} I = {}",
                r.time_index,
                fmt_f64(r.time),
                fmt_f64(r.entropy),
                fmt_f64(r.production)
            );
        }
    })?;
    std::fs::create_dir_all(out)?;
    store.save(out.join("store.json"))?;
    export_csv(&store, ExportKind::Diagnostics, create(out, "diagnostics.csv")?)?;
    if store.moser.is_some() {
        export_csv(&store, ExportKind::Moser, create(out, "moser.csv")?)?;
    }
    println!("scenario {}", store.scenario_hash);
    println!("wrote {}", out.display());
    let summary = verify_store(&store, None)?;
    print!("{}", summary.to_text());
    if let Some(m) = &store.moser {
        print!("{}", m.to_text());
    }
    if let Some(f) = &store.failure {
        return Err(fail(EXIT_NONCONVERGENCE, format!("run stopped early: {f}")));
    }
    if !summary.passed() || store.moser.as_ref().is_some_and(|m| !m.passed()) {
        return Err(fail(EXIT_VERIFY, "verification failed"));
    }
    Ok(())
}

fn cmd_equilibrium(path: &Path, out: &Path, tol: Option<f64>) -> CmdResult {
    let problem = load(path, tol)?.prepare()?;
    let eq = &problem.equilibrium;
    fields_csv(
        &problem.mesh,
        &eq.n_star,
        &eq.p_star,
        &eq.psi_star.cells,
        create(out, "equilibrium.csv")?,
    )?;
    println!("alpha = {}", fmt_f64(eq.alpha));
    println!("wrote {}", out.join("equilibrium.csv").display());
    Ok(())
}

fn load_store(path: &Path) -> Result<TrajectoryStore, Failure> {
    Ok(TrajectoryStore::load(path)?)
}

fn cmd_verify(path: &Path, tol: Option<f64>) -> CmdResult {
    let store = load_store(path)?;
    let summary = verify_store(&store, tol)?;
    print!("{}", summary.to_text());
    if !store.complete {
        return Err(fail(
            EXIT_NONCONVERGENCE,
            format!(
                "stored run is incomplete: {}",
                store.failure.as_deref().unwrap_or("unknown reason")
            ),
        ));
    }
    if !summary.passed() {
        return Err(fail(EXIT_VERIFY, "verification failed"));
    }
    Ok(())
}

fn probe_mesh(input: &Path) -> Result<Mesh, Failure> {
    if input.extension().is_some_and(|e| e == "toml") {
        return Ok(load_scenario(input)?.build_mesh()?);
    }
    let text = std::fs::read_to_string(input)?;
    Ok(read_mesh(&text)?.assign_dirichlet_segment(0)?)
}

fn cmd_nash(input: &Path, samples: usize, seed: u64, out: Option<&Path>) -> CmdResult {
    if samples == 0 {
        return Err(fail(EXIT_INVALID, "--samples must be positive"));
    }
    let mesh = probe_mesh(input)?;
    let res = nash_probe(&mesh, samples, seed)?;
    let mut sorted = res.ratios.clone();
    sorted.sort_by(f64::total_cmp);
    println!("mesh      {}", res.mesh_id);
    println!("samples   {}", res.samples);
    println!("seed      {seed}");
    println!("min       {}", fmt_f64(sorted[0]));
    println!("median    {}", fmt_f64(sorted[sorted.len() / 2]));
    println!("max       {}", fmt_f64(res.empirical_constant));
    if let Some(dir) = out {
        let mut w = create(dir, "nash.csv")?;
        writeln!(w, "sample,ratio")?;
        for (i, r) in res.ratios.iter().enumerate() {
            writeln!(w, "{i},{}", fmt_f64(*r))?;
        }
        w.flush()?;
    }
    if res.ratios.iter().any(|r| !r.is_finite()) {
        return Err(fail(EXIT_VERIFY, "non-finite Nash ratio"));
    }
    Ok(())
}

fn cmd_moser(path: &Path, kmax: usize, seed: Option<u64>, out: Option<&Path>) -> CmdResult {
    let store = load_store(path)?;
    let report = store.moser_report(kmax, seed)?;
    print!("{}", report.to_text());
    if let Some(dir) = out {
        report.write_csv(create(dir, "moser.csv")?)?;
    }
    if !report.passed() {
        return Err(fail(EXIT_VERIFY, "Moser cascade check failed"));
    }
    Ok(())
}

fn cmd_export(path: &Path, what: What, step: Option<usize>, out: Option<&Path>) -> CmdResult {
    let store = load_store(path)?;
    let kind = match (what, step) {
        (What::Diagnostics, None) => ExportKind::Diagnostics,
        (What::Moser, None) => ExportKind::Moser,
        (What::Fields, Some(s)) => ExportKind::Fields(s),
        (What::Fields, None) => return Err(fail(EXIT_INVALID, "--what fields needs --step")),
        (_, Some(_)) => return Err(fail(EXIT_INVALID, "--step only applies to --what fields")),
    };
    match out {
        Some(p) => {
            let mut w = BufWriter::new(File::create(p)?);
            export_csv(&store, kind, &mut w)?;
            w.flush()?;
        }
        None => export_csv(&store, kind, io::stdout().lock())?,
    }
    Ok(())
}

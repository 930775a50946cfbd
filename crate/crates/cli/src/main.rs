//! `dhn-turnpike`: runs the district heating turnpike pipeline on a scenario
//! file and writes CSV/JSON artifacts.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use turnpike_core::output;
use turnpike_core::pipeline::{self, RunResult, TurnpikeAnalysis};
use turnpike_core::scenario::Scenario;
use turnpike_core::Error;

#[derive(Debug, Parser)]
#[command(name = "dhn-turnpike", version, about = "Exact time-varying turnpikes of district heating networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Scenario file (JSON).
    #[arg(long, global = true)]
    scenario: Option<PathBuf>,

    /// Output directory; defaults to the scenario's `outputs.directory`,
    /// then `out/<scenario name>`.
    #[arg(long, global = true, env = "DHN_TURNPIKE_OUT")]
    out: Option<PathBuf>,

    /// Worker threads for the run matrix (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Overrides `numerics.seed`.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
enum Command {
    /// Emit A, B, E and the Hurwitz certificate.
    Model,
    /// Pencil regularity, Weierstraß form and the turnpike CSV.
    Turnpike,
    /// Solve the run matrix and write one CSV per run.
    Solve,
    /// Turnpike report: refinement study, exactness, PMP arcs.
    Report,
    /// Dissipativity audit.
    Audit,
    /// Every stage.
    All,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Validation { .. } | Error::Io(_) => 2,
        _ => 3,
    }
}

fn run(cli: &Cli) -> Result<(), Error> {
    let path = cli
        .scenario
        .as_deref()
        .ok_or_else(|| Error::Validation {
            path: "--scenario".into(),
            message: "a scenario file is required".into(),
        })?;
    let mut sc = Scenario::load(path)?;
    if let Some(seed) = cli.seed {
        sc.numerics.seed = seed;
    }
    let out = output_dir(cli, &sc);
    if let Some(k) = cli.threads {
        // only fails if a global pool already exists, which is fine
        let _ = rayon::ThreadPoolBuilder::new().num_threads(k.max(1)).build_global();
    }
    let seed = sc.numerics.seed;
    let cmd = cli.command;

    let model = pipeline::model_report(&sc)?;
    if matches!(cmd, Command::Model | Command::All) {
        output::write(&out, "model.json", &output::to_json(&model)?)?;
        print_model(&model);
        if cmd == Command::Model {
            return Ok(());
        }
    }

    let analysis = pipeline::analyze_turnpike(&sc, seed)?;
    if matches!(cmd, Command::Turnpike | Command::All) {
        output::write(&out, "turnpike.csv", &output::turnpike_csv(&analysis))?;
        output::write(&out, "turnpike.json", &output::to_json(&analysis.summary)?)?;
        print_turnpike(&analysis);
        if cmd == Command::Turnpike {
            return Ok(());
        }
    }

    let specs = pipeline::run_matrix(&sc);
    let refine = !matches!(cmd, Command::Solve);
    let started = Instant::now();
    let runs = pipeline::solve_runs(&sc, &analysis.turnpike, &specs, seed, refine)?;
    println!("solved {} runs in {:.1} s", runs.len(), started.elapsed().as_secs_f64());
    if matches!(cmd, Command::Solve | Command::All) {
        write_runs(&out, &runs)?;
    }
    if cmd == Command::Solve {
        return Ok(());
    }

    let report = pipeline::turnpike_report(&sc, &analysis, &runs)?;
    if matches!(cmd, Command::Report | Command::All) {
        output::write(&out, "report.json", &output::to_json(&report)?)?;
        for r in &runs {
            output::write(&out, &format!("deviation_{}.csv", r.spec.label), &output::deviation_csv(r))?;
        }
        print_report(&report);
    }
    if matches!(cmd, Command::Audit | Command::All) {
        let audit = pipeline::storage_audit(&sc, &analysis, report.epsilon_num, seed)?;
        output::write(&out, "audit.json", &output::to_json(&audit)?)?;
        print_audit(&audit);
    }
    println!("artifacts in {}", out.display());
    Ok(())
}

fn output_dir(cli: &Cli, sc: &Scenario) -> PathBuf {
    cli.out
        .clone()
        .or_else(|| sc.outputs.directory.clone())
        .unwrap_or_else(|| Path::new("out").join(&sc.name))
}

fn write_runs(out: &Path, runs: &[RunResult]) -> Result<(), Error> {
    for r in runs {
        output::write(out, &format!("run_{}.csv", r.spec.label), &output::run_csv(r))?;
    }
    Ok(())
}

fn print_matrix(name: &str, rows: &[Vec<f64>]) {
    let body: Vec<String> = rows
        .iter()
        .map(|r| format!("[{}]", r.iter().map(|v| format!("{v}")).collect::<Vec<_>>().join(",")))
        .collect();
    println!("{name} = [{}]", body.join(","));
}

fn print_model(m: &pipeline::ModelReport) {
    print_matrix("A", &m.a);
    print_matrix("B", &m.b);
    print_matrix("E", &m.e);
    let c = &m.certificate;
    println!(
        "gershgorin margin {} spectral abscissa {:e} k {} decay rate {:e}",
        c.gershgorin_margin, c.spectral_abscissa, c.k, c.decay_rate
    );
}

fn print_turnpike(a: &TurnpikeAnalysis) {
    let s = &a.summary;
    println!(
        "pencil regular (ratio {:.3e}), finite part {} / infinite part {}, index {}",
        s.regularity_ratio, s.finite_dim, s.infinite_dim, s.index
    );
    println!(
        "turnpike residuals: DAE {:.2e}, switching {:.2e}, ordering agreement {:.2e}",
        s.dae_residual, s.switching_residual, s.ordering_agreement
    );
    println!("input interiority margin {:.4e}, epsilon_hat {:.4e}", s.interiority_margin, s.epsilon_hat);
}

fn print_report(r: &pipeline::TurnpikeReport) {
    println!("eps_num {:.4e} ({:.2e} relative)", r.epsilon_num, r.epsilon_num_relative);
    for v in &r.exactness.verdicts {
        println!(
            "{:>24}  {}  tube [{:.0}, {:.0}] s ({:.0}% of T)",
            v.label,
            if v.exact { "EXACT" } else { "NOT EXACT" },
            v.tube_start_s.unwrap_or(f64::NAN),
            v.tube_end_s.unwrap_or(f64::NAN),
            100.0 * v.tube_fraction
        );
    }
    println!("horizon independent: {}", r.exactness.horizon_independent);
}

fn print_audit(a: &pipeline::StorageAudit) {
    println!("alpha(s) = c s^2 with c = {:.4e} ({})", a.alpha_c, a.alpha_c_source);
    for e in &a.estimates {
        println!(
            "{:>8}  storage {:.4e}  stabilization {:.2e}  {}",
            e.x0,
            e.estimate,
            e.stabilization_ratio,
            if e.bounded { "bounded" } else { "not stabilised" }
        );
    }
    println!("storage bound nu_hat * ell_hat = {:.4e}: {}", a.nu_hat * a.ell_hat, a.bound_holds);
    let t = &a.turnpike_start;
    println!(
        "started on the turnpike (T = {:.0} s): extracted before exit {:.3e} (tolerance {:.3e}), SDI violation {:.3e} (tolerance {:.3e})",
        t.horizon_s, t.extracted_before_exit, t.tolerance, t.sdi_violation, t.sdi_tolerance
    );
}

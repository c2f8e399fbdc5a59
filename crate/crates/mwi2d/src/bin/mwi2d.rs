//! Command-line front end: primal and adjoint runs from a TOML case
//! configuration, named verification suites, mesh inspection, and the
//! finite-difference sensitivity sweep.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use mwi2d::adjoint::{AdjointProblem, AdjointState, MwiMode};
use mwi2d::config::{CaseConfig, ConfigError};
use mwi2d::io;
use mwi2d::primal::{PrimalProblem, PrimalState, Residuals, SolverError};
use mwi2d::sensitivity;
use mwi2d::verify;

/// Exit codes: 0 success, 1 runtime/other failure, 2 configuration error,
/// 3 solver divergence, 4 iteration budget exhausted without convergence.
const EXIT_CONFIG: u8 = 2;
const EXIT_DIVERGED: u8 = 3;
const EXIT_UNCONVERGED: u8 = 4;

#[derive(Parser)]
#[command(name = "mwi2d", version, about = "2D collocated finite-volume solver with momentum-weighted interpolation and its discrete adjoint")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Case configuration (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Override the outer iteration budget.
    #[arg(long)]
    max_iter: Option<usize>,
    /// Override all outer-residual tolerances.
    #[arg(long)]
    tol: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve the primal flow problem and persist the state for adjoint runs.
    RunPrimal(RunArgs),
    /// Solve the adjoint around a persisted primal state.
    RunAdjoint {
        #[command(flatten)]
        run: RunArgs,
        /// Adjoint interpolation mode (e1, e2, e3); defaults to the config.
        #[arg(long)]
        mode: Option<String>,
        /// Directory holding the persisted primal state (defaults to --out).
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
    /// Run named verification suites (all by default).
    Verify {
        /// Suite name; repeat for several.
        #[arg(long = "suite")]
        suites: Vec<String>,
        /// Write a machine-readable TOML report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Print mesh statistics and the mesh checksum for a configuration.
    MeshInfo {
        #[arg(long)]
        config: PathBuf,
    },
    /// Central-difference sensitivity sweep against the adjoint prediction.
    FdSweep {
        #[command(flatten)]
        run: RunArgs,
        /// Adjoint interpolation mode (e1, e2, e3); defaults to the config.
        #[arg(long)]
        mode: Option<String>,
        /// Comma-separated perturbation magnitudes; defaults to the config.
        #[arg(long)]
        epsilon_list: Option<String>,
        /// Directory holding the persisted primal state (defaults to --out).
        #[arg(long)]
        state_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e
                .downcast_ref::<ConfigError>()
                .map(|_| EXIT_CONFIG)
                .or_else(|| {
                    e.downcast_ref::<SolverError>().map(|s| match s {
                        SolverError::BadConfig(_) => EXIT_CONFIG,
                        SolverError::Diverged { .. } => EXIT_DIVERGED,
                        _ => 1,
                    })
                })
                .unwrap_or(1);
            ExitCode::from(code)
        }
    }
}

fn dispatch(cli: Cli) -> anyhow::Result<ExitCode> {
    match cli.command {
        Command::RunPrimal(args) => run_primal(args),
        Command::RunAdjoint { run, mode, state_dir } => run_adjoint(run, mode, state_dir),
        Command::Verify { suites, out } => run_verify(suites, out),
        Command::MeshInfo { config } => mesh_info(&config),
        Command::FdSweep { run, mode, epsilon_list, state_dir } => {
            fd_sweep(run, mode, epsilon_list, state_dir)
        }
    }
}

fn load_config(args: &RunArgs) -> anyhow::Result<(CaseConfig, String)> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut cfg = CaseConfig::parse(&text)?;
    if let Some(m) = args.max_iter {
        cfg.run.max_outer = m;
    }
    if let Some(t) = args.tol {
        cfg.run.tol_v = t;
        cfg.run.tol_p = t;
        cfg.run.tol_phi = t;
    }
    Ok((cfg, text))
}

fn parse_mode(s: &str) -> anyhow::Result<MwiMode> {
    match s.to_ascii_lowercase().as_str() {
        "e1" => Ok(MwiMode::E1),
        "e2" => Ok(MwiMode::E2),
        "e3" => Ok(MwiMode::E3),
        other => anyhow::bail!("unknown adjoint mode '{other}' (expected e1, e2, or e3)"),
    }
}

/// Derived non-dimensional numbers from the converged velocity scale, with
/// the domain height as reference length: Re = v L rho / mu and
/// Fn = v / sqrt(2 g L).
fn flow_numbers(cfg: &CaseConfig, max_velocity: f64) -> (f64, f64) {
    let length = cfg.mesh.bounds[3] - cfg.mesh.bounds[2];
    let re = max_velocity * length * cfg.fluid.rho / cfg.fluid.mu;
    let fn_ = max_velocity / (2.0 * 9.81 * length).sqrt();
    (re, fn_)
}

struct RunOutcome {
    iterations: usize,
    final_residuals: Residuals,
    converged: bool,
    history: Vec<Residuals>,
}

fn exit_status(converged: bool) -> &'static str {
    if converged {
        "converged"
    } else {
        "max-iterations"
    }
}

fn run_primal(args: RunArgs) -> anyhow::Result<ExitCode> {
    let (cfg, text) = load_config(&args)?;
    let case = cfg.build_case()?;
    std::fs::create_dir_all(&args.out)?;
    let started = io::unix_now();

    let problem = PrimalProblem::new(
        &case.mesh,
        case.cfg.clone(),
        case.bodyforce.clone(),
        case.scalar_source.clone(),
        case.boundary.clone(),
    )?;
    let mut state = PrimalState::new(&case.mesh);
    state.sync_faces(&case.mesh, case.cfg.rho, &case.boundary);
    let mut history = Vec::new();
    let (iterations, final_residuals, converged) =
        problem.run(&mut state, |_, r| history.push(r.clone()))?;
    let outcome = RunOutcome { iterations, final_residuals, converged, history };

    io::save_state(&args.out.join("state.txt"), &state, &case.mesh)?;
    io::atomic_write(
        &args.out.join("residuals.csv"),
        &io::residual_csv(&outcome.history, cfg.output.residual_stride.max(1)),
    )?;
    if cfg.output.write_fields {
        io::write_vtk(
            &args.out.join("fields.vtk"),
            &case.mesh,
            &[("pressure", &state.p), ("scalar", &state.phi)],
            &[("velocity", &state.v)],
        )?;
    }
    let max_velocity = state.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (reynolds, froude) = flow_numbers(&cfg, max_velocity);
    let manifest = io::RunManifest {
        config_checksum: io::config_checksum(&text),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: io::unix_now(),
        exit_status: exit_status(outcome.converged).to_string(),
        iterations: outcome.iterations,
        final_residuals: (&outcome.final_residuals).into(),
        max_velocity,
        reynolds,
        froude,
        first_crossing: None,
    };
    manifest.write(&args.out.join("manifest.toml"))?;
    println!(
        "primal: {} after {} iterations (|v|max = {:.4e}, Re = {:.4e}, Fn = {:.4e})",
        manifest.exit_status, outcome.iterations, max_velocity, reynolds, froude
    );
    Ok(if outcome.converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNCONVERGED)
    })
}

fn load_primal_state(
    dir: &Path,
    mesh: &mwi2d::mesh::Mesh,
) -> anyhow::Result<PrimalState> {
    let path = dir.join("state.txt");
    io::load_state(&path, mesh).map_err(|e| {
        anyhow::anyhow!("cannot load primal state from {} (run run-primal first): {e}", path.display())
    })
}

fn run_adjoint(
    args: RunArgs,
    mode: Option<String>,
    state_dir: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let (cfg, text) = load_config(&args)?;
    let case = cfg.build_case()?;
    let adj_spec = cfg
        .adjoint
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("config has no [adjoint] section".into()))?;
    let mode = match mode {
        Some(s) => parse_mode(&s)?,
        None => adj_spec.mode,
    };
    let objective = cfg.build_objective(&case.mesh)?;
    let primal = load_primal_state(state_dir.as_deref().unwrap_or(&args.out), &case.mesh)?;
    std::fs::create_dir_all(&args.out)?;
    let started = io::unix_now();

    let problem = AdjointProblem::with_sources(
        &case.mesh,
        case.cfg.clone(),
        mode,
        objective,
        cfg.adjoint_sources(),
        &primal,
        &case.boundary,
    )?;
    let mut adjoint = AdjointState::new(&case.mesh);
    let mut history = Vec::new();
    let (iterations, final_residuals, converged) =
        problem.run(&mut adjoint, |_, r| history.push(r.clone()))?;
    let crossing_history: Vec<f64> = history.iter().map(|r| r.v_total()).collect();
    let first_crossing = sensitivity::sustained_crossing(&crossing_history, 1e-8);

    io::atomic_write(
        &args.out.join("adjoint_residuals.csv"),
        &io::adjoint_residual_csv(&history, cfg.output.residual_stride.max(1)),
    )?;
    if cfg.output.write_fields {
        io::write_vtk(
            &args.out.join("adjoint_fields.vtk"),
            &case.mesh,
            &[("adjoint_pressure", &adjoint.p), ("adjoint_scalar", &adjoint.phi)],
            &[("adjoint_velocity", &adjoint.v)],
        )?;
    }
    let max_velocity = primal.v.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let (reynolds, froude) = flow_numbers(&cfg, max_velocity);
    let manifest = io::RunManifest {
        config_checksum: io::config_checksum(&text),
        version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix: started,
        finished_unix: io::unix_now(),
        exit_status: exit_status(converged).to_string(),
        iterations,
        final_residuals: (&final_residuals).into(),
        max_velocity,
        reynolds,
        froude,
        first_crossing,
    };
    manifest.write(&args.out.join("adjoint_manifest.toml"))?;
    println!(
        "adjoint ({mode:?}): {} after {} iterations (momentum residual first sustained below 1e-8 at {:?})",
        manifest.exit_status, iterations, first_crossing
    );
    Ok(if converged {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_UNCONVERGED)
    })
}

fn run_verify(suites: Vec<String>, out: Option<PathBuf>) -> anyhow::Result<ExitCode> {
    let names: Vec<String> = if suites.is_empty() {
        verify::SUITES.iter().map(|s| s.to_string()).collect()
    } else {
        suites
    };
    let mut reports = Vec::new();
    let mut all_passed = true;
    for name in &names {
        let report = verify::run_suite(name)
            .ok_or_else(|| anyhow::anyhow!("unknown suite '{name}' (known: {})", verify::SUITES.join(", ")))?;
        print!("{}", report.render());
        all_passed &= report.passed;
        reports.push(report);
    }
    if let Some(path) = out {
        #[derive(serde::Serialize)]
        struct VerifyReport {
            suites: Vec<verify::SuiteReport>,
        }
        let text = toml::to_string_pretty(&VerifyReport { suites: reports })?;
        io::atomic_write(&path, &text)?;
    }
    Ok(if all_passed { ExitCode::SUCCESS } else { ExitCode::FAILURE })
}

fn mesh_info(config: &Path) -> anyhow::Result<ExitCode> {
    let cfg = CaseConfig::load(config)?;
    let mesh = cfg.build_mesh()?;
    let (vol_min, vol_max) = mesh
        .cells
        .iter()
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), c| (lo.min(c.volume), hi.max(c.volume)));
    let n_boundary = mesh.faces.iter().filter(|f| !f.is_interior()).count();
    // Worst-case angle between the face normal and the owner-neighbor line.
    let mut worst_nonortho_deg = 0.0f64;
    for f in &mesh.faces {
        if f.is_interior() {
            let cosine = f.area.dot(f.d) / (f.area.norm() * f.d.norm());
            worst_nonortho_deg = worst_nonortho_deg.max(cosine.clamp(-1.0, 1.0).acos().to_degrees());
        }
    }
    println!("cells: {}", mesh.n_cells());
    println!("faces: {} ({} boundary)", mesh.n_faces(), n_boundary);
    println!("patches: {}", mesh.patches.iter().map(|p| p.name.as_str()).collect::<Vec<_>>().join(", "));
    println!("cell volume: min {vol_min:e}, max {vol_max:e}");
    println!("max non-orthogonality: {worst_nonortho_deg:.2} deg");
    println!("mesh checksum: {}", io::mesh_checksum(&mesh));
    Ok(ExitCode::SUCCESS)
}

fn fd_sweep(
    args: RunArgs,
    mode: Option<String>,
    epsilon_list: Option<String>,
    state_dir: Option<PathBuf>,
) -> anyhow::Result<ExitCode> {
    let (cfg, _) = load_config(&args)?;
    let case = cfg.build_case()?;
    let adj_spec = cfg
        .adjoint
        .as_ref()
        .ok_or_else(|| ConfigError::Invalid("config has no [adjoint] section".into()))?;
    let mode = match mode {
        Some(s) => parse_mode(&s)?,
        None => adj_spec.mode,
    };
    let epsilons: Vec<f64> = match epsilon_list {
        Some(list) => list
            .split(',')
            .map(|s| s.trim().parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| ConfigError::Invalid(format!("bad --epsilon-list entry: {e}")))?,
        None => adj_spec.epsilons.clone(),
    };
    if epsilons.is_empty() {
        return Err(ConfigError::Invalid("epsilon list is empty".into()).into());
    }
    let objective = cfg.build_objective(&case.mesh)?;
    let direction = cfg.control_direction(&case.mesh)?;
    let primal = load_primal_state(state_dir.as_deref().unwrap_or(&args.out), &case.mesh)?;
    std::fs::create_dir_all(&args.out)?;

    let problem = AdjointProblem::with_sources(
        &case.mesh,
        case.cfg.clone(),
        mode,
        objective.clone(),
        cfg.adjoint_sources(),
        &primal,
        &case.boundary,
    )?;
    let mut adjoint = AdjointState::new(&case.mesh);
    problem.run(&mut adjoint, |_, _| {})?;
    let adjoint_value = sensitivity::volumetric_sensitivity(&adjoint, &direction, &case.mesh)?;
    let probes = sensitivity::fd_sweep(
        &case.mesh,
        &case.cfg,
        &case.bodyforce,
        &case.scalar_source,
        &case.boundary,
        &objective,
        &direction,
        &primal,
        &epsilons,
    )?;
    let report = sensitivity::SensitivityReport::new("control-region", adjoint_value, probes);
    io::atomic_write(&args.out.join("sensitivity.csv"), &io::sensitivity_csv(&[report.clone()]))?;
    println!(
        "adjoint = {:e}; max FD deviation = {:.3e}, linearity spread = {:.3e}",
        report.adjoint_value, report.max_deviation, report.linearity_spread
    );
    for p in &report.probes {
        println!("  epsilon {:e}: fd = {:e}", p.epsilon, p.derivative);
    }
    Ok(ExitCode::SUCCESS)
}

//! `safe-mpc`: terminal-ingredient synthesis, closed-loop simulation and
//! artifact verification.

mod checks;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use safe_mpc::ocp::OcpError;
use safe_mpc::sim::{run_scenario, write_outputs, RunOptions, Scenario, ScenarioFile, SimError};
use safe_mpc::terminal::{
    synthesize, synthesize_linear, verify_ingredients, Certificate, LinearSystemConfig, TerminalConfig, TerminalError,
    TerminalIngredients,
};
use serde::Serialize;

#[derive(Parser)]
#[command(name = "safe-mpc", version, about = "Safe MPC for occluded pedestrian crossings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthesize terminal gains, costs and invariant sets and write them as JSON.
    TerminalIngredients(IngredientsArgs),
    /// Run a scenario in closed loop and write the trace, summary and plot data.
    Simulate(SimulateArgs),
    /// Re-check every certificate of an ingredient artifact plus the solver self-checks.
    Verify(VerifyArgs),
}

#[derive(Args)]
struct IngredientsArgs {
    /// Synthesis configuration (JSON); vehicle defaults when absent.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Treat the configuration as a generic single-input linear system.
    #[arg(long)]
    linear: bool,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    /// Precomputed ingredient artifact; synthesized on the fly when absent.
    #[arg(long)]
    ingredients: Option<PathBuf>,
    #[arg(long)]
    no_virtual_pedestrians: bool,
    #[arg(long)]
    steering_limit: bool,
    #[arg(long)]
    horizon_n: Option<usize>,
    #[arg(long)]
    horizon_m: Option<usize>,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    ingredients: PathBuf,
    /// Allowed negative eigenvalue slack in the cost-decrease certificates.
    #[arg(long, default_value_t = 1e-7)]
    decrease_tol: f64,
    /// Skip the QP and LP self-checks.
    #[arg(long)]
    skip_solver_checks: bool,
    /// Also write the report to this file.
    #[arg(long)]
    out: Option<PathBuf>,
}

/// Failure classes mapped to exit codes.
enum Failure {
    Validation(String),
    Runtime(String),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Runtime(_) => 3,
        }
    }

    fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Runtime(m) => m,
        }
    }
}

impl From<SimError> for Failure {
    fn from(e: SimError) -> Self {
        match e {
            SimError::InvalidScenario(_)
            | SimError::Json(_)
            | SimError::Model(_)
            | SimError::Pedestrian(_)
            | SimError::Reference(_)
            | SimError::Ocp(OcpError::BadDimensions(_)) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

impl From<TerminalError> for Failure {
    fn from(e: TerminalError) -> Self {
        match e {
            TerminalError::InvalidConfig(_) | TerminalError::Model(_) => Failure::Validation(e.to_string()),
            _ => Failure::Runtime(e.to_string()),
        }
    }
}

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn parse<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    serde_json::from_str(&read(path)?).map_err(|e| Failure::Validation(format!("{}: {e}", path.display())))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Failure::Runtime(e.to_string()))?;
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Failure::Runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn report_certificates(certs: &[Certificate]) -> bool {
    for c in certs {
        eprintln!("  [{}] {:<34} margin {:+.3e}", if c.passed { " ok " } else { "FAIL" }, c.name, c.margin);
    }
    certs.iter().all(|c| c.passed)
}

fn terminal_ingredients(args: &IngredientsArgs) -> Result<(), Failure> {
    let certs = if args.linear {
        let path = args.config.as_deref().ok_or(Failure::Validation("--linear needs --config".into()))?;
        let cfg: LinearSystemConfig = parse(path)?;
        let ing = synthesize_linear(&cfg)?;
        write_json(&args.out, &ing)?;
        ing.certificates
    } else {
        let cfg: TerminalConfig = match &args.config {
            Some(p) => parse(p)?,
            None => TerminalConfig::default(),
        };
        let ing = synthesize(&cfg)?;
        write_json(&args.out, &ing)?;
        eprintln!("K_lon = {:.4?}", ing.k_lon);
        eprintln!("P_lon = {:.2?}", ing.p_lon);
        eprintln!("K_lat = {:.4?}", ing.k_lat);
        ing.certificates
    };
    eprintln!("wrote {}", args.out.display());
    if report_certificates(&certs) {
        Ok(())
    } else {
        Err(Failure::Validation("certificate failure".into()))
    }
}

fn simulate(args: &SimulateArgs) -> Result<(), Failure> {
    let mut file: ScenarioFile = parse(&args.scenario)?;
    if args.no_virtual_pedestrians {
        file.controller.virtual_pedestrians = false;
    }
    if args.steering_limit {
        file.controller.steering_limit = true;
    }
    if let Some(n) = args.horizon_n {
        file.controller.ocp.horizon_n = n;
    }
    if let Some(m) = args.horizon_m {
        file.controller.ocp.horizon_m = m;
    }
    let sc = Scenario::from_file(file)?;
    let ingredients = match &args.ingredients {
        Some(p) => {
            let ing: TerminalIngredients = parse(p)?;
            let certs = verify_ingredients(&ing, 1e-7)?;
            if !certs.iter().all(|c| c.passed) {
                report_certificates(&certs);
                return Err(Failure::Validation(format!("{}: certificate failure", p.display())));
            }
            Some(ing)
        }
        None => None,
    };
    let out = run_scenario(&sc, &RunOptions { seed: args.seed, ingredients })?;
    write_outputs(&args.out, &sc, &out)?;
    let text = serde_json::to_string_pretty(&out.summary).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    Ok(())
}

#[derive(Serialize)]
struct VerifyReport {
    passed: bool,
    certificates: Vec<Certificate>,
    solver_checks: Vec<Certificate>,
}

fn verify(args: &VerifyArgs) -> Result<(), Failure> {
    let ing: TerminalIngredients = parse(&args.ingredients)?;
    let certificates = verify_ingredients(&ing, args.decrease_tol)?;
    let solver_checks = if args.skip_solver_checks { Vec::new() } else { checks::solver_checks() };
    let passed = certificates.iter().chain(&solver_checks).all(|c| c.passed);
    let report = VerifyReport { passed, certificates, solver_checks };
    let text = serde_json::to_string_pretty(&report).map_err(|e| Failure::Runtime(e.to_string()))?;
    println!("{text}");
    if let Some(p) = &args.out {
        write_json(p, &report)?;
    }
    if passed {
        Ok(())
    } else {
        Err(Failure::Validation("certificate failure".into()))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::TerminalIngredients(a) => terminal_ingredients(a),
        Command::Simulate(a) => simulate(a),
        Command::Verify(a) => verify(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message());
            ExitCode::from(f.code())
        }
    }
}

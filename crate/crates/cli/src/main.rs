use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use rbslip::bounds::{bound_report, log_log_slope, BoundaryInputs, ProofCase};
use rbslip::config::{parse_config, RunConfig};
use rbslip::geometry::{boundary_frames_split, check_condition_ec, check_condition_theorem2, Theorem2Variant};
use rbslip::run::{report_from_run_dir, run, RunOutcome};
use rbslip::scaling::{curvature_scaling, nondimensionalize, ratio_for_target_exponent, DimensionalSetup};
use rbslip::verify::{all_pass, run_suite, table, Suite};

#[derive(Parser)]
#[command(name = "rbslip", version, about = "Rayleigh-Benard DNS with Navier-slip rough walls and bound evaluation")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a simulation from a config file.
    Simulate(SimulateArgs),
    /// Run a verification suite and print a pass/fail table.
    Verify {
        /// geometry, mms or balances
        suite: String,
    },
    /// Evaluate the Nusselt bounds for a run directory or explicit norms.
    Bounds(BoundsArgs),
    /// Nondimensional numbers and curvature scaling ratios.
    Scaling(ScalingArgs),
    /// Boundary norms and curvature conditions of a configured geometry.
    GeometryReport {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    config: PathBuf,
    /// Output directory (overrides output.directory).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Checkpoint to resume from.
    #[arg(long)]
    resume: Option<PathBuf>,
    /// Parameter sweep `KEY=v1,v2,...` over a dotted config key.
    #[arg(long)]
    sweep: Option<String>,
}

#[derive(Args)]
struct BoundsArgs {
    /// Completed run directory.
    #[arg(long, conflicts_with = "ra")]
    run: Option<PathBuf>,
    #[arg(long)]
    ra: Option<f64>,
    #[arg(long, default_value_t = 10.0)]
    pr: f64,
    #[arg(long, default_value_t = 1.0)]
    alpha: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa_inf: f64,
    #[arg(long, default_value_t = 0.0)]
    alpha_dot_inf: f64,
    #[arg(long, default_value_t = 0.0)]
    kappa_dot_inf: f64,
    #[arg(long, default_value_t = 0.0)]
    height_range: f64,
    /// Largest arc-length factor `sqrt(1 + h'^2)` used in the conditions.
    #[arg(long, default_value_t = 1.0)]
    s_max: f64,
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    #[arg(long, default_value_t = 1.0)]
    c_bar: f64,
    #[arg(long, default_value_t = 1.0)]
    u0_norm: f64,
    /// Comma-separated proof cases (default: all).
    #[arg(long)]
    cases: Option<String>,
    #[arg(long)]
    delta: Option<f64>,
    /// Measured Nusselt number to compare against.
    #[arg(long)]
    nu: Option<f64>,
    /// Also write the CSV rows to this file.
    #[arg(long)]
    csv: Option<PathBuf>,
}

#[derive(Args)]
struct ScalingArgs {
    #[arg(long, default_value_t = 1.0)]
    height: f64,
    #[arg(long, default_value_t = 1.0)]
    temp_gap: f64,
    #[arg(long, default_value_t = 1.0)]
    viscosity: f64,
    #[arg(long, default_value_t = 1.0)]
    diffusivity: f64,
    #[arg(long, default_value_t = 1.0)]
    expansion: f64,
    #[arg(long, default_value_t = 1.0)]
    gravity: f64,
    /// Target exponent of the curvature norm in Ra.
    #[arg(long)]
    rho: Option<f64>,
    /// Temperature-gap ratio of the second setup.
    #[arg(long, default_value_t = 1.0)]
    temp_ratio: f64,
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate(a) => simulate(a),
        Command::Verify { suite } => {
            let suite: Suite = suite.parse()?;
            let checks = run_suite(suite)?;
            print!("{}", table(&checks));
            Ok(all_pass(&checks))
        }
        Command::Bounds(a) => bounds(a),
        Command::Scaling(a) => scaling(a),
        Command::GeometryReport { config } => geometry_report(&config),
    }
}

fn load_config(path: &Path) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    parse_config(&text).with_context(|| format!("in {}", path.display()))
}

fn print_outcome(dir: &Path, out: &RunOutcome) {
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let a = &out.averages;
    println!("output = {}", dir.display());
    println!("steps = {}", out.steps);
    println!("window = [{}, {}] ({} samples)", a.t_start, a.t_end, a.n_samples);
    println!("nu_flux = {:.10}", a.nu_flux);
    println!("nu_gradsq = {:.10}", a.nu_gradsq);
    println!("energy_residual = {:.3e}", a.energy_residual);
    println!("enstrophy_residual = {:.3e}", a.enstrophy_residual);
    print!("{}", out.report.to_text());
}

fn simulate(a: SimulateArgs) -> Result<bool> {
    let config = load_config(&a.config)?;
    let base = a.output.unwrap_or_else(|| PathBuf::from(&config.output.directory));
    let Some(sweep) = a.sweep else {
        let out = run(&config, Some(&base), a.resume.as_deref())?;
        print_outcome(&base, &out);
        return Ok(true);
    };
    if a.resume.is_some() {
        bail!("--resume cannot be combined with --sweep");
    }
    let (key, values) = sweep.split_once('=').context("--sweep expects KEY=v1,v2,...")?;
    let values: Vec<&str> = values.split(',').map(str::trim).filter(|v| !v.is_empty()).collect();
    if values.is_empty() {
        bail!("--sweep {key}: no values given");
    }
    let mut points = Vec::new();
    for v in &values {
        let cfg = config.with_override(key, v)?;
        let dir = base.join(format!("{key}={v}"));
        let out = run(&cfg, Some(&dir), None).with_context(|| format!("sweep point {key} = {v}"))?;
        println!("{key} = {v}  nu_flux = {:.10}  output = {}", out.averages.nu_flux, dir.display());
        points.push((cfg.physical.ra, out.averages.nu_flux));
    }
    if key == "physical.ra" && points.len() >= 2 {
        let (ra, nu): (Vec<f64>, Vec<f64>) = points.into_iter().unzip();
        println!("log-log slope d log Nu / d log Ra = {:.6}", log_log_slope(&ra, &nu)?);
    }
    Ok(true)
}

fn bounds(a: BoundsArgs) -> Result<bool> {
    let report = if let Some(dir) = &a.run {
        let (_, _, report) = report_from_run_dir(dir)?;
        report
    } else {
        let Some(ra) = a.ra else {
            bail!("bounds needs either --run DIR or --ra with explicit norms");
        };
        let bi = BoundaryInputs::from_norms(a.alpha, a.kappa_inf, a.alpha_dot_inf, a.kappa_dot_inf, a.height_range, a.s_max)?;
        let cases: Vec<ProofCase> = match &a.cases {
            Some(s) => s.split(',').map(|c| c.trim().parse()).collect::<rbslip::Result<_>>()?,
            None => ProofCase::ALL.to_vec(),
        };
        bound_report(ra, a.pr, &bi, a.c, a.c_bar, a.u0_norm, &cases, a.delta, a.nu, None)?
    };
    print!("{}", report.to_text());
    if let Some(path) = &a.csv {
        let f = std::fs::File::create(path).with_context(|| format!("creating {}", path.display()))?;
        report.write_csv(f, true)?;
    }
    Ok(true)
}

fn scaling(a: ScalingArgs) -> Result<bool> {
    let s1 = DimensionalSetup {
        height_gap: a.height,
        temp_gap: a.temp_gap,
        viscosity: a.viscosity,
        thermal_diffusivity: a.diffusivity,
        expansion_coeff: a.expansion,
        gravity: a.gravity,
        density_ref: 1.0,
    };
    let (ra, pr) = nondimensionalize(&s1)?;
    println!("ra = {ra:?}");
    println!("pr = {pr:?}");
    if let Some(rho) = a.rho {
        let h = ratio_for_target_exponent(rho, a.temp_ratio)?;
        let s2 = DimensionalSetup { height_gap: a.height * h, temp_gap: a.temp_gap * a.temp_ratio, ..s1 };
        let c = curvature_scaling(&s1, &s2)?;
        println!("rho = {rho:?}");
        println!("temp_ratio = {:?}", a.temp_ratio);
        println!("height_ratio = {h:?}");
        println!("ra_ratio = {:?}", c.ra_ratio);
        println!("kappa_ratio_exact = {:?}", c.kappa_ratio_exact);
        println!("kappa_ratio_leading = {:?}", c.kappa_ratio_leading);
        println!("ra_ratio_pow_rho = {:?}", c.ra_ratio.powf(rho));
    }
    Ok(true)
}

fn geometry_report(path: &Path) -> Result<bool> {
    let config = load_config(path)?;
    let profile = config.profile()?;
    let b = &config.boundary;
    let (bottom, top) = boundary_frames_split(&profile, config.grid.n1, &b.alpha_bottom, &b.alpha_top)?;
    let bi = config.boundary_inputs()?;
    let n = &bi.norms;
    println!("n1 = {}", config.grid.n1);
    println!("gamma = {:?}", profile.gamma);
    println!("height_range = {:?}", bi.height_range);
    println!("alpha_min = {:?}", n.alpha_min);
    println!("kappa_inf = {:?}", n.kappa_inf);
    println!("alpha_plus_kappa_inf = {:?}", n.alpha_plus_kappa_inf);
    println!("alpha_plus_kappa_w1inf = {:?}", n.alpha_plus_kappa_w1inf);
    println!("alpha_dot_inf = {:?}", n.alpha_dot_inf);
    println!("kappa_dot_inf = {:?}", n.kappa_dot_inf);
    print!("{}", check_condition_ec(&bottom, &top)?.to_kv());
    for v in [Theorem2Variant::KappaLeqAlpha, Theorem2Variant::General] {
        print!("{}", check_condition_theorem2(&bottom, &top, v)?.condition.to_kv());
    }
    Ok(true)
}

use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;

use nhosc_core::brodygraefe::StateBasis;
use nhosc_core::gmetric::BrokenMetric;
use nhosc_core::model::OscillationParams;
use nhosc_core::oracle::{
    baseline_times, cross_validate_with, random_grid, CrossValidateOptions, IntegrationConfig,
    ValidationReport,
};
use nhosc_core::scan::{
    phase_map, phase_rows_to_csv, phase_rows_to_json, probability_scan, rows_to_csv, scan_to_json,
    Angle, Method, OutputFormat, RunConfig, ScanVariable,
};
use nhosc_core::{Error, UnitsMode};

const EXIT_FAILURE: u8 = 1;
const EXIT_USAGE: u8 = 2;

/// Two-flavor oscillation probabilities under non-Hermitian Hamiltonians.
///
/// Mass-squared inputs are in eV², energies in GeV, baselines in km. Angles
/// take decimals or π fractions such as pi/6.
#[derive(Parser, Debug)]
#[command(name = "nhosc", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Classify PT regimes over a κ–σ grid (θ = π/4, χ = 0).
    PhaseMap(ScanArgs),
    /// Probabilities over L or L/E.
    Probability(ScanArgs),
    /// Cross-validate every evaluation path on random and fixed grids.
    Validate(ValidateArgs),
}

fn parse_named<T: DeserializeOwned>(s: &str) -> Result<T, String> {
    serde_json::from_value(serde_json::Value::String(s.to_string())).map_err(|e| e.to_string())
}

#[derive(Args, Debug, Default)]
struct ScanArgs {
    /// JSON file with RunConfig fields; command-line flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// g-metric | density-analytic | density-trace | density-rk4
    #[arg(long, value_parser = parse_named::<Method>)]
    method: Option<Method>,
    /// L | LE
    #[arg(long, value_parser = parse_named::<ScanVariable>)]
    scan: Option<ScanVariable>,
    /// rounded | exact
    #[arg(long, value_parser = parse_named::<UnitsMode>)]
    units_mode: Option<UnitsMode>,
    #[arg(long)]
    out: Option<String>,
    /// csv | json
    #[arg(long, value_parser = parse_named::<OutputFormat>)]
    format: Option<OutputFormat>,
    #[arg(long)]
    energy: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    dm2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    mbar2: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<Angle>,
    #[arg(long, allow_hyphen_values = true)]
    kappa: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    phi: Option<Angle>,
    #[arg(long, allow_hyphen_values = true)]
    chi: Option<Angle>,
    #[arg(long, allow_hyphen_values = true)]
    tau: Option<Angle>,
    #[arg(long, allow_hyphen_values = true)]
    tau_p: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    alpha: Option<Angle>,
    #[arg(long, allow_hyphen_values = true)]
    beta: Option<Angle>,
    #[arg(long, allow_hyphen_values = true)]
    start: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    end: Option<f64>,
    #[arg(long)]
    samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    kappa_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    kappa_max: Option<f64>,
    #[arg(long)]
    kappa_samples: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_min: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    sigma_max: Option<f64>,
    #[arg(long)]
    sigma_samples: Option<usize>,
    /// In L/E scans, vary E at --fixed-l instead of L at E = 1 GeV.
    #[arg(long)]
    vary_energy: bool,
    #[arg(long)]
    fixed_l: Option<f64>,
    /// vacuum | canonical
    #[arg(long, value_parser = parse_named::<StateBasis>)]
    basis: Option<StateBasis>,
    /// time-dependent | static
    #[arg(long, value_parser = parse_named::<BrokenMetric>)]
    broken_metric: Option<BrokenMetric>,
    #[arg(long)]
    rk4_steps: Option<usize>,
}

macro_rules! overlay {
    ($cfg:ident, $args:ident, $($field:ident => $target:ident),* $(,)?) => {
        $(if let Some(v) = $args.$field.clone() { $cfg.$target = v; })*
    };
}

impl ScanArgs {
    fn into_config(self) -> Result<RunConfig, String> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
                serde_json::from_str::<RunConfig>(&text).map_err(|e| format!("{}: {e}", path.display()))?
            }
            None => RunConfig::default(),
        };
        overlay!(cfg, self,
            method => method, scan => scan, units_mode => units_mode, format => format,
            energy => energy, dm2 => dm2, mbar2 => mbar2, theta => theta, kappa => kappa,
            sigma => sigma, phi => phi, chi => chi, start => start, end => end,
            samples => samples, kappa_min => kappa_min, kappa_max => kappa_max,
            kappa_samples => kappa_samples, sigma_min => sigma_min, sigma_max => sigma_max,
            sigma_samples => sigma_samples, fixed_l => fixed_l_km, basis => basis,
            broken_metric => broken_metric, rk4_steps => rk4_steps_per_period,
        );
        if self.out.is_some() {
            cfg.out = self.out;
        }
        if self.tau.is_some() {
            cfg.tau = self.tau;
        }
        if self.tau_p.is_some() {
            cfg.tau_p = self.tau_p;
        }
        if self.alpha.is_some() {
            cfg.alpha = self.alpha;
        }
        if self.beta.is_some() {
            cfg.beta = self.beta;
        }
        if self.vary_energy {
            cfg.vary_energy = true;
        }
        Ok(cfg)
    }
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Random parameter draws compared by closed form and pipeline.
    #[arg(long, default_value_t = 1000)]
    points: usize,
    /// Times per draw, evenly spaced over baselines 0..=l-max.
    #[arg(long, default_value_t = 10)]
    times: usize,
    /// Draws that are additionally integrated with RK4.
    #[arg(long, default_value_t = 200)]
    rk4_points: usize,
    #[arg(long, default_value_t = 3000.0)]
    l_max: f64,
    #[arg(long, default_value_t = 20240229)]
    seed: u64,
    /// Perturb the closed-form P_ab by this amount to exercise the harness.
    #[arg(long, num_args = 0..=1, default_missing_value = "1e-3")]
    inject_fault: Option<f64>,
    /// Report path; stdout when omitted.
    #[arg(long)]
    out: Option<String>,
}

fn usage(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(EXIT_USAGE)
}

fn emit(out: &Option<String>, text: &str) -> Result<(), String> {
    match out {
        Some(path) => fs::write(path, text).map_err(|e| format!("{path}: {e}")),
        None => std::io::stdout().write_all(text.as_bytes()).map_err(|e| e.to_string()),
    }
}

fn cmd_phase_map(args: ScanArgs) -> ExitCode {
    let mut cfg = match args.into_config() {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    cfg.scan = ScanVariable::KappaSigma;
    let rows = match phase_map(&cfg) {
        Ok(r) => r,
        Err(e) => return usage(e),
    };
    let text = match cfg.format {
        OutputFormat::Csv => phase_rows_to_csv(&rows),
        OutputFormat::Json => phase_rows_to_json(&rows),
    };
    match emit(&cfg.out, &text) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_FAILURE)
        }
    }
}

fn cmd_probability(args: ScanArgs) -> ExitCode {
    let cfg = match args.into_config() {
        Ok(c) => c,
        Err(e) => return usage(e),
    };
    let out = match probability_scan(&cfg) {
        Ok(o) => o,
        Err(e) => return usage(e),
    };
    for w in &out.warnings {
        eprintln!("warning: {w}");
    }
    let text = match cfg.format {
        OutputFormat::Csv => rows_to_csv(&out.rows),
        OutputFormat::Json => scan_to_json(&out),
    };
    if let Err(e) = emit(&cfg.out, &text) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    let bad = out.rows.iter().filter(|r| !r.error.is_empty()).count();
    if bad > 0 {
        eprintln!("warning: {bad} of {} rows could not be evaluated (see the error column)", out.rows.len());
    }
    ExitCode::SUCCESS
}

/// Points on both sides of and exactly at an exceptional point.
fn exceptional_grid() -> Vec<OscillationParams> {
    let dm2 = 2.5e-21;
    [1.9, 2.0, 2.1]
        .iter()
        .map(|k| OscillationParams::pt_symmetric(1.0, dm2, k * dm2, 0.0, std::f64::consts::FRAC_PI_6))
        .collect()
}

fn run_validation(args: &ValidateArgs) -> Result<ValidationReport, Error> {
    let base = CrossValidateOptions {
        rk4: None,
        basis: StateBasis::Vacuum,
        fault: args.inject_fault,
    };
    let times = baseline_times(args.l_max, args.times);
    if args.points == 0 || args.times == 0 {
        return Err(Error::EmptyGrid);
    }
    let mut report = cross_validate_with(&random_grid(args.seed, args.points), &times, &base)?;

    let with_rk4 = CrossValidateOptions {
        rk4: Some(IntegrationConfig::default()),
        ..base
    };
    let rk4_times = baseline_times(args.l_max, args.times.min(4));
    if args.rk4_points > 0 {
        let grid = random_grid(args.seed.wrapping_add(1), args.rk4_points);
        report.merge(cross_validate_with(&grid, &rk4_times, &with_rk4)?);
    }
    report.merge(cross_validate_with(&exceptional_grid(), &rk4_times, &with_rk4)?);
    report.merge(cross_validate_with(
        &[OscillationParams::vacuum(1.0, 2.5e-21, 0.6)],
        &rk4_times,
        &with_rk4,
    )?);
    Ok(report)
}

fn cmd_validate(args: ValidateArgs) -> ExitCode {
    if !(args.l_max > 0.0 && args.l_max.is_finite()) {
        return usage("--l-max must be positive");
    }
    let report = match run_validation(&args) {
        Ok(r) => r,
        Err(e @ (Error::EmptyGrid | Error::InvalidConfig(_))) => return usage(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_FAILURE);
        }
    };
    for (name, s) in &report.pairs {
        eprintln!(
            "{} {name}: max |dev| = {:.3e} (tol {:.0e}, {} samples)",
            if s.pass { "PASS" } else { "FAIL" },
            s.max_abs_dev,
            s.tolerance,
            s.samples
        );
    }
    for f in &report.failures {
        eprintln!("FAIL {} at t = {:e}: {}", f.method, f.point.t, f.error);
    }
    eprintln!("{} skipped evaluations", report.skips.len());
    if let Err(e) = emit(&args.out, &report.to_json()) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_FAILURE);
    }
    if report.pass {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAILURE)
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::PhaseMap(a) => cmd_phase_map(a),
        Command::Probability(a) => cmd_probability(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

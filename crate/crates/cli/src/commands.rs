//! Subcommand implementations. Every failure maps to a stable exit code:
//! 1 config or validation, 2 runtime abort, 3 no usable bracket, 4 a
//! verification verdict failed.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use sovsim_core::config::Parsed;
use sovsim_core::io::{self, Format, IoError, RunManifest};
use sovsim_core::plot::{line_chart, Series};
use sovsim_core::sweeps::{
    bisect_threshold, grid_sweep, run_trajectory, Grid, SimulatedCurve, SweepError, SweepSpec,
    Workers,
};
use sovsim_core::verification::{Harness, PropertyId, VerifyError};
use sovsim_core::{ConfigError, Scenario, SimError, Strictness, ValidationError};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
    NoBracket(String),
    Unverified(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 1,
            CliError::Runtime(_) => 2,
            CliError::NoBracket(_) => 3,
            CliError::Unverified(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m)
            | CliError::Runtime(m)
            | CliError::NoBracket(m)
            | CliError::Unverified(m) => f.write_str(m),
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ValidationError> for CliError {
    fn from(e: ValidationError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<SweepError> for CliError {
    fn from(e: SweepError) -> Self {
        match e {
            SweepError::Sim(e) => e.into(),
            SweepError::NoBracket { .. } | SweepError::NonMonotone { .. } => {
                CliError::NoBracket(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<VerifyError> for CliError {
    fn from(e: VerifyError) -> Self {
        CliError::Config(e.to_string())
    }
}

struct Loaded {
    bytes: Vec<u8>,
    scenario: Scenario,
}

fn load(path: &Path, lenient: bool) -> Result<Loaded, CliError> {
    let bytes = fs::read(path)
        .map_err(|e| CliError::Config(format!("cannot read config {}: {e}", path.display())))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| CliError::Config(format!("{}: config is not UTF-8", path.display())))?;
    let strictness = if lenient {
        Strictness::Lenient
    } else {
        Strictness::Strict
    };
    let Parsed { scenario, warnings } = Scenario::parse(&text, strictness)
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    for w in warnings {
        eprintln!("sovsim: warning: {}: {w}", path.display());
    }
    Ok(Loaded { bytes, scenario })
}

fn prepare_out(dir: &Path) -> Result<(), CliError> {
    fs::create_dir_all(dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", dir.display())))
}

fn write(dir: &Path, name: &str, text: &str, manifest: &mut RunManifest) -> Result<(), CliError> {
    io::write_file(&dir.join(name), text.as_bytes())?;
    manifest.outputs.push(name.to_string());
    Ok(())
}

fn command_line() -> Vec<String> {
    std::env::args().collect()
}

pub struct RunArgs {
    pub config: PathBuf,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub out: PathBuf,
    pub format: Format,
    pub plot: bool,
    pub lenient: bool,
}

pub fn run(args: &RunArgs) -> Result<(), CliError> {
    let loaded = load(&args.config, args.lenient)?;
    let seed = args.seed.unwrap_or(loaded.scenario.system.seed);
    let steps = args.steps.unwrap_or(loaded.scenario.system.steps);
    let state = loaded.scenario.build(seed)?;
    let frames = run_trajectory(&state, steps)?;

    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new(Some(&loaded.bytes), seed, command_line());
    let name = format!("trajectory.{}", args.format.extension());
    io::write_trajectory(&frames, args.format, &args.out.join(&name))?;
    manifest.outputs.push(name);
    if args.plot {
        let series = |label, f: fn(&sovsim_core::MetricsFrame) -> f64| Series {
            label,
            points: frames.iter().map(|fr| (fr.step as f64, f(fr))).collect(),
        };
        let svg = line_chart(
            "Restricted control mass",
            "step",
            "control mass",
            &[
                series("top human", |f| f.e_c_top_human),
                series("top AI", |f| f.e_c_top_ai_restricted),
            ],
        );
        write(&args.out, "trajectory.svg", &svg, &mut manifest)?;
    }
    manifest.write(&args.out)?;
    let last = frames.last().expect("at least the initial frame");
    println!(
        "{} frames; final sovereign node {} ({})",
        frames.len(),
        last.sovereign_id,
        if last.sovereign_is_ai { "AI" } else { "human" }
    );
    Ok(())
}

pub struct VerifyArgs {
    pub props: String,
    pub trials: Option<usize>,
    pub seed: u64,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub lenient: bool,
}

fn default_trials(p: PropertyId) -> usize {
    match p {
        PropertyId::P1 => 200,
        PropertyId::T1 => 1000,
        _ => 100,
    }
}

fn parse_props(text: &str) -> Result<Vec<PropertyId>, CliError> {
    if text.trim().eq_ignore_ascii_case("all") {
        return Ok(PropertyId::ALL.to_vec());
    }
    let mut props = text
        .split(',')
        .map(|p| p.parse::<PropertyId>().map_err(CliError::Config))
        .collect::<Result<Vec<_>, _>>()?;
    props.sort();
    props.dedup();
    Ok(props)
}

pub fn verify(args: &VerifyArgs) -> Result<(), CliError> {
    let props = parse_props(&args.props)?;
    let mut harness = Harness::new(args.seed).with_workers(Workers::from_env());
    let mut config_bytes = None;
    if let Some(path) = &args.config {
        let loaded = load(path, args.lenient)?;
        harness = harness.with_scenario(loaded.scenario);
        config_bytes = Some(loaded.bytes);
    }
    let mut reports = Vec::new();
    for p in props {
        let r = harness.run(p, args.trials.unwrap_or_else(|| default_trials(p)))?;
        println!(
            "{p}: {} ({}/{} trials, {} required, witness {})",
            if r.passed() { "pass" } else { "FAIL" },
            r.passes,
            r.trials,
            r.required_passes,
            r.witness
        );
        for c in r.checks.iter().filter(|c| !c.passed) {
            println!("  failed check: {} ({})", c.name, c.detail);
        }
        reports.push(r);
    }

    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new(config_bytes.as_deref(), args.seed, command_line());
    let doc = serde_json::json!({ "reports": reports });
    let text = serde_json::to_string_pretty(&doc).expect("reports serialize") + "\n";
    write(&args.out, "report.json", &text, &mut manifest)?;
    manifest.write(&args.out)?;

    let failed: Vec<String> = reports
        .iter()
        .filter(|r| !r.passed())
        .map(|r| r.property_id.to_string())
        .collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(CliError::Unverified(format!(
            "verdict failed for {}",
            failed.join(", ")
        )))
    }
}

pub struct SweepArgs {
    pub config: PathBuf,
    pub param: String,
    pub grid: String,
    pub runs: usize,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub lenient: bool,
}

pub fn sweep(args: &SweepArgs) -> Result<(), CliError> {
    let grid = Grid::parse(&args.grid)?;
    let loaded = load(&args.config, args.lenient)?;
    let spec = SweepSpec {
        parameter_path: args.param.clone(),
        grid,
        runs_per_point: args.runs,
        horizon: args.steps.unwrap_or(loaded.scenario.system.steps),
        base_seed: args.seed.unwrap_or(loaded.scenario.system.seed),
    };
    let rows = grid_sweep(&spec, &loaded.scenario, Workers::from_env())?;

    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new(Some(&loaded.bytes), spec.base_seed, command_line());
    write(&args.out, "sweep.csv", &io::sweep_csv(&rows), &mut manifest)?;
    let svg = line_chart(
        "Transfer rate",
        &args.param,
        "transfer rate",
        &[Series {
            label: "transfer rate",
            points: rows
                .iter()
                .map(|r| (r.param_value, r.transfer_rate))
                .collect(),
        }],
    );
    write(&args.out, "sweep.svg", &svg, &mut manifest)?;
    manifest.write(&args.out)?;
    println!("{} grid points x {} runs", rows.len(), spec.runs_per_point);
    Ok(())
}

pub struct ThresholdArgs {
    pub config: PathBuf,
    pub param: String,
    pub lo: f64,
    pub hi: f64,
    pub tol: f64,
    pub runs: usize,
    pub target: f64,
    pub steps: Option<u64>,
    pub seed: Option<u64>,
    pub out: PathBuf,
    pub lenient: bool,
}

pub fn threshold(args: &ThresholdArgs) -> Result<(), CliError> {
    if args.tol.is_nan() || args.tol <= 0.0 {
        return Err(SweepError::InvalidTolerance.into());
    }
    let loaded = load(&args.config, args.lenient)?;
    // Fail on a bad path before spending any runs.
    loaded.scenario.with_parameter(&args.param, args.lo)?;
    let base_seed = args.seed.unwrap_or(loaded.scenario.system.seed);
    let curve = SimulatedCurve {
        scenario: &loaded.scenario,
        parameter_path: args.param.clone(),
        runs: args.runs,
        horizon: args.steps.unwrap_or(loaded.scenario.system.steps),
        base_seed,
        workers: Workers::from_env(),
    };
    let result = bisect_threshold(&curve, &args.param, args.lo, args.hi, args.target, args.tol)?;

    prepare_out(&args.out)?;
    let mut manifest = RunManifest::new(Some(&loaded.bytes), base_seed, command_line());
    let text = serde_json::to_string_pretty(&result).expect("result serializes") + "\n";
    write(&args.out, "threshold.json", &text, &mut manifest)?;
    manifest.write(&args.out)?;
    println!("{}", result.critical_value);
    Ok(())
}

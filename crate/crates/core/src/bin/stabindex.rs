use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use stabindex::analytic::{a_for_target_sigma, analytic_sigma, StabilityClass};
use stabindex::config::RunConfig;
use stabindex::measure::{basin_map, default_local_ladder, estimate_index, local_index, uniform_rungs, Window};
use stabindex::output::{
    ladder_csv, map_csv, sweep_csv, to_json, write_file, Conventions, IndexReport, LocalReport, SweepRow,
};
use stabindex::sampling::Sampler;
use stabindex::verify::{cases_for, preset_cases, render_table, run_case, Case, Plan};
use stabindex::{integrator, Error, ExtendedReal, Family, MeasureSample, State, SystemSpec};

const EXIT_VERIFY_FAILED: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_NUMERICAL: u8 = 3;
const EXIT_IO: u8 = 4;

/// Stability indices of non-hyperbolic planar equilibria.
///
/// Exit codes: 0 success, 1 a verification row failed, 2 invalid
/// configuration or arguments, 3 numerical failure, 4 file i/o failure.
#[derive(Parser)]
#[command(name = "stabindex", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Estimate σ (or σ_loc when --delta is given) and write the ladder CSV
    /// and JSON report.
    EstimateIndex(RunArgs),
    /// Compare measured indices with the closed-form values.
    Verify(VerifyArgs),
    /// Label the centres of a grid of initial states.
    BasinMap(MapArgs),
    /// Label one initial state.
    Classify(ClassifyArgs),
    /// Measure σ across a range of exponents.
    Sweep(SweepArgs),
}

#[derive(Args, Clone, Default)]
struct SystemArgs {
    /// TOML run configuration; flags override its entries.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = parse_family)]
    family: Option<Family>,
    #[arg(long, allow_negative_numbers = true)]
    a: Option<f64>,
    /// Power of the coordinate change x = u^p (power-attract only).
    #[arg(long)]
    p: Option<f64>,
    /// Pick the power system whose index is this value.
    #[arg(long, allow_negative_numbers = true, conflicts_with = "family")]
    target_sigma: Option<f64>,
}

#[derive(Args, Clone, Default)]
struct SamplingArgs {
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_sampler)]
    sampler: Option<Sampler>,
    /// Output directory [default: $STABINDEX_OUT, else ./stabindex-out].
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Comma-separated neighbourhood radii.
    #[arg(long, value_delimiter = ',')]
    eps_ladder: Option<Vec<f64>>,
    /// Comma-separated δ values; switches to the local index.
    #[arg(long, value_delimiter = ',')]
    delta: Option<Vec<f64>>,
    /// Samples per rung.
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args)]
struct VerifyArgs {
    /// Run every preset case.
    #[arg(long, conflicts_with_all = ["family", "a", "p", "target_sigma"])]
    all: bool,
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Replace the preset ladder.
    #[arg(long, value_delimiter = ',')]
    eps_ladder: Option<Vec<f64>>,
    /// Replace the preset sample count.
    #[arg(long)]
    samples: Option<u64>,
}

#[derive(Args)]
struct MapArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// x_min,x_max,y_min,y_max [default: [-1,1]² for piecewise, else [0,1]²].
    #[arg(long, value_delimiter = ',', num_args = 1..=4, allow_negative_numbers = true)]
    window: Option<Vec<f64>>,
    /// Cells per axis, or nx,ny.
    #[arg(long, value_delimiter = ',', num_args = 1..=2, default_value = "200")]
    resolution: Vec<usize>,
    /// Label the δ-local basin instead.
    #[arg(long)]
    delta: Option<f64>,
}

#[derive(Args)]
struct ClassifyArgs {
    #[command(flatten)]
    system: SystemArgs,
    #[arg(long, allow_negative_numbers = true)]
    x: f64,
    #[arg(long, allow_negative_numbers = true)]
    y: f64,
    #[arg(long)]
    delta: Option<f64>,
    /// Integrate even when the analytic cones decide.
    #[arg(long)]
    no_cones: bool,
}

#[derive(Args)]
struct SweepArgs {
    #[arg(long, value_parser = parse_family, default_value = "power-attract")]
    family: Family,
    /// Comma-separated exponents.
    #[arg(long = "a", value_delimiter = ',', default_value = "1.5,2,3")]
    a_values: Vec<f64>,
    #[arg(long)]
    p: Option<f64>,
    #[command(flatten)]
    sampling: SamplingArgs,
    /// Samples per rung [default: the preset for each exponent].
    #[arg(long)]
    samples: Option<u64>,
}

fn parse_family(s: &str) -> Result<Family, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

fn parse_sampler(s: &str) -> Result<Sampler, String> {
    match s {
        "sobol" => Ok(Sampler::Sobol),
        "pseudo" => Ok(Sampler::Pseudo),
        _ => Err(format!("unknown sampler {s:?} (sobol, pseudo)")),
    }
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io(_) => EXIT_IO,
        e if e.is_numerical() => EXIT_NUMERICAL,
        _ => EXIT_CONFIG,
    }
}

fn load_config(path: Option<&Path>) -> stabindex::Result<Option<RunConfig>> {
    path.map(RunConfig::load).transpose()
}

/// Resolves the system from the flags, else from the config file.
fn resolve_system(args: &SystemArgs, file: Option<&RunConfig>) -> stabindex::Result<SystemSpec> {
    if let Some(s) = args.target_sigma {
        if args.a.is_some() || args.p.is_some() {
            return Err(Error::Config("--target-sigma cannot be combined with --a or --p".into()));
        }
        return a_for_target_sigma(s);
    }
    match (args.family, file) {
        (Some(family), _) => {
            let a = args.a.or_else(|| {
                let default = file.filter(|c| c.system.family == family).and_then(|c| c.system.exponent());
                default.filter(|_| family.takes_exponent())
            });
            SystemSpec::new(family, a, args.p)
        }
        (None, Some(cfg)) if args.a.is_none() && args.p.is_none() => Ok(cfg.system),
        (None, Some(cfg)) => SystemSpec::new(cfg.system.family, args.a.or(cfg.system.exponent()), args.p.or(cfg.system.p)),
        (None, None) => Err(Error::Config("no system given: use --family, --target-sigma or --config".into())),
    }
}

/// Defaults, then the config file, then the flags.
fn build_config(
    system: &SystemArgs,
    sampling: &SamplingArgs,
    eps_ladder: Option<Vec<f64>>,
    deltas: Option<Vec<f64>>,
    samples: Option<u64>,
) -> stabindex::Result<RunConfig> {
    let file = load_config(system.config.as_deref())?;
    let spec = resolve_system(system, file.as_ref())?;
    let mut cfg = match file {
        Some(mut c) => {
            if c.system.family != spec.family {
                c.integrator = None;
            }
            c.system = spec;
            c
        }
        None => RunConfig::new(spec),
    };
    if let Some(v) = sampling.seed {
        cfg.seed = v;
    }
    if let Some(v) = sampling.sampler {
        cfg.sampler = v;
    }
    if let Some(v) = &sampling.out {
        cfg.output_dir = Some(v.clone());
    }
    if let Some(v) = sampling.threads {
        cfg.threads = Some(v);
    }
    if let Some(v) = eps_ladder {
        cfg.eps_ladder = Some(v);
    }
    if let Some(v) = deltas {
        cfg.deltas = v;
    }
    if let Some(v) = samples {
        cfg.samples = v;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn install_threads(threads: Option<usize>) -> stabindex::Result<()> {
    if let Some(n) = threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, contents: &str) -> stabindex::Result<PathBuf> {
    let path = dir.join(name);
    write_file(&path, contents)?;
    Ok(path)
}

fn class_label(sigma: ExtendedReal) -> &'static str {
    StabilityClass::from_sigma(sigma).label()
}

fn estimate_cmd(args: RunArgs) -> stabindex::Result<()> {
    let cfg = build_config(&args.system, &args.sampling, args.eps_ladder, args.delta, args.samples)?;
    install_threads(cfg.threads)?;
    let spec = cfg.system;
    let (opts, fit_opts) = (cfg.measure_options(), cfg.fit_options());
    let dir = cfg.resolved_output_dir();
    let (expected, expected_loc) = analytic_sigma(&spec);
    println!("system: {spec}");
    if cfg.deltas.is_empty() {
        let est = estimate_index(&spec, &cfg.rungs(), cfg.seed, &opts, &fit_opts)?;
        let conv = Conventions::new(&spec, &est.ladder, cfg.seed, &opts, &fit_opts);
        let csv = write(&dir, "ladder.csv", &ladder_csv(&est.ladder))?;
        let json = write(&dir, "report.json", &to_json(&IndexReport::new(&spec, &est, conv))?)?;
        println!(
            "sigma = {:.4} (stderr {:.4}); sigma_- = {:.4}, sigma_+ = {:.4}",
            est.sigma, est.slope_stderr, est.sigma_minus, est.sigma_plus
        );
        println!("expected sigma = {expected:.4} ({})", class_label(expected));
        for w in &est.warnings {
            println!("warning: {w}");
        }
        println!("wrote {} and {}", csv.display(), json.display());
    } else {
        let rungs = |d: f64| uniform_rungs(&cfg.eps_ladder.clone().unwrap_or_else(|| default_local_ladder(d)), cfg.samples);
        let report = local_index(&spec, &cfg.deltas, rungs, cfg.seed, &opts, &fit_opts)?;
        let all: Vec<MeasureSample> =
            report.per_delta.iter().flat_map(|d| d.estimate.ladder.iter().cloned()).collect();
        let conv = Conventions::new(&spec, &all, cfg.seed, &opts, &fit_opts);
        let csv = write(&dir, "ladder.csv", &ladder_csv(&all))?;
        let json = write(&dir, "local_report.json", &to_json(&LocalReport::new(&spec, &report, conv))?)?;
        for d in &report.per_delta {
            let e = &d.estimate;
            println!(
                "delta = {}: sigma_loc = {:.4} (stderr {:.4}); sigma_loc,- = {:.4}, sigma_loc,+ = {:.4}",
                d.delta, e.sigma, e.slope_stderr, e.sigma_minus, e.sigma_plus
            );
            for w in &e.warnings {
                println!("warning: {w}");
            }
        }
        println!("sigma_loc (smallest delta) = {:.4}", report.verdict().sigma);
        println!("expected sigma_loc = {expected_loc:.4} ({})", class_label(expected_loc));
        println!("wrote {} and {}", csv.display(), json.display());
    }
    Ok(())
}

fn slug(name: &str) -> String {
    name.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' { c } else { '_' })
        .collect()
}

/// Returns whether every row passed.
fn verify_cmd(args: VerifyArgs) -> stabindex::Result<bool> {
    let file = load_config(args.system.config.as_deref())?;
    let mut base = match (&file, args.all) {
        (Some(c), _) => c.clone(),
        (None, _) => RunConfig::new(SystemSpec::piecewise()),
    };
    let cases: Vec<Case> = if args.all {
        preset_cases()
    } else {
        let spec = resolve_system(&args.system, file.as_ref())?;
        base.system = spec;
        cases_for(&spec)
    };
    if let Some(v) = args.sampling.seed {
        base.seed = v;
    }
    if let Some(v) = args.sampling.sampler {
        base.sampler = v;
    }
    if let Some(v) = &args.sampling.out {
        base.output_dir = Some(v.clone());
    }
    if let Some(v) = args.sampling.threads {
        base.threads = Some(v);
    }
    base.eps_ladder = args.eps_ladder.clone();
    if let Some(n) = args.samples {
        base.samples = n;
    }
    base.validate()?;
    install_threads(base.threads)?;
    let dir = base.resolved_output_dir();
    let mut rows = Vec::new();
    for case in cases {
        let case = case.with_overrides(args.eps_ladder.as_deref(), args.samples);
        let res = run_case(&case, base.seed, base.sampler)?;
        for (name, contents) in &res.artifacts {
            write(&dir.join(slug(&res.case)), name, contents)?;
        }
        rows.extend(res.rows);
    }
    print!("{}", render_table(&rows));
    let failed = rows.iter().filter(|r| !r.pass).count();
    println!("{} of {} checks passed; artifacts in {}", rows.len() - failed, rows.len(), dir.display());
    Ok(failed == 0)
}

fn map_cmd(args: MapArgs) -> stabindex::Result<()> {
    let cfg = build_config(&args.system, &args.sampling, None, None, None)?;
    install_threads(cfg.threads)?;
    let spec = cfg.system;
    let window = match args.window.as_deref() {
        Some(&[x_min, x_max, y_min, y_max]) => Window { x_min, x_max, y_min, y_max },
        Some(w) => return Err(Error::Config(format!("--window needs four values, got {}", w.len()))),
        None if spec.family == Family::PiecewiseLinear => Window::square(-1.0, 1.0),
        None => Window::square(0.0, 1.0),
    };
    let (nx, ny) = match args.resolution[..] {
        [n] => (n, n),
        [nx, ny] => (nx, ny),
        _ => unreachable!("clap limits the count"),
    };
    let cells = basin_map(&spec, window, nx, ny, args.delta, &cfg.measure_options())?;
    let path = write(&cfg.resolved_output_dir(), "basin_map.csv", &map_csv(&cells))?;
    println!("system: {spec}; {nx}x{ny} cells; wrote {}", path.display());
    Ok(())
}

fn classify_cmd(args: ClassifyArgs) -> stabindex::Result<()> {
    let cfg = build_config(&args.system, &SamplingArgs::default(), None, None, None)?;
    let icfg = cfg.integrator_config().with_delta(args.delta);
    let c = integrator::classify(&cfg.system, State::new(args.x, args.y), &icfg, !args.no_cones)?;
    let how = match c.outcome {
        None => "decided by the analytic cones".to_string(),
        Some(o) => format!("{:?} at t = {:.6e} after {} steps", o.kind, o.t_exit, o.steps),
    };
    println!("x,y,label");
    println!("{},{},{}", args.x, args.y, c.label.name());
    eprintln!("{}: {how}", cfg.system);
    Ok(())
}

fn sweep_cmd(args: SweepArgs) -> stabindex::Result<()> {
    if !args.family.takes_exponent() {
        return Err(Error::Config(format!("sweep needs a power family, got {}", args.family)));
    }
    let system = SystemArgs { family: Some(args.family), a: args.a_values.first().copied(), p: args.p, ..Default::default() };
    let cfg = build_config(&system, &args.sampling, None, None, args.samples)?;
    install_threads(cfg.threads)?;
    let mut rows = Vec::new();
    for &a in &args.a_values {
        let spec = SystemSpec::new(args.family, Some(a), args.p)?;
        let rungs = match cases_for(&spec).remove(0).with_overrides(None, args.samples).plan {
            Plan::Index { rungs, .. } => rungs,
            _ => unreachable!("power families have index plans"),
        };
        let opts = stabindex::measure::MeasureOptions { sampler: cfg.sampler, ..stabindex::measure::MeasureOptions::for_spec(&spec) };
        let est = estimate_index(&spec, &rungs, cfg.seed, &opts, &cfg.fit_options())?;
        let expected = analytic_sigma(&spec).0;
        println!("a = {a}: expected {expected:.4}, measured {:.4} (stderr {:.4})", est.sigma, est.slope_stderr);
        rows.push(SweepRow { a, sigma_expected: expected, sigma_measured: est.sigma });
    }
    let path = write(&cfg.resolved_output_dir(), "sweep.csv", &sweep_csv(&rows))?;
    println!("wrote {}", path.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::EstimateIndex(a) => estimate_cmd(a).map(|()| true),
        Command::Verify(a) => verify_cmd(a),
        Command::BasinMap(a) => map_cmd(a).map(|()| true),
        Command::Classify(a) => classify_cmd(a).map(|()| true),
        Command::Sweep(a) => sweep_cmd(a).map(|()| true),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_VERIFY_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

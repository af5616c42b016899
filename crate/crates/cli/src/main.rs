//! `srcas`: command-line frontend for the series resonant converter
//! audiosusceptibility toolkit.
//!
//! Exit status is 0 only when every requested computation converged.
//! Otherwise the status is 1 and stderr carries a JSON failure list
//! `{"failures": [{"item": ..., "error": ...}]}`.

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::Serialize;

use srcas::analysis::{
    compare_resonance, design_region_boundary, frequency_sweep, BaseDesign, SweepGrid,
};
use srcas::config::{parse_config, OutputFormat, ParamForm, RunConfig, Syntax};
use srcas::output::{
    bode_table, region_table, sweep_table, trace_table, waveform_table, write_output, Record,
};
use srcas::small_signal::{as_resonance_frequency, log_space, ResponseMethod};
use srcas::steady_state::{period_waveform, solve_cyclic_steady_state, OperatingPoint};
use srcas::time_sim::{
    measure_ripple_gain, RippleSpec, SimFidelity, Simulator, DEFAULT_RELATIVE_AMPLITUDE,
};
use srcas::{ConverterParams, Error};

/// Environment variable naming the default output directory.
const OUT_DIR_ENV: &str = "SRCAS_OUT_DIR";

#[derive(Debug, Parser)]
#[command(
    name = "srcas",
    version,
    about = "Sampled-data audiosusceptibility analysis of series resonant converters"
)]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalOpts {
    /// TOML or JSON configuration file (`.json` selects JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Parameter override `key=value`; wins over the configuration file.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    set: Vec<String>,
    /// Output format.
    #[arg(long, global = true, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Primary output file; secondary tables are written beside it.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Output directory, used when no output file is given.
    #[arg(long, global = true, env = OUT_DIR_ENV)]
    out_dir: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Print derived quantities (ωr, fr, Zc, Ts, F, Rac, Qe).
    Derive,
    /// Solve the cyclic steady state.
    SteadyState {
        /// Also emit one period of waveforms sampled at this many points.
        #[arg(long, value_name = "M")]
        waveform_points: Option<usize>,
    },
    /// Audiosusceptibility over a logarithmic frequency grid.
    Bode {
        #[arg(long, default_value_t = 100.0)]
        fmin: f64,
        #[arg(long, default_value_t = 10e3)]
        fmax: f64,
        #[arg(long, default_value_t = 200)]
        points: usize,
        /// model, model-full or sim.
        #[arg(long, default_value = "model")]
        method: ResponseMethod,
        #[arg(long, default_value = "continuous")]
        fidelity: SimFidelity,
    },
    /// Closed-form and pole-angle resonance, optionally against simulation.
    Resonance {
        #[arg(long)]
        compare_sim: bool,
        #[arg(long, default_value_t = 100.0)]
        fmin: f64,
        /// Upper search limit; defaults to min(10 kHz, fs/4).
        #[arg(long)]
        fmax: Option<f64>,
        #[arg(long, default_value = "continuous")]
        fidelity: SimFidelity,
    },
    /// Time-domain simulation under sinusoidal input ripple.
    Sim {
        #[arg(long)]
        fin: f64,
        /// Ripple amplitude in volts; defaults to 1e-4·Vin.
        #[arg(long)]
        amplitude: Option<f64>,
        #[arg(long)]
        settle: Option<usize>,
        #[arg(long)]
        measure: Option<usize>,
        #[arg(long, default_value = "continuous")]
        fidelity: SimFidelity,
    },
    /// Frequency responses over an (F, Qe) grid read from a file.
    Sweep {
        #[arg(long)]
        grid_file: PathBuf,
        #[arg(long, default_value = "model")]
        method: ResponseMethod,
        #[arg(long, default_value = "continuous")]
        fidelity: SimFidelity,
    },
    /// Unity-gain design-region boundary F(Qe).
    Region {
        /// Comma-separated Qe values.
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,3,5,10")]
        qe_grid: Vec<f64>,
        /// Comma-separated lower and upper F bounds.
        #[arg(long, value_delimiter = ',', default_values_t = [1.005, 1.5])]
        f_bounds: Vec<f64>,
        /// model-full, model or sim.
        #[arg(long, default_value = "model-full")]
        method: ResponseMethod,
        #[arg(long, default_value = "continuous")]
        fidelity: SimFidelity,
    },
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Derive => "derive",
            Command::SteadyState { .. } => "steady-state",
            Command::Bode { .. } => "bode",
            Command::Resonance { .. } => "resonance",
            Command::Sim { .. } => "sim",
            Command::Sweep { .. } => "sweep",
            Command::Region { .. } => "region",
        }
    }

    fn needs_params(&self) -> bool {
        !matches!(self, Command::Sweep { .. } | Command::Region { .. })
    }
}

#[derive(Debug, Serialize)]
struct Failure {
    item: String,
    error: String,
}

impl Failure {
    fn new(item: impl Into<String>, error: impl ToString) -> Self {
        Failure {
            item: item.into(),
            error: error.to_string(),
        }
    }
}

/// Rendered results: the first artifact is primary.
struct Outcome {
    artifacts: Vec<(&'static str, String)>,
    failures: Vec<Failure>,
}

impl Outcome {
    fn single(content: String) -> Self {
        Outcome {
            artifacts: vec![("", content)],
            failures: Vec::new(),
        }
    }
}

fn extension(format: OutputFormat) -> &'static str {
    match format {
        OutputFormat::Csv => "csv",
        OutputFormat::Json => "json",
    }
}

/// `base` with `_name` appended to its stem.
fn sibling(base: &Path, name: &str) -> PathBuf {
    if name.is_empty() {
        return base.to_path_buf();
    }
    let stem = base
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let file = match base.extension() {
        Some(e) => format!("{stem}_{name}.{}", e.to_string_lossy()),
        None => format!("{stem}_{name}"),
    };
    base.with_file_name(file)
}

fn emit(
    command: &str,
    artifacts: &[(&'static str, String)],
    output: Option<&Path>,
    out_dir: Option<&Path>,
    format: OutputFormat,
) -> srcas::Result<()> {
    let base = output
        .map(Path::to_path_buf)
        .or_else(|| out_dir.map(|d| d.join(format!("{command}.{}", extension(format)))));
    match base {
        Some(base) => artifacts
            .iter()
            .try_for_each(|(name, content)| write_output(Some(&sibling(&base, name)), content)),
        None => artifacts
            .iter()
            .try_for_each(|(_, content)| write_output(None, content)),
    }
}

fn operating_point_record(op: &OperatingPoint) -> Record {
    Record::new()
        .with("iL", op.state.il)
        .with("vc", op.state.vc)
        .with("vo", op.state.vo)
        .with("T1", op.times.t1())
        .with("T3", op.times.t3())
        .with("Ts", op.times.ts())
        .with("dc_gain", op.dc_gain)
        .with("residual_norm", op.residual_norm)
        .with("symmetry_deviation", op.symmetry_deviation())
        .with("iterations", op.iterations)
}

fn run_derive(p: &ConverterParams, format: OutputFormat) -> Outcome {
    let d = p.derived();
    let rec = Record::new()
        .with("omega_r", d.omega_r)
        .with("fr", d.fr)
        .with("Zc", d.zc)
        .with("Ts", d.ts)
        .with("F", d.f_ratio)
        .with("Rac", d.rac)
        .with("Qe", d.qe);
    Outcome::single(rec.render(format))
}

fn run_steady_state(
    p: &ConverterParams,
    points: Option<usize>,
    format: OutputFormat,
) -> srcas::Result<Outcome> {
    let op = solve_cyclic_steady_state(p, None)?;
    let mut artifacts = vec![("", operating_point_record(&op).render(format))];
    if let Some(m) = points {
        artifacts.push((
            "waveform",
            waveform_table(&period_waveform(p, &op, m)).render(format),
        ));
    }
    Ok(Outcome {
        artifacts,
        failures: Vec::new(),
    })
}

fn run_bode(
    p: &ConverterParams,
    (fmin, fmax, points): (f64, f64, usize),
    method: ResponseMethod,
    fidelity: SimFidelity,
    format: OutputFormat,
) -> srcas::Result<Outcome> {
    if !(fmin > 0.0 && fmax > fmin) || points == 0 {
        return Err(Error::InvalidGrid(format!(
            "need 0 < fmin < fmax and points > 0, got [{fmin}, {fmax}] with {points} points"
        )));
    }
    let op = solve_cyclic_steady_state(p, None)?;
    let freqs = log_space(fmin, fmax, points);
    let resp = srcas::analysis::design_response(p, &op, &freqs, method, fidelity)?;
    Ok(Outcome::single(bode_table(&resp).render(format)))
}

fn run_resonance(
    p: &ConverterParams,
    compare_sim: bool,
    (fmin, fmax): (f64, Option<f64>),
    fidelity: SimFidelity,
    format: OutputFormat,
) -> srcas::Result<Outcome> {
    let op = solve_cyclic_steady_state(p, None)?;
    let r = as_resonance_frequency(p, &op);
    let mut rec = Record::new()
        .with("formula_hz", r.formula_hz)
        .with("formula_rad_s", r.formula_rad_s)
        .with("pole_angle_hz", r.pole_angle_hz)
        .with("pole_angle_rad_s", r.pole_angle_rad_s);
    let mut failures = Vec::new();
    if compare_sim {
        let fmax = fmax.unwrap_or_else(|| (0.25 * p.fs()).min(10e3));
        match compare_resonance(p, &op, fidelity, fmin, fmax) {
            Ok(c) => {
                rec = rec
                    .with("sim_peak_hz", c.sim_hz)
                    .with("sim_gain_db", c.sim_gain_db)
                    .with("sim_normalized_gain", c.sim_normalized_gain)
                    .with("error_pct", c.error_pct);
            }
            Err(e) => failures.push(Failure::new("sim_peak", e)),
        }
    }
    Ok(Outcome {
        artifacts: vec![("", rec.render(format))],
        failures,
    })
}

fn run_sim(
    p: &ConverterParams,
    fin: f64,
    amplitude: Option<f64>,
    (settle, measure): (Option<usize>, Option<usize>),
    fidelity: SimFidelity,
    format: OutputFormat,
) -> srcas::Result<Outcome> {
    let sim = Simulator::new(p, fidelity)?;
    let ripple = RippleSpec::new(
        fin,
        amplitude.unwrap_or(DEFAULT_RELATIVE_AMPLITUDE * p.vin()),
    );
    let trace = sim.simulate(&ripple, settle, measure)?;
    let gain = measure_ripple_gain(&trace, trace.f_in)?;
    let summary = Record::new()
        .with("f_in", gain.f_in)
        .with("amplitude", ripple.amplitude)
        .with("fidelity", fidelity.to_string().as_str())
        .with("settle_periods", trace.settle_periods)
        .with("measure_periods", trace.measure_periods)
        .with("gain_db", gain.gain_db)
        .with("normalized_gain", gain.normalized_gain)
        .with("phase_deg", gain.gain.arg().to_degrees())
        .with("dc_gain", gain.dc_gain);
    Ok(Outcome {
        artifacts: vec![
            ("", trace_table(&trace).render(format)),
            ("summary", summary.render(format)),
        ],
        failures: Vec::new(),
    })
}

fn read_grid(path: &Path) -> srcas::Result<SweepGrid> {
    let text = std::fs::read_to_string(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    match Syntax::from_path(path) {
        Syntax::Json => serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string())),
        Syntax::Toml => toml::from_str(&text).map_err(|e| Error::Parse(e.to_string())),
    }
}

fn run_sweep(
    grid_file: &Path,
    method: ResponseMethod,
    fidelity: SimFidelity,
    format: OutputFormat,
) -> srcas::Result<Outcome> {
    let grid = read_grid(grid_file)?;
    let results = frequency_sweep(&grid, method, fidelity)?;
    let failures = results
        .iter()
        .filter_map(|r| {
            r.response
                .as_ref()
                .err()
                .map(|e| Failure::new(format!("F={},Qe={}", r.f_ratio, r.qe), e))
        })
        .collect();
    Ok(Outcome {
        artifacts: vec![("", sweep_table(&results).render(format))],
        failures,
    })
}

fn run_region(
    base: &BaseDesign,
    qe_grid: &[f64],
    f_bounds: &[f64],
    method: ResponseMethod,
    fidelity: SimFidelity,
    format: OutputFormat,
) -> srcas::Result<Outcome> {
    let [lo, hi] = f_bounds else {
        return Err(Error::InvalidGrid(format!(
            "--f-bounds takes two values, got {}",
            f_bounds.len()
        )));
    };
    let bounds = (*lo, *hi);
    let curve = design_region_boundary(base, qe_grid, bounds, method, fidelity)?;
    let failures = curve
        .failures
        .iter()
        .map(|(qe, e)| Failure::new(format!("Qe={qe}"), e))
        .collect();
    Ok(Outcome {
        artifacts: vec![(
            "",
            region_table(std::slice::from_ref(&curve)).render(format),
        )],
        failures,
    })
}

/// Base design for region runs: a design-form configuration supplies the
/// fixed quantities, otherwise the defaults apply.
fn region_base(cfg: Option<&RunConfig>) -> BaseDesign {
    match cfg.map(|c| c.form) {
        Some(ParamForm::Design(s)) => BaseDesign {
            fr: s.fr,
            n: s.n,
            ro: s.ro,
            co: s.co,
            vin: s.vin,
        },
        _ => BaseDesign::default(),
    }
}

fn run(cli: &Cli) -> Result<Vec<Failure>, Vec<Failure>> {
    let g = &cli.global;
    let cmd = &cli.command;
    let fatal = |item: &str, e: Error| vec![Failure::new(item, e)];

    let cfg = if cmd.needs_params() || g.config.is_some() || !g.set.is_empty() {
        Some(parse_config(g.config.as_deref(), &g.set).map_err(|e| fatal("config", e))?)
    } else {
        None
    };
    let format = match &g.format {
        Some(f) => f.parse().map_err(|e| fatal("format", e))?,
        None => cfg.as_ref().map(|c| c.format).unwrap_or_default(),
    };
    let output = g
        .output
        .clone()
        .or_else(|| cfg.as_ref().and_then(|c| c.output.clone()));
    let params = cfg.as_ref().map(|c| c.params);
    let p = || params.expect("subcommand requires parameters");

    let outcome = match cmd {
        Command::Derive => Ok(run_derive(&p(), format)),
        Command::SteadyState { waveform_points } => {
            run_steady_state(&p(), *waveform_points, format)
        }
        Command::Bode {
            fmin,
            fmax,
            points,
            method,
            fidelity,
        } => run_bode(&p(), (*fmin, *fmax, *points), *method, *fidelity, format),
        Command::Resonance {
            compare_sim,
            fmin,
            fmax,
            fidelity,
        } => run_resonance(&p(), *compare_sim, (*fmin, *fmax), *fidelity, format),
        Command::Sim {
            fin,
            amplitude,
            settle,
            measure,
            fidelity,
        } => run_sim(
            &p(),
            *fin,
            *amplitude,
            (*settle, *measure),
            *fidelity,
            format,
        ),
        Command::Sweep {
            grid_file,
            method,
            fidelity,
        } => run_sweep(grid_file, *method, *fidelity, format),
        Command::Region {
            qe_grid,
            f_bounds,
            method,
            fidelity,
        } => run_region(
            &region_base(cfg.as_ref()),
            qe_grid,
            f_bounds,
            *method,
            *fidelity,
            format,
        ),
    }
    .map_err(|e| fatal(cmd.name(), e))?;

    emit(
        cmd.name(),
        &outcome.artifacts,
        output.as_deref(),
        g.out_dir.as_deref(),
        format,
    )
    .map_err(|e| fatal("output", e))?;
    Ok(outcome.failures)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let failures = match run(&cli) {
        Ok(f) | Err(f) => f,
    };
    if failures.is_empty() {
        return ExitCode::SUCCESS;
    }
    let report = serde_json::json!({ "failures": failures });
    eprintln!("{report}");
    ExitCode::FAILURE
}

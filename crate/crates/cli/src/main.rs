mod config;

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use mollow_core::atlas::{annotate, enumerate_conditions, recommend_filters};
use mollow_core::correlators::{CorrelationRequest, Normalization};
use mollow_core::files::{overlay_path, write_overlay, ResultFormat};
use mollow_core::grid::{Flag, GridTemplate, Observable, ResultGrid};
use mollow_core::model::dressed_splitting;
use mollow_core::sweep::{resume_with, run_sweep, AxisSpec, SweepControl, SweepPlan, SweepStatus};
use mollow_core::{Error, Result};

use config::RunConfig;

#[derive(Parser)]
#[command(name = "mollow", version, about = "Frequency-resolved photon correlations of a driven two-level emitter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Filtered emission spectrum of the first sensor.
    Spectrum(Common),
    /// Degenerate N-photon autocorrelation against the filter frequency.
    Autocorr(Common),
    /// Two-photon correlation map over the first two sensor frequencies.
    G2map(Common),
    /// Plane cut through a three-sensor correlation volume.
    G3cut(Common),
    /// Delay-resolved correlation, optionally along frequency axes.
    Tau(Common),
    /// Bundle correlation map with leapfrog overlays.
    Bundle(Common),
    /// Filter frequencies for a leapfrog that avoid real transitions.
    Recommend(Common),
    /// Finish an interrupted sweep from its checkpoint.
    SweepResume {
        /// The `<out>.ckpt` file of the sweep
        checkpoint: PathBuf,
        /// Worker threads (default: as recorded)
        #[arg(long)]
        workers: Option<usize>,
    },
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    config: PathBuf,
    /// Points per frequency axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Worker threads (default 1)
    #[arg(long)]
    workers: Option<usize>,
    /// Output path without extension.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_parser = ["csv", "json"])]
    format: Option<String>,
    /// Also write leapfrog lines to `<out>.overlay.json`.
    #[arg(long)]
    overlay: bool,
    /// Leave the timestamp out of the result header.
    #[arg(long)]
    no_timestamp: bool,
    /// Starting sensor coupling.
    #[arg(long)]
    epsilon: Option<f64>,
    /// Confirm every value with one more Fock level per sensor.
    #[arg(long)]
    check_truncation: bool,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Regime(_) | Error::Feasibility { .. } => 3,
        Error::Convergence { .. }
        | Error::Precision { .. }
        | Error::Truncation { .. }
        | Error::Solver { .. }
        | Error::Degeneracy(_)
        | Error::Undefined(_)
        | Error::Invalid(_)
        | Error::Propagation(_)
        | Error::Oracle(_) => 4,
        Error::Io { .. } | Error::Checkpoint { .. } | Error::Integrity { .. } => 5,
        _ => 2,
    }
}

/// Flags that mean a value could not be trusted, as opposed to a point where
/// the correlation is undefined.
fn is_failure(flag: Flag) -> bool {
    !matches!(flag, Flag::Ok | Flag::Undefined)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("mollow: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn dispatch(command: Command) -> Result<u8> {
    let (kind, common) = match command {
        Command::SweepResume { checkpoint, workers } => {
            let control = SweepControl { workers, ..Default::default() };
            return match resume_with(&checkpoint, &control)? {
                SweepStatus::Complete(grid) => Ok(report(&grid, None)),
                SweepStatus::Interrupted { .. } => Err(Error::Parameter("sweep stopped early".into())),
            };
        }
        Command::Recommend(c) => return recommend(&c),
        Command::Spectrum(c) => ("spectrum", c),
        Command::Autocorr(c) => ("autocorr", c),
        Command::G2map(c) => ("g2map", c),
        Command::G3cut(c) => ("g3cut", c),
        Command::Tau(c) => ("tau", c),
        Command::Bundle(c) => ("bundle", c),
    };
    let config = load(&common)?;
    let plan = build_plan(kind, &config, &common)?;
    let grid = run_sweep(&plan)?;
    let overlay = if common.overlay || kind == "bundle" { Some(write_overlays(&plan, &grid)?) } else { None };
    println!("{}", plan.result_path().display());
    Ok(report(&grid, overlay.as_deref()))
}

fn report(grid: &ResultGrid, overlay: Option<&Path>) -> u8 {
    if let Some(p) = overlay {
        println!("{}", p.display());
    }
    let failures = grid.flags.iter().filter(|f| is_failure(**f)).count();
    let undefined = grid.flags.iter().filter(|f| **f == Flag::Undefined).count();
    eprintln!(
        "{} values, {undefined} undefined, {failures} failed; largest epsilon-halving change {}",
        grid.len(),
        grid.metadata.summary.max_change.map_or("n/a".to_string(), |c| format!("{c:.2e}"))
    );
    if failures > 0 {
        4
    } else {
        0
    }
}

fn load(common: &Common) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&common.config).map_err(|e| Error::Io { path: common.config.clone(), source: e })?;
    let mut config = RunConfig::parse(&text)?;
    // Flags override the file and are echoed with it.
    if let Some(eps) = common.epsilon {
        config.run.epsilon = Some(eps);
    }
    if common.check_truncation {
        config.run.check_truncation = Some(true);
    }
    if let Some(f) = &common.format {
        config.run.format = Some(f.parse()?);
    }
    if let Some(n) = common.grid {
        if n == 0 {
            return Err(Error::Parameter("--grid must be at least 1".into()));
        }
        config.grid.get_or_insert_with(Default::default).points = Some(n);
    }
    if let Some(w) = common.workers {
        config.run.workers = Some(w);
    }
    if let Some(o) = &common.out {
        config.run.output = Some(o.clone());
    }
    config.validate()?;
    Ok(config)
}

fn splitting(config: &RunConfig) -> Result<f64> {
    Ok(dressed_splitting(&config.params()?)?.omega_plus)
}

fn request(config: &RunConfig, groups: usize) -> Result<CorrelationRequest> {
    if config.sensors.len() != groups {
        return Err(Error::Parameter(format!("this command needs {groups} sensors, got {}", config.sensors.len())));
    }
    let r = CorrelationRequest::new(
        config.sensors.iter().map(|s| s.bundle_order).collect(),
        config.sensors.iter().map(|s| s.frequency).collect(),
        config.sensors.iter().map(|s| s.linewidth).collect(),
    )?
    .with_normalization(config.run.normalization.unwrap_or(Normalization::Bundle));
    match config.run.epsilon {
        Some(eps) => r.with_epsilon(eps),
        None => Ok(r),
    }
}

/// Axes over the free frequencies: explicit, or `points` samples of a
/// common range (default `±span·Ω₊`).
fn axes(config: &RunConfig, names: &[String], span: f64) -> Result<Vec<AxisSpec>> {
    let grid = config.grid.clone().unwrap_or_default();
    if let Some(mut axes) = grid.axes {
        if axes.len() != names.len() {
            return Err(Error::Parameter(format!("grid.axes needs {} axes, got {}", names.len(), axes.len())));
        }
        if let Some(n) = grid.points {
            axes.iter_mut().for_each(|a| a.points = n);
        }
        return Ok(axes);
    }
    let (min, max) = match (grid.min, grid.max) {
        (Some(a), Some(b)) => (a, b),
        (a, b) => {
            let wp = splitting(config)?;
            (a.unwrap_or(-span * wp), b.unwrap_or(span * wp))
        }
    };
    let points = grid.points.unwrap_or(101);
    Ok(names.iter().map(|n| AxisSpec::new(n.clone(), min, max, points)).collect())
}

fn names(free: &[usize]) -> Vec<String> {
    free.iter().map(|k| format!("w{}", k + 1)).collect()
}

fn build_plan(kind: &str, config: &RunConfig, common: &Common) -> Result<SweepPlan> {
    let params = config.params()?;
    let first = || config.sensors.first().ok_or_else(|| Error::Parameter("this command needs a sensor".into()));
    let template_or = |default: GridTemplate| config.grid.as_ref().and_then(|g| g.template.clone()).unwrap_or(default);
    let (observable, template, axes) = match kind {
        "spectrum" => {
            let s = first()?;
            let observable = Observable::Spectrum { linewidth: s.linewidth, epsilon: config.run.epsilon };
            (observable, GridTemplate::free(vec![0.0], &[0]), axes(config, &["frequency".into()], 2.0)?)
        }
        "autocorr" => {
            let s = first()?;
            let order = config.autocorr.as_ref().map_or(s.bundle_order, |a| a.order);
            if !(2..=4).contains(&order) {
                return Err(Error::Parameter(format!("autocorrelation order {order} is not one of 2, 3, 4")));
            }
            let mut r = CorrelationRequest::uniform(&[order], &[s.frequency], s.linewidth)?
                .with_normalization(Normalization::Photon);
            if let Some(eps) = config.run.epsilon {
                r = r.with_epsilon(eps)?;
            }
            (Observable::Correlation { request: r }, GridTemplate::free(vec![0.0], &[0]), axes(config, &["frequency".into()], 2.0)?)
        }
        "g2map" | "bundle" => {
            let r = request(config, config.sensors.len().max(2))?;
            let template = template_or(GridTemplate::free(r.frequencies.clone(), &[0, 1]));
            let free = template.directions.len();
            let names = if free == 2 { names(&[0, 1]) } else { (0..free).map(|k| format!("x{}", k + 1)).collect() };
            let a = axes(config, &names, 1.2)?;
            (Observable::Correlation { request: r }, template, a)
        }
        "g3cut" => {
            let r = request(config, 3)?;
            let plane = config.plane.clone().ok_or_else(|| Error::Parameter("g3cut needs a plane block".into()))?;
            let (template, free) = plane.template()?;
            let a = axes(config, &names(&free), 1.2)?;
            (Observable::Correlation { request: r }, template, a)
        }
        "tau" => {
            let t = config.tau.clone().ok_or_else(|| Error::Parameter("tau needs a tau block".into()))?;
            let delays = AxisSpec::new("tau", t.min, t.max, t.points).axis()?;
            let r = request(config, config.sensors.len().max(2))?.with_delay(t.first, delays.values)?;
            let template = template_or(GridTemplate::fixed(r.frequencies.clone()));
            let free = template.directions.len();
            let a = if free == 0 { vec![] } else { axes(config, &(0..free).map(|k| format!("x{}", k + 1)).collect::<Vec<_>>(), 1.2)? };
            (Observable::Correlation { request: r }, template, a)
        }
        other => return Err(Error::Parameter(format!("unknown command {other}"))),
    };
    let output = config.run.output.clone().unwrap_or_else(|| PathBuf::from(format!("mollow-{kind}")));
    let mut plan = SweepPlan::new(params, observable, template, axes, output);
    plan.options = config.options();
    plan.workers = config.run.workers.unwrap_or(1);
    if let Some(n) = config.run.checkpoint_interval {
        plan.checkpoint_interval = n;
    }
    plan.format = config.run.format.unwrap_or(ResultFormat::Csv);
    plan.config = serde_json::json!({ "command": kind, "config": config.echo() });
    if !common.no_timestamp {
        let secs = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        plan.timestamp = Some(format!("unix:{secs}"));
    }
    Ok(plan)
}

fn write_overlays(plan: &SweepPlan, grid: &ResultGrid) -> Result<PathBuf> {
    let partition = match &plan.observable {
        Observable::Correlation { request } => request.partition.clone(),
        Observable::Spectrum { .. } => vec![1],
    };
    let wp = dressed_splitting(&plan.params)?.omega_plus;
    let overlay = annotate(grid, &enumerate_conditions(&partition, wp)?)?;
    let path = overlay_path(&plan.output);
    write_overlay(&path, &overlay)?;
    Ok(path)
}

fn recommend(common: &Common) -> Result<u8> {
    let config = load(common)?;
    let block = config.recommend.clone().ok_or_else(|| Error::Parameter("recommend needs a recommend block".into()))?;
    let partition = block
        .partition
        .clone()
        .unwrap_or_else(|| config.sensors.iter().map(|s| s.bundle_order).collect());
    let linewidth = block
        .linewidth
        .or_else(|| config.sensors.iter().map(|s| s.linewidth).reduce(f64::min))
        .unwrap_or(1.0);
    let wp = splitting(&config)?;
    let r = recommend_filters(&partition, block.branch, wp, block.margin.unwrap_or(3.0), linewidth)?;
    let out = serde_json::json!({ "partition": partition, "recommendation": r, "passes": r.verify(&partition) });
    println!("{}", serde_json::to_string_pretty(&out).map_err(|e| Error::Format(e.to_string()))?);
    Ok(0)
}

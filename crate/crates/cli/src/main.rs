use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use dualrate::freqresp::{dr_bode, exclude_poles};
use dualrate::loops::{assemble, stability, Channel, OutputRate, Strategy};
use dualrate::qft::{boundary, gain_scan, loop_gain, BoundaryKind, GainScanRow};
use dualrate::report::{self, Provenance};
use dualrate::scenario::{builtin, RunOptions, ScenarioFile};
use dualrate::simulation::{metrics, run_batch, ResponseMetrics};
use dualrate::ugv::run_ugv;
use dualrate::Error;

#[derive(Parser, Debug)]
#[command(name = "drctl", version, about = "Dual-rate control scenarios: simulation, frequency response, QFT and UGV runs")]
struct Cli {
    #[command(flatten)]
    flags: Flags,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Args, Debug, Clone)]
struct Flags {
    /// Directory for CSV and JSON artifacts.
    #[arg(long, global = true, default_value = "out")]
    out_dir: PathBuf,
    /// Recorded in the provenance of every report; no command draws random numbers.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Frequency grid density in points per decade.
    #[arg(long, global = true)]
    grid: Option<usize>,
    #[arg(long, global = true, value_enum)]
    strategy: Option<StrategyArg>,
    /// Use the file's model-plant mismatch selection.
    #[arg(long, global = true)]
    mpm: bool,
    /// Apply the file's output disturbance.
    #[arg(long, global = true)]
    disturbance: bool,
    /// Comma-separated actuator gains for the QFT scan.
    #[arg(long, global = true, value_delimiter = ',')]
    gain_scan: Option<Vec<f64>>,
    /// Real plant by name, overriding the file's selection.
    #[arg(long, global = true)]
    plant: Option<String>,
    /// Enable the actuator dead zone and saturation.
    #[arg(long, global = true)]
    nonlinear: bool,
    /// Override the measurement multiplicity N.
    #[arg(long, global = true)]
    n: Option<usize>,
    #[arg(long, global = true, value_enum, default_value_t = ChannelArg::YR)]
    channel: ChannelArg,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Step and disturbance runs with response metrics.
    Simulate { file: String },
    /// Dual-rate Bode data of the closed loop.
    Freqresp { file: String },
    /// Nichols boundaries, loci and gain-scan verdicts.
    Qft { file: String },
    /// Path tracking runs: ideal, mismatch, mismatch with disturbance.
    Ugv { file: String },
    /// Parse and build the scenario without running it.
    Validate { file: String },
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum StrategyArg {
    FastSr,
    Ic,
    Mbdr,
    All,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum ChannelArg {
    #[value(name = "y-r")]
    YR,
    #[value(name = "y-d")]
    YD,
}

struct Loaded {
    file: ScenarioFile,
    source: String,
}

fn load(arg: &str, flags: &Flags) -> anyhow::Result<Loaded> {
    let source = match (Path::new(arg).exists(), builtin(arg)) {
        (false, Some(text)) => text.to_string(),
        _ => std::fs::read_to_string(arg).map_err(|e| Error::Scenario(format!("cannot read {arg}: {e}")))?,
    };
    let mut file = ScenarioFile::parse(&source).with_context(|| format!("in {arg}"))?;
    if let Some(n) = flags.n {
        file.scheme.n = n;
        if file.controllers.ic.pattern.as_ref().is_some_and(|p| p.len() != n) {
            file.controllers.ic.pattern = None;
        }
        file.validate().with_context(|| format!("in {arg} with --n {n}"))?;
    }
    Ok(Loaded { file, source })
}

impl Flags {
    fn options(&self) -> RunOptions {
        RunOptions {
            mpm: self.mpm,
            real_plant: self.plant.clone(),
            disturbance: self.disturbance,
            nonlinear: self.nonlinear,
            gain: None,
        }
    }

    fn strategies(&self, default: &[Strategy]) -> Vec<Strategy> {
        match self.strategy {
            None => default.to_vec(),
            Some(StrategyArg::All) => Strategy::ALL.to_vec(),
            Some(StrategyArg::FastSr) => vec![Strategy::FastSr],
            Some(StrategyArg::Ic) => vec![Strategy::Ic],
            Some(StrategyArg::Mbdr) => vec![Strategy::Mbdr],
        }
    }

    /// Switches that change results, in a fixed order.
    fn describe(&self) -> Vec<String> {
        let mut v = vec![format!("seed={}", self.seed)];
        if self.mpm {
            v.push("mpm".into());
        }
        if self.disturbance {
            v.push("disturbance".into());
        }
        if self.nonlinear {
            v.push("nonlinear".into());
        }
        if let Some(p) = &self.plant {
            v.push(format!("plant={p}"));
        }
        if let Some(n) = self.n {
            v.push(format!("n={n}"));
        }
        if let Some(g) = self.grid {
            v.push(format!("grid={g}"));
        }
        if let Some(g) = &self.gain_scan {
            v.push(format!("gain_scan={}", g.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")));
        }
        v
    }

    fn stem(&self, name: &str) -> String {
        let mut s = name.to_string();
        if self.mpm {
            s += "_mpm";
        }
        if let Some(p) = &self.plant {
            s += &format!("_plant-{p}");
        }
        if self.disturbance {
            s += "_dist";
        }
        if self.nonlinear {
            s += "_nl";
        }
        if let Some(n) = self.n {
            s += &format!("_n{n}");
        }
        s
    }
}

struct Out {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl Out {
    fn new(dir: &Path) -> anyhow::Result<Self> {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Out { dir: dir.to_path_buf(), written: vec![] })
    }

    fn write(&mut self, name: &str, bytes: &[u8]) -> anyhow::Result<()> {
        let p = self.dir.join(name);
        report::write_atomic(&p, bytes).with_context(|| format!("writing {}", p.display()))?;
        self.written.push(p);
        Ok(())
    }
}

#[derive(Serialize)]
struct RunSummary {
    strategy: Strategy,
    divergent_at: Option<f64>,
    sensor_reads: usize,
    metrics: Option<ResponseMetrics>,
}

/// Returns true when some run diverged.
fn cmd_simulate(l: &Loaded, flags: &Flags, out: &mut Out) -> anyhow::Result<bool> {
    let f = &l.file;
    let strategies = flags.strategies(&f.experiment.strategies);
    let scenarios = f.scenarios(&flags.options(), &strategies)?;
    let omega = scenarios[0].disturbance.map(|d| d.omega);
    let stem = flags.stem(&f.name);
    let mut summary = vec![];
    println!("{:<8} {:>12} {:>12} {:>14} {:>12} {:>8}", "strategy", "settling_s", "overshoot_%", "oscillation", "rms_error", "reads");
    for res in run_batch(&scenarios) {
        let r = res?;
        out.write(&format!("{stem}_{}.csv", r.strategy), &report::series_csv(&r.fine)?)?;
        let m = match r.divergent_at {
            Some(_) => None,
            None => Some(metrics(&r.fine, omega)?),
        };
        match (&m, r.divergent_at) {
            (Some(m), _) => println!(
                "{:<8} {:>12.3} {:>12.3} {:>14.6} {:>12.6} {:>8}",
                r.strategy.name(),
                m.settling_time_2pct,
                m.overshoot_pct,
                m.steady_oscillation_amplitude,
                m.rms_error,
                r.sensor_reads
            ),
            (None, Some(t)) => println!("{:<8} divergent at t = {t} s", r.strategy.name()),
            _ => unreachable!(),
        }
        summary.push(RunSummary { strategy: r.strategy, divergent_at: r.divergent_at, sensor_reads: r.sensor_reads, metrics: m });
    }
    let prov = Provenance::new(&f.name, &l.source, flags.describe());
    out.write(&format!("{stem}_metrics.json"), &report::json(&prov, &summary)?)?;
    Ok(summary.iter().any(|s| s.divergent_at.is_some()))
}

#[derive(Serialize)]
struct BodeSummary {
    strategy: Strategy,
    channel: &'static str,
    spectral_radius: f64,
    bandwidth_rad_s: Option<f64>,
    points: usize,
}

fn cmd_freqresp(l: &Loaded, flags: &Flags, out: &mut Out) -> anyhow::Result<()> {
    let f = &l.file;
    let setup = f.setup(&flags.options())?;
    let grid = f.grid(flags.grid);
    let (channel, cname) = match flags.channel {
        ChannelArg::YR => (Channel::YvsR, "y_r"),
        ChannelArg::YD => (Channel::YvsD, "y_d"),
    };
    let stem = flags.stem(&f.name);
    let mut summary = vec![];
    for s in flags.strategies(&f.experiment.strategies) {
        let lcl = assemble(&setup, s, channel, OutputRate::N1Slots)?;
        let view = lcl.realization()?;
        let r = dr_bode(&view, &exclude_poles(&grid, &view))?;
        out.write(&format!("{stem}_bode_{s}_{cname}.csv"), &report::bode_csv(&r)?)?;
        let bw = r.bandwidth();
        println!("{:<8} {cname} bandwidth {}", s.name(), bw.map_or("none on grid".into(), |w| format!("{w:.5} rad/s")));
        summary.push(BodeSummary {
            strategy: s,
            channel: cname,
            spectral_radius: stability(&lcl).spectral_radius,
            bandwidth_rad_s: bw,
            points: r.omega.len(),
        });
    }
    let prov = Provenance::new(&f.name, &l.source, flags.describe());
    out.write(&format!("{stem}_bode_{cname}.json"), &report::json(&prov, &summary)?)?;
    Ok(())
}

#[derive(Serialize)]
struct QftSummary {
    strategy: Strategy,
    mu: f64,
    check_frequencies: Vec<f64>,
    scan: Vec<GainScanRow>,
}

fn cmd_qft(l: &Loaded, flags: &Flags, out: &mut Out) -> anyhow::Result<()> {
    let f = &l.file;
    let q = f.qft.as_ref().ok_or_else(|| Error::Scenario("file has no `qft` section".into()))?;
    let spec = f.qft_specification()?;
    let setup = f.setup(&flags.options())?;
    let gains = flags.gain_scan.clone().unwrap_or_else(|| q.gains.clone());
    if gains.iter().any(|g| !(*g > 0.0)) {
        return Err(Error::Scenario("gain scan values must be positive".into()).into());
    }
    let stem = flags.stem(&f.name);
    let mut bounds = vec![];
    for w in &spec.check_frequencies {
        bounds.push(boundary(&spec, *w, BoundaryKind::Stability)?);
        bounds.push(boundary(&spec, *w, BoundaryKind::Disturbance)?);
    }
    out.write(&format!("{stem}_qft_boundaries.csv"), &report::boundaries_csv(&bounds)?)?;
    let prov = Provenance::new(&f.name, &l.source, flags.describe());
    for s in flags.strategies(&q.strategies) {
        let locus = loop_gain(&setup, s, &spec.check_frequencies)?;
        out.write(&format!("{stem}_qft_locus_{s}.csv"), &report::locus_csv(&locus)?)?;
        let scan = gain_scan(&setup, s, &spec, &gains)?;
        out.write(&format!("{stem}_qft_scan_{s}.csv"), &report::gain_scan_csv(&scan)?)?;
        for row in &scan {
            println!(
                "{:<8} gain {:>8} radius {:>10.4} {:<8} locus {} (stability violations {}, disturbance violations {})",
                s.name(),
                row.gain,
                row.spectral_radius,
                if row.stable { "stable" } else { "unstable" },
                if row.report.pass { "pass" } else { "fail" },
                row.report.stability_violations.len(),
                row.report.disturbance_violations.len()
            );
        }
        let summary = QftSummary { strategy: s, mu: spec.mu, check_frequencies: spec.check_frequencies.clone(), scan };
        out.write(&format!("{stem}_qft_{s}.json"), &report::json(&prov, &summary)?)?;
    }
    Ok(())
}

#[derive(Serialize)]
struct UgvSummary {
    condition: &'static str,
    strategy: Strategy,
    rms_path_error_m: f64,
    max_path_error_m: f64,
    sensor_reads: usize,
    finished_at_s: Option<f64>,
    divergent_at_s: Option<f64>,
}

fn cmd_ugv(l: &Loaded, flags: &Flags, out: &mut Out) -> anyhow::Result<bool> {
    let f = &l.file;
    let strategies = flags.strategies(&f.experiment.strategies);
    let conditions = [
        ("ideal", RunOptions { nonlinear: flags.nonlinear, ..Default::default() }),
        ("mismatch", RunOptions { mpm: true, nonlinear: flags.nonlinear, ..Default::default() }),
        ("mismatch_disturbance", RunOptions { mpm: true, disturbance: true, nonlinear: flags.nonlinear, ..Default::default() }),
    ];
    let mut jobs = vec![];
    for (c, o) in &conditions {
        for s in &strategies {
            jobs.push((*c, f.ugv_scenario(o, *s)?));
        }
    }
    let runs: Vec<_> = {
        use rayon::prelude::*;
        jobs.par_iter().map(|(c, sc)| run_ugv(sc).map(|r| (*c, r))).collect::<Result<Vec<_>, _>>()?
    };
    let stem = flags.stem(&f.name);
    let mut summary = vec![];
    println!("{:<22} {:<8} {:>12} {:>12} {:>8} {:>10}", "condition", "strategy", "rms_err_m", "max_err_m", "reads", "finished_s");
    for (c, r) in &runs {
        out.write(&format!("{stem}_{c}_{}_trajectory.csv", r.strategy), &report::trajectory_csv(&r.trajectory)?)?;
        out.write(&format!("{stem}_{c}_{}_wheels.csv", r.strategy), &report::wheels_csv(&r.left, &r.right)?)?;
        println!(
            "{:<22} {:<8} {:>12.5} {:>12.5} {:>8} {:>10}",
            c,
            r.strategy.name(),
            r.rms_path_error,
            r.max_path_error,
            r.sensor_reads,
            r.finished_at.map_or("-".into(), |t| format!("{t:.1}"))
        );
        summary.push(UgvSummary {
            condition: c,
            strategy: r.strategy,
            rms_path_error_m: r.rms_path_error,
            max_path_error_m: r.max_path_error,
            sensor_reads: r.sensor_reads,
            finished_at_s: r.finished_at,
            divergent_at_s: r.divergent_at,
        });
    }
    let prov = Provenance::new(&f.name, &l.source, flags.describe());
    out.write(&format!("{stem}_ugv_metrics.json"), &report::json(&prov, &summary)?)?;
    Ok(summary.iter().any(|s| s.divergent_at_s.is_some()))
}

fn cmd_validate(l: &Loaded, flags: &Flags) -> anyhow::Result<()> {
    let f = &l.file;
    f.setup(&flags.options())?;
    if f.experiment.mpm.is_some() {
        f.setup(&RunOptions { mpm: true, ..flags.options() })?;
    }
    if f.qft.is_some() {
        f.qft_specification()?;
    }
    if f.ugv.is_some() {
        f.ugv_scenario(&flags.options(), Strategy::Mbdr)?;
    }
    println!("{}: ok ({} plants, N = {}, T = {} s)", f.name, f.plants.len(), f.scheme.n, f.scheme.period_s);
    Ok(())
}

fn exit_code(e: &anyhow::Error) -> u8 {
    match e.downcast_ref::<Error>() {
        Some(Error::Divergent(_)) => 3,
        Some(
            Error::Scenario(_)
            | Error::InvalidSystem(_)
            | Error::Improper { .. }
            | Error::InvalidPeriod(_)
            | Error::PeriodMismatch(..)
            | Error::Dimension(_)
            | Error::AlgebraicLoop(_)
            | Error::NonMinimumPhase(_)
            | Error::NotCoprime { .. },
        ) => 2,
        _ => 4,
    }
}

fn run(cli: &Cli) -> anyhow::Result<bool> {
    let flags = &cli.flags;
    match &cli.cmd {
        Command::Validate { file } => {
            cmd_validate(&load(file, flags)?, flags)?;
            Ok(false)
        }
        Command::Simulate { file } => cmd_simulate(&load(file, flags)?, flags, &mut Out::new(&flags.out_dir)?),
        Command::Freqresp { file } => cmd_freqresp(&load(file, flags)?, flags, &mut Out::new(&flags.out_dir)?).map(|_| false),
        Command::Qft { file } => cmd_qft(&load(file, flags)?, flags, &mut Out::new(&flags.out_dir)?).map(|_| false),
        Command::Ugv { file } => cmd_ugv(&load(file, flags)?, flags, &mut Out::new(&flags.out_dir)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(&cli) {
        Ok(false) => ExitCode::SUCCESS,
        Ok(true) => {
            eprintln!("drctl: at least one run diverged (|y| > 1e9); series were written up to that point");
            ExitCode::from(3)
        }
        Err(e) => {
            eprintln!("drctl: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

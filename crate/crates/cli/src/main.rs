use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use flightlab::dimension::{box_count, default_ladder, dyadic_ladder, fit_dimension, fit_whitney_dimension};
use flightlab::flights::{parse_csv_row, Engine, Scene};
use flightlab::stats::{
    bootstrap_tail_fit, compare, fit_tail, predict, Accumulator, Estimator, HistKind, Target, Verdict,
};
use flightlab::whitney::decompose_boundary;
use flightlab::{DistanceIndex, Error, Result};
use serde_json::json;

mod config;
mod pipeline;
mod svg;

use config::{parse_count, read_boundary, CampaignConfig, GeneratorSpec, Overrides, StatsSection};
use pipeline::{PresetName, VerifyOptions};

const WORKERS_ENV: &str = "FLIGHTLAB_WORKERS";

#[derive(Parser)]
#[command(name = "flightlab", version, about = "First-passage flights near fractal boundaries")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Output directory; nothing is written outside it.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,
    /// Worker threads (overrides FLIGHTLAB_WORKERS).
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Write a boundary file.
    Generate {
        #[command(subcommand)]
        what: Generate,
    },
    /// Box-counting dimension of a boundary.
    Dimension(DimensionArgs),
    /// Whitney level-set counts of a boundary.
    Whitney(WhitneyArgs),
    /// Run a flight campaign from a JSON config.
    Flights(FlightsArgs),
    /// Fit one tail of a flights CSV.
    Fit(FitArgs),
    /// Compare fitted exponents of a flights CSV with the predicted ones.
    Report(ReportArgs),
    /// Run a preset end to end; exit 0 iff every verdict passes.
    Verify(VerifyArgs),
}

#[derive(Subcommand)]
enum Generate {
    Saw {
        #[arg(long, default_value_t = 10_000)]
        steps: usize,
        #[arg(long, value_parser = parse_count, default_value = "100000")]
        attempts: u64,
        #[arg(long)]
        seed: u64,
    },
    Koch {
        #[arg(long)]
        iterations: u32,
    },
    Line {
        #[arg(long, default_value_t = 2)]
        dim: usize,
        #[arg(long, default_value_t = 16.0)]
        extent: f64,
    },
}

#[derive(Args)]
struct DimensionArgs {
    #[arg(long)]
    boundary: PathBuf,
    /// Finest ladder index; the ladder is diameter·2^-j for j = 1..=j_max.
    #[arg(long)]
    j_max: Option<u32>,
    /// Fit window `lo hi` in boundary units.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    window: Option<Vec<f64>>,
}

#[derive(Args)]
struct WhitneyArgs {
    #[arg(long)]
    boundary: PathBuf,
    /// Levels t = diameter·2^-j for j in j_min..=j_max.
    #[arg(long, default_value_t = 3)]
    j_min: u32,
    #[arg(long, default_value_t = 7)]
    j_max: u32,
}

#[derive(Args)]
struct FlightsArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    engine: Option<EngineArg>,
    #[arg(long, value_parser = parse_count)]
    flights: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    eps: Option<f64>,
    #[arg(long)]
    delta: Option<f64>,
    #[arg(long, value_parser = parse_count)]
    n_max: Option<u64>,
    #[arg(long)]
    r_esc: Option<f64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum EngineArg {
    Lattice,
    Wos,
}

#[derive(Clone, Copy, ValueEnum)]
enum KindArg {
    Survival,
    Theta,
    Psi,
}

impl KindArg {
    fn kind(self) -> HistKind {
        match self {
            KindArg::Survival => HistKind::Survival,
            KindArg::Theta => HistKind::ThetaR,
            KindArg::Psi => HistKind::PsiN,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum EstimatorArg {
    CcdfOls,
    DensityOls,
}

impl EstimatorArg {
    fn estimator(self) -> Estimator {
        match self {
            EstimatorArg::CcdfOls => Estimator::CcdfOls,
            EstimatorArg::DensityOls => Estimator::DensityOls,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long)]
    flights: PathBuf,
    #[arg(long, value_enum)]
    kind: KindArg,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], required = true)]
    window: Vec<f64>,
    #[arg(long, value_enum, default_value = "ccdf-ols")]
    estimator: EstimatorArg,
    /// Bootstrap resamples for a spread estimate (0 = off).
    #[arg(long, default_value_t = 0)]
    bootstrap: usize,
    #[arg(long, default_value_t = 0)]
    bootstrap_seed: u64,
    /// Keep flights whose start and end sides differ.
    #[arg(long)]
    all_sides: bool,
    #[arg(long)]
    svg: bool,
}

#[derive(Args)]
struct ReportArgs {
    #[arg(long)]
    flights: PathBuf,
    /// Boundary dimension d.
    #[arg(long)]
    d: f64,
    /// Ambient dimension.
    #[arg(long, default_value_t = 2)]
    de: u32,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], required = true)]
    r_window: Vec<f64>,
    #[arg(long, num_args = 2, value_names = ["LO", "HI"])]
    n_window: Option<Vec<f64>>,
    #[arg(long, default_value_t = 0.1)]
    tolerance: f64,
}

#[derive(Args)]
struct VerifyArgs {
    #[arg(long)]
    preset: String,
    #[arg(long, value_parser = parse_count)]
    flights: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    svg: bool,
    /// Also write the per-flight CSV.
    #[arg(long)]
    keep_flights: bool,
}

/// Failure modes mapped to exit codes.
enum Outcome {
    Ok,
    Failed,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::InsufficientData(_) => 3,
        _ => 2,
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::Failed) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn workers(flag: Option<usize>) -> Result<usize> {
    if let Some(w) = flag {
        return Ok(w.max(1));
    }
    match std::env::var(WORKERS_ENV) {
        Ok(v) => v
            .parse::<usize>()
            .map(|w| w.max(1))
            .map_err(|_| Error::Config(format!("{WORKERS_ENV}={v} is not a worker count"))),
        Err(_) => Ok(std::thread::available_parallelism().map_or(1, |n| n.get())),
    }
}

fn window(v: &[f64]) -> (f64, f64) {
    (v[0], v[1])
}

fn run(cli: Cli) -> Result<Outcome> {
    let out = cli.out.as_path();
    let workers = workers(cli.workers)?;
    match cli.command {
        Command::Generate { what } => generate(what, out),
        Command::Dimension(a) => dimension(a, out),
        Command::Whitney(a) => whitney(a, out),
        Command::Flights(a) => flights(a, out, workers),
        Command::Fit(a) => fit(a, out),
        Command::Report(a) => report(a, out),
        Command::Verify(a) => verify(a, out, workers),
    }
}

fn generate(what: Generate, out: &Path) -> Result<Outcome> {
    let spec = match what {
        Generate::Saw { steps, attempts, seed } => GeneratorSpec::Saw {
            n_steps: steps,
            n_pivot_attempts: attempts,
            seed,
        },
        Generate::Koch { iterations } => GeneratorSpec::Koch { iterations },
        Generate::Line { dim, extent } => GeneratorSpec::Line { dim, extent },
    };
    let b = spec.generate()?;
    fs::create_dir_all(out)?;
    let path = out.join("boundary.json");
    fs::write(&path, b.to_json_string(json!({ "generator": spec })))?;
    println!("{} ({}, diameter {:.6})", path.display(), b.kind(), b.diameter());
    Ok(Outcome::Ok)
}

fn dimension(a: DimensionArgs, out: &Path) -> Result<Outcome> {
    let (b, meta) = read_boundary(&a.boundary)?;
    let ladder = match a.j_max {
        Some(j) => dyadic_ladder(b.diameter(), 1, j),
        None => default_ladder(&b),
    };
    let series = box_count(&b, &ladder)?;
    let est = fit_dimension(&series, a.window.as_deref().map(window))?;
    fs::create_dir_all(out)?;
    pipeline::write_series_csv(&out.join("dimension.csv"), &series)?;
    pipeline::write_json(
        &out.join("dimension.json"),
        &json!({
            "config": { "boundary": a.boundary, "boundary_meta": meta, "ladder": ladder, "window": a.window },
            "series": series,
            "estimate": est,
        }),
    )?;
    println!("d = {:.4} ± {:.4} over {:?}", est.d, est.stderr, est.window);
    Ok(Outcome::Ok)
}

fn whitney(a: WhitneyArgs, out: &Path) -> Result<Outcome> {
    let (b, meta) = read_boundary(&a.boundary)?;
    if a.j_min > a.j_max {
        return Err(Error::Usage("j_min must not exceed j_max".into()));
    }
    let ix = DistanceIndex::build(&b)?;
    let ts = dyadic_ladder(b.diameter(), a.j_min, a.j_max);
    let finest = ts.last().copied().unwrap_or(1.0) / 8.0;
    let dec = decompose_boundary(&b, &ix, finest)?;
    let counts = dec.level_counts(&ts)?;
    let boxes = box_count(&b, &ts)?;
    fs::create_dir_all(out)?;
    let mut w = pipeline::create(&out.join("whitney_levels.csv"))?;
    writeln!(w, "t,cubes,boxes,ratio")?;
    for ((t, q), (_, n)) in counts.iter().zip(&boxes.points) {
        writeln!(w, "{t},{q},{n},{}", *q as f64 / *n as f64)?;
    }
    w.flush()?;
    let est = if counts.len() >= 4 {
        let lo = ts[ts.len() - 1];
        fit_whitney_dimension(&counts, Some((lo, ts[0]))).ok()
    } else {
        None
    };
    pipeline::write_json(
        &out.join("whitney.json"),
        &json!({
            "config": { "boundary": a.boundary, "boundary_meta": meta, "levels": ts },
            "root": dec.root,
            "params": dec.params,
            "total_cubes": dec.cubes.len(),
            "levels": counts,
            "estimate": est,
        }),
    )?;
    println!("{} cubes; levels {:?}", dec.cubes.len(), counts);
    Ok(Outcome::Ok)
}

fn flights(a: FlightsArgs, out: &Path, workers: usize) -> Result<Outcome> {
    let mut cfg = CampaignConfig::load(&a.config)?;
    cfg.apply(&Overrides {
        engine: a.engine.map(|e| match e {
            EngineArg::Lattice => Engine::Lattice,
            EngineArg::Wos => Engine::Wos,
        }),
        flights: a.flights,
        seed: a.seed,
        eps: a.eps,
        delta: a.delta,
        n_max: a.n_max,
        r_esc: a.r_esc,
    })?;
    let out = cfg.output_dir.as_deref().map_or(out.to_path_buf(), |d| out.join(d));
    let (boundary, meta) = cfg.load_boundary()?;
    let scene = Scene::new(boundary)?;
    let sampler = pipeline::build_sampler(&scene, &cfg.start)?;
    let resolved = cfg.engine_config().resolve(cfg.start.eps, scene.diameter)?;
    fs::create_dir_all(&out)?;
    let mut acc = Accumulator::new(cfg.stats.filter(), cfg.stats.binning());
    let mut w = pipeline::create(&out.join("flights.csv"))?;
    let summary = pipeline::run_into(&scene, &sampler, &resolved, workers, &mut acc, Some(&mut w))?;
    w.flush()?;
    // worker count is recorded but never affects the records
    pipeline::write_json(
        &out.join("flights.json"),
        &json!({
            "config": cfg,
            "boundary_meta": meta,
            "resolved": {
                "engine": resolved.engine,
                "delta": resolved.delta,
                "n_max": resolved.n_max,
                "r_esc": resolved.r_esc,
                "seed": resolved.seed,
                "n_flights": resolved.n_flights,
            },
            "starts": sampler.len(),
            "flights": summary.flights,
            "errors": summary.errors,
            "error_samples": summary.error_samples,
            "tally": acc.tally,
        }),
    )?;
    println!(
        "{} flights, {} errors, censoring {:.4}",
        summary.flights,
        summary.errors,
        acc.tally.censoring_fraction()
    );
    Ok(Outcome::Ok)
}

fn fit(a: FitArgs, out: &Path) -> Result<Outcome> {
    let stats = StatsSection {
        same_side: !a.all_sides,
        ..StatsSection::default()
    };
    let kind = a.kind.kind();
    let (acc, values) = read_flights(&a.flights, &stats, kind)?;
    let hist = pipeline::histogram(&acc, kind);
    let win = window(&a.window);
    let result = fit_tail(hist, win, a.estimator.estimator())?;
    let spread = if a.bootstrap > 0 {
        Some(bootstrap_tail_fit(
            &values,
            kind,
            stats.binning(),
            win,
            a.estimator.estimator(),
            a.bootstrap,
            a.bootstrap_seed,
        )?)
    } else {
        None
    };
    fs::create_dir_all(out)?;
    let name = pipeline::hist_name(kind);
    fs::write(out.join(format!("hist_{name}.csv")), hist.to_csv())?;
    pipeline::write_json(
        &out.join(format!("fit_{name}.json")),
        &json!({
            "config": {
                "flights": a.flights,
                "window": win,
                "estimator": a.estimator.estimator(),
                "same_side": stats.same_side,
                "bootstrap": a.bootstrap,
                "bootstrap_seed": a.bootstrap_seed,
            },
            "fit": result,
            "bootstrap": spread.map(|(mean, sd)| json!({ "mean": mean, "sd": sd })),
            "tally": acc.tally,
        }),
    )?;
    if a.svg {
        fs::write(out.join(format!("{name}.svg")), pipeline::fit_svg(hist, &result))?;
    }
    println!("{name}: exponent {:.4} ± {:.4}", result.exponent, result.stderr);
    Ok(Outcome::Ok)
}

/// Accumulates a flights CSV; also returns the `kind` values of the flights
/// that passed the filter, for resampling.
fn read_flights(path: &Path, stats: &StatsSection, kind: HistKind) -> Result<(Accumulator, Vec<f64>)> {
    let f = fs::File::open(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    let mut acc = Accumulator::new(stats.filter(), stats.binning());
    let mut values = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if i == 0 || line.trim().is_empty() {
            continue;
        }
        let (_, _, rec) = parse_csv_row(&line)?;
        let before = acc.tally.used;
        acc.push(&rec);
        if acc.tally.used > before {
            values.push(if kind == HistKind::PsiN { rec.n } else { rec.r });
        }
    }
    Ok((acc, values))
}

fn report(a: ReportArgs, out: &Path) -> Result<Outcome> {
    let stats = StatsSection::default();
    let (acc, _) = read_flights(&a.flights, &stats, HistKind::Survival)?;
    let pred = predict(a.d, a.de)?;
    let r_win = window(&a.r_window);
    let mut verdicts: Vec<Verdict> = Vec::new();
    let mut fits = Vec::new();
    let mut targets = vec![(Target::Survival, r_win), (Target::Beta, r_win)];
    if let Some(n) = &a.n_window {
        targets.push((Target::Alpha, window(n)));
    }
    for (t, win) in targets {
        let f = fit_tail(pipeline::histogram(&acc, pipeline::target_kind(t)), win, Estimator::CcdfOls)?;
        verdicts.push(compare(&f, &pred, t, a.tolerance)?);
        fits.push(f);
    }
    let pass = verdicts.iter().all(|v| v.pass);
    fs::create_dir_all(out)?;
    pipeline::write_json(
        &out.join("verdicts.json"),
        &json!({
            "config": { "flights": a.flights, "d": a.d, "d_e": a.de, "r_window": r_win, "n_window": a.n_window, "tolerance": a.tolerance },
            "prediction": pred,
            "fits": fits,
            "verdicts": verdicts,
            "tally": acc.tally,
            "pass": pass,
        }),
    )?;
    for v in &verdicts {
        println!(
            "{:?}: fitted {:.4} expected {:.4} ± {} -> {}",
            v.target,
            v.fitted_slope,
            v.expected_slope,
            v.tolerance,
            if v.pass { "pass" } else { "FAIL" }
        );
    }
    Ok(if pass { Outcome::Ok } else { Outcome::Failed })
}

fn verify(a: VerifyArgs, out: &Path, workers: usize) -> Result<Outcome> {
    let name = PresetName::parse(&a.preset)?;
    let report = pipeline::verify(
        name,
        &VerifyOptions {
            flights: a.flights,
            seed: a.seed,
            workers,
            svg: a.svg,
            keep_flights: a.keep_flights,
        },
        out,
    )?;
    let mark = |p: bool| if p { "pass" } else { "FAIL" };
    let d = &report.dimension;
    println!(
        "{} dimension: {:.4} ± {:.4} (expected {:.4} ± {}) {}",
        name.as_str(),
        d.estimate.d,
        d.estimate.stderr,
        d.expected,
        d.tolerance,
        mark(d.pass)
    );
    for v in &report.verdicts {
        println!(
            "{} {:?}: fitted {:.4} expected {:.4} ± {} (+2·{:.4}) {}",
            name.as_str(),
            v.target,
            v.fitted_slope,
            v.expected_slope,
            v.tolerance,
            v.stderr,
            mark(v.pass)
        );
    }
    println!(
        "{} censoring: {:.5} (< {}) {}",
        name.as_str(),
        report.censoring.fraction,
        report.censoring.limit,
        mark(report.censoring.pass)
    );
    Ok(if report.pass { Outcome::Ok } else { Outcome::Failed })
}

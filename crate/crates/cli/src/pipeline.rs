//! Campaign execution and the preset acceptance scenarios behind `verify`.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use flightlab::dimension::{box_count, default_ladder, fit_dimension, BoxCountSeries, DimensionEstimate};
use flightlab::flights::{
    csv_row, run_campaign, CampaignSummary, Engine, Resolved, Scene, StartMode, StartSampler, StartSpec, CSV_HEADER,
};
use flightlab::stats::{
    compare, fit_tail, predict, Accumulator, Estimator, FilterTally, HistKind, TailFit, TailHistogram, Target, Verdict,
};
use flightlab::whitney::decompose_boundary;
use flightlab::{Error, Result};
use serde::Serialize;
use serde_json::{json, Value};

use crate::config::{EngineSection, GeneratorSpec, StatsSection};
use crate::svg;

pub fn build_sampler(scene: &Scene, start: &StartSpec) -> Result<StartSampler> {
    match start.mode {
        StartMode::WhitneyUniform => {
            let dec = decompose_boundary(&scene.boundary, &scene.index, start.eps / 16.0)?;
            StartSampler::whitney(&dec, start.eps)
        }
        StartMode::LatticeAdjacentUniform => StartSampler::lattice_adjacent(&scene.boundary),
    }
}

/// Runs a campaign into `acc`, streaming CSV rows to `csv` when given.
pub fn run_into(
    scene: &Scene,
    sampler: &StartSampler,
    cfg: &Resolved,
    workers: usize,
    acc: &mut Accumulator,
    mut csv: Option<&mut dyn Write>,
) -> Result<CampaignSummary> {
    if let Some(w) = csv.as_mut() {
        writeln!(w, "{CSV_HEADER}")?;
    }
    run_campaign(scene, sampler, cfg, workers, |id, stream, rec| {
        acc.push(rec);
        if let Some(w) = csv.as_mut() {
            writeln!(w, "{}", csv_row(id, stream, rec))?;
        }
        Ok(())
    })
}

pub fn write_json(path: &Path, v: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(v)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

pub fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

pub fn hist_name(kind: HistKind) -> &'static str {
    match kind {
        HistKind::PsiN => "psi_n",
        HistKind::ThetaR => "theta_r",
        HistKind::Survival => "survival",
    }
}

pub fn histogram(acc: &Accumulator, kind: HistKind) -> &TailHistogram {
    match kind {
        HistKind::PsiN => &acc.psi,
        HistKind::ThetaR => &acc.theta,
        HistKind::Survival => &acc.survival,
    }
}

/// SVG of the points a fit used, with its regression line.
pub fn fit_svg(hist: &TailHistogram, fit: &TailFit) -> String {
    let edges = hist.edges();
    let pts: Vec<(f64, f64)> = match fit.estimator {
        Estimator::CcdfOls => edges.iter().copied().zip(hist.ccdf()).collect(),
        Estimator::DensityOls => (0..hist.counts.len())
            .map(|i| ((edges[i] * edges[i + 1]).sqrt(), hist.density()[i]))
            .collect(),
    };
    let slope = fit.ccdf_slope.unwrap_or(fit.exponent);
    let title = format!("{} ({:?})", hist_name(fit.kind), fit.estimator);
    svg::loglog(&title, &pts, Some((slope, fit.intercept, fit.window)))
}

pub fn target_kind(t: Target) -> HistKind {
    match t {
        Target::Alpha => HistKind::PsiN,
        Target::Beta => HistKind::ThetaR,
        Target::Survival => HistKind::Survival,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PresetName {
    Line2d,
    Plane3d,
    Koch,
    Saw,
}

impl PresetName {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "line2d" => Ok(PresetName::Line2d),
            "plane3d" => Ok(PresetName::Plane3d),
            "koch" => Ok(PresetName::Koch),
            "saw" => Ok(PresetName::Saw),
            _ => Err(Error::Usage(format!("unknown preset {s}; expected line2d, plane3d, koch or saw"))),
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            PresetName::Line2d => "line2d",
            PresetName::Plane3d => "plane3d",
            PresetName::Koch => "koch",
            PresetName::Saw => "saw",
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct Check {
    pub target: Target,
    pub tolerance: f64,
}

/// Fit window, absolute or in units of a scale known only after generation.
#[derive(Clone, Copy, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    Absolute(f64, f64),
    /// `(lo, diameter² / div)` for step counts.
    DiameterSquared { lo: f64, div: f64 },
}

impl Window {
    fn resolve(self, diameter: f64) -> (f64, f64) {
        match self {
            Window::Absolute(lo, hi) => (lo, hi),
            Window::DiameterSquared { lo, div } => (lo, diameter * diameter / div),
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct Preset {
    pub name: &'static str,
    pub generator: GeneratorSpec,
    /// Boundary dimension used for the predicted exponents.
    pub d: f64,
    pub d_e: u32,
    pub dimension_tolerance: f64,
    pub start: StartSpec,
    pub engine: EngineSection,
    pub seed: u64,
    pub r_window: Window,
    pub n_window: Option<Window>,
    pub checks: Vec<Check>,
    pub max_censoring: f64,
}

pub fn preset(name: PresetName) -> Preset {
    let wos = |n_flights, delta, r_esc| EngineSection {
        engine: Engine::Wos,
        delta,
        n_max: 1_000_000,
        r_esc,
        n_flights,
    };
    let survival = |tolerance| Check {
        target: Target::Survival,
        tolerance,
    };
    match name {
        PresetName::Line2d => Preset {
            name: "line2d",
            generator: GeneratorSpec::Line { dim: 2, extent: 16.0 },
            d: 1.0,
            d_e: 2,
            dimension_tolerance: 0.02,
            start: StartSpec {
                mode: StartMode::WhitneyUniform,
                eps: 1.0,
            },
            engine: wos(1_000_000, Some(0.01), Some(1e5)),
            seed: 1,
            r_window: Window::Absolute(10.0, 1e3),
            n_window: None,
            checks: vec![
                survival(0.05),
                Check {
                    target: Target::Beta,
                    tolerance: 0.1,
                },
            ],
            max_censoring: 0.05,
        },
        PresetName::Plane3d => Preset {
            name: "plane3d",
            generator: GeneratorSpec::Line { dim: 3, extent: 16.0 },
            d: 2.0,
            d_e: 3,
            dimension_tolerance: 0.02,
            start: StartSpec {
                mode: StartMode::WhitneyUniform,
                eps: 1.0,
            },
            engine: wos(1_000_000, Some(0.01), Some(1e5)),
            seed: 1,
            r_window: Window::Absolute(10.0, 1e3),
            n_window: None,
            checks: vec![survival(0.05)],
            max_censoring: 0.05,
        },
        PresetName::Koch => {
            let eps = 2f64.powi(-9);
            Preset {
                name: "koch",
                generator: GeneratorSpec::Koch { iterations: 7 },
                d: 4f64.ln() / 3f64.ln(),
                d_e: 2,
                dimension_tolerance: 0.03,
                start: StartSpec {
                    mode: StartMode::WhitneyUniform,
                    eps,
                },
                engine: wos(2_000_000, None, None),
                seed: 1,
                r_window: Window::Absolute(10.0 * eps, 0.1),
                n_window: None,
                checks: vec![survival(0.08)],
                max_censoring: 0.05,
            }
        }
        PresetName::Saw => Preset {
            name: "saw",
            generator: GeneratorSpec::Saw {
                n_steps: 10_000,
                n_pivot_attempts: 100_000,
                seed: 1,
            },
            d: 4.0 / 3.0,
            d_e: 2,
            dimension_tolerance: 0.03,
            start: StartSpec {
                mode: StartMode::LatticeAdjacentUniform,
                eps: 1.0,
            },
            engine: EngineSection {
                engine: Engine::Lattice,
                delta: None,
                n_max: 10_000_000,
                r_esc: None,
                n_flights: 10_000_000,
            },
            seed: 1,
            // N^{3/4}/10 for N = 10^4 steps
            r_window: Window::Absolute(10.0, 100.0),
            n_window: Some(Window::DiameterSquared { lo: 100.0, div: 10.0 }),
            checks: vec![
                Check {
                    target: Target::Beta,
                    tolerance: 0.1,
                },
                Check {
                    target: Target::Alpha,
                    tolerance: 0.1,
                },
            ],
            max_censoring: 0.05,
        },
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct DimensionCheck {
    pub estimate: DimensionEstimate,
    pub expected: f64,
    pub tolerance: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct CensoringCheck {
    pub fraction: f64,
    pub limit: f64,
    pub pass: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub preset: Preset,
    pub resolved: Value,
    pub dimension: DimensionCheck,
    pub fits: Vec<TailFit>,
    pub verdicts: Vec<Verdict>,
    pub censoring: CensoringCheck,
    pub tally: FilterTally,
    pub flights: u64,
    pub flight_errors: u64,
    pub pass: bool,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyOptions {
    pub flights: Option<u64>,
    pub seed: Option<u64>,
    pub workers: usize,
    pub svg: bool,
    pub keep_flights: bool,
}

/// generate → dimension → flights → fit → compare, writing every artifact into `out`.
pub fn verify(name: PresetName, opts: &VerifyOptions, out: &Path) -> Result<VerifyReport> {
    let mut p = preset(name);
    if let Some(n) = opts.flights {
        p.engine.n_flights = n;
    }
    if let Some(s) = opts.seed {
        p.seed = s;
    }
    fs::create_dir_all(out)?;

    let boundary = p.generator.generate()?;
    let meta = json!({ "generator": p.generator });
    fs::write(out.join("boundary.json"), boundary.to_json_string(meta))?;

    let series: BoxCountSeries = box_count(&boundary, &default_ladder(&boundary))?;
    let estimate = fit_dimension(&series, None)?;
    write_series_csv(&out.join("dimension.csv"), &series)?;
    let dimension = DimensionCheck {
        estimate,
        expected: p.d,
        tolerance: p.dimension_tolerance,
        pass: (estimate.d - p.d).abs() <= p.dimension_tolerance,
    };

    let scene = Scene::new(boundary)?;
    let sampler = build_sampler(&scene, &p.start)?;
    let engine = flightlab::flights::EngineConfig {
        engine: p.engine.engine,
        delta: p.engine.delta,
        n_max: p.engine.n_max,
        r_esc: p.engine.r_esc,
        seed: p.seed,
        n_flights: p.engine.n_flights,
    };
    let resolved = engine.resolve(p.start.eps, scene.diameter)?;
    let stats = StatsSection::default();
    let mut acc = Accumulator::new(stats.filter(), stats.binning());
    let summary = if opts.keep_flights {
        let mut w = create(&out.join("flights.csv"))?;
        let s = run_into(&scene, &sampler, &resolved, opts.workers, &mut acc, Some(&mut w))?;
        w.flush()?;
        s
    } else {
        run_into(&scene, &sampler, &resolved, opts.workers, &mut acc, None)?
    };

    let pred = predict(p.d, p.d_e)?;
    let r_window = p.r_window.resolve(scene.diameter);
    let mut fits = Vec::new();
    let mut verdicts = Vec::new();
    for c in &p.checks {
        let kind = target_kind(c.target);
        let window = match kind {
            HistKind::PsiN => p
                .n_window
                .ok_or_else(|| Error::Config("alpha check without a step window".into()))?
                .resolve(scene.diameter),
            _ => r_window,
        };
        let hist = histogram(&acc, kind);
        let fit = fit_tail(hist, window, Estimator::CcdfOls)?;
        verdicts.push(compare(&fit, &pred, c.target, c.tolerance)?);
        if opts.svg {
            fs::write(out.join(format!("{}.svg", hist_name(kind))), fit_svg(hist, &fit))?;
        }
        fits.push(fit);
    }
    for kind in [HistKind::Survival, HistKind::ThetaR, HistKind::PsiN] {
        fs::write(
            out.join(format!("hist_{}.csv", hist_name(kind))),
            histogram(&acc, kind).to_csv(),
        )?;
    }
    let fraction = acc.tally.censoring_fraction();
    let censoring = CensoringCheck {
        fraction,
        limit: p.max_censoring,
        pass: fraction < p.max_censoring,
    };
    let pass = dimension.pass && censoring.pass && verdicts.iter().all(|v| v.pass);
    let report = VerifyReport {
        resolved: json!({
            "engine": {
                "engine": resolved.engine,
                "delta": resolved.delta,
                "n_max": resolved.n_max,
                "r_esc": resolved.r_esc,
                "seed": resolved.seed,
                "n_flights": resolved.n_flights,
            },
            "r_window": r_window,
            "workers": opts.workers,
        }),
        preset: p,
        dimension,
        fits,
        verdicts,
        censoring,
        tally: acc.tally,
        flights: summary.flights,
        flight_errors: summary.errors,
        pass,
    };
    write_json(&out.join("verify.json"), &report)?;
    Ok(report)
}

pub fn write_series_csv(path: &Path, series: &BoxCountSeries) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "eps,count")?;
    for (e, n) in &series.points {
        writeln!(w, "{e},{n}")?;
    }
    w.flush()?;
    Ok(())
}

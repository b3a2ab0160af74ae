//! First-passage engines: the on-lattice walk and off-lattice walk-on-spheres,
//! start samplers, the level-hitting experiment and parallel campaigns.

use std::f64::consts::TAU;

use rand::{Rng, RngCore};
use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Boundary, DistanceIndex, Point, SideLabel};
use crate::rng::{self, StreamRng};
use crate::whitney::WhitneyDecomposition;

/// Flights per logical random stream. Streams, not threads, own the seeds.
pub const FLIGHTS_PER_STREAM: u64 = 1024;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Engine {
    Lattice,
    Wos,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StartMode {
    WhitneyUniform,
    LatticeAdjacentUniform,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StartSpec {
    pub mode: StartMode,
    pub eps: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FlightRecord {
    pub start: Point,
    pub end: Point,
    /// Step count (lattice) or pseudo-time `Σ R²/d_e` (walk-on-spheres).
    pub n: f64,
    pub r: f64,
    pub start_side: SideLabel,
    pub end_side: SideLabel,
    pub censored: bool,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EngineConfig {
    pub engine: Engine,
    /// Absorption distance; `eps / 100` when unset.
    pub delta: Option<f64>,
    pub n_max: u64,
    /// Escape radius; four boundary diameters when unset.
    pub r_esc: Option<f64>,
    pub seed: u64,
    pub n_flights: u64,
}

/// An [`EngineConfig`] with defaults filled in and checked.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Resolved {
    pub engine: Engine,
    pub delta: f64,
    pub n_max: u64,
    pub r_esc: f64,
    pub seed: u64,
    pub n_flights: u64,
}

impl EngineConfig {
    pub fn resolve(&self, eps: f64, diameter: f64) -> Result<Resolved> {
        let delta = self.delta.unwrap_or(eps / 100.0);
        let r_esc = self.r_esc.unwrap_or(4.0 * diameter);
        if !(delta > 0.0) {
            return Err(Error::Config(format!("delta must be positive, got {delta}")));
        }
        if self.n_max < 1 {
            return Err(Error::Config("n_max must be at least 1".into()));
        }
        if !(r_esc > eps) {
            return Err(Error::Config(format!("r_esc {r_esc} must exceed eps {eps}")));
        }
        Ok(Resolved {
            engine: self.engine,
            delta,
            n_max: self.n_max,
            r_esc,
            seed: self.seed,
            n_flights: self.n_flights,
        })
    }
}

/// Absorbing sites of a lattice path: every site at L1 distance ≤ 1 from a vertex.
#[derive(Clone, Debug)]
pub struct LatticeMask {
    min: [i64; 2],
    w: usize,
    h: usize,
    bits: Vec<u64>,
}

impl LatticeMask {
    pub fn new(path: &[[i64; 2]]) -> Self {
        let mut lo = [i64::MAX; 2];
        let mut hi = [i64::MIN; 2];
        for v in path {
            for k in 0..2 {
                lo[k] = lo[k].min(v[k] - 1);
                hi[k] = hi[k].max(v[k] + 1);
            }
        }
        let w = (hi[0] - lo[0] + 1) as usize;
        let h = (hi[1] - lo[1] + 1) as usize;
        let mut m = LatticeMask {
            min: lo,
            w,
            h,
            bits: vec![0; (w * h).div_ceil(64)],
        };
        for v in path {
            for [dx, dy] in [[0, 0], [1, 0], [-1, 0], [0, 1], [0, -1]] {
                let i = m.slot(v[0] + dx, v[1] + dy).unwrap();
                m.bits[i / 64] |= 1 << (i % 64);
            }
        }
        m
    }

    #[inline]
    fn slot(&self, x: i64, y: i64) -> Option<usize> {
        let ux = x.wrapping_sub(self.min[0]) as u64;
        let uy = y.wrapping_sub(self.min[1]) as u64;
        if ux < self.w as u64 && uy < self.h as u64 {
            Some(uy as usize * self.w + ux as usize)
        } else {
            None
        }
    }

    #[inline]
    pub fn absorbing(&self, x: i64, y: i64) -> bool {
        match self.slot(x, y) {
            Some(i) => self.bits[i / 64] >> (i % 64) & 1 == 1,
            None => false,
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }
}

/// A boundary together with the structures flights need.
pub struct Scene {
    pub boundary: Boundary,
    pub index: DistanceIndex,
    pub lattice: Option<LatticeMask>,
    pub diameter: f64,
}

impl Scene {
    pub fn new(boundary: Boundary) -> Result<Self> {
        let index = DistanceIndex::build(&boundary)?;
        let lattice = match &boundary {
            Boundary::LatticePath2d { vertices } => Some(LatticeMask::new(vertices)),
            _ => None,
        };
        let diameter = boundary.diameter();
        Ok(Scene {
            boundary,
            index,
            lattice,
            diameter,
        })
    }

    pub fn dim(&self) -> usize {
        self.boundary.ambient_dim()
    }

    /// Side label; the plane splits by the sign of `z`.
    pub fn side(&self, p: Point) -> SideLabel {
        if let Boundary::Plane3d { .. } = self.boundary {
            return if p.z() > 0.0 {
                SideLabel::Left
            } else if p.z() < 0.0 {
                SideLabel::Right
            } else {
                SideLabel::Ambiguous
            };
        }
        self.index.side_of(p).unwrap_or(SideLabel::Ambiguous)
    }
}

/// Uniform source of start points.
#[derive(Clone, Debug)]
pub enum StartSampler {
    Centers(Vec<Point>),
    Sites(Vec<[i64; 2]>),
}

impl StartSampler {
    /// Centres of the cubes of the level set at `eps`.
    pub fn whitney(dec: &WhitneyDecomposition, eps: f64) -> Result<Self> {
        let level = dec.level_cubes(eps)?;
        if level.cubes.is_empty() {
            return Err(Error::OutOfRange(format!("no Whitney cubes at level {eps}")));
        }
        Ok(StartSampler::Centers(level.cubes.iter().map(|q| q.center).collect()))
    }

    /// Sites at unit distance from the path that are not on it.
    pub fn lattice_adjacent(boundary: &Boundary) -> Result<Self> {
        let Boundary::LatticePath2d { vertices } = boundary else {
            return Err(Error::Config(format!(
                "lattice starts need a lattice path, got {}",
                boundary.kind()
            )));
        };
        let on: FxHashSet<[i64; 2]> = vertices.iter().copied().collect();
        let mut sites: Vec<[i64; 2]> = vertices
            .iter()
            .flat_map(|v| [[1, 0], [-1, 0], [0, 1], [0, -1]].map(|[dx, dy]| [v[0] + dx, v[1] + dy]))
            .filter(|s| !on.contains(s))
            .collect();
        sites.sort_unstable();
        sites.dedup();
        if sites.is_empty() {
            return Err(Error::OutOfRange("path has no adjacent sites".into()));
        }
        Ok(StartSampler::Sites(sites))
    }

    pub fn len(&self) -> usize {
        match self {
            StartSampler::Centers(c) => c.len(),
            StartSampler::Sites(s) => s.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Point {
        match self {
            StartSampler::Centers(c) => c[rng.random_range(0..c.len())],
            StartSampler::Sites(s) => {
                let v = s[rng.random_range(0..s.len())];
                Point::new2(v[0] as f64, v[1] as f64)
            }
        }
    }
}

pub enum StartSource<'a> {
    Whitney(&'a WhitneyDecomposition),
    Lattice(&'a Boundary),
}

pub fn sample_start<R: Rng + ?Sized>(source: StartSource<'_>, spec: &StartSpec, rng: &mut R) -> Result<Point> {
    let sampler = match (spec.mode, source) {
        (StartMode::WhitneyUniform, StartSource::Whitney(dec)) => StartSampler::whitney(dec, spec.eps)?,
        (StartMode::LatticeAdjacentUniform, StartSource::Lattice(b)) => StartSampler::lattice_adjacent(b)?,
        _ => return Err(Error::Config("start mode does not match the start source".into())),
    };
    Ok(sampler.sample(rng))
}

/// Uniform unit vector in `dim` dimensions (2 or 3).
#[inline]
pub fn random_direction<R: Rng + ?Sized>(rng: &mut R, dim: usize) -> [f64; 3] {
    let phi = TAU * rng.random::<f64>();
    let (s, c) = phi.sin_cos();
    if dim == 3 {
        let z = 2.0 * rng.random::<f64>() - 1.0;
        let rho = (1.0 - z * z).max(0.0).sqrt();
        [rho * c, rho * s, z]
    } else {
        [c, s, 0.0]
    }
}

const STEPS: [[i64; 2]; 4] = [[1, 0], [-1, 0], [0, 1], [0, -1]];

/// Simple symmetric walk on Z² until it enters the absorbing set.
pub fn run_flight_lattice<R: RngCore + ?Sized>(
    scene: &Scene,
    start: Point,
    cfg: &Resolved,
    rng: &mut R,
) -> Result<FlightRecord> {
    let mask = scene
        .lattice
        .as_ref()
        .ok_or_else(|| Error::Config("lattice engine needs a lattice path".into()))?;
    let (sx, sy) = (start.x() as i64, start.y() as i64);
    let (mut x, mut y) = (sx, sy);
    let r_esc2 = cfg.r_esc * cfg.r_esc;
    let mut n = 0u64;
    let mut bits = 0u64;
    let mut left = 0u32;
    let censored = loop {
        if left == 0 {
            bits = rng.next_u64();
            left = 32;
        }
        let [dx, dy] = STEPS[(bits & 3) as usize];
        bits >>= 2;
        left -= 1;
        x += dx;
        y += dy;
        n += 1;
        if mask.absorbing(x, y) {
            break false;
        }
        if n >= cfg.n_max {
            break true;
        }
        let (ex, ey) = ((x - sx) as f64, (y - sy) as f64);
        if ex * ex + ey * ey > r_esc2 {
            break true;
        }
    };
    let end = Point::new2(x as f64, y as f64);
    Ok(FlightRecord {
        start,
        end,
        n: n as f64,
        r: end.dist(&start),
        start_side: scene.side(start),
        end_side: scene.side(end),
        censored,
    })
}

/// Walk-on-spheres until within `delta` of the boundary.
pub fn run_flight_wos<R: Rng + ?Sized>(
    scene: &Scene,
    start: Point,
    cfg: &Resolved,
    rng: &mut R,
) -> Result<FlightRecord> {
    let dim = scene.dim();
    let de = dim as f64;
    let mut p = start;
    let mut time = 0.0;
    let mut jumps = 0u64;
    let (end, censored) = loop {
        let near = scene.index.nearest(p)?;
        if near.distance < cfg.delta {
            break (near.point, false);
        }
        if jumps >= cfg.n_max {
            break (p, true);
        }
        let radius = near.distance;
        time += radius * radius / de;
        p = p.offset(random_direction(rng, dim), radius);
        jumps += 1;
        if p.dist(&start) > cfg.r_esc {
            break (p, true);
        }
    };
    // the absorbed end point sits on the curve; its side is read just before contact
    let end_side = if censored { scene.side(end) } else { scene.side(p) };
    Ok(FlightRecord {
        start,
        end,
        n: time,
        r: end.dist(&start),
        start_side: scene.side(start),
        end_side,
        censored,
    })
}

pub fn run_flight<R: RngCore + ?Sized>(
    scene: &Scene,
    start: Point,
    cfg: &Resolved,
    rng: &mut R,
) -> Result<FlightRecord> {
    match cfg.engine {
        Engine::Lattice => run_flight_lattice(scene, start, cfg, rng),
        Engine::Wos => run_flight_wos(scene, start, cfg, rng),
    }
}

/// Fraction of walk-on-spheres flights from Whitney starts at level `eps` that
/// reach distance `r` from the boundary before coming within `eps/100` of it.
pub fn level_hit_experiment(
    dec: &WhitneyDecomposition,
    index: &DistanceIndex,
    eps: f64,
    r: f64,
    n_flights: u64,
    seed: u64,
) -> Result<f64> {
    if r <= eps {
        return Ok(1.0);
    }
    if r >= dec.diameter / 2.0 {
        return Err(Error::OutOfRange(format!(
            "level {r} is not below half the diameter {}",
            dec.diameter
        )));
    }
    let sampler = StartSampler::whitney(dec, eps)?;
    let delta = eps / 100.0;
    let dim = index.ambient_dim();
    let blocks = n_flights.div_ceil(FLIGHTS_PER_STREAM);
    let hits: Result<Vec<u64>> = (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut rng = rng::stream(seed, b);
            let count = FLIGHTS_PER_STREAM.min(n_flights - b * FLIGHTS_PER_STREAM);
            let mut hits = 0;
            for _ in 0..count {
                let mut p = sampler.sample(&mut rng);
                loop {
                    let d = index.nearest(p)?.distance;
                    if d >= r {
                        hits += 1;
                        break;
                    }
                    if d < delta {
                        break;
                    }
                    p = p.offset(random_direction(&mut rng, dim), d);
                }
            }
            Ok(hits)
        })
        .collect();
    Ok(hits?.iter().sum::<u64>() as f64 / n_flights.max(1) as f64)
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CampaignSummary {
    pub flights: u64,
    pub errors: u64,
    /// First few error messages, by flight id.
    pub error_samples: Vec<(u64, String)>,
}

const ERROR_SAMPLES: usize = 16;

/// Runs `cfg.n_flights` flights on `workers` threads.
///
/// Flight `i` belongs to stream `i / FLIGHTS_PER_STREAM`, whose generator is
/// seeded from `(seed, stream)`, so the record sequence handed to `sink` as
/// `(flight_id, stream, record)` never depends on `workers`. Failed flights are
/// counted and skipped.
pub fn run_campaign<F>(
    scene: &Scene,
    sampler: &StartSampler,
    cfg: &Resolved,
    workers: usize,
    mut sink: F,
) -> Result<CampaignSummary>
where
    F: FnMut(u64, u64, &FlightRecord) -> Result<()>,
{
    if cfg.engine == Engine::Lattice && scene.lattice.is_none() {
        return Err(Error::Config("lattice engine needs a lattice path".into()));
    }
    if cfg.engine == Engine::Wos && matches!(sampler, StartSampler::Sites(_)) && scene.lattice.is_none() {
        return Err(Error::Config("lattice starts need a lattice path".into()));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    let blocks = cfg.n_flights.div_ceil(FLIGHTS_PER_STREAM);
    let batch = (workers.max(1) as u64) * 8;
    let mut summary = CampaignSummary::default();
    let mut b0 = 0;
    while b0 < blocks {
        let b1 = (b0 + batch).min(blocks);
        let results: Vec<Vec<(u64, Result<FlightRecord>)>> = pool.install(|| {
            (b0..b1)
                .into_par_iter()
                .map(|b| run_block(scene, sampler, cfg, b))
                .collect()
        });
        for (b, block) in (b0..b1).zip(results) {
            for (id, rec) in block {
                match rec {
                    Ok(rec) => {
                        summary.flights += 1;
                        sink(id, b, &rec)?;
                    }
                    Err(e) => {
                        summary.errors += 1;
                        if summary.error_samples.len() < ERROR_SAMPLES {
                            summary.error_samples.push((id, e.to_string()));
                        }
                    }
                }
            }
        }
        b0 = b1;
    }
    Ok(summary)
}

fn run_block(scene: &Scene, sampler: &StartSampler, cfg: &Resolved, b: u64) -> Vec<(u64, Result<FlightRecord>)> {
    let mut rng: StreamRng = rng::stream(cfg.seed, b);
    let first = b * FLIGHTS_PER_STREAM;
    let last = (first + FLIGHTS_PER_STREAM).min(cfg.n_flights);
    (first..last)
        .map(|id| {
            let start = sampler.sample(&mut rng);
            (id, run_flight(scene, start, cfg, &mut rng))
        })
        .collect()
}

/// Collects a whole campaign in memory.
pub fn collect_campaign(
    scene: &Scene,
    sampler: &StartSampler,
    cfg: &Resolved,
    workers: usize,
) -> Result<(Vec<FlightRecord>, CampaignSummary)> {
    let mut out = Vec::with_capacity(cfg.n_flights as usize);
    let summary = run_campaign(scene, sampler, cfg, workers, |_, _, r| {
        out.push(*r);
        Ok(())
    })?;
    Ok((out, summary))
}

pub const CSV_HEADER: &str = "flight_id,worker,n,r,start_side,end_side,censored";

pub fn csv_row(flight_id: u64, worker: u64, rec: &FlightRecord) -> String {
    format!(
        "{flight_id},{worker},{},{},{},{},{}",
        rec.n, rec.r, rec.start_side, rec.end_side, rec.censored
    )
}

/// Parses one data row of the flight CSV back into `(flight_id, worker, record)`.
/// Start and end points are not stored; they come back as the origin.
pub fn parse_csv_row(line: &str) -> Result<(u64, u64, FlightRecord)> {
    let f: Vec<&str> = line.trim().split(',').collect();
    if f.len() != 7 {
        return Err(Error::Config(format!("expected 7 CSV fields, got {}: {line}", f.len())));
    }
    let bad = |what: &str| Error::Config(format!("bad {what} in CSV row: {line}"));
    let side = |s: &str| match s {
        "left" => Ok(SideLabel::Left),
        "right" => Ok(SideLabel::Right),
        "ambiguous" => Ok(SideLabel::Ambiguous),
        _ => Err(bad("side")),
    };
    let origin = Point::new2(0.0, 0.0);
    Ok((
        f[0].parse().map_err(|_| bad("flight_id"))?,
        f[1].parse().map_err(|_| bad("worker"))?,
        FlightRecord {
            start: origin,
            end: origin,
            n: f[2].parse().map_err(|_| bad("n"))?,
            r: f[3].parse().map_err(|_| bad("r"))?,
            start_side: side(f[4])?,
            end_side: side(f[5])?,
            censored: f[6].parse().map_err(|_| bad("censored"))?,
        },
    ))
}

//! Dyadic Whitney decomposition of the complement of a boundary.
//!
//! A cube `Q` of side `|Q|` is kept when `c1·|Q| ≤ dist(Q, ∂Ω) ≤ c2·|Q|`.
//! `dist(Q, ∂Ω)` is bracketed from the centre distance `d_c`:
//! `d_c - half_diagonal ≤ dist(Q, ∂Ω) ≤ d_c`, and a cube is emitted only when
//! both ends of the bracket satisfy the sandwich.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flights::random_direction;
use crate::geometry::{Boundary, DistanceIndex, Point};
use crate::rng;

pub const MAX_DEPTH_LIMIT: u32 = 24;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyParams {
    pub c1: f64,
    pub c2: f64,
    pub max_depth: u32,
}

impl Default for WhitneyParams {
    fn default() -> Self {
        Self {
            c1: 1.0,
            c2: 4.0,
            max_depth: 12,
        }
    }
}

impl WhitneyParams {
    /// Default constants, deep enough that cubes of side `finest` exist below `root`.
    pub fn reaching(root: &DyadicBox, finest: f64) -> Self {
        let depth = (root.side / finest).log2().ceil().max(0.0) as u32;
        Self {
            max_depth: depth.min(MAX_DEPTH_LIMIT),
            ..Self::default()
        }
    }
}

/// Root cube of the decomposition.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DyadicBox {
    pub origin: [f64; 3],
    pub side: f64,
    pub dim: usize,
}

impl DyadicBox {
    /// Power-of-two cube centred on the boundary, containing its bounding box grown 4×.
    pub fn enclosing(boundary: &Boundary) -> Self {
        let bb = boundary.bbox();
        let c = bb.center();
        let size = 4.0 * bb.width().max(bb.height()).max(boundary.diameter());
        let side = 2f64.powf(size.log2().ceil());
        let h = 0.5 * side;
        match boundary.ambient_dim() {
            3 => DyadicBox {
                origin: [c[0] - h, c[1] - h, -h],
                side,
                dim: 3,
            },
            _ => DyadicBox {
                origin: [c[0] - h, c[1] - h, 0.0],
                side,
                dim: 2,
            },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WhitneyCube {
    pub level: u32,
    /// Integer corner in units of the cube side.
    pub corner: [i64; 3],
    pub side: f64,
    pub center: Point,
    /// Distance from the centre to the boundary.
    pub dist: f64,
}

impl WhitneyCube {
    pub fn half_diagonal(&self) -> f64 {
        0.5 * self.side * (self.center.dim() as f64).sqrt()
    }
}

#[derive(Clone, Debug)]
pub struct WhitneyDecomposition {
    pub root: DyadicBox,
    pub params: WhitneyParams,
    /// Sorted by `(level, corner)`.
    pub cubes: Vec<WhitneyCube>,
    pub diameter: f64,
}

#[derive(Clone, Debug)]
pub struct WhitneyLevel {
    pub t: f64,
    pub cubes: Vec<WhitneyCube>,
}

fn make_cube(root: &DyadicBox, level: u32, corner: [i64; 3], index: &DistanceIndex) -> Result<WhitneyCube> {
    let side = root.side / (1u64 << level) as f64;
    let c = |k: usize| root.origin[k] + (corner[k] as f64 + 0.5) * side;
    let center = if root.dim == 3 {
        Point::new3(c(0), c(1), c(2))
    } else {
        Point::new2(c(0), c(1))
    };
    let dist = index.nearest(center)?.distance;
    Ok(WhitneyCube {
        level,
        corner,
        side,
        center,
        dist,
    })
}

enum Fate {
    Emit,
    Split,
    Drop,
}

fn fate(q: &WhitneyCube, p: &WhitneyParams) -> Fate {
    let lower = q.dist - q.half_diagonal();
    if lower < p.c1 * q.side {
        if q.level < p.max_depth {
            Fate::Split
        } else {
            Fate::Drop
        }
    } else if q.dist <= p.c2 * q.side {
        Fate::Emit
    } else {
        Fate::Drop
    }
}

fn children(q: &WhitneyCube, dim: usize) -> impl Iterator<Item = (u32, [i64; 3])> + '_ {
    let n = 1usize << dim;
    (0..n).map(move |m| {
        let mut c = [0i64; 3];
        for (k, ck) in c.iter_mut().enumerate().take(dim) {
            *ck = 2 * q.corner[k] + ((m >> k) & 1) as i64;
        }
        (q.level + 1, c)
    })
}

fn descend(
    root: &DyadicBox,
    q: WhitneyCube,
    params: &WhitneyParams,
    index: &DistanceIndex,
    out: &mut Vec<WhitneyCube>,
) -> Result<()> {
    let mut stack = vec![q];
    while let Some(q) = stack.pop() {
        match fate(&q, params) {
            Fate::Emit => out.push(q),
            Fate::Drop => {}
            Fate::Split => {
                for (l, c) in children(&q, root.dim) {
                    stack.push(make_cube(root, l, c, index)?);
                }
            }
        }
    }
    Ok(())
}

/// Recursive dyadic subdivision of `root`; subtrees are processed in parallel.
pub fn whitney_decompose(
    index: &DistanceIndex,
    root: DyadicBox,
    params: WhitneyParams,
    diameter: f64,
) -> Result<WhitneyDecomposition> {
    if params.max_depth > MAX_DEPTH_LIMIT {
        return Err(Error::SizeLimit(format!(
            "max_depth {} > {MAX_DEPTH_LIMIT}",
            params.max_depth
        )));
    }
    if !(params.c1 > 0.0 && params.c1 <= params.c2) {
        return Err(Error::Config(format!(
            "Whitney constants need 0 < c1 <= c2, got {} and {}",
            params.c1, params.c2
        )));
    }
    if root.dim != index.ambient_dim() {
        return Err(Error::Config("root box and boundary dimensions differ".into()));
    }
    let mut cubes = Vec::new();
    let mut frontier = vec![make_cube(&root, 0, [0; 3], index)?];
    while !frontier.is_empty() && frontier.len() < 64 {
        let mut next = Vec::new();
        for q in frontier {
            match fate(&q, &params) {
                Fate::Emit => cubes.push(q),
                Fate::Drop => {}
                Fate::Split => {
                    for (l, c) in children(&q, root.dim) {
                        next.push(make_cube(&root, l, c, index)?);
                    }
                }
            }
        }
        frontier = next;
    }
    let parts: Vec<Result<Vec<WhitneyCube>>> = frontier
        .into_par_iter()
        .map(|q| {
            let mut out = Vec::new();
            descend(&root, q, &params, index, &mut out)?;
            Ok(out)
        })
        .collect();
    for p in parts {
        cubes.extend(p?);
    }
    cubes.sort_by_key(|c| (c.level, c.corner));
    Ok(WhitneyDecomposition {
        root,
        params,
        cubes,
        diameter,
    })
}

/// Decomposition of the 4×-inflated box around `boundary`, deep enough to resolve `finest`.
pub fn decompose_boundary(
    boundary: &Boundary,
    index: &DistanceIndex,
    finest: f64,
) -> Result<WhitneyDecomposition> {
    let root = DyadicBox::enclosing(boundary);
    let params = WhitneyParams::reaching(&root, finest);
    whitney_decompose(index, root, params, boundary.diameter())
}

impl WhitneyDecomposition {
    pub fn finest_side(&self) -> f64 {
        self.root.side / (1u64 << self.params.max_depth) as f64
    }

    /// Cubes whose distance band `dist ± half_diagonal` contains `t`.
    pub fn level_cubes(&self, t: f64) -> Result<WhitneyLevel> {
        if !(t >= self.finest_side() && t <= self.diameter) {
            return Err(Error::OutOfRange(format!(
                "level {t} outside [{}, {}]",
                self.finest_side(),
                self.diameter
            )));
        }
        let cubes = self
            .cubes
            .iter()
            .filter(|q| (q.dist - t).abs() <= q.half_diagonal())
            .copied()
            .collect();
        Ok(WhitneyLevel { t, cubes })
    }

    /// `(t, #Q_t)` for every `t`.
    pub fn level_counts(&self, ts: &[f64]) -> Result<Vec<(f64, usize)>> {
        ts.iter()
            .map(|&t| self.level_cubes(t).map(|l| (t, l.cubes.len())))
            .collect()
    }
}

pub fn level_cubes(dec: &WhitneyDecomposition, t: f64) -> Result<WhitneyLevel> {
    dec.level_cubes(t)
}

/// Grid search for a corkscrew point: some `y` with `c·r < |x - y| < r` and
/// `dist(y, ∂Ω) > c·r`, probed at spacing `c·r/4`.
pub fn corkscrew_check(index: &DistanceIndex, x: Point, r: f64, c: f64) -> bool {
    corkscrew_search(index, x, r, c, 4.0)
}

/// [`corkscrew_check`] with grid spacing `c·r/divisor`.
pub fn corkscrew_search(index: &DistanceIndex, x: Point, r: f64, c: f64, divisor: f64) -> bool {
    if !(c > 0.0 && c < 1.0 && r > 0.0) {
        return false;
    }
    let h = c * r / divisor;
    let m = (r / h).ceil() as i64;
    let dim = x.dim();
    let zs: Vec<i64> = if dim == 3 { (-m..=m).collect() } else { vec![0] };
    for &k in &zs {
        for j in -m..=m {
            for i in -m..=m {
                let off = [i as f64 * h, j as f64 * h, k as f64 * h];
                let y = x.offset(off, 1.0);
                let rho = y.dist(&x);
                if rho <= c * r || rho >= r {
                    continue;
                }
                if let Ok(n) = index.nearest(y) {
                    if n.distance > c * r {
                        return true;
                    }
                }
            }
        }
    }
    false
}

/// Monte Carlo probability that Brownian motion from `x` reaches ∂Ω before
/// leaving `B(x, 2·d_x)`, by walk-on-spheres in the intersection.
pub fn fatness_probe(index: &DistanceIndex, x: Point, n_walks: u64, seed: u64) -> Result<f64> {
    let dx = index.nearest(x)?.distance;
    if !(dx > 0.0) {
        return Err(Error::Domain("fatness probe starts on the boundary".into()));
    }
    let radius = 2.0 * dx;
    let tol = 1e-4 * dx;
    let mut rng = rng::seeded(seed);
    let mut hits = 0u64;
    for _ in 0..n_walks {
        let mut p = x;
        loop {
            let to_boundary = index.nearest(p)?.distance;
            if to_boundary < tol {
                hits += 1;
                break;
            }
            let to_sphere = radius - p.dist(&x);
            if to_sphere < tol {
                break;
            }
            let step = to_boundary.min(to_sphere);
            p = p.offset(random_direction(&mut rng, x.dim()), step);
        }
    }
    Ok(hits as f64 / n_walks.max(1) as f64)
}

/// Uniform random point on the boundary's vertex set (or its analytic window).
pub fn random_boundary_point<R: Rng + ?Sized>(boundary: &Boundary, rng: &mut R) -> Point {
    match boundary {
        Boundary::Line2d { extent } => Point::new2((rng.random::<f64>() - 0.5) * extent, 0.0),
        Boundary::Plane3d { extent } => Point::new3(
            (rng.random::<f64>() - 0.5) * extent,
            (rng.random::<f64>() - 0.5) * extent,
            0.0,
        ),
        _ => {
            let v = boundary.vertices_f64();
            let p = v[rng.random_range(0..v.len())];
            Point::new2(p[0], p[1])
        }
    }
}

//! Boundary generators: triadic Koch prefractals, pivot-algorithm self-avoiding
//! walks on Z², and the analytic line/plane references.

use rand::Rng;
use rustc_hash::FxHashMap;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Boundary;
use crate::rng;

pub const KOCH_MAX_ITERATIONS: u32 = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KochVariant {
    Triadic,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KochConfig {
    pub iterations: u32,
    #[serde(default = "default_variant")]
    pub variant: KochVariant,
}

fn default_variant() -> KochVariant {
    KochVariant::Triadic
}

impl KochConfig {
    pub fn triadic(iterations: u32) -> Self {
        Self {
            iterations,
            variant: KochVariant::Triadic,
        }
    }
}

/// Triadic Koch curve from (0,0) to (1,0) with `4^k` segments of length `3^-k`.
///
/// Vertices are walked on the Eisenstein lattice `a + b·ω` (ω = e^{iπ/3}) in
/// exact integers and converted to floats once, so no rounding accumulates.
pub fn koch_generate(cfg: KochConfig) -> Result<Boundary> {
    let k = cfg.iterations;
    if k > KOCH_MAX_ITERATIONS {
        return Err(Error::SizeLimit(format!(
            "Koch iterations {k} > {KOCH_MAX_ITERATIONS}"
        )));
    }
    // unit steps for directions m·60°, in the (1, ω) basis
    const DIRS: [[i64; 2]; 6] = [[1, 0], [0, 1], [-1, 1], [-1, 0], [0, -1], [1, -1]];
    // direction change contributed by each base-4 digit of the segment index
    const TURN: [u32; 4] = [0, 1, 5, 0];
    let n_seg = 4usize.pow(k);
    let scale = 2.0 * 3f64.powi(k as i32);
    let sqrt3 = 3f64.sqrt();
    let mut verts = Vec::with_capacity(n_seg + 1);
    let (mut a, mut b) = (0i64, 0i64);
    let to_xy = |a: i64, b: i64| [(2 * a + b) as f64 / scale, b as f64 * sqrt3 / scale];
    verts.push(to_xy(a, b));
    for i in 0..n_seg {
        let mut dir = 0u32;
        let mut rest = i;
        for _ in 0..k {
            dir += TURN[rest % 4];
            rest /= 4;
        }
        let d = DIRS[(dir % 6) as usize];
        a += d[0];
        b += d[1];
        verts.push(to_xy(a, b));
    }
    Ok(Boundary::Polyline2d { vertices: verts })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SawConfig {
    pub n_steps: usize,
    pub n_pivot_attempts: u64,
    pub seed: u64,
}

impl SawConfig {
    /// Accepted pivots discarded before the counted attempts start.
    pub fn burn_in(&self) -> u64 {
        10 * self.n_steps as u64
    }
}

/// The seven non-identity symmetries of the square lattice.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum LatticeSymmetry {
    Rot90,
    Rot180,
    Rot270,
    FlipX,
    FlipY,
    Diagonal,
    AntiDiagonal,
}

impl LatticeSymmetry {
    pub const ALL: [LatticeSymmetry; 7] = [
        LatticeSymmetry::Rot90,
        LatticeSymmetry::Rot180,
        LatticeSymmetry::Rot270,
        LatticeSymmetry::FlipX,
        LatticeSymmetry::FlipY,
        LatticeSymmetry::Diagonal,
        LatticeSymmetry::AntiDiagonal,
    ];

    #[inline]
    pub fn apply(self, [dx, dy]: [i64; 2]) -> [i64; 2] {
        match self {
            LatticeSymmetry::Rot90 => [-dy, dx],
            LatticeSymmetry::Rot180 => [-dx, -dy],
            LatticeSymmetry::Rot270 => [dy, -dx],
            LatticeSymmetry::FlipX => [dx, -dy],
            LatticeSymmetry::FlipY => [-dx, dy],
            LatticeSymmetry::Diagonal => [dy, dx],
            LatticeSymmetry::AntiDiagonal => [-dy, -dx],
        }
    }
}

#[inline]
fn key(p: [i64; 2]) -> u64 {
    ((p[0] as i32 as u32 as u64) << 32) | (p[1] as i32 as u32 as u64)
}

/// Pivot-algorithm Markov chain on n-step self-avoiding walks.
///
/// Occupied sites live in a hash map from site to walk index. A proposal
/// transforms the shorter side of the walk around the pivot site and is
/// checked outward from the pivot, so most rejections exit after a few sites.
pub struct PivotChain {
    sites: Vec<[i64; 2]>,
    occupied: FxHashMap<u64, u32>,
    scratch: Vec<[i64; 2]>,
    accepted: u64,
    attempted: u64,
}

impl PivotChain {
    /// Straight walk along +x.
    pub fn straight(n_steps: usize) -> Self {
        let sites: Vec<[i64; 2]> = (0..=n_steps as i64).map(|i| [i, 0]).collect();
        let mut occupied = FxHashMap::default();
        occupied.reserve(sites.len());
        for (i, s) in sites.iter().enumerate() {
            occupied.insert(key(*s), i as u32);
        }
        Self {
            sites,
            occupied,
            scratch: Vec::new(),
            accepted: 0,
            attempted: 0,
        }
    }

    pub fn n_steps(&self) -> usize {
        self.sites.len() - 1
    }

    pub fn sites(&self) -> &[[i64; 2]] {
        &self.sites
    }

    pub fn accepted(&self) -> u64 {
        self.accepted
    }

    pub fn attempted(&self) -> u64 {
        self.attempted
    }

    /// Proposes one pivot move; returns whether it was accepted.
    pub fn attempt<R: Rng + ?Sized>(&mut self, rng: &mut R) -> bool {
        let n = self.n_steps();
        if n == 0 {
            return false;
        }
        self.attempted += 1;
        let pivot = if n == 1 { 0 } else { rng.random_range(1..n) };
        let g = LatticeSymmetry::ALL[rng.random_range(0..7)];
        self.try_pivot(pivot, g)
    }

    /// Applies `g` around site `pivot` if the result stays self-avoiding.
    pub fn try_pivot(&mut self, pivot: usize, g: LatticeSymmetry) -> bool {
        let n = self.n_steps();
        let c = self.sites[pivot];
        let move_suffix = pivot == 0 || 2 * pivot >= n;
        self.scratch.clear();
        let moved: Box<dyn Iterator<Item = usize>> = if move_suffix {
            Box::new(pivot + 1..=n)
        } else {
            Box::new((0..pivot).rev())
        };
        for i in moved {
            let s = self.sites[i];
            let d = g.apply([s[0] - c[0], s[1] - c[1]]);
            let q = [c[0] + d[0], c[1] + d[1]];
            if let Some(&j) = self.occupied.get(&key(q)) {
                let j = j as usize;
                let fixed = if move_suffix { j <= pivot } else { j >= pivot };
                if fixed {
                    return false;
                }
            }
            self.scratch.push(q);
        }
        let range: Vec<usize> = if move_suffix {
            (pivot + 1..=n).collect()
        } else {
            (0..pivot).rev().collect()
        };
        for &i in &range {
            self.occupied.remove(&key(self.sites[i]));
        }
        for (&i, &q) in range.iter().zip(self.scratch.iter()) {
            self.sites[i] = q;
            self.occupied.insert(key(q), i as u32);
        }
        self.accepted += 1;
        true
    }

    /// Sites translated so the walk starts at the origin.
    pub fn into_path(self) -> Vec<[i64; 2]> {
        let o = self.sites[0];
        self.sites
            .into_iter()
            .map(|s| [s[0] - o[0], s[1] - o[1]])
            .collect()
    }
}

/// Self-avoiding walk from the pivot algorithm.
///
/// Starts from the straight walk, runs until [`SawConfig::burn_in`] pivots have
/// been accepted, then performs `n_pivot_attempts` further attempts.
pub fn saw_generate(cfg: SawConfig) -> Result<Boundary> {
    if cfg.n_steps == 0 {
        return Err(Error::Config("n_steps must be at least 1".into()));
    }
    let mut rng = rng::seeded(cfg.seed);
    let mut chain = PivotChain::straight(cfg.n_steps);
    let burn = cfg.burn_in();
    while chain.accepted() < burn {
        chain.attempt(&mut rng);
    }
    for _ in 0..cfg.n_pivot_attempts {
        chain.attempt(&mut rng);
    }
    Ok(Boundary::LatticePath2d {
        vertices: chain.into_path(),
    })
}

/// Analytic reference boundary with `d = d_e - 1`, unit window.
pub fn line_reference(ambient_dim: usize) -> Result<Boundary> {
    line_reference_with_extent(ambient_dim, 1.0)
}

pub fn line_reference_with_extent(ambient_dim: usize, extent: f64) -> Result<Boundary> {
    let b = match ambient_dim {
        2 => Boundary::Line2d { extent },
        3 => Boundary::Plane3d { extent },
        other => {
            return Err(Error::Unsupported(format!(
                "reference boundaries exist for d_e in {{2, 3}}, got {other}"
            )))
        }
    };
    b.validate()?;
    Ok(b)
}

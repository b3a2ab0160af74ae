//! Box-counting (Minkowski) dimension.
//!
//! `N_ε` is the number of cells of an axis-aligned grid of side ε, anchored at
//! the lower corner of the bounding box, that a boundary segment passes
//! through. Cells are half-open, except that points on the far edge of the
//! bounding box fall into the last cell.

use rayon::prelude::*;
use rustc_hash::FxHashSet;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Boundary;
use crate::stats::ols;

/// Finest admissible ε relative to the boundary diameter.
pub const MIN_RELATIVE_EPS: f64 = 1.0 / (1u64 << 24) as f64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxCountSeries {
    /// `(ε, N_ε)` with ε strictly decreasing.
    pub points: Vec<(f64, u64)>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DimensionMethod {
    Box,
    Whitney,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DimensionEstimate {
    pub d: f64,
    pub stderr: f64,
    /// `(ε_min, ε_max)` of the points used.
    pub window: (f64, f64),
    pub method: DimensionMethod,
}

/// `diameter · 2^-j` for `j` in `j_min..=j_max`.
pub fn dyadic_ladder(diameter: f64, j_min: u32, j_max: u32) -> Vec<f64> {
    (j_min..=j_max)
        .map(|j| diameter / (1u64 << j) as f64)
        .collect()
}

/// Dyadic ladder from `diameter/2` to two points past the smallest dyadic scale
/// not below the shortest segment, so that the default fit window ends there.
pub fn default_ladder(boundary: &Boundary) -> Vec<f64> {
    let diam = boundary.diameter();
    let shortest = boundary
        .segments()
        .iter()
        .map(|[a, b]| ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt())
        .fold(f64::INFINITY, f64::min);
    let j_max = if boundary.is_analytic() || !shortest.is_finite() {
        12
    } else {
        ((diam / shortest).log2().floor() as u32 + 2).min(24)
    };
    dyadic_ladder(diam, 1, j_max)
}

pub fn box_count(boundary: &Boundary, ladder: &[f64]) -> Result<BoxCountSeries> {
    boundary.validate()?;
    let mut eps: Vec<f64> = ladder.to_vec();
    eps.sort_by(|a, b| b.total_cmp(a));
    eps.dedup();
    let diam = boundary.diameter();
    if let Some(&e) = eps.iter().find(|&&e| !(e > 0.0) || e < diam * MIN_RELATIVE_EPS) {
        return Err(Error::SizeLimit(format!(
            "ε = {e} is below diameter·2^-24 = {}",
            diam * MIN_RELATIVE_EPS
        )));
    }
    let points = eps
        .iter()
        .map(|&e| (e, count_cells(boundary, e)))
        .collect();
    Ok(BoxCountSeries { points })
}

fn cells_along(extent: f64, eps: f64) -> i64 {
    ((extent / eps).ceil() as i64).max(1)
}

fn count_cells(boundary: &Boundary, eps: f64) -> u64 {
    if let Boundary::Plane3d { extent } = boundary {
        let n = cells_along(*extent, eps) as u64;
        return n * n;
    }
    let bbox = boundary.bbox();
    let origin = bbox.min;
    let nx = cells_along(bbox.width(), eps);
    let ny = cells_along(bbox.height(), eps);
    let segs = boundary.segments();
    let grid = Grid {
        origin,
        eps,
        nx,
        ny,
    };
    let sets: Vec<FxHashSet<u64>> = segs
        .par_chunks(4096)
        .map(|chunk| {
            let mut set = FxHashSet::default();
            for s in chunk {
                grid.trace(s[0], s[1], &mut set);
            }
            set
        })
        .collect();
    let mut it = sets.into_iter();
    let mut all = it.next().unwrap_or_default();
    for s in it {
        all.extend(s);
    }
    all.len() as u64
}

struct Grid {
    origin: [f64; 2],
    eps: f64,
    nx: i64,
    ny: i64,
}

impl Grid {
    fn cell(&self, u: f64, n: i64) -> i64 {
        (u.floor() as i64).clamp(0, n - 1)
    }

    /// Grid traversal (Amanatides–Woo) marking every cell the segment `a → b` enters.
    fn trace(&self, a: [f64; 2], b: [f64; 2], out: &mut FxHashSet<u64>) {
        let ua = (a[0] - self.origin[0]) / self.eps;
        let va = (a[1] - self.origin[1]) / self.eps;
        let ub = (b[0] - self.origin[0]) / self.eps;
        let vb = (b[1] - self.origin[1]) / self.eps;
        let (mut i, mut j) = (self.cell(ua, self.nx), self.cell(va, self.ny));
        let (ie, je) = (self.cell(ub, self.nx), self.cell(vb, self.ny));
        let pack = |i: i64, j: i64| ((i as u64) << 32) | j as u64;
        out.insert(pack(i, j));
        out.insert(pack(ie, je));
        let (du, dv) = (ub - ua, vb - va);
        let axis = |d: f64, u0: f64, c: i64| -> (i64, f64, f64) {
            if d > 0.0 {
                (1, (c as f64 + 1.0 - u0) / d, 1.0 / d)
            } else if d < 0.0 {
                (-1, (c as f64 - u0) / d, -1.0 / d)
            } else {
                (0, f64::INFINITY, f64::INFINITY)
            }
        };
        let (si, mut ti, di) = axis(du, ua, i);
        let (sj, mut tj, dj) = axis(dv, va, j);
        let max_steps = (ie - i).abs() + (je - j).abs() + 2;
        for _ in 0..max_steps {
            if i == ie && j == je {
                break;
            }
            let t = ti.min(tj);
            if t >= 1.0 {
                break;
            }
            if ti == tj {
                i += si;
                j += sj;
                ti += di;
                tj += dj;
            } else if ti < tj {
                i += si;
                ti += di;
            } else {
                j += sj;
                tj += dj;
            }
            if i < 0 || j < 0 || i >= self.nx || j >= self.ny {
                break;
            }
            out.insert(pack(i, j));
        }
    }
}

fn window_fit(
    mut pts: Vec<(f64, f64)>,
    window: Option<(f64, f64)>,
    method: DimensionMethod,
) -> Result<DimensionEstimate> {
    pts.sort_by(|a, b| b.0.total_cmp(&a.0));
    let chosen: Vec<(f64, f64)> = match window {
        Some((lo, hi)) => pts
            .into_iter()
            .filter(|(e, _)| *e >= lo * (1.0 - 1e-12) && *e <= hi * (1.0 + 1e-12))
            .collect(),
        None if pts.len() > 4 => pts[2..pts.len() - 2].to_vec(),
        None => pts,
    };
    if chosen.len() < 4 {
        return Err(Error::InsufficientData(format!(
            "dimension fit needs 4 ladder points, got {}",
            chosen.len()
        )));
    }
    if let Some((e, _)) = chosen.iter().find(|(_, n)| !(*n > 0.0)) {
        return Err(Error::InsufficientData(format!("empty count at ε = {e}")));
    }
    let x: Vec<f64> = chosen.iter().map(|(e, _)| -e.ln()).collect();
    let y: Vec<f64> = chosen.iter().map(|(_, n)| n.ln()).collect();
    let f = ols(&x, &y)?;
    Ok(DimensionEstimate {
        d: f.slope,
        stderr: f.stderr,
        window: (chosen.last().unwrap().0, chosen[0].0),
        method,
    })
}

/// OLS slope of `log N_ε` against `-log ε`.
///
/// Without an explicit window the two coarsest and two finest points are dropped
/// (when at least five are available).
pub fn fit_dimension(series: &BoxCountSeries, window: Option<(f64, f64)>) -> Result<DimensionEstimate> {
    let pts = series.points.iter().map(|&(e, n)| (e, n as f64)).collect();
    window_fit(pts, window, DimensionMethod::Box)
}

/// Same regression on Whitney level counts `(t, #Q_t)`.
pub fn fit_whitney_dimension(
    levels: &[(f64, usize)],
    window: Option<(f64, f64)>,
) -> Result<DimensionEstimate> {
    let pts = levels.iter().map(|&(t, n)| (t, n as f64)).collect();
    window_fit(pts, window, DimensionMethod::Whitney)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fractalgen::{koch_generate, KochConfig};
    use proptest::prelude::*;

    /// Marks every cell hit by points sampled every ε/256 along each segment.
    /// Misses only cells clipped at a corner, so it bounds the exact count from below.
    fn sampled_count(b: &Boundary, eps: f64) -> u64 {
        let bbox = b.bbox();
        let nx = cells_along(bbox.width(), eps);
        let ny = cells_along(bbox.height(), eps);
        let mut set = FxHashSet::default();
        for s in b.segments() {
            let len = ((s[1][0] - s[0][0]).powi(2) + (s[1][1] - s[0][1]).powi(2)).sqrt();
            let m = ((len / eps) * 256.0).ceil() as usize + 1;
            for k in 0..=m {
                let t = k as f64 / m as f64;
                let x = s[0][0] + t * (s[1][0] - s[0][0]);
                let y = s[0][1] + t * (s[1][1] - s[0][1]);
                let i = (((x - bbox.min[0]) / eps).floor() as i64).clamp(0, nx - 1);
                let j = (((y - bbox.min[1]) / eps).floor() as i64).clamp(0, ny - 1);
                set.insert((i, j));
            }
        }
        set.len() as u64
    }

    #[test]
    fn unit_segment_eighths() {
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let s = box_count(&b, &[0.125]).unwrap();
        assert_eq!(s.points, vec![(0.125, 8)]);
    }

    #[test]
    fn diagonal_through_corners_steps_diagonally() {
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 1.0]]).unwrap();
        assert_eq!(box_count(&b, &[0.25]).unwrap().points[0].1, 4);
    }

    #[test]
    fn koch_counts_near_four_to_the_j() {
        for j in 1..=4u32 {
            let b = koch_generate(KochConfig::triadic(j)).unwrap();
            let eps = 3f64.powi(-(j as i32));
            let n = box_count(&b, &[eps]).unwrap().points[0].1;
            let sampled = sampled_count(&b, eps);
            assert!(sampled <= n, "j={j}: sampled {sampled} > traced {n}");
            assert!(n as f64 <= 1.05 * sampled as f64 + 2.0, "j={j}: {n} vs {sampled}");
            let target = 4f64.powi(j as i32);
            assert!(n as f64 >= target / 4.0 && n as f64 <= target * 4.0, "j={j}: {n}");
        }
    }

    #[test]
    fn traced_counts_agree_with_dense_sampling() {
        let b = koch_generate(KochConfig::triadic(5)).unwrap();
        for j in 2..=8 {
            let eps = 2f64.powi(-j);
            let n = box_count(&b, &[eps]).unwrap().points[0].1;
            let s = sampled_count(&b, eps);
            assert!(s <= n && n - s <= n / 50 + 1, "ε=2^-{j}: traced {n}, sampled {s}");
        }
    }

    #[test]
    fn too_fine_ladder_is_rejected() {
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(box_count(&b, &[1e-9]), Err(Error::SizeLimit(_))));
    }

    #[test]
    fn exact_power_law_fit() {
        let series = BoxCountSeries {
            points: (0..8)
                .map(|j| {
                    let e = 2f64.powi(-2 * j);
                    (e, 8u64.pow(j as u32))
                })
                .collect(),
        };
        let est = fit_dimension(&series, Some((0.0, 1.0))).unwrap();
        assert!((est.d - 1.5).abs() < 1e-12);
        assert!(est.stderr < 1e-12);
    }

    #[test]
    fn straight_line_has_dimension_one() {
        let b = Boundary::Line2d { extent: 1.0 };
        let s = box_count(&b, &dyadic_ladder(1.0, 0, 12)).unwrap();
        let est = fit_dimension(&s, None).unwrap();
        assert!((est.d - 1.0).abs() < 0.02, "{est:?}");
    }

    #[test]
    fn too_few_points() {
        let s = BoxCountSeries {
            points: vec![(1.0, 1), (0.5, 2), (0.25, 4)],
        };
        assert!(matches!(fit_dimension(&s, None), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn koch_dimension_on_default_ladder() {
        let b = koch_generate(KochConfig::triadic(7)).unwrap();
        let ladder = default_ladder(&b);
        assert_eq!(ladder.len(), 13);
        let est = fit_dimension(&box_count(&b, &ladder).unwrap(), None).unwrap();
        let d = 4f64.ln() / 3f64.ln();
        assert!((est.d - d).abs() < 0.03, "{est:?}");
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn counts_monotone_and_scale_covariant(seed in 0u64..1000, n in 20usize..300) {
            let b = crate::fractalgen::saw_generate(crate::fractalgen::SawConfig {
                n_steps: n, n_pivot_attempts: 50, seed,
            }).unwrap();
            let ladder = dyadic_ladder(b.diameter(), 0, 8);
            let s = box_count(&b, &ladder).unwrap();
            prop_assert!(s.points.windows(2).all(|w| w[0].0 > w[1].0 && w[0].1 <= w[1].1));
            let diam = b.diameter();
            for &(e, c) in &s.points {
                prop_assert!((c as f64) <= (diam / e + 2.0).powi(2));
            }
            let scaled = Boundary::polyline(b.vertices_f64().iter().map(|v| [2.0 * v[0], 2.0 * v[1]]).collect()).unwrap();
            let ladder2: Vec<f64> = ladder.iter().map(|e| 2.0 * e).collect();
            let s2 = box_count(&scaled, &ladder2).unwrap();
            let c1: Vec<u64> = s.points.iter().map(|p| p.1).collect();
            let c2: Vec<u64> = s2.points.iter().map(|p| p.1).collect();
            prop_assert_eq!(c1, c2);
        }
    }
}

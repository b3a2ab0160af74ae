//! Exact nearest-segment queries.
//!
//! Segments are bucketed into a uniform grid (cell side = max(median segment
//! length, diameter / 1024)). On top of the grid sits a pyramid of occupancy
//! bitmaps so that queries far from the curve skip empty space in logarithmic
//! time. The grid only prunes; every candidate is measured with the exact
//! point-segment distance, and equal distances resolve to the lowest segment id.

use super::{Aabb, Boundary, Point, SideLabel};
use crate::error::{Error, Result};

/// Result of a nearest-feature query.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Nearest {
    pub distance: f64,
    pub segment: usize,
    /// Closest point on the boundary.
    pub point: Point,
    /// Parameter of `point` along the segment, in [0, 1].
    pub t: f64,
}

#[derive(Clone, Debug)]
pub struct DistanceIndex {
    inner: Inner,
}

#[derive(Clone, Debug)]
enum Inner {
    Line,
    Plane,
    Segments(SegmentGrid),
}

#[derive(Clone, Debug)]
struct Level {
    nx: usize,
    ny: usize,
    occupied: Vec<bool>,
}

#[derive(Clone, Debug)]
struct SegmentGrid {
    segs: Vec<[f64; 4]>,
    closed: bool,
    origin: [f64; 2],
    cell: f64,
    nx: usize,
    starts: Vec<u32>,
    items: Vec<u32>,
    pyramid: Vec<Level>,
    bbox: Aabb,
    range: Aabb,
    diameter: f64,
}

/// Squared distance from `p` to segment `s`, with the clamped parameter.
///
/// Shared by the index and [`brute_force_nearest`] so both produce bit-identical values.
#[inline]
fn seg_dist2(s: &[f64; 4], px: f64, py: f64) -> (f64, f64) {
    let (ax, ay, bx, by) = (s[0], s[1], s[2], s[3]);
    let ex = bx - ax;
    let ey = by - ay;
    let len2 = ex * ex + ey * ey;
    let mut t = ((px - ax) * ex + (py - ay) * ey) / len2;
    t = t.clamp(0.0, 1.0);
    let qx = ax + t * ex;
    let qy = ay + t * ey;
    let dx = px - qx;
    let dy = py - qy;
    (dx * dx + dy * dy, t)
}

#[inline]
fn seg_point(s: &[f64; 4], t: f64) -> Point {
    Point::new2(s[0] + t * (s[2] - s[0]), s[1] + t * (s[3] - s[1]))
}

/// Scan every segment of `boundary`; the reference the index is tested against.
pub fn brute_force_nearest(boundary: &Boundary, p: Point) -> Option<Nearest> {
    let segs = boundary.segments();
    let mut best: Option<(f64, usize, f64)> = None;
    for (i, s) in segs.iter().enumerate() {
        let s4 = [s[0][0], s[0][1], s[1][0], s[1][1]];
        let (d2, t) = seg_dist2(&s4, p.x(), p.y());
        if best.is_none_or(|(b, _, _)| d2 < b) {
            best = Some((d2, i, t));
        }
    }
    best.map(|(d2, i, t)| {
        let s = segs[i];
        Nearest {
            distance: d2.sqrt(),
            segment: i,
            point: seg_point(&[s[0][0], s[0][1], s[1][0], s[1][1]], t),
            t,
        }
    })
}

impl DistanceIndex {
    pub fn build(boundary: &Boundary) -> Result<Self> {
        boundary.validate()?;
        let inner = match boundary {
            Boundary::Line2d { .. } => Inner::Line,
            Boundary::Plane3d { .. } => Inner::Plane,
            _ => {
                let segs: Vec<[f64; 4]> = boundary
                    .segments()
                    .iter()
                    .map(|s| [s[0][0], s[0][1], s[1][0], s[1][1]])
                    .collect();
                if segs.is_empty() {
                    return Err(Error::InvalidBoundary(
                        "a single lattice site has no segments".into(),
                    ));
                }
                Inner::Segments(SegmentGrid::new(
                    segs,
                    boundary.is_closed(),
                    boundary.bbox(),
                    boundary.diameter(),
                ))
            }
        };
        Ok(Self { inner })
    }

    pub fn ambient_dim(&self) -> usize {
        match self.inner {
            Inner::Plane => 3,
            _ => 2,
        }
    }

    /// Exact distance to the boundary plus the nearest segment.
    ///
    /// For segment boundaries the point must lie within the bounding box grown by
    /// 8 box sizes on every side; analytic boundaries accept any point. The
    /// analytic line and plane report segment 0.
    #[inline]
    pub fn nearest(&self, p: Point) -> Result<Nearest> {
        match &self.inner {
            Inner::Line => Ok(Nearest {
                distance: p.y().abs(),
                segment: 0,
                point: Point::new2(p.x(), 0.0),
                t: 0.5,
            }),
            Inner::Plane => Ok(Nearest {
                distance: p.z().abs(),
                segment: 0,
                point: Point::new3(p.x(), p.y(), 0.0),
                t: 0.5,
            }),
            Inner::Segments(g) => g.nearest(p),
        }
    }

    /// `(distance, segment_id)`.
    pub fn distance(&self, p: Point) -> Result<(f64, usize)> {
        let n = self.nearest(p)?;
        Ok((n.distance, n.segment))
    }

    /// Side of the oriented curve on which `p` lies.
    ///
    /// Left/right follow the sign of the cross product between the nearest
    /// segment's direction and `p`. When the lowest-id nearest segment gives an
    /// exactly zero cross product at a shared interior vertex, the neighbouring
    /// segment through that vertex decides. Points whose nearest feature is a
    /// free endpoint of an open curve are ambiguous.
    pub fn side_of(&self, p: Point) -> Result<SideLabel> {
        match &self.inner {
            Inner::Line => Ok(sign_label(p.y())),
            Inner::Plane => Err(Error::Unsupported(
                "side_of is defined for planar scenes; use the sign of z for the plane".into(),
            )),
            Inner::Segments(g) => g.side_of(p),
        }
    }
}

fn sign_label(v: f64) -> SideLabel {
    if v > 0.0 {
        SideLabel::Left
    } else if v < 0.0 {
        SideLabel::Right
    } else {
        SideLabel::Ambiguous
    }
}

impl SegmentGrid {
    fn new(segs: Vec<[f64; 4]>, closed: bool, bbox: Aabb, diameter: f64) -> Self {
        let mut lens: Vec<f64> = segs
            .iter()
            .map(|s| ((s[2] - s[0]).powi(2) + (s[3] - s[1]).powi(2)).sqrt())
            .collect();
        let mid = lens.len() / 2;
        let median = *lens
            .select_nth_unstable_by(mid, |a, b| a.total_cmp(b))
            .1;
        let mut cell = median.max(diameter / 1024.0);
        if !(cell > 0.0) {
            cell = 1.0;
        }
        let origin = [bbox.min[0] - 0.5 * cell, bbox.min[1] - 0.5 * cell];
        let nx = ((bbox.width() + cell) / cell).floor() as usize + 1;
        let ny = ((bbox.height() + cell) / cell).floor() as usize + 1;

        let pad = 1e-9 * cell;
        let cell_range = |s: &[f64; 4]| {
            let lo = |v: f64, o: f64, n: usize| {
                (((v - pad - o) / cell).floor().max(0.0) as usize).min(n - 1)
            };
            let hi = |v: f64, o: f64, n: usize| {
                (((v + pad - o) / cell).floor().max(0.0) as usize).min(n - 1)
            };
            (
                lo(s[0].min(s[2]), origin[0], nx),
                hi(s[0].max(s[2]), origin[0], nx),
                lo(s[1].min(s[3]), origin[1], ny),
                hi(s[1].max(s[3]), origin[1], ny),
            )
        };

        let mut counts = vec![0u32; nx * ny + 1];
        for s in &segs {
            let (x0, x1, y0, y1) = cell_range(s);
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    counts[iy * nx + ix + 1] += 1;
                }
            }
        }
        for i in 1..counts.len() {
            counts[i] += counts[i - 1];
        }
        let starts = counts;
        let mut fill = starts.clone();
        let mut items = vec![0u32; *starts.last().unwrap() as usize];
        for (id, s) in segs.iter().enumerate() {
            let (x0, x1, y0, y1) = cell_range(s);
            for iy in y0..=y1 {
                for ix in x0..=x1 {
                    let c = iy * nx + ix;
                    items[fill[c] as usize] = id as u32;
                    fill[c] += 1;
                }
            }
        }

        let mut pyramid = vec![Level {
            nx,
            ny,
            occupied: (0..nx * ny).map(|c| starts[c + 1] > starts[c]).collect(),
        }];
        while {
            let top = pyramid.last().unwrap();
            top.nx > 1 || top.ny > 1
        } {
            let below = pyramid.last().unwrap();
            let (cx, cy) = (below.nx.div_ceil(2), below.ny.div_ceil(2));
            let mut occ = vec![false; cx * cy];
            for iy in 0..below.ny {
                for ix in 0..below.nx {
                    if below.occupied[iy * below.nx + ix] {
                        occ[(iy / 2) * cx + ix / 2] = true;
                    }
                }
            }
            pyramid.push(Level {
                nx: cx,
                ny: cy,
                occupied: occ,
            });
        }

        let size = bbox.width().max(bbox.height()).max(cell);
        SegmentGrid {
            segs,
            closed,
            origin,
            cell,
            nx,
            starts,
            items,
            pyramid,
            bbox,
            range: bbox.inflate(8.0 * size),
            diameter,
        }
    }

    fn nearest(&self, p: Point) -> Result<Nearest> {
        let (px, py) = (p.x(), p.y());
        if p.dim() != 2 || !self.range.contains(px, py) {
            return Err(Error::OutOfRange(format!(
                "{:?} is outside the query range of a curve with bounding box {:?}",
                p.coords(),
                self.bbox
            )));
        }
        let mut best = Best {
            d2: f64::INFINITY,
            id: u32::MAX,
            t: 0.0,
        };
        let top = self.pyramid.len() - 1;
        self.search(top, 0, 0, px, py, &mut best);
        let s = &self.segs[best.id as usize];
        Ok(Nearest {
            distance: best.d2.sqrt(),
            segment: best.id as usize,
            point: seg_point(s, best.t),
            t: best.t,
        })
    }

    #[inline]
    fn box_d2(&self, level: usize, ix: usize, iy: usize, px: f64, py: f64) -> f64 {
        let side = self.cell * (1u64 << level) as f64;
        let x0 = self.origin[0] + ix as f64 * side;
        let y0 = self.origin[1] + iy as f64 * side;
        let dx = (x0 - px).max(0.0).max(px - (x0 + side));
        let dy = (y0 - py).max(0.0).max(py - (y0 + side));
        dx * dx + dy * dy
    }

    fn search(&self, level: usize, ix: usize, iy: usize, px: f64, py: f64, best: &mut Best) {
        if level == 0 {
            let c = iy * self.nx + ix;
            for &id in &self.items[self.starts[c] as usize..self.starts[c + 1] as usize] {
                let (d2, t) = seg_dist2(&self.segs[id as usize], px, py);
                if d2 < best.d2 || (d2 == best.d2 && id < best.id) {
                    *best = Best { d2, id, t };
                }
            }
            return;
        }
        let below = &self.pyramid[level - 1];
        let mut kids: [(f64, usize, usize); 4] = [(0.0, 0, 0); 4];
        let mut k = 0;
        for cy in 2 * iy..(2 * iy + 2).min(below.ny) {
            for cx in 2 * ix..(2 * ix + 2).min(below.nx) {
                if below.occupied[cy * below.nx + cx] {
                    kids[k] = (self.box_d2(level - 1, cx, cy, px, py), cx, cy);
                    k += 1;
                }
            }
        }
        let kids = &mut kids[..k];
        kids.sort_unstable_by(|a, b| a.0.total_cmp(&b.0));
        for &(d2, cx, cy) in kids.iter() {
            // Slack keeps ties (needed for lowest-id resolution) despite rounding in box bounds.
            if d2 > best.d2 * (1.0 + 1e-12) {
                break;
            }
            self.search(level - 1, cx, cy, px, py, best);
        }
    }

    fn side_of(&self, p: Point) -> Result<SideLabel> {
        let n = self.nearest(p)?;
        let last = self.segs.len() - 1;
        if !self.closed && ((n.segment == 0 && n.t == 0.0) || (n.segment == last && n.t == 1.0)) {
            return Ok(SideLabel::Ambiguous);
        }
        let cross = |id: usize| {
            let s = &self.segs[id];
            (s[2] - s[0]) * (p.y() - s[1]) - (s[3] - s[1]) * (p.x() - s[0])
        };
        let c = cross(n.segment);
        if c != 0.0 {
            return Ok(sign_label(c));
        }
        let neighbour = if n.t == 1.0 {
            if n.segment < last {
                Some(n.segment + 1)
            } else if self.closed {
                Some(0)
            } else {
                None
            }
        } else if n.t == 0.0 {
            if n.segment > 0 {
                Some(n.segment - 1)
            } else if self.closed {
                Some(last)
            } else {
                None
            }
        } else {
            None
        };
        Ok(neighbour.map_or(SideLabel::Ambiguous, |id| sign_label(cross(id))))
    }
}

struct Best {
    d2: f64,
    id: u32,
    t: f64,
}

impl DistanceIndex {
    /// Bounding box of the indexed curve (the window for analytic kinds is not tracked).
    pub fn bbox(&self) -> Option<Aabb> {
        match &self.inner {
            Inner::Segments(g) => Some(g.bbox),
            _ => None,
        }
    }

    pub fn diameter(&self) -> Option<f64> {
        match &self.inner {
            Inner::Segments(g) => Some(g.diameter),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn idx(b: &Boundary) -> DistanceIndex {
        DistanceIndex::build(b).unwrap()
    }

    #[test]
    fn unit_segment_queries() {
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let ix = idx(&b);
        let (d, s) = ix.distance(Point::new2(0.5, 0.3)).unwrap();
        assert!((d - 0.3).abs() < 1e-15);
        assert_eq!(s, 0);
        assert_eq!(ix.side_of(Point::new2(0.5, 0.3)).unwrap(), SideLabel::Left);
        assert_eq!(ix.distance(Point::new2(2.0, 0.0)).unwrap().0, 1.0);
        assert_eq!(
            ix.side_of(Point::new2(2.0, 0.0001)).unwrap(),
            SideLabel::Ambiguous
        );
    }

    #[test]
    fn analytic_distances() {
        let line = idx(&Boundary::Line2d { extent: 1.0 });
        assert_eq!(line.distance(Point::new2(7.0, -3.0)).unwrap().0, 3.0);
        assert_eq!(line.side_of(Point::new2(0.0, 1.0)).unwrap(), SideLabel::Left);
        assert_eq!(line.side_of(Point::new2(0.0, -1.0)).unwrap(), SideLabel::Right);
        let plane = idx(&Boundary::Plane3d { extent: 1.0 });
        assert_eq!(plane.distance(Point::new3(1.0, 2.0, 0.5)).unwrap().0, 0.5);
        assert!(matches!(
            plane.side_of(Point::new3(0.0, 0.0, 1.0)),
            Err(Error::Unsupported(_))
        ));
    }

    #[test]
    fn l_shape_two_segment_check() {
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let p = Point::new2(0.9, 0.2);
        // by hand: segment 0 at distance 0.2, segment 1 at distance 0.1
        let oracle = brute_force_nearest(&b, p).unwrap();
        let (d, s) = idx(&b).distance(p).unwrap();
        assert_eq!((d, s), (oracle.distance, oracle.segment));
        assert!((d - 0.1).abs() < 1e-12);
        assert_eq!(s, 1);
    }

    #[test]
    fn tie_breaks_to_lowest_segment() {
        // (0.5, 0.5) is at distance 0.5 from both legs
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0]]).unwrap();
        let (d, s) = idx(&b).distance(Point::new2(0.5, 0.5)).unwrap();
        assert_eq!(d, 0.5);
        assert_eq!(s, 0);
    }

    #[test]
    fn out_of_range_point_is_rejected() {
        let b = Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        assert!(matches!(
            idx(&b).distance(Point::new2(100.0, 0.0)),
            Err(Error::OutOfRange(_))
        ));
    }

    #[test]
    fn closed_square_interior_is_one_side() {
        let b = Boundary::polyline(vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [0.0, 0.0],
        ])
        .unwrap();
        let ix = idx(&b);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..100 {
            let p = Point::new2(rng.random_range(0.01..0.99), rng.random_range(0.01..0.99));
            assert_eq!(ix.side_of(p).unwrap(), SideLabel::Left);
        }
        // the corner diagonal ties onto a shared vertex; exterior is right
        assert_eq!(ix.side_of(Point::new2(2.0, -1.0)).unwrap(), SideLabel::Right);
        assert_eq!(ix.side_of(Point::new2(-0.5, -0.5)).unwrap(), SideLabel::Right);
    }

    #[test]
    fn collinear_extension_at_a_corner_uses_the_next_segment() {
        // left turn at (1,0): the site straight ahead is outside the turn
        let b = Boundary::lattice_path(vec![[0, 0], [1, 0], [1, 1]]).unwrap();
        assert_eq!(idx(&b).side_of(Point::new2(2.0, 0.0)).unwrap(), SideLabel::Right);
    }
}

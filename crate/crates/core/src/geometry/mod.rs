//! Boundary representations and the exact distance oracle built on top of them.
//!
//! Four boundary families are supported: the analytic x-axis in the plane, the
//! analytic plane `z = 0` in space, arbitrary 2D polylines and 2D lattice paths.
//! Everything downstream (Whitney cubes, box counting, flights) only talks to a
//! boundary through [`DistanceIndex`].

mod index;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::error::{Error, Result};

pub use index::{brute_force_nearest, DistanceIndex, Nearest};

/// A point in the ambient space (2 or 3 coordinates).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Point {
    c: [f64; 3],
    dim: u8,
}

impl Point {
    pub const fn new2(x: f64, y: f64) -> Self {
        Self { c: [x, y, 0.0], dim: 2 }
    }

    pub const fn new3(x: f64, y: f64, z: f64) -> Self {
        Self { c: [x, y, z], dim: 3 }
    }

    pub fn from_slice(coords: &[f64]) -> Result<Self> {
        match *coords {
            [x, y] => Ok(Self::new2(x, y)),
            [x, y, z] => Ok(Self::new3(x, y, z)),
            _ => Err(Error::Domain(format!(
                "points have 2 or 3 coordinates, got {}",
                coords.len()
            ))),
        }
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim as usize
    }

    #[inline]
    pub fn coords(&self) -> &[f64] {
        &self.c[..self.dim as usize]
    }

    #[inline]
    pub fn x(&self) -> f64 {
        self.c[0]
    }

    #[inline]
    pub fn y(&self) -> f64 {
        self.c[1]
    }

    #[inline]
    pub fn z(&self) -> f64 {
        self.c[2]
    }

    /// `self + s * v`, where `v` is given as a raw coordinate triple.
    #[inline]
    pub fn offset(&self, v: [f64; 3], s: f64) -> Self {
        Self {
            c: [
                self.c[0] + s * v[0],
                self.c[1] + s * v[1],
                self.c[2] + s * v[2],
            ],
            dim: self.dim,
        }
    }

    #[inline]
    pub fn dist2(&self, other: &Point) -> f64 {
        let dx = self.c[0] - other.c[0];
        let dy = self.c[1] - other.c[1];
        let dz = self.c[2] - other.c[2];
        dx * dx + dy * dy + dz * dz
    }

    #[inline]
    pub fn dist(&self, other: &Point) -> f64 {
        self.dist2(other).sqrt()
    }
}

impl Serialize for Point {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.coords().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Point {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        Point::from_slice(&v).map_err(serde::de::Error::custom)
    }
}

/// Axis-aligned bounding box in the plane.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Aabb {
    pub min: [f64; 2],
    pub max: [f64; 2],
}

impl Aabb {
    pub fn of_points<'a>(pts: impl IntoIterator<Item = &'a [f64; 2]>) -> Option<Self> {
        let mut it = pts.into_iter();
        let first = it.next()?;
        let mut b = Aabb {
            min: *first,
            max: *first,
        };
        for p in it {
            for k in 0..2 {
                b.min[k] = b.min[k].min(p[k]);
                b.max[k] = b.max[k].max(p[k]);
            }
        }
        Some(b)
    }

    pub fn width(&self) -> f64 {
        self.max[0] - self.min[0]
    }

    pub fn height(&self) -> f64 {
        self.max[1] - self.min[1]
    }

    pub fn center(&self) -> [f64; 2] {
        [
            0.5 * (self.min[0] + self.max[0]),
            0.5 * (self.min[1] + self.max[1]),
        ]
    }

    pub fn inflate(&self, margin: f64) -> Self {
        Aabb {
            min: [self.min[0] - margin, self.min[1] - margin],
            max: [self.max[0] + margin, self.max[1] + margin],
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.min[0] && x <= self.max[0] && y >= self.min[1] && y <= self.max[1]
    }
}

/// Which side of an oriented curve a point lies on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SideLabel {
    Left,
    Right,
    Ambiguous,
}

impl SideLabel {
    pub fn as_str(&self) -> &'static str {
        match self {
            SideLabel::Left => "left",
            SideLabel::Right => "right",
            SideLabel::Ambiguous => "ambiguous",
        }
    }
}

impl std::fmt::Display for SideLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A boundary ∂Ω.
///
/// Analytic variants carry an `extent`: the side of the window used whenever a
/// finite piece of the infinite line/plane is needed (box counting, Whitney
/// decomposition, start sampling). Distances to analytic boundaries are exact
/// everywhere.
#[derive(Clone, Debug, PartialEq)]
pub enum Boundary {
    Line2d { extent: f64 },
    Plane3d { extent: f64 },
    Polyline2d { vertices: Vec<[f64; 2]> },
    LatticePath2d { vertices: Vec<[i64; 2]> },
}

impl Boundary {
    pub fn polyline(vertices: Vec<[f64; 2]>) -> Result<Self> {
        let b = Boundary::Polyline2d { vertices };
        b.validate()?;
        Ok(b)
    }

    pub fn lattice_path(vertices: Vec<[i64; 2]>) -> Result<Self> {
        let b = Boundary::LatticePath2d { vertices };
        b.validate()?;
        Ok(b)
    }

    pub fn kind(&self) -> &'static str {
        match self {
            Boundary::Line2d { .. } => "analytic-line2d",
            Boundary::Plane3d { .. } => "analytic-plane3d",
            Boundary::Polyline2d { .. } => "polyline2d",
            Boundary::LatticePath2d { .. } => "lattice-path2d",
        }
    }

    /// Ambient dimension d_e.
    pub fn ambient_dim(&self) -> usize {
        match self {
            Boundary::Plane3d { .. } => 3,
            _ => 2,
        }
    }

    pub fn is_analytic(&self) -> bool {
        matches!(self, Boundary::Line2d { .. } | Boundary::Plane3d { .. })
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            Boundary::Line2d { extent } | Boundary::Plane3d { extent } => {
                if !(extent.is_finite() && *extent > 0.0) {
                    return Err(Error::InvalidBoundary(format!(
                        "analytic extent must be positive, got {extent}"
                    )));
                }
            }
            Boundary::Polyline2d { vertices } => {
                if vertices.is_empty() {
                    return Err(Error::InvalidBoundary("empty vertex list".into()));
                }
                if vertices.len() < 2 {
                    return Err(Error::InvalidBoundary(
                        "a polyline needs at least 2 vertices".into(),
                    ));
                }
                if let Some(v) = vertices.iter().find(|v| !v[0].is_finite() || !v[1].is_finite()) {
                    return Err(Error::InvalidBoundary(format!("non-finite vertex {v:?}")));
                }
                if let Some(i) = vertices.windows(2).position(|w| w[0] == w[1]) {
                    return Err(Error::InvalidBoundary(format!(
                        "vertices {i} and {} coincide",
                        i + 1
                    )));
                }
            }
            Boundary::LatticePath2d { vertices } => {
                if vertices.is_empty() {
                    return Err(Error::InvalidBoundary("empty vertex list".into()));
                }
                for (i, w) in vertices.windows(2).enumerate() {
                    let step = (w[1][0] - w[0][0]).abs() + (w[1][1] - w[0][1]).abs();
                    if step != 1 {
                        return Err(Error::InvalidBoundary(format!(
                            "lattice step {i} is not a unit step"
                        )));
                    }
                }
                let mut seen = rustc_hash::FxHashSet::default();
                seen.reserve(vertices.len());
                for v in vertices {
                    if !seen.insert(*v) {
                        return Err(Error::InvalidBoundary(format!(
                            "lattice path revisits site {v:?}"
                        )));
                    }
                }
            }
        }
        Ok(())
    }

    /// Vertices as floating points (empty for analytic boundaries).
    pub fn vertices_f64(&self) -> Vec<[f64; 2]> {
        match self {
            Boundary::Polyline2d { vertices } => vertices.clone(),
            Boundary::LatticePath2d { vertices } => vertices
                .iter()
                .map(|v| [v[0] as f64, v[1] as f64])
                .collect(),
            _ => Vec::new(),
        }
    }

    /// Segments of a piecewise-linear boundary; the analytic line is clipped to its window.
    pub fn segments(&self) -> Vec<[[f64; 2]; 2]> {
        match self {
            Boundary::Line2d { extent } => vec![[[-0.5 * extent, 0.0], [0.5 * extent, 0.0]]],
            Boundary::Plane3d { .. } => Vec::new(),
            _ => self
                .vertices_f64()
                .windows(2)
                .map(|w| [w[0], w[1]])
                .collect(),
        }
    }

    /// A polyline whose last vertex repeats the first has no free endpoints.
    pub fn is_closed(&self) -> bool {
        match self {
            Boundary::Polyline2d { vertices } => {
                vertices.len() >= 4 && vertices.first() == vertices.last()
            }
            _ => false,
        }
    }

    /// Planar bounding box (for the plane this is its xy window).
    pub fn bbox(&self) -> Aabb {
        match self {
            Boundary::Line2d { extent } => Aabb {
                min: [-0.5 * extent, 0.0],
                max: [0.5 * extent, 0.0],
            },
            Boundary::Plane3d { extent } => Aabb {
                min: [-0.5 * extent, -0.5 * extent],
                max: [0.5 * extent, 0.5 * extent],
            },
            _ => Aabb::of_points(&self.vertices_f64()).expect("validated boundary is non-empty"),
        }
    }

    /// Largest distance between two points of the boundary (window size for analytic kinds).
    pub fn diameter(&self) -> f64 {
        match self {
            Boundary::Line2d { extent } | Boundary::Plane3d { extent } => *extent,
            _ => hull_diameter(&self.vertices_f64()),
        }
    }

    pub fn to_json(&self, meta: Value) -> Value {
        let vertices: Value = match self {
            Boundary::Polyline2d { vertices } => json!(vertices),
            Boundary::LatticePath2d { vertices } => json!(vertices),
            _ => json!([]),
        };
        let mut meta = match meta {
            Value::Object(m) => m,
            Value::Null => serde_json::Map::new(),
            other => {
                let mut m = serde_json::Map::new();
                m.insert("value".into(), other);
                m
            }
        };
        if let Boundary::Line2d { extent } | Boundary::Plane3d { extent } = self {
            meta.insert("extent".into(), json!(extent));
        }
        json!({ "kind": self.kind(), "vertices": vertices, "meta": Value::Object(meta) })
    }

    pub fn to_json_string(&self, meta: Value) -> String {
        serde_json::to_string(&self.to_json(meta)).expect("boundary JSON is always serializable")
    }

    /// Parses the boundary file format, returning the boundary and its `meta` object.
    pub fn from_json(text: &str) -> Result<(Self, Value)> {
        #[derive(Deserialize)]
        struct Raw {
            kind: String,
            #[serde(default)]
            vertices: Value,
            #[serde(default)]
            meta: Value,
        }
        let raw: Raw = serde_json::from_str(text)?;
        let extent = || -> Result<f64> {
            raw.meta
                .get("extent")
                .and_then(Value::as_f64)
                .ok_or_else(|| Error::InvalidBoundary("analytic boundary without meta.extent".into()))
        };
        let b = match raw.kind.as_str() {
            "analytic-line2d" => Boundary::Line2d { extent: extent()? },
            "analytic-plane3d" => Boundary::Plane3d { extent: extent()? },
            "polyline2d" => Boundary::Polyline2d {
                vertices: serde_json::from_value(raw.vertices)?,
            },
            "lattice-path2d" => Boundary::LatticePath2d {
                vertices: serde_json::from_value(raw.vertices)?,
            },
            other => return Err(Error::InvalidBoundary(format!("unknown kind {other:?}"))),
        };
        b.validate()?;
        Ok((b, raw.meta))
    }
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Monotone-chain convex hull followed by an all-pairs scan of hull vertices.
fn hull_diameter(pts: &[[f64; 2]]) -> f64 {
    let mut p: Vec<[f64; 2]> = pts.to_vec();
    p.sort_by(|a, b| a.partial_cmp(b).expect("finite vertices"));
    p.dedup();
    if p.len() < 3 {
        return match p.as_slice() {
            [a, b] => ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt(),
            _ => 0.0,
        };
    }
    let mut hull: Vec<[f64; 2]> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &[f64; 2]>> = if pass == 0 {
            Box::new(p.iter())
        } else {
            Box::new(p.iter().rev())
        };
        for &q in iter {
            while hull.len() >= start + 2 && cross(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    let mut best = 0.0f64;
    for i in 0..hull.len() {
        for j in i + 1..hull.len() {
            let d = (hull[i][0] - hull[j][0]).powi(2) + (hull[i][1] - hull[j][1]).powi(2);
            best = best.max(d);
        }
    }
    best.sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polyline_validation() {
        assert!(Boundary::polyline(vec![]).is_err());
        assert!(Boundary::polyline(vec![[0.0, 0.0]]).is_err());
        assert!(Boundary::polyline(vec![[0.0, 0.0], [0.0, 0.0]]).is_err());
        assert!(Boundary::polyline(vec![[0.0, 0.0], [1.0, 0.0]]).is_ok());
    }

    #[test]
    fn lattice_validation() {
        assert!(Boundary::lattice_path(vec![[0, 0], [1, 0], [1, 1]]).is_ok());
        assert!(Boundary::lattice_path(vec![[0, 0], [2, 0]]).is_err());
        assert!(Boundary::lattice_path(vec![[0, 0], [1, 1]]).is_err());
        assert!(Boundary::lattice_path(vec![[0, 0], [1, 0], [0, 0]]).is_err());
        assert!(Boundary::lattice_path(vec![]).is_err());
    }

    #[test]
    fn diameter_matches_brute_force() {
        let pts: Vec<[f64; 2]> = (0..200)
            .map(|i| {
                let t = i as f64 * 0.37;
                [t.cos() * (1.0 + 0.3 * (3.0 * t).sin()), 0.5 * t.sin()]
            })
            .collect();
        let mut brute = 0.0f64;
        for a in &pts {
            for b in &pts {
                brute = brute.max(((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt());
            }
        }
        let b = Boundary::polyline(pts).unwrap();
        assert!((b.diameter() - brute).abs() < 1e-12);
    }

    #[test]
    fn json_round_trip_keeps_integer_lattice_coordinates() {
        let b = Boundary::lattice_path(vec![[0, 0], [0, 1], [-1, 1]]).unwrap();
        let text = b.to_json_string(json!({"seed": 3}));
        assert!(text.contains("[[0,0],[0,1],[-1,1]]"));
        let (back, meta) = Boundary::from_json(&text).unwrap();
        assert_eq!(back, b);
        assert_eq!(meta["seed"], 3);

        let line = Boundary::Line2d { extent: 16.0 };
        let (back, _) = Boundary::from_json(&line.to_json_string(Value::Null)).unwrap();
        assert_eq!(back, line);
        assert!(Boundary::from_json(r#"{"kind":"spline","vertices":[]}"#).is_err());
    }
}

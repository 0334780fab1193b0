//! Indoor geometry, the candidate sensor grid and sensor coverage.
//!
//! Coordinates are meters in the floor plane; `x` runs along the plan's
//! width and `y` along its height. Sensors are ceiling-mounted and
//! omnidirectional, so coverage is a 2-D disc clipped by line of sight
//! through walls.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const GEOM_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn distance(self, other: Point) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }

    pub fn distance_sq(self, other: Point) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }

    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + (other.x - self.x) * t, self.y + (other.y - self.y) * t)
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Segment {
    pub a: Point,
    pub b: Point,
}

impl Segment {
    pub fn new(a: Point, b: Point) -> Self {
        Self { a, b }
    }

    pub fn length(&self) -> f64 {
        self.a.distance(self.b)
    }

    /// Closed-segment intersection test; touching endpoints count.
    pub fn intersects(&self, other: &Segment) -> bool {
        segments_intersect(self.a, self.b, other.a, other.b)
    }
}

fn orient(p: Point, q: Point, r: Point) -> i8 {
    let v = (q.x - p.x) * (r.y - p.y) - (q.y - p.y) * (r.x - p.x);
    if v > GEOM_EPS {
        1
    } else if v < -GEOM_EPS {
        -1
    } else {
        0
    }
}

fn on_segment(p: Point, q: Point, r: Point) -> bool {
    // q lies within the bounding box of p-r (caller ensures collinearity)
    q.x <= p.x.max(r.x) + GEOM_EPS
        && q.x >= p.x.min(r.x) - GEOM_EPS
        && q.y <= p.y.max(r.y) + GEOM_EPS
        && q.y >= p.y.min(r.y) - GEOM_EPS
}

fn segments_intersect(p1: Point, q1: Point, p2: Point, q2: Point) -> bool {
    let o1 = orient(p1, q1, p2);
    let o2 = orient(p1, q1, q2);
    let o3 = orient(p2, q2, p1);
    let o4 = orient(p2, q2, q1);
    if o1 != o2 && o3 != o4 {
        return true;
    }
    (o1 == 0 && on_segment(p1, p2, q1))
        || (o2 == 0 && on_segment(p1, q2, q1))
        || (o3 == 0 && on_segment(p2, p1, q2))
        || (o4 == 0 && on_segment(p2, q1, q2))
}

/// Named axis-aligned room rectangle.
#[derive(Clone, Debug, PartialEq)]
pub struct Zone {
    pub name: String,
    pub x: f64,
    pub y: f64,
    pub width: f64,
    pub height: f64,
}

impl Zone {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= self.x && p.x <= self.x + self.width && p.y >= self.y && p.y <= self.y + self.height
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FloorPlan {
    pub width: f64,
    pub height: f64,
    pub walls: Vec<Segment>,
    pub zones: Vec<Zone>,
    pub anchors: BTreeMap<String, Point>,
    pub entry: Point,
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawPlan {
    width: f64,
    height: f64,
    #[serde(default)]
    walls: Vec<[f64; 4]>,
    #[serde(default)]
    zones: Vec<RawZone>,
    #[serde(default)]
    anchors: BTreeMap<String, [f64; 2]>,
    entry: [f64; 2],
}

#[derive(Debug, Deserialize, Serialize)]
#[serde(deny_unknown_fields)]
struct RawZone {
    name: String,
    rect: [f64; 4],
}

impl FloorPlan {
    pub fn contains(&self, p: Point) -> bool {
        p.x >= 0.0 && p.x <= self.width && p.y >= 0.0 && p.y <= self.height
    }

    pub fn clamp(&self, p: Point) -> Point {
        Point::new(p.x.clamp(0.0, self.width), p.y.clamp(0.0, self.height))
    }

    /// True if the straight segment `a`–`b` crosses or touches any wall.
    pub fn blocked(&self, a: Point, b: Point) -> bool {
        let seg = Segment::new(a, b);
        self.walls.iter().any(|w| seg.intersects(w))
    }

    pub fn zone_of(&self, p: Point) -> Option<&Zone> {
        self.zones.iter().find(|z| z.contains(p))
    }

    pub fn anchor(&self, activity: &str) -> Option<Point> {
        self.anchors.get(activity).copied()
    }

    /// Checks every invariant of a floor plan.
    pub fn validate(&self) -> Result<()> {
        if !(self.width > 0.0 && self.width.is_finite()) {
            return Err(Error::Validation(format!("width must be positive, got {}", self.width)));
        }
        if !(self.height > 0.0 && self.height.is_finite()) {
            return Err(Error::Validation(format!("height must be positive, got {}", self.height)));
        }
        for (i, w) in self.walls.iter().enumerate() {
            if w.length() <= GEOM_EPS {
                return Err(Error::Validation(format!("wall {i} has zero length")));
            }
        }
        for z in &self.zones {
            let corners = [Point::new(z.x, z.y), Point::new(z.x + z.width, z.y + z.height)];
            if z.width <= 0.0 || z.height <= 0.0 || !corners.iter().all(|&c| self.contains(c)) {
                return Err(Error::Validation(format!("zone '{}' lies outside the plan", z.name)));
            }
        }
        for (name, &p) in &self.anchors {
            if !self.contains(p) {
                return Err(Error::Validation(format!(
                    "anchor '{name}' at ({}, {}) lies outside the {}x{} plan",
                    p.x, p.y, self.width, self.height
                )));
            }
        }
        if !self.contains(self.entry) {
            return Err(Error::Validation("entry point lies outside the plan".into()));
        }
        Ok(())
    }

    /// Parses and validates a floor plan from its TOML text.
    pub fn from_toml_str(source: &str, origin: &str) -> Result<Self> {
        let raw: RawPlan = toml::from_str(source).map_err(|e| Error::from_toml(source, origin, e))?;
        let plan = FloorPlan {
            width: raw.width,
            height: raw.height,
            walls: raw
                .walls
                .iter()
                .map(|w| Segment::new(Point::new(w[0], w[1]), Point::new(w[2], w[3])))
                .collect(),
            zones: raw
                .zones
                .into_iter()
                .map(|z| Zone {
                    name: z.name,
                    x: z.rect[0],
                    y: z.rect[1],
                    width: z.rect[2],
                    height: z.rect[3],
                })
                .collect(),
            anchors: raw
                .anchors
                .into_iter()
                .map(|(k, v)| (k.trim().to_string(), Point::new(v[0], v[1])))
                .collect(),
            entry: Point::new(raw.entry[0], raw.entry[1]),
        };
        plan.validate()?;
        Ok(plan)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn to_toml_string(&self) -> String {
        let raw = RawPlan {
            width: self.width,
            height: self.height,
            walls: self.walls.iter().map(|w| [w.a.x, w.a.y, w.b.x, w.b.y]).collect(),
            zones: self
                .zones
                .iter()
                .map(|z| RawZone {
                    name: z.name.clone(),
                    rect: [z.x, z.y, z.width, z.height],
                })
                .collect(),
            anchors: self.anchors.iter().map(|(k, p)| (k.clone(), [p.x, p.y])).collect(),
            entry: [self.entry.x, self.entry.y],
        };
        toml::to_string(&raw).expect("floor plan serializes")
    }
}

/// Discretized candidate sensor locations, row-major.
#[derive(Clone, Debug, PartialEq)]
pub struct CandidateGrid {
    pub epsilon: f64,
    pub rows: usize,
    pub cols: usize,
    pub locations: Vec<Point>,
}

/// Number of interior lines for an extent split at spacing `epsilon`:
/// `ceil(extent / epsilon) - 1`. A relative tolerance keeps exact ratios
/// such as 8 / 0.25 from rounding up.
pub fn interior_count(extent: f64, epsilon: f64) -> i64 {
    let ratio = extent / epsilon;
    (ratio - 1e-9 * ratio.abs().max(1.0)).ceil() as i64 - 1
}

pub fn build_grid(plan: &FloorPlan, epsilon: f64) -> Result<CandidateGrid> {
    if !(epsilon > 0.0 && epsilon.is_finite()) {
        return Err(Error::invalid(format!("grid spacing must be positive, got {epsilon}")));
    }
    let rows = interior_count(plan.height, epsilon);
    let cols = interior_count(plan.width, epsilon);
    if rows < 1 {
        return Err(Error::invalid(format!(
            "degenerate grid: height {} at spacing {epsilon} yields {rows} rows",
            plan.height
        )));
    }
    if cols < 1 {
        return Err(Error::invalid(format!(
            "degenerate grid: width {} at spacing {epsilon} yields {cols} columns",
            plan.width
        )));
    }
    let (rows, cols) = (rows as usize, cols as usize);
    // interior points evenly spaced so the outermost sit one step from each wall
    let dx = plan.width / (cols + 1) as f64;
    let dy = plan.height / (rows + 1) as f64;
    let locations = (0..rows)
        .flat_map(|r| (0..cols).map(move |c| Point::new((c + 1) as f64 * dx, (r + 1) as f64 * dy)))
        .collect();
    Ok(CandidateGrid {
        epsilon,
        rows,
        cols,
        locations,
    })
}

impl CandidateGrid {
    pub fn len(&self) -> usize {
        self.locations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.locations.is_empty()
    }

    pub fn location(&self, index: usize) -> Point {
        self.locations[index]
    }

    pub fn row_col(&self, index: usize) -> (usize, usize) {
        (index / self.cols, index % self.cols)
    }

    pub fn index(&self, row: usize, col: usize) -> usize {
        row * self.cols + col
    }

    /// Index of the grid location closest to `p` (lowest index on ties).
    pub fn nearest(&self, p: Point) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, &l) in self.locations.iter().enumerate() {
            let d = l.distance_sq(p);
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best
    }

    pub fn region(&self, index: usize, radius: f64) -> ActivationRegion {
        ActivationRegion {
            center_index: index,
            center: self.locations[index],
            radius,
        }
    }
}

/// The area a motion sensor at a grid location can sense.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ActivationRegion {
    pub center_index: usize,
    pub center: Point,
    pub radius: f64,
}

/// Whether a sensor with activation `region` detects an occupant at `point`.
pub fn covers(region: &ActivationRegion, point: Point, plan: &FloorPlan) -> bool {
    region.center.distance_sq(point) <= region.radius * region.radius && !plan.blocked(region.center, point)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn open_plan(w: f64, h: f64) -> FloorPlan {
        FloorPlan {
            width: w,
            height: h,
            walls: vec![],
            zones: vec![],
            anchors: BTreeMap::new(),
            entry: Point::new(0.5, 0.5),
        }
    }

    #[test]
    fn grid_sizes() {
        let g = build_grid(&open_plan(8.0, 8.0), 1.0).unwrap();
        assert_eq!((g.rows, g.cols, g.len()), (7, 7, 49));
        assert_eq!(build_grid(&open_plan(8.0, 8.0), 0.5).unwrap().len(), 225);
        let g = build_grid(&open_plan(5.2, 8.0), 1.0).unwrap();
        assert_eq!((g.rows, g.cols, g.len()), (7, 5, 35));
    }

    #[test]
    fn grid_is_interior_and_row_major() {
        let plan = open_plan(5.2, 8.0);
        let g = build_grid(&plan, 0.5).unwrap();
        for (i, &p) in g.locations.iter().enumerate() {
            assert!(p.x > 0.0 && p.x < plan.width && p.y > 0.0 && p.y < plan.height);
            let (r, c) = g.row_col(i);
            assert_eq!(g.index(r, c), i);
        }
        assert_eq!(g.location(1).y, g.location(0).y);
        assert!(g.location(g.cols).y > g.location(0).y);
    }

    #[test]
    fn degenerate_grid_names_dimension() {
        let err = build_grid(&open_plan(8.0, 1.0), 1.0).unwrap_err().to_string();
        assert!(err.contains("height"), "{err}");
        let err = build_grid(&open_plan(0.9, 8.0), 1.0).unwrap_err().to_string();
        assert!(err.contains("width"), "{err}");
        assert!(build_grid(&open_plan(8.0, 8.0), 0.0).is_err());
    }

    #[test]
    fn coverage_cases() {
        let mut plan = open_plan(8.0, 8.0);
        let region = ActivationRegion {
            center_index: 0,
            center: Point::new(2.0, 2.0),
            radius: 1.0,
        };
        assert!(covers(&region, Point::new(2.0, 2.5), &plan));
        assert!(!covers(&region, Point::new(4.0, 2.0), &plan));
        assert!(covers(&region, Point::new(3.0, 2.0), &plan));
        plan.walls.push(Segment::new(Point::new(1.0, 2.25), Point::new(3.0, 2.25)));
        assert!(!covers(&region, Point::new(2.0, 2.5), &plan));
        assert!(covers(&region, Point::new(2.0, 1.5), &plan));
        assert!(covers(&region, region.center, &plan));
    }

    #[test]
    fn segment_intersection_edge_cases() {
        let s = |a: (f64, f64), b: (f64, f64)| Segment::new(Point::new(a.0, a.1), Point::new(b.0, b.1));
        assert!(s((0.0, 0.0), (2.0, 2.0)).intersects(&s((0.0, 2.0), (2.0, 0.0))));
        assert!(!s((0.0, 0.0), (1.0, 0.0)).intersects(&s((0.0, 1.0), (1.0, 1.0))));
        // touching at an endpoint
        assert!(s((0.0, 0.0), (1.0, 0.0)).intersects(&s((1.0, 0.0), (1.0, 1.0))));
        // collinear, disjoint
        assert!(!s((0.0, 0.0), (1.0, 0.0)).intersects(&s((2.0, 0.0), (3.0, 0.0))));
        // degenerate point on a wall
        assert!(s((0.5, 0.0), (0.5, 0.0)).intersects(&s((0.0, 0.0), (1.0, 0.0))));
    }

    #[test]
    fn load_validates() {
        let ok = r#"
width = 8.0
height = 8.0
entry = [1.0, 1.0]
[anchors]
Sleep = [2.0, 7.0]
"#;
        let plan = FloorPlan::from_toml_str(ok, "inline").unwrap();
        assert!(plan.walls.is_empty());
        let back = FloorPlan::from_toml_str(&plan.to_toml_string(), "roundtrip").unwrap();
        assert_eq!(plan, back);

        let out = ok.replace("[2.0, 7.0]", "[9.0, 1.0]");
        let err = FloorPlan::from_toml_str(&out, "inline").unwrap_err();
        assert!(matches!(err, Error::Validation(_)), "{err}");

        let bad = "width = 8.0\nheight = \"x\"\nentry = [1.0, 1.0]\n";
        match FloorPlan::from_toml_str(bad, "bad.toml").unwrap_err() {
            Error::Parse { location, .. } => assert_eq!(location, "bad.toml:2"),
            other => panic!("unexpected {other}"),
        }

        let zero_wall = format!("{ok}\nwalls = [[1.0, 1.0, 1.0, 1.0]]\n").replace("[anchors]\nSleep = [2.0, 7.0]\n", "");
        let zero_wall = format!("{zero_wall}\n[anchors]\nSleep = [2.0, 7.0]\n");
        assert!(FloorPlan::from_toml_str(&zero_wall, "w").is_err());
    }
}

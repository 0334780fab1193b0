//! Synthetic occupant simulator.
//!
//! Each occupant follows a sampled daily plan: starting at the entry point,
//! it walks to each activity's anchor along a shortest path over a walkable
//! occupancy grid, then dwells there with Gaussian positional jitter for the
//! rest of the activity's time slot. Walking time is carved out of the slot,
//! so the trajectory length is always `total duration / sampling period`.
//! Motion-sensor bits are derived from positions with [`covers`].

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::floorplan::{covers, ActivationRegion, CandidateGrid, FloorPlan, Point};
use crate::seed;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdlEntry {
    pub activity: String,
    pub minutes: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub group: Option<String>,
}

/// An ordered daily activity plan.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdlPlanSpec {
    pub entries: Vec<AdlEntry>,
    #[serde(default = "default_period")]
    pub sampling_period_seconds: f64,
}

fn default_period() -> f64 {
    3.0
}

impl AdlPlanSpec {
    pub fn from_toml_str(source: &str, origin: &str) -> Result<Self> {
        let mut spec: AdlPlanSpec = toml::from_str(source).map_err(|e| Error::from_toml(source, origin, e))?;
        for e in &mut spec.entries {
            e.activity = e.activity.trim().to_string();
        }
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text, &path.display().to_string())
    }

    pub fn validate(&self) -> Result<()> {
        if self.entries.is_empty() {
            return Err(Error::Validation("ADL plan has no entries".into()));
        }
        if !(self.sampling_period_seconds > 0.0 && self.sampling_period_seconds.is_finite()) {
            return Err(Error::Validation("sampling period must be positive".into()));
        }
        for e in &self.entries {
            if !(e.minutes > 0.0 && e.minutes.is_finite()) {
                return Err(Error::Validation(format!(
                    "activity '{}' has non-positive duration {}",
                    e.activity, e.minutes
                )));
            }
            if e.activity.is_empty() {
                return Err(Error::Validation("activity label is empty".into()));
            }
        }
        Ok(())
    }

    pub fn total_minutes(&self) -> f64 {
        self.entries.iter().map(|e| e.minutes).sum()
    }

    /// Samples per occupant: total duration divided by the sampling period.
    pub fn steps(&self) -> usize {
        (self.total_minutes() * 60.0 / self.sampling_period_seconds).round() as usize
    }

    /// Distinct activity labels in first-appearance order.
    pub fn labels(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for e in &self.entries {
            if !out.contains(&e.activity) {
                out.push(e.activity.clone());
            }
        }
        out
    }
}

/// One concrete activity slot of a sampled schedule.
#[derive(Clone, Debug, PartialEq)]
pub struct ScheduledActivity {
    /// Index into [`AdlPlanSpec::labels`].
    pub label: usize,
    pub seconds: f64,
}

/// Draws a concrete schedule: shuffle groups are permuted among their own
/// positions and every duration is scaled by a factor in
/// `[1 - jitter, 1 + jitter]`, then all durations are renormalized so the
/// total is unchanged.
pub fn sample_schedule(spec: &AdlPlanSpec, jitter: f64, rng: &mut seed::Rng) -> Vec<ScheduledActivity> {
    let labels = spec.labels();
    let mut order: Vec<usize> = (0..spec.entries.len()).collect();

    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, e) in spec.entries.iter().enumerate() {
        if let Some(g) = &e.group {
            groups.entry(g.as_str()).or_default().push(i);
        }
    }
    for positions in groups.values() {
        let mut members = positions.clone();
        members.shuffle(rng);
        for (&pos, &m) in positions.iter().zip(&members) {
            order[pos] = m;
        }
    }

    let total: f64 = spec.entries.iter().map(|e| e.minutes * 60.0).sum();
    let mut out: Vec<ScheduledActivity> = order
        .iter()
        .map(|&i| {
            let e = &spec.entries[i];
            let factor = if jitter > 0.0 {
                rng.random_range(1.0 - jitter..=1.0 + jitter)
            } else {
                1.0
            };
            ScheduledActivity {
                label: labels.iter().position(|l| *l == e.activity).expect("label present"),
                seconds: e.minutes * 60.0 * factor,
            }
        })
        .collect();
    let sum: f64 = out.iter().map(|a| a.seconds).sum();
    let scale = total / sum;
    for a in &mut out {
        a.seconds *= scale;
    }
    out
}

/// Which label walking samples carry.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransitLabel {
    /// The activity being walked to.
    #[default]
    Next,
    /// The activity just finished (the first leg still uses the next one).
    Previous,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulatorConfig {
    pub occupants: usize,
    /// Sensor activation radius in meters.
    pub radius: f64,
    /// Walking speed in m/s.
    pub speed: f64,
    /// Side of a walkable occupancy-grid cell in meters.
    pub nav_cell: f64,
    /// Standard deviation of the positional jitter while dwelling.
    pub dwell_sigma: f64,
    /// Relative duration jitter per activity.
    pub duration_jitter: f64,
    pub transit_label: TransitLabel,
}

impl Default for SimulatorConfig {
    fn default() -> Self {
        Self {
            occupants: 5,
            radius: 1.0,
            speed: 1.0,
            nav_cell: 0.25,
            dwell_sigma: 0.15,
            duration_jitter: 0.1,
            transit_label: TransitLabel::Next,
        }
    }
}

impl SimulatorConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |v: f64, name: &str| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Validation(format!("simulator.{name} must be positive, got {v}")))
            }
        };
        positive(self.radius, "radius")?;
        positive(self.speed, "speed")?;
        positive(self.nav_cell, "nav_cell")?;
        if self.occupants == 0 {
            return Err(Error::Validation("simulator.occupants must be at least 1".into()));
        }
        if !(self.dwell_sigma >= 0.0) {
            return Err(Error::Validation("simulator.dwell_sigma must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.duration_jitter) {
            return Err(Error::Validation("simulator.duration_jitter must be in [0, 1)".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrajectorySample {
    pub t: f64,
    pub position: Point,
    pub label: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub occupant_id: usize,
    pub samples: Vec<TrajectorySample>,
}

/// Per-occupant series of (sensor bit vector, activity) rows.
#[derive(Clone, Debug, PartialEq)]
pub struct OccupantSeries {
    /// Seconds since midnight of the first recorded day (0 for simulations).
    pub timestamps: Vec<f64>,
    pub features: BitMatrix,
    pub labels: Vec<usize>,
}

impl OccupantSeries {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }
}

/// Sensor-trigger dataset for one placement: one series per occupant.
#[derive(Clone, Debug, PartialEq)]
pub struct TraceDataset {
    pub sensor_names: Vec<String>,
    pub class_names: Vec<String>,
    pub series: Vec<OccupantSeries>,
}

impl TraceDataset {
    pub fn occupants(&self) -> usize {
        self.series.len()
    }

    pub fn sensor_count(&self) -> usize {
        self.sensor_names.len()
    }

    pub fn total_rows(&self) -> usize {
        self.series.iter().map(|s| s.len()).sum()
    }

    pub fn validate(&self) -> Result<()> {
        let d = self.sensor_count();
        let m = self.class_names.len();
        for (i, s) in self.series.iter().enumerate() {
            if s.features.cols() != d {
                return Err(Error::Validation(format!("occupant {i}: bit vectors have width {}", s.features.cols())));
            }
            if s.features.rows() != s.labels.len() || s.timestamps.len() != s.labels.len() {
                return Err(Error::Validation(format!("occupant {i}: ragged series")));
            }
            if let Some(&bad) = s.labels.iter().find(|&&l| l >= m) {
                return Err(Error::Validation(format!("occupant {i}: label index {bad} out of range")));
            }
        }
        Ok(())
    }

    /// Column projection onto `keep` (sorted ascending on output).
    pub fn filter_sensors(&self, keep: &[usize]) -> Result<TraceDataset> {
        if keep.is_empty() {
            return Err(Error::invalid("sensor subset is empty"));
        }
        let mut keep = keep.to_vec();
        keep.sort_unstable();
        keep.dedup();
        if let Some(&bad) = keep.iter().find(|&&k| k >= self.sensor_count()) {
            return Err(Error::invalid(format!(
                "sensor index {bad} out of range for {} sensors",
                self.sensor_count()
            )));
        }
        Ok(TraceDataset {
            sensor_names: keep.iter().map(|&k| self.sensor_names[k].clone()).collect(),
            class_names: self.class_names.clone(),
            series: self
                .series
                .iter()
                .map(|s| OccupantSeries {
                    timestamps: s.timestamps.clone(),
                    features: s.features.select_columns(&keep),
                    labels: s.labels.clone(),
                })
                .collect(),
        })
    }

    /// Writes `occupant_<i>.csv` files with header
    /// `t,<sensor_0>,...,<sensor_{D-1}>,activity`.
    pub fn write_csv_dir(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir)?;
        for (i, s) in self.series.iter().enumerate() {
            let mut w = csv::Writer::from_path(dir.join(format!("occupant_{i}.csv")))?;
            let mut header = vec!["t".to_string()];
            header.extend(self.sensor_names.iter().cloned());
            header.push("activity".into());
            w.write_record(&header)?;
            for r in 0..s.len() {
                let mut rec = vec![s.timestamps[r].to_string()];
                rec.extend((0..self.sensor_count()).map(|c| if s.features.get(r, c) { "1" } else { "0" }.to_string()));
                rec.push(self.class_names[s.labels[r]].clone());
                w.write_record(&rec)?;
            }
            w.flush()?;
        }
        Ok(())
    }

    /// Reads a directory written by [`TraceDataset::write_csv_dir`]. Class
    /// names are assigned in first-appearance order.
    pub fn read_csv_dir(dir: impl AsRef<Path>) -> Result<TraceDataset> {
        let dir = dir.as_ref();
        let mut sensor_names: Option<Vec<String>> = None;
        let mut class_names: Vec<String> = Vec::new();
        let mut series = Vec::new();
        for i in 0.. {
            let path = dir.join(format!("occupant_{i}.csv"));
            if !path.exists() {
                break;
            }
            let mut r = csv::Reader::from_path(&path)?;
            let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
            if header.len() < 2 || header[0] != "t" || header[header.len() - 1] != "activity" {
                return Err(Error::Parse {
                    location: path.display().to_string(),
                    message: "unexpected header".into(),
                });
            }
            let names = header[1..header.len() - 1].to_vec();
            match &sensor_names {
                Some(n) if *n != names => {
                    return Err(Error::Validation(format!("{}: sensor columns differ", path.display())))
                }
                _ => sensor_names = Some(names.clone()),
            }
            let d = names.len();
            let mut timestamps = Vec::new();
            let mut rows: Vec<Vec<bool>> = Vec::new();
            let mut labels = Vec::new();
            for (line, rec) in r.records().enumerate() {
                let rec = rec?;
                let bad = |m: &str| Error::Parse {
                    location: format!("{}:{}", path.display(), line + 2),
                    message: m.to_string(),
                };
                timestamps.push(rec[0].parse::<f64>().map_err(|_| bad("bad timestamp"))?);
                let mut row = Vec::with_capacity(d);
                for c in 0..d {
                    row.push(match &rec[c + 1] {
                        "1" => true,
                        "0" => false,
                        _ => return Err(bad("sensor value must be 0 or 1")),
                    });
                }
                rows.push(row);
                let label = &rec[d + 1];
                let idx = match class_names.iter().position(|c| c == label) {
                    Some(i) => i,
                    None => {
                        class_names.push(label.to_string());
                        class_names.len() - 1
                    }
                };
                labels.push(idx);
            }
            series.push(OccupantSeries {
                timestamps,
                features: BitMatrix::from_rows(d, &rows),
                labels,
            });
        }
        if series.is_empty() {
            return Err(Error::Missing(format!("no occupant_*.csv files in {}", dir.display())));
        }
        Ok(TraceDataset {
            sensor_names: sensor_names.unwrap_or_default(),
            class_names,
            series,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
struct HeapItem {
    cost: f64,
    node: usize,
}

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // min-heap on cost, then on node index
        other
            .cost
            .total_cmp(&self.cost)
            .then_with(|| other.node.cmp(&self.node))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Walkable occupancy grid; moves between 8-neighbours are allowed unless
/// the straight line between the cell centres touches a wall.
#[derive(Clone, Debug)]
struct NavGrid {
    nx: usize,
    ny: usize,
    cell_w: f64,
    cell_h: f64,
    edges: Vec<Vec<(usize, f64)>>,
}

impl NavGrid {
    fn new(plan: &FloorPlan, cell: f64) -> Self {
        let nx = ((plan.width / cell).round() as usize).max(1);
        let ny = ((plan.height / cell).round() as usize).max(1);
        let cell_w = plan.width / nx as f64;
        let cell_h = plan.height / ny as f64;
        let mut nav = NavGrid {
            nx,
            ny,
            cell_w,
            cell_h,
            edges: vec![Vec::new(); nx * ny],
        };
        for iy in 0..ny {
            for ix in 0..nx {
                let from = iy * nx + ix;
                for (dx, dy) in [(-1i64, -1i64), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)] {
                    let (jx, jy) = (ix as i64 + dx, iy as i64 + dy);
                    if jx < 0 || jy < 0 || jx >= nx as i64 || jy >= ny as i64 {
                        continue;
                    }
                    let to = jy as usize * nx + jx as usize;
                    let (a, b) = (nav.center(from), nav.center(to));
                    if !plan.blocked(a, b) {
                        nav.edges[from].push((to, a.distance(b)));
                    }
                }
            }
        }
        nav
    }

    fn center(&self, cell: usize) -> Point {
        let (ix, iy) = (cell % self.nx, cell / self.nx);
        Point::new((ix as f64 + 0.5) * self.cell_w, (iy as f64 + 0.5) * self.cell_h)
    }

    fn cell_of(&self, p: Point) -> usize {
        let ix = ((p.x / self.cell_w).floor().max(0.0) as usize).min(self.nx - 1);
        let iy = ((p.y / self.cell_h).floor().max(0.0) as usize).min(self.ny - 1);
        iy * self.nx + ix
    }

    /// Shortest polyline from `from` to `to`, or `None` if unreachable.
    fn path(&self, from: Point, to: Point) -> Option<Polyline> {
        let (start, goal) = (self.cell_of(from), self.cell_of(to));
        if start == goal {
            return Some(Polyline::new(vec![from, to]));
        }
        let n = self.nx * self.ny;
        let mut dist = vec![f64::INFINITY; n];
        let mut prev = vec![usize::MAX; n];
        let mut heap = BinaryHeap::new();
        dist[start] = 0.0;
        heap.push(HeapItem { cost: 0.0, node: start });
        while let Some(HeapItem { cost, node }) = heap.pop() {
            if node == goal {
                break;
            }
            if cost > dist[node] {
                continue;
            }
            for &(next, w) in &self.edges[node] {
                let c = cost + w;
                if c < dist[next] {
                    dist[next] = c;
                    prev[next] = node;
                    heap.push(HeapItem { cost: c, node: next });
                }
            }
        }
        if !dist[goal].is_finite() {
            return None;
        }
        let mut cells = vec![goal];
        while let Some(&c) = cells.last() {
            if c == start {
                break;
            }
            cells.push(prev[c]);
        }
        cells.reverse();
        let mut pts = Vec::with_capacity(cells.len() + 2);
        pts.push(from);
        pts.extend(cells.iter().map(|&c| self.center(c)));
        pts.push(to);
        Some(Polyline::new(pts))
    }
}

#[derive(Clone, Debug)]
struct Polyline {
    points: Vec<Point>,
    cumulative: Vec<f64>,
}

impl Polyline {
    fn new(points: Vec<Point>) -> Self {
        let mut cumulative = Vec::with_capacity(points.len());
        let mut acc = 0.0;
        cumulative.push(0.0);
        for w in points.windows(2) {
            acc += w[0].distance(w[1]);
            cumulative.push(acc);
        }
        Self { points, cumulative }
    }

    fn length(&self) -> f64 {
        *self.cumulative.last().unwrap_or(&0.0)
    }

    fn at(&self, s: f64) -> Point {
        if s <= 0.0 {
            return self.points[0];
        }
        for i in 1..self.points.len() {
            if s <= self.cumulative[i] {
                let seg = self.cumulative[i] - self.cumulative[i - 1];
                let t = if seg > 0.0 { (s - self.cumulative[i - 1]) / seg } else { 1.0 };
                return self.points[i - 1].lerp(self.points[i], t);
            }
        }
        *self.points.last().unwrap()
    }
}

/// Occupant simulator for one floor plan, candidate grid and ADL plan.
#[derive(Clone, Debug)]
pub struct Simulator {
    plan: FloorPlan,
    grid: CandidateGrid,
    spec: AdlPlanSpec,
    config: SimulatorConfig,
    labels: Vec<String>,
    anchors: Vec<Point>,
    nav: NavGrid,
}

impl Simulator {
    pub fn new(plan: FloorPlan, grid: CandidateGrid, spec: AdlPlanSpec, config: SimulatorConfig) -> Result<Self> {
        plan.validate()?;
        spec.validate()?;
        config.validate()?;
        let labels = spec.labels();
        let anchors = labels
            .iter()
            .map(|l| {
                plan.anchor(l)
                    .ok_or_else(|| Error::Validation(format!("activity '{l}' has no anchor in the floor plan")))
            })
            .collect::<Result<Vec<_>>>()?;
        let nav = NavGrid::new(&plan, config.nav_cell);
        Ok(Self {
            plan,
            grid,
            spec,
            config,
            labels,
            anchors,
            nav,
        })
    }

    pub fn plan(&self) -> &FloorPlan {
        &self.plan
    }

    pub fn grid(&self) -> &CandidateGrid {
        &self.grid
    }

    pub fn spec(&self) -> &AdlPlanSpec {
        &self.spec
    }

    pub fn config(&self) -> &SimulatorConfig {
        &self.config
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn sample_schedule(&self, rng: &mut seed::Rng) -> Vec<ScheduledActivity> {
        sample_schedule(&self.spec, self.config.duration_jitter, rng)
    }

    pub fn simulate_occupant(
        &self,
        occupant_id: usize,
        schedule: &[ScheduledActivity],
        rng: &mut seed::Rng,
    ) -> Result<Trajectory> {
        let period = self.spec.sampling_period_seconds;
        let total: f64 = schedule.iter().map(|a| a.seconds).sum();
        let steps = (total / period).round() as usize;
        let noise = Normal::new(0.0, self.config.dwell_sigma).map_err(|e| Error::Simulation(e.to_string()))?;

        let mut samples = Vec::with_capacity(steps);
        let mut pos = self.plan.entry;
        let mut slot_start = 0.0;
        let mut prev_label: Option<usize> = None;
        let mut j = 0usize;
        for (k, act) in schedule.iter().enumerate() {
            let last = k + 1 == schedule.len();
            let slot_end = if last { f64::INFINITY } else { slot_start + act.seconds };
            let anchor = self.anchors[act.label];
            let path = self.nav.path(pos, anchor).ok_or_else(|| {
                Error::Simulation(format!("activity '{}' is unreachable from ({:.2}, {:.2})", self.labels[act.label], pos.x, pos.y))
            })?;
            let walk_time = path.length() / self.config.speed;
            let transit = match self.config.transit_label {
                TransitLabel::Next => act.label,
                TransitLabel::Previous => prev_label.unwrap_or(act.label),
            };
            while j < steps {
                let t = j as f64 * period;
                if t >= slot_end {
                    break;
                }
                let dt = t - slot_start;
                let sample = if dt < walk_time {
                    TrajectorySample {
                        t,
                        position: path.at(dt * self.config.speed),
                        label: transit,
                    }
                } else {
                    let p = Point::new(anchor.x + noise.sample(rng), anchor.y + noise.sample(rng));
                    TrajectorySample {
                        t,
                        position: self.plan.clamp(p),
                        label: act.label,
                    }
                };
                samples.push(sample);
                j += 1;
            }
            pos = if walk_time <= act.seconds {
                anchor
            } else {
                path.at(act.seconds * self.config.speed)
            };
            slot_start += act.seconds;
            prev_label = Some(act.label);
        }
        Ok(Trajectory { occupant_id, samples })
    }

    /// Trajectories of all occupants; occupant `i` uses stream `i` of `seed`.
    pub fn trajectories(&self, seed: u64) -> Result<Vec<Trajectory>> {
        (0..self.config.occupants)
            .into_par_iter()
            .map(|i| {
                let mut rng = seed::rng(seed::derive(seed, i as u64));
                let schedule = self.sample_schedule(&mut rng);
                self.simulate_occupant(i, &schedule, &mut rng)
            })
            .collect()
    }

    /// Sensor-trigger dataset for the sensors at grid indices `placement`.
    pub fn dataset_from_trajectories(&self, trajectories: &[Trajectory], placement: &[usize]) -> Result<TraceDataset> {
        if let Some(&bad) = placement.iter().find(|&&i| i >= self.grid.len()) {
            return Err(Error::invalid(format!("grid index {bad} out of range for {} locations", self.grid.len())));
        }
        let regions: Vec<ActivationRegion> = placement
            .iter()
            .map(|&i| self.grid.region(i, self.config.radius))
            .collect();
        let series = trajectories
            .par_iter()
            .map(|traj| {
                let mut features = BitMatrix::zeros(traj.samples.len(), regions.len());
                for (r, s) in traj.samples.iter().enumerate() {
                    for (c, region) in regions.iter().enumerate() {
                        if covers(region, s.position, &self.plan) {
                            features.set(r, c, true);
                        }
                    }
                }
                OccupantSeries {
                    timestamps: traj.samples.iter().map(|s| s.t).collect(),
                    features,
                    labels: traj.samples.iter().map(|s| s.label).collect(),
                }
            })
            .collect();
        Ok(TraceDataset {
            sensor_names: placement.iter().map(|i| format!("L{i}")).collect(),
            class_names: self.labels.clone(),
            series,
        })
    }

    pub fn generate_dataset(&self, placement: &[usize], seed: u64) -> Result<TraceDataset> {
        if placement.is_empty() {
            return Err(Error::invalid("placement is empty"));
        }
        let trajectories = self.trajectories(seed)?;
        self.dataset_from_trajectories(&trajectories, placement)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::floorplan::{build_grid, Segment};
    use crate::scenarios;

    fn open_plan(anchors: &[(&str, Point)]) -> FloorPlan {
        FloorPlan {
            width: 8.0,
            height: 8.0,
            walls: vec![],
            zones: vec![],
            anchors: anchors.iter().map(|(k, p)| (k.to_string(), *p)).collect(),
            entry: Point::new(1.0, 1.0),
        }
    }

    fn plan_spec(entries: &[(&str, f64, Option<&str>)]) -> AdlPlanSpec {
        AdlPlanSpec {
            entries: entries
                .iter()
                .map(|(a, m, g)| AdlEntry {
                    activity: a.to_string(),
                    minutes: *m,
                    group: g.map(str::to_string),
                })
                .collect(),
            sampling_period_seconds: 3.0,
        }
    }

    #[test]
    fn default_plan_totals() {
        let spec = scenarios::default_adl_plan();
        assert_eq!(spec.entries.len(), 23);
        assert_eq!(spec.total_minutes(), 196.0);
        assert_eq!(spec.steps(), 3920);
        assert_eq!(spec.labels().len(), 23);
    }

    #[test]
    fn schedule_without_groups_keeps_order() {
        let spec = plan_spec(&[("A", 5.0, None), ("B", 3.0, None), ("C", 1.0, None)]);
        for s in 0..20 {
            let sched = sample_schedule(&spec, 0.1, &mut seed::rng(s));
            let order: Vec<usize> = sched.iter().map(|a| a.label).collect();
            assert_eq!(order, vec![0, 1, 2]);
            let total: f64 = sched.iter().map(|a| a.seconds).sum();
            assert!((total - 540.0).abs() < 3.0);
            for (a, e) in sched.iter().zip(&spec.entries) {
                let ratio = a.seconds / (e.minutes * 60.0);
                assert!(ratio > 0.8 && ratio < 1.25, "ratio {ratio}");
            }
        }
    }

    #[test]
    fn schedule_only_permutes_within_groups() {
        let spec = scenarios::default_adl_plan();
        let labels = spec.labels();
        for s in 0..50 {
            let sched = sample_schedule(&spec, 0.1, &mut seed::rng(s));
            for (pos, a) in sched.iter().enumerate() {
                let entry = &spec.entries[pos];
                let placed = &labels[a.label];
                let orig = spec.entries.iter().find(|e| &e.activity == placed).unwrap();
                match &entry.group {
                    None => assert_eq!(placed, &entry.activity),
                    Some(g) => assert_eq!(orig.group.as_ref(), Some(g)),
                }
            }
            let total: f64 = sched.iter().map(|a| a.seconds).sum();
            assert!((total - 196.0 * 60.0).abs() <= 3.0);
        }
    }

    #[test]
    fn dwell_at_entry_stays_near_entry() {
        let entry = Point::new(1.0, 1.0);
        let plan = open_plan(&[("Stay", entry)]);
        let grid = build_grid(&plan, 1.0).unwrap();
        let spec = plan_spec(&[("Stay", 10.0, None)]);
        let sim = Simulator::new(plan, grid, spec, SimulatorConfig::default()).unwrap();
        let mut rng = seed::rng(3);
        let sched = sim.sample_schedule(&mut rng);
        let traj = sim.simulate_occupant(0, &sched, &mut rng).unwrap();
        assert_eq!(traj.samples.len(), 200);
        for s in &traj.samples {
            assert!(s.position.distance(entry) <= 3.0 * 0.15 * 2f64.sqrt());
            assert_eq!(s.label, 0);
        }
        for w in traj.samples.windows(2) {
            assert_eq!(w[1].t - w[0].t, 3.0);
        }
    }

    #[test]
    fn walking_leg_takes_path_length_over_speed() {
        let a = Point::new(2.0, 4.0);
        let b = Point::new(6.0, 4.0);
        let mut plan = open_plan(&[("A", a), ("B", b)]);
        plan.entry = a;
        let grid = build_grid(&plan, 1.0).unwrap();
        let spec = plan_spec(&[("A", 1.0, None), ("B", 1.0, None)]);
        let cfg = SimulatorConfig {
            duration_jitter: 0.0,
            dwell_sigma: 0.0,
            ..Default::default()
        };
        let sim = Simulator::new(plan, grid, spec, cfg).unwrap();
        let mut rng = seed::rng(0);
        let sched = sim.sample_schedule(&mut rng);
        let traj = sim.simulate_occupant(0, &sched, &mut rng).unwrap();
        // slot B starts at t=60; samples at 60 and 63 are within the ~4 s walk
        let walking: Vec<_> = traj
            .samples
            .iter()
            .filter(|s| s.label == 1 && s.position.distance(b) > 1e-9)
            .collect();
        assert!((1..=2).contains(&walking.len()), "{} walking samples", walking.len());
        assert!(walking.iter().all(|s| s.t >= 60.0 && s.t < 65.0));
    }

    #[test]
    fn walls_force_detours_and_unreachable_anchor_errors() {
        let a = Point::new(1.0, 4.0);
        let b = Point::new(7.0, 4.0);
        let mut plan = open_plan(&[("A", a), ("B", b)]);
        plan.entry = a;
        plan.walls.push(Segment::new(Point::new(4.0, 0.0), Point::new(4.0, 7.0)));
        let nav = NavGrid::new(&plan, 0.25);
        let path = nav.path(a, b).unwrap();
        assert!(path.length() > 8.0, "detour length {}", path.length());
        for w in path.points.windows(2).skip(1).take(path.points.len() - 3) {
            assert!(!plan.blocked(w[0], w[1]));
        }

        plan.walls.push(Segment::new(Point::new(4.0, 7.0), Point::new(4.0, 8.0)));
        let grid = build_grid(&plan, 1.0).unwrap();
        let spec = plan_spec(&[("A", 1.0, None), ("B", 1.0, None)]);
        let sim = Simulator::new(plan, grid, spec, SimulatorConfig::default()).unwrap();
        let mut rng = seed::rng(0);
        let sched = sim.sample_schedule(&mut rng);
        let err = sim.simulate_occupant(0, &sched, &mut rng).unwrap_err().to_string();
        assert!(err.contains("'B'"), "{err}");
    }

    #[test]
    fn missing_anchor_rejected() {
        let plan = open_plan(&[("A", Point::new(1.0, 1.0))]);
        let grid = build_grid(&plan, 1.0).unwrap();
        let spec = plan_spec(&[("A", 1.0, None), ("Nowhere", 1.0, None)]);
        assert!(Simulator::new(plan, grid, spec, SimulatorConfig::default()).is_err());
    }

    #[test]
    fn default_dataset_shape_and_determinism() {
        let sim = scenarios::t1_simulator(1.0).unwrap();
        let ds = sim.generate_dataset(&[3, 10, 24], 11).unwrap();
        ds.validate().unwrap();
        assert_eq!(ds.occupants(), 5);
        assert!(ds.series.iter().all(|s| s.len() == 3920));
        assert_eq!(ds.sensor_count(), 3);
        let again = sim.generate_dataset(&[3, 10, 24], 11).unwrap();
        assert_eq!(ds, again);
    }

    #[test]
    fn far_sensor_never_fires() {
        let anchor = Point::new(1.0, 1.0);
        let mut plan = open_plan(&[("A", anchor)]);
        plan.entry = anchor;
        let grid = build_grid(&plan, 1.0).unwrap();
        let far = grid.index(6, 6);
        let spec = plan_spec(&[("A", 10.0, None)]);
        let sim = Simulator::new(plan, grid, spec, SimulatorConfig::default()).unwrap();
        let ds = sim.generate_dataset(&[far], 1).unwrap();
        assert_eq!(ds.series.iter().map(|s| s.features.count_ones()).sum::<usize>(), 0);
    }

    #[test]
    fn sensor_over_dwell_anchor_fires_almost_always() {
        let anchor = Point::new(4.0, 4.0);
        let mut plan = open_plan(&[("A", anchor)]);
        plan.entry = anchor;
        let grid = build_grid(&plan, 1.0).unwrap();
        let over = grid.nearest(anchor);
        let spec = plan_spec(&[("A", 10.0, None)]);
        let sim = Simulator::new(plan, grid, spec, SimulatorConfig::default()).unwrap();
        let ds = sim.generate_dataset(&[over], 2).unwrap();
        for s in &ds.series {
            assert!(s.features.count_ones() as f64 >= 200.0 * 0.95);
        }
    }

    #[test]
    fn csv_round_trip() {
        let sim = scenarios::t1_simulator(1.0).unwrap();
        let mut ds = sim.generate_dataset(&[0, 24], 5).unwrap();
        for s in &mut ds.series {
            s.timestamps.truncate(50);
            s.labels.truncate(50);
            s.features = s.features.select_rows(0..50);
        }
        let dir = tempfile::tempdir().unwrap();
        ds.write_csv_dir(dir.path()).unwrap();
        let back = TraceDataset::read_csv_dir(dir.path()).unwrap();
        assert_eq!(back.sensor_names, ds.sensor_names);
        assert_eq!(back.series.len(), ds.series.len());
        for (a, b) in back.series.iter().zip(&ds.series) {
            assert_eq!(a.features, b.features);
            assert_eq!(a.timestamps, b.timestamps);
            let names_a: Vec<_> = a.labels.iter().map(|&l| &back.class_names[l]).collect();
            let names_b: Vec<_> = b.labels.iter().map(|&l| &ds.class_names[l]).collect();
            assert_eq!(names_a, names_b);
        }
    }
}

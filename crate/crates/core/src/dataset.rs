//! CASAS smart-home event logs (e.g. Aruba).
//!
//! Lines are whitespace-separated `DATE TIME SENSOR VALUE [ACTIVITY begin|end]`.
//! Only binary motion sensors (`M…` ids with `ON`/`OFF` values) become
//! events; other channels are counted and dropped, but activity annotations
//! on them are kept. Logs are rasterized into fixed windows so that they
//! share the [`TraceDataset`] row shape with the simulator.

use std::collections::{BTreeMap, HashMap};
use std::io::{BufRead, Write};

use chrono::{NaiveDate, NaiveDateTime, Timelike};

use crate::bits::BitMatrix;
use crate::error::{Error, Result};
use crate::floorplan::Point;
use crate::simulator::{OccupantSeries, TraceDataset};

pub const OTHER_LABEL: &str = "Other";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SensorValue {
    On,
    Off,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AnnotationEdge {
    Begin,
    End,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Annotation {
    pub activity: String,
    pub edge: AnnotationEdge,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RawEvent {
    pub timestamp: NaiveDateTime,
    pub sensor_id: String,
    pub value: SensorValue,
    pub annotation: Option<Annotation>,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct SensorInventory {
    pub ids: Vec<String>,
    pub positions: BTreeMap<String, Point>,
}

impl SensorInventory {
    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.ids.iter().position(|s| s == id)
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Diagnostics {
    pub lines: usize,
    pub blank: usize,
    pub malformed: usize,
    pub bad_timestamp: usize,
    /// Lines from non-motion channels.
    pub dropped: usize,
    pub unmatched_end: usize,
    pub unclosed_begin: usize,
}

/// A closed activity interval recovered from begin/end annotations.
#[derive(Clone, Debug, PartialEq)]
pub struct ActivityInterval {
    pub activity: String,
    pub begin: NaiveDateTime,
    pub end: NaiveDateTime,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CasasLog {
    pub events: Vec<RawEvent>,
    pub inventory: SensorInventory,
    pub intervals: Vec<ActivityInterval>,
    pub diagnostics: Diagnostics,
}

fn parse_timestamp(date: &str, time: &str) -> Option<NaiveDateTime> {
    let d = NaiveDate::parse_from_str(date, "%Y-%m-%d").ok()?;
    let t = chrono::NaiveTime::parse_from_str(time, "%H:%M:%S%.f").ok()?;
    // chrono reads second 60 as a leap second; logs never contain real ones
    if t.nanosecond() >= 1_000_000_000 {
        return None;
    }
    Some(d.and_time(t))
}

fn is_motion(sensor: &str) -> bool {
    sensor.starts_with('M')
}

/// Parses a CASAS log. Never fails: bad lines are dropped and counted.
pub fn parse_casas<R: BufRead>(reader: R) -> CasasLog {
    let mut log = CasasLog::default();
    let mut open: HashMap<String, Vec<NaiveDateTime>> = HashMap::new();
    let mut annotations: Vec<(NaiveDateTime, Annotation)> = Vec::new();

    for line in reader.lines() {
        let Ok(line) = line else {
            log.diagnostics.lines += 1;
            log.diagnostics.malformed += 1;
            continue;
        };
        log.diagnostics.lines += 1;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.is_empty() {
            log.diagnostics.blank += 1;
            continue;
        }
        if fields.len() < 4 || fields.len() == 5 || fields.len() > 6 {
            log.diagnostics.malformed += 1;
            continue;
        }
        let Some(timestamp) = parse_timestamp(fields[0], fields[1]) else {
            log.diagnostics.bad_timestamp += 1;
            continue;
        };
        let annotation = if fields.len() == 6 {
            let edge = match fields[5] {
                "begin" => AnnotationEdge::Begin,
                "end" => AnnotationEdge::End,
                _ => {
                    log.diagnostics.malformed += 1;
                    continue;
                }
            };
            Some(Annotation {
                activity: fields[4].trim().to_string(),
                edge,
            })
        } else {
            None
        };
        if let Some(a) = &annotation {
            annotations.push((timestamp, a.clone()));
        }

        let sensor = fields[2];
        let value = match fields[3] {
            "ON" => Some(SensorValue::On),
            "OFF" => Some(SensorValue::Off),
            _ => None,
        };
        match value {
            Some(value) if is_motion(sensor) => {
                if log.inventory.index_of(sensor).is_none() {
                    log.inventory.ids.push(sensor.to_string());
                }
                log.events.push(RawEvent {
                    timestamp,
                    sensor_id: sensor.to_string(),
                    value,
                    annotation,
                });
            }
            _ => log.diagnostics.dropped += 1,
        }
    }

    for (ts, a) in annotations {
        match a.edge {
            AnnotationEdge::Begin => open.entry(a.activity).or_default().push(ts),
            AnnotationEdge::End => match open.get_mut(&a.activity).and_then(|s| s.pop()) {
                Some(begin) => log.intervals.push(ActivityInterval {
                    activity: a.activity,
                    begin,
                    end: ts,
                }),
                None => log.diagnostics.unmatched_end += 1,
            },
        }
    }
    log.diagnostics.unclosed_begin = open.values().map(Vec::len).sum();
    log.intervals.sort_by(|a, b| a.begin.cmp(&b.begin).then(a.end.cmp(&b.end)));
    log
}

/// Writes events back in CASAS line format.
pub fn write_casas<W: Write>(events: &[RawEvent], mut out: W) -> Result<()> {
    for e in events {
        let value = match e.value {
            SensorValue::On => "ON",
            SensorValue::Off => "OFF",
        };
        write!(out, "{} {} {}", e.timestamp.format("%Y-%m-%d %H:%M:%S%.6f"), e.sensor_id, value)?;
        if let Some(a) = &e.annotation {
            let edge = match a.edge {
                AnnotationEdge::Begin => "begin",
                AnnotationEdge::End => "end",
            };
            write!(out, " {} {}", a.activity, edge)?;
        }
        writeln!(out)?;
    }
    Ok(())
}

fn seconds_since(origin: NaiveDate, ts: NaiveDateTime) -> f64 {
    let days = (ts.date() - origin).num_days() as f64;
    days * 86_400.0 + ts.num_seconds_from_midnight() as f64 + ts.nanosecond() as f64 * 1e-9
}

/// Discretizes a log into fixed windows of `period_seconds`.
///
/// Bit `j` of a window is set iff sensor `j` turned ON inside the window, or
/// it was latched ON at the window start and no OFF arrives inside the
/// window. The label is the annotated activity covering the window start
/// (the most recently begun if several overlap), else [`OTHER_LABEL`].
pub fn rasterize(log: &CasasLog, period_seconds: f64) -> Result<TraceDataset> {
    if log.events.is_empty() {
        return Err(Error::invalid("cannot rasterize an empty event log"));
    }
    if !(period_seconds > 0.0) {
        return Err(Error::invalid("period must be positive"));
    }
    let mut events: Vec<&RawEvent> = log.events.iter().collect();
    events.sort_by_key(|e| e.timestamp);
    let origin = events[0].timestamp.date();
    let times: Vec<f64> = events.iter().map(|e| seconds_since(origin, e.timestamp)).collect();
    let start = (times[0] / period_seconds).floor() * period_seconds;
    let last = *times.last().unwrap();
    let windows = ((last - start) / period_seconds).floor() as usize + 1;

    let d = log.inventory.len();
    let sensor_of: Vec<usize> = events
        .iter()
        .map(|e| log.inventory.index_of(&e.sensor_id).expect("inventory covers events"))
        .collect();

    let mut class_names: Vec<String> = vec![OTHER_LABEL.to_string()];
    let mut intervals: Vec<(f64, f64, usize)> = Vec::with_capacity(log.intervals.len());
    for iv in &log.intervals {
        let idx = match class_names.iter().position(|c| *c == iv.activity) {
            Some(i) => i,
            None => {
                class_names.push(iv.activity.clone());
                class_names.len() - 1
            }
        };
        intervals.push((seconds_since(origin, iv.begin), seconds_since(origin, iv.end), idx));
    }

    let mut features = BitMatrix::zeros(windows, d);
    let mut labels = Vec::with_capacity(windows);
    let mut timestamps = Vec::with_capacity(windows);
    let mut state = vec![false; d];
    let mut on_in = vec![false; d];
    let mut off_in = vec![false; d];
    let mut k = 0usize;
    let mut next_iv = 0usize;
    let mut active: Vec<(f64, f64, usize)> = Vec::new();

    for w in 0..windows {
        let ws = start + w as f64 * period_seconds;
        let we = ws + period_seconds;
        on_in.iter_mut().for_each(|b| *b = false);
        off_in.iter_mut().for_each(|b| *b = false);
        let latched = state.clone();
        while k < events.len() && times[k] < we {
            let j = sensor_of[k];
            match events[k].value {
                SensorValue::On => {
                    on_in[j] = true;
                    state[j] = true;
                }
                SensorValue::Off => {
                    off_in[j] = true;
                    state[j] = false;
                }
            }
            k += 1;
        }
        for j in 0..d {
            if on_in[j] || (latched[j] && !off_in[j]) {
                features.set(w, j, true);
            }
        }

        while next_iv < intervals.len() && intervals[next_iv].0 <= ws {
            active.push(intervals[next_iv]);
            next_iv += 1;
        }
        active.retain(|iv| iv.1 > ws);
        let label = active
            .iter()
            .filter(|iv| iv.0 <= ws)
            .max_by(|a, b| a.0.total_cmp(&b.0))
            .map_or(0, |iv| iv.2);
        labels.push(label);
        timestamps.push(ws);
    }

    Ok(TraceDataset {
        sensor_names: log.inventory.ids.clone(),
        class_names,
        series: vec![OccupantSeries {
            timestamps,
            features,
            labels,
        }],
    })
}

/// Column projection onto the sensors in `keep`.
pub fn filter_sensors(ds: &TraceDataset, keep: &[usize]) -> Result<TraceDataset> {
    ds.filter_sensors(keep)
}

/// Splits every series at a calendar-day edge: the first
/// `ceil(train_fraction * days)` days train, the rest test.
pub fn split_by_days(ds: &TraceDataset, train_fraction: f64) -> Result<(TraceDataset, TraceDataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::invalid(format!("train fraction must be in (0, 1), got {train_fraction}")));
    }
    let day = |t: f64| (t / 86_400.0).floor() as i64;
    let first = ds
        .series
        .iter()
        .filter_map(|s| s.timestamps.first().copied())
        .map(day)
        .min()
        .ok_or_else(|| Error::invalid("dataset is empty"))?;
    let last = ds
        .series
        .iter()
        .filter_map(|s| s.timestamps.last().copied())
        .map(day)
        .max()
        .unwrap_or(first);
    let days = (last - first + 1) as usize;
    if days < 2 {
        return Err(Error::invalid("dataset spans a single day; cannot split by days"));
    }
    let train_days = train_day_count(days, train_fraction);
    let boundary = first + train_days as i64;

    let mut train = ds.clone();
    let mut test = ds.clone();
    for ((s, tr), te) in ds.series.iter().zip(&mut train.series).zip(&mut test.series) {
        let cut = s.timestamps.partition_point(|&t| day(t) < boundary);
        *tr = OccupantSeries {
            timestamps: s.timestamps[..cut].to_vec(),
            features: s.features.select_rows(0..cut),
            labels: s.labels[..cut].to_vec(),
        };
        *te = OccupantSeries {
            timestamps: s.timestamps[cut..].to_vec(),
            features: s.features.select_rows(cut..s.len()),
            labels: s.labels[cut..].to_vec(),
        };
    }
    Ok((train, test))
}

/// `ceil(fraction * days)`, tolerant of products like `0.7 * 10`.
pub fn train_day_count(days: usize, fraction: f64) -> usize {
    let x = fraction * days as f64;
    ((x - 1e-9).ceil() as usize).clamp(1, days - 1)
}

/// Loads an optional sensor-coordinate sidecar: lines `SENSOR x y`.
pub fn read_sensor_positions<R: BufRead>(reader: R, inventory: &mut SensorInventory) -> Result<()> {
    for (n, line) in reader.lines().enumerate() {
        let line = line?;
        let f: Vec<&str> = line.split_whitespace().collect();
        if f.is_empty() || f[0].starts_with('#') {
            continue;
        }
        let bad = || Error::Parse {
            location: format!("line {}", n + 1),
            message: "expected `SENSOR x y`".into(),
        };
        if f.len() != 3 {
            return Err(bad());
        }
        let x: f64 = f[1].parse().map_err(|_| bad())?;
        let y: f64 = f[2].parse().map_err(|_| bad())?;
        inventory.positions.insert(f[0].to_string(), Point::new(x, y));
    }
    Ok(())
}

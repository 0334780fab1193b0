//! Aggregation over finished matrix cells: summary table, convergence
//! statistics, placement heatmaps and expected-gain rasters.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use super::matrix::{cell_dirs, read_cell_summary, CellSummary};
use crate::error::{Error, Result};
use crate::optimizers::{read_trace_csv, Method};

#[derive(Clone, Debug, PartialEq)]
pub struct CellRecord {
    pub dir: PathBuf,
    pub summary: CellSummary,
}

impl CellRecord {
    /// Incumbent after each charged query.
    pub fn charged_incumbents(&self) -> Result<Vec<Option<f64>>> {
        let rows = read_trace_csv(fs::File::open(self.dir.join("trace.csv"))?)?;
        Ok(rows.into_iter().skip(self.summary.free_queries).map(|r| r.incumbent).collect())
    }
}

pub fn load_cells(out: &Path) -> Result<Vec<CellRecord>> {
    cell_dirs(out)?
        .into_iter()
        .map(|dir| {
            let summary = read_cell_summary(&dir.join("summary.csv"))?;
            Ok(CellRecord { dir, summary })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub method: Method,
    pub epsilon: Option<f64>,
    /// Target D; for GA the median of the best placements' sizes.
    pub sensors: Option<f64>,
    /// `None` (a dash) when some run found no placement.
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub seeds: usize,
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

fn median(mut v: Vec<f64>) -> Option<f64> {
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

type GroupKey = (Method, Option<u64>, Option<usize>);

/// Groups cells by (method, ε, D) and averages best values over seeds.
pub fn summarize(cells: &[CellRecord]) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<GroupKey, Vec<&CellSummary>> = BTreeMap::new();
    for c in cells {
        let s = &c.summary;
        groups
            .entry((s.method, s.epsilon.map(f64::to_bits), s.target_sensors))
            .or_default()
            .push(s);
    }
    let mut rows: Vec<SummaryRow> = groups
        .into_values()
        .map(|g| {
            let values: Option<Vec<f64>> = g.iter().map(|s| s.best_value).collect();
            let (mean, std) = match values {
                Some(v) if !v.is_empty() => {
                    let (m, s) = mean_std(&v);
                    (Some(m), Some(s))
                }
                _ => (None, None),
            };
            let sensors = match g[0].target_sensors {
                Some(d) => Some(d as f64),
                None => median(g.iter().filter(|s| s.sensors > 0).map(|s| s.sensors as f64).collect()),
            };
            SummaryRow {
                method: g[0].method,
                epsilon: g[0].epsilon,
                sensors,
                mean,
                std,
                seeds: g.len(),
            }
        })
        .collect();
    rows.sort_by(|a, b| {
        let key = |r: &SummaryRow| (r.epsilon.unwrap_or(0.0), r.sensors.unwrap_or(0.0));
        let (ka, kb) = (key(a), key(b));
        ka.0.total_cmp(&kb.0)
            .then(ka.1.total_cmp(&kb.1))
            .then(a.method.cmp(&b.method))
    });
    rows
}

fn opt(v: Option<f64>, dash: &str) -> String {
    v.map_or(dash.to_string(), |x| x.to_string())
}

/// CSV `method,epsilon,D,mean,std,seeds`; runs without a placement show `-`.
pub fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["method", "epsilon", "D", "mean", "std", "seeds"])?;
    for r in rows {
        w.write_record([
            r.method.to_string(),
            opt(r.epsilon, ""),
            opt(r.sensors, ""),
            opt(r.mean, "-"),
            opt(r.std, "-"),
            r.seeds.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    let mut r = csv::Reader::from_path(path)?;
    let mut out = Vec::new();
    for (n, rec) in r.records().enumerate() {
        let rec = rec?;
        let bad = || Error::Parse {
            location: format!("{}:{}", path.display(), n + 2),
            message: "bad summary row".into(),
        };
        let num = |s: &str| -> Result<Option<f64>> {
            match s {
                "" | "-" => Ok(None),
                s => s.parse().map(Some).map_err(|_| bad()),
            }
        };
        if rec.len() != 6 {
            return Err(bad());
        }
        out.push(SummaryRow {
            method: rec[0].parse()?,
            epsilon: num(&rec[1])?,
            sensors: num(&rec[2])?,
            mean: num(&rec[3])?,
            std: num(&rec[4])?,
            seeds: rec[5].parse().map_err(|_| bad())?,
        });
    }
    Ok(out)
}

/// Pointwise mean incumbent across seeds at each charged ordinal. Traces
/// are extended with their final value; a point is `None` while any seed
/// has no incumbent yet.
pub fn mean_incumbent_curve(traces: &[Vec<Option<f64>>]) -> Vec<Option<f64>> {
    let len = traces.iter().map(Vec::len).max().unwrap_or(0);
    (0..len)
        .map(|k| {
            let mut sum = 0.0;
            for t in traces {
                sum += (*t.get(k).or(t.last())?)?;
            }
            Some(sum / traces.len() as f64)
        })
        .collect()
}

/// First 1-based ordinal whose value reaches `target`.
pub fn first_hit(curve: &[Option<f64>], target: f64) -> Option<usize> {
    curve.iter().position(|v| v.is_some_and(|v| v >= target)).map(|k| k + 1)
}

#[derive(Clone, Debug, PartialEq)]
pub struct Convergence {
    /// Lower bound of the normal-approximation 95% interval of DGBO's
    /// final incumbents.
    pub target: f64,
    pub dgbo_hit: Option<usize>,
    pub bo_hit: Option<usize>,
    /// `100 (dgbo - bo) / bo`; `None` if either never reaches the target.
    pub reduction_percent: Option<f64>,
}

pub fn convergence_analysis(dgbo: &[Vec<Option<f64>>], bo: &[Vec<Option<f64>>]) -> Result<Convergence> {
    if dgbo.len() < 2 || bo.len() < 2 {
        return Err(Error::invalid("convergence analysis needs at least 2 seeds per method"));
    }
    let finals: Vec<f64> = dgbo
        .iter()
        .map(|t| t.last().copied().flatten())
        .collect::<Option<_>>()
        .ok_or_else(|| Error::invalid("a DGBO run has no incumbent"))?;
    let (mean, std) = mean_std(&finals);
    let target = mean - 1.96 * std / (finals.len() as f64).sqrt();
    let dgbo_hit = first_hit(&mean_incumbent_curve(dgbo), target);
    let bo_hit = first_hit(&mean_incumbent_curve(bo), target);
    let reduction_percent = match (dgbo_hit, bo_hit) {
        (Some(g), Some(r)) => Some(100.0 * (g as f64 - r as f64) / r as f64),
        _ => None,
    };
    Ok(Convergence {
        target,
        dgbo_hit,
        bo_hit,
        reduction_percent,
    })
}

/// Convergence rows per (ε, D) where both BO and DGBO ran, as CSV
/// `epsilon,D,target,dgbo_hit,bo_hit,reduction_percent`.
pub fn convergence_table<W: Write>(cells: &[CellRecord], out: W) -> Result<usize> {
    let mut by: BTreeMap<(Option<u64>, Option<usize>), (Vec<&CellRecord>, Vec<&CellRecord>)> = BTreeMap::new();
    for c in cells {
        let key = (c.summary.epsilon.map(f64::to_bits), c.summary.target_sensors);
        match c.summary.method {
            Method::Dgbo => by.entry(key).or_default().0.push(c),
            Method::Bo => by.entry(key).or_default().1.push(c),
            _ => {}
        }
    }
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["epsilon", "D", "target", "dgbo_hit", "bo_hit", "reduction_percent"])?;
    let mut n = 0;
    for ((eps, d), (g, r)) in by {
        if g.len() < 2 || r.len() < 2 {
            continue;
        }
        let load = |v: &[&CellRecord]| v.iter().map(|c| c.charged_incumbents()).collect::<Result<Vec<_>>>();
        let res = convergence_analysis(&load(&g)?, &load(&r)?)?;
        let hit = |h: Option<usize>| h.map_or("unreached".to_string(), |h| h.to_string());
        w.write_record([
            eps.map(f64::from_bits).map(|e| e.to_string()).unwrap_or_default(),
            d.map(|d| d.to_string()).unwrap_or_default(),
            res.target.to_string(),
            hit(res.dgbo_hit),
            hit(res.bo_hit),
            res.reduction_percent.map_or("unreached".to_string(), |p| p.to_string()),
        ])?;
        n += 1;
    }
    w.flush()?;
    Ok(n)
}

/// Row-major values over the candidate grid (row 0 = smallest y).
#[derive(Clone, Debug, PartialEq)]
pub struct Raster {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl Raster {
    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.values[r * self.cols + c]
    }

    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        for r in 0..self.rows {
            let line: Vec<String> = (0..self.cols).map(|c| self.get(r, c).to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    pub fn read_csv(text: &str) -> Result<Self> {
        let mut values = Vec::new();
        let mut rows = 0;
        let mut cols = None;
        for line in text.lines().filter(|l| !l.trim().is_empty()) {
            let row = line
                .split(',')
                .map(|s| s.trim().parse::<f64>().map_err(|_| Error::invalid(format!("bad raster value {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            if *cols.get_or_insert(row.len()) != row.len() {
                return Err(Error::invalid("ragged raster"));
            }
            values.extend(row);
            rows += 1;
        }
        Ok(Self {
            rows,
            cols: cols.unwrap_or(0),
            values,
        })
    }

    /// ASCII graymap, north up, scaled so `scale_max` maps to white.
    pub fn write_pgm<W: Write>(&self, mut out: W, scale_max: f64) -> Result<()> {
        writeln!(out, "P2\n{} {}\n255", self.cols, self.rows)?;
        for r in (0..self.rows).rev() {
            let line: Vec<String> = (0..self.cols)
                .map(|c| {
                    let v = if scale_max > 0.0 { self.get(r, c) / scale_max } else { 0.0 };
                    ((v.clamp(0.0, 1.0) * 255.0).round() as u8).to_string()
                })
                .collect();
            writeln!(out, "{}", line.join(" "))?;
        }
        Ok(())
    }
}

/// Fraction of runs whose best placement includes each location.
pub fn heatmap(placements: &[Vec<usize>], rows: usize, cols: usize) -> Result<Raster> {
    if placements.is_empty() {
        return Err(Error::invalid("heatmap needs at least one run"));
    }
    let mut values = vec![0.0; rows * cols];
    for p in placements {
        for &i in p {
            if i >= values.len() {
                return Err(Error::invalid(format!("location {i} outside a {rows}x{cols} grid")));
            }
            values[i] += 1.0;
        }
    }
    let n = placements.len() as f64;
    values.iter_mut().for_each(|v| *v /= n);
    Ok(Raster { rows, cols, values })
}

/// Expected-gain raster of a DGBO cell at iteration `n`.
pub fn profile_snapshot(cell: &CellRecord, n: usize) -> Result<Raster> {
    let path = cell.dir.join("profile").join(format!("iter_{n:04}.csv"));
    if !path.is_file() {
        return Err(Error::Missing(format!("no profile snapshot at iteration {n} in {}", cell.dir.display())));
    }
    let mut r = csv::Reader::from_path(&path)?;
    let mut values = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        values.push(rec[6].parse::<f64>().map_err(|_| Error::Parse {
            location: path.display().to_string(),
            message: "bad expected_gain".into(),
        })?);
    }
    let (rows, cols) = (cell.summary.grid_rows, cell.summary.grid_cols);
    if values.len() != rows * cols {
        return Err(Error::Validation(format!("profile has {} regions, grid is {rows}x{cols}", values.len())));
    }
    Ok(Raster { rows, cols, values })
}

/// Heatmap per (method, ε, D) group, written as `heatmap_<group>.csv/.pgm`.
pub fn write_heatmaps(cells: &[CellRecord], out: &Path) -> Result<Vec<PathBuf>> {
    let mut groups: BTreeMap<String, Vec<&CellRecord>> = BTreeMap::new();
    for c in cells {
        let s = &c.summary;
        let name = format!(
            "heatmap_{}_e{}_d{}",
            s.method,
            s.epsilon.map_or("na".into(), |e| e.to_string()),
            s.target_sensors.map_or("auto".into(), |d| d.to_string())
        );
        groups.entry(name).or_default().push(c);
    }
    let mut written = Vec::new();
    for (name, g) in groups {
        let placements: Vec<Vec<usize>> = g.iter().map(|c| c.summary.best_indices()).collect();
        let raster = heatmap(&placements, g[0].summary.grid_rows, g[0].summary.grid_cols)?;
        let csv_path = out.join(format!("{name}.csv"));
        raster.write_csv(fs::File::create(&csv_path)?)?;
        raster.write_pgm(fs::File::create(out.join(format!("{name}.pgm")))?, 1.0)?;
        written.push(csv_path);
    }
    Ok(written)
}

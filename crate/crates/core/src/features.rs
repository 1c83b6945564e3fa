//! Windowed supervised datasets: lagged GHI (plus neighbor lags and wind at
//! the origin hour in multi-location mode) predicting GHI `T` hours ahead,
//! with train-fitted max scaling.

use crate::data::{format_hour, IrradianceTable, Series};
use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Wind directions are divided by this fixed constant when scaling.
pub const DIRECTION_SCALE: f64 = 360.0;

/// Default target lag depth for single-location features.
pub const DEFAULT_SINGLE_P: usize = 120;
/// Default target lag depth for multi-location features.
pub const DEFAULT_MULTI_P: usize = 72;
/// Default neighbor lag depth.
pub const DEFAULT_MULTI_P_PRIME: usize = 2;
/// Default neighbor count.
pub const DEFAULT_NEIGHBORS: usize = 16;
/// Largest supported lead time, hours.
pub const MAX_LEAD: usize = 24;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Single,
    Multi,
}

/// Window geometry for one dataset: lag depths, neighbor count, lead time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FeatureSpec {
    pub mode: Mode,
    /// Target GHI lag hours.
    pub p: usize,
    /// Neighbor GHI lag hours (multi mode).
    pub p_prime: usize,
    /// Neighbor count (multi mode).
    pub n_neighbors: usize,
    /// Forecast horizon in hours, 1..=24.
    pub lead: usize,
}

impl FeatureSpec {
    pub fn single(p: usize, lead: usize) -> Self {
        FeatureSpec { mode: Mode::Single, p, p_prime: 0, n_neighbors: 0, lead }
    }

    pub fn multi(p: usize, p_prime: usize, n_neighbors: usize, lead: usize) -> Self {
        FeatureSpec { mode: Mode::Multi, p, p_prime, n_neighbors, lead }
    }

    /// Default geometry: p=120 single, p=72/p'=2/N=16 multi.
    pub fn default_for(mode: Mode, lead: usize) -> Self {
        match mode {
            Mode::Single => Self::single(DEFAULT_SINGLE_P, lead),
            Mode::Multi => Self::multi(
                DEFAULT_MULTI_P,
                DEFAULT_MULTI_P_PRIME,
                DEFAULT_NEIGHBORS,
                lead,
            ),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 1 {
            return Err(Error::Feature("p must be >= 1".into()));
        }
        if self.lead < 1 || self.lead > MAX_LEAD {
            return Err(Error::Feature(format!(
                "lead time must be in 1..={MAX_LEAD}, got {}",
                self.lead
            )));
        }
        match self.mode {
            Mode::Single => {
                if self.n_neighbors != 0 || self.p_prime != 0 {
                    return Err(Error::Feature(
                        "single mode requires N = 0 and p' = 0".into(),
                    ));
                }
            }
            Mode::Multi => {
                if self.n_neighbors < 1 || self.p_prime < 1 {
                    return Err(Error::Feature(
                        "multi mode requires N >= 1 and p' >= 1".into(),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Feature column count: `p` in single mode,
    /// `p + N*p' + 2*(N+1)` in multi mode.
    pub fn input_dim(&self) -> usize {
        match self.mode {
            Mode::Single => self.p,
            Mode::Multi => {
                self.p + self.n_neighbors * self.p_prime + 2 * (self.n_neighbors + 1)
            }
        }
    }
}

/// Supervised rows for one lead time. `x` rows follow the canonical column
/// layout of the builder that produced them; `row_timestamps[i]` is the
/// prediction-origin hour `t` of row `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Matrix,
    pub y: Vec<f64>,
    pub row_timestamps: Vec<i64>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    /// Writes rows as `f000,...,f{d-1},label,origin_timestamp`.
    pub fn emit_csv<W: std::io::Write>(&self, mut out: W) -> Result<()> {
        let d = self.dim();
        let width = std::cmp::max(3, if d > 1 { (d - 1).to_string().len() } else { 1 });
        let header: Vec<String> = (0..d).map(|i| format!("f{i:0width$}")).collect();
        writeln!(out, "{},label,origin_timestamp", header.join(","))?;
        for i in 0..self.len() {
            for v in self.x.row(i) {
                write!(out, "{v},")?;
            }
            writeln!(out, "{},{}", self.y[i], format_hour(self.row_timestamps[i]))?;
        }
        Ok(())
    }

    /// Reads a dataset back from the `emit_csv` layout. The feature column
    /// count is taken from the header.
    pub fn parse_csv<R: std::io::Read>(source: R) -> Result<Dataset> {
        let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(source);
        let d = {
            let headers =
                rdr.headers().map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
            let n = headers.len();
            if n < 3
                || headers.get(n - 2) != Some("label")
                || headers.get(n - 1) != Some("origin_timestamp")
            {
                return Err(Error::Csv {
                    line: 1,
                    msg: "expected header f...,label,origin_timestamp".into(),
                });
            }
            for (i, h) in headers.iter().take(n - 2).enumerate() {
                let ok = h
                    .strip_prefix('f')
                    .and_then(|s| s.parse::<usize>().ok())
                    .is_some_and(|v| v == i);
                if !ok {
                    return Err(Error::Csv {
                        line: 1,
                        msg: format!("feature column {i} has unexpected name `{h}`"),
                    });
                }
            }
            n - 2
        };
        let mut x = Vec::new();
        let mut y = Vec::new();
        let mut row_timestamps = Vec::new();
        for (i, record) in rdr.records().enumerate() {
            let line = i as u64 + 2;
            let record = record.map_err(|e| Error::Csv { line, msg: e.to_string() })?;
            if record.len() != d + 2 {
                return Err(Error::Csv {
                    line,
                    msg: format!("expected {} fields, got {}", d + 2, record.len()),
                });
            }
            for j in 0..d {
                let v: f64 = record[j]
                    .parse()
                    .map_err(|e| Error::Csv { line, msg: format!("bad f{j}: {e}") })?;
                x.push(v);
            }
            let label: f64 = record[d]
                .parse()
                .map_err(|e| Error::Csv { line, msg: format!("bad label: {e}") })?;
            y.push(label);
            row_timestamps.push(crate::data::parse_hour(&record[d + 1])?);
        }
        let rows = y.len();
        Ok(Dataset { x: Matrix::from_vec(rows, d, x)?, y, row_timestamps })
    }
}

/// How many candidate origin hours were considered and how many were
/// dropped because a window crossed a data gap.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct SkipReport {
    pub candidates: usize,
    pub built: usize,
    pub skipped: usize,
}

/// Builds single-location rows: `x[t] = [I(t-p+1), ..., I(t)]`,
/// `y[t] = I(t+T)`, one row per origin hour with full coverage.
pub fn build_single(
    table: &IrradianceTable,
    spec: &FeatureSpec,
    target: u32,
) -> Result<(Dataset, SkipReport)> {
    spec.validate()?;
    if spec.mode != Mode::Single {
        return Err(Error::Feature("build_single requires a single-mode spec".into()));
    }
    let series = lookup(table, target)?;
    build_rows(spec, series, &[])
}

/// Builds multi-location rows in the canonical layout: target GHI lags,
/// then neighbor GHI lags in caller order, then wind direction at `t`
/// ordered [target, neighbors...], then wind speed in the same order.
pub fn build_multi(
    table: &IrradianceTable,
    spec: &FeatureSpec,
    target: u32,
    neighbors: &[u32],
) -> Result<(Dataset, SkipReport)> {
    spec.validate()?;
    if spec.mode != Mode::Multi {
        return Err(Error::Feature("build_multi requires a multi-mode spec".into()));
    }
    if neighbors.len() != spec.n_neighbors {
        return Err(Error::Feature(format!(
            "spec declares {} neighbors but {} were given",
            spec.n_neighbors,
            neighbors.len()
        )));
    }
    let mut seen = std::collections::HashSet::new();
    for &n in neighbors {
        if n == target {
            return Err(Error::Feature(format!(
                "neighbor list contains the target location {target}"
            )));
        }
        if !seen.insert(n) {
            return Err(Error::Feature(format!("duplicate neighbor location {n}")));
        }
    }
    let series = lookup(table, target)?;
    let neighbor_series: Vec<&Series> = neighbors
        .iter()
        .map(|&id| lookup(table, id))
        .collect::<Result<_>>()?;
    build_rows(spec, series, &neighbor_series)
}

fn lookup<'t>(table: &'t IrradianceTable, id: u32) -> Result<&'t Series> {
    table
        .series(id)
        .ok_or_else(|| Error::Feature(format!("location {id} not in table")))
}

fn build_rows(
    spec: &FeatureSpec,
    target: &Series,
    neighbors: &[&Series],
) -> Result<(Dataset, SkipReport)> {
    let p = spec.p as i64;
    let t_lead = spec.lead as i64;
    let first_t = target.first_hour() + p - 1;
    let last_t = target.last_hour() - t_lead;
    if last_t < first_t {
        return Err(Error::Feature(format!(
            "target series spans {} hours; need at least p + T = {}",
            target.last_hour() - target.first_hour() + 1,
            p + t_lead
        )));
    }
    let d = spec.input_dim();
    let mut x = Vec::new();
    let mut y = Vec::new();
    let mut row_timestamps = Vec::new();
    let mut report = SkipReport::default();
    let p_prime = spec.p_prime as i64;
    for t in first_t..=last_t {
        report.candidates += 1;
        let ok = target.covers(t - p + 1, t)
            && target.covers(t + t_lead, t + t_lead)
            && neighbors
                .iter()
                .all(|nb| nb.covers(t - p_prime + 1, t));
        if !ok {
            report.skipped += 1;
            continue;
        }
        let ti = target.index_of(t).unwrap();
        for k in 0..spec.p {
            x.push(target.ghi_at(ti + 1 - spec.p + k));
        }
        if spec.mode == Mode::Multi {
            let n_idx: Vec<usize> =
                neighbors.iter().map(|nb| nb.index_of(t).unwrap()).collect();
            for (nb, &i) in neighbors.iter().zip(&n_idx) {
                for k in 0..spec.p_prime {
                    x.push(nb.ghi_at(i + 1 - spec.p_prime + k));
                }
            }
            x.push(target.wind_direction_at(ti));
            for (nb, &i) in neighbors.iter().zip(&n_idx) {
                x.push(nb.wind_direction_at(i));
            }
            x.push(target.wind_speed_at(ti));
            for (nb, &i) in neighbors.iter().zip(&n_idx) {
                x.push(nb.wind_speed_at(i));
            }
        }
        let li = target.index_of(t + t_lead).unwrap();
        y.push(target.ghi_at(li));
        row_timestamps.push(t);
        report.built += 1;
    }
    if report.built == 0 {
        return Err(Error::Feature(format!(
            "no usable rows: all {} candidate hours crossed gaps",
            report.candidates
        )));
    }
    let x = Matrix::from_vec(report.built, d, x)?;
    Ok((Dataset { x, y, row_timestamps }, report))
}

/// Train-fitted scaling: GHI columns and labels divided by the train max
/// GHI, wind speeds by the train max speed, directions by 360.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scaler {
    pub ghi_max: f64,
    pub wind_speed_max: f64,
}

impl Scaler {
    /// Fits group maxima on a training dataset.
    pub fn fit(train: &Dataset, spec: &FeatureSpec) -> Result<Scaler> {
        if train.is_empty() {
            return Err(Error::Feature("cannot fit a scaler on an empty dataset".into()));
        }
        check_dim(train, spec)?;
        let (ghi_cols, _, speed_cols) = column_groups(spec);
        let mut ghi_max = train.y.iter().cloned().fold(f64::MIN, f64::max);
        let mut speed_max = f64::MIN;
        for r in 0..train.len() {
            let row = train.x.row(r);
            for c in ghi_cols.clone() {
                ghi_max = ghi_max.max(row[c]);
            }
            for c in speed_cols.clone() {
                speed_max = speed_max.max(row[c]);
            }
        }
        if !ghi_max.is_finite() || ghi_max <= 0.0 {
            return Err(Error::Feature(format!(
                "train max GHI must be positive to scale, got {ghi_max}"
            )));
        }
        if spec.mode == Mode::Multi && (!speed_max.is_finite() || speed_max <= 0.0) {
            return Err(Error::Feature(format!(
                "train max wind speed must be positive to scale, got {speed_max}"
            )));
        }
        Ok(Scaler {
            ghi_max,
            wind_speed_max: if spec.mode == Mode::Multi { speed_max } else { 1.0 },
        })
    }

    /// Applies train statistics to any dataset (no clipping; test values may
    /// exceed 1).
    pub fn apply(&self, spec: &FeatureSpec, ds: &Dataset) -> Result<Dataset> {
        check_dim(ds, spec)?;
        let (ghi_cols, dir_cols, speed_cols) = column_groups(spec);
        let d = ds.dim();
        let mut x = Vec::with_capacity(ds.len() * d);
        for r in 0..ds.len() {
            let row = ds.x.row(r);
            for (c, &v) in row.iter().enumerate() {
                let scaled = if ghi_cols.contains(&c) {
                    v / self.ghi_max
                } else if dir_cols.contains(&c) {
                    v / DIRECTION_SCALE
                } else if speed_cols.contains(&c) {
                    v / self.wind_speed_max
                } else {
                    unreachable!("column {c} not in any group")
                };
                x.push(scaled);
            }
        }
        let y = ds.y.iter().map(|v| v / self.ghi_max).collect();
        Ok(Dataset {
            x: Matrix::from_vec(ds.len(), d, x)?,
            y,
            row_timestamps: ds.row_timestamps.clone(),
        })
    }

    /// Maps a scaled GHI prediction back to W/m^2.
    pub fn ghi_to_physical(&self, scaled: f64) -> f64 {
        scaled * self.ghi_max
    }
}

fn check_dim(ds: &Dataset, spec: &FeatureSpec) -> Result<()> {
    if ds.dim() != spec.input_dim() {
        return Err(Error::Dimension { expected: spec.input_dim(), got: ds.dim() });
    }
    Ok(())
}

/// Column index ranges (ghi, direction, speed) for a spec's layout.
fn column_groups(
    spec: &FeatureSpec,
) -> (
    std::ops::Range<usize>,
    std::ops::Range<usize>,
    std::ops::Range<usize>,
) {
    match spec.mode {
        Mode::Single => (0..spec.p, 0..0, 0..0),
        Mode::Multi => {
            let ghi_end = spec.p + spec.n_neighbors * spec.p_prime;
            let dir_end = ghi_end + spec.n_neighbors + 1;
            let speed_end = dir_end + spec.n_neighbors + 1;
            (0..ghi_end, ghi_end..dir_end, dir_end..speed_end)
        }
    }
}

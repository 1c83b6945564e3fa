//! Hourly irradiance/wind tables on a location grid: CSV load/store,
//! year-based splitting, validation, and neighbor selection.
//!
//! Timestamps are UTC hour indices (hours since the Unix epoch). Tables are
//! immutable once constructed; gaps are allowed at construction, recorded,
//! and rejected later by featurization rather than imputed.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::{DateTime, Datelike, NaiveDateTime, Timelike};

use crate::error::{Error, Result};

/// CSV header required by the table contract.
pub const CSV_HEADER: &str = "timestamp,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction";

/// One grid cell: a stable id plus its 10-km grid coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct LocationId {
    pub id: u32,
    pub grid_row: i32,
    pub grid_col: i32,
}

/// One hour of data at one location.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct HourlyRecord {
    /// UTC hours since the Unix epoch.
    pub timestamp: i64,
    pub location: LocationId,
    /// Global horizontal irradiance, W/m^2.
    pub ghi: f64,
    /// m/s.
    pub wind_speed: f64,
    /// Degrees in [0, 360).
    pub wind_direction: f64,
}

impl HourlyRecord {
    fn validate(&self) -> Result<()> {
        if !self.ghi.is_finite() || self.ghi < 0.0 {
            return Err(Error::Validation(format!(
                "ghi must be finite and >= 0, got {} (location {}, {})",
                self.ghi,
                self.location.id,
                format_hour(self.timestamp)
            )));
        }
        if !self.wind_speed.is_finite() || self.wind_speed < 0.0 {
            return Err(Error::Validation(format!(
                "wind_speed must be finite and >= 0, got {} (location {}, {})",
                self.wind_speed,
                self.location.id,
                format_hour(self.timestamp)
            )));
        }
        if !self.wind_direction.is_finite()
            || !(0.0..360.0).contains(&self.wind_direction)
        {
            return Err(Error::Validation(format!(
                "wind_direction must be in [0, 360), got {} (location {}, {})",
                self.wind_direction,
                self.location.id,
                format_hour(self.timestamp)
            )));
        }
        Ok(())
    }
}

/// Hourly series for one location, sorted by timestamp, possibly with gaps.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    location: LocationId,
    hours: Vec<i64>,
    ghi: Vec<f64>,
    wind_speed: Vec<f64>,
    wind_direction: Vec<f64>,
}

impl Series {
    pub fn location(&self) -> LocationId {
        self.location
    }

    pub fn len(&self) -> usize {
        self.hours.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hours.is_empty()
    }

    pub fn first_hour(&self) -> i64 {
        self.hours[0]
    }

    pub fn last_hour(&self) -> i64 {
        *self.hours.last().unwrap()
    }

    pub fn hours(&self) -> &[i64] {
        &self.hours
    }

    pub fn index_of(&self, hour: i64) -> Option<usize> {
        self.hours.binary_search(&hour).ok()
    }

    /// True when every hour in `[from, to]` is present. Because hours are
    /// strictly increasing integers, it suffices that both endpoints exist
    /// at the right index distance.
    pub fn covers(&self, from: i64, to: i64) -> bool {
        if to < from {
            return false;
        }
        match self.index_of(from) {
            None => false,
            Some(i) => {
                let j = i + (to - from) as usize;
                j < self.hours.len() && self.hours[j] == to
            }
        }
    }

    pub fn ghi_at(&self, index: usize) -> f64 {
        self.ghi[index]
    }

    pub fn wind_speed_at(&self, index: usize) -> f64 {
        self.wind_speed[index]
    }

    pub fn wind_direction_at(&self, index: usize) -> f64 {
        self.wind_direction[index]
    }

    /// Contiguous runs as (start_index, length).
    fn segments(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        let mut start = 0usize;
        for i in 1..self.hours.len() {
            if self.hours[i] != self.hours[i - 1] + 1 {
                out.push((start, i - start));
                start = i;
            }
        }
        if !self.hours.is_empty() {
            out.push((start, self.hours.len() - start));
        }
        out
    }
}

/// Immutable table of hourly records over a set of grid locations.
#[derive(Debug, Clone, PartialEq)]
pub struct IrradianceTable {
    series: Vec<Series>, // sorted by location id
}

impl IrradianceTable {
    /// Builds a table from unordered records: sorts by (location, timestamp),
    /// type-checks every value, and rejects duplicates and inconsistent
    /// location coordinates.
    pub fn from_records(mut records: Vec<HourlyRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Validation("table has no records".into()));
        }
        for r in &records {
            r.validate()?;
        }
        let mut coords: BTreeMap<u32, LocationId> = BTreeMap::new();
        for r in &records {
            match coords.get(&r.location.id) {
                None => {
                    coords.insert(r.location.id, r.location);
                }
                Some(prev) if *prev != r.location => {
                    return Err(Error::Validation(format!(
                        "location {} declared with conflicting grid coordinates \
                         ({}, {}) vs ({}, {})",
                        r.location.id,
                        prev.grid_row,
                        prev.grid_col,
                        r.location.grid_row,
                        r.location.grid_col
                    )));
                }
                Some(_) => {}
            }
        }
        records.sort_by_key(|r| (r.location.id, r.timestamp));
        let mut series: Vec<Series> = Vec::with_capacity(coords.len());
        for r in records {
            if series.last().map(|s| s.location.id) != Some(r.location.id) {
                series.push(Series {
                    location: r.location,
                    hours: Vec::new(),
                    ghi: Vec::new(),
                    wind_speed: Vec::new(),
                    wind_direction: Vec::new(),
                });
            }
            let s = series.last_mut().unwrap();
            if s.hours.last() == Some(&r.timestamp) {
                return Err(Error::Validation(format!(
                    "duplicate record for location {} at {}",
                    r.location.id,
                    format_hour(r.timestamp)
                )));
            }
            s.hours.push(r.timestamp);
            s.ghi.push(r.ghi);
            s.wind_speed.push(r.wind_speed);
            s.wind_direction.push(r.wind_direction);
        }
        Ok(IrradianceTable { series })
    }

    pub fn locations(&self) -> Vec<LocationId> {
        self.series.iter().map(|s| s.location).collect()
    }

    pub fn series(&self, location_id: u32) -> Option<&Series> {
        self.series
            .binary_search_by_key(&location_id, |s| s.location.id)
            .ok()
            .map(|i| &self.series[i])
    }

    pub fn series_iter(&self) -> impl Iterator<Item = &Series> {
        self.series.iter()
    }

    pub fn record_count(&self) -> usize {
        self.series.iter().map(|s| s.len()).sum()
    }

    pub fn iter_records(&self) -> impl Iterator<Item = HourlyRecord> + '_ {
        self.series.iter().flat_map(|s| {
            (0..s.len()).map(move |i| HourlyRecord {
                timestamp: s.hours[i],
                location: s.location,
                ghi: s.ghi[i],
                wind_speed: s.wind_speed[i],
                wind_direction: s.wind_direction[i],
            })
        })
    }

    /// Parses the CSV contract (see `CSV_HEADER`). Rows may arrive in any
    /// order; the result is sorted by (location, timestamp).
    pub fn parse_csv<R: Read>(source: R) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(source);
        {
            let headers = reader
                .headers()
                .map_err(|e| Error::Csv { line: 1, msg: e.to_string() })?;
            let expected: Vec<&str> = CSV_HEADER.split(',').collect();
            let got: Vec<&str> = headers.iter().collect();
            if got != expected {
                return Err(Error::Csv {
                    line: 1,
                    msg: format!("header must be `{CSV_HEADER}`, got `{}`", got.join(",")),
                });
            }
        }
        let mut records = Vec::new();
        for row in reader.records() {
            let row = row.map_err(|e| Error::Csv {
                line: e.position().map_or(0, |p| p.line()),
                msg: e.to_string(),
            })?;
            let line = row.position().map_or(0, |p| p.line());
            if row.len() != 7 {
                return Err(Error::Csv {
                    line,
                    msg: format!("expected 7 fields, got {}", row.len()),
                });
            }
            let field = |i: usize| row.get(i).unwrap();
            let timestamp = parse_hour(field(0))
                .map_err(|e| Error::Csv { line, msg: e.to_string() })?;
            let id: u32 = field(1).parse().map_err(|_| Error::Csv {
                line,
                msg: format!("location_id must be a non-negative integer, got `{}`", field(1)),
            })?;
            let num = |i: usize, name: &str| -> Result<f64> {
                field(i).parse::<f64>().map_err(|_| Error::Csv {
                    line,
                    msg: format!("{name} must be a decimal number, got `{}`", field(i)),
                })
            };
            let grid_row = field(2).parse::<i32>().map_err(|_| Error::Csv {
                line,
                msg: format!("grid_row must be an integer, got `{}`", field(2)),
            })?;
            let grid_col = field(3).parse::<i32>().map_err(|_| Error::Csv {
                line,
                msg: format!("grid_col must be an integer, got `{}`", field(3)),
            })?;
            let record = HourlyRecord {
                timestamp,
                location: LocationId { id, grid_row, grid_col },
                ghi: num(4, "ghi")?,
                wind_speed: num(5, "wind_speed")?,
                wind_direction: num(6, "wind_direction")?,
            };
            record.validate().map_err(|e| Error::Csv {
                line,
                msg: e.to_string(),
            })?;
            records.push(record);
        }
        if records.is_empty() {
            return Err(Error::Csv {
                line: 1,
                msg: "no data rows".into(),
            });
        }
        Self::from_records(records)
    }

    /// Writes the table in the canonical CSV form: header, rows sorted by
    /// (location, timestamp), floats in shortest round-trip notation.
    /// `parse_csv(emit_csv(t)) == t` for every valid table.
    pub fn emit_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "{CSV_HEADER}")?;
        for r in self.iter_records() {
            writeln!(
                out,
                "{},{},{},{},{},{},{}",
                format_hour(r.timestamp),
                r.location.id,
                r.location.grid_row,
                r.location.grid_col,
                r.ghi,
                r.wind_speed,
                r.wind_direction
            )?;
        }
        Ok(())
    }

    /// Splits records into (train, test) by calendar year; records in
    /// neither range are dropped. Both sides are re-validated.
    pub fn split_by_year(
        &self,
        train_years: YearRange,
        test_years: YearRange,
    ) -> Result<(IrradianceTable, IrradianceTable)> {
        if train_years.overlaps(&test_years) {
            return Err(Error::Split(format!(
                "train years {train_years} overlap test years {test_years}"
            )));
        }
        let mut train = Vec::new();
        let mut test = Vec::new();
        for r in self.iter_records() {
            let year = year_of_hour(r.timestamp);
            if train_years.contains(year) {
                train.push(r);
            } else if test_years.contains(year) {
                test.push(r);
            }
        }
        if train.is_empty() {
            return Err(Error::Split(format!(
                "no records in train years {train_years}"
            )));
        }
        if test.is_empty() {
            return Err(Error::Split(format!(
                "no records in test years {test_years}"
            )));
        }
        Ok((Self::from_records(train)?, Self::from_records(test)?))
    }

    /// Keeps only records whose calendar year falls in `years`.
    pub fn filter_years(&self, years: YearRange) -> Result<IrradianceTable> {
        let kept: Vec<HourlyRecord> = self
            .iter_records()
            .filter(|r| years.contains(year_of_hour(r.timestamp)))
            .collect();
        if kept.is_empty() {
            return Err(Error::Split(format!("no records in years {years}")));
        }
        Self::from_records(kept)
    }

    /// Report-only scan for gaps, out-of-range values, and span mismatches.
    pub fn validate(&self) -> ValidationReport {
        let mut report = ValidationReport::default();
        for s in &self.series {
            for i in 1..s.hours.len() {
                if s.hours[i] != s.hours[i - 1] + 1 {
                    report.gaps.push(GapEntry {
                        location: s.location,
                        from_hour: s.hours[i - 1] + 1,
                        to_hour: s.hours[i] - 1,
                    });
                }
            }
            for i in 0..s.len() {
                if s.ghi[i] < 0.0 || s.wind_speed[i] < 0.0 {
                    report.negative_values.push((s.location, s.hours[i]));
                }
            }
        }
        if let Some(first) = self.series.first() {
            let span = (first.first_hour(), first.last_hour());
            for s in self.series.iter().skip(1) {
                if (s.first_hour(), s.last_hour()) != span {
                    report.span_mismatches.push(s.location);
                }
            }
        }
        report
    }

    /// Ids of the `n` grid-nearest locations to `target`, ordered by
    /// (Chebyshev distance, grid_row, grid_col). Deterministic.
    pub fn nearest_neighbors(&self, target: u32, n: usize) -> Result<Vec<u32>> {
        let t = self
            .series(target)
            .ok_or_else(|| Error::Validation(format!("unknown target location {target}")))?
            .location;
        let mut others: Vec<LocationId> = self
            .series
            .iter()
            .map(|s| s.location)
            .filter(|l| l.id != target)
            .collect();
        if others.len() < n {
            return Err(Error::Validation(format!(
                "need {n} neighbors but table has only {} other locations",
                others.len()
            )));
        }
        others.sort_by_key(|l| {
            let d = (l.grid_row - t.grid_row)
                .abs()
                .max((l.grid_col - t.grid_col).abs());
            (d, l.grid_row, l.grid_col)
        });
        Ok(others.into_iter().take(n).map(|l| l.id).collect())
    }

    /// The location closest to the grid centroid (lowest id on ties);
    /// the default forecast target.
    pub fn center_location(&self) -> u32 {
        let n = self.series.len() as f64;
        let mean_row = self.series.iter().map(|s| s.location.grid_row as f64).sum::<f64>() / n;
        let mean_col = self.series.iter().map(|s| s.location.grid_col as f64).sum::<f64>() / n;
        let mut best = (f64::INFINITY, u32::MAX);
        for s in &self.series {
            let dr = s.location.grid_row as f64 - mean_row;
            let dc = s.location.grid_col as f64 - mean_col;
            let d = dr * dr + dc * dc;
            if d < best.0 || (d == best.0 && s.location.id < best.1) {
                best = (d, s.location.id);
            }
        }
        best.1
    }

    /// (first, last) hour over all locations.
    pub fn hour_span(&self) -> (i64, i64) {
        let first = self.series.iter().map(|s| s.first_hour()).min().unwrap();
        let last = self.series.iter().map(|s| s.last_hour()).max().unwrap();
        (first, last)
    }

    /// Per-location contiguous coverage runs, for diagnostics.
    pub fn coverage(&self) -> Vec<(LocationId, Vec<(i64, usize)>)> {
        self.series
            .iter()
            .map(|s| {
                let runs = s
                    .segments()
                    .into_iter()
                    .map(|(start, len)| (s.hours[start], len))
                    .collect();
                (s.location, runs)
            })
            .collect()
    }
}

/// A run of missing hours inside one location's series.
#[derive(Debug, Clone, PartialEq)]
pub struct GapEntry {
    pub location: LocationId,
    pub from_hour: i64,
    pub to_hour: i64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub gaps: Vec<GapEntry>,
    pub negative_values: Vec<(LocationId, i64)>,
    pub span_mismatches: Vec<LocationId>,
}

impl ValidationReport {
    pub fn is_clean(&self) -> bool {
        self.gaps.is_empty() && self.negative_values.is_empty() && self.span_mismatches.is_empty()
    }
}

/// Inclusive range of calendar years, e.g. 2000-2011.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct YearRange {
    pub start: i32,
    pub end: i32,
}

impl YearRange {
    pub fn new(start: i32, end: i32) -> Result<Self> {
        if end < start {
            return Err(Error::Split(format!(
                "year range end {end} before start {start}"
            )));
        }
        Ok(YearRange { start, end })
    }

    pub fn contains(&self, year: i32) -> bool {
        (self.start..=self.end).contains(&year)
    }

    pub fn overlaps(&self, other: &YearRange) -> bool {
        self.start <= other.end && other.start <= self.end
    }

    /// Parses `2000-2011` or a single year `2012`.
    pub fn parse(s: &str) -> Result<Self> {
        let parse_year = |t: &str| -> Result<i32> {
            t.trim()
                .parse()
                .map_err(|_| Error::Split(format!("bad year `{t}` in range `{s}`")))
        };
        match s.split_once('-') {
            Some((a, b)) => Self::new(parse_year(a)?, parse_year(b)?),
            None => {
                let y = parse_year(s)?;
                Self::new(y, y)
            }
        }
    }
}

impl std::fmt::Display for YearRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        if self.start == self.end {
            write!(f, "{}", self.start)
        } else {
            write!(f, "{}-{}", self.start, self.end)
        }
    }
}

// ---------------------------------------------------------------------------
// Hour-index timestamp helpers.
// ---------------------------------------------------------------------------

/// Parses an ISO-8601 UTC hour like `2001-06-01T07:00Z` into hours since
/// the Unix epoch. Minutes must be `00`; sub-hourly data is not supported.
pub fn parse_hour(s: &str) -> Result<i64> {
    let dt = NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%MZ")
        .map_err(|_| Error::Validation(format!("bad timestamp `{s}`, expected e.g. 2001-06-01T07:00Z")))?;
    if dt.minute() != 0 {
        return Err(Error::Validation(format!(
            "timestamp `{s}` is not on an hour boundary"
        )));
    }
    Ok(dt.and_utc().timestamp() / 3600)
}

/// Formats hours-since-epoch as `YYYY-MM-DDTHH:00Z`.
pub fn format_hour(hour: i64) -> String {
    let dt = DateTime::from_timestamp(hour * 3600, 0).expect("hour index out of chrono range");
    dt.format("%Y-%m-%dT%H:00Z").to_string()
}

pub fn year_of_hour(hour: i64) -> i32 {
    DateTime::from_timestamp(hour * 3600, 0)
        .expect("hour index out of chrono range")
        .year()
}

/// UTC hour of day in 0..24.
pub fn hour_of_day(hour: i64) -> u32 {
    hour.rem_euclid(24) as u32
}

/// Hour index of midnight UTC, January 1st of `year`.
pub fn year_start_hour(year: i32) -> i64 {
    let dt = chrono::NaiveDate::from_ymd_opt(year, 1, 1)
        .expect("bad year")
        .and_hms_opt(0, 0, 0)
        .unwrap();
    dt.and_utc().timestamp() / 3600
}

#[cfg(test)]
mod tests {
    use super::*;

    fn loc(id: u32, row: i32, col: i32) -> LocationId {
        LocationId { id, grid_row: row, grid_col: col }
    }

    fn rec(ts: i64, location: LocationId, ghi: f64) -> HourlyRecord {
        HourlyRecord {
            timestamp: ts,
            location,
            ghi,
            wind_speed: 3.0,
            wind_direction: 90.0,
        }
    }

    #[test]
    fn timestamp_round_trip() {
        let h = parse_hour("2001-06-01T07:00Z").unwrap();
        assert_eq!(format_hour(h), "2001-06-01T07:00Z");
        assert_eq!(hour_of_day(h), 7);
        assert_eq!(year_of_hour(h), 2001);
        assert!(parse_hour("2001-06-01T07:30Z").is_err());
        assert!(parse_hour("not-a-time").is_err());
    }

    #[test]
    fn parse_two_row_file() {
        let csv = "timestamp,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction\n\
                   2001-01-01T06:00Z,0,0,0,0,1.5,10\n\
                   2001-01-01T07:00Z,0,0,0,120.5,1.5,10\n";
        let t = IrradianceTable::parse_csv(csv.as_bytes()).unwrap();
        assert_eq!(t.record_count(), 2);
        let s = t.series(0).unwrap();
        assert_eq!(s.ghi_at(1), 120.5);
    }

    #[test]
    fn parse_rejects_negative_ghi_with_line() {
        let csv = "timestamp,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction\n\
                   2001-01-01T06:00Z,0,0,0,-5,1.5,10\n";
        match IrradianceTable::parse_csv(csv.as_bytes()) {
            Err(Error::Csv { line, msg }) => {
                assert_eq!(line, 2);
                assert!(msg.contains("ghi"), "{msg}");
            }
            other => panic!("expected csv error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_duplicate() {
        let csv = "timestamp,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction\n\
                   2001-01-01T06:00Z,0,0,0,1,1,10\n\
                   2001-01-01T06:00Z,0,0,0,2,1,10\n";
        match IrradianceTable::parse_csv(csv.as_bytes()) {
            Err(Error::Validation(msg)) => {
                assert!(msg.contains("duplicate"), "{msg}");
                assert!(msg.contains("2001-01-01T06:00Z"), "{msg}");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn parse_rejects_bad_header_and_direction_360() {
        let csv = "time,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction\n";
        assert!(matches!(
            IrradianceTable::parse_csv(csv.as_bytes()),
            Err(Error::Csv { line: 1, .. })
        ));
        let csv = "timestamp,location_id,grid_row,grid_col,ghi,wind_speed,wind_direction\n\
                   2001-01-01T06:00Z,0,0,0,1,1,360\n";
        assert!(IrradianceTable::parse_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn emit_parse_round_trip() {
        let l0 = loc(0, 0, 0);
        let l1 = loc(1, 0, 1);
        let base = parse_hour("2003-05-02T00:00Z").unwrap();
        let mut records = Vec::new();
        for h in 0..30 {
            records.push(HourlyRecord {
                timestamp: base + h,
                location: l0,
                ghi: (h as f64) * 13.7 / 3.0,
                wind_speed: 0.1 + h as f64 / 7.0,
                wind_direction: (h as f64 * 31.3) % 360.0,
            });
            records.push(rec(base + h, l1, h as f64));
        }
        let table = IrradianceTable::from_records(records).unwrap();
        let mut bytes = Vec::new();
        table.emit_csv(&mut bytes).unwrap();
        let parsed = IrradianceTable::parse_csv(bytes.as_slice()).unwrap();
        assert_eq!(parsed, table);
        let mut bytes2 = Vec::new();
        parsed.emit_csv(&mut bytes2).unwrap();
        assert_eq!(bytes, bytes2);
    }

    #[test]
    fn split_by_year_partitions() {
        let l = loc(0, 0, 0);
        let mut records = Vec::new();
        for year in 2000..=2014 {
            let start = year_start_hour(year);
            for h in 0..48 {
                records.push(rec(start + h, l, 1.0));
            }
        }
        let table = IrradianceTable::from_records(records).unwrap();
        let (train, test) = table
            .split_by_year(YearRange::new(2000, 2011).unwrap(), YearRange::new(2012, 2014).unwrap())
            .unwrap();
        assert_eq!(train.record_count(), 12 * 48);
        assert_eq!(test.record_count(), 3 * 48);
        assert_eq!(
            train.record_count() + test.record_count(),
            table.record_count()
        );
        // dropped years count too
        let (tr2, te2) = table
            .split_by_year(YearRange::new(2000, 2005).unwrap(), YearRange::new(2010, 2012).unwrap())
            .unwrap();
        let dropped = table.record_count() - tr2.record_count() - te2.record_count();
        assert_eq!(dropped, 6 * 48); // 2006..=2009 and 2013..=2014
    }

    #[test]
    fn filter_years_keeps_range_only() {
        let l = loc(0, 0, 0);
        let mut records = Vec::new();
        for year in 2000..=2002 {
            let start = year_start_hour(year);
            for h in 0..24 {
                records.push(rec(start + h, l, 1.0));
            }
        }
        let table = IrradianceTable::from_records(records).unwrap();
        let kept = table.filter_years(YearRange::new(2001, 2001).unwrap()).unwrap();
        assert_eq!(kept.record_count(), 24);
        assert_eq!(year_of_hour(kept.hour_span().0), 2001);
        assert!(table.filter_years(YearRange::new(1990, 1991).unwrap()).is_err());
    }

    #[test]
    fn split_errors() {
        let l = loc(0, 0, 0);
        let records: Vec<_> = (0..24)
            .map(|h| rec(year_start_hour(2005) + h, l, 1.0))
            .collect();
        let table = IrradianceTable::from_records(records).unwrap();
        let r = YearRange::new(2000, 2014).unwrap();
        assert!(matches!(table.split_by_year(r, r), Err(Error::Split(_))));
        assert!(matches!(
            table.split_by_year(
                YearRange::new(2005, 2005).unwrap(),
                YearRange::new(2020, 2021).unwrap()
            ),
            Err(Error::Split(_))
        ));
    }

    #[test]
    fn validate_reports_gaps_and_span_mismatch() {
        let l0 = loc(0, 0, 0);
        let l1 = loc(1, 0, 1);
        let base = 1000;
        let mut records = Vec::new();
        for h in 0..10 {
            if h != 4 {
                records.push(rec(base + h, l0, 1.0));
            }
        }
        for h in 0..8 {
            records.push(rec(base + h, l1, 1.0));
        }
        let table = IrradianceTable::from_records(records).unwrap();
        let report = table.validate();
        assert_eq!(report.gaps.len(), 1);
        assert_eq!(report.gaps[0].from_hour, base + 4);
        assert_eq!(report.gaps[0].to_hour, base + 4);
        assert_eq!(report.gaps[0].location.id, 0);
        assert_eq!(report.span_mismatches, vec![l1]);
        assert!(report.negative_values.is_empty());
    }

    #[test]
    fn validate_clean_table() {
        let l = loc(0, 0, 0);
        let records: Vec<_> = (0..24).map(|h| rec(1000 + h, l, 1.0)).collect();
        let table = IrradianceTable::from_records(records).unwrap();
        assert!(table.validate().is_clean());
    }

    #[test]
    fn neighbor_order_is_deterministic() {
        // 3x3 grid, ids row-major
        let mut records = Vec::new();
        for r in 0..3 {
            for c in 0..3 {
                let id = (r * 3 + c) as u32;
                records.push(rec(0, loc(id, r, c), 1.0));
            }
        }
        let table = IrradianceTable::from_records(records).unwrap();
        assert_eq!(table.center_location(), 4);
        let nb = table.nearest_neighbors(4, 8).unwrap();
        // all 8 at Chebyshev distance 1, ordered by (row, col)
        assert_eq!(nb, vec![0, 1, 2, 3, 5, 6, 7, 8]);
        assert!(table.nearest_neighbors(4, 9).is_err());
    }

    #[test]
    fn covers_detects_gaps() {
        let l = loc(0, 0, 0);
        let mut records = Vec::new();
        for h in [0, 1, 2, 5, 6] {
            records.push(rec(100 + h, l, 1.0));
        }
        let table = IrradianceTable::from_records(records).unwrap();
        let s = table.series(0).unwrap();
        assert!(s.covers(100, 102));
        assert!(!s.covers(100, 105));
        assert!(s.covers(105, 106));
        assert!(!s.covers(99, 100));
    }
}

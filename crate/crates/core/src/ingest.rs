//! Trade files: parsing, regular-hours filtering and binning into signed
//! and unsigned flow series.
//!
//! Input files are CSV with header `timestamp,side,volume,price`. The
//! timestamp is either ISO-8601 (local exchange time; any offset is kept as
//! written) or integer nanoseconds since the Unix epoch, read as UTC. The
//! format is detected per row.

use std::fs::File;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use chrono::{DateTime, NaiveDate, NaiveDateTime, NaiveTime, Timelike};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::grid::fmt_num;
use crate::hawkes::EventStream;

pub const HEADER: [&str; 4] = ["timestamp", "side", "volume", "price"];
/// Largest tolerated fraction of malformed rows.
pub const MALFORMED_THRESHOLD: f64 = 0.001;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TradeRecord {
    pub date: NaiveDate,
    /// Seconds since local midnight.
    pub timestamp: f64,
    pub side: i8,
    pub volume: f64,
    pub price: f64,
}

impl TradeRecord {
    pub fn signed_volume(&self) -> f64 {
        f64::from(self.side) * self.volume
    }
}

/// Trading session `[open, close)` in seconds since midnight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Session {
    pub open: f64,
    pub close: f64,
}

impl Session {
    pub fn new(open: f64, close: f64) -> Result<Self> {
        if !(0.0 <= open && open < close && close <= 86_400.0) {
            return Err(Error::InvalidParams(format!("session [{open}, {close}) is not a window within a day")));
        }
        Ok(Self { open, close })
    }

    /// Parses `HH:MM-HH:MM` (seconds optional).
    pub fn parse(text: &str) -> Result<Self> {
        let (a, b) = text
            .split_once('-')
            .ok_or_else(|| Error::Parse(format!("session `{text}` is not of the form HH:MM-HH:MM")))?;
        Self::new(clock_seconds(a)?, clock_seconds(b)?)
    }

    pub fn length(&self) -> f64 {
        self.close - self.open
    }

    pub fn contains(&self, t: f64) -> bool {
        self.open <= t && t < self.close
    }
}

impl Default for Session {
    fn default() -> Self {
        Self { open: 34_200.0, close: 57_600.0 }
    }
}

fn clock_seconds(text: &str) -> Result<f64> {
    let text = text.trim();
    let t = NaiveTime::parse_from_str(text, "%H:%M:%S")
        .or_else(|_| NaiveTime::parse_from_str(text, "%H:%M"))
        .map_err(|e| Error::Parse(format!("bad clock time `{text}`: {e}")))?;
    Ok(f64::from(t.num_seconds_from_midnight()))
}

fn split_datetime(dt: NaiveDateTime) -> (NaiveDate, f64) {
    let t = dt.time();
    (dt.date(), f64::from(t.num_seconds_from_midnight()) + f64::from(t.nanosecond()) * 1e-9)
}

/// Date and seconds since midnight from either timestamp format.
pub fn parse_timestamp(field: &str) -> Result<(NaiveDate, f64)> {
    let field = field.trim();
    if !field.is_empty() && field.bytes().all(|b| b.is_ascii_digit()) {
        let ns: i64 = field.parse().map_err(|e| Error::Parse(format!("epoch timestamp `{field}`: {e}")))?;
        let dt = DateTime::from_timestamp_nanos(ns).naive_utc();
        return Ok(split_datetime(dt));
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(field) {
        return Ok(split_datetime(dt.naive_local()));
    }
    for fmt in ["%Y-%m-%dT%H:%M:%S%.f", "%Y-%m-%d %H:%M:%S%.f"] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(field, fmt) {
            return Ok(split_datetime(dt));
        }
    }
    Err(Error::Parse(format!("unrecognized timestamp `{field}`")))
}

fn parse_row(row: &csv::StringRecord) -> Result<TradeRecord> {
    if row.len() != 4 {
        return Err(Error::Parse(format!("expected 4 fields, got {}", row.len())));
    }
    let (date, timestamp) = parse_timestamp(&row[0])?;
    let side = match row[1].trim() {
        "1" | "+1" => 1,
        "-1" => -1,
        other => return Err(Error::Parse(format!("side `{other}` is not ±1"))),
    };
    let number = |i: usize, name: &str| -> Result<f64> {
        let v: f64 = row[i].trim().parse().map_err(|_| Error::Parse(format!("{name} `{}`", &row[i])))?;
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::Parse(format!("{name} must be positive, got {v}")));
        }
        Ok(v)
    };
    Ok(TradeRecord { date, timestamp, side, volume: number(2, "volume")?, price: number(3, "price")? })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LoadedTrades {
    /// Session trades sorted by `(date, timestamp)`.
    pub records: Vec<TradeRecord>,
    pub malformed: usize,
    /// Well-formed rows outside the session.
    pub filtered: usize,
}

/// Parses a trade file from any reader.
pub fn read_trades<R: Read>(input: R, session: &Session) -> Result<LoadedTrades> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).trim(csv::Trim::All).from_reader(input);
    let header = reader.headers()?.clone();
    if header.is_empty() || (header.len() == 1 && header[0].is_empty()) {
        return Err(Error::EmptyFile("no header".into()));
    }
    if header.iter().ne(HEADER) {
        return Err(Error::Parse(format!("header must be `{}`, got `{}`", HEADER.join(","), header.iter().collect::<Vec<_>>().join(","))));
    }
    let mut out = LoadedTrades::default();
    let mut rows = 0usize;
    let mut first_error = None;
    for row in reader.records() {
        rows += 1;
        match row.map_err(Error::from).and_then(|r| parse_row(&r)) {
            Ok(rec) if session.contains(rec.timestamp) => out.records.push(rec),
            Ok(_) => out.filtered += 1,
            Err(e) => {
                out.malformed += 1;
                first_error.get_or_insert_with(|| format!("row {rows}: {e}"));
            }
        }
    }
    if rows == 0 {
        return Err(Error::EmptyFile("no data rows".into()));
    }
    if out.malformed as f64 > MALFORMED_THRESHOLD * rows as f64 {
        return Err(Error::Parse(format!(
            "{} of {rows} rows malformed (first: {})",
            out.malformed,
            first_error.unwrap_or_default()
        )));
    }
    out.records.sort_by(|a, b| a.date.cmp(&b.date).then(a.timestamp.total_cmp(&b.timestamp)));
    Ok(out)
}

pub fn load_trades(path: &Path, session: &Session) -> Result<LoadedTrades> {
    let file = File::open(path)?;
    if file.metadata()?.len() == 0 {
        return Err(Error::EmptyFile(path.display().to_string()));
    }
    read_trades(file, session).map_err(|e| match e {
        Error::Parse(m) => Error::Parse(format!("{}: {m}", path.display())),
        Error::EmptyFile(m) => Error::EmptyFile(format!("{}: {m}", path.display())),
        other => other,
    })
}

/// Loads files in parallel and merges by `(date, timestamp)`; ties keep
/// the order of `paths`.
pub fn load_many(paths: &[PathBuf], session: &Session) -> Result<LoadedTrades> {
    let parts: Vec<LoadedTrades> = paths.par_iter().map(|p| load_trades(p, session)).collect::<Result<_>>()?;
    let mut out = LoadedTrades::default();
    for part in parts {
        out.records.extend(part.records);
        out.malformed += part.malformed;
        out.filtered += part.filtered;
    }
    out.records.sort_by(|a, b| a.date.cmp(&b.date).then(a.timestamp.total_cmp(&b.timestamp)));
    Ok(out)
}

/// Per-day bins of signed `Σ ε v` and unsigned `Σ v` volume.
#[derive(Debug, Clone, PartialEq)]
pub struct BinnedFlows {
    pub session: Session,
    pub delta: f64,
    pub bins_per_day: usize,
    pub days: Vec<NaiveDate>,
    /// Days concatenated, `bins_per_day` entries each.
    pub signed: Vec<f64>,
    pub unsigned: Vec<f64>,
}

impl BinnedFlows {
    fn day_slice<'a>(&self, values: &'a [f64], day: usize) -> &'a [f64] {
        &values[day * self.bins_per_day..(day + 1) * self.bins_per_day]
    }

    pub fn signed_day(&self, day: usize) -> &[f64] {
        self.day_slice(&self.signed, day)
    }

    pub fn unsigned_day(&self, day: usize) -> &[f64] {
        self.day_slice(&self.unsigned, day)
    }

    fn cumulative(&self, values: &[f64]) -> Vec<f64> {
        values
            .chunks(self.bins_per_day)
            .flat_map(|day| {
                day.iter().scan(0.0, |acc, v| {
                    *acc += v;
                    Some(*acc)
                })
            })
            .collect()
    }

    /// Running sums that restart every day.
    pub fn cumulative_signed(&self) -> Vec<f64> {
        self.cumulative(&self.signed)
    }

    pub fn cumulative_unsigned(&self) -> Vec<f64> {
        self.cumulative(&self.unsigned)
    }

    /// Cumulative path of one day, starting at zero (`bins_per_day + 1` points).
    pub fn day_path(&self, values: &[f64], day: usize) -> Vec<f64> {
        std::iter::once(0.0).chain(self.cumulative(self.day_slice(values, day))).collect()
    }

    /// One row per bin: `date,bin_start,signed,unsigned,cum_signed,cum_unsigned`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["date", "bin_start", "signed", "unsigned", "cum_signed", "cum_unsigned"])?;
        let (cs, cu) = (self.cumulative_signed(), self.cumulative_unsigned());
        for (d, date) in self.days.iter().enumerate() {
            for b in 0..self.bins_per_day {
                let i = d * self.bins_per_day + b;
                w.write_record([
                    date.to_string(),
                    fmt_num(self.session.open + b as f64 * self.delta),
                    fmt_num(self.signed[i]),
                    fmt_num(self.unsigned[i]),
                    fmt_num(cs[i]),
                    fmt_num(cu[i]),
                ])?;
            }
        }
        w.flush()?;
        Ok(())
    }
}

/// Bins session trades into `delta`-second intervals, one block per day
/// that has at least one trade.
pub fn bin_flows(records: &[TradeRecord], session: &Session, delta: f64) -> Result<BinnedFlows> {
    if !(delta > 0.0) {
        return Err(Error::Alignment(format!("bin width must be positive, got {delta}")));
    }
    let ratio = session.length() / delta;
    let bins_per_day = ratio.round() as usize;
    if bins_per_day == 0 || (ratio - bins_per_day as f64).abs() > 1e-9 * ratio {
        return Err(Error::Alignment(format!(
            "bin width {delta} s does not divide the {} s session",
            session.length()
        )));
    }
    let mut days: Vec<NaiveDate> = records.iter().map(|r| r.date).collect();
    days.sort();
    days.dedup();
    let mut signed = vec![0.0; days.len() * bins_per_day];
    let mut unsigned = vec![0.0; days.len() * bins_per_day];
    for r in records {
        if !session.contains(r.timestamp) {
            continue;
        }
        let d = days.binary_search(&r.date).expect("day collected above");
        let b = (((r.timestamp - session.open) / delta).floor() as usize).min(bins_per_day - 1);
        signed[d * bins_per_day + b] += r.signed_volume();
        unsigned[d * bins_per_day + b] += r.volume;
    }
    Ok(BinnedFlows { session: *session, delta, bins_per_day, days, signed, unsigned })
}

/// Unit-volume trades from a simulated stream: time `t` maps to
/// `session.open + t · seconds_per_unit` on `date`; buys are `+1`.
pub fn trades_from_stream(
    stream: &EventStream,
    date: NaiveDate,
    session: &Session,
    seconds_per_unit: f64,
    price: f64,
) -> Result<Vec<TradeRecord>> {
    if !(seconds_per_unit > 0.0) || stream.horizon * seconds_per_unit > session.length() {
        return Err(Error::InvalidParams(format!(
            "horizon {} at {seconds_per_unit} s per unit does not fit the session",
            stream.horizon
        )));
    }
    Ok(stream
        .iter()
        .map(|(t, mark)| TradeRecord {
            date,
            timestamp: session.open + t * seconds_per_unit,
            side: if mark.is_buy() { 1 } else { -1 },
            volume: 1.0,
            price,
        })
        .collect())
}

/// Writes records in the input format with ISO timestamps (nanoseconds).
pub fn write_trades<W: Write>(records: &[TradeRecord], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HEADER)?;
    for r in records {
        let whole = r.timestamp.floor();
        let nanos = ((r.timestamp - whole) * 1e9).round().min(999_999_999.0) as u32;
        let time = NaiveTime::from_num_seconds_from_midnight_opt(whole as u32, nanos)
            .ok_or_else(|| Error::InvalidParams(format!("timestamp {} outside a day", r.timestamp)))?;
        w.write_record([
            format!("{}T{}", r.date, time.format("%H:%M:%S%.9f")),
            r.side.to_string(),
            fmt_num(r.volume),
            fmt_num(r.price),
        ])?;
    }
    w.flush()?;
    Ok(())
}

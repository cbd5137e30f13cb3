//! Reading price files into bridge OHLC samples.
//!
//! Two layouts are accepted, told apart by the header:
//!
//! - ticks: `interval,time,price`, one row per tick, rows of an interval in
//!   time order. The bridge is built from the whole intra-interval path, so
//!   any `κ` works.
//! - OHLC: `open,high,low,close,t_start,t_end`. Only the raw process
//!   (`κ = 0`) can be recovered from four prices.
//!
//! Prices are log-transformed and offset by the interval open. Malformed
//! rows are skipped with a line-numbered warning.

use std::collections::HashMap;
use std::path::Path;

use bridgevol::stochastic::{extract_ohlc, OhlcSample, PathSample};

use crate::fail::Failure;

/// One interval ready for estimation.
#[derive(Debug, Clone, PartialEq)]
pub struct Interval {
    pub label: String,
    pub t_start: f64,
    pub t_end: f64,
    pub sample: OhlcSample,
}

#[derive(Debug, Default)]
pub struct Parsed {
    pub intervals: Vec<Interval>,
    pub bad_rows: usize,
    pub warnings: Vec<String>,
}

impl Parsed {
    fn warn(&mut self, line: u64, msg: impl std::fmt::Display) {
        self.bad_rows += 1;
        self.warnings.push(format!("line {line}: {msg}"));
    }
}

enum Layout {
    Ticks { interval: usize, time: usize, price: usize },
    Ohlc { cols: [usize; 6] },
}

fn layout(header: &csv::StringRecord) -> Option<Layout> {
    let find = |name: &str| header.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    if let (Some(interval), Some(time), Some(price)) = (find("interval"), find("time"), find("price")) {
        return Some(Layout::Ticks { interval, time, price });
    }
    let names = ["open", "high", "low", "close", "t_start", "t_end"];
    let mut cols = [0; 6];
    for (c, n) in cols.iter_mut().zip(names) {
        *c = find(n)?;
    }
    Some(Layout::Ohlc { cols })
}

fn field(rec: &csv::StringRecord, i: usize, name: &str) -> Result<f64, String> {
    let raw = rec.get(i).ok_or_else(|| format!("missing {name}"))?;
    let v: f64 = raw
        .trim()
        .parse()
        .map_err(|_| format!("{name} {raw:?} is not a number"))?;
    if v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{name} is not finite"))
    }
}

/// Reads `path` and builds bridge samples with coefficient `kappa`.
pub fn read_intervals(path: &Path, kappa: f64) -> Result<Parsed, Failure> {
    let mut rdr = csv::ReaderBuilder::new()
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| Failure::input(format!("cannot open {}: {e}", path.display())))?;
    let header = rdr
        .headers()
        .map_err(|e| Failure::input(format!("{}: {e}", path.display())))?
        .clone();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(Failure::input(format!("{} is empty", path.display())));
    }
    let layout = layout(&header).ok_or_else(|| {
        Failure::input(format!(
            "{}: header must be interval,time,price or open,high,low,close,t_start,t_end",
            path.display()
        ))
    })?;
    let mut out = Parsed::default();
    match layout {
        Layout::Ohlc { cols } => {
            if kappa != 0.0 {
                return Err(Failure::config(
                    "OHLC rows only determine the raw process; bridges with kappa > 0 need tick data",
                ));
            }
            read_ohlc(&mut rdr, cols, &mut out)?
        }
        Layout::Ticks { interval, time, price } => read_ticks(&mut rdr, [interval, time, price], kappa, &mut out)?,
    }
    if out.intervals.is_empty() {
        return Err(Failure::input(format!(
            "{}: no usable intervals ({} bad rows)",
            path.display(),
            out.bad_rows
        )));
    }
    Ok(out)
}

fn read_ohlc<R: std::io::Read>(rdr: &mut csv::Reader<R>, cols: [usize; 6], out: &mut Parsed) -> Result<(), Failure> {
    let names = ["open", "high", "low", "close", "t_start", "t_end"];
    for (row, rec) in rdr.records().enumerate() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.warn(line, e);
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let mut v = [0.0; 6];
        let mut err = None;
        for k in 0..6 {
            match field(&rec, cols[k], names[k]) {
                Ok(x) => v[k] = x,
                Err(e) => {
                    err = Some(e);
                    break;
                }
            }
        }
        if let Some(e) = err {
            out.warn(line, e);
            continue;
        }
        let [o, h, l, c, t0, t1] = v;
        if !(o > 0.0 && h > 0.0 && l > 0.0 && c > 0.0) {
            out.warn(line, "prices must be positive");
            continue;
        }
        if h < o.max(c) || l > o.min(c) {
            out.warn(line, "high/low do not bracket open and close");
            continue;
        }
        if !(t1 > t0) {
            out.warn(line, "t_end must be after t_start");
            continue;
        }
        out.intervals.push(Interval {
            label: (row + 1).to_string(),
            t_start: t0,
            t_end: t1,
            sample: OhlcSample {
                h: (h / o).ln(),
                l: (l / o).ln(),
                c: (c / o).ln(),
                kappa: 0.0,
            },
        });
    }
    Ok(())
}

fn read_ticks<R: std::io::Read>(
    rdr: &mut csv::Reader<R>,
    cols: [usize; 3],
    kappa: f64,
    out: &mut Parsed,
) -> Result<(), Failure> {
    // Intervals in order of first appearance.
    let mut order: Vec<String> = Vec::new();
    let mut ticks: HashMap<String, Vec<(f64, f64)>> = HashMap::new();
    for rec in rdr.records() {
        let rec = match rec {
            Ok(r) => r,
            Err(e) => {
                let line = e.position().map_or(0, |p| p.line());
                out.warn(line, e);
                continue;
            }
        };
        let line = rec.position().map_or(0, |p| p.line());
        let label = match rec.get(cols[0]) {
            Some(s) if !s.is_empty() => s.to_string(),
            _ => {
                out.warn(line, "missing interval");
                continue;
            }
        };
        let (t, p) = match (field(&rec, cols[1], "time"), field(&rec, cols[2], "price")) {
            (Ok(t), Ok(p)) => (t, p),
            (Err(e), _) | (_, Err(e)) => {
                out.warn(line, e);
                continue;
            }
        };
        if !(p > 0.0) {
            out.warn(line, "price must be positive");
            continue;
        }
        let list = ticks.entry(label.clone()).or_insert_with(|| {
            order.push(label.clone());
            Vec::new()
        });
        if let Some(&(last, _)) = list.last() {
            if !(t > last) {
                out.warn(
                    line,
                    format!("time {t} not after previous tick {last} of interval {label}"),
                );
                continue;
            }
        }
        list.push((t, p));
    }
    for label in order {
        let list = &ticks[&label];
        if list.len() < 2 {
            out.warnings
                .push(format!("interval {label}: fewer than two ticks, skipped"));
            continue;
        }
        let (t0, p0) = list[0];
        let (t1, _) = list[list.len() - 1];
        let span = t1 - t0;
        let mut times: Vec<f64> = list.iter().map(|&(t, _)| (t - t0) / span).collect();
        let n = times.len();
        times[0] = 0.0;
        times[n - 1] = 1.0;
        if times.windows(2).any(|w| w[1] <= w[0]) {
            out.warnings
                .push(format!("interval {label}: ticks too close to normalize, skipped"));
            continue;
        }
        let values: Vec<f64> = list.iter().map(|&(_, p)| (p / p0).ln()).collect();
        let path = PathSample::new(times, values)?;
        out.intervals.push(Interval {
            label,
            t_start: t0,
            t_end: t1,
            sample: extract_ohlc(&path, kappa),
        });
    }
    Ok(())
}

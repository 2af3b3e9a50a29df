//! Realization, state and wind CSV files, JSON helpers and atomic writes.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::Serialize;

use genformer_core::series::{CalendarStamp, MarkovStateSequence, Space, TimeSeriesMatrix, TimeStampVector};
use genformer_core::Tensor;

use crate::error::{csv_err, format_err, io_err, json_err, Result};

/// Writes through a temporary sibling file and renames it into place.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    fs::write(&tmp, bytes).map_err(io_err(&tmp))?;
    fs::rename(&tmp, path).map_err(io_err(path))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).map_err(json_err(path))?;
    s.push('\n');
    atomic_write(path, s.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(json_err(path))
}

fn csv_bytes(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_err(path))?;
    }
    w.into_inner().map_err(|e| format_err(path, e.to_string()))
}

/// Numeric table with a header row; values use the shortest round-trip form.
pub fn write_table(path: &Path, header: &[&str], rows: &[Vec<f64>]) -> Result<()> {
    let header: Vec<String> = header.iter().map(|h| h.to_string()).collect();
    let bytes = csv_bytes(path, &header, rows.iter().map(|r| r.iter().map(f64::to_string).collect()))?;
    atomic_write(path, &bytes)
}

/// `t,x1,…,xm` for unitless stamps, `year,month,day,hour,x1,…,xm` for calendar ones.
pub fn write_realization(path: &Path, series: &TimeSeriesMatrix) -> Result<()> {
    let m = series.dim();
    let cal = series.stamps().as_calendar();
    let mut header: Vec<String> = match cal {
        Some(_) => ["year", "month", "day", "hour"].iter().map(|s| s.to_string()).collect(),
        None => vec!["t".to_string()],
    };
    header.extend((1..=m).map(|i| format!("x{i}")));
    let rows = (0..series.len()).map(|j| {
        let mut r: Vec<String> = match cal {
            Some(c) => vec![c[j].year.to_string(), c[j].month.to_string(), c[j].day.to_string(), c[j].hour.to_string()],
            None => vec![series.stamps().as_unitless().expect("unitless stamps")[j].to_string()],
        };
        r.extend((0..m).map(|i| series.data()[(i, j)].to_string()));
        r
    });
    let bytes = csv_bytes(path, &header, rows)?;
    atomic_write(path, &bytes)
}

fn parse<T: std::str::FromStr>(path: &Path, field: &str, line: usize) -> Result<T> {
    field.trim().parse().map_err(|_| format_err(path, format!("line {line}: cannot parse {field:?}")))
}

pub fn read_realization(path: &Path, space: Space) -> Result<TimeSeriesMatrix> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header = r.headers().map_err(csv_err(path))?.clone();
    let calendar = match header.get(0) {
        Some("t") => false,
        Some("year") if header.len() > 4 && &header.iter().take(4).collect::<Vec<_>>() == &["year", "month", "day", "hour"] => true,
        _ => return Err(format_err(path, "header must start with `t` or `year,month,day,hour`")),
    };
    let lead = if calendar { 4 } else { 1 };
    let m = header.len() - lead;
    if m == 0 {
        return Err(format_err(path, "no value columns"));
    }
    let mut values = Vec::new();
    let mut unitless = Vec::new();
    let mut cal = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = k + 2;
        if rec.len() != header.len() {
            return Err(format_err(path, format!("line {line}: expected {} fields", header.len())));
        }
        if calendar {
            let stamp = CalendarStamp::new(
                parse(path, &rec[0], line)?,
                parse(path, &rec[1], line)?,
                parse(path, &rec[2], line)?,
                parse(path, &rec[3], line)?,
            )?;
            cal.push(stamp);
        } else {
            unitless.push(parse::<f64>(path, &rec[0], line)?);
        }
        for i in 0..m {
            values.push(parse::<f64>(path, &rec[lead + i], line)?);
        }
    }
    let n = values.len() / m;
    let data = Tensor::from_fn(m, n, |i, j| values[j * m + i]);
    let stamps = if calendar { TimeStampVector::calendar(cal)? } else { TimeStampVector::unitless(unitless)? };
    Ok(TimeSeriesMatrix::new(data, space, stamps)?)
}

fn realization_path(dir: &Path, k: usize) -> PathBuf {
    dir.join(format!("real_{k:04}.csv"))
}

pub fn write_realizations(dir: &Path, series: &[TimeSeriesMatrix]) -> Result<()> {
    for (k, s) in series.iter().enumerate() {
        write_realization(&realization_path(dir, k), s)?;
    }
    Ok(())
}

/// Every `real_*.csv` in `dir`, in file-name order.
pub fn read_realizations(dir: &Path, space: Space) -> Result<Vec<TimeSeriesMatrix>> {
    let mut paths: Vec<PathBuf> = fs::read_dir(dir)
        .map_err(io_err(dir))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or("");
            name.starts_with("real_") && name.ends_with(".csv")
        })
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format_err(dir, "no realization files"));
    }
    paths.iter().map(|p| read_realization(p, space)).collect()
}

/// `index,state` rows.
pub fn write_states(path: &Path, states: &MarkovStateSequence) -> Result<()> {
    let header = ["index".to_string(), "state".to_string()];
    let rows = states.states().iter().enumerate().map(|(j, s)| vec![j.to_string(), s.to_string()]);
    let bytes = csv_bytes(path, &header, rows)?;
    atomic_write(path, &bytes)
}

pub fn read_states(path: &Path, n_states: usize) -> Result<MarkovStateSequence> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let mut out = Vec::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let field = rec.get(1).ok_or_else(|| format_err(path, format!("line {}: missing state", k + 2)))?;
        out.push(parse::<usize>(path, field, k + 2)?);
    }
    Ok(MarkovStateSequence::new(out, n_states)?)
}

pub fn write_state_sequences(dir: &Path, seqs: &[MarkovStateSequence]) -> Result<()> {
    for (k, s) in seqs.iter().enumerate() {
        write_states(&dir.join(format!("states_{k:04}.csv")), s)?;
    }
    Ok(())
}

pub fn read_state_sequences(dir: &Path, n_states: usize) -> Result<Vec<MarkovStateSequence>> {
    let mut out = Vec::new();
    loop {
        let p = dir.join(format!("states_{:04}.csv", out.len()));
        if !p.exists() {
            break;
        }
        out.push(read_states(&p, n_states)?);
    }
    if out.is_empty() {
        return Err(format_err(dir, "no state files"));
    }
    Ok(out)
}

/// Hourly station records on a common grid.
#[derive(Debug, Clone, PartialEq)]
pub struct WindRecord {
    pub stations: Vec<String>,
    /// `m × n`, NaN where a reading is missing or empty.
    pub raw: Tensor,
    pub stamps: TimeStampVector,
}

/// Reads `station_id,year,month,day,hour,wind_speed`. Stations are ordered by
/// id; the grid runs hourly from the earliest to the latest stamp and hours a
/// station does not report are missing.
pub fn read_wind_csv(path: &Path) -> Result<WindRecord> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = r.headers().map_err(csv_err(path))?.iter().map(|h| h.trim().to_string()).collect();
    let expected = ["station_id", "year", "month", "day", "hour", "wind_speed"];
    if header != expected {
        return Err(format_err(path, format!("expected header {}", expected.join(","))));
    }
    let mut readings: BTreeMap<String, BTreeMap<i64, f64>> = BTreeMap::new();
    for (k, rec) in r.records().enumerate() {
        let rec = rec.map_err(csv_err(path))?;
        let line = k + 2;
        if rec.len() != 6 {
            return Err(format_err(path, format!("line {line}: expected 6 fields")));
        }
        let stamp = CalendarStamp::new(parse(path, &rec[1], line)?, parse(path, &rec[2], line)?, parse(path, &rec[3], line)?, parse(path, &rec[4], line)?)?;
        let speed = match rec[5].trim() {
            "" | "NA" | "NaN" | "nan" => f64::NAN,
            s => parse::<f64>(path, s, line)?,
        };
        let station = rec[0].trim().to_string();
        if readings.entry(station.clone()).or_default().insert(stamp.hours_since_epoch(), speed).is_some() {
            return Err(genformer_core::Error::MisalignedStations(format!("station {station} repeats hour {stamp:?}")).into());
        }
    }
    let first = readings.values().filter_map(|m| m.keys().next()).min().copied();
    let last = readings.values().filter_map(|m| m.keys().next_back()).max().copied();
    let (Some(first), Some(last)) = (first, last) else {
        return Err(format_err(path, "no readings"));
    };
    let n = (last - first + 1) as usize;
    let stations: Vec<String> = readings.keys().cloned().collect();
    let mut raw = Tensor::filled(stations.len(), n, f64::NAN);
    for (i, s) in stations.iter().enumerate() {
        for (h, v) in &readings[s] {
            raw[(i, (h - first) as usize)] = *v;
        }
    }
    let stamps = TimeStampVector::hourly(CalendarStamp::from_hours_since_epoch(first), n);
    Ok(WindRecord { stations, raw, stamps })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn realization_round_trip_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let data = Tensor::from_fn(2, 5, |i, j| 0.1 * (i as f64 + 1.0) / (j as f64 + 3.0));
        let s = TimeSeriesMatrix::regular(data, Space::Physical, 0.001).unwrap();
        let p = dir.path().join("a/real.csv");
        write_realization(&p, &s).unwrap();
        assert_eq!(read_realization(&p, Space::Physical).unwrap(), s);
        let text = fs::read_to_string(&p).unwrap();
        assert!(text.starts_with("t,x1,x2\n"));
    }

    #[test]
    fn calendar_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stamps = TimeStampVector::hourly(CalendarStamp::new(2020, 2, 28, 22).unwrap(), 4);
        let s = TimeSeriesMatrix::new(Tensor::from_fn(1, 4, |_, j| j as f64), Space::Gaussian, stamps).unwrap();
        let p = dir.path().join("c.csv");
        write_realization(&p, &s).unwrap();
        assert_eq!(read_realization(&p, Space::Gaussian).unwrap(), s);
        assert!(fs::read_to_string(&p).unwrap().contains("2020,2,29,0,2"));
    }

    #[test]
    fn bad_headers_and_fields_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.csv");
        fs::write(&p, "time,x1\n0,1\n").unwrap();
        assert!(read_realization(&p, Space::Physical).is_err());
        fs::write(&p, "t,x1\n0,abc\n").unwrap();
        let e = read_realization(&p, Space::Physical).unwrap_err().to_string();
        assert!(e.contains("line 2"), "{e}");
    }

    #[test]
    fn states_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let seqs = vec![
            MarkovStateSequence::new(vec![0, 2, 1], 3).unwrap(),
            MarkovStateSequence::new(vec![1, 1], 3).unwrap(),
        ];
        write_state_sequences(dir.path(), &seqs).unwrap();
        assert_eq!(read_state_sequences(dir.path(), 3).unwrap(), seqs);
        assert!(read_state_sequences(dir.path(), 2).is_err());
    }

    #[test]
    fn wind_csv_grid_and_missing() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("w.csv");
        fs::write(
            &p,
            "station_id,year,month,day,hour,wind_speed\nB,2010,1,1,0,3.5\nA,2010,1,1,0,1\nA,2010,1,1,1,\nA,2010,1,1,2,2\nB,2010,1,1,2,4\n",
        )
        .unwrap();
        let w = read_wind_csv(&p).unwrap();
        assert_eq!(w.stations, ["A", "B"]);
        assert_eq!(w.raw.shape(), (2, 3));
        assert_eq!(w.raw[(0, 0)], 1.0);
        assert!(w.raw[(0, 1)].is_nan() && w.raw[(1, 1)].is_nan());
        assert_eq!(w.raw[(1, 2)], 4.0);
        fs::write(&p, "station_id,year,month,day,hour,wind_speed\nA,2010,1,1,0,1\nA,2010,1,1,0,2\n").unwrap();
        assert!(read_wind_csv(&p).unwrap_err().to_string().contains("repeats"));
    }

    #[test]
    fn atomic_write_leaves_no_temp_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("f.json");
        write_json(&p, &vec![1.5, 2.0]).unwrap();
        assert_eq!(read_json::<Vec<f64>>(&p).unwrap(), vec![1.5, 2.0]);
        assert_eq!(fs::read_dir(dir.path()).unwrap().count(), 1);
    }
}

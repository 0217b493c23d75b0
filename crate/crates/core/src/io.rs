//! Dataset, forcing and result files.
//!
//! Datasets are delimiter-separated text with a header naming the columns
//! `site`, `time_my`, `mean_log_size`, `sample_variance` and `n` in any
//! order; extra columns are ignored. Commas are the default delimiter, tabs
//! are detected from the header line. Forcing files have columns `time_my`
//! and `value`.

use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::data::{Dataset, Record};
use crate::error::{Error, Result};
use crate::forcing::ForcingSeries;

const DATASET_COLUMNS: [&str; 5] = ["site", "time_my", "mean_log_size", "sample_variance", "n"];

fn reader(text: &str) -> csv::Reader<&[u8]> {
    let header = text.lines().next().unwrap_or("");
    let delimiter = if header.contains('\t') && !header.contains(',') {
        b'\t'
    } else {
        b','
    };
    csv::ReaderBuilder::new()
        .delimiter(delimiter)
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
}

fn columns(rdr: &mut csv::Reader<&[u8]>, wanted: &[&str]) -> Result<Vec<usize>> {
    let header = rdr.headers().map_err(|e| Error::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let index: HashMap<&str, usize> = header.iter().enumerate().map(|(i, h)| (h, i)).collect();
    wanted
        .iter()
        .map(|w| {
            index.get(w).copied().ok_or_else(|| Error::Parse {
                line: 1,
                message: format!("missing column `{w}`"),
            })
        })
        .collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, name: &str, line: usize) -> Result<T> {
    let raw = rec.get(col).unwrap_or("");
    raw.parse().map_err(|_| Error::Parse {
        line,
        message: format!("cannot parse {name} `{raw}`"),
    })
}

fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))
}

/// Parses dataset text. Sites are numbered in order of first appearance;
/// each record keeps its file line number as provenance.
pub fn parse_dataset(text: &str) -> Result<Dataset> {
    let mut rdr = reader(text);
    let cols = columns(&mut rdr, &DATASET_COLUMNS)?;
    let mut sites: Vec<String> = Vec::new();
    let mut records = Vec::new();
    for row in rdr.records() {
        let rec = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        let site_name = rec.get(cols[0]).unwrap_or("").to_string();
        if site_name.is_empty() {
            return Err(Error::Parse {
                line,
                message: "empty site".into(),
            });
        }
        let site = match sites.iter().position(|s| *s == site_name) {
            Some(i) => i,
            None => {
                sites.push(site_name);
                sites.len() - 1
            }
        };
        let n: i64 = field(&rec, cols[4], "n", line)?;
        if n < 1 || n > u32::MAX as i64 {
            return Err(Error::Validation {
                line,
                message: format!("sample size must be at least 1, got {n}"),
            });
        }
        records.push(Record {
            site,
            time: field(&rec, cols[1], "time_my", line)?,
            y: field(&rec, cols[2], "mean_log_size", line)?,
            s2: field(&rec, cols[3], "sample_variance", line)?,
            n: n as u32,
            source_row: line,
        });
    }
    Dataset::new(sites, records)
}

/// Loads and validates a dataset file.
pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let data = parse_dataset(&read_text(path)?)?;
    log::info!(
        "{}: {} records, per site {:?}",
        path.display(),
        data.len(),
        data.sites().iter().zip(data.per_site_counts()).collect::<Vec<_>>()
    );
    Ok(data)
}

pub fn parse_forcing(text: &str) -> Result<ForcingSeries> {
    let mut rdr = reader(text);
    let cols = columns(&mut rdr, &["time_my", "value"])?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for row in rdr.records() {
        let rec = row.map_err(|e| Error::Parse {
            line: e.position().map_or(0, |p| p.line() as usize),
            message: e.to_string(),
        })?;
        let line = rec.position().map_or(0, |p| p.line() as usize);
        times.push(field(&rec, cols[0], "time_my", line)?);
        values.push(field(&rec, cols[1], "value", line)?);
    }
    ForcingSeries::new(times, values)
}

pub fn load_forcing(path: &Path) -> Result<ForcingSeries> {
    let f = parse_forcing(&read_text(path)?)?;
    log::info!("{}: {} forcing samples", path.display(), f.times().len());
    Ok(f)
}

/// Dataset as text in the input format plus a `source_row` column.
pub fn format_dataset(data: &Dataset) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.to_string());
    w.write_record(DATASET_COLUMNS.iter().chain(&["source_row"])).map_err(io)?;
    for r in data.records() {
        w.write_record(&[
            data.sites()[r.site].clone(),
            format!("{}", r.time),
            format!("{}", r.y),
            format!("{}", r.s2),
            r.n.to_string(),
            r.source_row.to_string(),
        ])
        .map_err(io)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Io(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Io(e.to_string()))
}

/// Writes `bytes` to `path` through a temporary file in the same directory
/// and a rename, so readers never see a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir)?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path)
        .map_err(|e| Error::Io(format!("{}: {}", path.display(), e.error)))?;
    Ok(())
}

/// One JSON document per line.
pub fn to_json_lines<T: Serialize>(records: &[T]) -> Result<String> {
    let mut out = String::new();
    for r in records {
        out.push_str(&serde_json::to_string(r).map_err(|e| Error::Io(e.to_string()))?);
        out.push('\n');
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn three_rows_sorted() {
        let text = "site,time_my,mean_log_size,sample_variance,n\n\
                    A,2.0,1.5,0.1,10\n\
                    B,0.5,1.2,0.2,5\n\
                    A,1.0,1.4,0.1,8\n";
        let d = parse_dataset(text).unwrap();
        assert_eq!(d.len(), 3);
        let times: Vec<f64> = d.records().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![0.5, 1.0, 2.0]);
        let rows: Vec<usize> = d.records().iter().map(|r| r.source_row).collect();
        assert_eq!(rows, vec![3, 4, 2]);
        assert_eq!(d.sites(), &["A".to_string(), "B".to_string()]);
    }

    #[test]
    fn zero_sample_size_names_line() {
        let text = "site,time_my,mean_log_size,sample_variance,n\nA,0,1,0.1,3\nA,1,1,0.1,0\n";
        assert!(matches!(parse_dataset(text), Err(Error::Validation { line: 3, .. })));
    }

    #[test]
    fn bad_number_and_missing_column() {
        let text = "site,time_my,mean_log_size,sample_variance,n\nA,zero,1,0.1,3\n";
        assert!(matches!(parse_dataset(text), Err(Error::Parse { line: 2, .. })));
        assert!(matches!(parse_dataset("site,time_my\nA,1\n"), Err(Error::Parse { line: 1, .. })));
        let neg = "site,time_my,mean_log_size,sample_variance,n\nA,0,1,-0.1,3\n";
        assert!(matches!(parse_dataset(neg), Err(Error::Validation { line: 2, .. })));
    }

    #[test]
    fn tab_separated_and_round_trip() {
        let text = "n\tsite\ttime_my\tmean_log_size\tsample_variance\n4\tX\t0.1\t2.0\t0.3\n";
        let d = parse_dataset(text).unwrap();
        assert_eq!(d.records()[0].n, 4);
        let again = parse_dataset(&format_dataset(&d).unwrap()).unwrap();
        assert_eq!(again.records()[0].y, 2.0);
        assert_eq!(again.sites(), d.sites());
    }

    #[test]
    fn forcing_files() {
        let f = parse_forcing("time_my,value\n1,0\n0,2\n").unwrap();
        assert_eq!(f.value_at(0.5), 1.0);
        assert_eq!(f.value_at(-3.0), 2.0);
        let one = parse_forcing("time_my,value\n1,5\n").unwrap();
        assert_eq!(one.value_at(100.0), 5.0);
        assert!(matches!(parse_forcing("time_my,value\n1,0\n1,2\n"), Err(Error::DuplicateTime(_))));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("sub").join("x.jsonl");
        write_atomic(&p, b"a\n").unwrap();
        write_atomic(&p, b"b\n").unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "b\n");
    }
}

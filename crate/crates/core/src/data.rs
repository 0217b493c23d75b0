//! Irregularly timed, noisy observations of the top layer.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// One sample: a mean of log size at one site and time, with the sample
/// variance and sample size that fix its measurement noise `s2 / n`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub site: usize,
    /// Time in My.
    pub time: f64,
    pub y: f64,
    pub s2: f64,
    pub n: u32,
    /// Position of the record in its source (file row or insertion order).
    pub source_row: usize,
}

impl Record {
    pub fn noise_var(&self) -> f64 {
        self.s2 / self.n as f64
    }
}

/// Records sorted by time (stable, so tied times keep source order).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    sites: Vec<String>,
    records: Vec<Record>,
}

impl Dataset {
    pub fn new(sites: Vec<String>, mut records: Vec<Record>) -> Result<Self> {
        for r in &records {
            let line = r.source_row;
            if r.site >= sites.len() {
                return Err(Error::Validation {
                    line,
                    message: format!("site index {} out of range", r.site),
                });
            }
            if !r.time.is_finite() || !r.y.is_finite() || !r.s2.is_finite() {
                return Err(Error::Validation {
                    line,
                    message: "non-finite field".into(),
                });
            }
            if r.s2 < 0.0 {
                return Err(Error::Validation {
                    line,
                    message: format!("negative sample variance {}", r.s2),
                });
            }
            if r.n < 1 {
                return Err(Error::Validation {
                    line,
                    message: "sample size must be at least 1".into(),
                });
            }
        }
        records.sort_by(|a, b| a.time.total_cmp(&b.time));
        Ok(Dataset { sites, records })
    }

    /// Observations given directly as `(site, time, y, noise variance)`.
    pub fn from_observations(
        n_sites: usize,
        obs: impl IntoIterator<Item = (usize, f64, f64, f64)>,
    ) -> Result<Self> {
        let sites = (1..=n_sites).map(|i| format!("site{i}")).collect();
        let records = obs
            .into_iter()
            .enumerate()
            .map(|(row, (site, time, y, v))| Record {
                site,
                time,
                y,
                s2: v,
                n: 1,
                source_row: row,
            })
            .collect();
        Dataset::new(sites, records)
    }

    /// A dataset without observations.
    pub fn empty(n_sites: usize) -> Self {
        Dataset {
            sites: (1..=n_sites).map(|i| format!("site{i}")).collect(),
            records: Vec::new(),
        }
    }

    pub fn sites(&self) -> &[String] {
        &self.sites
    }

    pub fn n_sites(&self) -> usize {
        self.sites.len()
    }

    pub fn records(&self) -> &[Record] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn first_time(&self) -> Option<f64> {
        self.records.first().map(|r| r.time)
    }

    pub fn last_time(&self) -> Option<f64> {
        self.records.last().map(|r| r.time)
    }

    /// Records grouped by identical time.
    pub fn groups(&self) -> Vec<(f64, &[Record])> {
        let mut out = Vec::new();
        let mut start = 0;
        while start < self.records.len() {
            let t = self.records[start].time;
            let mut end = start + 1;
            while end < self.records.len() && self.records[end].time == t {
                end += 1;
            }
            out.push((t, &self.records[start..end]));
            start = end;
        }
        out
    }

    pub fn per_site_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.sites.len()];
        for r in &self.records {
            counts[r.site] += 1;
        }
        counts
    }

    /// Same sites and design with the observed values replaced.
    pub fn with_values(&self, values: &[f64]) -> Dataset {
        let mut out = self.clone();
        for (r, &v) in out.records.iter_mut().zip(values) {
            r.y = v;
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sorts_and_groups_ties() {
        let d = Dataset::from_observations(
            2,
            vec![(0, 2.0, 1.0, 0.1), (1, 1.0, 2.0, 0.1), (0, 1.0, 3.0, 0.1)],
        )
        .unwrap();
        let times: Vec<f64> = d.records().iter().map(|r| r.time).collect();
        assert_eq!(times, vec![1.0, 1.0, 2.0]);
        assert_eq!(d.records()[0].source_row, 1);
        let g = d.groups();
        assert_eq!(g.len(), 2);
        assert_eq!(g[0].1.len(), 2);
        assert_eq!(d.per_site_counts(), vec![2, 1]);
    }

    #[test]
    fn rejects_bad_records() {
        let bad_n = Record {
            site: 0,
            time: 0.0,
            y: 0.0,
            s2: 1.0,
            n: 0,
            source_row: 7,
        };
        let e = Dataset::new(vec!["a".into()], vec![bad_n]).unwrap_err();
        assert!(matches!(e, Error::Validation { line: 7, .. }));
        assert!(Dataset::from_observations(1, vec![(0, 0.0, 0.0, -1.0)]).is_err());
    }
}

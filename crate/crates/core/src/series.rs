//! Observed count paths and their `time,count` CSV form.

use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Counts observed at strictly increasing times.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries {
    times: Vec<f64>,
    counts: Vec<u64>,
}

impl TimeSeries {
    pub fn new(times: Vec<f64>, counts: Vec<u64>) -> Result<Self> {
        if times.len() != counts.len() {
            return Err(Error::Series(format!(
                "{} times but {} counts",
                times.len(),
                counts.len()
            )));
        }
        if let Some(t) = times.iter().find(|t| !t.is_finite()) {
            return Err(Error::Series(format!("non-finite time {t}")));
        }
        if let Some(i) = times.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Series(format!(
                "times must be strictly increasing (index {})",
                i + 1
            )));
        }
        Ok(TimeSeries { times, counts })
    }

    /// Observations at `0, 1, 2, ...`.
    pub fn equally_spaced(counts: Vec<u64>) -> Self {
        let times = (0..counts.len()).map(|i| i as f64).collect();
        TimeSeries { times, counts }
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn counts(&self) -> &[u64] {
        &self.counts
    }

    /// The first `n` observations.
    pub fn prefix(&self, n: usize) -> TimeSeries {
        let n = n.min(self.len());
        TimeSeries { times: self.times[..n].to_vec(), counts: self.counts[..n].to_vec() }
    }

    /// Consecutive `(dt, from, to)` transitions.
    pub fn transitions(&self) -> impl Iterator<Item = (f64, u64, u64)> + '_ {
        self.times
            .windows(2)
            .zip(self.counts.windows(2))
            .map(|(t, x)| (t[1] - t[0], x[0], x[1]))
    }

    /// Same counts with every time stamp multiplied by `factor`.
    pub fn rescaled(&self, factor: f64) -> Result<TimeSeries> {
        TimeSeries::new(self.times.iter().map(|t| t * factor).collect(), self.counts.clone())
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<TimeSeries> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
        let header = rdr.headers()?.clone();
        if header.len() != 2 || &header[0] != "time" || &header[1] != "count" {
            return Err(Error::Parse { line: 1, message: "expected header `time,count`".into() });
        }
        let mut times = Vec::new();
        let mut counts = Vec::new();
        for record in rdr.records() {
            let record = record?;
            let line = record.position().map(|p| p.line()).unwrap_or(0);
            let bad = |message: String| Error::Parse { line, message };
            if record.len() != 2 {
                return Err(bad(format!("expected 2 fields, found {}", record.len())));
            }
            let t: f64 = record[0]
                .parse()
                .map_err(|_| bad(format!("invalid time `{}`", &record[0])))?;
            let count: u64 = record[1]
                .parse()
                .map_err(|_| bad(format!("count `{}` is not a non-negative integer", &record[1])))?;
            if !t.is_finite() {
                return Err(bad(format!("invalid time `{}`", &record[0])));
            }
            if let Some(prev) = times.last() {
                if t <= *prev {
                    return Err(bad(format!("time {t} does not exceed previous time {prev}")));
                }
            }
            times.push(t);
            counts.push(count);
        }
        TimeSeries::new(times, counts)
    }

    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["time", "count"])?;
        for (t, x) in self.times.iter().zip(&self.counts) {
            w.write_record([t.to_string(), x.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

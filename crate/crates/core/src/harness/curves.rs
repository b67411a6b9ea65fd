//! Learning-curve files and cross-run aggregation.
//!
//! Per-run files hold `episode,score` rows; aggregate files hold
//! `episode,mean,std` rows of the within-run moving average. Episodes are
//! numbered from 1. Floats are written in shortest round-trip form, so a
//! file read back reproduces the values bit-exactly.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::{Error, Result};

/// Window of the reported moving averages.
pub const MOVING_WINDOW: usize = 100;

/// Trailing moving average; the first `window - 1` entries average over the
/// episodes seen so far.
pub fn moving_average(series: &[f64], window: usize) -> Vec<f64> {
    assert!(window >= 1, "window must be positive");
    let mut out = Vec::with_capacity(series.len());
    let mut sum = 0.0;
    for (i, x) in series.iter().enumerate() {
        sum += x;
        if i >= window {
            sum -= series[i - window];
        }
        out.push(sum / (i + 1).min(window) as f64);
    }
    out
}

/// Cross-run mean and population standard deviation of the within-run
/// moving averages, per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Aggregate {
    pub fn len(&self) -> usize {
        self.mean.len()
    }

    pub fn is_empty(&self) -> bool {
        self.mean.is_empty()
    }

    /// `(mean, std)` at the last episode.
    pub fn last(&self) -> Option<(f64, f64)> {
        Some((*self.mean.last()?, *self.std.last()?))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("episode,mean,std\n");
        for (i, (m, s)) in self.mean.iter().zip(&self.std).enumerate() {
            let _ = writeln!(out, "{},{m},{s}", i + 1);
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let rows = parse_rows(text, "episode,mean,std", 3)?;
        Ok(Self {
            mean: rows.iter().map(|r| r[0]).collect(),
            std: rows.iter().map(|r| r[1]).collect(),
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        write_text(path.as_ref(), &self.to_csv())
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&read_text(path.as_ref())?)
    }
}

/// Aggregates equal-length per-run score series.
pub fn moving_stats(curves: &[Vec<f64>], window: usize) -> Result<Aggregate> {
    if window == 0 {
        return Err(Error::InvalidInput("window must be positive".into()));
    }
    let Some(first) = curves.first() else {
        return Err(Error::InvalidInput("no curves to aggregate".into()));
    };
    if let Some(bad) = curves.iter().find(|c| c.len() != first.len()) {
        return Err(Error::InvalidInput(format!(
            "curves of length {} and {}",
            first.len(),
            bad.len()
        )));
    }
    let averaged: Vec<Vec<f64>> = curves.iter().map(|c| moving_average(c, window)).collect();
    let runs = curves.len() as f64;
    let mut mean = Vec::with_capacity(first.len());
    let mut std = Vec::with_capacity(first.len());
    for e in 0..first.len() {
        let m = averaged.iter().map(|c| c[e]).sum::<f64>() / runs;
        let var = averaged.iter().map(|c| (c[e] - m).powi(2)).sum::<f64>() / runs;
        mean.push(m);
        std.push(var.sqrt());
    }
    Ok(Aggregate { mean, std })
}

pub fn curve_to_csv(scores: &[f64]) -> String {
    let mut out = String::from("episode,score\n");
    for (i, s) in scores.iter().enumerate() {
        let _ = writeln!(out, "{},{s}", i + 1);
    }
    out
}

pub fn curve_from_csv(text: &str) -> Result<Vec<f64>> {
    Ok(parse_rows(text, "episode,score", 2)?.into_iter().map(|r| r[0]).collect())
}

pub fn write_curve(path: impl AsRef<Path>, scores: &[f64]) -> Result<()> {
    write_text(path.as_ref(), &curve_to_csv(scores))
}

pub fn read_curve(path: impl AsRef<Path>) -> Result<Vec<f64>> {
    curve_from_csv(&read_text(path.as_ref())?)
}

/// Rows after `header`, each with `columns` fields and consecutive episode
/// numbers; returns the non-episode fields.
fn parse_rows(text: &str, header: &str, columns: usize) -> Result<Vec<Vec<f64>>> {
    let bad = |msg: String| Error::InvalidInput(format!("curve file: {msg}"));
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h.trim() == header => {}
        other => return Err(bad(format!("expected header `{header}`, found {other:?}"))),
    }
    let mut rows = Vec::new();
    for (i, line) in lines.filter(|l| !l.trim().is_empty()).enumerate() {
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != columns {
            return Err(bad(format!("row `{line}` has {} fields", fields.len())));
        }
        let episode: usize = fields[0]
            .parse()
            .map_err(|_| bad(format!("episode `{}`", fields[0])))?;
        if episode != i + 1 {
            return Err(bad(format!("episode {episode} at row {}", i + 1)));
        }
        let values = fields[1..]
            .iter()
            .map(|f| f.parse::<f64>().map_err(|_| bad(format!("value `{f}`"))))
            .collect::<Result<Vec<f64>>>()?;
        rows.push(values);
    }
    Ok(rows)
}

pub(crate) fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub(crate) fn read_text(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn moving_average_uses_partial_windows_at_the_start() {
        let ma = moving_average(&[1.0, 2.0, 3.0, 4.0, 5.0], 3);
        assert_eq!(ma, vec![1.0, 1.5, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn constant_series_have_zero_spread() {
        let agg = moving_stats(&[vec![0.5; 250], vec![0.5; 250]], 100).unwrap();
        assert!(agg.mean.iter().all(|m| *m == 0.5));
        assert!(agg.std.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn window_one_single_run_is_the_input() {
        let series = vec![0.0, 1.0, 0.25, 3.0];
        let agg = moving_stats(std::slice::from_ref(&series), 1).unwrap();
        assert_eq!(agg.mean, series);
        assert_eq!(agg.std, vec![0.0; 4]);
    }

    #[test]
    fn two_runs_match_hand_computation() {
        // window 2: run a -> 0, 0.5, 1.5 ; run b -> 2, 2, 1
        let agg = moving_stats(&[vec![0.0, 1.0, 2.0], vec![2.0, 2.0, 0.0]], 2).unwrap();
        assert_eq!(agg.mean, vec![1.0, 1.25, 1.25]);
        assert_eq!(agg.std, vec![1.0, 0.75, 0.25]);
    }

    #[test]
    fn mismatched_lengths_are_rejected() {
        assert!(moving_stats(&[vec![0.0; 3], vec![0.0; 4]], 2).is_err());
        assert!(moving_stats(&[], 2).is_err());
        assert!(moving_stats(&[vec![0.0]], 0).is_err());
    }

    #[test]
    fn csv_round_trips_bit_exactly() {
        let scores = vec![0.1, 1.0 / 3.0, 5.0, 0.0, 1e-17];
        assert_eq!(curve_from_csv(&curve_to_csv(&scores)).unwrap(), scores);
        let agg = moving_stats(&[scores.clone(), scores.iter().map(|s| s * 2.0).collect()], 2).unwrap();
        assert_eq!(Aggregate::from_csv(&agg.to_csv()).unwrap(), agg);
        assert!(curve_from_csv("episode,score\n2,1\n").is_err());
        assert!(curve_from_csv("ep,score\n").is_err());
    }
}

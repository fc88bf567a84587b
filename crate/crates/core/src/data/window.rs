use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A fixed-length slice of one series.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSequence {
    /// Index of the source series in its table.
    pub series: usize,
    /// Offset of the first observation within the series.
    pub start: usize,
    pub values: Vec<f64>,
}

impl ReturnSequence {
    /// Offset of the last observation; orders sequences chronologically.
    pub fn end(&self) -> usize {
        self.start + self.values.len() - 1
    }
}

/// Overlapping windows of length `len` at the given stride:
/// `⌊(n − len) / stride⌋ + 1` of them.
pub fn window(series: usize, values: &[f64], len: usize, stride: usize) -> Result<Vec<ReturnSequence>> {
    if len == 0 || stride == 0 {
        return Err(Error::InvalidInput("window length and stride must be positive".into()));
    }
    if values.len() < len {
        return Err(Error::InvalidInput(format!(
            "series of length {} is shorter than the window length {len}",
            values.len()
        )));
    }
    Ok((0..=values.len() - len)
        .step_by(stride)
        .map(|start| ReturnSequence {
            series,
            start,
            values: values[start..start + len].to_vec(),
        })
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitRatios {
    pub train: f64,
    pub valid: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.6,
            valid: 0.2,
            test: 0.2,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<()> {
        let parts = [self.train, self.valid, self.test];
        if parts.iter().any(|&r| !(r > 0.0)) || (parts.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput(format!(
                "split ratios must be positive and sum to 1, got {parts:?}"
            )));
        }
        Ok(())
    }

    /// Partition sizes for `n` items.
    pub fn sizes(&self, n: usize) -> Result<(usize, usize, usize)> {
        self.validate()?;
        let train = (self.train * n as f64).round() as usize;
        let valid = (self.valid * n as f64).round() as usize;
        if train == 0 || valid == 0 || train + valid >= n {
            return Err(Error::InvalidInput(format!(
                "{n} sequences cannot be split into non-empty partitions"
            )));
        }
        Ok((train, valid, n - train - valid))
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Split {
    pub train: Vec<ReturnSequence>,
    pub valid: Vec<ReturnSequence>,
    pub test: Vec<ReturnSequence>,
}

/// Chronological split of one series' sequences (ordered by start).
pub fn split(sequences: &[ReturnSequence], ratios: &SplitRatios) -> Result<Split> {
    let (train, valid, _) = ratios.sizes(sequences.len())?;
    if sequences.windows(2).any(|w| w[1].start <= w[0].start || w[1].series != w[0].series) {
        return Err(Error::InvalidInput("split expects the ordered sequences of one series".into()));
    }
    Ok(Split {
        train: sequences[..train].to_vec(),
        valid: sequences[train..train + valid].to_vec(),
        test: sequences[train + valid..].to_vec(),
    })
}

/// First observation index not covered by any training or validation window
/// of a series of length `n`; forecasts are scored from here on.
pub fn test_start(n: usize, len: usize, stride: usize, ratios: &SplitRatios) -> Result<usize> {
    if len == 0 || stride == 0 || n < len {
        return Err(Error::InvalidInput(format!("cannot window {n} observations by {len}")));
    }
    let count = (n - len) / stride + 1;
    let (train, valid, _) = ratios.sizes(count)?;
    let start = (train + valid - 1) * stride + len;
    if start >= n {
        return Err(Error::InvalidInput("empty test span".into()));
    }
    Ok(start)
}

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};

/// Mean test NLL per series (rows) and model (columns); `None` is NA.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct NllTable {
    pub models: Vec<String>,
    pub series: Vec<String>,
    pub values: Vec<Vec<Option<f64>>>,
}

impl NllTable {
    pub fn new(models: Vec<String>) -> Self {
        Self {
            models,
            series: vec![],
            values: vec![],
        }
    }

    pub fn push_row(&mut self, series: impl Into<String>, row: Vec<Option<f64>>) -> Result<()> {
        if row.len() != self.models.len() {
            return Err(Error::InvalidInput(format!(
                "row has {} entries for {} models",
                row.len(),
                self.models.len()
            )));
        }
        if row.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("NLL entries must be finite or NA".into()));
        }
        self.series.push(series.into());
        self.values.push(row);
        Ok(())
    }

    /// Column means over rows without NA.
    pub fn column_means(&self) -> Vec<Option<f64>> {
        (0..self.models.len())
            .map(|j| {
                let xs: Vec<f64> = self.values.iter().filter_map(|r| r[j]).collect();
                (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
            })
            .collect()
    }

    /// CSV with header `series,<models>` and `NA` for missing entries.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
        let mut wtr = csv::Writer::from_writer(w);
        let mut header = vec!["series".to_string()];
        header.extend(self.models.iter().cloned());
        wtr.write_record(&header).map_err(io)?;
        for (id, row) in self.series.iter().zip(&self.values) {
            let mut rec = vec![id.clone()];
            rec.extend(row.iter().map(|v| match v {
                Some(x) => format!("{x:?}"),
                None => "NA".into(),
            }));
            wtr.write_record(&rec).map_err(io)?;
        }
        wtr.flush()?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(r);
        let header = rdr
            .headers()
            .map_err(|e| Error::Parse { line: 1, msg: e.to_string() })?
            .clone();
        if header.get(0) != Some("series") || header.len() < 2 {
            return Err(Error::Parse {
                line: 1,
                msg: "header must be `series,<model>...`".into(),
            });
        }
        let mut table = NllTable::new(header.iter().skip(1).map(str::to_string).collect());
        for rec in rdr.records() {
            let rec = rec.map_err(|e| Error::Parse {
                line: e.position().map(|p| p.line() as usize).unwrap_or(0),
                msg: e.to_string(),
            })?;
            let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
            let row = rec
                .iter()
                .skip(1)
                .map(|f| {
                    if f == "NA" {
                        Ok(None)
                    } else {
                        f.parse::<f64>().map(Some).map_err(|_| Error::Parse {
                            line,
                            msg: format!("invalid NLL entry {f:?}"),
                        })
                    }
                })
                .collect::<Result<Vec<_>>>()?;
            table
                .push_row(&rec[0], row)
                .map_err(|e| Error::Parse { line, msg: e.to_string() })?;
        }
        Ok(table)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FriedmanResult {
    pub statistic: f64,
    pub df: usize,
    pub p_value: f64,
    /// Blocks (series) used.
    pub n: usize,
    /// Rows skipped because they contained NA.
    pub dropped_rows: usize,
    /// Average rank per model, 1 = lowest NLL.
    pub mean_ranks: Vec<f64>,
}

/// Ranks `row` ascending, averaging ranks over ties.
fn average_ranks(row: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..row.len()).collect();
    idx.sort_by(|&a, &b| row[a].total_cmp(&row[b]));
    let mut ranks = vec![0.0; row.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && row[idx[j + 1]] == row[idx[i]] {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            ranks[k] = rank;
        }
        i = j + 1;
    }
    ranks
}

/// Friedman rank sum test `χ²_F = 12N / (k(k+1)) Σ_j (R̄_j − (k+1)/2)²`
/// against χ² with `k − 1` degrees of freedom.
pub fn friedman_test(table: &NllTable) -> Result<FriedmanResult> {
    let k = table.models.len();
    let rows: Vec<Vec<f64>> = table
        .values
        .iter()
        .filter(|r| r.iter().all(Option::is_some))
        .map(|r| r.iter().map(|v| v.expect("filtered")).collect())
        .collect();
    let n = rows.len();
    if k < 2 || n < 2 {
        return Err(Error::InvalidInput(format!(
            "Friedman test needs ≥ 2 models and ≥ 2 complete rows, got k={k}, N={n}"
        )));
    }
    let mut rank_sums = vec![0.0; k];
    for row in &rows {
        for (m, r) in rank_sums.iter_mut().zip(average_ranks(row)) {
            *m += r;
        }
    }
    // Rank-sum form (12 Σ R_j² − 3N²k(k+1)²) / (N k (k+1)): every intermediate
    // is a multiple of ¼, so integer-valued statistics come out exact.
    let (nf, kf) = (n as f64, k as f64);
    let sum_sq: f64 = rank_sums.iter().map(|r| r * r).sum();
    let statistic = (12.0 * sum_sq - 3.0 * nf * nf * kf * (kf + 1.0).powi(2)) / (nf * kf * (kf + 1.0));
    let mean_ranks = rank_sums.iter().map(|r| r / nf).collect();
    let chi = ChiSquared::new((k - 1) as f64).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(FriedmanResult {
        statistic,
        df: k - 1,
        p_value: chi.sf(statistic),
        n,
        dropped_rows: table.values.len() - n,
        mean_ranks,
    })
}

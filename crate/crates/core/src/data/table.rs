use std::collections::BTreeMap;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ValueKind {
    Price,
    Return,
}

impl std::str::FromStr for ValueKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "price" | "prices" => Ok(ValueKind::Price),
            "return" | "returns" => Ok(ValueKind::Return),
            other => Err(Error::InvalidInput(format!("unknown value kind {other:?}"))),
        }
    }
}

/// One return series. `sigma` carries the ground-truth volatility of
/// simulated corpora.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub id: String,
    pub dates: Vec<NaiveDate>,
    pub returns: Vec<f64>,
    pub sigma: Option<Vec<f64>>,
}

impl Series {
    pub fn len(&self) -> usize {
        self.returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.returns.is_empty()
    }
}

/// Cleaned return series, in order of first appearance in the input.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SeriesTable {
    pub series: Vec<Series>,
    /// Input rows dropped because a value was missing.
    pub dropped_rows: usize,
}

impl SeriesTable {
    pub fn get(&self, id: &str) -> Option<&Series> {
        self.series.iter().find(|s| s.id == id)
    }
}

fn is_missing(field: &str) -> bool {
    let f = field.trim();
    f.is_empty() || f.eq_ignore_ascii_case("na") || f.eq_ignore_ascii_case("nan") || f.eq_ignore_ascii_case("null")
}

fn parse_date(field: &str, line: usize) -> Result<NaiveDate> {
    NaiveDate::parse_from_str(field.trim(), "%Y-%m-%d").map_err(|e| Error::Parse {
        line,
        msg: format!("invalid date {field:?}: {e}"),
    })
}

fn parse_value(field: &str, line: usize) -> Result<f64> {
    let v: f64 = field.trim().parse().map_err(|_| Error::Parse {
        line,
        msg: format!("invalid number {field:?}"),
    })?;
    if !v.is_finite() {
        return Err(Error::Parse {
            line,
            msg: format!("non-finite value {field:?}"),
        });
    }
    Ok(v)
}

struct Raw {
    dates: Vec<(NaiveDate, usize)>,
    values: Vec<f64>,
    sigma: Vec<Option<f64>>,
}

/// Reads a wide (`date,<id>...`) or long (`date,id,value[,sigma]`) CSV.
/// Prices become log returns `log(P_t / P_{t-1})` after missing rows are
/// dropped; the return inherits the later date.
pub fn ingest(path: impl AsRef<Path>, kind: ValueKind) -> Result<SeriesTable> {
    ingest_reader(File::open(path)?, kind)
}

pub fn ingest_reader<R: Read>(reader: R, kind: ValueKind) -> Result<SeriesTable> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let original: Vec<String> = rdr
        .headers()
        .map_err(|e| Error::Parse {
            line: 1,
            msg: e.to_string(),
        })?
        .iter()
        .map(str::to_string)
        .collect();
    let header: Vec<String> = original.iter().map(|s| s.to_ascii_lowercase()).collect();
    if header.first().map(String::as_str) != Some("date") || header.len() < 2 {
        return Err(Error::Parse {
            line: 1,
            msg: "header must start with `date` followed by at least one column".into(),
        });
    }
    let long = header.len() >= 3 && header[1] == "id" && header[2] == "value";
    let sigma_col = long && header.get(3).map(String::as_str) == Some("sigma");

    let mut order: Vec<String> = Vec::new();
    let mut raw: BTreeMap<String, Raw> = BTreeMap::new();
    let mut dropped = 0;
    let mut records = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::Parse {
            line: e.position().map(|p| p.line() as usize).unwrap_or(0),
            msg: e.to_string(),
        })?;
        let line = rec.position().map(|p| p.line() as usize).unwrap_or(0);
        records.push((line, rec));
    }

    let mut push = |id: &str, date: NaiveDate, line: usize, v: f64, s: Option<f64>| {
        if !raw.contains_key(id) {
            order.push(id.to_string());
            raw.insert(
                id.to_string(),
                Raw {
                    dates: vec![],
                    values: vec![],
                    sigma: vec![],
                },
            );
        }
        let r = raw.get_mut(id).expect("inserted");
        r.dates.push((date, line));
        r.values.push(v);
        r.sigma.push(s);
    };

    if long {
        for (line, rec) in &records {
            let line = *line;
            if rec.len() < 3 {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected at least 3 fields, got {}", rec.len()),
                });
            }
            let date = parse_date(&rec[0], line)?;
            if is_missing(&rec[2]) || rec[1].trim().is_empty() {
                dropped += 1;
                continue;
            }
            let v = parse_value(&rec[2], line)?;
            let s = match (sigma_col, rec.get(3)) {
                (true, Some(f)) if !is_missing(f) => Some(parse_value(f, line)?),
                _ => None,
            };
            push(&rec[1], date, line, v, s);
        }
    } else {
        let ids = &original[1..];
        for (line, rec) in &records {
            let line = *line;
            if rec.len() != header.len() {
                return Err(Error::Parse {
                    line,
                    msg: format!("expected {} fields, got {}", header.len(), rec.len()),
                });
            }
            let date = parse_date(&rec[0], line)?;
            if rec.iter().skip(1).any(is_missing) {
                dropped += 1;
                continue;
            }
            for (j, id) in ids.iter().enumerate() {
                let v = parse_value(&rec[j + 1], line)?;
                push(id, date, line, v, None);
            }
        }
    }

    let mut series = Vec::with_capacity(order.len());
    for id in order {
        let r = raw.remove(&id).expect("recorded");
        for w in r.dates.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(Error::Parse {
                    line: w[1].1,
                    msg: format!("dates of series {id} are not strictly increasing"),
                });
            }
        }
        let dates: Vec<NaiveDate> = r.dates.iter().map(|d| d.0).collect();
        let s = match kind {
            ValueKind::Return => Series {
                id,
                dates,
                returns: r.values,
                sigma: r.sigma.iter().all(Option::is_some).then(|| r.sigma.iter().map(|s| s.unwrap()).collect()),
            },
            ValueKind::Price => {
                if let Some(i) = r.values.iter().position(|&p| p <= 0.0) {
                    return Err(Error::Parse {
                        line: r.dates[i].1,
                        msg: format!("non-positive price {} in series {id}", r.values[i]),
                    });
                }
                Series {
                    id,
                    dates: dates.get(1..).unwrap_or_default().to_vec(),
                    returns: r.values.windows(2).map(|w| (w[1] / w[0]).ln()).collect(),
                    sigma: None,
                }
            }
        };
        series.push(s);
    }
    Ok(SeriesTable {
        series,
        dropped_rows: dropped,
    })
}

/// Writes the long format `date,id,value[,sigma]` with shortest round-trip
/// float formatting.
pub fn write_long<W: Write>(table: &SeriesTable, w: W) -> Result<()> {
    let with_sigma = !table.series.is_empty() && table.series.iter().all(|s| s.sigma.is_some());
    let mut wtr = csv::Writer::from_writer(w);
    let io = |e: csv::Error| Error::Io(std::io::Error::other(e));
    if with_sigma {
        wtr.write_record(["date", "id", "value", "sigma"]).map_err(io)?;
    } else {
        wtr.write_record(["date", "id", "value"]).map_err(io)?;
    }
    for s in &table.series {
        for (i, (d, r)) in s.dates.iter().zip(&s.returns).enumerate() {
            let date = d.format("%Y-%m-%d").to_string();
            let value = format!("{r:?}");
            match (&s.sigma, with_sigma) {
                (Some(sig), true) => wtr
                    .write_record([date.as_str(), s.id.as_str(), value.as_str(), format!("{:?}", sig[i]).as_str()])
                    .map_err(io)?,
                _ => wtr.write_record([date.as_str(), s.id.as_str(), value.as_str()]).map_err(io)?,
            }
        }
    }
    wtr.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn prices_become_log_returns() {
        let csv = "date,AAA\n2020-01-01,100\n2020-01-02,110\n2020-01-03,99\n";
        let t = ingest_reader(csv.as_bytes(), ValueKind::Price).unwrap();
        let s = &t.series[0];
        assert_eq!(s.id, "AAA");
        assert_eq!(s.returns, vec![1.1f64.ln(), 0.9f64.ln()]);
        assert_eq!(s.dates[0], NaiveDate::from_ymd_opt(2020, 1, 2).unwrap());
    }

    #[test]
    fn constant_prices_give_zero_returns() {
        let csv = "date,A,B\n2020-01-01,5,7\n2020-01-02,5,7\n2020-01-03,5,7\n";
        let t = ingest_reader(csv.as_bytes(), ValueKind::Price).unwrap();
        assert!(t.series.iter().all(|s| s.returns == vec![0.0, 0.0]));
    }

    #[test]
    fn missing_rows_are_dropped_and_counted() {
        let csv = "date,A,B\n2020-01-01,1,2\n2020-01-02,NA,2\n2020-01-03,1.5,\n2020-01-04,2,3\n";
        let t = ingest_reader(csv.as_bytes(), ValueKind::Return).unwrap();
        assert_eq!(t.dropped_rows, 2);
        assert_eq!(t.series[1].returns, vec![2.0, 3.0]);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let bad_date = "date,A\n2020-01-01,1\n2020-13-01,2\n";
        match ingest_reader(bad_date.as_bytes(), ValueKind::Return) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let bad_value = "date,id,value\n2020-01-01,A,1\n2020-01-02,A,x\n";
        match ingest_reader(bad_value.as_bytes(), ValueKind::Return) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        let unordered = "date,A\n2020-01-02,1\n2020-01-01,2\n";
        match ingest_reader(unordered.as_bytes(), ValueKind::Return) {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn long_format_with_sigma_round_trips() {
        let d = |k: u32| NaiveDate::from_ymd_opt(2021, 3, k).unwrap();
        let table = SeriesTable {
            series: vec![
                Series {
                    id: "s1".into(),
                    dates: vec![d(1), d(2), d(3)],
                    returns: vec![0.1, -1.0 / 3.0, 1e-17],
                    sigma: Some(vec![0.5, 0.25, std::f64::consts::PI]),
                },
                Series {
                    id: "s0".into(),
                    dates: vec![d(1), d(4)],
                    returns: vec![2.0f64.sqrt(), -0.0],
                    sigma: Some(vec![1.0, 2.0]),
                },
            ],
            dropped_rows: 0,
        };
        let mut buf = Vec::new();
        write_long(&table, &mut buf).unwrap();
        let back = ingest_reader(buf.as_slice(), ValueKind::Return).unwrap();
        assert_eq!(back, table);
    }
}

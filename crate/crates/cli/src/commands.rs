use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{Datelike, NaiveDate, Weekday};
use rayon::prelude::*;
use serde::Serialize;
use volcast::data::{
    friedman_test, ingest, simulate_sv, split, test_start, window, write_long, FriedmanResult, NllTable, Series,
    SeriesTable,
};
use volcast::dsvm::Dsvm;
use volcast::forecast::{read_forecast_csv, rolling_forecast, write_forecast_csv, ForecastOptions, ForecastRecord};
use volcast::garch::{rolling_eval, GarchSpec, RollingOptions};
use volcast::tensor::{derive_seed, Rng};
use volcast::training::{train, TrainConfig};

use crate::artifacts::{digest_inputs, line_chart, FileDigest, Line, Outputs};
use crate::config::{model_variant, RunConfig, Span, MODEL_TAGS};
use crate::error::{CliError, CliResult};

const TAG_SIMULATE: u64 = 1;
const TAG_INIT: u64 = 2;
const TAG_TRAIN: u64 = 3;
const TAG_FORECAST: u64 = 4;
const TAG_BASELINE: u64 = 5;

fn required<'a>(p: &'a Option<PathBuf>, flag: &str) -> CliResult<&'a Path> {
    p.as_deref().ok_or_else(|| CliError::config(format!("missing --{flag}")))
}

fn out_dir(cfg: &RunConfig) -> CliResult<Outputs> {
    Outputs::create(required(&cfg.out, "out")?)
}

fn load_corpus(cfg: &RunConfig) -> CliResult<(SeriesTable, Vec<FileDigest>)> {
    let path = required(&cfg.data, "data")?;
    if !path.is_file() {
        return Err(CliError::data(format!("data file {} does not exist", path.display())));
    }
    let table = ingest(path, cfg.value_kind).map_err(|e| CliError::from_data(e).context(path.display()))?;
    if table.series.is_empty() {
        return Err(CliError::data(format!("{} contains no series", path.display())));
    }
    Ok((table, digest_inputs(path)?))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> volcast::Result<()>) -> CliResult<Vec<u8>> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(CliError::from_data)?;
    Ok(buf)
}

/// `n` consecutive weekdays starting at (or after) `start`.
pub fn business_days(start: NaiveDate, n: usize) -> Vec<NaiveDate> {
    let mut out = Vec::with_capacity(n);
    let mut d = start;
    while out.len() < n {
        if !matches!(d.weekday(), Weekday::Sat | Weekday::Sun) {
            out.push(d);
        }
        d = d.succ_opt().expect("date in range");
    }
    out
}

pub fn simulate(cfg: &RunConfig) -> CliResult<()> {
    let mut out = out_dir(cfg)?;
    let sim = &cfg.simulate;
    let start = NaiveDate::parse_from_str(&sim.start_date, "%Y-%m-%d").expect("validated");
    let dates = business_days(start, sim.length);
    let seed = derive_seed(cfg.seed(), TAG_SIMULATE);
    let series = (0..sim.n_series)
        .map(|i| {
            let path = simulate_sv(&sim.sv, sim.length, &mut Rng::stream(seed, i as u64)).map_err(CliError::from_config)?;
            Ok(Series {
                id: format!("sv{i:03}"),
                dates: dates.clone(),
                returns: path.returns,
                sigma: Some(path.sigmas),
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let table = SeriesTable {
        series,
        dropped_rows: 0,
    };
    let bytes = csv_bytes(|b| write_long(&table, b))?;
    out.write("corpus.csv", &bytes)?;
    println!("simulated {} series of length {}", sim.n_series, sim.length);
    out.finish("simulate", cfg, &[])
}

#[derive(Serialize)]
struct Timing {
    seconds_per_epoch: Vec<f64>,
}

pub fn train_cmd(cfg: &RunConfig) -> CliResult<()> {
    let (table, inputs) = load_corpus(cfg)?;
    let mut out = out_dir(cfg)?;
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (j, s) in table.series.iter().enumerate() {
        let seqs = window(j, &s.returns, cfg.window, cfg.stride).map_err(|e| CliError::from_data(e).context(&s.id))?;
        let parts = split(&seqs, &cfg.split).map_err(|e| CliError::from_data(e).context(&s.id))?;
        tr.extend(parts.train.into_iter().map(|w| w.values));
        va.extend(parts.valid.into_iter().map(|w| w.values));
    }
    let seed = cfg.seed();
    let model = Dsvm::<f64>::init(cfg.model, &mut Rng::new(derive_seed(seed, TAG_INIT)));
    let checkpoint = out.path("model.ckpt");
    let t = &cfg.train;
    let tc = TrainConfig {
        batch_size: t.batch_size,
        epochs: t.epochs,
        adam: t.adam,
        seed: derive_seed(seed, TAG_TRAIN),
        valid_every: t.valid_every,
        valid_samples: t.valid_samples,
        checkpoint: Some(checkpoint.clone()),
        clip_norm: t.clip_norm,
        trainable: None,
    };
    let result = train(model, &tr, &va, &tc).map_err(CliError::from_config)?;
    result
        .model
        .save(&checkpoint)
        .map_err(|e| CliError::from_data(e).context(checkpoint.display()))?;
    out.record("model.ckpt")?;
    let report = &result.report;
    out.write("train_log.csv", &csv_bytes(|b| report.write_csv(b))?)?;
    out.write("train_report.json", &csv_bytes(|b| report.write_summary(b))?)?;
    // Wall-clock times vary between runs, so they stay out of the manifest.
    let timing = Timing {
        seconds_per_epoch: report.epochs.iter().map(|e| e.seconds).collect(),
    };
    fs::write(out.path("timing.json"), serde_json::to_string_pretty(&timing).expect("serializes"))
        .map_err(|e| CliError::data(e.to_string()))?;
    println!(
        "trained on {} sequences ({} valid); selected epoch {} with validation ELBO {:.6}",
        tr.len(),
        va.len(),
        report.selected_epoch,
        report.best_valid_elbo
    );
    out.finish("train", cfg, &inputs)
}

fn forecast_start(cfg: &RunConfig, n: usize, history: usize) -> CliResult<usize> {
    match cfg.forecast.span {
        Span::All => Ok(history),
        Span::Test => test_start(n, cfg.window, cfg.stride, &cfg.split).map_err(CliError::from_data),
    }
}

pub fn forecast(cfg: &RunConfig) -> CliResult<()> {
    let (table, mut inputs) = load_corpus(cfg)?;
    let mut out = out_dir(cfg)?;
    let seed = cfg.seed();
    for (k, tag) in cfg.forecast.models.iter().enumerate() {
        let results: Vec<(usize, Option<Vec<ForecastRecord>>)> = match model_variant(tag)? {
            None => {
                let ckpt = required(&cfg.checkpoint, "checkpoint")?;
                let model = Dsvm::<f64>::load(ckpt).map_err(|e| CliError::from_data(e).context(ckpt.display()))?;
                if model.config != cfg.model {
                    eprintln!("note: using the checkpoint's model configuration {:?}", model.config);
                }
                inputs.extend(digest_inputs(ckpt)?);
                let base = derive_seed(seed, TAG_FORECAST);
                let mut res = Vec::new();
                for (j, s) in table.series.iter().enumerate() {
                    let start = forecast_start(cfg, s.len(), cfg.window).map_err(|e| e.context(&s.id))?;
                    let opts = ForecastOptions {
                        window: cfg.window,
                        samples: cfg.forecast.samples,
                        start: Some(start),
                        seed: derive_seed(base, j as u64),
                        analytic: cfg.forecast.analytic,
                    };
                    let recs = rolling_forecast(&model, &s.returns, &opts).map_err(|e| CliError::from_data(e).context(&s.id))?;
                    res.push((j, Some(recs)));
                }
                res
            }
            Some(variant) => {
                let b = &cfg.baseline;
                let spec = GarchSpec::new(variant, b.p, b.q).map_err(CliError::from_config)?;
                let base = derive_seed(seed, TAG_BASELINE + k as u64);
                table
                    .series
                    .par_iter()
                    .enumerate()
                    .map(|(j, s)| {
                        let start = forecast_start(cfg, s.len(), b.window).map_err(|e| e.context(&s.id))?;
                        if start < b.window || s.len() <= b.window {
                            eprintln!("note: {} has too little history for {tag} with a window of {}", s.id, b.window);
                            return Ok((j, None));
                        }
                        let opts = RollingOptions {
                            window: b.window,
                            start: Some(start),
                            seed: derive_seed(base, j as u64),
                            warm_start: b.warm_start,
                            starts: b.starts,
                        };
                        let recs = rolling_eval(&spec, &s.returns, &opts).map_err(|e| CliError::from_data(e).context(&s.id))?;
                        Ok((j, Some(recs.iter().map(ForecastRecord::from).collect())))
                    })
                    .collect::<CliResult<Vec<_>>>()?
            }
        };
        let mut written = 0;
        for (j, recs) in results {
            let Some(recs) = recs else { continue };
            let s = &table.series[j];
            let bytes = csv_bytes(|b| write_forecast_csv(&recs, Some(&s.dates), tag, b))?;
            out.write(&format!("{tag}/{}.csv", s.id), &bytes)?;
            written += 1;
        }
        println!("{tag}: forecasts for {written} series");
    }
    out.finish("forecast", cfg, &inputs)
}

fn model_order(tag: &str) -> (usize, String) {
    (MODEL_TAGS.iter().position(|t| *t == tag).unwrap_or(MODEL_TAGS.len()), tag.to_string())
}

/// `<root>/<model>/<series>.csv` → model → series → path.
fn scan_forecasts(root: &Path) -> CliResult<BTreeMap<(usize, String), BTreeMap<String, PathBuf>>> {
    if !root.is_dir() {
        return Err(CliError::data(format!("forecast directory {} does not exist", root.display())));
    }
    let io = |e: std::io::Error| CliError::data(format!("{}: {e}", root.display()));
    let mut found = BTreeMap::new();
    for entry in fs::read_dir(root).map_err(io)? {
        let dir = entry.map_err(io)?.path();
        if !dir.is_dir() {
            continue;
        }
        let tag = dir.file_name().and_then(|s| s.to_str()).unwrap_or_default().to_string();
        let mut files = BTreeMap::new();
        for f in fs::read_dir(&dir).map_err(io)? {
            let f = f.map_err(io)?.path();
            if f.extension().and_then(|e| e.to_str()) == Some("csv") {
                let id = f.file_stem().and_then(|s| s.to_str()).unwrap_or_default().to_string();
                files.insert(id, f);
            }
        }
        if !files.is_empty() {
            found.insert(model_order(&tag), files);
        }
    }
    if found.is_empty() {
        return Err(CliError::data(format!("no forecast CSVs under {}", root.display())));
    }
    Ok(found)
}

fn read_rows(path: &Path) -> CliResult<Vec<volcast::forecast::ForecastRow>> {
    let file = fs::File::open(path).map_err(|e| CliError::data(format!("{}: {e}", path.display())))?;
    read_forecast_csv(file).map_err(|e| CliError::from_data(e).context(path.display()))
}

#[derive(Serialize)]
struct Evaluation {
    models: Vec<String>,
    mean_nll: Vec<Option<f64>>,
    friedman: Option<FriedmanResult>,
}

pub fn evaluate(cfg: &RunConfig) -> CliResult<()> {
    let root = cfg.forecasts.as_ref().or(cfg.data.as_ref());
    let root = required(&root.cloned(), "data")?.to_path_buf();
    let found = scan_forecasts(&root)?;
    let inputs = digest_inputs(&root)?;
    let mut out = out_dir(cfg)?;
    let models: Vec<String> = found.keys().map(|(_, t)| t.clone()).collect();
    let series: BTreeSet<&String> = found.values().flat_map(|m| m.keys()).collect();
    let mut table = NllTable::new(models.clone());
    for id in series {
        let row = found
            .values()
            .map(|files| {
                let Some(path) = files.get(id) else { return Ok(None) };
                let rows = read_rows(path)?;
                Ok((!rows.is_empty()).then(|| rows.iter().map(|r| r.pred_nll).sum::<f64>() / rows.len() as f64))
            })
            .collect::<CliResult<Vec<_>>>()?;
        table.push_row(id.clone(), row).map_err(CliError::from_data)?;
    }
    out.write("nll_table.csv", &csv_bytes(|b| table.write_csv(b))?)?;
    let friedman = match friedman_test(&table) {
        Ok(f) => Some(f),
        Err(e) => {
            eprintln!("note: Friedman test skipped: {e}");
            None
        }
    };
    let eval = Evaluation {
        models: models.clone(),
        mean_nll: table.column_means(),
        friedman,
    };
    let text = serde_json::to_string_pretty(&eval).expect("serializes") + "\n";
    out.write("evaluation.json", text.as_bytes())?;
    println!("{} series × {} models", table.series.len(), models.len());
    for (m, v) in models.iter().zip(&eval.mean_nll) {
        match v {
            Some(v) => println!("  {m:<8} mean NLL {v:.6}"),
            None => println!("  {m:<8} mean NLL NA"),
        }
    }
    if let Some(f) = &eval.friedman {
        println!("  Friedman χ² = {:.4} (df {}), p = {:.3e}", f.statistic, f.df, f.p_value);
    }
    out.finish("evaluate", cfg, &inputs)
}

const COLORS: [&str; 5] = ["#d62728", "#1f77b4", "#2ca02c", "#9467bd", "#ff7f0e"];

pub fn report(cfg: &RunConfig) -> CliResult<()> {
    let (table, mut inputs) = load_corpus(cfg)?;
    let root = required(&cfg.forecasts, "forecasts")?;
    let found = scan_forecasts(root)?;
    inputs.extend(digest_inputs(root)?);
    let mut out = out_dir(cfg)?;
    let mut reported = 0;
    for s in &table.series {
        let models: Vec<(&String, Vec<volcast::forecast::ForecastRow>)> = found
            .iter()
            .filter_map(|((_, tag), files)| files.get(&s.id).map(|p| (tag, p)))
            .map(|(tag, p)| Ok((tag, read_rows(p)?)))
            .collect::<CliResult<_>>()?;
        if models.is_empty() {
            continue;
        }
        // Forecast timestamps are dates or bare indices.
        let index_of: BTreeMap<String, usize> = s
            .dates
            .iter()
            .enumerate()
            .flat_map(|(i, d)| [(d.format("%Y-%m-%d").to_string(), i), (i.to_string(), i)])
            .collect();
        let mut by_index: BTreeMap<usize, Vec<Option<f64>>> = BTreeMap::new();
        for (k, (_, rows)) in models.iter().enumerate() {
            for r in rows {
                let i = *index_of
                    .get(&r.timestamp)
                    .ok_or_else(|| CliError::data(format!("{}: unknown timestamp {}", s.id, r.timestamp)))?;
                by_index.entry(i).or_insert_with(|| vec![None; models.len()])[k] = Some(r.pred_vol);
            }
        }
        let mut header = vec!["timestamp".to_string(), "abs_return".to_string()];
        if s.sigma.is_some() {
            header.push("true_sigma".into());
        }
        header.extend(models.iter().map(|(t, _)| t.to_string()));
        let mut wtr = csv::Writer::from_writer(Vec::new());
        let csv_err = |e: csv::Error| CliError::data(e.to_string());
        wtr.write_record(&header).map_err(csv_err)?;
        let mut abs = Vec::new();
        let mut truth = Vec::new();
        let mut preds = vec![Vec::new(); models.len()];
        for (&i, vols) in &by_index {
            let mut rec = vec![s.dates[i].format("%Y-%m-%d").to_string(), format!("{:?}", s.returns[i].abs())];
            abs.push(s.returns[i].abs());
            if let Some(sig) = &s.sigma {
                rec.push(format!("{:?}", sig[i]));
                truth.push(sig[i]);
            }
            for (k, v) in vols.iter().enumerate() {
                rec.push(v.map(|v| format!("{v:?}")).unwrap_or_default());
                preds[k].push(v.unwrap_or(f64::NAN));
            }
            wtr.write_record(&rec).map_err(csv_err)?;
        }
        let bytes = wtr.into_inner().map_err(|e| CliError::data(e.to_string()))?;
        out.write(&format!("{}.csv", s.id), &bytes)?;

        let mut lines = vec![Line {
            label: "|r|",
            color: "#bbbbbb",
            values: &abs,
        }];
        if !truth.is_empty() {
            lines.push(Line {
                label: "true σ",
                color: "#000000",
                values: &truth,
            });
        }
        for (k, (tag, _)) in models.iter().enumerate() {
            lines.push(Line {
                label: tag,
                color: COLORS[k % COLORS.len()],
                values: &preds[k],
            });
        }
        let svg = line_chart(&format!("{}: predicted volatility vs |r|", s.id), &lines);
        out.write(&format!("{}.svg", s.id), svg.as_bytes())?;
        reported += 1;
    }
    if reported == 0 {
        return Err(CliError::data("no forecasts match the corpus series"));
    }
    println!("reported {reported} series");
    out.finish("report", cfg, &inputs)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn business_days_skip_weekends() {
        let fri = NaiveDate::from_ymd_opt(2021, 1, 1).unwrap();
        let d = business_days(fri, 3);
        assert_eq!(d[1], NaiveDate::from_ymd_opt(2021, 1, 4).unwrap());
        assert_eq!(d[2], NaiveDate::from_ymd_opt(2021, 1, 5).unwrap());
    }
}

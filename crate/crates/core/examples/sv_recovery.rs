//! Trains a DSVM on simulated SV-with-leverage data and scores held-out
//! forecasts against the true volatility path.
//!
//! `cargo run --release --example sv_recovery -- [epochs] [series]`

use std::time::Instant;

use volcast::data::{simulate_sv, split, test_start, window, SplitRatios, SvSimParams};
use volcast::dsvm::{Dsvm, ModelConfig};
use volcast::forecast::{mean_nll, rolling_forecast, ForecastOptions};
use volcast::scalar::HALF_LN_2PI;
use volcast::stats::pearson;
use volcast::tensor::{derive_seed, Rng};
use volcast::training::{train, TrainConfig};

fn main() -> volcast::Result<()> {
    let args: Vec<usize> = std::env::args().skip(1).map(|a| a.parse().expect("integer argument")).collect();
    let epochs = args.first().copied().unwrap_or(100);
    let n_series = args.get(1).copied().unwrap_or(50);
    let (n, len, seed) = (1500, 10, 2024);
    let params = SvSimParams {
        mu: -1.0,
        ar_phi: 0.95,
        sigma_z: 0.2,
        rho: -0.4,
    };
    let ratios = SplitRatios::default();
    let paths = (0..n_series)
        .map(|i| simulate_sv(&params, n, &mut Rng::stream(seed, i as u64)))
        .collect::<volcast::Result<Vec<_>>>()?;
    let (mut tr, mut va) = (Vec::new(), Vec::new());
    for (i, p) in paths.iter().enumerate() {
        let s = split(&window(i, &p.returns, len, 1)?, &ratios)?;
        tr.extend(s.train.into_iter().map(|w| w.values));
        va.extend(s.valid.into_iter().map(|w| w.values));
    }
    println!("{} train / {} valid sequences", tr.len(), va.len());

    let t0 = Instant::now();
    let model = Dsvm::<f64>::init(ModelConfig::default(), &mut Rng::new(derive_seed(seed, 1)));
    let cfg = TrainConfig {
        epochs,
        seed: derive_seed(seed, 2),
        ..Default::default()
    };
    let out = train(model, &tr, &va, &cfg)?;
    for e in &out.report.epochs {
        println!("epoch {:3} train {:.4} valid {:?} ({:.1}s)", e.epoch, e.train_elbo, e.valid_elbo, e.seconds);
    }
    println!("selected epoch {} after {:.0}s", out.report.selected_epoch, t0.elapsed().as_secs_f64());

    let t1 = Instant::now();
    let start = test_start(n, len, 1, &ratios)?;
    let (mut corr, mut nll, mut oracle) = (0.0, 0.0, 0.0);
    for (i, p) in paths.iter().enumerate() {
        let opts = ForecastOptions {
            window: len,
            start: Some(start),
            seed: derive_seed(seed, 100 + i as u64),
            ..Default::default()
        };
        let recs = rolling_forecast(&out.model, &p.returns, &opts)?;
        let pred: Vec<f64> = recs.iter().map(|r| r.pred_vol).collect();
        let truth = &p.sigmas[start..];
        corr += pearson(&pred, truth);
        nll += mean_nll(&recs);
        oracle += truth
            .iter()
            .zip(&p.returns[start..])
            .map(|(s, r)| HALF_LN_2PI + s.ln() + 0.5 * (r / s).powi(2))
            .sum::<f64>()
            / truth.len() as f64;
    }
    let k = n_series as f64;
    println!(
        "corr {:.4}  nll {:.4}  oracle {:.4}  gap {:.4}  ({:.0}s)",
        corr / k,
        nll / k,
        oracle / k,
        (nll - oracle) / k,
        t1.elapsed().as_secs_f64()
    );
    Ok(())
}

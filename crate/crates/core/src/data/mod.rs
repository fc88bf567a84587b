//! Data harness: ingestion, windowing, chronological splits, the discrete
//! stochastic volatility simulator and evaluation statistics.

mod friedman;
mod sv;
mod table;
mod window;

pub use friedman::{friedman_test, FriedmanResult, NllTable};
pub use sv::{simulate_sv, SvPath, SvSimParams};
pub use table::{ingest, ingest_reader, write_long, Series, SeriesTable, ValueKind};
pub use window::{split, test_start, window, ReturnSequence, Split, SplitRatios};

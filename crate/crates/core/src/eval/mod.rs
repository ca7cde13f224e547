//! Downstream evaluation: linear probes, noise-intensity correlation and
//! the propagate-then-probe hop sweep.

mod probe;
mod report;
mod splits;
pub mod stats;

pub use probe::{hop_sweep, probe, sweep_csv, ProbeConfig, ProbeResult, SoftmaxRegression};
pub use report::{correlation_report, NoiseReport, Report};
pub(crate) use report::fmt_corr;
pub use splits::{SplitPlan, Splits};

//! Synthetic workloads and the micro-benchmark suites. Every number is a
//! simulated cycle count from the cost model, so reports are reproducible
//! byte for byte.

mod corpus;
mod suites;
mod synthetic;

use std::fmt::Write;

use thiserror::Error;

use crate::partitioner::PartitionError;
use crate::runtime::{CostModel, RuntimeError};

pub use corpus::{corpus_program, corpus_source, generate_corpus};
pub use suites::{sweep_partition_ratio, Placement, PAYLOAD_ITEM_LEN};
pub use synthetic::{generate_synthetic, synthetic_source, SyntheticSpec, Workload};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("unknown suite `{0}`")]
    UnknownSuite(String),
    #[error("invalid parameter: {0}")]
    BadParam(String),
    #[error(transparent)]
    Partition(#[from] PartitionError),
    #[error("runtime error: {0}")]
    Runtime(#[from] RuntimeError),
}

/// Knobs shared by the suites. `None` picks the suite's own default.
#[derive(Debug, Clone, Default)]
pub struct SuiteParams {
    pub cost: CostModel,
    pub seed: u64,
    pub iterations: Option<u64>,
    pub payload_items: Option<usize>,
    pub workload: Option<Workload>,
    pub steps: Option<Vec<u32>>,
    pub n_classes: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchRow {
    pub label: String,
    pub x: u64,
    pub ecalls: u64,
    pub ocalls: u64,
    pub bytes: u64,
    pub simulated_cycles: u64,
    pub gc_cycles: u64,
    /// Values for the report's extra columns, in order.
    pub extra: Vec<u64>,
}

impl BenchRow {
    /// Cycles spent outside the collector.
    pub fn mutator_cycles(&self) -> u64 {
        self.simulated_cycles - self.gc_cycles
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BenchReport {
    pub suite: String,
    /// Meaning of [`BenchRow::x`] for this suite.
    pub x_column: String,
    pub extra_columns: Vec<String>,
    pub rows: Vec<BenchRow>,
}

impl BenchReport {
    pub fn new(suite: &str, x_column: &str, extra_columns: &[&str]) -> BenchReport {
        BenchReport {
            suite: suite.to_string(),
            x_column: x_column.to_string(),
            extra_columns: extra_columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&self, label: &str, x: u64) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.label == label && r.x == x)
    }

    pub fn rows_labeled<'a>(&'a self, label: &'a str) -> impl Iterator<Item = &'a BenchRow> + 'a {
        self.rows.iter().filter(move |r| r.label == label)
    }

    pub fn extra(&self, row: &BenchRow, column: &str) -> Option<u64> {
        let i = self.extra_columns.iter().position(|c| c == column)?;
        row.extra.get(i).copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = format!("label,{},ecalls,ocalls,bytes,simulated_cycles,gc_cycles", self.x_column);
        for c in &self.extra_columns {
            out.push(',');
            out.push_str(c);
        }
        out.push('\n');
        for r in &self.rows {
            let _ = write!(
                out,
                "{},{},{},{},{},{},{}",
                r.label, r.x, r.ecalls, r.ocalls, r.bytes, r.simulated_cycles, r.gc_cycles
            );
            for v in &r.extra {
                let _ = write!(out, ",{v}");
            }
            out.push('\n');
        }
        out
    }
}

/// A named benchmark. Suites are looked up by name from [`registry`].
pub trait Suite: Sync {
    fn name(&self) -> &'static str;
    fn describe(&self) -> &'static str;
    fn run(&self, params: &SuiteParams) -> Result<BenchReport, BenchError>;
}

pub fn registry() -> &'static [&'static dyn Suite] {
    suites::ALL
}

pub fn find_suite(name: &str) -> Option<&'static dyn Suite> {
    registry().iter().copied().find(|s| s.name() == name)
}

pub fn run_suite(name: &str, params: &SuiteParams) -> Result<BenchReport, BenchError> {
    find_suite(name).ok_or_else(|| BenchError::UnknownSuite(name.to_string()))?.run(params)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        let mut report = BenchReport::new("demo", "pct", &["shim_calls"]);
        report.rows.push(BenchRow {
            label: "io".into(),
            x: 10,
            ecalls: 2,
            ocalls: 1,
            bytes: 30,
            simulated_cycles: 400,
            gc_cycles: 0,
            extra: vec![1],
        });
        assert_eq!(
            report.to_csv(),
            "label,pct,ecalls,ocalls,bytes,simulated_cycles,gc_cycles,shim_calls\nio,10,2,1,30,400,0,1\n"
        );
        assert_eq!(report.extra(&report.rows[0], "shim_calls"), Some(1));
    }

    #[test]
    fn registry_names() {
        let names: Vec<_> = registry().iter().map(|s| s.name()).collect();
        assert_eq!(names, ["proxy_creation", "rmi", "rmi_serialization", "gc_perf", "gc_consistency", "class_sweep"]);
        assert!(find_suite("nope").is_none());
        assert!(matches!(run_suite("nope", &SuiteParams::default()), Err(BenchError::UnknownSuite(_))));
    }
}

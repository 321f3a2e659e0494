//! Fidelity and privacy evaluation for synthetic relational databases:
//! column shapes, pairwise trends within and across tables, relationship
//! cardinalities, classifier two-sample tests (plain and with child-table
//! aggregates) and the distance-to-closest-record privacy score. All scores
//! live in [0, 1].

pub mod c2st;
pub mod cardinality;
pub mod columns;
pub mod dcr;
pub mod gbdt;
pub mod report;
pub mod shape;
pub mod trend;

pub use c2st::{c2st, c2st_agg, C2stConfig};
pub use cardinality::cardinality_similarity;
pub use dcr::dcr_score;
pub use report::{evaluate, EvalConfig, MetricReport};
pub use shape::{kst_score, shape_score, tvd_score};
pub use trend::{khop_trend, trend_score};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricError {
    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("too few rows for a classifier test: {0}")]
    TooFewRows(usize),

    #[error("no foreign-key path of length {0}")]
    NoPath(usize),

    #[error("table has fewer than two scorable columns")]
    NoColumnPairs,

    #[error("schemas do not match: {0}")]
    SchemaMismatch(String),
}

pub type Result<T> = std::result::Result<T, MetricError>;

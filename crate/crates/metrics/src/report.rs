use std::collections::BTreeMap;

use serde::Serialize;

use reldiff_core::Database;

use crate::c2st::{c2st, c2st_agg, C2stConfig};
use crate::cardinality::cardinality_similarity;
use crate::dcr::dcr_score;
use crate::shape::shape_score;
use crate::trend::{khop_trend, max_hop_depth, trend_score};
use crate::{MetricError, Result};

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub c2st: C2stConfig,
    /// Largest join depth probed for the k-hop scores.
    pub max_hops: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        Self {
            c2st: C2stConfig::default(),
            max_hops: 3,
            seed: 0,
        }
    }
}

/// All scores live in [0, 1]; the command-line front end scales them by 100
/// for reporting.
#[derive(Debug, Clone, Serialize)]
pub struct MetricReport {
    pub version: u32,
    /// Per table: per-column and mean column-shape similarity.
    pub shape: BTreeMap<String, TableShapeReport>,
    pub shape_mean: Option<f64>,
    /// Per table with at least two columns.
    pub trend: BTreeMap<String, f64>,
    pub trend_mean: Option<f64>,
    /// Per relation (link), complement of the cardinality KS statistic.
    pub cardinality: BTreeMap<String, f64>,
    pub cardinality_mean: Option<f64>,
    /// Per join depth (1-based), cross-table correlation similarity.
    pub khop: BTreeMap<String, f64>,
    /// Per table: discriminator accuracy (0.5 is indistinguishable).
    pub c2st: BTreeMap<String, f64>,
    /// Per parent table: discriminator accuracy with child aggregates.
    pub c2st_agg: BTreeMap<String, f64>,
    /// Per table: distance-to-closest-record score, when a holdout is given.
    pub dcr: Option<BTreeMap<String, f64>>,
    /// Per table: (real rows, synthetic rows).
    pub sample_sizes: BTreeMap<String, (usize, usize)>,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct TableShapeReport {
    pub per_column: BTreeMap<String, f64>,
    pub mean: f64,
}

fn mean_of(map: &BTreeMap<String, f64>) -> Option<f64> {
    if map.is_empty() {
        None
    } else {
        Some(map.values().sum::<f64>() / map.len() as f64)
    }
}

/// Run the full fidelity suite (and the privacy score when a holdout set is
/// supplied) on two databases over the same schema.
pub fn evaluate(
    real: &Database,
    syn: &Database,
    holdout: Option<&Database>,
    cfg: &EvalConfig,
) -> Result<MetricReport> {
    if real.schema.canonical_json() != syn.schema.canonical_json() {
        return Err(MetricError::SchemaMismatch(
            "real and synthetic schemas differ".into(),
        ));
    }
    let mut warnings = Vec::new();
    let mut shape = BTreeMap::new();
    let mut trend = BTreeMap::new();
    let mut c2st_scores = BTreeMap::new();
    let mut sample_sizes = BTreeMap::new();

    let mut c2st_cfg = cfg.c2st;
    c2st_cfg.seed = cfg.seed;

    for (ti, spec) in real.schema.tables.iter().enumerate() {
        sample_sizes.insert(
            spec.name.clone(),
            (real.tables[ti].len(), syn.tables[ti].len()),
        );
        if real.tables[ti].is_empty() || syn.tables[ti].is_empty() {
            warnings.push(format!("table `{}` empty on one side; skipped", spec.name));
            continue;
        }
        match shape_score(real, syn, ti) {
            Ok(s) => {
                for col in &s.skipped {
                    warnings.push(format!(
                        "column `{}.{}` skipped in shape (no values)",
                        spec.name, col
                    ));
                }
                shape.insert(
                    spec.name.clone(),
                    TableShapeReport {
                        per_column: s.per_column,
                        mean: s.mean,
                    },
                );
            }
            Err(MetricError::EmptyInput(msg)) => warnings.push(msg),
            Err(e) => return Err(e),
        }
        match trend_score(real, syn, ti) {
            Ok(t) => {
                if t.pairs_skipped > 0 {
                    warnings.push(format!(
                        "table `{}`: {} column pairs skipped in trend (constant column)",
                        spec.name, t.pairs_skipped
                    ));
                }
                trend.insert(spec.name.clone(), t.score);
            }
            Err(MetricError::NoColumnPairs) => {}
            Err(e) => return Err(e),
        }
        match c2st(real, syn, ti, &c2st_cfg) {
            Ok(acc) => {
                c2st_scores.insert(spec.name.clone(), acc);
            }
            Err(MetricError::TooFewRows(n)) => {
                warnings.push(format!(
                    "table `{}`: {} rows is too few for the classifier test",
                    spec.name, n
                ));
            }
            Err(e) => return Err(e),
        }
    }

    let cardinality = cardinality_similarity(real, syn)?;
    let mut khop = BTreeMap::new();
    let depth = max_hop_depth(real, cfg.max_hops);
    for k in 1..=depth {
        match khop_trend(real, syn, k) {
            Ok(t) => {
                khop.insert(format!("{k}-hop"), t.score);
            }
            Err(MetricError::NoColumnPairs) => {
                warnings.push(format!("no scorable column pairs at {k} hops"));
            }
            Err(e) => return Err(e),
        }
    }
    let agg = c2st_agg(real, syn, &c2st_cfg)?;

    let dcr = match holdout {
        None => None,
        Some(holdout) => {
            let outcome = dcr_score(syn, real, holdout)?;
            if let Some(w) = outcome.size_warning {
                warnings.push(w);
            }
            Some(outcome.per_table)
        }
    };

    Ok(MetricReport {
        version: 1,
        shape_mean: {
            let means: BTreeMap<String, f64> =
                shape.iter().map(|(k, v)| (k.clone(), v.mean)).collect();
            mean_of(&means)
        },
        shape,
        trend_mean: mean_of(&trend),
        trend,
        cardinality_mean: mean_of(&cardinality),
        cardinality,
        khop,
        c2st: c2st_scores,
        c2st_agg: agg,
        dcr,
        sample_sizes,
        warnings,
    })
}

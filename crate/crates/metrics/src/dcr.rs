use std::collections::BTreeMap;

use reldiff_core::Database;

use crate::c2st::{featurize_many, table_raw_columns};
use crate::{MetricError, Result};

pub struct DcrOutcome {
    pub per_table: BTreeMap<String, f64>,
    /// Set when the training and holdout sets differ in size.
    pub size_warning: Option<String>,
}

/// Distance-to-closest-record score: the fraction of synthetic rows whose
/// nearest neighbor (squared distance over standardized numerics and
/// one-hot categoricals) lies in the training set rather than the holdout
/// set, with ties counting one half. A value near 0.5 means the sampler
/// draws from the distribution rather than memorizing training rows.
pub fn dcr_score(syn: &Database, train: &Database, holdout: &Database) -> Result<DcrOutcome> {
    let mut per_table = BTreeMap::new();
    let mut size_warning = None;
    for (ti, spec) in train.schema.tables.iter().enumerate() {
        if spec.attr_count() == 0 {
            continue;
        }
        let n_trn = train.tables[ti].len();
        let n_hold = holdout.tables[ti].len();
        let n_syn = syn.tables[ti].len();
        if n_trn == 0 || n_hold == 0 || n_syn == 0 {
            return Err(MetricError::EmptyInput(format!(
                "dcr requires rows in every set for table `{}`",
                spec.name
            )));
        }
        if n_trn != n_hold && size_warning.is_none() {
            size_warning = Some(format!(
                "table `{}`: training has {n_trn} rows but holdout has {n_hold}; \
                 the score is biased toward the larger set",
                spec.name
            ));
        }
        let trn_cols = table_raw_columns(train, ti);
        let syn_cols = table_raw_columns(syn, ti);
        let hold_cols = table_raw_columns(holdout, ti);
        let mut sides = featurize_many(&[&trn_cols, &syn_cols, &hold_cols]);
        let hold_rows = sides.pop().unwrap();
        let syn_rows = sides.pop().unwrap();
        let trn_rows = sides.pop().unwrap();

        let mut indicator_sum = 0.0;
        for row in &syn_rows {
            let d_trn = nearest_sq(row, &trn_rows);
            let d_hold = nearest_sq(row, &hold_rows);
            indicator_sum += if d_trn < d_hold {
                1.0
            } else if d_trn > d_hold {
                0.0
            } else {
                0.5
            };
        }
        per_table.insert(spec.name.clone(), indicator_sum / syn_rows.len() as f64);
    }
    Ok(DcrOutcome {
        per_table,
        size_warning,
    })
}

fn nearest_sq(row: &[f64], set: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for other in set {
        let mut d = 0.0;
        for (a, b) in row.iter().zip(other) {
            d += (a - b) * (a - b);
            if d >= best {
                break;
            }
        }
        best = best.min(d);
    }
    best
}

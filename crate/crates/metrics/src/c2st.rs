//! Classifier two-sample tests: a discriminator is cross-validated on
//! real-vs-synthetic labels; accuracy near one half means the sets are
//! indistinguishable. The aggregated variant augments parent rows with
//! child counts, means of numeric child columns and distinct counts of
//! categorical child columns before testing.

use std::collections::{BTreeMap, BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;
use reldiff_core::rng::named_stream;
use reldiff_core::Database;

use crate::columns::{cell_categorical, cell_numeric, is_numeric_kind};
use crate::gbdt::{Gbdt, GbdtConfig};
use crate::{MetricError, Result};

#[derive(Debug, Clone, Copy)]
pub struct C2stConfig {
    pub folds: usize,
    pub min_rows: usize,
    pub seed: u64,
    pub gbdt: GbdtConfig,
}

impl Default for C2stConfig {
    fn default() -> Self {
        Self {
            folds: 5,
            min_rows: 50,
            seed: 0,
            gbdt: GbdtConfig::default(),
        }
    }
}

/// A column of raw values from one side, pre-featurization.
pub(crate) enum RawColumn {
    Numeric(Vec<Option<f64>>),
    Categorical(Vec<String>),
}

const ONE_HOT_CAP: usize = 50;

/// Encode every side's rows with shared statistics: numerics standardized by
/// the first (reference) side, one-hot categoricals capped at the 50 most
/// frequent reference categories (ties lexicographic; the rest share an
/// "other" bucket). Missing numerics become 0 after standardization plus a
/// missingness indicator when any side has one.
pub(crate) fn featurize_many(sides: &[&[RawColumn]]) -> Vec<Vec<Vec<f64>>> {
    let rows_of = |cols: &[RawColumn]| -> usize {
        match cols.first() {
            Some(RawColumn::Numeric(v)) => v.len(),
            Some(RawColumn::Categorical(v)) => v.len(),
            None => 0,
        }
    };
    let mut out: Vec<Vec<Vec<f64>>> = sides
        .iter()
        .map(|cols| vec![Vec::new(); rows_of(cols)])
        .collect();
    let n_cols = sides.first().map_or(0, |c| c.len());
    for col in 0..n_cols {
        match &sides[0][col] {
            RawColumn::Numeric(reference) => {
                let present: Vec<f64> = reference.iter().flatten().copied().collect();
                let mean = if present.is_empty() {
                    0.0
                } else {
                    present.iter().sum::<f64>() / present.len() as f64
                };
                let var = if present.len() < 2 {
                    1.0
                } else {
                    present.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>()
                        / present.len() as f64
                };
                let std = var.sqrt().max(1e-9);
                let any_missing = sides.iter().any(|cols| match &cols[col] {
                    RawColumn::Numeric(v) => v.iter().any(Option::is_none),
                    _ => false,
                });
                for (side, rows) in sides.iter().zip(&mut out) {
                    let RawColumn::Numeric(vals) = &side[col] else {
                        unreachable!("column kinds aligned by construction")
                    };
                    for (row, v) in rows.iter_mut().zip(vals) {
                        row.push(v.map_or(0.0, |x| (x - mean) / std));
                        if any_missing {
                            row.push(v.is_none() as u8 as f64);
                        }
                    }
                }
            }
            RawColumn::Categorical(reference) => {
                let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
                for c in reference {
                    *counts.entry(c).or_default() += 1;
                }
                let mut ranked: Vec<(&str, usize)> =
                    counts.iter().map(|(c, n)| (*c, *n)).collect();
                ranked.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
                let kept: Vec<&str> = ranked.iter().take(ONE_HOT_CAP).map(|(c, _)| *c).collect();
                let index: HashMap<&str, usize> =
                    kept.iter().enumerate().map(|(i, c)| (*c, i)).collect();
                let width = kept.len() + 1; // plus an "other" bucket
                for (side, rows) in sides.iter().zip(&mut out) {
                    let RawColumn::Categorical(vals) = &side[col] else {
                        unreachable!("column kinds aligned by construction")
                    };
                    for (row, c) in rows.iter_mut().zip(vals) {
                        let start = row.len();
                        row.resize(start + width, 0.0);
                        let slot = index.get(c.as_str()).copied().unwrap_or(width - 1);
                        row[start + slot] = 1.0;
                    }
                }
            }
        }
    }
    out
}

pub(crate) fn table_raw_columns(db: &Database, table: usize) -> Vec<RawColumn> {
    let spec = &db.schema.tables[table];
    spec.attributes()
        .enumerate()
        .map(|(attr, col)| {
            if is_numeric_kind(col.kind) {
                RawColumn::Numeric(
                    db.tables[table].columns[attr]
                        .iter()
                        .map(cell_numeric)
                        .collect(),
                )
            } else {
                RawColumn::Categorical(
                    db.tables[table].columns[attr]
                        .iter()
                        .map(cell_categorical)
                        .collect(),
                )
            }
        })
        .collect()
}

/// Cross-validated discriminator accuracy on featurized rows. Classes are
/// balanced by seeded subsampling of the larger side.
fn c2st_on_features(
    mut real: Vec<Vec<f64>>,
    mut syn: Vec<Vec<f64>>,
    cfg: &C2stConfig,
) -> Result<f64> {
    if real.len() < cfg.min_rows || syn.len() < cfg.min_rows {
        return Err(MetricError::TooFewRows(real.len().min(syn.len())));
    }
    let mut rng: ChaCha8Rng = named_stream(cfg.seed, "c2st");
    let n = real.len().min(syn.len());
    real.shuffle(&mut rng);
    syn.shuffle(&mut rng);
    real.truncate(n);
    syn.truncate(n);

    let mut rows: Vec<(Vec<f64>, u8)> = real
        .into_iter()
        .map(|r| (r, 0))
        .chain(syn.into_iter().map(|r| (r, 1)))
        .collect();
    rows.shuffle(&mut rng);

    let folds = cfg.folds.max(2);
    let mut accuracies = Vec::with_capacity(folds);
    for fold in 0..folds {
        let test_range = (rows.len() * fold / folds)..(rows.len() * (fold + 1) / folds);
        let mut train_x = Vec::new();
        let mut train_y = Vec::new();
        let mut test_x = Vec::new();
        let mut test_y = Vec::new();
        for (i, (row, label)) in rows.iter().enumerate() {
            if test_range.contains(&i) {
                test_x.push(row.clone());
                test_y.push(*label);
            } else {
                train_x.push(row.clone());
                train_y.push(*label);
            }
        }
        let model = Gbdt::fit(&train_x, &train_y, cfg.gbdt);
        accuracies.push(model.accuracy(&test_x, &test_y));
    }
    Ok(accuracies.iter().sum::<f64>() / accuracies.len() as f64)
}

/// Single-table classifier two-sample test; accuracy near 0.5 is best.
pub fn c2st(real: &Database, syn: &Database, table: usize, cfg: &C2stConfig) -> Result<f64> {
    let rc = table_raw_columns(real, table);
    let sc = table_raw_columns(syn, table);
    let mut sides = featurize_many(&[&rc, &sc]);
    let sf = sides.pop().unwrap();
    let rf = sides.pop().unwrap();
    c2st_on_features(rf, sf, cfg)
}

/// Augmented columns for one parent table: its own attributes plus, per
/// incoming relation, the child count, the mean of every numeric child
/// column and the distinct count of every categorical child column.
fn augmented_columns(db: &Database, parent: usize) -> Vec<RawColumn> {
    let mut cols = table_raw_columns(db, parent);
    let n = db.tables[parent].len();
    for (link_idx, link) in db.schema.links.iter().enumerate() {
        if link.parent != parent {
            continue;
        }
        let child = link.child;
        let fk_pos = db
            .schema
            .links_from(child)
            .position(|(li, _)| li == link_idx)
            .expect("link of child");
        let mut members: Vec<Vec<u32>> = vec![Vec::new(); n];
        for (row, &p) in db.tables[child].fk_parent_rows[fk_pos].iter().enumerate() {
            members[p as usize].push(row as u32);
        }
        cols.push(RawColumn::Numeric(
            members.iter().map(|m| Some(m.len() as f64)).collect(),
        ));
        for (attr, col) in db.schema.tables[child].attributes().enumerate() {
            if is_numeric_kind(col.kind) {
                // Mean of the children's values; childless rows are missing.
                let values: Vec<Option<f64>> = members
                    .iter()
                    .map(|m| {
                        let vals: Vec<f64> = m
                            .iter()
                            .filter_map(|&r| {
                                cell_numeric(&db.tables[child].columns[attr][r as usize])
                            })
                            .collect();
                        if vals.is_empty() {
                            None
                        } else {
                            Some(vals.iter().sum::<f64>() / vals.len() as f64)
                        }
                    })
                    .collect();
                cols.push(RawColumn::Numeric(values));
            } else {
                let values: Vec<Option<f64>> = members
                    .iter()
                    .map(|m| {
                        if m.is_empty() {
                            return None;
                        }
                        let distinct: BTreeSet<String> = m
                            .iter()
                            .map(|&r| {
                                cell_categorical(&db.tables[child].columns[attr][r as usize])
                            })
                            .collect();
                        Some(distinct.len() as f64)
                    })
                    .collect();
                cols.push(RawColumn::Numeric(values));
            }
        }
    }
    cols
}

/// Classifier two-sample test on parent tables augmented with child
/// aggregates; one accuracy per parent table (tables with at least one
/// incoming relation).
pub fn c2st_agg(
    real: &Database,
    syn: &Database,
    cfg: &C2stConfig,
) -> Result<BTreeMap<String, f64>> {
    let mut out = BTreeMap::new();
    for parent in 0..real.schema.tables.len() {
        if real.schema.links_into(parent).count() == 0 {
            continue;
        }
        let rc = augmented_columns(real, parent);
        let sc = augmented_columns(syn, parent);
        let mut sides = featurize_many(&[&rc, &sc]);
        let sf = sides.pop().unwrap();
        let rf = sides.pop().unwrap();
        match c2st_on_features(rf, sf, cfg) {
            Ok(acc) => {
                out.insert(real.schema.tables[parent].name.clone(), acc);
            }
            Err(MetricError::TooFewRows(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(out)
}

/// Calibration helper: accuracy of the discriminator on two halves of the
/// same table (exchangeable data), expected near one half.
pub fn c2st_self_split(db: &Database, table: usize, cfg: &C2stConfig) -> Result<f64> {
    let cols = table_raw_columns(db, table);
    let features = featurize_many(&[&cols]).pop().unwrap();
    let mut idx: Vec<usize> = (0..features.len()).collect();
    let mut rng = named_stream(cfg.seed, "c2st.split");
    idx.shuffle(&mut rng);
    let half = idx.len() / 2;
    let a = idx[..half].iter().map(|&i| features[i].clone()).collect();
    let b = idx[half..].iter().map(|&i| features[i].clone()).collect();
    c2st_on_features(a, b, cfg)
}

/// Direct access for callers bringing their own feature rows.
pub fn c2st_features(real: Vec<Vec<f64>>, syn: Vec<Vec<f64>>, cfg: &C2stConfig) -> Result<f64> {
    c2st_on_features(real, syn, cfg)
}

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::database::Database;
use crate::error::CoreError;
use crate::schema::{ColumnKind, Schema};
use crate::value::Value;
use crate::Result;

/// How missing cells are represented in the encoded space.
///
/// `Indicator` (the default) adds a binary categorical per nullable column so
/// the original missingness pattern survives a round trip; `Impute` replaces
/// missing numerics with the column mean and missing categoricals with a
/// dedicated category.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub enum MissingPolicy {
    Impute,
    #[default]
    Indicator,
}

pub const MISSING_SENTINEL: &str = "<MISSING>";

/// Monotone map from a fitted column to standard-normal deviates.
///
/// Fitting places knots at the order statistics paired with normal deviates
/// of the midpoint quantiles (i + 1/2)/n; tied values collapse into a single
/// knot at their average quantile. Encode and decode interpolate linearly
/// through the same knots, so decode inverts encode exactly on [min, max]
/// and clamps outside. Interior midpoints never reach the CDF clip bounds
/// [1/(4n), 1 - 1/(4n)], so the clip only manifests as this clamping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileEncoder {
    knot_values: Vec<f64>,
    knot_deviates: Vec<f64>,
}

impl QuantileEncoder {
    pub fn fit(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut sorted = values.to_vec();
        sorted.sort_by(|a, b| a.partial_cmp(b).expect("no NaN in fitted column"));
        let n = sorted.len() as f64;
        let normal = Normal::new(0.0, 1.0).expect("standard normal");

        let mut knot_values = Vec::new();
        let mut knot_deviates = Vec::new();
        let mut i = 0;
        while i < sorted.len() {
            let mut j = i;
            while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
                j += 1;
            }
            // Average midpoint quantile of the tied block.
            let q = (i..=j).map(|k| (k as f64 + 0.5) / n).sum::<f64>() / (j - i + 1) as f64;
            knot_values.push(sorted[i]);
            knot_deviates.push(normal.inverse_cdf(q));
            i = j + 1;
        }
        Some(Self {
            knot_values,
            knot_deviates,
        })
    }

    pub fn encode(&self, x: f64) -> f64 {
        interpolate(&self.knot_values, &self.knot_deviates, x)
    }

    pub fn decode(&self, z: f64) -> f64 {
        interpolate(&self.knot_deviates, &self.knot_values, z)
    }

    pub fn min(&self) -> f64 {
        self.knot_values[0]
    }

    pub fn max(&self) -> f64 {
        *self.knot_values.last().unwrap()
    }
}

/// Piecewise-linear interpolation through (xs, ys), clamped outside the knot
/// range. xs must be strictly increasing.
fn interpolate(xs: &[f64], ys: &[f64], x: f64) -> f64 {
    debug_assert_eq!(xs.len(), ys.len());
    if x <= xs[0] {
        return ys[0];
    }
    if x >= *xs.last().unwrap() {
        return *ys.last().unwrap();
    }
    let hi = xs.partition_point(|&v| v < x);
    let lo = hi - 1;
    if xs[hi] == xs[lo] {
        return ys[lo];
    }
    let w = (x - xs[lo]) / (xs[hi] - xs[lo]);
    ys[lo] + w * (ys[hi] - ys[lo])
}

/// Ordered category list; the mask state used by the discrete diffusion is
/// the extra index `len()` and never appears in decoded output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryVocab {
    categories: Vec<String>,
}

impl CategoryVocab {
    pub fn from_sorted(mut categories: Vec<String>) -> Self {
        categories.sort();
        categories.dedup();
        Self { categories }
    }

    pub fn len(&self) -> usize {
        self.categories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn mask_index(&self) -> u32 {
        self.categories.len() as u32
    }

    pub fn index_of(&self, cat: &str) -> Option<u32> {
        self.categories
            .binary_search_by(|c| c.as_str().cmp(cat))
            .ok()
            .map(|i| i as u32)
    }

    pub fn category(&self, idx: u32) -> &str {
        &self.categories[idx as usize]
    }
}

/// Reference into a dimension table: the vocabulary is its primary-key set
/// in row order, so vocabulary index i is dimension row i. Dimension rows
/// themselves are frozen and copied verbatim into synthetic output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimensionLookup {
    pub table: usize,
    pub primary_keys: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumericEncoder {
    /// Index into the table's attribute columns.
    pub attr: usize,
    pub quantile: QuantileEncoder,
    /// For datetime columns: epoch seconds of the column minimum; values are
    /// encoded as seconds since this origin.
    pub datetime_origin: Option<i64>,
    /// Mean of the non-missing values in pre-quantile space, used as the fill
    /// for missing cells.
    pub impute_value: f64,
    /// Categorical slot of this column's missingness indicator, if any.
    pub indicator_slot: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum CategoricalEncoder {
    /// A reference into a dimension table, modeled as a vocabulary lookup.
    DimRef {
        /// Position among the table's FK columns.
        fk_pos: usize,
        lookup: DimensionLookup,
    },
    /// An ordinary categorical attribute.
    Attr {
        attr: usize,
        vocab: CategoryVocab,
        /// Fill index for missing cells under the indicator policy (the
        /// modal category).
        fill: Option<u32>,
        /// True when the vocabulary contains the missing sentinel (impute
        /// policy with observed missing cells).
        sentinel_in_vocab: bool,
        indicator_slot: Option<usize>,
    },
    /// Binary missingness indicator: 0 = "missing", 1 = "present".
    Indicator { for_column: String },
}

impl CategoricalEncoder {
    /// Number of real categories (the mask state is one more).
    pub fn cardinality(&self) -> usize {
        match self {
            CategoricalEncoder::DimRef { lookup, .. } => lookup.primary_keys.len(),
            CategoricalEncoder::Attr { vocab, .. } => vocab.len(),
            CategoricalEncoder::Indicator { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct TableEncoder {
    pub numeric: Vec<NumericEncoder>,
    pub categorical: Vec<CategoricalEncoder>,
}

impl TableEncoder {
    pub fn numeric_count(&self) -> usize {
        self.numeric.len()
    }

    pub fn categorical_count(&self) -> usize {
        self.categorical.len()
    }

    pub fn cardinalities(&self) -> Vec<usize> {
        self.categorical.iter().map(|c| c.cardinality()).collect()
    }
}

/// One encoded row: numeric coordinates followed by categorical states, in
/// the fixed slot order of the table's encoder.
#[derive(Debug, Clone, PartialEq)]
pub struct EncodedRow {
    pub nums: Vec<f64>,
    pub cats: Vec<u32>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderSet {
    pub policy: MissingPolicy,
    pub tables: Vec<TableEncoder>,
}

/// Fit one encoder per non-key column. Datetime columns become seconds since
/// the column minimum and are treated as numerical; foreign keys into
/// dimension tables become categoricals over the dimension's primary-key
/// vocabulary. Dimension tables themselves get no encoders.
pub fn fit_encoders(db: &Database, policy: MissingPolicy) -> Result<EncoderSet> {
    let schema = &db.schema;
    let mut tables = Vec::with_capacity(schema.tables.len());
    for (t_idx, spec) in schema.tables.iter().enumerate() {
        if spec.dimension {
            tables.push(TableEncoder::default());
            continue;
        }
        let data = &db.tables[t_idx];
        // Empty tables are legal; there is nothing to fit and nothing will
        // ever be encoded or synthesized for them (row counts are preserved).
        if data.is_empty() {
            tables.push(TableEncoder::default());
            continue;
        }
        let mut enc = TableEncoder::default();

        // Dimension references first, in FK order.
        for (fk_pos, (link_idx, link)) in schema.links_from(t_idx).enumerate() {
            if schema.is_dimension_link(link_idx) {
                enc.categorical.push(CategoricalEncoder::DimRef {
                    fk_pos,
                    lookup: DimensionLookup {
                        table: link.parent,
                        primary_keys: db.tables[link.parent].pks.clone(),
                    },
                });
            }
        }

        // Attribute columns in schema order; indicators directly follow the
        // column they annotate.
        for (attr, col_spec) in spec.attributes().enumerate() {
            let column = &data.columns[attr];
            let any_missing = column.iter().any(Value::is_missing);
            match col_spec.kind {
                ColumnKind::Numerical | ColumnKind::Datetime => {
                    let datetime_origin = if col_spec.kind == ColumnKind::Datetime {
                        column
                            .iter()
                            .filter_map(|v| match v {
                                Value::DateTime(s) => Some(*s),
                                _ => None,
                            })
                            .min()
                    } else {
                        None
                    };
                    let raw: Vec<f64> = column
                        .iter()
                        .filter_map(|v| numeric_raw(v, datetime_origin))
                        .collect();
                    if raw.is_empty() {
                        return Err(CoreError::EmptyNumericColumn {
                            table: spec.name.clone(),
                            column: col_spec.name.clone(),
                        });
                    }
                    let impute_value = raw.iter().sum::<f64>() / raw.len() as f64;
                    let quantile = QuantileEncoder::fit(&raw).expect("non-empty");
                    let indicator_slot = if any_missing && policy == MissingPolicy::Indicator {
                        enc.categorical.push(CategoricalEncoder::Indicator {
                            for_column: col_spec.name.clone(),
                        });
                        Some(enc.categorical.len() - 1)
                    } else {
                        None
                    };
                    enc.numeric.push(NumericEncoder {
                        attr,
                        quantile,
                        datetime_origin: datetime_origin.or(if col_spec.kind
                            == ColumnKind::Datetime
                        {
                            Some(0)
                        } else {
                            None
                        }),
                        impute_value,
                        indicator_slot,
                    });
                }
                ColumnKind::Categorical => {
                    let mut cats: Vec<String> = column
                        .iter()
                        .filter_map(|v| match v {
                            Value::Category(s) => Some(s.clone()),
                            _ => None,
                        })
                        .collect();
                    let sentinel_in_vocab = any_missing && policy == MissingPolicy::Impute;
                    if sentinel_in_vocab {
                        if cats.iter().any(|c| c == MISSING_SENTINEL) {
                            return Err(CoreError::InvalidSchema(format!(
                                "column `{}.{}` contains the literal missing sentinel `{}`",
                                spec.name, col_spec.name, MISSING_SENTINEL
                            )));
                        }
                        cats.push(MISSING_SENTINEL.to_string());
                    }
                    if cats.is_empty() {
                        return Err(CoreError::EmptyCategoricalColumn {
                            table: spec.name.clone(),
                            column: col_spec.name.clone(),
                        });
                    }
                    let vocab = CategoryVocab::from_sorted(cats);
                    let fill = if any_missing && policy == MissingPolicy::Indicator {
                        Some(modal_index(&vocab, column))
                    } else {
                        None
                    };
                    let slot = enc.categorical.len();
                    enc.categorical.push(CategoricalEncoder::Attr {
                        attr,
                        vocab,
                        fill,
                        sentinel_in_vocab,
                        indicator_slot: None,
                    });
                    if any_missing && policy == MissingPolicy::Indicator {
                        enc.categorical.push(CategoricalEncoder::Indicator {
                            for_column: col_spec.name.clone(),
                        });
                        let indicator = enc.categorical.len() - 1;
                        if let CategoricalEncoder::Attr { indicator_slot, .. } =
                            &mut enc.categorical[slot]
                        {
                            *indicator_slot = Some(indicator);
                        }
                    }
                }
                _ => {}
            }
        }
        tables.push(enc);
    }
    Ok(EncoderSet { policy, tables })
}

fn numeric_raw(v: &Value, datetime_origin: Option<i64>) -> Option<f64> {
    match v {
        Value::Number(x) => Some(*x),
        Value::DateTime(s) => Some((*s - datetime_origin.unwrap_or(0)) as f64),
        _ => None,
    }
}

fn modal_index(vocab: &CategoryVocab, column: &[Value]) -> u32 {
    let mut counts = vec![0usize; vocab.len()];
    for v in column {
        if let Value::Category(s) = v {
            if let Some(i) = vocab.index_of(s) {
                counts[i as usize] += 1;
            }
        }
    }
    // Ties break toward the lexicographically first category.
    let mut best = 0;
    for (i, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = i;
        }
    }
    best as u32
}

impl EncoderSet {
    /// Encode one row of a non-dimension table.
    pub fn encode_row(&self, db: &Database, table: usize, row: usize) -> Result<EncodedRow> {
        let spec = &db.schema.tables[table];
        let enc = &self.tables[table];
        let data = &db.tables[table];
        let mut nums = Vec::with_capacity(enc.numeric.len());
        for ne in &enc.numeric {
            let v = &data.columns[ne.attr][row];
            let raw = match v {
                Value::Missing => ne.impute_value,
                other => numeric_raw(other, ne.datetime_origin).ok_or_else(|| {
                    CoreError::BadCell {
                        table: spec.name.clone(),
                        row,
                        column: spec.name.clone(),
                        cell: format!("{other:?}"),
                        kind: "numeric".into(),
                    }
                })?,
            };
            if v.is_missing() && ne.indicator_slot.is_none() {
                return Err(CoreError::MissingValue {
                    table: spec.name.clone(),
                    row,
                    column: db.schema.tables[table]
                        .attributes()
                        .nth(ne.attr)
                        .map(|c| c.name.clone())
                        .unwrap_or_default(),
                });
            }
            nums.push(ne.quantile.encode(raw));
        }
        let mut cats = Vec::with_capacity(enc.categorical.len());
        for ce in &enc.categorical {
            let state = match ce {
                CategoricalEncoder::DimRef { fk_pos, .. } => data.fk_parent_rows[*fk_pos][row],
                CategoricalEncoder::Attr {
                    attr,
                    vocab,
                    fill,
                    sentinel_in_vocab,
                    ..
                } => match &data.columns[*attr][row] {
                    Value::Category(s) => vocab.index_of(s).ok_or_else(|| {
                        CoreError::UnknownCategory {
                            table: spec.name.clone(),
                            column: spec
                                .attributes()
                                .nth(*attr)
                                .map(|c| c.name.clone())
                                .unwrap_or_default(),
                            value: s.clone(),
                        }
                    })?,
                    Value::Missing if *sentinel_in_vocab => {
                        vocab.index_of(MISSING_SENTINEL).expect("sentinel fitted")
                    }
                    Value::Missing if fill.is_some() => fill.unwrap(),
                    _ => {
                        return Err(CoreError::MissingValue {
                            table: spec.name.clone(),
                            row,
                            column: spec
                                .attributes()
                                .nth(*attr)
                                .map(|c| c.name.clone())
                                .unwrap_or_default(),
                        })
                    }
                },
                CategoricalEncoder::Indicator { for_column } => {
                    let attr = spec
                        .attributes()
                        .position(|c| &c.name == for_column)
                        .expect("indicator names a fitted column");
                    if data.columns[attr][row].is_missing() {
                        0
                    } else {
                        1
                    }
                }
            };
            cats.push(state);
        }
        Ok(EncodedRow { nums, cats })
    }

    /// Encode a whole non-dimension table.
    pub fn encode_table(&self, db: &Database, table: usize) -> Result<Vec<EncodedRow>> {
        (0..db.tables[table].len())
            .map(|row| self.encode_row(db, table, row))
            .collect()
    }

    /// Decode one encoded row back to an attribute tuple plus the dimension
    /// references (FK position, dimension row) it carries.
    pub fn decode_row(
        &self,
        schema: &Schema,
        table: usize,
        row: &EncodedRow,
    ) -> (Vec<Value>, Vec<(usize, u32)>) {
        let spec = &schema.tables[table];
        let enc = &self.tables[table];
        let attr_kinds: Vec<ColumnKind> = spec.attributes().map(|c| c.kind).collect();
        let mut values = vec![Value::Missing; attr_kinds.len()];
        let mut dim_refs = Vec::new();

        let missing_by_indicator =
            |slot: Option<usize>| slot.map(|s| row.cats[s] == 0).unwrap_or(false);

        for (i, ne) in enc.numeric.iter().enumerate() {
            if missing_by_indicator(ne.indicator_slot) {
                values[ne.attr] = Value::Missing;
                continue;
            }
            let raw = ne.quantile.decode(row.nums[i]);
            values[ne.attr] = match ne.datetime_origin {
                Some(origin) => Value::DateTime(origin + raw.round() as i64),
                None => Value::Number(raw),
            };
        }
        for (slot, ce) in enc.categorical.iter().enumerate() {
            match ce {
                CategoricalEncoder::DimRef { fk_pos, .. } => {
                    dim_refs.push((*fk_pos, row.cats[slot]));
                }
                CategoricalEncoder::Attr {
                    attr,
                    vocab,
                    sentinel_in_vocab,
                    indicator_slot,
                    ..
                } => {
                    let idx = row.cats[slot];
                    let decoded = if missing_by_indicator(*indicator_slot) {
                        Value::Missing
                    } else {
                        let cat = vocab.category(idx);
                        if *sentinel_in_vocab && cat == MISSING_SENTINEL {
                            Value::Missing
                        } else {
                            Value::Category(cat.to_string())
                        }
                    };
                    values[*attr] = decoded;
                }
                CategoricalEncoder::Indicator { .. } => {}
            }
        }
        (values, dim_refs)
    }
}

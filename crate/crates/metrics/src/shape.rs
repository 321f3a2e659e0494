use std::collections::BTreeMap;

use reldiff_core::Database;

use crate::columns::{categorical_values, is_numeric_kind, numeric_values};
use crate::{MetricError, Result};

/// Complement of the two-sample Kolmogorov-Smirnov statistic: one for
/// identical empirical distributions, zero for disjoint supports.
pub fn kst_score(real: &[f64], syn: &[f64]) -> Result<f64> {
    if real.is_empty() || syn.is_empty() {
        return Err(MetricError::EmptyInput("kst sample".into()));
    }
    let mut a = real.to_vec();
    let mut b = syn.to_vec();
    a.sort_by(|x, y| x.partial_cmp(y).expect("no NaN"));
    b.sort_by(|x, y| x.partial_cmp(y).expect("no NaN"));
    let (n, m) = (a.len() as f64, b.len() as f64);
    let mut sup: f64 = 0.0;
    let (mut i, mut j) = (0usize, 0usize);
    while i < a.len() || j < b.len() {
        // Advance past ties on the smaller current value.
        let v = match (a.get(i), b.get(j)) {
            (Some(&x), Some(&y)) => x.min(y),
            (Some(&x), None) => x,
            (None, Some(&y)) => y,
            (None, None) => break,
        };
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        sup = sup.max((i as f64 / n - j as f64 / m).abs());
    }
    Ok(1.0 - sup)
}

/// Complement of the total variation distance between category frequency
/// tables; categories absent from one side count with frequency zero.
pub fn tvd_score(real: &[String], syn: &[String]) -> Result<f64> {
    if real.is_empty() || syn.is_empty() {
        return Err(MetricError::EmptyInput("tvd sample".into()));
    }
    let mut freq: BTreeMap<&str, (f64, f64)> = BTreeMap::new();
    for c in real {
        freq.entry(c).or_default().0 += 1.0;
    }
    for c in syn {
        freq.entry(c).or_default().1 += 1.0;
    }
    let (n, m) = (real.len() as f64, syn.len() as f64);
    let tvd: f64 = freq
        .values()
        .map(|(r, s)| (r / n - s / m).abs())
        .sum::<f64>()
        / 2.0;
    Ok(1.0 - tvd)
}

pub struct TableShape {
    pub per_column: BTreeMap<String, f64>,
    pub mean: f64,
    pub skipped: Vec<String>,
}

/// Column-wise density similarity of one table: KS complement for numeric
/// and datetime columns, TVD complement for categoricals, averaged.
pub fn shape_score(real: &Database, syn: &Database, table: usize) -> Result<TableShape> {
    let spec = &real.schema.tables[table];
    let mut per_column = BTreeMap::new();
    let mut skipped = Vec::new();
    for (attr, col) in spec.attributes().enumerate() {
        let score = if is_numeric_kind(col.kind) {
            let r = numeric_values(real, table, attr);
            let s = numeric_values(syn, table, attr);
            if r.is_empty() || s.is_empty() {
                skipped.push(col.name.clone());
                continue;
            }
            kst_score(&r, &s)?
        } else {
            let r = categorical_values(real, table, attr);
            let s = categorical_values(syn, table, attr);
            if r.is_empty() || s.is_empty() {
                skipped.push(col.name.clone());
                continue;
            }
            tvd_score(&r, &s)?
        };
        per_column.insert(col.name.clone(), score);
    }
    if per_column.is_empty() {
        return Err(MetricError::EmptyInput(format!(
            "table `{}` has no scorable columns",
            spec.name
        )));
    }
    let mean = per_column.values().sum::<f64>() / per_column.len() as f64;
    Ok(TableShape {
        per_column,
        mean,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kst_examples() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(kst_score(&xs, &xs).unwrap(), 1.0);
        assert_eq!(kst_score(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap(), 0.0);
        // ECDF enumeration: sup difference 0.25 at v in [3, 4).
        let score = kst_score(&[1.0, 2.0, 3.0, 4.0], &[1.0, 2.0, 3.0, 8.0]).unwrap();
        assert!((score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn kst_symmetry() {
        let a = [0.3, 1.7, 2.0, 5.5];
        let b = [0.1, 1.7, 3.3];
        assert_eq!(kst_score(&a, &b).unwrap(), kst_score(&b, &a).unwrap());
    }

    #[test]
    fn tvd_examples() {
        let to = |xs: &[&str]| -> Vec<String> { xs.iter().map(|s| s.to_string()).collect() };
        assert_eq!(
            tvd_score(&to(&["a", "b"]), &to(&["b", "a"])).unwrap(),
            1.0
        );
        assert_eq!(tvd_score(&to(&["a", "a"]), &to(&["b", "b"])).unwrap(), 0.0);
        let score = tvd_score(&to(&["a", "a", "b", "b"]), &to(&["a", "a", "a", "b"])).unwrap();
        assert!((score - 0.75).abs() < 1e-12);
    }

    #[test]
    fn empty_inputs_error() {
        assert!(kst_score(&[], &[1.0]).is_err());
        assert!(tvd_score(&[], &["a".into()]).is_err());
    }

    /// Brute-force oracle: evaluate both ECDFs at every sample point.
    fn kst_brute(a: &[f64], b: &[f64]) -> f64 {
        let sup = a
            .iter()
            .chain(b)
            .map(|&v| {
                let fa = a.iter().filter(|&&x| x <= v).count() as f64 / a.len() as f64;
                let fb = b.iter().filter(|&&x| x <= v).count() as f64 / b.len() as f64;
                (fa - fb).abs()
            })
            .fold(0.0f64, f64::max);
        1.0 - sup
    }

    #[test]
    fn kst_matches_brute_force_on_all_small_inputs() {
        // Exhaustive over integer-valued samples of size <= 6 drawn from
        // {0,1,2} (every multiset combination, both sizes).
        let pool = [0.0, 1.0, 2.0];
        let mut samples: Vec<Vec<f64>> = vec![];
        fn build(pool: &[f64], cur: &mut Vec<f64>, out: &mut Vec<Vec<f64>>, max: usize) {
            if !cur.is_empty() {
                out.push(cur.clone());
            }
            if cur.len() == max {
                return;
            }
            let start = cur.last().copied().unwrap_or(f64::NEG_INFINITY);
            for &p in pool {
                if p >= start {
                    cur.push(p);
                    build(pool, cur, out, max);
                    cur.pop();
                }
            }
        }
        build(&pool, &mut Vec::new(), &mut samples, 4);
        for a in &samples {
            for b in &samples {
                let fast = kst_score(a, b).unwrap();
                let brute = kst_brute(a, b);
                assert!(
                    (fast - brute).abs() < 1e-12,
                    "{a:?} vs {b:?}: {fast} vs {brute}"
                );
            }
        }
    }

    /// Brute-force oracle for total variation over explicit category sets.
    fn tvd_brute(a: &[String], b: &[String]) -> f64 {
        let mut cats: Vec<&String> = a.iter().chain(b).collect();
        cats.sort();
        cats.dedup();
        let mut dist = 0.0;
        for c in cats {
            let fa = a.iter().filter(|x| *x == c).count() as f64 / a.len() as f64;
            let fb = b.iter().filter(|x| *x == c).count() as f64 / b.len() as f64;
            dist += (fa - fb).abs();
        }
        1.0 - dist / 2.0
    }

    #[test]
    fn tvd_matches_brute_force_on_all_small_inputs() {
        let pool = ["a", "b", "c"];
        let mut samples: Vec<Vec<String>> = vec![];
        for n in 1..=3usize {
            let total = pool.len().pow(n as u32);
            for idx in 0..total {
                let mut v = Vec::with_capacity(n);
                let mut rem = idx;
                for _ in 0..n {
                    v.push(pool[rem % pool.len()].to_string());
                    rem /= pool.len();
                }
                samples.push(v);
            }
        }
        for a in &samples {
            for b in &samples {
                let fast = tvd_score(a, b).unwrap();
                let brute = tvd_brute(a, b);
                assert!((fast - brute).abs() < 1e-12);
            }
        }
    }

    proptest::proptest! {
        #[test]
        fn kst_in_unit_interval_and_symmetric(
            a in proptest::collection::vec(-50i32..50, 1..40),
            b in proptest::collection::vec(-50i32..50, 1..40),
        ) {
            let a: Vec<f64> = a.into_iter().map(f64::from).collect();
            let b: Vec<f64> = b.into_iter().map(f64::from).collect();
            let s = kst_score(&a, &b).unwrap();
            proptest::prop_assert!((0.0..=1.0).contains(&s));
            proptest::prop_assert!((s - kst_score(&b, &a).unwrap()).abs() < 1e-12);
        }
    }
}

use std::collections::BTreeMap;

use reldiff_core::{Database, Value};

use crate::columns::{cell_categorical, cell_numeric, is_numeric_kind};
use crate::{MetricError, Result};

/// Pearson correlation; `None` when either column is constant.
fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len() as f64;
    if xs.len() < 2 {
        return None;
    }
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let mut cov = 0.0;
    let mut vx = 0.0;
    let mut vy = 0.0;
    for (x, y) in xs.iter().zip(ys) {
        cov += (x - mx) * (y - my);
        vx += (x - mx) * (x - mx);
        vy += (y - my) * (y - my);
    }
    if vx < 1e-24 || vy < 1e-24 {
        return None;
    }
    Some(cov / (vx.sqrt() * vy.sqrt()))
}

/// 1 - |rho_real - rho_syn| / 2; `None` when a correlation is undefined.
fn pearson_pair_score(real: (&[f64], &[f64]), syn: (&[f64], &[f64])) -> Option<f64> {
    let r = pearson(real.0, real.1)?;
    let s = pearson(syn.0, syn.1)?;
    Some(1.0 - (r - s).abs() / 2.0)
}

/// Contingency similarity: complement of the total variation distance
/// between the joint frequency tables.
fn contingency_score(real: &[(String, String)], syn: &[(String, String)]) -> f64 {
    let mut freq: BTreeMap<(&str, &str), (f64, f64)> = BTreeMap::new();
    for (a, b) in real {
        freq.entry((a, b)).or_default().0 += 1.0;
    }
    for (a, b) in syn {
        freq.entry((a, b)).or_default().1 += 1.0;
    }
    let n = real.len().max(1) as f64;
    let m = syn.len().max(1) as f64;
    let dist: f64 = freq
        .values()
        .map(|(r, s)| (r / n - s / m).abs())
        .sum::<f64>()
        / 2.0;
    1.0 - dist
}

/// Ten quantile bin edges fitted on the real column; both sides are binned
/// with the same edges.
fn quantile_bins(real: &[f64]) -> Vec<f64> {
    let mut sorted = real.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut edges = Vec::new();
    for i in 1..10 {
        let q = sorted[(i * sorted.len() / 10).min(sorted.len() - 1)];
        if edges.last().map_or(true, |&e| q > e) {
            edges.push(q);
        }
    }
    edges
}

fn bin_label(edges: &[f64], x: f64) -> String {
    format!("bin{}", edges.partition_point(|&e| e < x))
}

/// One scored column pair over aligned value tuples.
enum PairKind {
    NumNum,
    CatCat,
    NumCat { num_first: bool },
}

fn score_value_pair(
    kind: &PairKind,
    real: &[(Value, Value)],
    syn: &[(Value, Value)],
) -> Option<f64> {
    match kind {
        PairKind::NumNum => {
            let collect = |rows: &[(Value, Value)]| -> (Vec<f64>, Vec<f64>) {
                rows.iter()
                    .filter_map(|(a, b)| Some((cell_numeric(a)?, cell_numeric(b)?)))
                    .unzip()
            };
            let (rx, ry) = collect(real);
            let (sx, sy) = collect(syn);
            if rx.is_empty() || sx.is_empty() {
                return None;
            }
            pearson_pair_score((&rx, &ry), (&sx, &sy))
        }
        PairKind::CatCat => {
            let collect = |rows: &[(Value, Value)]| -> Vec<(String, String)> {
                rows.iter()
                    .map(|(a, b)| (cell_categorical(a), cell_categorical(b)))
                    .collect()
            };
            let (r, s) = (collect(real), collect(syn));
            if r.is_empty() || s.is_empty() {
                return None;
            }
            Some(contingency_score(&r, &s))
        }
        PairKind::NumCat { num_first } => {
            let nums: Vec<f64> = real
                .iter()
                .filter_map(|(a, b)| cell_numeric(if *num_first { a } else { b }))
                .collect();
            if nums.is_empty() {
                return None;
            }
            let edges = quantile_bins(&nums);
            let collect = |rows: &[(Value, Value)]| -> Vec<(String, String)> {
                rows.iter()
                    .filter_map(|(a, b)| {
                        let (num, cat) = if *num_first { (a, b) } else { (b, a) };
                        let x = cell_numeric(num)?;
                        Some((bin_label(&edges, x), cell_categorical(cat)))
                    })
                    .collect()
            };
            let (r, s) = (collect(real), collect(syn));
            if r.is_empty() || s.is_empty() {
                return None;
            }
            Some(contingency_score(&r, &s))
        }
    }
}

pub struct TrendOutcome {
    pub score: f64,
    pub pairs_scored: usize,
    pub pairs_skipped: usize,
}

/// Pairwise column-correlation similarity within one table: Pearson-based
/// for numeric pairs, contingency for categorical pairs, quantile-binned
/// contingency for mixed pairs; averaged over pairs. Pairs with an
/// undefined correlation (constant column) are skipped.
pub fn trend_score(real: &Database, syn: &Database, table: usize) -> Result<TrendOutcome> {
    let spec = &real.schema.tables[table];
    let cols: Vec<_> = spec.attributes().collect();
    if cols.len() < 2 {
        return Err(MetricError::NoColumnPairs);
    }
    let tuples = |db: &Database, i: usize, j: usize| -> Vec<(Value, Value)> {
        let t = &db.tables[table];
        (0..t.len())
            .map(|r| (t.columns[i][r].clone(), t.columns[j][r].clone()))
            .collect()
    };
    let mut scores = Vec::new();
    let mut skipped = 0;
    for i in 0..cols.len() {
        for j in (i + 1)..cols.len() {
            let kind = match (is_numeric_kind(cols[i].kind), is_numeric_kind(cols[j].kind)) {
                (true, true) => PairKind::NumNum,
                (false, false) => PairKind::CatCat,
                (true, false) => PairKind::NumCat { num_first: true },
                (false, true) => PairKind::NumCat { num_first: false },
            };
            match score_value_pair(&kind, &tuples(real, i, j), &tuples(syn, i, j)) {
                Some(s) => scores.push(s),
                None => skipped += 1,
            }
        }
    }
    if scores.is_empty() {
        return Err(MetricError::NoColumnPairs);
    }
    Ok(TrendOutcome {
        score: scores.iter().sum::<f64>() / scores.len() as f64,
        pairs_scored: scores.len(),
        pairs_skipped: skipped,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct Hop {
    link: usize,
    /// Child-to-parent when true.
    forward: bool,
}

/// All link paths of length k with no immediate reversal of the same link;
/// a path and its reversal describe the same join, so only one survives.
fn link_paths(db: &Database, k: usize) -> Vec<(usize, Vec<Hop>)> {
    let schema = &db.schema;
    let mut paths = Vec::new();
    let mut stack: Vec<Hop> = Vec::new();
    fn extend(
        schema: &reldiff_core::Schema,
        start: usize,
        at: usize,
        k: usize,
        stack: &mut Vec<Hop>,
        paths: &mut Vec<(usize, Vec<Hop>)>,
    ) {
        if stack.len() == k {
            paths.push((start, stack.clone()));
            return;
        }
        for (li, link) in schema.links.iter().enumerate() {
            for forward in [true, false] {
                let (from, to) = if forward {
                    (link.child, link.parent)
                } else {
                    (link.parent, link.child)
                };
                if from != at {
                    continue;
                }
                if let Some(last) = stack.last() {
                    if last.link == li && last.forward != forward {
                        continue; // immediate backtrack over the same link
                    }
                }
                stack.push(Hop { link: li, forward });
                extend(schema, start, to, k, stack, paths);
                stack.pop();
            }
        }
    }
    for start in 0..schema.tables.len() {
        extend(schema, start, start, k, &mut stack, &mut paths);
    }
    // A path and its reversal describe the same join; keep one of each.
    let key = |start: usize, hops: &[Hop]| -> (usize, Vec<(usize, bool)>) {
        (start, hops.iter().map(|h| (h.link, h.forward)).collect())
    };
    let mut seen: Vec<(usize, Vec<(usize, bool)>)> = Vec::new();
    let mut out = Vec::new();
    for (start, hops) in paths {
        let end = hops.iter().fold(start, |at, h| {
            let link = &schema.links[h.link];
            debug_assert_eq!(if h.forward { link.child } else { link.parent }, at);
            if h.forward {
                link.parent
            } else {
                link.child
            }
        });
        let reversed: Vec<Hop> = hops
            .iter()
            .rev()
            .map(|h| Hop {
                link: h.link,
                forward: !h.forward,
            })
            .collect();
        let canonical = key(start, &hops).min(key(end, &reversed));
        if seen.contains(&canonical) {
            continue;
        }
        seen.push(canonical);
        out.push((start, hops));
    }
    out
}

/// Joined (start_row, end_row) multiset along a path.
fn join_pairs(db: &Database, start: usize, hops: &[Hop]) -> (usize, Vec<(u32, u32)>) {
    let schema = &db.schema;
    let mut pairs: Vec<(u32, u32)> = (0..db.tables[start].len() as u32)
        .map(|r| (r, r))
        .collect();
    let mut at = start;
    for hop in hops {
        let link = &schema.links[hop.link];
        let fk_pos = schema
            .links_from(link.child)
            .position(|(li, _)| li == hop.link)
            .expect("link of child");
        let parent_of = &db.tables[link.child].fk_parent_rows[fk_pos];
        if hop.forward {
            // child -> parent: map each end row to its parent.
            pairs = pairs
                .into_iter()
                .map(|(s, e)| (s, parent_of[e as usize]))
                .collect();
            at = link.parent;
        } else {
            // parent -> children: expand.
            let mut children: Vec<Vec<u32>> = vec![Vec::new(); db.tables[link.parent].len()];
            for (child, &parent) in parent_of.iter().enumerate() {
                children[parent as usize].push(child as u32);
            }
            let mut next = Vec::new();
            for (s, e) in pairs {
                for &c in &children[e as usize] {
                    next.push((s, c));
                }
            }
            pairs = next;
            at = link.child;
        }
    }
    (at, pairs)
}

/// Correlation similarity across tables joined along every foreign-key path
/// of length k, averaged over all (path, column pair) scores. Column pairs
/// span the two end tables of each path.
pub fn khop_trend(real: &Database, syn: &Database, k: usize) -> Result<TrendOutcome> {
    if k == 0 {
        return Err(MetricError::NoPath(0));
    }
    let paths = link_paths(real, k);
    if paths.is_empty() {
        return Err(MetricError::NoPath(k));
    }
    let mut scores = Vec::new();
    let mut skipped = 0;
    for (start, hops) in &paths {
        let (end_r, pairs_r) = join_pairs(real, *start, hops);
        let (end_s, pairs_s) = join_pairs(syn, *start, hops);
        debug_assert_eq!(end_r, end_s);
        if pairs_r.is_empty() || pairs_s.is_empty() {
            continue;
        }
        let start_cols: Vec<_> = real.schema.tables[*start].attributes().collect();
        let end_cols: Vec<_> = real.schema.tables[end_r].attributes().collect();
        for (i, ci) in start_cols.iter().enumerate() {
            for (j, cj) in end_cols.iter().enumerate() {
                let tuples = |db: &Database, pairs: &[(u32, u32)]| -> Vec<(Value, Value)> {
                    pairs
                        .iter()
                        .map(|&(s, e)| {
                            (
                                db.tables[*start].columns[i][s as usize].clone(),
                                db.tables[end_r].columns[j][e as usize].clone(),
                            )
                        })
                        .collect()
                };
                let kind = match (is_numeric_kind(ci.kind), is_numeric_kind(cj.kind)) {
                    (true, true) => PairKind::NumNum,
                    (false, false) => PairKind::CatCat,
                    (true, false) => PairKind::NumCat { num_first: true },
                    (false, true) => PairKind::NumCat { num_first: false },
                };
                match score_value_pair(&kind, &tuples(real, &pairs_r), &tuples(syn, &pairs_s)) {
                    Some(s) => scores.push(s),
                    None => skipped += 1,
                }
            }
        }
    }
    if scores.is_empty() {
        return Err(MetricError::NoColumnPairs);
    }
    Ok(TrendOutcome {
        score: scores.iter().sum::<f64>() / scores.len() as f64,
        pairs_scored: scores.len(),
        pairs_skipped: skipped,
    })
}

/// Largest k for which a foreign-key path exists (bounded probe).
pub fn max_hop_depth(db: &Database, cap: usize) -> usize {
    (1..=cap)
        .take_while(|&k| !link_paths(db, k).is_empty())
        .count()
}

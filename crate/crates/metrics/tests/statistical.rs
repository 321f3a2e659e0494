//! Statistical and end-to-end behavior of the metric suite on constructed
//! databases with known ground truth.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use reldiff_core::schema::schema_from_json;
use reldiff_core::{load_database, Database, Schema};
use reldiff_metrics::{
    c2st, c2st_agg, dcr_score, evaluate, khop_trend, trend_score, C2stConfig, EvalConfig,
};
use std::fmt::Write as _;

fn one_table_schema() -> Schema {
    schema_from_json(
        r#"{"tables": [
          {"name": "t", "primary_key": "id",
           "columns": [{"name": "x", "type": "numerical"},
                        {"name": "y", "type": "numerical"},
                        {"name": "c", "type": "categorical"}]}
        ]}"#,
    )
    .unwrap()
}

/// Rows with correlated numerics and a categorical tied to x's sign.
fn one_table_db(n: usize, rho: f64, shift: f64, seed: u64) -> Database {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut csv = String::from("id,x,y,c\n");
    for i in 0..n {
        let x: f64 = StandardNormal.sample(&mut rng);
        let e: f64 = StandardNormal.sample(&mut rng);
        let y = rho * x + (1.0 - rho * rho).sqrt() * e + shift;
        let c = if x > 0.0 { "pos" } else { "neg" };
        writeln!(csv, "{i},{x},{y},{c}").unwrap();
    }
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("t.csv"), csv).unwrap();
    load_database(&one_table_schema(), dir.path()).unwrap()
}

#[test]
fn trend_examples() {
    // Identical tables: 1.0.
    let a = one_table_db(400, 0.5, 0.0, 1);
    let t = trend_score(&a, &a, 0).unwrap();
    assert_eq!(t.score, 1.0);

    // rho_real about 0.5, rho_syn about 0.1: pair score about 0.8 for the
    // numeric pair.
    let b = one_table_db(4000, 0.1, 0.0, 2);
    let big = one_table_db(4000, 0.5, 0.0, 3);
    let t = trend_score(&big, &b, 0).unwrap();
    assert!(t.pairs_scored >= 3);
    // The num-num pair dominates deviation; the mixed pairs stay high, so
    // the mean sits above the worst pair but visibly below 1.
    assert!(t.score < 0.97 && t.score > 0.75, "score {}", t.score);

    // Opposite correlations score zero on the numeric pair.
    let up = one_table_db(3000, 0.95, 0.0, 4);
    let down = one_table_db(3000, -0.95, 0.0, 5);
    let t = trend_score(&up, &down, 0).unwrap();
    assert!(t.score < 0.75, "mean including the 0-ish pair: {}", t.score);
}

fn parent_child_dbs(shuffle_fk: bool, seed: u64) -> (Database, Database) {
    let schema = schema_from_json(
        r#"{"tables": [
          {"name": "p", "primary_key": "pid",
           "columns": [{"name": "v", "type": "numerical"},
                        {"name": "w", "type": "numerical"}]},
          {"name": "c", "primary_key": "cid",
           "columns": [{"name": "u", "type": "numerical"},
                        {"name": "z", "type": "numerical"}],
           "foreign_keys": [{"column": "pid", "references_table": "p",
                             "references_column": "pid"}]}
        ]}"#,
    )
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_parents = 300;
    let per_parent = 4;
    let build = |shuffle: bool, rng: &mut ChaCha8Rng| -> Database {
        let mut parents = String::from("pid,v,w\n");
        let values: Vec<f64> = (0..n_parents).map(|_| StandardNormal.sample(rng)).collect();
        for (i, v) in values.iter().enumerate() {
            let w: f64 = StandardNormal.sample(rng);
            writeln!(parents, "{i},{v},{w}").unwrap();
        }
        let mut children = String::from("cid,pid,u,z\n");
        let mut assignment: Vec<usize> = (0..n_parents)
            .flat_map(|p| std::iter::repeat(p).take(per_parent))
            .collect();
        if shuffle {
            use rand::seq::SliceRandom;
            assignment.shuffle(rng);
        }
        for (i, &p) in assignment.iter().enumerate() {
            // Child value copies the ORIGINAL i-th slot's parent value, so
            // shuffling the assignment breaks the 1-hop correlation while
            // leaving both marginals untouched.
            let source_parent = i / per_parent;
            let u = values[source_parent];
            let z: f64 = StandardNormal.sample(rng);
            writeln!(children, "{i},{p},{u},{z}").unwrap();
        }
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("p.csv"), parents).unwrap();
        std::fs::write(dir.path().join("c.csv"), children).unwrap();
        load_database(&schema, dir.path()).unwrap()
    };
    let real = build(false, &mut rng);
    let syn = build(shuffle_fk, &mut rng);
    (real, syn)
}

#[test]
fn khop_detects_broken_wiring() {
    // Same marginals, shuffled foreign keys: the 1-hop score drops well
    // below the aligned case while the per-table shape stays equal.
    let (real, aligned) = parent_child_dbs(false, 10);
    let (_, shuffled) = parent_child_dbs(true, 11);

    let khop_aligned = khop_trend(&real, &aligned, 1).unwrap().score;
    let khop_shuffled = khop_trend(&real, &shuffled, 1).unwrap().score;
    assert!(
        khop_shuffled < khop_aligned - 0.05,
        "aligned {khop_aligned} vs shuffled {khop_shuffled}"
    );

    let shape_aligned = reldiff_metrics::shape_score(&real, &aligned, 1).unwrap().mean;
    let shape_shuffled = reldiff_metrics::shape_score(&real, &shuffled, 1)
        .unwrap()
        .mean;
    assert!((shape_aligned - shape_shuffled).abs() < 0.05);
}

#[test]
fn khop_errors_beyond_schema_depth() {
    let (real, syn) = parent_child_dbs(false, 12);
    // Depth-2 schema: only 1-hop paths exist (2-hop would need a second
    // link; the sibling path reverses the same link immediately).
    assert!(khop_trend(&real, &syn, 5).is_err());
}

#[test]
fn c2st_calibration_and_detection() {
    let cfg = C2stConfig::default();
    // Real vs a disjoint half of real: indistinguishable, accuracy near 0.5.
    let whole = one_table_db(2000, 0.4, 0.0, 20);
    let acc = reldiff_metrics::c2st::c2st_self_split(&whole, 0, &cfg).unwrap();
    assert!((acc - 0.5).abs() <= 0.05, "self-split accuracy {acc}");

    // A constant shift of one numeric column is trivially separable.
    let real = one_table_db(1000, 0.4, 0.0, 21);
    let shifted = one_table_db(1000, 0.4, 100.0, 22);
    let acc = c2st(&real, &shifted, 0, &cfg).unwrap();
    assert!(acc >= 0.95, "shifted accuracy {acc}");

    // A verbatim copy is indistinguishable.
    let acc = c2st(&real, &real, 0, &cfg).unwrap();
    assert!((acc - 0.5).abs() <= 0.05, "copy accuracy {acc}");

    // Too few rows errors.
    let tiny = one_table_db(20, 0.4, 0.0, 23);
    assert!(c2st(&tiny, &tiny, 0, &cfg).is_err());
}

#[test]
fn c2st_agg_sees_wiring_that_plain_c2st_cannot() {
    // Child mean correlates with the parent column; the synthetic side has
    // perfect marginals but random wiring. The aggregated test must detect
    // it strictly better than the plain parent-table test.
    let (real, shuffled) = parent_child_dbs(true, 30);
    let cfg = C2stConfig::default();
    let plain = c2st(&real, &shuffled, 0, &cfg).unwrap();
    let agg = c2st_agg(&real, &shuffled, &cfg).unwrap()["p"];
    assert!(
        agg > plain + 0.1,
        "aggregated {agg} should beat plain {plain}"
    );
    assert!(agg > 0.8, "aggregated detection {agg}");
}

#[test]
fn dcr_endpoints_and_calibration() {
    let train = one_table_db(600, 0.5, 0.0, 40);
    let holdout = one_table_db(600, 0.5, 0.0, 41);

    // Synthetic = copy of train: every nearest neighbor is in train.
    let out = dcr_score(&train, &train, &holdout).unwrap();
    assert_eq!(out.per_table["t"], 1.0);

    // Synthetic = copy of holdout: never closest to train.
    let out = dcr_score(&holdout, &train, &holdout).unwrap();
    assert_eq!(out.per_table["t"], 0.0);

    // All three i.i.d. from the same distribution: 0.5 within 0.03 at
    // n = 2000.
    let train = one_table_db(2000, 0.5, 0.0, 42);
    let holdout = one_table_db(2000, 0.5, 0.0, 43);
    let syn = one_table_db(2000, 0.5, 0.0, 44);
    let out = dcr_score(&syn, &train, &holdout).unwrap();
    let score = out.per_table["t"];
    assert!((score - 0.5).abs() <= 0.03, "iid dcr {score}");
    assert!(out.size_warning.is_none());

    // Mismatched sizes warn.
    let small_holdout = one_table_db(500, 0.5, 0.0, 45);
    let out = dcr_score(&syn, &train, &small_holdout).unwrap();
    assert!(out.size_warning.is_some());
}

#[test]
fn full_report_on_identity_is_perfect() {
    let (real, syn) = parent_child_dbs(false, 50);
    let report = evaluate(&real, &real, None, &EvalConfig::default()).unwrap();
    assert_eq!(report.shape_mean, Some(1.0));
    assert_eq!(report.trend_mean, Some(1.0));
    assert_eq!(report.cardinality_mean, Some(1.0));
    assert_eq!(report.khop["1-hop"], 1.0);
    for (_, acc) in report.c2st.iter().chain(report.c2st_agg.iter()) {
        assert!((acc - 0.5).abs() <= 0.06, "identity c2st {acc}");
    }
    // JSON-serializable.
    let text = serde_json::to_string(&report).unwrap();
    assert!(text.contains("\"cardinality\""));
    let _ = syn;
}

#[test]
fn c2st_real_vs_real_stable_over_seeds() {
    // Twenty seeds of split-half calibration all live in [0.45, 0.55].
    let db = one_table_db(2000, 0.3, 0.0, 60);
    for seed in 0..20 {
        let cfg = C2stConfig {
            seed,
            ..C2stConfig::default()
        };
        let acc = reldiff_metrics::c2st::c2st_self_split(&db, 0, &cfg).unwrap();
        assert!(
            (0.45..=0.55).contains(&acc),
            "seed {seed}: accuracy {acc}"
        );
    }
}

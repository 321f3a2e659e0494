use reldiff_core::schema::schema_from_json;
use reldiff_core::{load_database, Database, Schema};
use std::fmt::Write as _;

pub fn store_sales_schema() -> Schema {
    schema_from_json(
        r#"{"tables": [
          {"name": "store", "primary_key": "sid",
           "columns": [{"name": "size", "type": "numerical"},
                        {"name": "zone", "type": "categorical"}]},
          {"name": "sales", "primary_key": "id",
           "columns": [{"name": "amount", "type": "numerical"},
                        {"name": "kind", "type": "categorical"}],
           "foreign_keys": [{"column": "sid", "references_table": "store",
                             "references_column": "sid"}]}
        ]}"#,
    )
    .unwrap()
}

/// Snowflake toy: `n_stores` components, `per_store` sales each, with a
/// planted correlation between store size and sale amounts.
pub fn toy_db(n_stores: usize, per_store: usize) -> Database {
    let schema = store_sales_schema();
    let dir = tempfile::tempdir().unwrap();
    let mut store_csv = String::from("sid,size,zone\n");
    let mut sales_csv = String::from("id,sid,amount,kind\n");
    let mut sale_id = 0usize;
    for s in 0..n_stores {
        let size = (s as f64 * 0.7).sin() * 2.0;
        let zone = if size > 0.0 { "north" } else { "south" };
        writeln!(store_csv, "s{s},{size},{zone}").unwrap();
        for k in 0..per_store {
            let noise = ((s * 31 + k * 7) as f64 * 0.913).sin() * 0.5;
            let amount = 0.8 * size + noise;
            let kind = if amount > 0.0 { "big" } else { "small" };
            writeln!(sales_csv, "x{sale_id},s{s},{amount},{kind}").unwrap();
            sale_id += 1;
        }
    }
    std::fs::write(dir.path().join("store.csv"), store_csv).unwrap();
    std::fs::write(dir.path().join("sales.csv"), sales_csv).unwrap();
    load_database(&schema, dir.path()).unwrap()
}

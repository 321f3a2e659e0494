use thiserror::Error;

/// Errors raised while loading, validating or reassembling relational data.
#[derive(Debug, Error)]
pub enum CoreError {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("schema parse failure: {0}")]
    SchemaParse(String),

    #[error("dangling reference: {table}.{column} references unknown {target}")]
    DanglingReference {
        table: String,
        column: String,
        target: String,
    },

    #[error("duplicate table name `{0}`")]
    DuplicateTable(String),

    #[error("duplicate column name `{column}` in table `{table}`")]
    DuplicateColumn { table: String, column: String },

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("missing data file for table `{table}`: {path}")]
    MissingFile { table: String, path: String },

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error("table `{table}` row {row}: duplicate primary key `{key}`")]
    DuplicatePrimaryKey {
        table: String,
        row: usize,
        key: String,
    },

    #[error(
        "referential integrity violation: {table}.{column} row {row} references \
         `{key}` which is not a primary key of `{parent}`"
    )]
    UnresolvedForeignKey {
        table: String,
        column: String,
        row: usize,
        key: String,
        parent: String,
    },

    #[error("table `{table}` row {row}, column `{column}`: cannot parse `{cell}` as {kind}")]
    BadCell {
        table: String,
        row: usize,
        column: String,
        cell: String,
        kind: String,
    },

    #[error("table `{table}` row {row}, column `{column}`: missing value not allowed here")]
    MissingValue {
        table: String,
        row: usize,
        column: String,
    },

    #[error("numeric column `{table}.{column}` has zero non-missing values")]
    EmptyNumericColumn { table: String, column: String },

    #[error("categorical column `{table}.{column}` has zero non-missing values")]
    EmptyCategoricalColumn { table: String, column: String },

    #[error("unknown category `{value}` for column `{table}.{column}`")]
    UnknownCategory {
        table: String,
        column: String,
        value: String,
    },

    #[error("assembly error: {0}")]
    Assembly(String),

    #[error("graph error: {0}")]
    Graph(String),
}

//! Relational data model for the synthesizer pipeline.
//!
//! This crate owns everything that touches raw relational data: schema
//! definitions and their JSON format, CSV ingestion with referential
//! integrity checks, the heterogeneous row-level entity graph, the
//! many-to-many junction transform, reassembly of generated graphs into
//! tables, and the reversible per-column encoders that map mixed-type
//! attributes into the numeric/categorical coordinates the diffusion
//! model operates on.

pub mod assemble;
pub mod database;
pub mod encoders;
pub mod error;
pub mod graph;
pub mod rng;
pub mod schema;
pub mod value;

pub use assemble::assemble_database;
pub use database::{load_database, Database, TableData};
pub use encoders::{
    fit_encoders, CategoryVocab, DimensionLookup, EncodedRow, EncoderSet, MissingPolicy,
    QuantileEncoder,
};
pub use error::CoreError;
pub use graph::{
    build_entity_graph, m2m_invert, m2m_transform, EntityGraph, M2MTransformLog, Relation,
    RelationKind,
};
pub use schema::{load_schema, ColumnKind, ColumnSpec, LinkSpec, Schema, TableSpec};
pub use value::Value;

pub type Result<T> = std::result::Result<T, CoreError>;

//! Instance sources: a seeded synthetic generator and a CSV ingester for
//! transaction-style datasets.

mod generator;
mod ingest;

use thiserror::Error;

pub use generator::{generate, generate_instance, GeneratorConfig, RatioMode};
pub use ingest::{
    ingest_transactions, ingest_transactions_files, EnergyColumns, IngestReport, MappingConfig,
    TransactionColumns,
};

#[derive(Debug, Error)]
pub enum WorkloadError {
    #[error("invalid generator parameter: {0}")]
    Parameter(String),
    #[error("{file} is empty")]
    EmptyFile { file: &'static str },
    #[error("{file} has no column `{column}`")]
    MissingColumn { file: &'static str, column: String },
    #[error("{file} row {row}, column `{column}`: {message}")]
    BadValue {
        file: &'static str,
        row: usize,
        column: String,
        message: String,
    },
    #[error("{file}: {source}")]
    Csv {
        file: &'static str,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

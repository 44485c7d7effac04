//! Schema, microdata ingestion, restructuring and the one-hot codec.

pub mod encoding;
pub mod marginals;
pub mod records;
pub mod schema;

pub use encoding::{
    decode_onehot, decode_onehot_with, encode_onehot, encode_person_rows, ColumnGroup, ColumnLayout,
    DecodeMode, DecodeOptions, DecodeStats, EncodedMatrix, GroupOwner,
};
pub use marginals::{empirical_marginals, load_target_marginals, read_target_marginals, Marginals, TargetMarginals};
pub use records::{
    load_microdata, read_microdata, restructure, sort_persons, HouseholdRecord, Microdata, Person, RestructuredRow,
    RestructuredTable,
};
pub use schema::{load_schema, parse_schema, Schema, SortKey, Variable, NA};

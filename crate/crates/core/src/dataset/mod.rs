//! Feature datasets: validated containers, file formats and stratified
//! partitioning.

mod io;
mod matrix;
mod split;

pub use io::{
    decode_binary, encode_binary, format_csv, load_features, load_features_with_classes, parse_csv,
    CsvPrecision, FeatureFormat, BINARY_MAGIC, BINARY_VERSION,
};
pub use matrix::{Dataset, FeatureMatrix, LabelMapping, LabelVector};
pub use split::{stratified_kfold, stratified_split, test_count, FoldAssignment, SplitSpec};

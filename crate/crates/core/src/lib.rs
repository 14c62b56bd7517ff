//! Corpus preparation and span-level evaluation for multi-source PII token
//! classification.

pub mod analysis;
pub mod biospan;
pub mod cli;
pub mod ingest;
pub mod labelspace;
pub mod objective;
pub mod pipeline;
pub mod record;
pub mod scorer;

pub use biospan::{extract_spans, Span};
pub use labelspace::{parse_bio_label, BioLabel, CoarseGroup, EntityType, LabelSpace};
pub use record::Record;

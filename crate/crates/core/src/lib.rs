//! Chart-metadata dataset synthesis.
//!
//! Raw CSV tables go through a fixed chain of stages:
//!
//! 1. [`ingest`] parses, profiles and cleans each table.
//! 2. [`recommend`] splits a clean table into scored [`ChartSpec`]s.
//! 3. [`slice`] materializes the data each chart shows, and [`codegen`]
//!    transpiles spec + slice into three chart grammars.
//! 4. [`analysis`] computes the ten low-level statistical facts.
//! 5. [`caption`] writes an overview/analysis caption pair per chart.
//! 6. [`cards`] bundles everything into metadata cards and exports the five
//!    downstream-task JSONL files.
//!
//! [`eval`] holds the metric engine used to score model outputs against
//! those exports, and [`review`] implements the human caption-review gate.
//! [`pipeline`] wires the stages over an on-disk workspace.

pub mod analysis;
pub mod caption;
pub mod cards;
pub mod codegen;
pub mod eval;
pub mod format;
pub mod ingest;
pub mod pipeline;
pub mod recommend;
pub mod review;
pub mod slice;
pub mod workspace;

pub use analysis::{AnalysisFact, ChartFacts, FactKind, FactTarget, FactValue, Trend};
pub use caption::{CaptionGenerator, CaptionPair, LlmEndpointConfig};
pub use cards::{CodeEntry, MetadataCard, ReviewStatus, Task, TaskExample};
pub use codegen::{CodeArtifact, CodeGrammar, VisualElements};
pub use eval::{Embedding, EvalReport, RankedList};
pub use ingest::{CleanTable, ColumnKind, ColumnProfile, RawTable};
pub use pipeline::PipelineConfig;
pub use recommend::{Aggregate, ChartSpec, ChartType, FieldEncoding, MarkFlags, RecommendConfig};
pub use review::{Rating, ReviewStore, ReviewVerdict, Scores};
pub use slice::{CellValue, DataSlice, SliceColumn};

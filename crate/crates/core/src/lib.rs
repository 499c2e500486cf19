//! Evaluation harness for retrieval-augmented dialog generation: corpus
//! filtering, BM25 retrieval, prompt assembly, model gateways, auto-metrics,
//! experiment grids and plots.

pub mod corpus;
pub mod gridlab;
pub mod metrics;
pub mod modelgw;
pub mod plots;
pub mod promptkit;
pub mod retrieval;
pub mod seed;
pub mod text;

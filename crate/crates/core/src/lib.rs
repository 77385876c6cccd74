pub mod annotation;
pub mod corpus;
pub mod dialogue;
pub mod ontology;
pub mod prompt;
pub mod retry;
pub mod llm;
pub mod pipeline;
pub mod metrics;
pub mod review;
pub mod config;

//! ragforge core: builds post-cutoff question/article datasets from
//! Wikipedia, answers them with no-RAG / naive-RAG / boolean-agent-RAG
//! strategies, scores the answers with an LLM judge, and reports scores
//! alongside exact token accounting.

pub mod chunk;
pub mod dataset;
pub mod gateway;
pub mod judge;
pub mod pipeline;
pub mod report;
pub mod store;
pub mod strategy;
pub mod testkit;
pub mod wiki;

pub mod nn;
pub mod metrics;
pub mod event_store;
pub mod prompting;
pub mod embedding;
pub mod op_ranking;
pub mod op_generative;
pub mod mef;
pub mod pipeline;

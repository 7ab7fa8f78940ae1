//! Task synthesis: feature trees, task formulation, input generation,
//! candidate sampling and verification against a pluggable provider.

pub mod feature_tree;
pub mod formulate;
pub mod provider;
pub mod run;

use thiserror::Error;

pub use feature_tree::{merge_trees, sample_subtree, FeatureTree, FeatureTreeError};
pub use formulate::{formulate_task, generate_inputs, parse_structured, InputMethod, DEFAULT_MAX_ATTEMPTS};
pub use provider::{
    FixtureProvider, HttpProvider, HttpProviderConfig, Provider, ProviderError, ProviderRequest, RateLimited,
    ScriptedProvider,
};
pub use run::{run_pipeline, PipelineConfig, ProviderConfig, RunReport, StyleMix, TaskRecord};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("task `{task}`: provider reply for `{kind}` unusable after {attempts} attempts: {last_error}")]
    ProviderFormat { task: String, kind: String, attempts: u32, last_error: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Testgen(#[from] crate::testgen::TestgenError),
    #[error(transparent)]
    Sandbox(#[from] crate::sandbox::SandboxError),
    #[error(transparent)]
    Consensus(#[from] crate::consensus::ConsensusError),
    #[error(transparent)]
    Verify(#[from] crate::verifier::VerifyError),
    #[error(transparent)]
    FeatureTree(#[from] FeatureTreeError),
    #[error("invalid pipeline config: {0}")]
    Config(String),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

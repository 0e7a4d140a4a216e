pub mod agent;
pub mod envs;
pub mod error;
pub mod grounding;
pub mod harness;
pub mod induction;
pub mod llm_client;
pub mod neural;
pub mod replay;
pub mod sampling;

pub use error::{Error, Result};

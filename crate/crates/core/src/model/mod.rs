//! The PASTEL architecture: a causal decoder over interleaved
//! (specification, state, action) token triplets, with specification
//! cross-attention. The PACT ablation replaces specification positions with a
//! learned null token and disables cross-attention and the relevance loss.

mod checkpoint;
mod config;
mod loss;
mod net;
mod params;
mod rollout;

pub use checkpoint::{
    from_bytes as checkpoint_from_bytes, load_checkpoint, save_checkpoint,
    to_bytes as checkpoint_to_bytes, CheckpointError, LoadedModel,
};
pub use config::{ModelConfig, SpecConditioning};
pub use loss::{cosine_grads, sample_loss_graph, spec_relevance, state_action_error, SampleLoss};
pub use net::{position_labels, ForwardOutput, Model, ModelError, Phase, SampleInput};
pub use params::{BoundParams, ParamSet};
pub use rollout::{rollout, RolloutError, RolloutMode};

use serde::{Deserialize, Serialize};

/// Architecture hyperparameters. `ablation = true` selects the PACT mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    /// Specification token embedding width before projection.
    pub d_tok: usize,
    /// Largest supported specification horizon; fixes the positional table
    /// (3 * h_max rows) and the integer token range.
    pub h_max: usize,
    /// Longest specification token stream the embedder accepts; fixes the
    /// spec positional table. Token order matters (swapping two region names
    /// must change the embedding), so spec tokens get positions too.
    pub max_spec_tokens: usize,
    pub dropout: f64,
    /// PACT mode: null specification token, no cross-attention, no relevance
    /// loss.
    pub ablation: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            d_model: 64,
            n_heads: 4,
            n_layers: 3,
            d_tok: 32,
            h_max: 32,
            max_spec_tokens: 128,
            dropout: 0.1,
            ablation: false,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<(), String> {
        if self.d_model == 0 || self.n_heads == 0 || self.n_layers == 0 || self.d_tok == 0 {
            return Err("model dimensions must be positive".into());
        }
        if self.d_model % self.n_heads != 0 {
            return Err(format!(
                "d_model {} must be divisible by n_heads {}",
                self.d_model, self.n_heads
            ));
        }
        if self.h_max == 0 {
            return Err("h_max must be positive".into());
        }
        if self.max_spec_tokens == 0 {
            return Err("max_spec_tokens must be positive".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(format!("dropout {} must be in [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

/// How the specification slot of each timestep triplet is filled.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum SpecConditioning {
    /// Vocabulary ids of the linearized specification.
    Tokens(Vec<usize>),
    /// The learned null token (what the PACT ablation always sees).
    Null,
}

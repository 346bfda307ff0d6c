use serde::{Deserialize, Serialize};

use super::ModelError;

/// Form of the per-entry sentence-similarity penalty.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SentLoss {
    /// `max(|sim_s - sim_y|, Δ)`: a constant floor inside the margin.
    #[default]
    Floor,
    /// `max(|sim_s - sim_y| - Δ, 0)`.
    Hinge,
}

/// The four ablations of the full model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Ablation {
    /// Drop the contextualising module.
    Cm,
    /// Drop the sentence-similarity loss.
    Sen,
    /// Feed an empty leading context.
    Leading,
    /// Feed an empty event plan.
    Events,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::Cm,
        Ablation::Sen,
        Ablation::Leading,
        Ablation::Events,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Ablation::Cm => "cm",
            Ablation::Sen => "sen",
            Ablation::Leading => "leading",
            Ablation::Events => "events",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub layers: usize,
    pub heads: usize,
    pub model_dim: usize,
    pub ffn_dim: usize,
    pub vocab_size: usize,
    pub max_positions: usize,
    /// Number of `[sep_i]` tokens, i.e. the most sentences per target.
    pub max_sentences: usize,
    pub beta: f64,
    pub delta: f64,
    pub lambda: f64,
    pub sent_loss: SentLoss,
    pub dropout: f64,
    pub init_std: f64,
    pub use_cm: bool,
    pub use_sen: bool,
    pub use_leading: bool,
    pub use_events: bool,
    /// Encode the leading context and the serialised events together in the
    /// context encoder. Used for encoder-transfer donors.
    pub combined_input: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            layers: 2,
            heads: 4,
            model_dim: 64,
            ffn_dim: 128,
            vocab_size: 4096,
            max_positions: 1024,
            max_sentences: 10,
            beta: 0.1,
            delta: 0.1,
            lambda: 0.1,
            sent_loss: SentLoss::Floor,
            dropout: 0.1,
            init_std: 0.02,
            use_cm: true,
            use_sen: true,
            use_leading: true,
            use_events: true,
            combined_input: false,
        }
    }
}

impl ModelConfig {
    pub fn d_k(&self) -> usize {
        self.model_dim / self.heads
    }

    pub fn validate(&self) -> Result<(), ModelError> {
        let bad = |msg: &str| Err(ModelError::Config(msg.into()));
        if self.heads == 0 || self.model_dim == 0 || !self.model_dim.is_multiple_of(self.heads) {
            return bad("model_dim must be a positive multiple of heads");
        }
        if self.layers == 0 || self.ffn_dim == 0 || self.vocab_size == 0 || self.max_positions == 0
        {
            return bad("layers, ffn_dim, vocab_size and max_positions must be positive");
        }
        for (name, v) in [
            ("beta", self.beta),
            ("delta", self.delta),
            ("lambda", self.lambda),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ModelError::Config(alloc::format!(
                    "{name} must be finite and >= 0"
                )));
            }
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad("dropout must lie in [0, 1)");
        }
        Ok(())
    }

    pub fn apply(&mut self, ablation: Ablation) {
        match ablation {
            Ablation::Cm => self.use_cm = false,
            Ablation::Sen => self.use_sen = false,
            Ablation::Leading => self.use_leading = false,
            Ablation::Events => self.use_events = false,
        }
    }

    /// Ablations currently switched off, in canonical order.
    pub fn ablations(&self) -> alloc::vec::Vec<Ablation> {
        Ablation::ALL
            .into_iter()
            .filter(|a| !match a {
                Ablation::Cm => self.use_cm,
                Ablation::Sen => self.use_sen,
                Ablation::Leading => self.use_leading,
                Ablation::Events => self.use_events,
            })
            .collect()
    }
}

use serde::{Deserialize, Serialize};

use super::EncoderError;

/// Pre-training hyperparameters plus encoder dimensions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub max_seq_length: usize,
    pub max_predictions_per_seq: usize,
    pub masked_lm_prob: f64,
    pub train_batch_size: usize,
    pub num_warmup_steps: usize,
    pub num_train_steps: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub num_layers: usize,
    pub seed: u64,
}

impl EncoderConfig {
    /// Desk-scale defaults for the toy encoder.
    pub fn toy() -> Self {
        EncoderConfig {
            max_seq_length: 128,
            max_predictions_per_seq: 20,
            masked_lm_prob: 0.15,
            train_batch_size: 32,
            num_warmup_steps: 20,
            num_train_steps: 200,
            learning_rate: 0.5,
            hidden_dim: 64,
            num_layers: 4,
            seed: 0,
        }
    }

    fn bert_base(num_warmup_steps: usize, num_train_steps: usize) -> Self {
        EncoderConfig {
            max_seq_length: 128,
            max_predictions_per_seq: 20,
            masked_lm_prob: 0.15,
            train_batch_size: 32,
            num_warmup_steps,
            num_train_steps,
            learning_rate: 2e-5,
            hidden_dim: 768,
            num_layers: 12,
            seed: 0,
        }
    }

    /// Keyword-filtered prototype run.
    pub fn keyword_prototype() -> Self {
        Self::bert_base(10_000, 10_000)
    }

    /// Five-decade run (1910s to 1950s).
    pub fn five_decades() -> Self {
        Self::bert_base(500_000, 200_000)
    }

    /// Ten-decade run (1910s to 2000s).
    pub fn ten_decades() -> Self {
        Self::bert_base(500_000, 200_000)
    }

    pub fn validate(&self) -> Result<(), EncoderError> {
        let err = |m: String| Err(EncoderError::Config(m));
        if !(self.masked_lm_prob > 0.0 && self.masked_lm_prob < 1.0) {
            return err(format!(
                "masked_lm_prob {} outside (0, 1)",
                self.masked_lm_prob
            ));
        }
        for (name, v) in [
            ("max_seq_length", self.max_seq_length),
            ("max_predictions_per_seq", self.max_predictions_per_seq),
            ("train_batch_size", self.train_batch_size),
            ("hidden_dim", self.hidden_dim),
            ("num_layers", self.num_layers),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        if self.max_predictions_per_seq > self.max_seq_length {
            return err(format!(
                "max_predictions_per_seq {} exceeds max_seq_length {}",
                self.max_predictions_per_seq, self.max_seq_length
            ));
        }
        if self.max_seq_length < 4 {
            return err("max_seq_length must leave room for special tokens".into());
        }
        if !(self.learning_rate.is_finite() && self.learning_rate > 0.0) {
            return err(format!(
                "learning_rate {} must be positive",
                self.learning_rate
            ));
        }
        Ok(())
    }

    /// Learning rate for `step` (0-based) under linear warmup.
    pub fn learning_rate_at(&self, step: usize) -> f64 {
        if self.num_warmup_steps == 0 {
            return self.learning_rate;
        }
        self.learning_rate * ((step + 1) as f64 / self.num_warmup_steps as f64).min(1.0)
    }

    pub(crate) fn same_dimensions(&self, other: &EncoderConfig) -> bool {
        self.hidden_dim == other.hidden_dim && self.num_layers == other.num_layers
    }
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::toy()
    }
}

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::features::{CUSTOMER_FEATURES, DEPOT_FEATURES, PROMPT_FEATURES, STATUS_BASE, VEHICLE_FEATURES};

/// Network dimensions. The vehicle-type count is part of the architecture
/// because the decoder's status vector carries one availability ratio per type.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Hidden width.
    pub d_h: usize,
    /// Encoder layers.
    pub n_layers: usize,
    pub n_head: usize,
    /// SwiGLU inner width.
    pub d_ff: usize,
    /// `c · tanh(u / c)` on pointer scores; `None` leaves scores raw.
    pub logit_clip: Option<f64>,
    pub n_vehicle_types: usize,
    pub init_seed: u64,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            d_h: 128,
            n_layers: 6,
            n_head: 8,
            d_ff: 512,
            logit_clip: Some(10.0),
            n_vehicle_types: 3,
            init_seed: 0,
        }
    }
}

impl ModelConfig {
    /// Small configuration: `d_ff = 4·d_h`, clip at 10.
    pub fn small(d_h: usize, n_layers: usize, n_head: usize, n_vehicle_types: usize) -> Self {
        Self {
            d_h,
            n_layers,
            n_head,
            d_ff: 4 * d_h,
            n_vehicle_types,
            ..Self::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        if self.d_h == 0 || self.n_head == 0 || self.d_h % self.n_head != 0 {
            return Err(Error::Config(format!(
                "d_h ({}) must be a positive multiple of n_head ({})",
                self.d_h, self.n_head
            )));
        }
        if self.d_ff == 0 || self.n_vehicle_types == 0 {
            return Err(Error::Config("d_ff and n_vehicle_types must be positive".into()));
        }
        if matches!(self.logit_clip, Some(c) if !(c > 0.0 && c.is_finite())) {
            return Err(Error::Config("logit_clip must be positive and finite".into()));
        }
        Ok(())
    }

    pub fn d_k(&self) -> usize {
        self.d_h / self.n_head
    }

    pub fn status_width(&self) -> usize {
        STATUS_BASE + self.n_vehicle_types
    }

    /// Number of scalar parameters, from the architecture alone.
    pub fn param_count(&self) -> usize {
        let d = self.d_h;
        let f = self.d_ff;
        let prompt = PROMPT_FEATURES * d + d + 2 * d + d * d + d;
        let embed = (DEPOT_FEATURES + CUSTOMER_FEATURES + VEHICLE_FEATURES + DEPOT_FEATURES + VEHICLE_FEATURES) * d;
        let attn = 4 * d * d;
        let ffn = 3 * d * f;
        let branch = attn + ffn + 4 * d;
        let dual = attn + ffn + 2 * d;
        let layer = 3 * branch + dual;
        let decoder = 8 * d * d + (d + self.status_width()) * d + d * d;
        prompt + embed + self.n_layers * layer + decoder
    }
}

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::geo::DEFAULT_CELL_DEG;

/// Tunables for the service. Every field has a default, so a config file only
/// needs the keys it changes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Config {
    /// Grid cell size of the subscriber index, in degrees.
    pub cell_deg: f64,
    pub verification: VerificationConfig,
    pub sessions: SessionConfig,
    pub delivery: DeliveryConfig,
    pub media_max_bytes: usize,
    pub chat_max_chars: usize,
    pub event_retention: usize,
    /// Largest page any list call returns.
    pub max_page: usize,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            cell_deg: DEFAULT_CELL_DEG,
            verification: VerificationConfig::default(),
            sessions: SessionConfig::default(),
            delivery: DeliveryConfig::default(),
            media_max_bytes: 25 * 1024 * 1024,
            chat_max_chars: 2_000,
            event_retention: crate::events::DEFAULT_RETENTION,
            max_page: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VerificationConfig {
    pub code_digits: u32,
    pub validity_secs: u64,
    pub max_attempts: u8,
    pub max_challenges_per_hour: usize,
}

impl Default for VerificationConfig {
    fn default() -> Self {
        Self { code_digits: 6, validity_secs: 5 * 60, max_attempts: 3, max_challenges_per_hour: 3 }
    }
}

impl VerificationConfig {
    pub fn validity(&self) -> Duration {
        Duration::from_secs(self.validity_secs)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SessionConfig {
    pub citizen_ttl_secs: u64,
    pub operator_ttl_secs: u64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self { citizen_ttl_secs: 30 * 24 * 3600, operator_ttl_secs: 12 * 3600 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DeliveryConfig {
    /// Total push attempts per delivery, including the first.
    pub max_attempts: u32,
    /// Delay before the second attempt; doubles each retry.
    pub base_backoff_ms: u64,
}

impl Default for DeliveryConfig {
    fn default() -> Self {
        Self { max_attempts: 3, base_backoff_ms: 200 }
    }
}

impl DeliveryConfig {
    /// Wait before attempt `n + 1`, given `n >= 1` attempts so far.
    pub fn backoff(&self, attempts_made: u32) -> Duration {
        let exp = attempts_made.saturating_sub(1).min(16);
        Duration::from_millis(self.base_backoff_ms.saturating_mul(1u64 << exp))
    }
}

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::money::{Money, Rate};
use super::{Day, Period};
use crate::issuer::IssuerVariant;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("monthly cap for {category} is negative")]
    NegativeCap { category: String },
    #[error("period length must be positive")]
    ZeroPeriod,
    #[error("grace period ({grace} days) must be shorter than the period ({period} days)")]
    GraceTooLong { grace: Day, period: Day },
}

fn default_grace() -> Day {
    7
}

fn default_period() -> Day {
    30
}

/// Program parameters for one simulated issuer account.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EngineConfig {
    /// Per-category reward rate. Categories absent here fall back to `default_rate`.
    #[serde(default)]
    pub reward_rate: BTreeMap<String, Rate>,
    /// Flat rate for categories without an explicit entry; absent means ineligible.
    #[serde(default)]
    pub default_rate: Option<Rate>,
    /// Per-category cap on rewards earned in one period. Absent means uncapped.
    #[serde(default)]
    pub monthly_cap: BTreeMap<String, Money>,
    #[serde(default)]
    pub b_min: Money,
    #[serde(default = "default_grace")]
    pub grace_days: Day,
    #[serde(default = "default_period")]
    pub period_length_days: Day,
    pub variant: IssuerVariant,
    /// Declares that no batch reconciliation exists, which disables the
    /// redemption-hold guard. Never inferred from the variant.
    #[serde(default)]
    pub event_driven_only: bool,
    /// Days between a refund posting and its delivery to the reward engine.
    #[serde(default)]
    pub refund_delivery_delay_days: Day,
}

impl EngineConfig {
    /// Empty program (no eligible categories) for the given variant, with the
    /// hold guard disabled exactly when the variant never reconciles in batch.
    pub fn new(variant: IssuerVariant) -> Self {
        EngineConfig {
            reward_rate: BTreeMap::new(),
            default_rate: None,
            monthly_cap: BTreeMap::new(),
            b_min: Money::ZERO,
            grace_days: default_grace(),
            period_length_days: default_period(),
            variant,
            event_driven_only: variant.profile().is_event_driven(),
            refund_delivery_delay_days: 0,
        }
    }

    /// Single-category program with a monthly cap.
    pub fn single_category(
        variant: IssuerVariant,
        category: &str,
        rate: Rate,
        cap: Option<Money>,
    ) -> Self {
        let mut cfg = EngineConfig::new(variant);
        cfg.reward_rate.insert(category.to_string(), rate);
        if let Some(cap) = cap {
            cfg.monthly_cap.insert(category.to_string(), cap);
        }
        cfg
    }

    pub fn with_rate(mut self, category: &str, rate: Rate) -> Self {
        self.reward_rate.insert(category.to_string(), rate);
        self
    }

    pub fn with_cap(mut self, category: &str, cap: Money) -> Self {
        self.monthly_cap.insert(category.to_string(), cap);
        self
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.period_length_days == 0 {
            return Err(ConfigError::ZeroPeriod);
        }
        if self.grace_days >= self.period_length_days {
            return Err(ConfigError::GraceTooLong {
                grace: self.grace_days,
                period: self.period_length_days,
            });
        }
        if let Some((category, _)) = self.monthly_cap.iter().find(|(_, cap)| cap.is_negative()) {
            return Err(ConfigError::NegativeCap {
                category: category.clone(),
            });
        }
        Ok(())
    }

    /// Configured rate for `category`; unknown categories earn nothing.
    pub fn rate(&self, category: &str) -> Rate {
        self.reward_rate
            .get(category)
            .copied()
            .or(self.default_rate)
            .unwrap_or(Rate::ZERO)
    }

    pub fn cap(&self, category: &str) -> Option<Money> {
        self.monthly_cap.get(category).copied()
    }

    pub fn period_of(&self, day: Day) -> Period {
        day / self.period_length_days
    }

    /// First day of `period`.
    pub fn period_start(&self, period: Period) -> Day {
        period * self.period_length_days
    }

    /// Day on which `period` closes; it is also the first day of the next period.
    pub fn close_day(&self, period: Period) -> Day {
        (period + 1) * self.period_length_days
    }
}

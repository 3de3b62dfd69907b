//! Domain types shared by every other module: money, the transaction state
//! machine, per-transaction reward records, the user ledger, the event log and
//! the engine configuration.

mod config;
mod event;
mod money;
mod status;

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

pub use config::{ConfigError, EngineConfig};
pub use event::{EventKind, EventLog, LogError, RewardEvent};
pub use money::{div_round, Money, Rate, RateError, Rounding};
pub use status::{transition, IllegalTransition, TransactionStatus};

/// Integer day index; day 0 opens period 0.
pub type Day = u32;

/// Billing-period index. Period `n` spans days `[n*L, (n+1)*L)`.
pub type Period = u32;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Transaction {
    pub id: String,
    pub user: String,
    pub merchant: String,
    pub amount: Money,
    pub category: String,
    pub period: Period,
    pub status: TransactionStatus,
    /// Reconciliation scratch: the refund-adjusted reward base. Never replaces `amount`.
    pub eligible: Money,
}

impl Transaction {
    pub fn new(id: &str, user: &str, amount: Money, category: &str, period: Period) -> Self {
        Transaction {
            id: id.to_string(),
            user: user.to_string(),
            merchant: String::new(),
            amount,
            category: category.to_string(),
            period,
            status: TransactionStatus::Pending,
            eligible: amount,
        }
    }

    pub fn transition(&mut self, to: TransactionStatus) -> Result<(), IllegalTransition> {
        self.status = transition(self.status, to)?;
        Ok(())
    }

    /// Moves a settled transaction to its post-refund status. A full refund
    /// straight from SETTLED walks SETTLED -> PART_REF -> REFUNDED in one step.
    pub fn mark_refunded(&mut self, fully: bool) -> Result<(), IllegalTransition> {
        if self.status == TransactionStatus::Settled || !fully {
            self.transition(TransactionStatus::PartRef)?;
        }
        if fully {
            self.transition(TransactionStatus::Refunded)?;
        }
        Ok(())
    }
}

/// Transactions in arrival order with lookup by id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Transactions {
    items: Vec<Transaction>,
    index: BTreeMap<String, usize>,
}

impl Transactions {
    pub fn new() -> Self {
        Self::default()
    }

    /// Inserts a new transaction; returns false if the id is already taken.
    pub fn insert(&mut self, txn: Transaction) -> bool {
        if self.index.contains_key(&txn.id) {
            return false;
        }
        self.index.insert(txn.id.clone(), self.items.len());
        self.items.push(txn);
        true
    }

    pub fn get(&self, id: &str) -> Option<&Transaction> {
        self.index.get(id).map(|&i| &self.items[i])
    }

    pub fn get_mut(&mut self, id: &str) -> Option<&mut Transaction> {
        self.index.get(id).map(|&i| &mut self.items[i])
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Transaction> {
        self.items.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, Transaction> {
        self.items.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

/// Per-transaction reward bookkeeping. Kept for the lifetime of the account.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct RewardRecord {
    /// R[id]: remaining reward after clawbacks, clamped at zero.
    pub reward_current: Money,
    /// R_orig[id]: reward granted at settlement. Written once.
    pub reward_original: Money,
    /// Amount the original reward was computed on. Equals the transaction
    /// amount unless refunds were deducted before settlement.
    pub reward_base: Money,
    /// All principal refunded on this transaction, including pre-settlement deductions.
    pub total_refunded: Money,
}

impl RewardRecord {
    /// Principal refunded after the reward was computed.
    pub fn refunded_after_settlement(&self, amount: Money) -> Money {
        self.total_refunded - (amount - self.reward_base)
    }
}

/// Reward state for one user.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct UserLedger {
    /// B[u]; negative values are reward debt.
    pub balance: Money,
    pub redeemed_total: Money,
    #[serde(with = "monthly_used_serde")]
    pub monthly_used: BTreeMap<(Period, String), Money>,
    pub redemption_hold_until: Option<Day>,
}

impl UserLedger {
    pub fn used(&self, period: Period, category: &str) -> Money {
        self.monthly_used
            .get(&(period, category.to_string()))
            .copied()
            .unwrap_or(Money::ZERO)
    }

    pub fn set_used(&mut self, period: Period, category: &str, value: Money) {
        self.monthly_used
            .insert((period, category.to_string()), value);
    }
}

mod monthly_used_serde {
    use std::collections::BTreeMap;

    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    use super::{Money, Period};

    #[derive(Serialize, Deserialize)]
    struct Entry {
        period: Period,
        category: String,
        used: Money,
    }

    pub fn serialize<S: Serializer>(
        map: &BTreeMap<(Period, String), Money>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        map.iter()
            .map(|((period, category), used)| Entry {
                period: *period,
                category: category.clone(),
                used: *used,
            })
            .collect::<Vec<_>>()
            .serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(Period, String), Money>, D::Error> {
        Ok(Vec::<Entry>::deserialize(d)?
            .into_iter()
            .map(|e| ((e.period, e.category), e.used))
            .collect())
    }
}

//! Invariant checks that read only the event log and the program config.
//!
//! Nothing here consults engine state, so every verdict can be recomputed
//! from a log file on disk.

use std::collections::{BTreeMap, VecDeque};

use num_rational::Ratio;
use serde::{Deserialize, Serialize};

use crate::ledger::{
    Day, EngineConfig, EventKind, EventLog, Money, Period, RewardEvent, UserLedger,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IntegritySnapshot {
    pub day: Day,
    pub net_spend: Money,
    pub net_reward: Money,
    pub bound: Money,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RrcVerdict {
    pub refund_event_seq: u64,
    pub txn_id: String,
    pub refund_day: Day,
    /// Day the reward layer reacted to this refund, if it ever did.
    pub adjusted_day: Option<Day>,
    /// First day on which the refund is reflected and integrity holds; `None` is never.
    pub restored_by_day: Option<Day>,
    pub within_bound: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedeemViolation {
    pub seq: u64,
    pub day: Day,
    pub reason: String,
}

fn is_principal_refund(kind: EventKind) -> bool {
    matches!(kind, EventKind::RefundPosted | EventKind::ChargebackPosted)
}

/// Purchases minus posted refunds up to and including `as_of_day`.
pub fn net_spend(log: &EventLog, as_of_day: Day) -> Money {
    log.iter()
        .filter(|e| e.day <= as_of_day)
        .map(|e| match e.kind {
            EventKind::Purchase => e.amount,
            k if is_principal_refund(k) => -e.amount,
            _ => Money::ZERO,
        })
        .sum()
}

/// Balance plus everything already redeemed.
pub fn net_reward(ledger: &UserLedger) -> Money {
    ledger.balance + ledger.redeemed_total
}

/// Net reward rebuilt from the log: all balance deltas except redemptions.
pub fn net_reward_from_log(log: &EventLog, as_of_day: Day) -> Money {
    log.iter()
        .filter(|e| e.day <= as_of_day && e.kind != EventKind::Redeem)
        .map(RewardEvent::delta)
        .sum()
}

/// Running totals used by the integrity fold.
#[derive(Default)]
struct SpendFold {
    cells: BTreeMap<(Period, String), Money>,
    net_reward: Money,
}

impl SpendFold {
    fn apply(&mut self, e: &RewardEvent) {
        let sign = match e.kind {
            EventKind::Purchase => Some(e.amount),
            k if is_principal_refund(k) => Some(-e.amount),
            _ => None,
        };
        if let Some(v) = sign {
            *self
                .cells
                .entry((e.period, e.category.clone()))
                .or_default() += v;
        }
        if e.kind != EventKind::Redeem {
            self.net_reward += e.delta();
        }
    }

    fn snapshot(&self, day: Day, config: &EngineConfig) -> IntegritySnapshot {
        let net_spend: Money = self.cells.values().sum();
        let bound: Money = self
            .cells
            .iter()
            .map(|((_, cat), spend)| {
                let earned = config
                    .rate(cat)
                    .apply((*spend).max(Money::ZERO), crate::ledger::Rounding::Floor);
                match config.cap(cat) {
                    Some(cap) => earned.min(cap),
                    None => earned,
                }
            })
            .sum();
        IntegritySnapshot {
            day,
            net_spend,
            net_reward: self.net_reward,
            bound,
            holds: self.net_reward <= bound,
        }
    }
}

/// Reward Integrity at the end of `as_of_day`. The bound sums, per period and
/// category, the capped rate entitlement on that cell's net spend.
pub fn check_integrity(log: &EventLog, config: &EngineConfig, as_of_day: Day) -> IntegritySnapshot {
    let mut fold = SpendFold::default();
    for e in log.iter().take_while(|e| e.day <= as_of_day) {
        fold.apply(e);
    }
    fold.snapshot(as_of_day, config)
}

/// One snapshot per day on which the log has entries.
pub fn integrity_series(log: &EventLog, config: &EngineConfig) -> Vec<IntegritySnapshot> {
    let mut fold = SpendFold::default();
    let mut out = Vec::new();
    let events = log.events();
    for (i, e) in events.iter().enumerate() {
        fold.apply(e);
        if events.get(i + 1).is_none_or(|n| n.day != e.day) {
            out.push(fold.snapshot(e.day, config));
        }
    }
    out
}

/// Refund Reward Consistency verdicts, one per posted refund or chargeback.
///
/// Each posted refund is paired, in order per transaction, with the reward
/// layer's reaction to it. The refund counts as restored on the first day
/// at or after both events where integrity holds again.
pub fn check_rrc(log: &EventLog, config: &EngineConfig, delta_days: Day) -> Vec<RrcVerdict> {
    let series = integrity_series(log, config);
    let holds_at = |day: Day| -> bool {
        let idx = series.partition_point(|s| s.day <= day);
        idx == 0 || series[idx - 1].holds
    };

    let mut open: BTreeMap<&str, VecDeque<usize>> = BTreeMap::new();
    let mut verdicts = Vec::new();
    for e in log.iter() {
        if is_principal_refund(e.kind) {
            open.entry(&e.txn_id).or_default().push_back(verdicts.len());
            verdicts.push(RrcVerdict {
                refund_event_seq: e.seq,
                txn_id: e.txn_id.clone(),
                refund_day: e.day,
                adjusted_day: None,
                restored_by_day: None,
                within_bound: false,
            });
        } else if e.kind.adjusts_refund() {
            if let Some(i) = open
                .get_mut(e.txn_id.as_str())
                .and_then(VecDeque::pop_front)
            {
                verdicts[i].adjusted_day = Some(e.day);
            }
        }
    }

    for v in &mut verdicts {
        let Some(adjusted) = v.adjusted_day else {
            continue;
        };
        let start = adjusted.max(v.refund_day);
        v.restored_by_day = std::iter::once(start)
            .chain(series.iter().map(|s| s.day).filter(|&d| d > start))
            .find(|&d| holds_at(d));
        v.within_bound = v
            .restored_by_day
            .is_some_and(|d| d <= v.refund_day + delta_days);
    }
    verdicts
}

/// Cap-free entitlement recomputed from raw principal events with exact
/// rational arithmetic: floor of the sum over transactions of rate times
/// unrefunded principal.
pub fn oracle_bound(log: &EventLog, config: &EngineConfig) -> Money {
    let mut principal: BTreeMap<&str, (i128, &str)> = BTreeMap::new();
    for e in log.iter() {
        match e.kind {
            EventKind::Purchase => {
                principal.insert(&e.txn_id, (e.amount.minor() as i128, &e.category));
            }
            k if is_principal_refund(k) => {
                if let Some(p) = principal.get_mut(e.txn_id.as_str()) {
                    p.0 -= e.amount.minor() as i128;
                }
            }
            _ => {}
        }
    }
    let total = principal
        .values()
        .fold(Ratio::<i128>::from_integer(0), |acc, (left, cat)| {
            let rate = config.rate(cat);
            acc + Ratio::new(rate.numer() as i128, rate.denom() as i128)
                * Ratio::from_integer(*left)
        });
    Money::from_minor(total.floor().to_integer() as i64)
}

/// Redemption-guard audit from the log alone: no redemption may leave the
/// balance below the floor or land inside an active hold window.
pub fn check_redemptions(log: &EventLog, config: &EngineConfig) -> Vec<RedeemViolation> {
    let mut balance = Money::ZERO;
    let mut hold_until: Option<Day> = None;
    let mut out = Vec::new();
    for e in log.iter() {
        balance += e.delta();
        match e.kind {
            EventKind::HoldSet => hold_until = Some(config.close_day(e.period) + config.grace_days),
            EventKind::Redeem => {
                if balance < config.b_min {
                    out.push(RedeemViolation {
                        seq: e.seq,
                        day: e.day,
                        reason: format!("balance {balance} below floor {}", config.b_min),
                    });
                }
                if !config.event_driven_only && hold_until.is_some_and(|h| e.day < h) {
                    out.push(RedeemViolation {
                        seq: e.seq,
                        day: e.day,
                        reason: format!(
                            "inside hold window ending day {}",
                            hold_until.unwrap_or_default()
                        ),
                    });
                }
            }
            _ => {}
        }
    }
    out
}

/// Transactions credited more than once.
pub fn double_settlements(log: &EventLog) -> Vec<String> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in log.iter().filter(|e| e.kind.is_settlement()) {
        *counts.entry(&e.txn_id).or_default() += 1;
    }
    counts
        .into_iter()
        .filter(|(_, n)| *n > 1)
        .map(|(id, _)| id.to_string())
        .collect()
}

//! The defensive reward algorithms: settlement crediting, proportional
//! clawback, the redemption guard and statement-cycle reconciliation.
//!
//! Every mutation of the user ledger or a reward record goes through this
//! module and leaves a matching entry in the event log.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ledger::{
    div_round, Day, EngineConfig, EventKind, EventLog, IllegalTransition, LogError, Money, Period,
    Rate, RewardEvent, RewardRecord, Rounding, Transaction, TransactionStatus, Transactions,
    UserLedger,
};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum EngineError {
    #[error("transaction {0} already has a settlement reward")]
    AlreadySettled(String),
    #[error("transaction {txn} is {status}; refunds apply only to SETTLED or PART_REF")]
    NonEligibleStatus {
        txn: String,
        status: TransactionStatus,
    },
    #[error("refund on {0} must be positive")]
    NonPositiveRefund(String),
    #[error(
        "refund of {requested} on {txn} exceeds amount {amount} ({refunded} already refunded)"
    )]
    RefundExceedsAmount {
        txn: String,
        amount: Money,
        refunded: Money,
        requested: Money,
    },
    #[error("redemption amount must be positive")]
    NonPositiveAmount,
    #[error("redemption denied: {0}")]
    RedeemDenied(RedeemReason),
    #[error("no reward record for transaction {0}")]
    MissingRecord(String),
    #[error(transparent)]
    Transition(#[from] IllegalTransition),
    #[error(transparent)]
    Log(#[from] LogError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RedeemReason {
    Ok,
    GraceHold,
    InsufficientBalance,
}

impl std::fmt::Display for RedeemReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            RedeemReason::Ok => "ok",
            RedeemReason::GraceHold => "grace-hold",
            RedeemReason::InsufficientBalance => "insufficient-balance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RedeemDecision {
    pub allowed: bool,
    pub reason: RedeemReason,
}

impl RedeemDecision {
    fn from_reason(reason: RedeemReason) -> Self {
        RedeemDecision {
            allowed: reason == RedeemReason::Ok,
            reason,
        }
    }
}

/// Outcome of one statement-close reconciliation run.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ReconcileReport {
    pub period: Period,
    pub same_period_deductions: Vec<(String, Money)>,
    pub late_clawbacks: Vec<(String, Money)>,
    pub settled: Vec<(String, Money)>,
    pub hold_until: Option<Day>,
}

/// A refund that reached the engine before its transaction settled.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingRefund {
    pub txn_id: String,
    pub amount: Money,
}

/// A refund or chargeback on an already-rewarded transaction whose reward
/// adjustment waits for the next statement close.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LateAdjustment {
    pub txn_id: String,
    pub amount: Money,
    pub chargeback: bool,
}

/// Knobs that let issuer models run partial versions of reconciliation.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ReconcileOptions {
    /// Run the late-refund clawback loop.
    pub retroactive: bool,
    /// Set the post-close redemption hold.
    pub set_hold: bool,
    /// Floor the balance at zero when clawing back.
    pub floor_balance: bool,
}

impl ReconcileOptions {
    pub const FULL: ReconcileOptions = ReconcileOptions {
        retroactive: true,
        set_hold: true,
        floor_balance: false,
    };
}

/// How a clawback is booked.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ClawbackMode {
    pub kind: EventKind,
    pub chargeback: bool,
    /// Never let the clawback push the balance below zero.
    pub floor_balance: bool,
}

impl ClawbackMode {
    pub const REFUND: ClawbackMode = ClawbackMode {
        kind: EventKind::Refund,
        chargeback: false,
        floor_balance: false,
    };
    pub const CHARGEBACK: ClawbackMode = ClawbackMode {
        kind: EventKind::Chargeback,
        chargeback: true,
        floor_balance: false,
    };
}

/// Reward state of one user plus the log of everything that happened to it.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardBook {
    pub user: String,
    pub ledger: UserLedger,
    pub records: BTreeMap<String, RewardRecord>,
    pub log: EventLog,
    /// Clock used to stamp emitted events.
    pub today: Day,
    /// Billing period treated as current for cap restoration.
    pub current_period: Period,
}

impl RewardBook {
    pub fn new(user: &str) -> Self {
        RewardBook {
            user: user.to_string(),
            ..Default::default()
        }
    }

    pub fn emit(
        &mut self,
        kind: EventKind,
        txn_id: &str,
        amount: Money,
        category: &str,
        period: Period,
    ) -> Result<RewardEvent, LogError> {
        let event = RewardEvent {
            seq: self.log.next_seq(),
            day: self.today,
            kind,
            txn_id: txn_id.to_string(),
            user: self.user.clone(),
            amount,
            category: category.to_string(),
            period,
        };
        self.log.append(event.clone())?;
        Ok(event)
    }
}

pub fn reward_rate(category: &str, config: &EngineConfig) -> Rate {
    config.rate(category)
}

/// Credits `base` at the category rate, clipped by remaining cap headroom.
/// Rounds down so the credit never exceeds the exact rate product.
fn credit(
    book: &mut RewardBook,
    txn: &Transaction,
    base: Money,
    kind: EventKind,
    config: &EngineConfig,
) -> Result<Money, EngineError> {
    let mut r = config.rate(&txn.category).apply(base, Rounding::Floor);
    let used = book.ledger.used(txn.period, &txn.category);
    if let Some(cap) = config.cap(&txn.category) {
        r = r.min(cap - used);
    }
    let r = r.max(Money::ZERO);
    book.records.insert(
        txn.id.clone(),
        RewardRecord {
            reward_current: r,
            reward_original: r,
            reward_base: base,
            total_refunded: txn.amount - base,
        },
    );
    if r.is_positive() {
        book.ledger.balance += r;
        book.ledger.set_used(txn.period, &txn.category, used + r);
        book.emit(kind, &txn.id, r, &txn.category, txn.period)?;
    }
    Ok(r)
}

/// Grants the settlement reward for `txn` on its full amount.
pub fn reward_on_settlement(
    book: &mut RewardBook,
    txn: &mut Transaction,
    config: &EngineConfig,
) -> Result<Money, EngineError> {
    if book.records.contains_key(&txn.id) {
        return Err(EngineError::AlreadySettled(txn.id.clone()));
    }
    match txn.status {
        TransactionStatus::Pending | TransactionStatus::Settled => {}
        status => {
            return Err(EngineError::NonEligibleStatus {
                txn: txn.id.clone(),
                status,
            })
        }
    }
    let r = credit(book, txn, txn.amount, EventKind::Settle, config)?;
    if txn.status == TransactionStatus::Pending {
        txn.transition(TransactionStatus::Settled)?;
    }
    Ok(r)
}

/// Clawback owed after `refunded_after` principal has come back, anchored to
/// the original reward. Rounded up so a full refund always recovers the whole
/// reward and the running total never under-claws.
fn cumulative_claw(refunded_after: Money, record: &RewardRecord) -> Money {
    if !record.reward_base.is_positive() {
        return Money::ZERO;
    }
    Money::from_minor(div_round(
        refunded_after.minor() as i128 * record.reward_original.minor() as i128,
        record.reward_base.minor() as i128,
        Rounding::Ceil,
    ) as i64)
}

/// Proportional clawback for a refund of `x` on a settled transaction.
pub fn reward_on_refund(
    book: &mut RewardBook,
    txn: &mut Transaction,
    x: Money,
    config: &EngineConfig,
) -> Result<Money, EngineError> {
    clawback(book, txn, x, ClawbackMode::REFUND, config)
}

/// Chargeback on a SETTLED transaction: claws back everything still outstanding.
pub fn reward_on_chargeback(
    book: &mut RewardBook,
    txn: &mut Transaction,
    config: &EngineConfig,
) -> Result<Money, EngineError> {
    let refunded = book
        .records
        .get(&txn.id)
        .map_or(Money::ZERO, |r| r.total_refunded);
    clawback(
        book,
        txn,
        txn.amount - refunded,
        ClawbackMode::CHARGEBACK,
        config,
    )
}

/// Shared clawback path for refunds and chargebacks.
pub fn clawback(
    book: &mut RewardBook,
    txn: &mut Transaction,
    x: Money,
    mode: ClawbackMode,
    _config: &EngineConfig,
) -> Result<Money, EngineError> {
    let eligible = if mode.chargeback {
        txn.status == TransactionStatus::Settled
    } else {
        matches!(
            txn.status,
            TransactionStatus::Settled | TransactionStatus::PartRef
        )
    };
    if !eligible {
        return Err(EngineError::NonEligibleStatus {
            txn: txn.id.clone(),
            status: txn.status,
        });
    }
    if !x.is_positive() {
        return Err(EngineError::NonPositiveRefund(txn.id.clone()));
    }
    let record = *book
        .records
        .get(&txn.id)
        .ok_or_else(|| EngineError::MissingRecord(txn.id.clone()))?;
    if record.total_refunded + x > txn.amount {
        return Err(EngineError::RefundExceedsAmount {
            txn: txn.id.clone(),
            amount: txn.amount,
            refunded: record.total_refunded,
            requested: x,
        });
    }

    let before = record.refunded_after_settlement(txn.amount);
    let r_claw = cumulative_claw(before + x, &record) - cumulative_claw(before, &record);

    let delta = if mode.floor_balance {
        -r_claw.min(book.ledger.balance.max(Money::ZERO))
    } else {
        -r_claw
    };
    book.ledger.balance += delta;

    let rec = book.records.get_mut(&txn.id).expect("record checked above");
    rec.reward_current = (rec.reward_current - r_claw).max(Money::ZERO);
    rec.total_refunded += x;
    let fully = rec.total_refunded == txn.amount;

    // Cap headroom comes back only for refunds inside the purchase period.
    if txn.period == book.current_period {
        let used = book.ledger.used(txn.period, &txn.category);
        book.ledger
            .set_used(txn.period, &txn.category, (used - r_claw).max(Money::ZERO));
    }

    book.emit(mode.kind, &txn.id, delta, &txn.category, txn.period)?;
    if mode.chargeback {
        txn.transition(TransactionStatus::Chargeback)?;
    } else {
        txn.mark_refunded(fully)?;
    }
    Ok(r_claw)
}

pub fn can_redeem(
    ledger: &UserLedger,
    y: Money,
    today: Day,
    config: &EngineConfig,
) -> Result<RedeemDecision, EngineError> {
    if !y.is_positive() {
        return Err(EngineError::NonPositiveAmount);
    }
    if !config.event_driven_only {
        if let Some(hold) = ledger.redemption_hold_until {
            if today < hold {
                return Ok(RedeemDecision::from_reason(RedeemReason::GraceHold));
            }
        }
    }
    if ledger.balance - y < config.b_min {
        return Ok(RedeemDecision::from_reason(
            RedeemReason::InsufficientBalance,
        ));
    }
    Ok(RedeemDecision::from_reason(RedeemReason::Ok))
}

/// All-or-nothing redemption of `y` on `book.today`.
pub fn redeem(book: &mut RewardBook, y: Money, config: &EngineConfig) -> Result<(), EngineError> {
    let decision = can_redeem(&book.ledger, y, book.today, config)?;
    if !decision.allowed {
        return Err(EngineError::RedeemDenied(decision.reason));
    }
    book.ledger.balance -= y;
    book.ledger.redeemed_total += y;
    let period = book.current_period;
    book.emit(EventKind::Redeem, "", -y, "", period)?;
    Ok(())
}

/// Full statement-close reconciliation for period `n`.
pub fn statement_cycle_reconcile(
    book: &mut RewardBook,
    txns: &mut Transactions,
    pending: &[PendingRefund],
    late: &[LateAdjustment],
    n: Period,
    config: &EngineConfig,
) -> Result<ReconcileReport, EngineError> {
    reconcile_with(book, txns, pending, late, n, config, ReconcileOptions::FULL)
}

/// Reconciliation with individually switchable phases.
pub fn reconcile_with(
    book: &mut RewardBook,
    txns: &mut Transactions,
    pending: &[PendingRefund],
    late: &[LateAdjustment],
    n: Period,
    config: &EngineConfig,
    opts: ReconcileOptions,
) -> Result<ReconcileReport, EngineError> {
    let saved_period = book.current_period;
    book.current_period = n;
    let result = reconcile_inner(book, txns, pending, late, n, config, opts);
    book.current_period = saved_period;
    result
}

fn reconcile_inner(
    book: &mut RewardBook,
    txns: &mut Transactions,
    pending: &[PendingRefund],
    late: &[LateAdjustment],
    n: Period,
    config: &EngineConfig,
    opts: ReconcileOptions,
) -> Result<ReconcileReport, EngineError> {
    let mut report = ReconcileReport {
        period: n,
        ..Default::default()
    };

    // Phase 1: same-period refunds shrink the reward base.
    for t in txns
        .iter_mut()
        .filter(|t| t.period == n && t.status == TransactionStatus::Pending)
    {
        let mut deducted = Money::ZERO;
        for p in pending.iter().filter(|p| p.txn_id == t.id) {
            deducted += p.amount;
            book.emit(EventKind::ReconcileDeduct, &t.id, p.amount, &t.category, n)?;
            report.same_period_deductions.push((t.id.clone(), p.amount));
        }
        t.eligible = (t.amount - deducted).max(Money::ZERO);
    }

    // Phase 2: late refunds on earlier periods.
    if opts.retroactive {
        for adj in late {
            let Some(t) = txns.get_mut(&adj.txn_id) else {
                continue;
            };
            if t.period >= n
                || !matches!(
                    t.status,
                    TransactionStatus::Settled | TransactionStatus::PartRef
                )
            {
                continue;
            }
            let mode = ClawbackMode {
                kind: EventKind::ReconcileClawback,
                chargeback: adj.chargeback && t.status == TransactionStatus::Settled,
                floor_balance: opts.floor_balance,
            };
            let claw = clawback(book, t, adj.amount, mode, config)?;
            report.late_clawbacks.push((t.id.clone(), claw));
        }
    }

    // Phase 3: credit what is still pending, on the refund-adjusted base.
    for t in txns
        .iter_mut()
        .filter(|t| t.period == n && t.status == TransactionStatus::Pending)
    {
        if t.eligible.is_positive() {
            let r = credit(book, t, t.eligible, EventKind::ReconcileSettle, config)?;
            t.transition(TransactionStatus::Settled)?;
            report.settled.push((t.id.clone(), r));
        } else {
            // Refunded in full before it ever earned anything.
            book.records.insert(
                t.id.clone(),
                RewardRecord {
                    total_refunded: t.amount,
                    ..Default::default()
                },
            );
            t.transition(TransactionStatus::Refunded)?;
        }
    }

    if opts.set_hold {
        let hold = config.close_day(n) + config.grace_days;
        if book.ledger.redemption_hold_until != Some(hold) {
            book.ledger.redemption_hold_until = Some(hold);
            book.emit(EventKind::HoldSet, "", Money::ZERO, "", n)?;
        }
        report.hold_until = Some(hold);
    }
    Ok(report)
}

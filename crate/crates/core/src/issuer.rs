//! Issuer behaviour models.
//!
//! Six observed issuers (A to F), a synthetic zero-flooring variant and the two
//! defensive reference modes all sit behind [`IssuerDesk`], so the harness and
//! the adversary drive every design through the same calls.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::adversary::AttackOutcome;
use crate::engine::{
    self, ClawbackMode, EngineError, LateAdjustment, PendingRefund, ReconcileOptions, RewardBook,
};
use crate::ledger::{
    EngineConfig, EventKind, Money, Period, RewardRecord, Transaction, TransactionStatus,
    Transactions,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum IssuerVariant {
    A,
    B,
    C,
    D,
    E,
    F,
    V3a,
    #[serde(rename = "defensive-instant")]
    DefensiveInstant,
    #[serde(rename = "defensive-cycle")]
    DefensiveCycle,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RewardTiming {
    Instant,
    StatementClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RefundAdjustment {
    None,
    SameCycleOnly,
    Immediate,
    StatementClose,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum NegativeBalance {
    Unsupported,
    ZeroFloored,
    Indefinite,
}

/// Fixed behavioural tuple of a variant.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct VariantProfile {
    pub reward_timing: RewardTiming,
    pub refund_adjustment: RefundAdjustment,
    pub negative_balance: NegativeBalance,
    pub auto_redeem_at_close: bool,
}

impl VariantProfile {
    /// True when nothing is ever reconciled in batch.
    pub fn is_event_driven(&self) -> bool {
        self.reward_timing == RewardTiming::Instant
            && self.refund_adjustment != RefundAdjustment::StatementClose
    }
}

impl IssuerVariant {
    pub const ALL: [IssuerVariant; 9] = [
        IssuerVariant::A,
        IssuerVariant::B,
        IssuerVariant::C,
        IssuerVariant::D,
        IssuerVariant::E,
        IssuerVariant::F,
        IssuerVariant::V3a,
        IssuerVariant::DefensiveInstant,
        IssuerVariant::DefensiveCycle,
    ];

    /// Rows of the comparison matrix: the observed issuers plus V3a.
    pub const MATRIX: [IssuerVariant; 7] = [
        IssuerVariant::A,
        IssuerVariant::B,
        IssuerVariant::C,
        IssuerVariant::D,
        IssuerVariant::E,
        IssuerVariant::F,
        IssuerVariant::V3a,
    ];

    pub fn profile(self) -> VariantProfile {
        use NegativeBalance as N;
        use RefundAdjustment as R;
        use RewardTiming as T;
        let (reward_timing, refund_adjustment, negative_balance, auto_redeem_at_close) = match self
        {
            IssuerVariant::A => (T::Instant, R::None, N::Unsupported, false),
            IssuerVariant::B => (T::StatementClose, R::SameCycleOnly, N::Unsupported, true),
            IssuerVariant::C | IssuerVariant::DefensiveInstant => {
                (T::Instant, R::Immediate, N::Indefinite, false)
            }
            IssuerVariant::D | IssuerVariant::E | IssuerVariant::DefensiveCycle => {
                (T::StatementClose, R::StatementClose, N::Indefinite, false)
            }
            IssuerVariant::F => (T::Instant, R::StatementClose, N::Indefinite, false),
            IssuerVariant::V3a => (T::Instant, R::Immediate, N::ZeroFloored, false),
        };
        VariantProfile {
            reward_timing,
            refund_adjustment,
            negative_balance,
            auto_redeem_at_close,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            IssuerVariant::A => "A",
            IssuerVariant::B => "B",
            IssuerVariant::C => "C",
            IssuerVariant::D => "D",
            IssuerVariant::E => "E",
            IssuerVariant::F => "F",
            IssuerVariant::V3a => "V3a",
            IssuerVariant::DefensiveInstant => "defensive-instant",
            IssuerVariant::DefensiveCycle => "defensive-cycle",
        }
    }
}

impl fmt::Display for IssuerVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for IssuerVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        IssuerVariant::ALL
            .into_iter()
            .find(|v| v.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| {
                format!("unknown issuer {s:?}; expected A..F, V3a, defensive-instant or defensive-cycle")
            })
    }
}

/// One user's account at one issuer: reward state, transactions and the
/// refunds still waiting for a statement close.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IssuerDesk {
    pub config: EngineConfig,
    pub book: RewardBook,
    pub txns: Transactions,
    pending: Vec<PendingRefund>,
    deferred: Vec<LateAdjustment>,
}

impl IssuerDesk {
    pub fn new(user: &str, config: EngineConfig) -> Self {
        IssuerDesk {
            config,
            book: RewardBook::new(user),
            txns: Transactions::new(),
            pending: Vec::new(),
            deferred: Vec::new(),
        }
    }

    pub fn variant(&self) -> IssuerVariant {
        self.config.variant
    }

    fn profile(&self) -> VariantProfile {
        self.config.variant.profile()
    }

    /// Refunds waiting for a close, in arrival order.
    pub fn queued_refunds(&self) -> usize {
        self.pending.len() + self.deferred.len()
    }

    /// A purchase cleared the network. Instant issuers reward it on the spot.
    pub fn purchase(&mut self, txn: Transaction) -> Result<(), EngineError> {
        let id = txn.id.clone();
        self.txns.insert(txn);
        if self.profile().reward_timing == RewardTiming::Instant {
            let t = self.txns.get_mut(&id).expect("just inserted");
            engine::reward_on_settlement(&mut self.book, t, &self.config)?;
        }
        Ok(())
    }

    /// A refund (or, with `chargeback`, a dispute for the whole outstanding
    /// amount) reached the reward layer.
    pub fn refund(&mut self, txn_id: &str, x: Money, chargeback: bool) -> Result<(), EngineError> {
        let profile = self.profile();
        let Some(t) = self.txns.get_mut(txn_id) else {
            return Err(EngineError::MissingRecord(txn_id.to_string()));
        };
        if t.status == TransactionStatus::Pending {
            // Not rewarded yet; the close deducts it from the base.
            self.pending.push(PendingRefund {
                txn_id: txn_id.to_string(),
                amount: x,
            });
            return Ok(());
        }
        match profile.refund_adjustment {
            RefundAdjustment::None | RefundAdjustment::SameCycleOnly => {
                principal_only(&mut self.book, t, x, chargeback)
            }
            RefundAdjustment::Immediate => {
                let mode = ClawbackMode {
                    kind: if chargeback {
                        EventKind::Chargeback
                    } else {
                        EventKind::Refund
                    },
                    chargeback,
                    floor_balance: profile.negative_balance == NegativeBalance::ZeroFloored,
                };
                engine::clawback(&mut self.book, t, x, mode, &self.config).map(|_| ())
            }
            RefundAdjustment::StatementClose => {
                self.deferred.push(LateAdjustment {
                    txn_id: txn_id.to_string(),
                    amount: x,
                    chargeback,
                });
                Ok(())
            }
        }
    }

    pub fn redeem(&mut self, y: Money) -> Result<(), EngineError> {
        engine::redeem(&mut self.book, y, &self.config)
    }

    /// Statement close of period `n`. The caller has already set the clock.
    pub fn close(&mut self, n: Period) -> Result<(), EngineError> {
        let profile = self.profile();
        let pending: Vec<PendingRefund> = self
            .pending
            .iter()
            .filter(|p| self.txns.get(&p.txn_id).is_some_and(|t| t.period == n))
            .cloned()
            .collect();
        self.pending.retain(|p| !pending.contains(p));

        match (profile.reward_timing, profile.refund_adjustment) {
            (RewardTiming::StatementClose, RefundAdjustment::SameCycleOnly) => {
                let opts = ReconcileOptions {
                    retroactive: false,
                    set_hold: false,
                    floor_balance: false,
                };
                let rep = engine::reconcile_with(
                    &mut self.book,
                    &mut self.txns,
                    &pending,
                    &[],
                    n,
                    &self.config,
                    opts,
                )?;
                if profile.auto_redeem_at_close {
                    let credited: Money = rep.settled.iter().map(|(_, r)| *r).sum();
                    // Never pay out below the minimum balance.
                    let y = credited.min(self.book.ledger.balance - self.config.b_min);
                    if y.is_positive() {
                        let saved = self.book.current_period;
                        self.book.current_period = n;
                        let res = engine::redeem(&mut self.book, y, &self.config);
                        self.book.current_period = saved;
                        res?;
                    }
                }
            }
            (RewardTiming::StatementClose, _) => {
                let late = std::mem::take(&mut self.deferred);
                let opts = ReconcileOptions {
                    floor_balance: profile.negative_balance == NegativeBalance::ZeroFloored,
                    ..ReconcileOptions::FULL
                };
                engine::reconcile_with(
                    &mut self.book,
                    &mut self.txns,
                    &pending,
                    &late,
                    n,
                    &self.config,
                    opts,
                )?;
            }
            (RewardTiming::Instant, RefundAdjustment::StatementClose) => {
                // Instant credit, batched clawback: every queued refund posts now.
                let late = std::mem::take(&mut self.deferred);
                let saved = self.book.current_period;
                self.book.current_period = n;
                let mut result = Ok(());
                for adj in &late {
                    let t = self
                        .txns
                        .get_mut(&adj.txn_id)
                        .expect("deferred refunds reference known txns");
                    let mode = ClawbackMode {
                        kind: EventKind::ReconcileClawback,
                        chargeback: adj.chargeback,
                        floor_balance: false,
                    };
                    if let Err(e) =
                        engine::clawback(&mut self.book, t, adj.amount, mode, &self.config)
                    {
                        result = Err(e);
                        break;
                    }
                }
                self.book.current_period = saved;
                result?;
            }
            (RewardTiming::Instant, _) => {}
        }
        Ok(())
    }
}

/// Principal bookkeeping with no reward reaction.
fn principal_only(
    book: &mut RewardBook,
    t: &mut Transaction,
    x: Money,
    chargeback: bool,
) -> Result<(), EngineError> {
    if !x.is_positive() {
        return Err(EngineError::NonPositiveRefund(t.id.clone()));
    }
    let rec: &mut RewardRecord = book.records.entry(t.id.clone()).or_default();
    if rec.total_refunded + x > t.amount {
        return Err(EngineError::RefundExceedsAmount {
            txn: t.id.clone(),
            amount: t.amount,
            refunded: rec.total_refunded,
            requested: x,
        });
    }
    rec.total_refunded += x;
    if chargeback && t.status == TransactionStatus::Settled {
        t.transition(TransactionStatus::Chargeback)?;
    } else {
        t.mark_refunded(rec.total_refunded == t.amount)?;
    }
    Ok(())
}

/// Property labels of the comparison matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Label {
    #[serde(rename = "✓")]
    Satisfied,
    #[serde(rename = "×")]
    Violated,
    #[serde(rename = "~")]
    Partial,
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Label::Satisfied => "✓",
            Label::Violated => "×",
            Label::Partial => "~",
        })
    }
}

/// Reward Integrity label over a battery of outcomes.
///
/// × when any outcome keeps value at quiescence. Otherwise ~ when some
/// outcome redeemed reward before its refund posted and the adjustment
/// waited past the posting day. Otherwise ✓.
pub fn classify(outcomes: &[AttackOutcome]) -> Label {
    if outcomes.iter().any(|o| o.value_extracted.is_positive()) {
        Label::Violated
    } else if outcomes.iter().any(|o| o.asymmetric_float) {
        Label::Partial
    } else {
        Label::Satisfied
    }
}

/// Refund Reward Consistency label: × when any refund is never restored or
/// restored later than one period, then the same float rule as [`classify`].
pub fn classify_rrc(outcomes: &[AttackOutcome]) -> Label {
    if outcomes
        .iter()
        .flat_map(|o| &o.rrc)
        .any(|v| !v.within_bound)
    {
        Label::Violated
    } else if outcomes.iter().any(|o| o.asymmetric_float) {
        Label::Partial
    } else {
        Label::Satisfied
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MatrixRow {
    pub variant: IssuerVariant,
    pub reward_timing: String,
    pub refund_adjustment: String,
    pub negative_balance: String,
    pub reward_integrity: Label,
    pub refund_reward_consistency: Label,
}

pub const MATRIX_FOOTNOTE: &str = "* Balance persists indefinitely, but recovery depends on future qualifying spend, which the user can unilaterally withhold.";

pub const MATRIX_RULES: [&str; 3] = [
    "RI:  × value kept at quiescence; ~ reward redeemed before a refund whose clawback posted later; ✓ otherwise.",
    "RRC: × a refund never restored or restored after one period; ~ same float rule; ✓ otherwise.",
    "Battery per variant: same-cycle, cross-cycle and 50% partial cross-cycle DDRA plus a no-refund control.",
];

/// Builds one matrix row from a variant's battery outcomes.
pub fn matrix_row(variant: IssuerVariant, outcomes: &[AttackOutcome]) -> MatrixRow {
    let p = variant.profile();
    let ri = classify(outcomes);
    let timing = match p.reward_timing {
        RewardTiming::Instant => "Instant",
        RewardTiming::StatementClose => "Stmt. close",
    };
    // The column reports post-grant adjustment; B's pre-close deduction does not count.
    let adjustment = match p.refund_adjustment {
        RefundAdjustment::None | RefundAdjustment::SameCycleOnly => "None",
        RefundAdjustment::Immediate => "Immediate",
        RefundAdjustment::StatementClose => "Stmt. close",
    };
    let negative = match p.negative_balance {
        NegativeBalance::Unsupported => "N/A".to_string(),
        NegativeBalance::ZeroFloored => "Zero-floored".to_string(),
        NegativeBalance::Indefinite if ri == Label::Partial => "Indefinite*".to_string(),
        NegativeBalance::Indefinite => "Indefinite".to_string(),
    };
    MatrixRow {
        variant,
        reward_timing: timing.to_string(),
        refund_adjustment: adjustment.to_string(),
        negative_balance: negative,
        reward_integrity: ri,
        refund_reward_consistency: classify_rrc(outcomes),
    }
}

/// Runs the standard battery against every matrix variant.
pub fn comparison_matrix() -> Vec<MatrixRow> {
    IssuerVariant::MATRIX
        .into_iter()
        .map(|v| matrix_row(v, &crate::adversary::run_battery(v)))
        .collect()
}

/// Plain-text rendering of the matrix, one row per variant.
pub fn render_matrix(rows: &[MatrixRow]) -> String {
    let header = [
        "Variant",
        "Reward Timing",
        "Refund Adjustment",
        "Neg. Balance Support",
        "RI",
        "RRC",
    ];
    let cells: Vec<[String; 6]> = rows
        .iter()
        .map(|r| {
            [
                r.variant.to_string(),
                r.reward_timing.clone(),
                r.refund_adjustment.clone(),
                r.negative_balance.clone(),
                r.reward_integrity.to_string(),
                r.refund_reward_consistency.to_string(),
            ]
        })
        .collect();
    let width = |i: usize| {
        cells
            .iter()
            .map(|c| c[i].chars().count())
            .chain([header[i].len()])
            .max()
            .unwrap_or(0)
    };
    let widths: Vec<usize> = (0..6).map(width).collect();
    let line = |cols: Vec<&str>| {
        let mut s = String::new();
        for (i, c) in cols.iter().enumerate() {
            if i + 1 == cols.len() {
                s.push_str(c);
            } else {
                s.push_str(c);
                s.push_str(&" ".repeat(widths[i] - c.chars().count() + 2));
            }
        }
        s.trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for c in &cells {
        out.push_str(&line(c.iter().map(String::as_str).collect()));
    }
    out.push('\n');
    out.push_str(MATRIX_FOOTNOTE);
    out.push('\n');
    for rule in MATRIX_RULES {
        out.push_str(rule);
        out.push('\n');
    }
    out
}

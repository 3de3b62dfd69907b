//! The append-only event log and its JSON Lines encoding.
//!
//! The log carries two families of entries. Intent entries record what the
//! outside world did (a purchase posted, a refund posted, a redemption was
//! requested, a statement closed). Reward entries record every mutation of the
//! reward balance or redemption hold. For reward entries `amount_minor` is the
//! signed balance delta; for intent entries it is the principal or requested
//! amount. `reconcile-deduct` carries the principal excluded from the reward
//! base and never moves the balance.

use std::fmt;
use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::money::Money;
use super::{Day, Period};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EventKind {
    Purchase,
    RefundPosted,
    ChargebackPosted,
    RedeemRequest,
    StatementClose,
    Settle,
    Refund,
    Chargeback,
    Redeem,
    ReconcileSettle,
    ReconcileClawback,
    ReconcileDeduct,
    HoldSet,
}

impl EventKind {
    /// Entries describing external activity rather than reward mutations.
    pub fn is_intent(self) -> bool {
        matches!(
            self,
            EventKind::Purchase
                | EventKind::RefundPosted
                | EventKind::ChargebackPosted
                | EventKind::RedeemRequest
                | EventKind::StatementClose
        )
    }

    /// Entries whose `amount_minor` is a balance delta.
    pub fn moves_balance(self) -> bool {
        matches!(
            self,
            EventKind::Settle
                | EventKind::Refund
                | EventKind::Chargeback
                | EventKind::Redeem
                | EventKind::ReconcileSettle
                | EventKind::ReconcileClawback
        )
    }

    /// Reward-layer reactions to a posted refund or chargeback.
    pub fn adjusts_refund(self) -> bool {
        matches!(
            self,
            EventKind::Refund
                | EventKind::Chargeback
                | EventKind::ReconcileClawback
                | EventKind::ReconcileDeduct
        )
    }

    pub fn is_settlement(self) -> bool {
        matches!(self, EventKind::Settle | EventKind::ReconcileSettle)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::Purchase => "purchase",
            EventKind::RefundPosted => "refund-posted",
            EventKind::ChargebackPosted => "chargeback-posted",
            EventKind::RedeemRequest => "redeem-request",
            EventKind::StatementClose => "statement-close",
            EventKind::Settle => "settle",
            EventKind::Refund => "refund",
            EventKind::Chargeback => "chargeback",
            EventKind::Redeem => "redeem",
            EventKind::ReconcileSettle => "reconcile-settle",
            EventKind::ReconcileClawback => "reconcile-clawback",
            EventKind::ReconcileDeduct => "reconcile-deduct",
            EventKind::HoldSet => "hold-set",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One log entry. Field order is the on-disk field order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RewardEvent {
    pub seq: u64,
    pub day: Day,
    pub kind: EventKind,
    pub txn_id: String,
    pub user: String,
    #[serde(rename = "amount_minor")]
    pub amount: Money,
    pub category: String,
    pub period: Period,
}

impl RewardEvent {
    /// Change to the reward balance caused by this entry.
    pub fn delta(&self) -> Money {
        if self.kind.moves_balance() {
            self.amount
        } else {
            Money::ZERO
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum LogError {
    #[error("sequence gap: expected seq {expected}, got {got}")]
    SequenceGap { expected: u64, got: u64 },
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("i/o error: {0}")]
    Io(String),
}

/// Totally ordered, append-only sequence of events. Sequence numbers start at 1.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct EventLog {
    events: Vec<RewardEvent>,
}

impl EventLog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    pub fn next_seq(&self) -> u64 {
        self.last_seq() + 1
    }

    pub fn append(&mut self, event: RewardEvent) -> Result<(), LogError> {
        let expected = self.next_seq();
        if event.seq != expected {
            return Err(LogError::SequenceGap {
                expected,
                got: event.seq,
            });
        }
        self.events.push(event);
        Ok(())
    }

    pub fn events(&self) -> &[RewardEvent] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, RewardEvent> {
        self.events.iter()
    }

    pub fn last_day(&self) -> Option<Day> {
        self.events.last().map(|e| e.day)
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&serde_json::to_string(e).expect("event serialises"));
            out.push('\n');
        }
        out
    }

    pub fn write_jsonl<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.to_jsonl().as_bytes())
    }

    /// Parses a JSON Lines log, enforcing contiguous sequence numbers.
    /// Blank lines are skipped; line numbers in errors are 1-based.
    pub fn read_jsonl<R: BufRead>(r: R) -> Result<EventLog, LogError> {
        let mut log = EventLog::new();
        for (idx, line) in r.lines().enumerate() {
            let line = line.map_err(|e| LogError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let event: RewardEvent = serde_json::from_str(&line).map_err(|e| LogError::Parse {
                line: idx + 1,
                message: e.to_string(),
            })?;
            log.append(event)?;
        }
        Ok(log)
    }

    pub fn from_jsonl(text: &str) -> Result<EventLog, LogError> {
        Self::read_jsonl(text.as_bytes())
    }
}

impl<'a> IntoIterator for &'a EventLog {
    type Item = &'a RewardEvent;
    type IntoIter = std::slice::Iter<'a, RewardEvent>;

    fn into_iter(self) -> Self::IntoIter {
        self.events.iter()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(seq: u64, delta: i64) -> RewardEvent {
        RewardEvent {
            seq,
            day: 0,
            kind: EventKind::Refund,
            txn_id: "t1".into(),
            user: "u1".into(),
            amount: Money::from_minor(delta),
            category: "GROCERY".into(),
            period: 0,
        }
    }

    #[test]
    fn append_examples() {
        let mut log = EventLog::new();
        log.append(ev(1, 10)).unwrap();
        for s in 2..=5 {
            log.append(ev(s, 0)).unwrap();
        }
        assert_eq!(
            log.append(ev(7, 0)),
            Err(LogError::SequenceGap {
                expected: 6,
                got: 7
            })
        );
        log.append(ev(6, -250)).unwrap();
        assert_eq!(log.len(), 6);
        assert_eq!(log.events()[5].delta(), Money::from_minor(-250));
    }

    #[test]
    fn jsonl_field_order_is_fixed() {
        let line = serde_json::to_string(&ev(1, -250)).unwrap();
        assert_eq!(
            line,
            r#"{"seq":1,"day":0,"kind":"refund","txn_id":"t1","user":"u1","amount_minor":-250,"category":"GROCERY","period":0}"#
        );
    }

    #[test]
    fn parse_errors_name_the_line() {
        let mut log = EventLog::new();
        log.append(ev(1, 1)).unwrap();
        log.append(ev(2, 2)).unwrap();
        let text = log.to_jsonl();
        let truncated = &text[..text.len() - 10];
        match EventLog::from_jsonl(truncated) {
            Err(LogError::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        let gap = text.replace("\"seq\":2", "\"seq\":3");
        assert!(matches!(
            EventLog::from_jsonl(&gap),
            Err(LogError::SequenceGap {
                expected: 2,
                got: 3
            })
        ));
    }

    #[test]
    fn floats_are_rejected() {
        let line = r#"{"seq":1,"day":0,"kind":"refund","txn_id":"t1","user":"u1","amount_minor":2.5,"category":"","period":0}"#;
        assert!(matches!(
            EventLog::from_jsonl(line),
            Err(LogError::Parse { line: 1, .. })
        ));
    }
}

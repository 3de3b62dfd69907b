use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Lifecycle of a transaction as seen by the reward layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TransactionStatus {
    Pending,
    Settled,
    PartRef,
    Refunded,
    Chargeback,
}

impl TransactionStatus {
    pub const ALL: [TransactionStatus; 5] = [
        TransactionStatus::Pending,
        TransactionStatus::Settled,
        TransactionStatus::PartRef,
        TransactionStatus::Refunded,
        TransactionStatus::Chargeback,
    ];

    /// The edge set of the reward state machine.
    pub fn can_transition(self, to: TransactionStatus) -> bool {
        use TransactionStatus::*;
        matches!(
            (self, to),
            (Pending, Settled)
                | (Pending, Refunded)
                | (Settled, PartRef)
                | (Settled, Chargeback)
                | (PartRef, PartRef)
                | (PartRef, Refunded)
        )
    }

    /// Short label used in trace tables.
    pub fn short(self) -> &'static str {
        match self {
            TransactionStatus::Pending => "PND",
            TransactionStatus::Settled => "SET",
            TransactionStatus::PartRef => "P_REF",
            TransactionStatus::Refunded => "REF",
            TransactionStatus::Chargeback => "CHG",
        }
    }
}

impl fmt::Display for TransactionStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            TransactionStatus::Pending => "PENDING",
            TransactionStatus::Settled => "SETTLED",
            TransactionStatus::PartRef => "PART_REF",
            TransactionStatus::Refunded => "REFUNDED",
            TransactionStatus::Chargeback => "CHARGEBACK",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[error("illegal transition {from} -> {to}")]
pub struct IllegalTransition {
    pub from: TransactionStatus,
    pub to: TransactionStatus,
}

/// Validates a single state-machine step. Has no ledger side effects.
pub fn transition(
    from: TransactionStatus,
    to: TransactionStatus,
) -> Result<TransactionStatus, IllegalTransition> {
    if from.can_transition(to) {
        Ok(to)
    } else {
        Err(IllegalTransition { from, to })
    }
}

#[cfg(test)]
mod tests {
    use super::TransactionStatus::*;
    use super::*;

    #[test]
    fn examples() {
        assert_eq!(transition(Pending, Settled), Ok(Settled));
        assert_eq!(transition(PartRef, PartRef), Ok(PartRef));
        assert_eq!(
            transition(Refunded, Settled),
            Err(IllegalTransition {
                from: Refunded,
                to: Settled
            })
        );
        assert!(transition(Settled, Settled).is_err());
    }

    #[test]
    fn closure_matrix() {
        let allowed = [
            (Pending, Settled),
            (Pending, Refunded),
            (Settled, PartRef),
            (Settled, Chargeback),
            (PartRef, PartRef),
            (PartRef, Refunded),
        ];
        let mut accepted = 0;
        for from in TransactionStatus::ALL {
            for to in TransactionStatus::ALL {
                let ok = transition(from, to).is_ok();
                assert_eq!(ok, allowed.contains(&(from, to)), "{from} -> {to}");
                accepted += ok as usize;
            }
        }
        assert_eq!(accepted, allowed.len());
    }
}

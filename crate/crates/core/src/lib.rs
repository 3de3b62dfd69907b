//! Reward-ledger simulator for studying refund abuse in cashback programs.
//!
//! The crate models a per-user reward ledger, several issuer behaviours
//! (from refund-blind to fully defensive), an attacker that exploits the gap
//! between reward crediting and refund handling, and log-only invariant
//! checks that decide whether a design kept its books straight.

pub mod adversary;
pub mod checker;
pub mod engine;
pub mod issuer;
pub mod ledger;
pub mod sim;

pub use ledger::{
    Day, EngineConfig, EventKind, EventLog, Money, Period, Rate, RewardEvent, RewardRecord,
    Transaction, TransactionStatus, UserLedger,
};

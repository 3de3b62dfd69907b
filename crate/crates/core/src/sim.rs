//! Day-by-day simulation harness, scenario files, deterministic replay and
//! the leakage estimator.
//!
//! Each simulated day opens with any statement close that falls on it, then
//! delivers refunds that were in flight, then applies that day's user intents.
//! After the last activity the clock runs to the close of the period that
//! contains it, which gives batch issuers their final reconciliation pass.

use std::collections::{BTreeMap, VecDeque};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checker::{self, IntegritySnapshot, RedeemViolation, RrcVerdict};
use crate::engine::{EngineError, RedeemReason};
use crate::issuer::{IssuerDesk, IssuerVariant};
use crate::ledger::{
    ConfigError, Day, EngineConfig, EventKind, EventLog, LogError, Money, Period, Rate,
    RewardRecord, Rounding, Transaction, TransactionStatus, UserLedger,
};

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum SimError {
    #[error("scenario event {index}: {reason}")]
    ScenarioInvalid { index: usize, reason: String },
    #[error("{0}")]
    Invalid(String),
    #[error("unsupported schema version {0}")]
    Schema(u32),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Log(#[from] LogError),
    #[error("replay diverged from the recorded log at seq {seq}")]
    ReplayDivergence { seq: u64 },
}

/// A user action submitted to the simulator.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Action {
    Purchase {
        txn_id: String,
        #[serde(rename = "amount_minor")]
        amount: Money,
        category: String,
    },
    Refund {
        txn_id: String,
        #[serde(rename = "amount_minor")]
        amount: Money,
    },
    /// Dispute for the full amount of a transaction with no prior refunds.
    Chargeback { txn_id: String },
    #[serde(alias = "redeem-request")]
    Redeem {
        #[serde(rename = "amount_minor")]
        amount: Money,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScenarioEvent {
    pub day: Day,
    #[serde(flatten)]
    pub action: Action,
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

fn default_user() -> String {
    "u1".to_string()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Scenario {
    #[serde(default = "default_schema")]
    pub schema: u32,
    #[serde(default)]
    pub label: String,
    #[serde(default = "default_user")]
    pub user: String,
    pub config: EngineConfig,
    #[serde(default)]
    pub events: Vec<ScenarioEvent>,
}

impl Scenario {
    pub fn from_json(text: &str) -> Result<Scenario, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// One row of the per-event ledger trace.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TraceRow {
    pub seq: u64,
    pub day: Day,
    pub kind: EventKind,
    pub txn_id: String,
    /// Principal behind the entry: the reward base for credits, the refunded
    /// amount for adjustments.
    pub principal: Option<Money>,
    pub delta: Money,
    pub reward_original: Option<Money>,
    pub reward_current: Option<Money>,
    pub balance: Money,
    pub status: Option<TransactionStatus>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DeniedRedemption {
    pub day: Day,
    pub amount: Money,
    pub reason: RedeemReason,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub schema: u32,
    pub variant: IssuerVariant,
    pub user: String,
    pub ledger: UserLedger,
    pub records: BTreeMap<String, RewardRecord>,
    pub transactions: Vec<Transaction>,
    pub trace: Vec<TraceRow>,
    pub snapshots: Vec<IntegritySnapshot>,
    pub quiescent: Option<IntegritySnapshot>,
    pub rrc_delta_days: Day,
    pub rrc: Vec<RrcVerdict>,
    pub redemption_violations: Vec<RedeemViolation>,
    pub denied_redemptions: Vec<DeniedRedemption>,
    pub log: EventLog,
}

impl SimulationReport {
    /// True when the run ended inside the reward entitlement, every refund
    /// was reflected within the RRC window and no redemption broke a guard.
    pub fn clean(&self) -> bool {
        self.quiescent.is_none_or(|q| q.holds)
            && self.rrc.iter().all(|v| v.within_bound)
            && self.redemption_violations.is_empty()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises")
    }
}

/// RRC window expected of a design: the delivery delay for live handlers,
/// one period for anything that waits for a close.
pub fn default_rrc_delta(config: &EngineConfig) -> Day {
    if config.variant.profile().is_event_driven() {
        config.refund_delivery_delay_days
    } else {
        config.period_length_days
    }
}

#[derive(Debug, Clone, Default)]
struct Principal {
    amount: Money,
    refunded: Money,
    chargeback: bool,
    category: String,
    period: Period,
}

/// Incremental driver: call [`begin_day`](Simulator::begin_day) with
/// non-decreasing days, [`submit`](Simulator::submit) actions, then
/// [`finish`](Simulator::finish).
#[derive(Debug, Clone)]
pub struct Simulator {
    desk: IssuerDesk,
    user: String,
    day: Option<Day>,
    next_close: Period,
    in_flight: BTreeMap<Day, Vec<(String, Money, bool)>>,
    principal: BTreeMap<String, Principal>,
    last_activity: Option<Day>,
    trace: Vec<TraceRow>,
    trace_refunds: BTreeMap<String, VecDeque<Money>>,
    denied: Vec<DeniedRedemption>,
}

impl Simulator {
    pub fn new(user: &str, config: EngineConfig) -> Result<Simulator, SimError> {
        config.validate()?;
        Ok(Simulator {
            desk: IssuerDesk::new(user, config),
            user: user.to_string(),
            day: None,
            next_close: 0,
            in_flight: BTreeMap::new(),
            principal: BTreeMap::new(),
            last_activity: None,
            trace: Vec::new(),
            trace_refunds: BTreeMap::new(),
            denied: Vec::new(),
        })
    }

    pub fn config(&self) -> &EngineConfig {
        &self.desk.config
    }

    pub fn desk(&self) -> &IssuerDesk {
        &self.desk
    }

    pub fn ledger(&self) -> &UserLedger {
        &self.desk.book.ledger
    }

    pub fn today(&self) -> Option<Day> {
        self.day
    }

    /// Advances the clock to `day`, running every close and delivery on the way.
    pub fn begin_day(&mut self, day: Day) -> Result<(), SimError> {
        let start = match self.day {
            Some(d) if day < d => {
                return Err(SimError::Invalid(format!(
                    "day {day} is before current day {d}"
                )));
            }
            Some(d) if d == day => return Ok(()),
            Some(d) => d + 1,
            None => 0,
        };
        for d in start..=day {
            self.open_day(d)?;
        }
        Ok(())
    }

    fn set_clock(&mut self, day: Day) {
        self.day = Some(day);
        let period = self.desk.config.period_of(day);
        self.desk.book.today = day;
        self.desk.book.current_period = period;
    }

    fn open_day(&mut self, day: Day) -> Result<(), SimError> {
        self.set_clock(day);
        if self.desk.config.close_day(self.next_close) == day {
            let n = self.next_close;
            self.next_close += 1;
            self.desk
                .book
                .emit(EventKind::StatementClose, "", Money::ZERO, "", n)?;
            self.step(|desk| desk.close(n))?;
        }
        if let Some(batch) = self.in_flight.remove(&day) {
            for (txn, x, chargeback) in batch {
                self.step(|desk| desk.refund(&txn, x, chargeback))?;
            }
        }
        Ok(())
    }

    /// Hook for callers that want an explicit end-of-day boundary.
    pub fn end_day(&mut self) {}

    /// Runs one desk operation and records trace rows for what it emitted.
    fn step<F>(&mut self, op: F) -> Result<(), SimError>
    where
        F: FnOnce(&mut IssuerDesk) -> Result<(), EngineError>,
    {
        let before = self.desk.book.log.len();
        let mut balance = self.desk.book.ledger.balance;
        let result = op(&mut self.desk);
        let new: Vec<_> = self.desk.book.log.events()[before..].to_vec();
        for e in new {
            if e.kind.is_intent() {
                continue;
            }
            balance += e.delta();
            let record = self.desk.book.records.get(&e.txn_id).copied();
            let principal = if e.kind.is_settlement() {
                record.map(|r| r.reward_base)
            } else if e.kind.adjusts_refund() {
                self.trace_refunds
                    .get_mut(&e.txn_id)
                    .and_then(VecDeque::pop_front)
            } else if e.kind == EventKind::Redeem {
                Some(-e.amount)
            } else {
                None
            };
            self.trace.push(TraceRow {
                seq: e.seq,
                day: e.day,
                kind: e.kind,
                txn_id: e.txn_id.clone(),
                principal,
                delta: e.delta(),
                reward_original: record.map(|r| r.reward_original),
                reward_current: record.map(|r| r.reward_current),
                balance,
                status: self.desk.txns.get(&e.txn_id).map(|t| t.status),
            });
        }
        result.map_err(SimError::from)
    }

    fn touch(&mut self, day: Day) {
        self.last_activity = Some(self.last_activity.map_or(day, |d| d.max(day)));
    }

    /// Applies one user action on the current day.
    pub fn submit(&mut self, action: &Action) -> Result<(), SimError> {
        let Some(day) = self.day else {
            return Err(SimError::Invalid("submit before begin_day".into()));
        };
        self.set_clock(day);
        match action {
            Action::Purchase {
                txn_id,
                amount,
                category,
            } => {
                if txn_id.is_empty() || self.principal.contains_key(txn_id) {
                    return Err(SimError::Invalid(format!(
                        "duplicate or empty transaction id {txn_id:?}"
                    )));
                }
                if !amount.is_positive() {
                    return Err(SimError::Invalid(format!(
                        "purchase {txn_id} must be positive"
                    )));
                }
                let period = self.desk.config.period_of(day);
                self.principal.insert(
                    txn_id.clone(),
                    Principal {
                        amount: *amount,
                        category: category.clone(),
                        period,
                        ..Default::default()
                    },
                );
                self.touch(day);
                self.desk
                    .book
                    .emit(EventKind::Purchase, txn_id, *amount, category, period)?;
                let txn = Transaction::new(txn_id, &self.user, *amount, category, period);
                self.step(|desk| desk.purchase(txn))
            }
            Action::Refund { txn_id, amount } => self.post_refund(day, txn_id, Some(*amount)),
            Action::Chargeback { txn_id } => self.post_refund(day, txn_id, None),
            Action::Redeem { amount } => {
                if !amount.is_positive() {
                    return Err(SimError::Invalid("redemption must be positive".into()));
                }
                self.touch(day);
                let period = self.desk.book.current_period;
                self.desk
                    .book
                    .emit(EventKind::RedeemRequest, "", *amount, "", period)?;
                match self.step(|desk| desk.redeem(*amount)) {
                    Err(SimError::Engine(EngineError::RedeemDenied(reason))) => {
                        self.denied.push(DeniedRedemption {
                            day,
                            amount: *amount,
                            reason,
                        });
                        Ok(())
                    }
                    other => other,
                }
            }
        }
    }

    fn post_refund(
        &mut self,
        day: Day,
        txn_id: &str,
        amount: Option<Money>,
    ) -> Result<(), SimError> {
        let p = self
            .principal
            .get_mut(txn_id)
            .ok_or_else(|| SimError::Invalid(format!("unknown transaction {txn_id:?}")))?;
        if p.chargeback {
            return Err(SimError::Invalid(format!(
                "{txn_id} was already charged back"
            )));
        }
        let chargeback = amount.is_none();
        let x = match amount {
            Some(x) => {
                if !x.is_positive() {
                    return Err(SimError::Invalid(format!(
                        "refund on {txn_id} must be positive"
                    )));
                }
                if p.refunded + x > p.amount {
                    return Err(SimError::Invalid(format!(
                        "refund of {x} on {txn_id} exceeds amount {} ({} already refunded)",
                        p.amount, p.refunded
                    )));
                }
                x
            }
            None => {
                if p.refunded.is_positive() {
                    return Err(SimError::Invalid(format!(
                        "chargeback on partly refunded {txn_id}"
                    )));
                }
                p.chargeback = true;
                p.amount
            }
        };
        p.refunded += x;
        let (category, period) = (p.category.clone(), p.period);
        let kind = if chargeback {
            EventKind::ChargebackPosted
        } else {
            EventKind::RefundPosted
        };
        self.desk.book.emit(kind, txn_id, x, &category, period)?;
        self.trace_refunds
            .entry(txn_id.to_string())
            .or_default()
            .push_back(x);
        let deliver = day + self.desk.config.refund_delivery_delay_days;
        self.touch(deliver);
        if deliver == day {
            let id = txn_id.to_string();
            self.step(|desk| desk.refund(&id, x, chargeback))
        } else {
            self.in_flight
                .entry(deliver)
                .or_default()
                .push((txn_id.to_string(), x, chargeback));
            Ok(())
        }
    }

    /// Runs to quiescence and builds the report.
    pub fn finish(mut self) -> Result<SimulationReport, SimError> {
        if let Some(last) = self.last_activity {
            let end = self.desk.config.close_day(self.desk.config.period_of(last));
            let target = self.day.map_or(end, |d| d.max(end));
            self.begin_day(target)?;
        }
        let config = self.desk.config.clone();
        let log = self.desk.book.log.clone();
        let delta = default_rrc_delta(&config);
        Ok(SimulationReport {
            schema: SCHEMA_VERSION,
            variant: config.variant,
            user: self.user,
            ledger: self.desk.book.ledger.clone(),
            records: self.desk.book.records.clone(),
            transactions: self.desk.txns.iter().cloned().collect(),
            trace: self.trace,
            snapshots: checker::integrity_series(&log, &config),
            quiescent: log
                .last_day()
                .map(|d| checker::check_integrity(&log, &config, d)),
            rrc_delta_days: delta,
            rrc: checker::check_rrc(&log, &config, delta),
            redemption_violations: checker::check_redemptions(&log, &config),
            denied_redemptions: self.denied,
            log,
        })
    }
}

/// Runs a scenario file end to end.
pub fn run(scenario: &Scenario) -> Result<SimulationReport, SimError> {
    if scenario.schema != SCHEMA_VERSION {
        return Err(SimError::Schema(scenario.schema));
    }
    let mut sim = Simulator::new(&scenario.user, scenario.config.clone())?;
    let mut last_day = 0;
    for (index, ev) in scenario.events.iter().enumerate() {
        let invalid = |reason: String| SimError::ScenarioInvalid { index, reason };
        if ev.day < last_day {
            return Err(invalid(format!("day {} is out of order", ev.day)));
        }
        last_day = ev.day;
        sim.begin_day(ev.day).map_err(|e| invalid(e.to_string()))?;
        sim.submit(&ev.action).map_err(|e| invalid(e.to_string()))?;
    }
    sim.finish()
}

/// Rebuilds the user intents recorded in a log.
pub fn intents_from_log(log: &EventLog) -> Vec<ScenarioEvent> {
    log.iter()
        .filter_map(|e| {
            let action = match e.kind {
                EventKind::Purchase => Action::Purchase {
                    txn_id: e.txn_id.clone(),
                    amount: e.amount,
                    category: e.category.clone(),
                },
                EventKind::RefundPosted => Action::Refund {
                    txn_id: e.txn_id.clone(),
                    amount: e.amount,
                },
                EventKind::ChargebackPosted => Action::Chargeback {
                    txn_id: e.txn_id.clone(),
                },
                EventKind::RedeemRequest => Action::Redeem { amount: e.amount },
                _ => return None,
            };
            Some(ScenarioEvent { day: e.day, action })
        })
        .collect()
}

/// Re-executes the intents in `log` under `config` and checks that the
/// result reproduces the log entry for entry.
pub fn replay(log: &EventLog, config: &EngineConfig) -> Result<SimulationReport, SimError> {
    let user = log
        .iter()
        .next()
        .map_or_else(default_user, |e| e.user.clone());
    let mut sim = Simulator::new(&user, config.clone())?;
    for ev in intents_from_log(log) {
        sim.begin_day(ev.day)?;
        sim.submit(&ev.action)?;
    }
    if let Some(last) = log.last_day() {
        sim.begin_day(last.max(sim.today().unwrap_or(0)))?;
    }
    let report = sim.finish()?;
    let ours = report.log.events();
    let theirs = log.events();
    if let Some(i) = (0..ours.len().max(theirs.len())).find(|&i| ours.get(i) != theirs.get(i)) {
        return Err(SimError::ReplayDivergence { seq: i as u64 + 1 });
    }
    Ok(report)
}

/// Annual leakage: abusers times twelve capped months.
pub fn leakage_estimate(p: Rate, users: u64, monthly_cap: Money) -> Money {
    let numer = p.numer() as i128 * users as i128 * 12 * monthly_cap.minor() as i128;
    Money::from_minor(crate::ledger::div_round(numer, p.denom() as i128, Rounding::HalfEven) as i64)
}

/// Millions of dollars with at least one decimal, e.g. `$0.06M`, `$6.0M`.
pub fn format_millions(m: Money) -> String {
    const SCALE: i64 = 100_000_000; // cents per million dollars
    let minor = m.minor();
    let sign = if minor < 0 { "-" } else { "" };
    let abs = minor.unsigned_abs() as i64;
    let frac = format!("{:08}", abs % SCALE);
    let mut frac = frac.trim_end_matches('0').to_string();
    if frac.is_empty() {
        frac.push('0');
    }
    format!("{sign}${}.{frac}M", abs / SCALE)
}

fn format_fraction(p: Rate) -> String {
    let s = p.to_string();
    match s.strip_suffix('%') {
        Some(v) if !v.contains('.') && !v.contains('/') => format!("{v}.0%"),
        _ => s,
    }
}

pub const IMPACT_FRACTIONS: [(i64, i64); 3] = [(1, 1000), (1, 100), (5, 100)];
pub const IMPACT_USERS: [(u64, &str); 3] =
    [(100_000, "100K"), (1_000_000, "1M"), (10_000_000, "10M")];

/// The 3x3 sensitivity grid at a given monthly cap.
pub fn impact_table(monthly_cap: Money) -> String {
    let mut rows = vec![std::iter::once("Abuse fraction p".to_string())
        .chain(IMPACT_USERS.iter().map(|(_, l)| format!("|U|={l}")))
        .collect::<Vec<_>>()];
    for (n, d) in IMPACT_FRACTIONS {
        let p = Rate::new(n, d).expect("valid fraction");
        let mut row = vec![format_fraction(p)];
        for (users, _) in IMPACT_USERS {
            row.push(format_millions(leakage_estimate(p, users, monthly_cap)));
        }
        rows.push(row);
    }
    let widths: Vec<usize> = (0..4)
        .map(|i| rows.iter().map(|r| r[i].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for r in &rows {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

fn short_money(m: Money) -> String {
    let s = m.to_string();
    s.strip_suffix(".00").map(str::to_string).unwrap_or(s)
}

fn kind_label(kind: EventKind) -> &'static str {
    match kind {
        EventKind::Settle => "Settle",
        EventKind::Refund => "Refund",
        EventKind::Chargeback => "Chargeback",
        EventKind::Redeem => "Redeem",
        EventKind::ReconcileSettle => "Close settle",
        EventKind::ReconcileClawback => "Close clawback",
        EventKind::ReconcileDeduct => "Close deduct",
        EventKind::HoldSet => "Hold",
        other => other.as_str(),
    }
}

/// Human-readable ledger trace, one line per reward entry.
pub fn render_trace(rows: &[TraceRow]) -> String {
    let opt = |m: Option<Money>| m.map_or_else(|| "-".to_string(), |m| m.to_string());
    let mut table = vec![["Day", "Event", "R_orig", "R[id]", "B[u]", "Status"]
        .map(String::from)
        .to_vec()];
    for r in rows {
        let event = match r.principal {
            Some(p) => format!("{} {}", kind_label(r.kind), short_money(p)),
            None => kind_label(r.kind).to_string(),
        };
        let event = if r.txn_id.is_empty() {
            event
        } else {
            format!("{event} ({})", r.txn_id)
        };
        table.push(vec![
            r.day.to_string(),
            event,
            opt(r.reward_original),
            opt(r.reward_current),
            r.balance.signed(),
            r.status
                .map_or_else(|| "-".to_string(), |s| s.short().to_string()),
        ]);
    }
    let widths: Vec<usize> = (0..6)
        .map(|i| {
            table
                .iter()
                .map(|r| r[i].chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for r in &table {
        let line: Vec<String> = r
            .iter()
            .enumerate()
            .map(|(i, c)| format!("{c:<w$}", w = widths[i]))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    out
}

/// Short plain-text summary of a report.
pub fn render_summary(report: &SimulationReport) -> String {
    let mut out = String::new();
    let l = &report.ledger;
    out.push_str(&format!("variant: {}\n", report.variant));
    out.push_str(&format!(
        "balance: {}  redeemed: {}  net reward: {}\n",
        l.balance.signed(),
        l.redeemed_total,
        checker::net_reward(l)
    ));
    if let Some(q) = report.quiescent {
        out.push_str(&format!(
            "day {}: net spend {}, net reward {}, bound {} -> integrity {}\n",
            q.day,
            q.net_spend,
            q.net_reward,
            q.bound,
            if q.holds { "holds" } else { "VIOLATED" }
        ));
    }
    let transient = report.snapshots.iter().filter(|s| !s.holds).count();
    if transient > 0 {
        out.push_str(&format!("integrity failed on {transient} logged day(s)\n"));
    }
    for v in &report.rrc {
        let restored = v
            .restored_by_day
            .map_or_else(|| "never".to_string(), |d| format!("day {d}"));
        out.push_str(&format!(
            "refund seq {} ({}) day {}: restored {} -> {} (delta {} days)\n",
            v.refund_event_seq,
            v.txn_id,
            v.refund_day,
            restored,
            if v.within_bound { "ok" } else { "VIOLATED" },
            report.rrc_delta_days
        ));
    }
    for v in &report.redemption_violations {
        out.push_str(&format!(
            "redeem seq {} day {}: {}\n",
            v.seq, v.day, v.reason
        ));
    }
    if !report.denied_redemptions.is_empty() {
        out.push_str(&format!(
            "denied redemptions: {}\n",
            report.denied_redemptions.len()
        ));
    }
    out
}

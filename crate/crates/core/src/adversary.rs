//! The double-dip reward attack (DDRA): buy, redeem the reward as early as the
//! issuer allows, refund the purchase, keep whatever the issuer fails to claw
//! back. Outcomes are measured at quiescence from the event log.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::checker::{self, RrcVerdict};
use crate::engine;
use crate::issuer::IssuerVariant;
use crate::ledger::{Day, EngineConfig, EventKind, EventLog, Money, Rate, Rounding};
use crate::sim::{Action, SimError, SimulationReport, Simulator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Timing {
    /// Purchase on day 5 of a period, refund on day 15 of the same period.
    SameCycle,
    /// Purchase on day 20 of a period, refund on day 5 of the next one.
    CrossCycle,
}

impl Timing {
    /// (purchase offset, refund offset) relative to the start of the cycle's period.
    fn offsets(self, period_len: Day) -> (Day, Day) {
        match self {
            Timing::SameCycle => (5, 15),
            Timing::CrossCycle => (20, period_len + 5),
        }
    }
}

impl fmt::Display for Timing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Timing::SameCycle => "same-cycle",
            Timing::CrossCycle => "cross-cycle",
        })
    }
}

impl FromStr for Timing {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "same-cycle" => Ok(Timing::SameCycle),
            "cross-cycle" => Ok(Timing::CrossCycle),
            _ => Err(format!(
                "unknown timing {s:?}; expected same-cycle or cross-cycle"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DdraParams {
    pub variant: IssuerVariant,
    pub purchase: Money,
    pub category: String,
    pub rate: Rate,
    pub cap: Option<Money>,
    pub cycles: u32,
    pub timing: Timing,
    /// Share of each purchase refunded; zero gives the no-refund control.
    pub refund_fraction: Rate,
    pub delivery_delay_days: Day,
}

impl DdraParams {
    /// $100 GROCERY purchases at 5% with a $50 monthly cap, one cross-cycle round.
    pub fn new(variant: IssuerVariant) -> Self {
        DdraParams {
            variant,
            purchase: Money::from_major(100),
            category: "GROCERY".to_string(),
            rate: Rate::percent(5),
            cap: Some(Money::from_major(50)),
            cycles: 1,
            timing: Timing::CrossCycle,
            refund_fraction: Rate::ONE,
            delivery_delay_days: 0,
        }
    }

    pub fn config(&self) -> EngineConfig {
        let mut c =
            EngineConfig::single_category(self.variant, &self.category, self.rate, self.cap);
        c.refund_delivery_delay_days = self.delivery_delay_days;
        c
    }

    pub fn label(&self) -> String {
        if self.refund_fraction.is_zero() {
            "control".to_string()
        } else if self.refund_fraction == Rate::ONE {
            format!("{} ddra", self.timing)
        } else {
            format!("{} ddra, {} refund", self.timing, self.refund_fraction)
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackOutcome {
    pub variant: IssuerVariant,
    pub scenario: String,
    pub net_spend_final: Money,
    pub net_reward_final: Money,
    pub redeemed_total: Money,
    /// Redeemed value the user keeps beyond the entitlement at quiescence.
    pub value_extracted: Money,
    /// Days from the first redemption to the first clawback. `None` when no
    /// clawback ever posts.
    pub float_days: Option<Day>,
    pub cycles_run: u32,
    /// Days on which a positive balance could not be redeemed.
    pub blocked_redemptions: u32,
    /// Reward was redeemed before a refund posted and the clawback came later.
    pub asymmetric_float: bool,
    /// RRC verdicts against a one-period window.
    pub rrc: Vec<RrcVerdict>,
}

/// Runs the attack and returns the outcome plus the full simulation report.
pub fn run_ddra_report(params: &DdraParams) -> Result<(AttackOutcome, SimulationReport), SimError> {
    if !params.purchase.is_positive() || params.cycles == 0 {
        return Err(SimError::Invalid(
            "purchase must be positive and cycles at least 1".into(),
        ));
    }
    let config = params.config();
    let len = config.period_length_days;
    let (buy_at, refund_at) = params.timing.offsets(len);
    let refund = params
        .refund_fraction
        .apply(params.purchase, Rounding::Floor);

    let mut sim = Simulator::new("u1", config.clone())?;
    let last_refund = (params.cycles - 1) * len + refund_at + params.delivery_delay_days;
    let horizon = config.close_day(config.period_of(last_refund));
    let mut blocked = 0;

    for day in 0..=horizon {
        sim.begin_day(day)?;
        for k in 0..params.cycles {
            let id = format!("t{}", k + 1);
            if day == k * len + buy_at {
                sim.submit(&Action::Purchase {
                    txn_id: id.clone(),
                    amount: params.purchase,
                    category: params.category.clone(),
                })?;
            }
            if day == k * len + refund_at && refund.is_positive() {
                sim.submit(&Action::Refund {
                    txn_id: id,
                    amount: refund,
                })?;
            }
        }
        // Cash out everything the issuer will release today.
        let balance = sim.ledger().balance;
        if balance.is_positive() {
            let decision = engine::can_redeem(sim.ledger(), balance, day, sim.config())?;
            if decision.allowed {
                sim.submit(&Action::Redeem { amount: balance })?;
            } else {
                blocked += 1;
            }
        }
        sim.end_day();
    }

    let report = sim.finish()?;
    let outcome = measure(params, &config, &report, blocked);
    Ok((outcome, report))
}

pub fn run_ddra(params: &DdraParams) -> Result<AttackOutcome, SimError> {
    run_ddra_report(params).map(|(o, _)| o)
}

fn measure(
    params: &DdraParams,
    config: &EngineConfig,
    report: &SimulationReport,
    blocked: u32,
) -> AttackOutcome {
    let log = &report.log;
    let last = log.last_day().unwrap_or(0);
    let quiescent = checker::check_integrity(log, config, last);
    let redeemed = report.ledger.redeemed_total;
    let excess = quiescent.net_reward - quiescent.bound;
    AttackOutcome {
        variant: params.variant,
        scenario: params.label(),
        net_spend_final: quiescent.net_spend,
        net_reward_final: checker::net_reward(&report.ledger),
        redeemed_total: redeemed,
        value_extracted: redeemed.min(excess).max(Money::ZERO),
        float_days: float_days(log),
        cycles_run: params.cycles,
        blocked_redemptions: blocked,
        asymmetric_float: asymmetric_float(log, config),
        rrc: checker::check_rrc(log, config, config.period_length_days),
    }
}

/// Days between the first redemption and the first negative clawback.
pub fn float_days(log: &EventLog) -> Option<Day> {
    let first_claw = log
        .iter()
        .find(|e| e.kind.adjusts_refund() && e.delta().is_negative())
        .map(|e| e.day);
    let first_redeem = log
        .iter()
        .find(|e| e.kind == EventKind::Redeem)
        .map(|e| e.day);
    match (first_redeem, first_claw) {
        (None, _) => Some(0),
        (Some(_), None) => None,
        (Some(r), Some(c)) => Some(c.saturating_sub(r)),
    }
}

/// True when some refund's reward adjustment posted after the refund itself,
/// on a transaction whose reward had already been redeemed by the posting day
/// and before its own statement closed.
pub fn asymmetric_float(log: &EventLog, config: &EngineConfig) -> bool {
    let verdicts = checker::check_rrc(log, config, 0);
    verdicts.iter().any(|v| {
        let Some(adjusted) = v.adjusted_day else {
            return false;
        };
        if adjusted <= v.refund_day {
            return false;
        }
        let Some(settle) = log
            .iter()
            .find(|e| e.kind.is_settlement() && e.txn_id == v.txn_id)
        else {
            return false;
        };
        let close = config.close_day(settle.period);
        log.iter().any(|e| {
            e.kind == EventKind::Redeem
                && e.day >= settle.day
                && e.day <= v.refund_day
                && e.day < close
        })
    })
}

/// Standard battery: same-cycle, cross-cycle and half-refund cross-cycle
/// attacks plus a no-refund control, one cycle each.
pub fn battery_params(variant: IssuerVariant) -> Vec<DdraParams> {
    let base = DdraParams::new(variant);
    vec![
        DdraParams {
            timing: Timing::SameCycle,
            ..base.clone()
        },
        base.clone(),
        DdraParams {
            refund_fraction: Rate::new(1, 2).expect("half"),
            ..base.clone()
        },
        DdraParams {
            refund_fraction: Rate::ZERO,
            ..base
        },
    ]
}

pub fn run_battery(variant: IssuerVariant) -> Vec<AttackOutcome> {
    battery_params(variant)
        .iter()
        .map(|p| run_ddra(p).expect("battery scenarios are valid"))
        .collect()
}

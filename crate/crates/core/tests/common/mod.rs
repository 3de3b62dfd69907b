//! Shared helpers for the integration tests.
#![allow(dead_code)]

use std::path::PathBuf;

use rand::Rng;
use rewardsim::issuer::IssuerVariant;
use rewardsim::sim::{Action, Scenario, ScenarioEvent, SCHEMA_VERSION};
use rewardsim::{EngineConfig, Money, Rate};

pub const CATEGORIES: [&str; 3] = ["GROCERY", "GAS", "TRAVEL"];

pub fn fixtures() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures")
}

pub fn load_scenario(name: &str) -> Scenario {
    let path = fixtures().join("scenarios").join(name);
    let text = std::fs::read_to_string(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
    Scenario::from_json(&text).expect("fixture parses")
}

pub fn golden(name: &str) -> String {
    std::fs::read_to_string(fixtures().join("golden").join(name)).expect("golden file")
}

pub fn scenario_files() -> Vec<PathBuf> {
    let mut files: Vec<_> = std::fs::read_dir(fixtures().join("scenarios"))
        .expect("scenario dir")
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "json"))
        .collect();
    files.sort();
    files
}

/// Knobs for the random scenario generator.
#[derive(Debug, Clone, Copy)]
pub struct GenOptions {
    pub max_periods: u32,
    pub max_txns: u32,
    /// Whole-dollar purchases when true, arbitrary cents otherwise.
    pub whole_dollars: bool,
    pub with_redeems: bool,
    pub allow_caps: bool,
    pub max_delay: u32,
}

impl Default for GenOptions {
    fn default() -> Self {
        GenOptions {
            max_periods: 6,
            max_txns: 20,
            whole_dollars: true,
            with_redeems: true,
            allow_caps: true,
            max_delay: 0,
        }
    }
}

pub struct Generated {
    pub scenario: Scenario,
    pub cap_free: bool,
    /// Refund and chargeback intents in the scenario.
    pub refunds: usize,
    pub purchases: usize,
}

/// Random but always valid activity for one user: refunds never exceed the
/// purchase, chargebacks only hit untouched transactions.
pub fn random_scenario<R: Rng>(rng: &mut R, variant: IssuerVariant, opts: GenOptions) -> Generated {
    let mut config = EngineConfig::new(variant);
    for cat in CATEGORIES {
        if rng.gen_bool(0.85) {
            config = config.with_rate(cat, Rate::percent(rng.gen_range(1..=10)));
        }
    }
    let cap_free = !opts.allow_caps || rng.gen_bool(0.5);
    if !cap_free {
        for cat in CATEGORIES {
            if rng.gen_bool(0.7) {
                config = config.with_cap(cat, Money::from_major(rng.gen_range(1..=50)));
            }
        }
    }
    if rng.gen_bool(0.2) {
        config.b_min = Money::from_major(rng.gen_range(1..=5));
    }
    if opts.max_delay > 0 {
        config.refund_delivery_delay_days = rng.gen_range(0..=opts.max_delay);
    }

    let len = config.period_length_days;
    let horizon = rng.gen_range(1..=opts.max_periods) * len;
    let n = rng.gen_range(1..=opts.max_txns);
    let mut purchases = Vec::new();
    let mut later = Vec::new();
    let mut refunds = 0;

    for i in 0..n {
        let id = format!("t{}", i + 1);
        let day = rng.gen_range(0..horizon);
        let amount = if opts.whole_dollars {
            Money::from_major(rng.gen_range(1..=500))
        } else {
            Money::from_minor(rng.gen_range(1..=50_000))
        };
        let category = CATEGORIES[rng.gen_range(0..CATEGORIES.len())].to_string();
        purchases.push(ScenarioEvent {
            day,
            action: Action::Purchase {
                txn_id: id.clone(),
                amount,
                category,
            },
        });
        let roll: f64 = rng.gen();
        if roll < 0.05 {
            later.push(ScenarioEvent {
                day: rng.gen_range(day..horizon + len),
                action: Action::Chargeback { txn_id: id },
            });
            refunds += 1;
        } else if roll < 0.6 {
            let mut left = amount.minor();
            let mut d = day;
            for _ in 0..rng.gen_range(1..=3) {
                if left == 0 {
                    break;
                }
                let x = if rng.gen_bool(0.3) {
                    left
                } else {
                    rng.gen_range(1..=left)
                };
                left -= x;
                d = rng.gen_range(d..=d + len);
                later.push(ScenarioEvent {
                    day: d,
                    action: Action::Refund {
                        txn_id: id.clone(),
                        amount: Money::from_minor(x),
                    },
                });
                refunds += 1;
            }
        }
    }
    if opts.with_redeems {
        for _ in 0..rng.gen_range(0..=8) {
            later.push(ScenarioEvent {
                day: rng.gen_range(0..horizon + len),
                action: Action::Redeem {
                    amount: Money::from_minor(rng.gen_range(1..=3_000)),
                },
            });
        }
    }
    // Stable sort keeps purchases ahead of same-day refunds.
    let mut events = purchases;
    events.extend(later);
    events.sort_by_key(|e| e.day);

    Generated {
        scenario: Scenario {
            schema: SCHEMA_VERSION,
            label: "random".into(),
            user: "u1".into(),
            config,
            events,
        },
        cap_free,
        refunds,
        purchases: n as usize,
    }
}

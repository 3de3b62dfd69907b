mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rewardsim::checker;
use rewardsim::engine::{self, RewardBook};
use rewardsim::issuer::IssuerVariant;
use rewardsim::ledger::{div_round, Rounding, Transactions};
use rewardsim::sim::{self, Action, Scenario, ScenarioEvent, SCHEMA_VERSION};
use rewardsim::{EngineConfig, EventKind, Money, Rate, Transaction, TransactionStatus};

use common::{random_scenario, GenOptions};

fn generated(seed: u64, variant: IssuerVariant, opts: GenOptions) -> common::Generated {
    random_scenario(&mut ChaCha8Rng::seed_from_u64(seed), variant, opts)
}

fn variant() -> impl Strategy<Value = IssuerVariant> {
    proptest::sample::select(IssuerVariant::ALL.to_vec())
}

fn settled(amount: i64, pct: i64, cap: Option<i64>) -> (RewardBook, Transaction, EngineConfig) {
    let config = EngineConfig::single_category(
        IssuerVariant::DefensiveInstant,
        "GROCERY",
        Rate::percent(pct),
        cap.map(Money::from_minor),
    );
    let mut book = RewardBook::new("u1");
    let mut txn = Transaction::new("t1", "u1", Money::from_minor(amount), "GROCERY", 0);
    engine::reward_on_settlement(&mut book, &mut txn, &config).unwrap();
    (book, txn, config)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn settlement_reward_is_floored_and_capped(amount in 1i64..10_000_000, pct in 0i64..=25, cap in 0i64..20_000, used in 0i64..20_000) {
        let config = EngineConfig::single_category(IssuerVariant::C, "GAS", Rate::percent(pct), Some(Money::from_minor(cap)));
        let mut book = RewardBook::new("u1");
        book.ledger.set_used(0, "GAS", Money::from_minor(used));
        let mut txn = Transaction::new("t1", "u1", Money::from_minor(amount), "GAS", 0);
        let r = engine::reward_on_settlement(&mut book, &mut txn, &config).unwrap().minor();
        let raw = amount * pct / 100;
        prop_assert_eq!(r, raw.min(cap - used).max(0));
        prop_assert!(r * 100 <= amount * pct);
        prop_assert_eq!(book.ledger.balance.minor(), r);
        prop_assert_eq!(txn.status, TransactionStatus::Settled);
    }

    #[test]
    fn clawbacks_track_the_cumulative_share(amount in 1i64..1_000_000, pct in 1i64..=20, cuts in proptest::collection::vec(1u32..100, 1..6), full in any::<bool>()) {
        let (mut book, mut txn, config) = settled(amount, pct, None);
        let r_orig = book.records["t1"].reward_original.minor();
        // Split the amount into refunds proportional to `cuts`.
        let total: u32 = cuts.iter().sum();
        let target = if full { amount } else { amount * i64::from(total) / (i64::from(total) + 50) };
        let mut refunds: Vec<i64> = cuts.iter().map(|c| target * i64::from(*c) / i64::from(total)).collect();
        let spare = target - refunds.iter().sum::<i64>();
        *refunds.last_mut().unwrap() += spare;
        let mut so_far = 0i64;
        let mut clawed = 0i64;
        for x in refunds.into_iter().filter(|x| *x > 0) {
            let c = engine::reward_on_refund(&mut book, &mut txn, Money::from_minor(x), &config).unwrap().minor();
            prop_assert!(c >= 0);
            so_far += x;
            clawed += c;
            let want = div_round(so_far as i128 * r_orig as i128, amount as i128, Rounding::Ceil) as i64;
            prop_assert_eq!(clawed, want);
            prop_assert!(c <= div_round(x as i128 * r_orig as i128, amount as i128, Rounding::Ceil) as i64 + 1);
        }
        let rec = book.records["t1"];
        prop_assert_eq!(rec.reward_current.minor(), r_orig - clawed);
        if full {
            prop_assert_eq!(clawed, r_orig);
            prop_assert_eq!(rec.reward_current, Money::ZERO);
            prop_assert_eq!(txn.status, TransactionStatus::Refunded);
        }
    }

    #[test]
    fn status_machine_has_six_edges(path in proptest::collection::vec(0usize..5, 1..8)) {
        let edges = TransactionStatus::ALL
            .iter()
            .flat_map(|a| TransactionStatus::ALL.iter().map(move |b| (*a, *b)))
            .filter(|(a, b)| a.can_transition(*b))
            .count();
        prop_assert_eq!(edges, 6);
        let mut txn = Transaction::new("t1", "u1", Money::from_major(1), "X", 0);
        for i in path {
            let to = TransactionStatus::ALL[i];
            let from = txn.status;
            let ok = txn.transition(to).is_ok();
            prop_assert_eq!(ok, from.can_transition(to));
            prop_assert_eq!(txn.status, if ok { to } else { from });
        }
    }

    #[test]
    fn second_settlement_is_rejected(amount in 1i64..1_000_000) {
        let (mut book, mut txn, config) = settled(amount, 5, None);
        let before = book.clone();
        prop_assert!(engine::reward_on_settlement(&mut book, &mut txn, &config).is_err());
        prop_assert_eq!(book, before);
    }

    #[test]
    fn reconcile_is_idempotent(amounts in proptest::collection::vec(1i64..100_000, 1..6)) {
        let config = EngineConfig::single_category(IssuerVariant::DefensiveCycle, "GROCERY", Rate::percent(5), Some(Money::from_major(50)));
        let mut book = RewardBook::new("u1");
        let mut txns = Transactions::new();
        for (i, a) in amounts.iter().enumerate() {
            txns.insert(Transaction::new(&format!("t{i}"), "u1", Money::from_minor(*a), "GROCERY", 0));
        }
        engine::statement_cycle_reconcile(&mut book, &mut txns, &[], &[], 0, &config).unwrap();
        let snapshot = (book.clone(), txns.clone());
        engine::statement_cycle_reconcile(&mut book, &mut txns, &[], &[], 0, &config).unwrap();
        prop_assert_eq!((book, txns), snapshot);
    }

    #[test]
    fn late_refunds_leave_old_caps_alone(amount in 1i64..200_000, x_share in 1i64..=100) {
        let config = EngineConfig::single_category(IssuerVariant::C, "GROCERY", Rate::percent(5), Some(Money::from_major(50)));
        let x = (amount * x_share / 100).max(1);
        let scenario = Scenario {
            schema: SCHEMA_VERSION,
            label: String::new(),
            user: "u1".into(),
            config,
            events: vec![
                ScenarioEvent { day: 3, action: Action::Purchase { txn_id: "t1".into(), amount: Money::from_minor(amount), category: "GROCERY".into() } },
                ScenarioEvent { day: 40, action: Action::Refund { txn_id: "t1".into(), amount: Money::from_minor(x) } },
            ],
        };
        let report = sim::run(&scenario).unwrap();
        let settle = report.log.iter().find(|e| e.kind == EventKind::Settle).map_or(Money::ZERO, |e| e.amount);
        prop_assert_eq!(report.ledger.used(0, "GROCERY"), settle);
    }

    #[test]
    fn replay_reproduces_any_run(seed in any::<u64>(), v in variant()) {
        let g = generated(seed, v, GenOptions { max_delay: 4, ..GenOptions::default() });
        let first = sim::run(&g.scenario).unwrap();
        let again = sim::replay(&first.log, &g.scenario.config).unwrap();
        prop_assert_eq!(first.to_json(), again.to_json());
    }

    #[test]
    fn refund_blind_designs_never_claw(seed in any::<u64>(), v in proptest::sample::select(vec![IssuerVariant::A, IssuerVariant::B])) {
        let report = sim::run(&generated(seed, v, GenOptions::default()).scenario).unwrap();
        for e in report.log.iter().filter(|e| e.kind != EventKind::Redeem) {
            prop_assert!(!e.delta().is_negative(), "{:?}", e);
        }
    }

    #[test]
    fn zero_floor_variant_never_goes_negative(seed in any::<u64>()) {
        let report = sim::run(&generated(seed, IssuerVariant::V3a, GenOptions::default()).scenario).unwrap();
        for row in &report.trace {
            prop_assert!(!row.balance.is_negative(), "{:?}", row);
        }
    }

    #[test]
    fn f_claws_only_at_closes(seed in any::<u64>()) {
        let g = generated(seed, IssuerVariant::F, GenOptions::default());
        let report = sim::run(&g.scenario).unwrap();
        let closes: Vec<_> = report.log.iter().filter(|e| e.kind == EventKind::StatementClose).map(|e| e.day).collect();
        for e in report.log.iter().filter(|e| e.kind.adjusts_refund() && e.delta().is_negative()) {
            prop_assert_eq!(e.kind, EventKind::ReconcileClawback);
            prop_assert!(closes.contains(&e.day), "{:?}", e);
        }
    }

    #[test]
    fn equivalent_designs_write_equal_logs(seed in any::<u64>()) {
        for group in [
            vec![IssuerVariant::C, IssuerVariant::DefensiveInstant],
            vec![IssuerVariant::D, IssuerVariant::E, IssuerVariant::DefensiveCycle],
        ] {
            let logs: Vec<String> = group
                .iter()
                .map(|v| {
                    let mut g = generated(seed, *v, GenOptions::default());
                    // Same guard settings so only the variant differs.
                    g.scenario.config.event_driven_only = false;
                    sim::run(&g.scenario).unwrap().log.to_jsonl()
                })
                .collect();
            prop_assert!(logs.windows(2).all(|w| w[0] == w[1]), "{:?}", group);
        }
    }

    #[test]
    fn arbitrary_cents_stay_near_the_oracle(seed in any::<u64>(), v in proptest::sample::select(vec![IssuerVariant::DefensiveInstant, IssuerVariant::DefensiveCycle])) {
        let g = generated(seed, v, GenOptions { whole_dollars: false, allow_caps: false, ..GenOptions::default() });
        let report = sim::run(&g.scenario).unwrap();
        let nr = checker::net_reward(&report.ledger);
        let oracle = checker::oracle_bound(&report.log, &g.scenario.config);
        prop_assert!(nr <= oracle);
        prop_assert!((oracle - nr).minor() <= (g.refunds + g.purchases) as i64);
    }

    #[test]
    fn instant_refunds_never_raise_net_reward(seed in any::<u64>()) {
        let mut g = generated(seed, IssuerVariant::DefensiveInstant, GenOptions { allow_caps: false, ..GenOptions::default() });
        let rate = Rate::percent(1 + (seed % 10) as i64);
        for cat in common::CATEGORIES {
            g.scenario.config.reward_rate.insert(cat.to_string(), rate);
        }
        let report = sim::run(&g.scenario).unwrap();
        for w in report.snapshots.windows(2) {
            if w[1].net_spend <= w[0].net_spend {
                prop_assert!(w[1].net_reward <= w[0].net_reward, "{:?}", w);
            }
        }
    }

    #[test]
    fn delayed_refunds_overshoot_by_at_most_their_reward(seed in any::<u64>()) {
        let g = generated(seed, IssuerVariant::DefensiveInstant, GenOptions { max_delay: 5, ..GenOptions::default() });
        let config = &g.scenario.config;
        let report = sim::run(&g.scenario).unwrap();
        let verdicts = checker::check_rrc(&report.log, config, 0);
        for s in &report.snapshots {
            let mut in_flight: Vec<&str> = verdicts
                .iter()
                .filter(|v| v.refund_day <= s.day && v.adjusted_day.is_none_or(|a| a > s.day))
                .map(|v| v.txn_id.as_str())
                .collect();
            in_flight.sort();
            in_flight.dedup();
            let slack: Money = in_flight
                .iter()
                .map(|id| report.records.get(*id).map_or(Money::ZERO, |r| r.reward_original))
                .fold(Money::ZERO, |a, b| a + b);
            prop_assert!(s.net_reward - s.bound <= slack, "{:?} slack {}", s, slack);
        }
    }
}

//! `rewardsim` command-line front end.
//!
//! Exit codes: 0 success, 1 bad input (I/O, parse or flag errors), 2 an
//! integrity violation or a profitable attack was detected.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;

use rewardsim::adversary::{self, DdraParams, Timing};
use rewardsim::checker;
use rewardsim::issuer::{self, IssuerVariant};
use rewardsim::sim::{self, Scenario};
use rewardsim::{EngineConfig, EventLog, Money, Rate};

#[derive(Parser)]
#[command(
    name = "rewardsim",
    version,
    about = "Cashback reward-ledger simulator and refund-abuse checker"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Strategy {
    Ddra,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario file and report the ledger trace and invariant verdicts.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        /// Write the full JSON report here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write the event log (JSON Lines) here.
        #[arg(long)]
        log: Option<PathBuf>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Run the double-dip refund attack against an issuer model.
    Attack {
        #[arg(long, value_parser = parse_variant)]
        issuer: IssuerVariant,
        #[arg(long, value_enum, default_value_t = Strategy::Ddra)]
        strategy: Strategy,
        #[arg(long, value_parser = parse_timing, default_value = "cross-cycle")]
        timing: Timing,
        /// Purchase amount per cycle, in minor units.
        #[arg(long, default_value_t = 10_000)]
        purchase: i64,
        #[arg(long, default_value_t = 1)]
        cycles: u32,
        /// Monthly reward cap in minor units.
        #[arg(long, default_value_t = 5_000)]
        cap: i64,
        #[arg(long, value_parser = parse_rate, default_value = "5%")]
        rate: Rate,
        /// Share of each purchase refunded.
        #[arg(long, value_parser = parse_rate, default_value = "100%")]
        refund_fraction: Rate,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Print the issuer comparison matrix computed from the attack battery.
    Matrix {
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Check an event log against Reward Integrity and Refund Reward Consistency.
    Check {
        #[arg(long)]
        log: PathBuf,
        /// Engine config JSON, or a scenario file whose config is used.
        #[arg(long)]
        config: PathBuf,
        /// RRC window; defaults to the delivery delay for live handlers, one period otherwise.
        #[arg(long)]
        delta_days: Option<u32>,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
    /// Estimate annual leakage from abuse fraction, users and monthly cap.
    Impact {
        #[arg(long, value_parser = parse_rate)]
        p: Option<Rate>,
        #[arg(long)]
        users: Option<u64>,
        /// Monthly cap in minor units.
        #[arg(long, default_value_t = 5_000)]
        cap: i64,
        /// Print the full sensitivity grid.
        #[arg(long)]
        table: bool,
        #[arg(long, value_enum, default_value_t = Format::Table)]
        format: Format,
    },
}

fn parse_variant(s: &str) -> Result<IssuerVariant, String> {
    s.parse()
}

fn parse_timing(s: &str) -> Result<Timing, String> {
    s.parse()
}

fn parse_rate(s: &str) -> Result<Rate, String> {
    s.parse()
        .map_err(|e: rewardsim::ledger::RateError| e.to_string())
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

fn print_json<T: Serialize>(value: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(value).expect("serialisable")
    );
}

fn load_config(path: &Path) -> Result<EngineConfig> {
    let text = read(path)?;
    match serde_json::from_str::<EngineConfig>(&text) {
        Ok(c) => Ok(c),
        Err(config_err) => match serde_json::from_str::<Scenario>(&text) {
            Ok(s) => Ok(s.config),
            Err(_) => Err(anyhow!("{}: {config_err}", path.display())),
        },
    }
}

fn simulate(scenario: &Path, out: Option<&Path>, log: Option<&Path>, format: Format) -> Result<u8> {
    let text = read(scenario)?;
    let scenario_doc =
        Scenario::from_json(&text).map_err(|e| anyhow!("{}: {e}", scenario.display()))?;
    let report = sim::run(&scenario_doc).map_err(|e| anyhow!("{}: {e}", scenario.display()))?;
    if let Some(path) = out {
        write(path, &report.to_json())?;
    }
    if let Some(path) = log {
        write(path, &report.log.to_jsonl())?;
    }
    match format {
        Format::Json => println!("{}", report.to_json()),
        Format::Table => {
            if !scenario_doc.label.is_empty() {
                println!("{}\n", scenario_doc.label);
            }
            print!("{}", sim::render_trace(&report.trace));
            println!();
            print!("{}", sim::render_summary(&report));
        }
    }
    Ok(if report.clean() { 0 } else { 2 })
}

#[allow(clippy::too_many_arguments)]
fn attack(
    issuer: IssuerVariant,
    timing: Timing,
    purchase: i64,
    cycles: u32,
    cap: i64,
    rate: Rate,
    refund_fraction: Rate,
    format: Format,
) -> Result<u8> {
    let params = DdraParams {
        purchase: Money::from_minor(purchase),
        cycles,
        timing,
        cap: Some(Money::from_minor(cap)),
        rate,
        refund_fraction,
        ..DdraParams::new(issuer)
    };
    let outcome = adversary::run_ddra(&params)?;
    match format {
        Format::Json => print_json(&outcome),
        Format::Table => {
            println!("issuer:            {}", outcome.variant);
            println!(
                "scenario:          {} x{}",
                outcome.scenario, outcome.cycles_run
            );
            println!("net spend:         {}", outcome.net_spend_final);
            println!("net reward:        {}", outcome.net_reward_final);
            println!("redeemed:          {}", outcome.redeemed_total);
            println!("value extracted:   {}", outcome.value_extracted);
            let float = outcome
                .float_days
                .map_or_else(|| "never clawed back".to_string(), |d| format!("{d} days"));
            println!("float:             {float}");
            println!("blocked redeems:   {}", outcome.blocked_redemptions);
        }
    }
    if outcome.value_extracted.is_positive() {
        return Ok(2);
    }
    if outcome.asymmetric_float {
        eprintln!(
            "warning: redeemed reward was held for a float window before the clawback posted"
        );
    }
    Ok(0)
}

fn matrix(format: Format) -> Result<u8> {
    let rows = issuer::comparison_matrix();
    match format {
        Format::Json => print_json(&rows),
        Format::Table => print!("{}", issuer::render_matrix(&rows)),
    }
    Ok(0)
}

#[derive(Serialize)]
struct CheckOutput {
    delta_days: u32,
    snapshots: Vec<checker::IntegritySnapshot>,
    quiescent: Option<checker::IntegritySnapshot>,
    rrc: Vec<checker::RrcVerdict>,
    redemption_violations: Vec<checker::RedeemViolation>,
    passed: bool,
}

fn check(log_path: &Path, config_path: &Path, delta: Option<u32>, format: Format) -> Result<u8> {
    let config = load_config(config_path)?;
    let text = read(log_path)?;
    let log = EventLog::from_jsonl(&text).map_err(|e| anyhow!("{}: {e}", log_path.display()))?;
    let delta = delta.unwrap_or_else(|| sim::default_rrc_delta(&config));
    let quiescent = log
        .last_day()
        .map(|d| checker::check_integrity(&log, &config, d));
    let rrc = checker::check_rrc(&log, &config, delta);
    let redemption_violations = checker::check_redemptions(&log, &config);
    let passed = quiescent.is_none_or(|q| q.holds)
        && rrc.iter().all(|v| v.within_bound)
        && redemption_violations.is_empty();
    let out = CheckOutput {
        delta_days: delta,
        snapshots: checker::integrity_series(&log, &config),
        quiescent,
        rrc,
        redemption_violations,
        passed,
    };
    match format {
        Format::Json => print_json(&out),
        Format::Table => {
            println!("Day  Net spend  Net reward  Bound  RI");
            for s in &out.snapshots {
                println!(
                    "{}  {}  {}  {}  {}",
                    s.day,
                    s.net_spend,
                    s.net_reward,
                    s.bound,
                    if s.holds { "ok" } else { "VIOLATED" }
                );
            }
            for v in &out.rrc {
                let restored = v
                    .restored_by_day
                    .map_or_else(|| "never".to_string(), |d| format!("day {d}"));
                println!(
                    "refund seq {} ({}) day {}: restored {} -> {}",
                    v.refund_event_seq,
                    v.txn_id,
                    v.refund_day,
                    restored,
                    if v.within_bound { "ok" } else { "VIOLATED" }
                );
            }
            for v in &out.redemption_violations {
                println!("redeem seq {} day {}: {}", v.seq, v.day, v.reason);
            }
            println!(
                "{} (delta {} days)",
                if passed { "PASS" } else { "FAIL" },
                delta
            );
        }
    }
    Ok(if passed { 0 } else { 2 })
}

#[derive(Serialize)]
struct ImpactCell {
    p: Rate,
    users: u64,
    annual_minor: Money,
    display: String,
}

fn impact(
    p: Option<Rate>,
    users: Option<u64>,
    cap: i64,
    table: bool,
    format: Format,
) -> Result<u8> {
    if cap < 0 {
        return Err(anyhow!("--cap must not be negative"));
    }
    let cap = Money::from_minor(cap);
    if table {
        match format {
            Format::Table => print!("{}", sim::impact_table(cap)),
            Format::Json => {
                let mut cells = Vec::new();
                for (n, d) in sim::IMPACT_FRACTIONS {
                    let p = Rate::new(n, d).expect("valid fraction");
                    for (users, _) in sim::IMPACT_USERS {
                        let v = sim::leakage_estimate(p, users, cap);
                        cells.push(ImpactCell {
                            p,
                            users,
                            annual_minor: v,
                            display: sim::format_millions(v),
                        });
                    }
                }
                print_json(&cells);
            }
        }
        return Ok(0);
    }
    let (Some(p), Some(users)) = (p, users) else {
        return Err(anyhow!("impact needs --p and --users, or --table"));
    };
    let v = sim::leakage_estimate(p, users, cap);
    match format {
        Format::Table => println!("{v} per year ({})", sim::format_millions(v)),
        Format::Json => print_json(&ImpactCell {
            p,
            users,
            annual_minor: v,
            display: sim::format_millions(v),
        }),
    }
    Ok(0)
}

fn dispatch(cli: Cli) -> Result<u8> {
    match cli.command {
        Command::Simulate {
            scenario,
            out,
            log,
            format,
        } => simulate(&scenario, out.as_deref(), log.as_deref(), format),
        Command::Attack {
            issuer,
            strategy: Strategy::Ddra,
            timing,
            purchase,
            cycles,
            cap,
            rate,
            refund_fraction,
            format,
        } => attack(
            issuer,
            timing,
            purchase,
            cycles,
            cap,
            rate,
            refund_fraction,
            format,
        ),
        Command::Matrix { format } => matrix(format),
        Command::Check {
            log,
            config,
            delta_days,
            format,
        } => check(&log, &config, delta_days, format),
        Command::Impact {
            p,
            users,
            cap,
            table,
            format,
        } => impact(p, users, cap, table, format),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}

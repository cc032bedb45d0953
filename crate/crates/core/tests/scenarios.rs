use blackchain::adversary::{AttackProfile, Strategy};
use blackchain::config::{ConfigError, Grid, ScenarioConfig};
use blackchain::ledger::{verify_chain, GenesisConfig};
use blackchain::runner::{run, sweep, write_sweep_csv, CHAIN_FILE, GENESIS_FILE};

fn small(seed: u64) -> ScenarioConfig {
    ScenarioConfig {
        seed,
        ticks: 400,
        vehicles: 10,
        attackers: 1,
        attack_start_tick: 50,
        event_log: false,
        ..ScenarioConfig::default()
    }
}

fn rsu(strategy: Strategy, node: u32) -> AttackProfile {
    AttackProfile {
        strategy,
        node,
        targets: Vec::new(),
        offset_m: 0.0,
        start_tick: 0,
        end_tick: None,
    }
}

#[test]
fn replay_is_byte_identical() {
    let mut cfg = small(4);
    cfg.event_log = true;
    let a = run(&cfg).unwrap();
    let b = run(&cfg).unwrap();
    assert_eq!(a.chain, b.chain);
    assert_eq!(a.metrics, b.metrics);
    assert_eq!(a.events, b.events);
    let c = run(&small(5)).unwrap();
    assert_ne!(a.metrics.naive_edr_bytes, c.metrics.naive_edr_bytes);
}

#[test]
fn honest_run_revokes_nobody() {
    let cfg = ScenarioConfig {
        attackers: 0,
        ..small(2)
    };
    let o = run(&cfg).unwrap();
    assert_eq!(o.metrics.false_revocations, 0);
    assert!(o.oracles.revoked.is_empty());
    assert_eq!(o.metrics.ledger_blocks, 1);
}

#[test]
fn attacker_is_revoked_everywhere_and_metrics_are_consistent() {
    let o = run(&small(1)).unwrap();
    let m = &o.metrics;
    assert_eq!(m.attackers_revoked, 1);
    assert_eq!(m.false_revocations, 0);
    assert!(m.max_latency().unwrap() <= 600);
    assert!(m.reports_committed <= m.reports_generated);
    assert!(m.reports_aggregated <= m.reports_committed);
    assert_eq!(m.ledger_bytes, o.chain.len() as u64);
    assert!(m.dedup_ratio > 0.0 && m.dedup_ratio < 1.0);
    assert!(o.oracles.ledgers_agree);
    assert!(!o.audit.is_empty());
    assert!(verify_chain(&o.chain, &o.genesis).unwrap().is_valid());
}

#[test]
fn invalid_config_is_named() {
    let cfg = ScenarioConfig {
        radio_range_m: -1.0,
        ..small(1)
    };
    match run(&cfg) {
        Err(ConfigError::Invalid { key, .. }) => assert_eq!(key, "radio_range_m"),
        Err(e) => panic!("unexpected error {e}"),
        Ok(_) => panic!("negative range accepted"),
    }
}

#[test]
fn artifacts_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&small(3)).unwrap();
    o.write_artifacts(dir.path()).unwrap();
    let chain = std::fs::read(dir.path().join(CHAIN_FILE)).unwrap();
    let genesis = GenesisConfig::from_toml(&std::fs::read_to_string(dir.path().join(GENESIS_FILE)).unwrap()).unwrap();
    assert_eq!(chain, o.chain);
    assert!(verify_chain(&chain, &genesis).unwrap().is_valid());
}

#[test]
fn one_silent_rsu_does_not_stop_revocation() {
    let cfg = ScenarioConfig {
        attack: vec![rsu(Strategy::ByzRsuSilent, 2)],
        ..small(1)
    };
    let o = run(&cfg).unwrap();
    assert_eq!(o.metrics.attackers_revoked, 1);
    assert_eq!(o.metrics.false_revocations, 0);
}

#[test]
fn one_equivocating_rsu_does_not_stop_revocation() {
    let cfg = ScenarioConfig {
        attack: vec![rsu(Strategy::ByzRsuEquivocate, 0)],
        ..small(1)
    };
    let o = run(&cfg).unwrap();
    assert_eq!(o.metrics.attackers_revoked, 1);
    assert_eq!(o.metrics.false_revocations, 0);
    assert!(verify_chain(&o.chain, &o.genesis).unwrap().is_valid());
}

#[test]
fn two_byzantine_rsus_lose_liveness_not_safety() {
    let cfg = ScenarioConfig {
        attack: vec![rsu(Strategy::ByzRsuEquivocate, 0), rsu(Strategy::ByzRsuSilent, 1)],
        ..small(1)
    };
    let o = run(&cfg).unwrap();
    assert_eq!(o.metrics.false_revocations, 0);
    assert!(verify_chain(&o.chain, &o.genesis).unwrap().is_valid());
    assert_eq!(o.metrics.statements_decided, 0);
}

#[test]
fn bad_mouthing_never_reaches_the_ledger() {
    let cfg = ScenarioConfig {
        attackers: 0,
        attack: vec![AttackProfile {
            strategy: Strategy::BadMouth,
            node: 0,
            targets: vec![1, 2, 3],
            offset_m: 0.0,
            start_tick: 20,
            end_tick: None,
        }],
        ..small(6)
    };
    let o = run(&cfg).unwrap();
    assert!(o.oracles.revoked.is_empty());
    assert_eq!(o.oracles.bad_in_ledger, 0);
    assert_eq!(o.oracles.bad_in_statement, 0);
}

#[test]
fn sweep_rows_and_csv() {
    let base = ScenarioConfig {
        ticks: 40,
        vehicles: 4,
        attackers: 0,
        ..small(1)
    };
    let grid = Grid::from_toml("vehicles = [3, 5]\nattackers = [0, 1]\n").unwrap();
    let rows = sweep(&base, &grid).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[0].label, "attackers=0;vehicles=3");
    assert_eq!(sweep(&base, &Grid::default()).unwrap().len(), 1);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("nested").join("sweep.csv");
    write_sweep_csv(&rows, &path).unwrap();
    assert_eq!(std::fs::read_to_string(path).unwrap().lines().count(), 5);
    let bad = Grid::from_toml("radio_range_m = [100.0]\n").unwrap();
    assert!(sweep(&base, &bad).is_err());
}

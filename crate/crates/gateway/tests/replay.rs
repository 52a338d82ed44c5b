use std::path::PathBuf;

use citysim::telemetry::Table;
use citysim::{parse_scenario, run_scenario, City, RunOptions, Scenario};
use citysim_gateway::{ClientCommand, Session};
use proptest::prelude::*;
use serde_json::{json, Value};

const START_WALL: u64 = 1_700_000_000_000;

fn corpus(name: &str) -> Scenario {
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/scenarios")
        .join(name);
    parse_scenario(&std::fs::read_to_string(path).unwrap()).unwrap()
}

fn command_pool() -> Vec<Value> {
    vec![
        json!({"target":"streetlight","action":"command","byte":"D"}),
        json!({"target":"streetlight","action":"command","byte":"H"}),
        json!({"target":"streetlight","action":"command","byte":"A"}),
        json!({"target":"streetlight","action":"ldr","value":5}),
        json!({"target":"home","action":"set","appliance":"tv","on":true}),
        json!({"target":"home","action":"set","appliance":"tv","on":false}),
        json!({"target":"security","action":"arm","armed":true}),
        json!({"target":"security","action":"presence","distance_cm":4.0}),
        json!({"target":"security","action":"fingerprint","token":"alice"}),
        json!({"target":"traffic","action":"presence","road":2,"present":true}),
        json!({"target":"traffic","action":"presence","road":3,"present":false}),
        json!({"target":"parking","action":"card","uid":"04A1B2C3"}),
        json!({"target":"parking","action":"slot","slot":1,"occupied":true}),
        json!({"target":"accident","action":"gps","lat":31.5204,"lon":74.3587}),
        json!({"target":"accident","action":"button","kind":"police"}),
        json!({"target":"accident","action":"flame","value":900}),
        json!({"target":"display","action":"notice","text":"ROAD CLOSED"}),
        json!({"target":"display","action":"env","temp_c":21.5,"rh_pct":40.0}),
        json!({"target":"kernel","action":"shutdown"}),
    ]
}

fn telemetry_json(city: &City) -> Value {
    city.telemetry().export_json()
}

/// Drives a session with (wall step, command index or advance) pairs, then
/// replays its log and compares everything observable.
fn check_replay(base: &Scenario, ops: &[(u64, Option<usize>)]) {
    let pool = command_pool();
    let mut session = Session::new(base, START_WALL).unwrap();
    let mut wall = START_WALL + 1_000;
    let mut accepted = 0;
    for &(dt, op) in ops {
        wall += dt;
        match op {
            None => {
                session.advance_to_wall(wall).unwrap();
            }
            Some(i) => {
                let mut cmd: ClientCommand = serde_json::from_value(pool[i % pool.len()].clone()).unwrap();
                // stamped a little before the kernel saw it
                cmd.received_wall_ms = wall - dt % 150;
                if session.map_realtime_to_virtual(cmd).is_ok() {
                    accepted += 1;
                }
            }
        }
    }
    session.advance_to_wall(wall + 3_000).unwrap();
    let horizon = session.virtual_ms();
    let live = session.runner().city();

    let log = session.command_log();
    let replayed = parse_scenario(&log).unwrap();
    assert!(replayed.warnings.is_empty(), "{:?}", replayed.warnings);
    assert_eq!(
        replayed.steps.len(),
        base.steps.iter().filter(|s| s.at.millis() <= horizon).count() + accepted
    );
    let live_actions: Vec<_> = session
        .runner()
        .log()
        .iter()
        .map(|s| (s.at, s.action.clone()))
        .collect();
    let replay_actions: Vec<_> = replayed.steps.iter().map(|s| (s.at, s.action.clone())).collect();
    assert_eq!(replay_actions, live_actions);
    let report = run_scenario(
        &replayed,
        None,
        &RunOptions {
            until_ms: Some(horizon),
        },
    )
    .unwrap();
    let city = &report.city;

    assert_eq!(city.now(), live.now());
    assert_eq!(city.transcript_text(), live.transcript_text());
    assert_eq!(telemetry_json(city), telemetry_json(live));
    assert_eq!(city.state(), live.state());
}

#[test]
fn replay_of_command_log_matches_live_run() {
    let ops: Vec<(u64, Option<usize>)> = (0..200)
        .map(|i| ((i * 37 % 400) as u64, if i % 3 == 0 { None } else { Some(i * 7) }))
        .collect();
    check_replay(&Scenario::default(), &ops);
}

#[test]
fn replay_with_scripted_steps_interleaved() {
    for name in [
        "traffic_skip.jsonl",
        "accident_dispatch.jsonl",
        "parking.jsonl",
        "streetlight.jsonl",
    ] {
        let base = corpus(name);
        let ops: Vec<(u64, Option<usize>)> = (0..120)
            .map(|i| ((i * 53 % 900) as u64, if i % 4 == 0 { None } else { Some(i * 5 + 1) }))
            .collect();
        check_replay(&base, &ops);
    }
}

#[test]
fn history_row_count_matches_csv_lines() {
    let mut session = Session::new(&corpus("parking.jsonl"), START_WALL).unwrap();
    session.advance_to_wall(START_WALL + 60_000).unwrap();
    for table in Table::ALL {
        let body = session.history(table.name()).unwrap();
        let rows = body[table.name()].as_array().unwrap().len();
        let csv = session.runner().city().telemetry().table_csv(table).unwrap();
        let lines = csv.split(|b| *b == b'\n').filter(|l| !l.is_empty()).count();
        assert_eq!(rows, lines - 1, "{table}");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn any_interleaving_replays_identically(
        ops in prop::collection::vec((0u64..600, prop::option::weighted(0.7, 0usize..64)), 1..80)
    ) {
        check_replay(&Scenario::default(), &ops);
    }
}

#[test]
fn late_gps_fix_is_stamped_with_its_scheduled_instant() {
    let mut session = Session::new(&Scenario::default(), START_WALL).unwrap();
    session.advance_to_wall(START_WALL + 2_500).unwrap();
    let mut cmd: ClientCommand =
        serde_json::from_value(json!({"target":"accident","action":"gps","lat":31.5204,"lon":74.3587})).unwrap();
    cmd.received_wall_ms = START_WALL + 1_200;
    assert_eq!(session.map_realtime_to_virtual(cmd).unwrap().at_ms, 2_501);
    let live = &session.runner().log()[0];
    let replayed = parse_scenario(&session.command_log()).unwrap();
    assert_eq!(replayed.steps[0].action, live.action);
    assert!(format!("{:?}", live.action).contains(",000002,"));
}

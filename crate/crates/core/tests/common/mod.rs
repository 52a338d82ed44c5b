#![allow(dead_code)]

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use citysim::{parse_scenario, run_scenario, City, RunOptions, Table};

pub const CARD: &str = "A1B2C3D4";
pub const TOKENS: [&str; 3] = ["alice", "bob", "carol"];

fn step(at: u64, target: &str, event: &str, args: serde_json::Value) -> String {
    let mut obj = json!({"at_ms": at, "target": target, "event": event});
    for (k, v) in args.as_object().unwrap() {
        obj[k] = v.clone();
    }
    obj.to_string()
}

/// A scenario touching every controller, with some invalid inputs mixed in.
pub fn random_scenario(seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let config = json!({"config": {
        "epoch": "2021-06-01T06:00:00",
        "seed": seed,
        "fingerprints": TOKENS,
        "whitelist": {CARD: "P1"},
        "plates": [{"plate": "LHR 786", "owner": "A", "status": "REGISTERED"},
                   {"plate": "BAD 1", "owner": "B", "status": "CRIMINAL"}],
        "links": [
            {"id": "bt-streetlight", "kind": "serial", "target": "streetlight", "latency_ms": 20},
            {"id": "bt-display", "kind": "serial", "target": "display", "latency_ms": 20},
            {"id": "wifi-home", "kind": "lan", "target": "home", "latency_ms": 50, "loss": rng.gen_range(0.0..0.3)},
            {"id": "gsm", "kind": "sms", "target": "sms", "latency_ms": 2000},
            {"id": "gps", "kind": "gps", "target": "accident", "latency_ms": 20}
        ]
    }});
    let mut lines = vec![config.to_string()];
    let mut at = 0u64;
    let n = rng.gen_range(20..150);
    for _ in 0..n {
        at += rng.gen_range(0..3000);
        let line = match rng.gen_range(0..20) {
            0 => step(
                at,
                "streetlight",
                "command",
                json!({"byte": (["H","D","F","A","0","1","5","8","X"].choose(&mut rng).unwrap())}),
            ),
            1 => step(at, "streetlight", "ldr", json!({"value": rng.gen_range(0..40)})),
            2 => step(
                at,
                "streetlight",
                "lane",
                json!({"lane": rng.gen_range(1..=8), "distance_cm": rng.gen_range(0.0..200.0)}),
            ),
            3 => step(
                at,
                "home",
                "set",
                json!({"appliance": (["fridge","ac","light1","light2","fan","tv"].choose(&mut rng).unwrap()), "on": rng.gen_bool(0.5)}),
            ),
            4 => step(
                at,
                "door",
                "fingerprint",
                json!({"token": (["alice","bob","eve"].choose(&mut rng).unwrap())}),
            ),
            5 => step(at, "security", "arm", json!({"armed": rng.gen_bool(0.6)})),
            6 => step(
                at,
                "security",
                "presence",
                json!({"distance_cm": rng.gen_range(0.0..40.0)}),
            ),
            7 => step(at, "security", "smoke", json!({"value": rng.gen_range(0..800)})),
            8 | 9 => step(
                at,
                "traffic",
                "presence",
                json!({"road": rng.gen_range(1..=4), "present": rng.gen_bool(0.5)}),
            ),
            10 => step(
                at,
                "traffic",
                "plate",
                json!({"road": rng.gen_range(1..=4), "plate": (["lhr 786","BAD 1","ZZZ 9"].choose(&mut rng).unwrap())}),
            ),
            11 => step(
                at,
                "parking",
                "card",
                json!({"uid": ([CARD, "DEADBEEF"].choose(&mut rng).unwrap())}),
            ),
            12 => step(at, "parking", "entry", json!({"present": true})),
            13 => step(
                at,
                "parking",
                "slot",
                json!({"slot": rng.gen_range(1..=4), "occupied": rng.gen_bool(0.5)}),
            ),
            14 => step(
                at,
                "accident",
                "gps",
                json!({"lat": rng.gen_range(-89.0..89.0), "lon": rng.gen_range(-179.0..179.0)}),
            ),
            15 => step(at, "accident", "flame", json!({"value": rng.gen_range(0..1024)})),
            16 => step(
                at,
                "accident",
                "button",
                json!({"kind": (["police","ambulance","fire"].choose(&mut rng).unwrap())}),
            ),
            17 => step(at, "accident", "reset", json!({})),
            18 => {
                let len = rng.gen_range(1..50);
                let text: String = (0..len).map(|_| rng.gen_range(b' '..=b'~') as char).collect();
                step(at, "display", "notice", json!({"text": text}))
            }
            _ => step(
                at,
                "display",
                "env",
                json!({"temp_c": rng.gen_range(-5.0..55.0), "rh_pct": rng.gen_range(10.0..95.0)}),
            ),
        };
        lines.push(line);
    }
    lines.join("\n") + "\n"
}

pub fn run_text(text: &str) -> City {
    let scenario = parse_scenario(text).expect("scenario parses");
    run_scenario(&scenario, None, &RunOptions { until_ms: None })
        .expect("scenario runs")
        .city
}

/// Runs long enough past the last step for every SMS to land.
pub fn run_flushed(text: &str) -> City {
    let scenario = parse_scenario(text).expect("scenario parses");
    let until = scenario.last_time().millis() + 2_000;
    run_scenario(&scenario, None, &RunOptions { until_ms: Some(until) })
        .expect("scenario runs")
        .city
}

/// SHA-256 over the transcript and every table's CSV.
pub fn digest(city: &City) -> String {
    let mut h = Sha256::new();
    h.update(city.transcript_text().as_bytes());
    for table in Table::ALL {
        h.update(table.name().as_bytes());
        h.update(city.telemetry().table_csv(table).unwrap());
    }
    h.update(city.sms().dump_json().as_bytes());
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Round-robin with skip, worked out instant by instant from the presence
/// schedule alone. Returns (instant, road) for every grant up to `horizon`.
pub fn reference_grants(events: &[(u64, u8, bool)], horizon: u64, green_ms: u64) -> Vec<(u64, u8)> {
    let mut by_time: BTreeMap<u64, Vec<(u8, bool)>> = BTreeMap::new();
    for &(t, road, p) in events {
        by_time.entry(t).or_default().push((road, p));
    }
    let mut present = [false; 4];
    let mut last = 4u8;
    let mut phase_end: Option<u64> = None;
    let mut grants = Vec::new();
    let mut t = 0u64;
    loop {
        let next_event = by_time.range(t..).next().map(|(k, _)| *k);
        let next = match (next_event, phase_end) {
            (Some(e), Some(p)) => e.min(p),
            (Some(e), None) => e,
            (None, Some(p)) => p,
            (None, None) => break,
        };
        if next > horizon {
            break;
        }
        t = next;
        let mut woke = false;
        if let Some(evs) = by_time.get(&t) {
            for &(road, p) in evs {
                present[road as usize - 1] = p;
                woke |= p;
            }
        }
        let decide = phase_end == Some(t) || (phase_end.is_none() && woke);
        if decide {
            phase_end = None;
            for k in 1..=4u8 {
                let road = (last + k - 1) % 4 + 1;
                if present[road as usize - 1] {
                    grants.push((t, road));
                    last = road;
                    phase_end = Some(t + green_ms);
                    break;
                }
            }
        }
        t += 1;
    }
    grants
}

pub fn presence_scenario(events: &[(u64, u8, bool)]) -> String {
    let mut lines = Vec::new();
    for &(t, road, p) in events {
        lines.push(step(t, "traffic", "presence", json!({"road": road, "present": p})));
    }
    lines.join("\n")
}

pub fn random_presence(rng: &mut ChaCha8Rng) -> Vec<(u64, u8, bool)> {
    let n = rng.gen_range(1..=200);
    let mut t = 0;
    (0..n)
        .map(|_| {
            t += [0, 0, 1, 500, 5000, 19999, 20000, 20001, 45000][rng.gen_range(0..9)];
            (t, rng.gen_range(1..=4), rng.gen_bool(0.6))
        })
        .collect()
}

//! The gateway's view of a city, driven by explicit wall-clock readings.

use std::collections::BTreeSet;

use citysim::scenario::Runner;
use citysim::telemetry::Table;
use citysim::{parse_step, CityError, DeviceId, Scenario, VirtualTime};
use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};
use thiserror::Error;

/// Argument keys a client may not set; the gateway fills them in.
const RESERVED: [&str; 4] = ["at_ms", "target", "event", "assert"];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClientCommand {
    pub target: String,
    pub action: String,
    #[serde(flatten)]
    pub args: Map<String, Value>,
    /// Stamped by the gateway on receipt; any client value is overwritten.
    #[serde(default)]
    pub received_wall_ms: u64,
}

#[derive(Debug, Error)]
pub enum GatewayError {
    #[error("rejected action: {0}")]
    RejectedAction(String),
    #[error("unknown table `{0}`")]
    UnknownTable(String),
    #[error(transparent)]
    City(#[from] CityError),
    #[error("gateway stopped")]
    Stopped,
}

impl GatewayError {
    pub fn kind(&self) -> &'static str {
        match self {
            GatewayError::RejectedAction(_) => "rejected-action",
            GatewayError::UnknownTable(_) => "unknown-table",
            GatewayError::City(_) => "simulation",
            GatewayError::Stopped => "stopped",
        }
    }
}

/// A state frame pushed to subscribers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SnapshotFrame {
    pub device: DeviceId,
    pub snapshot: Value,
    pub virtual_ms: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Accepted {
    pub target: String,
    pub action: String,
    pub at_ms: u64,
}

pub struct Session {
    runner: Runner,
    start_wall_ms: u64,
}

impl Session {
    /// `start_wall_ms` is the wall reading that maps to virtual time zero.
    pub fn new(scenario: &Scenario, start_wall_ms: u64) -> Result<Self, CityError> {
        Ok(Session {
            runner: Runner::new(scenario)?,
            start_wall_ms,
        })
    }

    pub fn runner(&self) -> &Runner {
        &self.runner
    }

    /// Virtual time of everything already dispatched.
    pub fn virtual_ms(&self) -> u64 {
        self.runner.settled().map_or(0, VirtualTime::millis)
    }

    pub fn wall_to_virtual(&self, wall_ms: u64) -> VirtualTime {
        VirtualTime(wall_ms.saturating_sub(self.start_wall_ms))
    }

    /// Schedules `cmd` at `max(earliest free instant, wall-derived time)`.
    pub fn map_realtime_to_virtual(&mut self, cmd: ClientCommand) -> Result<Accepted, GatewayError> {
        if let Some(key) = cmd.args.keys().find(|k| RESERVED.contains(&k.as_str())) {
            return Err(GatewayError::RejectedAction(format!("argument `{key}` is not allowed")));
        }
        let at = self.wall_to_virtual(cmd.received_wall_ms).max(self.runner.earliest());
        let mut obj = cmd.args.clone();
        obj.insert("at_ms".into(), Value::from(at.millis()));
        obj.insert("target".into(), Value::from(cmd.target.clone()));
        obj.insert("event".into(), Value::from(cmd.action.clone()));
        let sim = self.runner.city().sim_config().clone();
        let line = self.runner.log().len() + 1;
        let step = parse_step(line, Value::Object(obj), &sim).map_err(|e| {
            let msg = e.to_string();
            let msg = msg.split_once(": ").map_or(msg.as_str(), |(_, m)| m);
            GatewayError::RejectedAction(format!("{} {}: {msg}", cmd.target, cmd.action))
        })?;
        if !self.runner.city().is_registered(step.target) {
            return Err(GatewayError::RejectedAction(format!(
                "device `{}` is not present",
                cmd.target
            )));
        }
        let at = self.runner.submit(step)?;
        Ok(Accepted {
            target: cmd.target,
            action: cmd.action,
            at_ms: at.millis(),
        })
    }

    /// Runs the city up to the wall reading and returns one frame per
    /// device that changed, in order of first change.
    pub fn advance_to_wall(&mut self, wall_ms: u64) -> Result<Vec<SnapshotFrame>, GatewayError> {
        let to = self.wall_to_virtual(wall_ms);
        if to.millis() > self.virtual_ms() || self.runner.settled().is_none() {
            self.runner.advance(to)?;
        }
        Ok(self.changed_frames())
    }

    fn changed_frames(&mut self) -> Vec<SnapshotFrame> {
        let changes = self.runner.city_mut().take_changes();
        let mut seen = BTreeSet::new();
        let now = self.virtual_ms();
        changes
            .into_iter()
            .filter(|(_, id)| seen.insert(*id))
            .map(|(_, id)| self.frame(id, now))
            .collect()
    }

    fn frame(&self, device: DeviceId, virtual_ms: u64) -> SnapshotFrame {
        SnapshotFrame {
            device,
            snapshot: self.runner.city().snapshot(device),
            virtual_ms,
        }
    }

    pub fn registered(&self) -> Vec<DeviceId> {
        DeviceId::CONTROLLERS
            .into_iter()
            .chain([DeviceId::Sms])
            .filter(|id| self.runner.city().is_registered(*id))
            .collect()
    }

    /// One frame per present device at the current instant.
    pub fn heartbeat(&self) -> Vec<SnapshotFrame> {
        let now = self.virtual_ms();
        self.registered().into_iter().map(|id| self.frame(id, now)).collect()
    }

    pub fn history(&self, table: &str) -> Result<Value, GatewayError> {
        let table: Table = table
            .parse()
            .map_err(|_| GatewayError::UnknownTable(table.to_string()))?;
        let rows = self.runner.city().telemetry().table_json(table);
        Ok(json!({ table.name(): rows }))
    }

    /// Present devices with their current snapshot and its field types.
    pub fn devices(&self) -> Value {
        let list: Vec<Value> = self
            .registered()
            .into_iter()
            .map(|id| {
                let snapshot = self.runner.city().snapshot(id);
                json!({ "id": id, "schema": schema_of(&snapshot), "snapshot": snapshot })
            })
            .collect();
        json!({ "virtual_ms": self.virtual_ms(), "devices": list })
    }

    /// Commands and scripted steps so far, as a runnable scenario.
    pub fn command_log(&self) -> String {
        self.runner.log_scenario()
    }
}

/// JSON type skeleton of a value: leaves become type names.
pub fn schema_of(v: &Value) -> Value {
    match v {
        Value::Null => json!("null"),
        Value::Bool(_) => json!("boolean"),
        Value::Number(n) if n.is_f64() => json!("number"),
        Value::Number(_) => json!("integer"),
        Value::String(_) => json!("string"),
        Value::Array(items) => match items.first() {
            Some(first) => json!({ "array": schema_of(first), "len": items.len() }),
            None => json!({ "array": "any", "len": 0 }),
        },
        Value::Object(map) => Value::Object(map.iter().map(|(k, v)| (k.clone(), schema_of(v))).collect()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cmd(v: Value, wall: u64) -> ClientCommand {
        let mut c: ClientCommand = serde_json::from_value(v).unwrap();
        c.received_wall_ms = wall;
        c
    }

    fn session() -> Session {
        Session::new(&Scenario::default(), 1_000).unwrap()
    }

    #[test]
    fn wall_offset_fixed_at_start() {
        let mut s = session();
        let a = s
            .map_realtime_to_virtual(cmd(
                json!({"target":"streetlight","action":"command","byte":"D"}),
                1_250,
            ))
            .unwrap();
        assert_eq!(a.at_ms, 250);
    }

    #[test]
    fn late_command_goes_after_settled_time() {
        let mut s = session();
        s.advance_to_wall(1_500).unwrap();
        let a = s
            .map_realtime_to_virtual(cmd(
                json!({"target":"home","action":"set","appliance":"tv","on":true}),
                1_200,
            ))
            .unwrap();
        assert_eq!(a.at_ms, 501);
    }

    #[test]
    fn order_preserved_at_same_wall_time() {
        let mut s = session();
        for _ in 0..3 {
            s.map_realtime_to_virtual(cmd(
                json!({"target":"streetlight","action":"command","byte":"H"}),
                1_100,
            ))
            .unwrap();
        }
        let ats: Vec<u64> = s.runner().log().iter().map(|st| st.at.millis()).collect();
        assert_eq!(ats, [100, 100, 100]);
    }

    #[test]
    fn dim_all_reaches_lights() {
        let mut s = session();
        s.map_realtime_to_virtual(cmd(
            json!({"target":"streetlight","action":"command","byte":"D"}),
            1_000,
        ))
        .unwrap();
        let frames = s.advance_to_wall(1_100).unwrap();
        assert_eq!(frames.len(), 1);
        assert_eq!(frames[0].device, DeviceId::Streetlight);
        assert_eq!(frames[0].snapshot["levels"][0], "DIM");
    }

    #[test]
    fn rejections() {
        let mut s = session();
        for bad in [
            json!({"target":"kernel","action":"shutdown"}),
            json!({"target":"home","action":"explode"}),
            json!({"target":"home","action":"set","appliance":"tv"}),
            json!({"target":"home","action":"set","appliance":"tv","on":true,"at_ms":5}),
            json!({"target":"sms","action":"deliver"}),
        ] {
            let err = s.map_realtime_to_virtual(cmd(bad.clone(), 1_000)).unwrap_err();
            assert_eq!(err.kind(), "rejected-action", "{bad}");
        }
        assert!(s.runner().log().is_empty());
        assert_eq!(s.runner().city().pending(), 0);
    }

    #[test]
    fn one_event_per_accepted_command() {
        let mut s = session();
        let before = s.runner().city().pending();
        s.map_realtime_to_virtual(cmd(json!({"target":"parking","action":"card","uid":"AA"}), 1_000))
            .unwrap();
        assert_eq!(s.runner().city().pending(), before + 1);
    }

    #[test]
    fn idle_advance_has_no_change_frames() {
        let mut s = session();
        s.advance_to_wall(1_000).unwrap();
        assert!(s.advance_to_wall(3_000).unwrap().is_empty());
        assert_eq!(s.heartbeat().len(), 8);
        assert!(s.heartbeat().iter().all(|f| f.virtual_ms == 2_000));
    }

    #[test]
    fn history_tables() {
        let s = session();
        assert!(s.history("smart_parking").unwrap().is_object());
        assert_eq!(s.history("nope").unwrap_err().kind(), "unknown-table");
    }

    #[test]
    fn schema_shapes() {
        assert_eq!(
            schema_of(&json!({"a": 1, "b": [true]})),
            json!({"a": "integer", "b": {"array": "boolean", "len": 1}})
        );
    }
}

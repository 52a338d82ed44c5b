//! Line-delimited JSON scenarios: timed stimuli plus assertions.
//!
//! ```text
//! # comment
//! {"config": {"epoch": "2021-03-01T18:00:00", "seed": 7, "plates": []}}
//! {"at_ms": 0, "target": "streetlight", "event": "command", "byte": "H"}
//! {"at_ms": 100, "assert": "streetlight.lights.0", "expected": "HIGH"}
//! ```
//!
//! An assertion at `t` sees every event scheduled at or before `t`.

use std::collections::VecDeque;
use std::path::Path;
use std::str::FromStr;

use chrono::NaiveDateTime;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::city::{Action, City, CityConfig, CityError};
use crate::device::DeviceId;
use crate::devices::home::ApplianceCommand;
use crate::event::{Department, Frame, PlateStatus, Stimulus};
use crate::kernel::{SimConfig, VirtualTime};
use crate::query::values_match;
use crate::transports::{compose_rmc, GpsFix, LINK_DISPLAY, LINK_GPS, LINK_HOME, LINK_STREETLIGHT};

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ScenarioError {
    #[error("line {line}: parse error: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: unknown target `{name}`")]
    UnknownTarget { line: usize, name: String },
    #[error("line {line}: {message}")]
    Invalid { line: usize, message: String },
}

impl ScenarioError {
    pub fn line(&self) -> usize {
        match self {
            ScenarioError::Parse { line, .. }
            | ScenarioError::UnknownTarget { line, .. }
            | ScenarioError::Invalid { line, .. } => *line,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Step {
    pub line: usize,
    pub at: VirtualTime,
    pub target: DeviceId,
    pub event: String,
    pub action: Action,
    /// The step as written, for re-emitting it as a scenario line.
    pub raw: Map<String, Value>,
}

impl Step {
    /// The step as one scenario line, stamped with its own instant.
    pub fn to_line(&self) -> String {
        let mut obj = Map::new();
        obj.insert("at_ms".into(), Value::from(self.at.millis()));
        for (k, v) in &self.raw {
            if k != "at_ms" {
                obj.insert(k.clone(), v.clone());
            }
        }
        Value::Object(obj).to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Assertion {
    pub line: usize,
    pub at: VirtualTime,
    pub query: String,
    pub expected: Value,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Scenario {
    pub sim: SimConfig,
    pub city: CityConfig,
    pub steps: Vec<Step>,
    pub assertions: Vec<Assertion>,
    pub warnings: Vec<String>,
}

impl Scenario {
    /// Last instant mentioned by any step or assertion.
    pub fn last_time(&self) -> VirtualTime {
        let steps = self.steps.iter().map(|s| s.at);
        let asserts = self.assertions.iter().map(|a| a.at);
        steps.chain(asserts).max().unwrap_or(VirtualTime::ZERO)
    }
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum StreetlightEvent {
    Command {
        byte: Option<String>,
        bytes: Option<String>,
    },
    Ldr {
        value: i64,
    },
    Lane {
        lane: u8,
        distance_cm: f64,
    },
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum HomeEvent {
    Set { appliance: String, on: bool },
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum SecurityEvent {
    Enroll { token: String },
    Fingerprint { token: String },
    Arm { armed: bool },
    Presence { distance_cm: f64 },
    Smoke { value: i64 },
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum TrafficEvent {
    Presence {
        road: u8,
        present: bool,
    },
    RegisterPlate {
        plate: String,
        #[serde(default)]
        owner: String,
        status: PlateStatus,
    },
    Plate {
        road: u8,
        plate: String,
    },
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum ParkingEvent {
    Card { uid: String },
    Entry { present: bool },
    Slot { slot: u8, occupied: bool },
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum AccidentEvent {
    Gps {
        sentence: Option<String>,
        lat: Option<f64>,
        lon: Option<f64>,
        #[serde(default = "yes")]
        valid: bool,
    },
    Flame {
        value: i64,
    },
    Button {
        kind: Department,
    },
    Reset,
}

fn yes() -> bool {
    true
}

#[derive(Deserialize)]
#[serde(tag = "event", rename_all = "snake_case", deny_unknown_fields)]
enum DisplayEvent {
    Notice { text: String },
    Env { temp_c: f64, rh_pct: f64 },
}

fn fields<T: DeserializeOwned>(line: usize, obj: Map<String, Value>) -> Result<T, ScenarioError> {
    serde_json::from_value(Value::Object(obj)).map_err(|e| ScenarioError::Invalid {
        line,
        message: e.to_string(),
    })
}

fn transmit(link: &str, frame: Frame) -> Action {
    Action::Transmit {
        link: link.to_string(),
        frame,
    }
}

fn stimulus(target: DeviceId, stimulus: Stimulus) -> Action {
    Action::Stimulus { target, stimulus }
}

fn invalid(line: usize, message: impl Into<String>) -> ScenarioError {
    ScenarioError::Invalid {
        line,
        message: message.into(),
    }
}

fn take_at(line: usize, obj: &mut Map<String, Value>) -> Result<VirtualTime, ScenarioError> {
    let v = obj.remove("at_ms").ok_or_else(|| invalid(line, "missing `at_ms`"))?;
    v.as_u64()
        .map(VirtualTime)
        .ok_or_else(|| invalid(line, format!("`at_ms` must be a non-negative integer, got {v}")))
}

/// Turns one step object into an action. Also used by the gateway, so a
/// live command and a scenario line share one grammar.
pub fn parse_step(line: usize, value: Value, sim: &SimConfig) -> Result<Step, ScenarioError> {
    let Value::Object(mut obj) = value else {
        return Err(invalid(line, "expected a JSON object"));
    };
    let raw = obj.clone();
    let at = take_at(line, &mut obj)?;
    let name = match obj.remove("target") {
        Some(Value::String(s)) => s,
        Some(other) => return Err(invalid(line, format!("`target` must be a string, got {other}"))),
        None => return Err(invalid(line, "missing `target`")),
    };
    let target = DeviceId::from_str(&name).map_err(|_| ScenarioError::UnknownTarget {
        line,
        name: name.clone(),
    })?;
    let event = obj
        .get("event")
        .and_then(Value::as_str)
        .ok_or_else(|| invalid(line, "missing `event`"))?
        .to_string();
    let action = match target {
        DeviceId::Streetlight => match fields(line, obj)? {
            StreetlightEvent::Command { byte, bytes } => {
                let text = match (byte, bytes) {
                    (Some(b), None) if b.len() == 1 => b,
                    (Some(b), None) => return Err(invalid(line, format!("`byte` must be one character, got {b:?}"))),
                    (None, Some(b)) if !b.is_empty() => b,
                    _ => return Err(invalid(line, "give exactly one of `byte` or a non-empty `bytes`")),
                };
                transmit(LINK_STREETLIGHT, Frame::Serial(text.into_bytes()))
            }
            StreetlightEvent::Ldr { value } => stimulus(target, Stimulus::LdrSample(value)),
            StreetlightEvent::Lane { lane, distance_cm } => {
                stimulus(target, Stimulus::LanePresence { lane, distance_cm })
            }
        },
        DeviceId::Home => match fields(line, obj)? {
            HomeEvent::Set { appliance, on } => {
                let cmd = ApplianceCommand { appliance, on };
                transmit(LINK_HOME, Frame::Lan(cmd.to_json()))
            }
        },
        DeviceId::Security => stimulus(
            target,
            match fields(line, obj)? {
                SecurityEvent::Enroll { token } => Stimulus::Enroll { token },
                SecurityEvent::Fingerprint { token } => Stimulus::Fingerprint { token },
                SecurityEvent::Arm { armed } => Stimulus::SetArmed(armed),
                SecurityEvent::Presence { distance_cm } => Stimulus::PresenceSample { distance_cm },
                SecurityEvent::Smoke { value } => Stimulus::SmokeSample(value),
            },
        ),
        DeviceId::Traffic => stimulus(
            target,
            match fields(line, obj)? {
                TrafficEvent::Presence { road, present } => Stimulus::ApproachPresence { road, present },
                TrafficEvent::RegisterPlate { plate, owner, status } => {
                    Stimulus::RegisterPlate { plate, owner, status }
                }
                TrafficEvent::Plate { road, plate } => Stimulus::PlateRead { road, plate },
            },
        ),
        DeviceId::Parking => stimulus(
            target,
            match fields(line, obj)? {
                ParkingEvent::Card { uid } => Stimulus::CardScan { uid },
                ParkingEvent::Entry { present } => Stimulus::EntryPresence(present),
                ParkingEvent::Slot { slot, occupied } => Stimulus::SlotPresence { slot, occupied },
            },
        ),
        DeviceId::Accident => match fields(line, obj)? {
            AccidentEvent::Gps {
                sentence,
                lat,
                lon,
                valid,
            } => {
                let sentence = match (sentence, lat, lon) {
                    (Some(s), None, None) => s,
                    (None, Some(lat), Some(lon)) => {
                        let mut fix = GpsFix::new(lat, lon);
                        fix.valid = valid;
                        if !fix.in_range() {
                            return Err(invalid(line, format!("coordinates ({lat}, {lon}) out of range")));
                        }
                        compose_rmc(&fix, sim.wall_clock(at))
                    }
                    _ => return Err(invalid(line, "give either `sentence` or both `lat` and `lon`")),
                };
                transmit(LINK_GPS, Frame::Gps(sentence))
            }
            AccidentEvent::Flame { value } => stimulus(target, Stimulus::FlameSample(value)),
            AccidentEvent::Button { kind } => stimulus(target, Stimulus::ButtonPress(kind)),
            AccidentEvent::Reset => stimulus(target, Stimulus::AccidentReset),
        },
        DeviceId::Display => match fields(line, obj)? {
            DisplayEvent::Notice { text } => transmit(LINK_DISPLAY, Frame::Serial(text.into_bytes())),
            DisplayEvent::Env { temp_c, rh_pct } => stimulus(target, Stimulus::EnvSample { temp_c, rh_pct }),
        },
        DeviceId::Sms => return Err(invalid(line, "the SMS center accepts no scenario events")),
    };
    Ok(Step {
        line,
        at,
        target,
        event,
        action,
        raw,
    })
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct AssertLine {
    at_ms: u64,
    #[serde(rename = "assert")]
    query: String,
    expected: Value,
}

fn parse_config(line: usize, value: Value, scenario: &mut Scenario) -> Result<(), ScenarioError> {
    let Value::Object(mut obj) = value else {
        return Err(invalid(line, "`config` must be an object"));
    };
    if let Some(epoch) = obj.remove("epoch") {
        let text = epoch
            .as_str()
            .ok_or_else(|| invalid(line, "`epoch` must be a string"))?;
        scenario.sim.epoch = parse_epoch(text).map_err(|m| invalid(line, m))?;
    }
    if let Some(seed) = obj.remove("seed") {
        scenario.sim.seed = seed
            .as_u64()
            .ok_or_else(|| invalid(line, "`seed` must be a non-negative integer"))?;
    }
    scenario.city = fields(line, obj)?;
    Ok(())
}

/// The `{"config": ...}` line that reproduces `sim` and `city`.
pub fn config_line(sim: &SimConfig, city: &CityConfig) -> String {
    let mut obj = match serde_json::to_value(city).expect("config serializes") {
        Value::Object(m) => m,
        _ => unreachable!("CityConfig is a struct"),
    };
    obj.insert(
        "epoch".into(),
        Value::from(sim.epoch.format("%Y-%m-%dT%H:%M:%S%.3f").to_string()),
    );
    obj.insert("seed".into(), Value::from(sim.seed));
    serde_json::json!({ "config": obj }).to_string()
}

/// Accepts `YYYY-MM-DDTHH:MM:SS[.fff]`, with an optional trailing `Z`.
pub fn parse_epoch(text: &str) -> Result<NaiveDateTime, String> {
    let trimmed = text.trim().trim_end_matches('Z');
    NaiveDateTime::parse_from_str(trimmed, "%Y-%m-%dT%H:%M:%S%.f").map_err(|e| format!("bad epoch `{text}`: {e}"))
}

pub fn parse_scenario(text: &str) -> Result<Scenario, ScenarioError> {
    parse_scenario_with(text, &SimOverrides::default())
}

/// Values that take precedence over the scenario's own config line.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SimOverrides {
    pub epoch: Option<NaiveDateTime>,
    pub seed: Option<u64>,
}

pub fn parse_scenario_with(text: &str, overrides: &SimOverrides) -> Result<Scenario, ScenarioError> {
    let mut scenario = Scenario::default();
    let mut step_values = Vec::new();
    let mut seen_content = false;
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let value: Value = serde_json::from_str(trimmed).map_err(|e| ScenarioError::Parse {
            line,
            message: e.to_string(),
        })?;
        let Value::Object(mut obj) = value else {
            return Err(invalid(line, "expected a JSON object"));
        };
        if obj.contains_key("config") {
            if seen_content || obj.len() != 1 {
                return Err(invalid(line, "`config` must be alone on the first line"));
            }
            parse_config(line, obj.remove("config").unwrap_or_default(), &mut scenario)?;
        } else if obj.contains_key("assert") {
            let a: AssertLine = fields(line, obj)?;
            scenario.assertions.push(Assertion {
                line,
                at: VirtualTime(a.at_ms),
                query: a.query,
                expected: a.expected,
            });
        } else {
            step_values.push((line, Value::Object(obj)));
        }
        seen_content = true;
    }
    if let Some(epoch) = overrides.epoch {
        scenario.sim.epoch = epoch;
    }
    if let Some(seed) = overrides.seed {
        scenario.sim.seed = seed;
    }
    // steps are parsed after the config so composed GPS sentences use its epoch
    for (line, value) in step_values {
        let step = parse_step(line, value, &scenario.sim)?;
        scenario.steps.push(step);
    }
    if scenario.steps.windows(2).any(|w| w[1].at < w[0].at) {
        scenario.warnings.push("steps are not in time order; sorted".into());
        scenario.steps.sort_by_key(|s| s.at);
    }
    if scenario.assertions.windows(2).any(|w| w[1].at < w[0].at) {
        scenario
            .warnings
            .push("assertions are not in time order; sorted".into());
        scenario.assertions.sort_by_key(|a| a.at);
    }
    Ok(scenario)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AssertionOutcome {
    pub line: usize,
    pub at_ms: u64,
    pub query: String,
    pub expected: Value,
    /// Observed value, or the lookup error text.
    pub actual: Value,
    pub passed: bool,
}

/// Evaluates assertions against the city as it stands now.
pub fn check_assertions<'a>(city: &City, assertions: impl IntoIterator<Item = &'a Assertion>) -> Vec<AssertionOutcome> {
    assertions
        .into_iter()
        .map(|a| {
            let (actual, passed) = match city.query(&a.query) {
                Ok(v) => {
                    let ok = values_match(&a.expected, &v);
                    (v, ok)
                }
                Err(e) => (Value::String(e.to_string()), false),
            };
            AssertionOutcome {
                line: a.line,
                at_ms: a.at.millis(),
                query: a.query.clone(),
                expected: a.expected.clone(),
                actual,
                passed,
            }
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub until_ms: Option<u64>,
}

pub struct RunReport {
    pub city: City,
    pub outcomes: Vec<AssertionOutcome>,
}

impl RunReport {
    pub fn passed(&self) -> bool {
        self.outcomes.iter().all(|o| o.passed)
    }

    pub fn failures(&self) -> impl Iterator<Item = &AssertionOutcome> {
        self.outcomes.iter().filter(|o| !o.passed)
    }

    /// One line per failed assertion.
    pub fn failure_report(&self) -> String {
        self.failures()
            .map(|o| {
                format!(
                    "FAIL line {} at {} ms: {} expected {} actual {}\n",
                    o.line, o.at_ms, o.query, o.expected, o.actual
                )
            })
            .collect()
    }

    pub fn exit_code(&self) -> i32 {
        if self.passed() {
            0
        } else {
            1
        }
    }
}

/// Drives a city from scripted steps and late submissions alike.
///
/// A step for instant `t` is injected once every event before `t` has been
/// dispatched and nothing at `t` has been. Replaying the injection log as a
/// scenario therefore reproduces the run event for event.
pub struct Runner {
    city: City,
    script: VecDeque<Step>,
    settled: Option<VirtualTime>,
    log: Vec<Step>,
}

impl Runner {
    pub fn new(scenario: &Scenario) -> Result<Self, CityError> {
        Ok(Runner {
            city: City::new(scenario.sim.clone(), &scenario.city)?,
            script: scenario.steps.iter().cloned().collect(),
            settled: None,
            log: Vec::new(),
        })
    }

    pub fn city(&self) -> &City {
        &self.city
    }

    pub fn city_mut(&mut self) -> &mut City {
        &mut self.city
    }

    pub fn into_city(self) -> City {
        self.city
    }

    /// Every step injected so far, in injection order.
    pub fn log(&self) -> &[Step] {
        &self.log
    }

    /// Scripted steps not yet injected.
    pub fn remaining(&self) -> usize {
        self.script.len()
    }

    /// Last instant fully dispatched, if any.
    pub fn settled(&self) -> Option<VirtualTime> {
        self.settled
    }

    /// Earliest instant a new step can still be given.
    pub fn earliest(&self) -> VirtualTime {
        self.settled.map_or(VirtualTime::ZERO, |t| t + 1)
    }

    fn settle(&mut self, to: VirtualTime) -> Result<(), CityError> {
        if self.settled.is_some_and(|s| s >= to) {
            return Ok(());
        }
        self.city.run_until(to)?;
        self.settled = Some(to);
        Ok(())
    }

    fn inject(&mut self, step: Step) -> Result<(), CityError> {
        if step.at.millis() > 0 {
            self.settle(VirtualTime(step.at.millis() - 1))?;
        }
        self.city.inject(step.at, step.action.clone())?;
        self.log.push(step);
        Ok(())
    }

    /// Dispatches everything up to and including `to`.
    pub fn advance(&mut self, to: VirtualTime) -> Result<(), CityError> {
        while self
            .script
            .front()
            .is_some_and(|s| s.at <= to && s.at >= self.earliest())
        {
            let step = self.script.pop_front().expect("front checked");
            self.inject(step)?;
        }
        self.settle(to)
    }

    /// Injects `step` at `max(step.at, earliest())` and returns that instant.
    pub fn submit(&mut self, mut step: Step) -> Result<VirtualTime, CityError> {
        step.at = step.at.max(self.earliest());
        while self.script.front().is_some_and(|s| s.at < step.at) {
            let scripted = self.script.pop_front().expect("front checked");
            self.inject(scripted)?;
        }
        let at = step.at;
        self.inject(step)?;
        Ok(at)
    }

    /// The injection log as scenario text, config line first.
    pub fn log_scenario(&self) -> String {
        let sim = self.city.sim_config();
        let mut text = config_line(sim, self.city.config()) + "\n";
        for step in &self.log {
            text.push_str(&step.to_line());
            text.push('\n');
        }
        text
    }
}

/// Runs to the last step or assertion (or `until_ms` if later), checking
/// each assertion at its instant. Exports go to `out` when given.
pub fn run_scenario(scenario: &Scenario, out: Option<&Path>, opts: &RunOptions) -> Result<RunReport, CityError> {
    let mut runner = Runner::new(scenario)?;
    let mut outcomes = Vec::with_capacity(scenario.assertions.len());
    let mut i = 0;
    while i < scenario.assertions.len() {
        let at = scenario.assertions[i].at;
        let mut j = i;
        while j < scenario.assertions.len() && scenario.assertions[j].at == at {
            j += 1;
        }
        runner.advance(at)?;
        outcomes.extend(check_assertions(runner.city(), &scenario.assertions[i..j]));
        i = j;
    }
    let horizon = scenario.last_time().max(VirtualTime(opts.until_ms.unwrap_or(0)));
    runner.advance(horizon)?;
    let city = runner.into_city();
    if let Some(dir) = out {
        std::fs::create_dir_all(dir).map_err(|source| CityError::Io {
            path: dir.display().to_string(),
            source,
        })?;
        city.export(dir)?;
    }
    Ok(RunReport { city, outcomes })
}

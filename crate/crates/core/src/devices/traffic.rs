//! Four-approach signal controller with skip-on-empty, and the plate
//! registry used by the roadside cameras.
//!
//! Presence flags are only consulted at phase boundaries. At a boundary the
//! scheduler scans roads round-robin starting after the road that last held
//! green; the first present road gets green for its phase duration and every
//! other road shows red. With nobody present all heads go dark until the next
//! presence report, which triggers a decision at that same instant (after any
//! other reports already queued for it).

use std::collections::BTreeMap;

use serde::Serialize;

use crate::device::{Device, DeviceError, DeviceId, Outbox};
use crate::event::{Payload, PlateStatus, Stimulus, Timer};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;

pub const ROADS: usize = 4;
pub const GREEN_MS: u64 = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Signal {
    Red,
    Green,
    Off,
}

impl Signal {
    pub fn as_str(self) -> &'static str {
        match self {
            Signal::Red => "RED",
            Signal::Green => "GREEN",
            Signal::Off => "OFF",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Approach {
    pub road: u8,
    pub present: bool,
    pub signal: Signal,
    pub countdown_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Grant {
    pub at: VirtualTime,
    pub road: u8,
}

#[derive(Debug, Clone, Serialize)]
pub struct PlateRecord {
    pub plate: String,
    pub owner: String,
    pub status: PlateStatus,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(tag = "verdict", rename_all = "snake_case")]
pub enum PlateVerdict {
    Registered { plate: String, owner: String },
    Unregistered { plate: String },
    Criminal { plate: String, owner: String },
}

impl PlateVerdict {
    pub fn label(&self) -> &'static str {
        match self {
            PlateVerdict::Registered { .. } => "registered",
            PlateVerdict::Unregistered { .. } => "unregistered",
            PlateVerdict::Criminal { .. } => "criminal",
        }
    }

    pub fn raises_alarm(&self) -> bool {
        !matches!(self, PlateVerdict::Registered { .. })
    }
}

/// Uppercases and collapses runs of whitespace to a single space.
pub fn normalize_plate(plate: &str) -> String {
    plate
        .split_whitespace()
        .map(str::to_uppercase)
        .collect::<Vec<_>>()
        .join(" ")
}

#[derive(Debug, Clone, Default)]
pub struct PlateRegistry {
    entries: BTreeMap<String, PlateRecord>,
}

impl PlateRegistry {
    pub fn register(&mut self, plate: &str, owner: &str, status: PlateStatus) -> Result<&PlateRecord, DeviceError> {
        let key = normalize_plate(plate);
        if key.is_empty() {
            return Err(DeviceError::Malformed("empty plate".into()));
        }
        if self.entries.contains_key(&key) {
            return Err(DeviceError::DuplicatePlate(key));
        }
        let record = PlateRecord {
            plate: key.clone(),
            owner: owner.to_string(),
            status,
        };
        Ok(self.entries.entry(key).or_insert(record))
    }

    pub fn get(&self, plate: &str) -> Option<&PlateRecord> {
        self.entries.get(&normalize_plate(plate))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn verify(&self, plate: &str) -> PlateVerdict {
        let key = normalize_plate(plate);
        match self.entries.get(&key) {
            Some(r) if r.status == PlateStatus::Registered => PlateVerdict::Registered {
                plate: key,
                owner: r.owner.clone(),
            },
            Some(r) => PlateVerdict::Criminal {
                plate: key,
                owner: r.owner.clone(),
            },
            None => PlateVerdict::Unregistered { plate: key },
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct TrafficSnapshot {
    pub approaches: Vec<Approach>,
    pub green_road: u8,
    pub countdown_ms: u64,
    pub green_sequence: Vec<u8>,
    pub switches: u64,
    pub alarm: bool,
    pub last_verdict: Option<PlateVerdict>,
    pub plates_checked: u64,
}

#[derive(Debug, Clone)]
pub struct Traffic {
    present: [bool; ROADS],
    signals: [Signal; ROADS],
    green_ms: [u64; ROADS],
    /// Road (0-based) that last held green; the next scan starts after it.
    cursor: usize,
    green: Option<usize>,
    phase_end: Option<VirtualTime>,
    decision_pending: bool,
    grants: Vec<Grant>,
    switches: u64,
    registry: PlateRegistry,
    alarm: bool,
    last_verdict: Option<PlateVerdict>,
    plates_checked: u64,
}

impl Default for Traffic {
    fn default() -> Self {
        Self::new()
    }
}

impl Traffic {
    pub fn new() -> Self {
        Traffic {
            present: [false; ROADS],
            signals: [Signal::Off; ROADS],
            green_ms: [GREEN_MS; ROADS],
            cursor: ROADS - 1,
            green: None,
            phase_end: None,
            decision_pending: false,
            grants: Vec::new(),
            switches: 0,
            registry: PlateRegistry::default(),
            alarm: false,
            last_verdict: None,
            plates_checked: 0,
        }
    }

    /// Overrides the green duration of one road (1-based).
    pub fn set_green_duration(&mut self, road: u8, ms: u64) -> Result<(), DeviceError> {
        let idx = road_index(road)?;
        self.green_ms[idx] = ms.max(1);
        Ok(())
    }

    pub fn registry(&self) -> &PlateRegistry {
        &self.registry
    }

    pub fn registry_mut(&mut self) -> &mut PlateRegistry {
        &mut self.registry
    }

    pub fn grants(&self) -> &[Grant] {
        &self.grants
    }

    pub fn signals(&self) -> [Signal; ROADS] {
        self.signals
    }

    pub fn green_road(&self) -> Option<u8> {
        self.green.map(|i| i as u8 + 1)
    }

    pub fn alarm(&self) -> bool {
        self.alarm
    }

    pub fn on_approach_presence(&mut self, road: u8, present: bool, out: &mut Outbox) -> Result<(), DeviceError> {
        let idx = road_index(road)?;
        if self.present[idx] != present {
            self.present[idx] = present;
            out.mark_changed();
        }
        if present && self.phase_end.is_none() && !self.decision_pending {
            self.decision_pending = true;
            out.timer(0, Timer::PhaseDecision);
        }
        Ok(())
    }

    fn set_signals(&mut self, next: [Signal; ROADS], out: &mut Outbox) {
        for (i, (cur, new)) in self.signals.iter_mut().zip(next).enumerate() {
            if *cur != new {
                *cur = new;
                self.switches += 1;
                out.row(Table::Traffic, vec![(i + 1).to_string(), new.as_str().to_string()]);
                out.mark_changed();
            }
        }
    }

    fn decide(&mut self, now: VirtualTime, out: &mut Outbox) {
        let pick = (1..=ROADS)
            .map(|k| (self.cursor + k) % ROADS)
            .find(|&i| self.present[i]);
        match pick {
            Some(i) => {
                let duration = self.green_ms[i];
                self.cursor = i;
                self.green = Some(i);
                self.phase_end = Some(now + duration);
                self.grants.push(Grant {
                    at: now,
                    road: i as u8 + 1,
                });
                let mut next = [Signal::Red; ROADS];
                next[i] = Signal::Green;
                self.set_signals(next, out);
                out.timer(duration, Timer::PhaseEnd);
                out.mark_changed();
            }
            None => {
                self.green = None;
                self.phase_end = None;
                self.set_signals([Signal::Off; ROADS], out);
            }
        }
    }

    /// Phase-boundary timer. Stale expiries are ignored.
    pub fn advance(&mut self, now: VirtualTime, timer: Timer, out: &mut Outbox) {
        match timer {
            Timer::PhaseDecision if self.decision_pending => {
                self.decision_pending = false;
                if self.phase_end.is_none() {
                    self.decide(now, out);
                }
            }
            Timer::PhaseEnd if self.phase_end == Some(now) => self.decide(now, out),
            _ => {}
        }
    }

    pub fn register_plate(&mut self, plate: &str, owner: &str, status: PlateStatus) -> Result<(), DeviceError> {
        self.registry.register(plate, owner, status).map(|_| ())
    }

    pub fn on_plate_read(&mut self, road: u8, plate: &str, out: &mut Outbox) -> Result<PlateVerdict, DeviceError> {
        road_index(road)?;
        if plate.trim().is_empty() {
            return Err(DeviceError::Malformed("empty plate".into()));
        }
        let verdict = self.registry.verify(plate);
        self.plates_checked += 1;
        if verdict.raises_alarm() {
            self.alarm = true;
        }
        let key = normalize_plate(plate);
        out.row(Table::Plate, vec![road.to_string(), key, verdict.label().to_string()]);
        out.mark_changed();
        self.last_verdict = Some(verdict.clone());
        Ok(verdict)
    }

    pub fn clear_alarm(&mut self) {
        self.alarm = false;
    }

    pub fn current_phase(&self, now: VirtualTime) -> TrafficSnapshot {
        let countdown = |i: usize| match (self.green, self.phase_end) {
            (Some(g), Some(end)) if g == i => end.saturating_sub(now),
            _ => 0,
        };
        TrafficSnapshot {
            approaches: (0..ROADS)
                .map(|i| Approach {
                    road: i as u8 + 1,
                    present: self.present[i],
                    signal: self.signals[i],
                    countdown_ms: countdown(i),
                })
                .collect(),
            green_road: self.green_road().unwrap_or(0),
            countdown_ms: self.green.map_or(0, countdown),
            green_sequence: self.grants.iter().map(|g| g.road).collect(),
            switches: self.switches,
            alarm: self.alarm,
            last_verdict: self.last_verdict.clone(),
            plates_checked: self.plates_checked,
        }
    }
}

fn road_index(road: u8) -> Result<usize, DeviceError> {
    if (1..=ROADS as u8).contains(&road) {
        Ok(road as usize - 1)
    } else {
        Err(DeviceError::InvalidRoad(road))
    }
}

impl Device for Traffic {
    fn id(&self) -> DeviceId {
        DeviceId::Traffic
    }

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Stimulus(Stimulus::ApproachPresence { road, present }) => {
                self.on_approach_presence(*road, *present, out)
            }
            Payload::Stimulus(Stimulus::RegisterPlate { plate, owner, status }) => {
                self.register_plate(plate, owner, *status)
            }
            Payload::Stimulus(Stimulus::PlateRead { road, plate }) => self.on_plate_read(*road, plate, out).map(|_| ()),
            Payload::Timer(t @ (Timer::PhaseDecision | Timer::PhaseEnd)) => {
                self.advance(now, *t, out);
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Traffic, other)),
        }
    }

    fn snapshot(&self, now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.current_phase(now)).expect("snapshot serializes")
    }
}

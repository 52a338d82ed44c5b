//! Fingerprint door and home security.
//!
//! A verified fingerprint opens the door for [`DOOR_OPEN_MS`]; a newer match
//! while open pushes the close time out. When armed, anything closer than
//! [`PRESENCE_RANGE_CM`] raises the thief alarm. A smoke reading above the
//! threshold raises the fire alarm and opens the window, armed or not.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::device::{on_off, Device, DeviceError, DeviceId, Outbox};
use crate::event::{Payload, Stimulus, Timer};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;

pub const FINGERPRINT_CAPACITY: u16 = 1024;
pub const DOOR_OPEN_MS: u64 = 5_000;
pub const PRESENCE_RANGE_CM: f64 = 10.0;
pub const DEFAULT_SMOKE_THRESHOLD: i64 = 400;

/// Enrolled templates, compared by exact token equality.
#[derive(Debug, Clone, Default)]
pub struct FingerprintStore {
    by_id: BTreeMap<u16, String>,
    by_token: HashMap<String, u16>,
}

impl FingerprintStore {
    pub fn len(&self) -> usize {
        self.by_id.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_id.is_empty()
    }

    pub fn enroll(&mut self, token: &str) -> Result<u16, DeviceError> {
        if let Some(&id) = self.by_token.get(token) {
            return Err(DeviceError::DuplicateTemplate(id));
        }
        if self.by_id.len() >= FINGERPRINT_CAPACITY as usize {
            return Err(DeviceError::StoreFull);
        }
        let id = (1..=FINGERPRINT_CAPACITY)
            .zip(self.by_id.keys().copied().chain(std::iter::repeat(0)))
            .find(|(want, have)| want != have)
            .map(|(want, _)| want)
            .expect("store has a free id");
        self.by_id.insert(id, token.to_string());
        self.by_token.insert(token.to_string(), id);
        Ok(id)
    }

    pub fn remove(&mut self, id: u16) -> Option<String> {
        let token = self.by_id.remove(&id)?;
        self.by_token.remove(&token);
        Some(token)
    }

    pub fn lookup(&self, token: &str) -> Option<u16> {
        self.by_token.get(token).copied()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum OpenClosed {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DoorSnapshot {
    pub state: OpenClosed,
    pub close_at_ms: Option<u64>,
    pub opened: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecuritySnapshot {
    pub door: DoorSnapshot,
    pub window: OpenClosed,
    pub armed: bool,
    pub alarm: &'static str,
    pub thief_alarm: bool,
    pub fire_alarm: bool,
    pub enrolled: usize,
    pub suspicious_events: u64,
    pub smoke_events: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Match(u16),
    NoMatch,
}

#[derive(Debug, Clone)]
pub struct Security {
    store: FingerprintStore,
    door: OpenClosed,
    door_close_at: Option<VirtualTime>,
    window: OpenClosed,
    armed: bool,
    thief: bool,
    fire: bool,
    smoke_threshold: i64,
    presence_range_cm: f64,
    door_opened: u64,
    suspicious_events: u64,
    smoke_events: u64,
}

impl Default for Security {
    fn default() -> Self {
        Self::new(DEFAULT_SMOKE_THRESHOLD)
    }
}

impl Security {
    pub fn new(smoke_threshold: i64) -> Self {
        Security {
            store: FingerprintStore::default(),
            door: OpenClosed::Closed,
            door_close_at: None,
            window: OpenClosed::Closed,
            armed: false,
            thief: false,
            fire: false,
            smoke_threshold,
            presence_range_cm: PRESENCE_RANGE_CM,
            door_opened: 0,
            suspicious_events: 0,
            smoke_events: 0,
        }
    }

    pub fn door(&self) -> OpenClosed {
        self.door
    }

    pub fn door_close_at(&self) -> Option<VirtualTime> {
        self.door_close_at
    }

    pub fn window(&self) -> OpenClosed {
        self.window
    }

    pub fn armed(&self) -> bool {
        self.armed
    }

    pub fn alarm(&self) -> bool {
        self.thief || self.fire
    }

    pub fn store(&self) -> &FingerprintStore {
        &self.store
    }

    pub fn enroll_fingerprint(&mut self, token: &str) -> Result<u16, DeviceError> {
        self.store.enroll(token)
    }

    pub fn verify_fingerprint(&mut self, now: VirtualTime, token: &str, out: &mut Outbox) -> Verdict {
        match self.store.lookup(token) {
            Some(id) => {
                if self.door == OpenClosed::Closed {
                    self.door_opened += 1;
                }
                self.door = OpenClosed::Open;
                self.door_close_at = Some(now + DOOR_OPEN_MS);
                out.timer(DOOR_OPEN_MS, Timer::DoorClose);
                out.row(Table::Door, vec!["open".into()]);
                out.mark_changed();
                Verdict::Match(id)
            }
            None => {
                out.row(Table::Door, vec!["denied".into()]);
                Verdict::NoMatch
            }
        }
    }

    fn alarm_row(&self, out: &mut Outbox) {
        out.row(
            Table::HomeAlarm,
            vec![on_off(self.thief).to_string(), on_off(self.fire).to_string()],
        );
        out.mark_changed();
    }

    pub fn set_armed(&mut self, flag: bool, out: &mut Outbox) {
        if self.armed != flag {
            self.armed = flag;
            out.mark_changed();
        }
        if !flag && self.alarm() {
            self.thief = false;
            self.fire = false;
            self.alarm_row(out);
        }
    }

    pub fn on_presence_sample(&mut self, distance_cm: f64, out: &mut Outbox) -> Result<(), DeviceError> {
        if distance_cm.is_nan() || distance_cm < 0.0 {
            return Err(DeviceError::OutOfRange {
                what: "distance",
                value: distance_cm,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        if self.armed && distance_cm < self.presence_range_cm {
            self.thief = true;
            self.suspicious_events += 1;
            self.alarm_row(out);
        }
        Ok(())
    }

    pub fn on_smoke_sample(&mut self, value: i64, out: &mut Outbox) -> Result<(), DeviceError> {
        if !(0..=1023).contains(&value) {
            return Err(DeviceError::OutOfRange {
                what: "smoke",
                value: value as f64,
                min: 0.0,
                max: 1023.0,
            });
        }
        if value > self.smoke_threshold {
            self.fire = true;
            self.window = OpenClosed::Open;
            self.smoke_events += 1;
            self.alarm_row(out);
        }
        Ok(())
    }

    pub fn on_close_expiry(&mut self, now: VirtualTime, out: &mut Outbox) {
        if self.door_close_at != Some(now) {
            return;
        }
        self.door = OpenClosed::Closed;
        self.door_close_at = None;
        out.mark_changed();
    }

    pub fn state(&self) -> SecuritySnapshot {
        SecuritySnapshot {
            door: DoorSnapshot {
                state: self.door,
                close_at_ms: self.door_close_at.map(VirtualTime::millis),
                opened: self.door_opened,
            },
            window: self.window,
            armed: self.armed,
            alarm: on_off(self.alarm()),
            thief_alarm: self.thief,
            fire_alarm: self.fire,
            enrolled: self.store.len(),
            suspicious_events: self.suspicious_events,
            smoke_events: self.smoke_events,
        }
    }
}

impl Device for Security {
    fn id(&self) -> DeviceId {
        DeviceId::Security
    }

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Stimulus(Stimulus::Enroll { token }) => {
                self.enroll_fingerprint(token)?;
                out.mark_changed();
                Ok(())
            }
            Payload::Stimulus(Stimulus::Fingerprint { token }) => {
                self.verify_fingerprint(now, token, out);
                Ok(())
            }
            Payload::Stimulus(Stimulus::SetArmed(flag)) => {
                self.set_armed(*flag, out);
                Ok(())
            }
            Payload::Stimulus(Stimulus::PresenceSample { distance_cm }) => self.on_presence_sample(*distance_cm, out),
            Payload::Stimulus(Stimulus::SmokeSample(v)) => self.on_smoke_sample(*v, out),
            Payload::Timer(Timer::DoorClose) => {
                self.on_close_expiry(now, out);
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Security, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.state()).expect("snapshot serializes")
    }
}

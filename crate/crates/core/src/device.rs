//! Device identity and the contract every simulated controller implements.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::event::{Payload, Timer};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;
use crate::transports::SmsMessage;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DeviceId {
    Streetlight,
    Home,
    Security,
    Traffic,
    Parking,
    Accident,
    Display,
    /// Sink for SMS deliveries; owns the per-number inboxes.
    Sms,
}

impl DeviceId {
    pub const CONTROLLERS: [DeviceId; 7] = [
        DeviceId::Streetlight,
        DeviceId::Home,
        DeviceId::Security,
        DeviceId::Traffic,
        DeviceId::Parking,
        DeviceId::Accident,
        DeviceId::Display,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DeviceId::Streetlight => "streetlight",
            DeviceId::Home => "home",
            DeviceId::Security => "security",
            DeviceId::Traffic => "traffic",
            DeviceId::Parking => "parking",
            DeviceId::Accident => "accident",
            DeviceId::Display => "display",
            DeviceId::Sms => "sms",
        }
    }
}

impl fmt::Display for DeviceId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
#[error("unknown device `{0}`")]
pub struct UnknownDevice(pub String);

impl FromStr for DeviceId {
    type Err = UnknownDevice;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let id = match s {
            "streetlight" => DeviceId::Streetlight,
            "home" => DeviceId::Home,
            // the door lives on the security controller
            "security" | "door" => DeviceId::Security,
            "traffic" => DeviceId::Traffic,
            "parking" => DeviceId::Parking,
            "accident" => DeviceId::Accident,
            "display" => DeviceId::Display,
            "sms" => DeviceId::Sms,
            other => return Err(UnknownDevice(other.to_string())),
        };
        Ok(id)
    }
}

/// Errors a controller reports for an input it refuses. The input is
/// dropped and the controller state is left as it was.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum DeviceError {
    #[error("unknown command byte {0:#04x}")]
    UnknownCommand(u8),
    #[error("{what} sample {value} outside {min}..={max}")]
    OutOfRange {
        what: &'static str,
        value: f64,
        min: f64,
        max: f64,
    },
    #[error("unknown appliance `{0}`")]
    UnknownAppliance(String),
    #[error("malformed message: {0}")]
    Malformed(String),
    #[error("fingerprint store is full")]
    StoreFull,
    #[error("template already enrolled as id {0}")]
    DuplicateTemplate(u16),
    #[error("road {0} is not in 1..=4")]
    InvalidRoad(u8),
    #[error("plate `{0}` is already registered")]
    DuplicatePlate(String),
    #[error("slot {0} is not in 1..=4")]
    InvalidSlot(u8),
    #[error("lane {0} is not in 1..=8")]
    InvalidLane(u8),
    #[error("malformed card uid `{0}`")]
    MalformedUid(String),
    #[error("no phone number configured for {0}")]
    UnknownDepartmentNumber(String),
    #[error("empty notice message")]
    EmptyMessage,
    #[error("{device} does not accept {input}")]
    Unsupported { device: DeviceId, input: String },
}

impl DeviceError {
    pub fn unsupported(device: DeviceId, payload: &Payload) -> Self {
        DeviceError::Unsupported {
            device,
            input: crate::kernel::EventPayload::kind(payload),
        }
    }
}

/// Side effects requested by a controller while handling one input.
/// The city applies them after the handler returns.
#[derive(Debug, Default)]
pub struct Outbox {
    pub timers: Vec<(u64, Timer)>,
    pub sms: Vec<SmsMessage>,
    pub rows: Vec<(Table, Vec<String>)>,
    pub changed: bool,
}

impl Outbox {
    pub fn timer(&mut self, after_ms: u64, timer: Timer) {
        self.timers.push((after_ms, timer));
    }

    pub fn row(&mut self, table: Table, values: Vec<String>) {
        self.rows.push((table, values));
    }

    pub fn sms(&mut self, msg: SmsMessage) {
        self.sms.push(msg);
    }

    pub fn mark_changed(&mut self) {
        self.changed = true;
    }
}

/// A simulated controller. Handlers see time only through the `now`
/// argument, which is the timestamp of the event being dispatched.
pub trait Device {
    fn id(&self) -> DeviceId;

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError>;

    fn snapshot(&self, now: VirtualTime) -> serde_json::Value;
}

pub(crate) fn on_off(flag: bool) -> &'static str {
    if flag {
        "ON"
    } else {
        "OFF"
    }
}

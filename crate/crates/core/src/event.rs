//! Concrete event payloads carried by the city kernel.

use serde::{Deserialize, Serialize};

use crate::kernel::EventPayload;
use crate::transports::SmsMessage;

/// Department reachable from the roadside emergency buttons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Department {
    Police,
    #[serde(alias = "hospital")]
    Ambulance,
    #[serde(alias = "fire_brigade")]
    Fire,
}

impl Department {
    pub const ALL: [Department; 3] = [Department::Police, Department::Ambulance, Department::Fire];

    pub fn as_str(self) -> &'static str {
        match self {
            Department::Police => "police",
            Department::Ambulance => "ambulance",
            Department::Fire => "fire",
        }
    }

    pub fn parse(s: &str) -> Option<Department> {
        match s {
            "police" => Some(Department::Police),
            "ambulance" | "hospital" => Some(Department::Ambulance),
            "fire" | "fire_brigade" => Some(Department::Fire),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum PlateStatus {
    Registered,
    Criminal,
}

/// Inputs injected directly by the environment or an operator, bypassing
/// any transport link.
#[derive(Debug, Clone, PartialEq)]
pub enum Stimulus {
    LdrSample(i64),
    LanePresence {
        lane: u8,
        distance_cm: f64,
    },
    Enroll {
        token: String,
    },
    Fingerprint {
        token: String,
    },
    SetArmed(bool),
    PresenceSample {
        distance_cm: f64,
    },
    SmokeSample(i64),
    ApproachPresence {
        road: u8,
        present: bool,
    },
    RegisterPlate {
        plate: String,
        owner: String,
        status: PlateStatus,
    },
    PlateRead {
        road: u8,
        plate: String,
    },
    CardScan {
        uid: String,
    },
    EntryPresence(bool),
    SlotPresence {
        slot: u8,
        occupied: bool,
    },
    FlameSample(i64),
    ButtonPress(Department),
    AccidentReset,
    EnvSample {
        temp_c: f64,
        rh_pct: f64,
    },
}

impl Stimulus {
    pub fn name(&self) -> &'static str {
        match self {
            Stimulus::LdrSample(_) => "ldr",
            Stimulus::LanePresence { .. } => "lane_presence",
            Stimulus::Enroll { .. } => "enroll",
            Stimulus::Fingerprint { .. } => "fingerprint",
            Stimulus::SetArmed(_) => "arm",
            Stimulus::PresenceSample { .. } => "presence",
            Stimulus::SmokeSample(_) => "smoke",
            Stimulus::ApproachPresence { .. } => "approach",
            Stimulus::RegisterPlate { .. } => "register_plate",
            Stimulus::PlateRead { .. } => "plate",
            Stimulus::CardScan { .. } => "card",
            Stimulus::EntryPresence(_) => "entry",
            Stimulus::SlotPresence { .. } => "slot",
            Stimulus::FlameSample(_) => "flame",
            Stimulus::ButtonPress(_) => "button",
            Stimulus::AccidentReset => "reset",
            Stimulus::EnvSample { .. } => "env",
        }
    }
}

/// Payload handed over by a transport link.
#[derive(Debug, Clone, PartialEq)]
pub enum Frame {
    /// Bluetooth serial burst.
    Serial(Vec<u8>),
    /// Wi-Fi LAN message (JSON text).
    Lan(String),
    Sms(SmsMessage),
    /// One NMEA sentence from the GPS receiver.
    Gps(String),
}

impl Frame {
    pub fn name(&self) -> &'static str {
        match self {
            Frame::Serial(_) => "serial",
            Frame::Lan(_) => "lan",
            Frame::Sms(_) => "sms",
            Frame::Gps(_) => "gps",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Timer {
    LightHold { lane: u8 },
    DoorClose,
    GateClose,
    PhaseDecision,
    PhaseEnd,
    EnvRefresh,
    MarqueeTick { generation: u64 },
}

impl Timer {
    pub fn name(&self) -> &'static str {
        match self {
            Timer::LightHold { .. } => "light_hold",
            Timer::DoorClose => "door_close",
            Timer::GateClose => "gate_close",
            Timer::PhaseDecision => "phase_decision",
            Timer::PhaseEnd => "phase_end",
            Timer::EnvRefresh => "env_refresh",
            Timer::MarqueeTick { .. } => "marquee_tick",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Stimulus(Stimulus),
    Frame(Frame),
    Timer(Timer),
    /// An outside party hands `frame` to `link` at this instant; the link
    /// then schedules the delivery.
    Transmit {
        link: String,
        frame: Frame,
    },
}

impl EventPayload for Payload {
    fn kind(&self) -> String {
        match self {
            Payload::Stimulus(s) => format!("stimulus:{}", s.name()),
            Payload::Frame(f) => format!("frame:{}", f.name()),
            Payload::Timer(t) => format!("timer:{}", t.name()),
            Payload::Transmit { frame, .. } => format!("send:{}", frame.name()),
        }
    }
}

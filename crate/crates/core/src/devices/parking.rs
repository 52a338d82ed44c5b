//! RFID-gated private parking plus a four-slot smart lot.
//!
//! Slot indicators follow the lot's wiring: RED while a slot is free, GREEN
//! while it is occupied. One 16x2 LCD is shared: the top row answers card
//! scans, the bottom row shows how many slots are free.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::device::{Device, DeviceError, DeviceId, Outbox};
use crate::devices::lcd::Lcd;
use crate::devices::security::OpenClosed;
use crate::event::{Payload, Stimulus, Timer};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;

pub const SLOTS: usize = 4;
pub const GATE_OPEN_MS: u64 = 5_000;
pub const PROMPT: &str = "Show your card";
const AVAILABLE_PREFIX: &str = "Available: ";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Indicator {
    Red,
    Green,
}

/// Card UIDs are hex strings; separators are not accepted.
pub fn normalize_uid(uid: &str) -> Result<String, DeviceError> {
    let trimmed = uid.trim();
    if trimmed.is_empty() || !trimmed.len().is_multiple_of(2) || !trimmed.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(DeviceError::MalformedUid(uid.to_string()));
    }
    Ok(trimmed.to_ascii_uppercase())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GateSnapshot {
    pub state: OpenClosed,
    pub close_at_ms: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParkingSnapshot {
    pub gate: GateSnapshot,
    pub occupied: Vec<bool>,
    pub indicators: Vec<Indicator>,
    pub available: usize,
    pub lcd: Vec<String>,
    pub lcd_available: Option<usize>,
    pub slot_uses: Vec<u64>,
    pub private_entries: u64,
}

#[derive(Debug, Clone)]
pub struct Parking {
    whitelist: BTreeMap<String, String>,
    gate: OpenClosed,
    gate_close_at: Option<VirtualTime>,
    occupied: [bool; SLOTS],
    slot_uses: [u64; SLOTS],
    private_entries: u64,
    lcd: Lcd,
}

impl Default for Parking {
    fn default() -> Self {
        Self::new(BTreeMap::new())
    }
}

impl Parking {
    /// `whitelist` maps card UID to the slot label shown on entry.
    pub fn new(whitelist: BTreeMap<String, String>) -> Self {
        let mut p = Parking {
            whitelist: BTreeMap::new(),
            gate: OpenClosed::Closed,
            gate_close_at: None,
            occupied: [false; SLOTS],
            slot_uses: [0; SLOTS],
            private_entries: 0,
            lcd: Lcd::blank(),
        };
        for (uid, label) in whitelist {
            p.allow_card(&uid, &label).expect("whitelist uid must be hex");
        }
        p.lcd.set_row(0, PROMPT);
        p.refresh_count();
        p
    }

    pub fn allow_card(&mut self, uid: &str, slot_label: &str) -> Result<(), DeviceError> {
        self.whitelist.insert(normalize_uid(uid)?, slot_label.to_string());
        Ok(())
    }

    pub fn gate(&self) -> OpenClosed {
        self.gate
    }

    pub fn gate_close_at(&self) -> Option<VirtualTime> {
        self.gate_close_at
    }

    pub fn available(&self) -> usize {
        SLOTS - self.occupied.iter().filter(|o| **o).count()
    }

    pub fn occupied(&self) -> [bool; SLOTS] {
        self.occupied
    }

    pub fn indicators(&self) -> [Indicator; SLOTS] {
        self.occupied.map(|o| if o { Indicator::Green } else { Indicator::Red })
    }

    pub fn lcd(&self) -> &Lcd {
        &self.lcd
    }

    /// The free-slot count as printed on the LCD.
    pub fn lcd_available(&self) -> Option<usize> {
        self.lcd.row(1).trim_end().strip_prefix(AVAILABLE_PREFIX)?.parse().ok()
    }

    fn refresh_count(&mut self) {
        let text = format!("{AVAILABLE_PREFIX}{}", self.available());
        self.lcd.set_row(1, &text);
    }

    fn open_gate(&mut self, now: VirtualTime, out: &mut Outbox) {
        self.gate = OpenClosed::Open;
        self.gate_close_at = Some(now + GATE_OPEN_MS);
        out.timer(GATE_OPEN_MS, Timer::GateClose);
        out.mark_changed();
    }

    pub fn on_card_scan(&mut self, now: VirtualTime, uid: &str, out: &mut Outbox) -> Result<bool, DeviceError> {
        let uid = normalize_uid(uid)?;
        match self.whitelist.get(&uid).cloned() {
            Some(label) => {
                self.private_entries += 1;
                self.lcd.set_row(0, &format!("Park at {label}"));
                self.open_gate(now, out);
                out.row(Table::PrivateParking, vec!["granted".into()]);
                Ok(true)
            }
            None => {
                self.lcd.set_row(0, PROMPT);
                out.row(Table::PrivateParking, vec!["denied".into()]);
                out.mark_changed();
                Ok(false)
            }
        }
    }

    pub fn on_entry_presence(&mut self, now: VirtualTime, detected: bool, out: &mut Outbox) {
        if detected {
            self.open_gate(now, out);
        }
    }

    pub fn on_slot_presence(&mut self, slot: u8, occupied: bool, out: &mut Outbox) -> Result<(), DeviceError> {
        if !(1..=SLOTS as u8).contains(&slot) {
            return Err(DeviceError::InvalidSlot(slot));
        }
        let idx = slot as usize - 1;
        if self.occupied[idx] == occupied {
            return Ok(());
        }
        self.occupied[idx] = occupied;
        if occupied {
            self.slot_uses[idx] += 1;
        }
        self.refresh_count();
        out.row(Table::SmartParking, vec![slot.to_string(), occupied.to_string()]);
        out.mark_changed();
        Ok(())
    }

    pub fn on_close_expiry(&mut self, now: VirtualTime, out: &mut Outbox) {
        if self.gate_close_at != Some(now) {
            return;
        }
        self.gate = OpenClosed::Closed;
        self.gate_close_at = None;
        self.lcd.set_row(0, PROMPT);
        out.mark_changed();
    }

    pub fn state(&self) -> ParkingSnapshot {
        ParkingSnapshot {
            gate: GateSnapshot {
                state: self.gate,
                close_at_ms: self.gate_close_at.map(VirtualTime::millis),
            },
            occupied: self.occupied.to_vec(),
            indicators: self.indicators().to_vec(),
            available: self.available(),
            lcd: self.lcd.rows(),
            lcd_available: self.lcd_available(),
            slot_uses: self.slot_uses.to_vec(),
            private_entries: self.private_entries,
        }
    }
}

impl Device for Parking {
    fn id(&self) -> DeviceId {
        DeviceId::Parking
    }

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Stimulus(Stimulus::CardScan { uid }) => self.on_card_scan(now, uid, out).map(|_| ()),
            Payload::Stimulus(Stimulus::EntryPresence(detected)) => {
                self.on_entry_presence(now, *detected, out);
                Ok(())
            }
            Payload::Stimulus(Stimulus::SlotPresence { slot, occupied }) => {
                self.on_slot_presence(*slot, *occupied, out)
            }
            Payload::Timer(Timer::GateClose) => {
                self.on_close_expiry(now, out);
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Parking, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.state()).expect("snapshot serializes")
    }
}

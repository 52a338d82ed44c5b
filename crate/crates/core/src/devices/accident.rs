//! Accident management: flame-triggered pump and alarm, roadside emergency
//! buttons, and GPS-stamped SMS dispatch.
//!
//! SMS bodies are fixed-format with four decimals:
//!
//! * flame detection: `FIRE lat=<lat> lon=<lon>`
//! * button press:    `<KIND> ALERT lat=<lat> lon=<lon>`
//!
//! Without a cached fix the coordinates are replaced by `LOCATION UNKNOWN`.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::device::{on_off, Device, DeviceError, DeviceId, Outbox};
use crate::event::{Department, Frame, Payload, Stimulus};
use crate::kernel::VirtualTime;
use crate::num::Coordinate;
use crate::telemetry::Table;
use crate::transports::{parse_nmea_rmc, GpsFix, SmsMessage};

pub const DEFAULT_FLAME_THRESHOLD: i64 = 400;
pub const LOCATION_UNKNOWN: &str = "LOCATION UNKNOWN";

fn location<S: Coordinate>(fix: Option<&GpsFix<S>>) -> String {
    match fix {
        Some(f) => format!("lat={:.4} lon={:.4}", f.lat, f.lon),
        None => LOCATION_UNKNOWN.to_string(),
    }
}

pub fn fire_body<S: Coordinate>(fix: Option<&GpsFix<S>>) -> String {
    format!("FIRE {}", location(fix))
}

pub fn alert_body<S: Coordinate>(kind: Department, fix: Option<&GpsFix<S>>) -> String {
    format!("{} ALERT {}", kind.as_str().to_ascii_uppercase(), location(fix))
}

/// Recovers `(lat, lon)` from a dispatch body; `None` for unknown location
/// or a body not produced by this controller.
pub fn parse_body_location(body: &str) -> Option<(f64, f64)> {
    let rest = body.split_once("lat=")?.1;
    let (lat, lon) = rest.split_once(" lon=")?;
    Some((lat.parse().ok()?, lon.trim().parse().ok()?))
}

#[derive(Debug, Clone, Serialize)]
pub struct AccidentSnapshot {
    pub pump: &'static str,
    pub alarm: &'static str,
    pub last_fix: Option<(f64, f64)>,
    pub counters: BTreeMap<&'static str, u64>,
}

#[derive(Debug, Clone)]
pub struct Accident<S: Coordinate = f64> {
    flame_threshold: i64,
    pump: bool,
    alarm: bool,
    last_fix: Option<GpsFix<S>>,
    counters: BTreeMap<Department, u64>,
    directory: BTreeMap<Department, String>,
}

impl<S: Coordinate> Accident<S> {
    pub fn new(flame_threshold: i64, directory: BTreeMap<Department, String>) -> Self {
        Accident {
            flame_threshold,
            pump: false,
            alarm: false,
            last_fix: None,
            counters: Department::ALL.into_iter().map(|d| (d, 0)).collect(),
            directory,
        }
    }

    pub fn pump(&self) -> bool {
        self.pump
    }

    pub fn alarm(&self) -> bool {
        self.alarm
    }

    pub fn last_fix(&self) -> Option<&GpsFix<S>> {
        self.last_fix.as_ref()
    }

    pub fn counter(&self, kind: Department) -> u64 {
        self.counters[&kind]
    }

    pub fn on_gps_fix(&mut self, fix: GpsFix<S>) {
        if fix.valid {
            self.last_fix = Some(fix);
        }
    }

    fn dispatch(
        &mut self,
        now: VirtualTime,
        kind: Department,
        body: String,
        out: &mut Outbox,
    ) -> Result<(), DeviceError> {
        let to = self
            .directory
            .get(&kind)
            .ok_or_else(|| DeviceError::UnknownDepartmentNumber(kind.as_str().to_string()))?;
        let msg = SmsMessage::new(to.clone(), body, now).map_err(|e| DeviceError::Malformed(e.to_string()))?;
        out.sms(msg);
        *self.counters.get_mut(&kind).expect("all departments present") += 1;
        let (lat, lon) = match &self.last_fix {
            Some(f) => (format!("{:.4}", f.lat), format!("{:.4}", f.lon)),
            None => (String::new(), String::new()),
        };
        out.row(Table::Accident, vec![kind.as_str().to_string(), lat, lon]);
        out.mark_changed();
        Ok(())
    }

    /// A reading above the threshold latches pump and alarm and dispatches
    /// the fire brigade once; further readings wait for a reset.
    pub fn on_flame_sample(&mut self, now: VirtualTime, value: i64, out: &mut Outbox) -> Result<(), DeviceError> {
        if !(0..=1023).contains(&value) {
            return Err(DeviceError::OutOfRange {
                what: "flame",
                value: value as f64,
                min: 0.0,
                max: 1023.0,
            });
        }
        if value <= self.flame_threshold || self.pump {
            return Ok(());
        }
        self.pump = true;
        self.alarm = true;
        let body = fire_body(self.last_fix.as_ref());
        self.dispatch(now, Department::Fire, body, out)
    }

    pub fn on_button_press(&mut self, now: VirtualTime, kind: Department, out: &mut Outbox) -> Result<(), DeviceError> {
        let body = alert_body(kind, self.last_fix.as_ref());
        self.dispatch(now, kind, body, out)
    }

    pub fn reset(&mut self, out: &mut Outbox) {
        if self.pump || self.alarm {
            self.pump = false;
            self.alarm = false;
            out.mark_changed();
        }
    }

    pub fn state(&self) -> AccidentSnapshot {
        AccidentSnapshot {
            pump: on_off(self.pump),
            alarm: on_off(self.alarm),
            last_fix: self
                .last_fix
                .as_ref()
                .map(|f| (f.lat.to_f64().unwrap_or(f64::NAN), f.lon.to_f64().unwrap_or(f64::NAN))),
            counters: self.counters.iter().map(|(d, n)| (d.as_str(), *n)).collect(),
        }
    }
}

impl<S: Coordinate> Device for Accident<S> {
    fn id(&self) -> DeviceId {
        DeviceId::Accident
    }

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Frame(Frame::Gps(sentence)) => {
                let fix = parse_nmea_rmc::<S>(sentence).map_err(|e| DeviceError::Malformed(e.to_string()))?;
                self.on_gps_fix(fix.at(now));
                out.mark_changed();
                Ok(())
            }
            Payload::Stimulus(Stimulus::FlameSample(v)) => self.on_flame_sample(now, *v, out),
            Payload::Stimulus(Stimulus::ButtonPress(kind)) => self.on_button_press(now, *kind, out),
            Payload::Stimulus(Stimulus::AccidentReset) => {
                self.reset(out);
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Accident, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.state()).expect("snapshot serializes")
    }
}

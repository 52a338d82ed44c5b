//! Six-relay home appliance controller driven by LAN messages of the form
//! `{"appliance": "<name>", "on": <bool>}`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::device::{on_off, Device, DeviceError, DeviceId, Outbox};
use crate::event::{Frame, Payload};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Appliance {
    Fridge,
    Ac,
    Light1,
    Light2,
    Fan,
    Tv,
}

impl Appliance {
    pub const ALL: [Appliance; 6] = [
        Appliance::Fridge,
        Appliance::Ac,
        Appliance::Light1,
        Appliance::Light2,
        Appliance::Fan,
        Appliance::Tv,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Appliance::Fridge => "fridge",
            Appliance::Ac => "ac",
            Appliance::Light1 => "light1",
            Appliance::Light2 => "light2",
            Appliance::Fan => "fan",
            Appliance::Tv => "tv",
        }
    }
}

impl fmt::Display for Appliance {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Appliance {
    type Err = DeviceError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Appliance::ALL
            .into_iter()
            .find(|a| a.as_str() == s)
            .ok_or_else(|| DeviceError::UnknownAppliance(s.to_string()))
    }
}

/// Wire form of an app command.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ApplianceCommand {
    pub appliance: String,
    pub on: bool,
}

impl ApplianceCommand {
    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("command serializes")
    }
}

#[derive(Debug, Clone, Default, Serialize)]
pub struct ApplianceBank {
    states: BTreeMap<Appliance, bool>,
    toggle_counts: BTreeMap<Appliance, u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HomeSnapshot {
    pub states: BTreeMap<String, &'static str>,
    pub toggle_counts: BTreeMap<String, u64>,
}

impl ApplianceBank {
    pub fn new() -> Self {
        ApplianceBank {
            states: Appliance::ALL.into_iter().map(|a| (a, false)).collect(),
            toggle_counts: Appliance::ALL.into_iter().map(|a| (a, 0)).collect(),
        }
    }

    pub fn is_on(&self, appliance: Appliance) -> bool {
        self.states[&appliance]
    }

    pub fn toggle_count(&self, appliance: &str) -> Result<u64, DeviceError> {
        let a: Appliance = appliance.parse()?;
        Ok(self.toggle_counts[&a])
    }

    pub fn total_toggles(&self) -> u64 {
        self.toggle_counts.values().sum()
    }

    pub fn set(&mut self, appliance: Appliance, on: bool, out: &mut Outbox) {
        let state = self.states.get_mut(&appliance).expect("all appliances present");
        if *state == on {
            return;
        }
        *state = on;
        *self.toggle_counts.get_mut(&appliance).expect("all appliances present") += 1;
        out.row(
            Table::HomeAppliance,
            vec![appliance.to_string(), on_off(on).to_string()],
        );
        out.mark_changed();
    }

    pub fn handle_app_command(&mut self, cmd: &ApplianceCommand, out: &mut Outbox) -> Result<(), DeviceError> {
        let appliance: Appliance = cmd.appliance.parse()?;
        self.set(appliance, cmd.on, out);
        Ok(())
    }

    pub fn appliance_states(&self) -> HomeSnapshot {
        HomeSnapshot {
            states: self.states.iter().map(|(a, on)| (a.to_string(), on_off(*on))).collect(),
            toggle_counts: self.toggle_counts.iter().map(|(a, n)| (a.to_string(), *n)).collect(),
        }
    }
}

impl Device for ApplianceBank {
    fn id(&self) -> DeviceId {
        DeviceId::Home
    }

    fn handle(&mut self, _now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Frame(Frame::Lan(text)) => {
                let cmd: ApplianceCommand =
                    serde_json::from_str(text).map_err(|e| DeviceError::Malformed(e.to_string()))?;
                self.handle_app_command(&cmd, out)
            }
            other => Err(DeviceError::unsupported(DeviceId::Home, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.appliance_states()).expect("snapshot serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn send(bank: &mut ApplianceBank, name: &str, on: bool) -> Result<Outbox, DeviceError> {
        let mut out = Outbox::default();
        bank.handle_app_command(
            &ApplianceCommand {
                appliance: name.into(),
                on,
            },
            &mut out,
        )?;
        Ok(out)
    }

    #[test]
    fn initially_all_off() {
        let bank = ApplianceBank::new();
        assert!(Appliance::ALL.iter().all(|a| !bank.is_on(*a)));
    }

    #[test]
    fn fridge_on() {
        let mut bank = ApplianceBank::new();
        let out = send(&mut bank, "fridge", true).unwrap();
        assert!(bank.is_on(Appliance::Fridge));
        assert_eq!(bank.toggle_count("fridge").unwrap(), 1);
        assert_eq!(
            out.rows,
            vec![(Table::HomeAppliance, vec!["fridge".into(), "ON".into()])]
        );
    }

    #[test]
    fn all_on() {
        let mut bank = ApplianceBank::new();
        for a in Appliance::ALL {
            send(&mut bank, a.as_str(), true).unwrap();
        }
        assert!(Appliance::ALL.iter().all(|a| bank.is_on(*a)));
    }

    #[test]
    fn ac_only() {
        let mut bank = ApplianceBank::new();
        send(&mut bank, "ac", true).unwrap();
        let snap = bank.appliance_states();
        assert_eq!(snap.states["ac"], "ON");
        assert_eq!(snap.states.values().filter(|s| **s == "ON").count(), 1);
    }

    #[test]
    fn unknown_appliance() {
        let mut bank = ApplianceBank::new();
        assert_eq!(
            send(&mut bank, "heater", true).unwrap_err(),
            DeviceError::UnknownAppliance("heater".into())
        );
        assert!(bank.toggle_count("heater").is_err());
    }

    #[test]
    fn repeated_set_is_idempotent() {
        let mut bank = ApplianceBank::new();
        send(&mut bank, "fan", true).unwrap();
        let out = send(&mut bank, "fan", true).unwrap();
        assert!(out.rows.is_empty());
        assert_eq!(bank.toggle_count("fan").unwrap(), 1);
    }

    #[test]
    fn counts() {
        let mut bank = ApplianceBank::new();
        assert_eq!(bank.toggle_count("tv").unwrap(), 0);
        for on in [true, false, true] {
            send(&mut bank, "fan", on).unwrap();
        }
        assert_eq!(bank.toggle_count("fan").unwrap(), 3);
    }

    #[test]
    fn lan_frame() {
        let mut bank = ApplianceBank::new();
        let mut out = Outbox::default();
        let frame = Payload::Frame(Frame::Lan(r#"{"appliance":"fridge","on":true}"#.into()));
        bank.handle(VirtualTime(0), &frame, &mut out).unwrap();
        assert!(bank.is_on(Appliance::Fridge));
        let bad = Payload::Frame(Frame::Lan("{".into()));
        assert!(matches!(
            bank.handle(VirtualTime(0), &bad, &mut out),
            Err(DeviceError::Malformed(_))
        ));
    }
}

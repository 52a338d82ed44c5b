//! The assembled city: kernel, links, controllers and telemetry.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Device, DeviceError, DeviceId, Outbox};
use crate::devices::{
    accident::DEFAULT_FLAME_THRESHOLD, display::SAMPLE_PERIOD_MS, security::DEFAULT_SMOKE_THRESHOLD,
    streetlight::DEFAULT_LDR_THRESHOLD, Accident, ApplianceBank, InfoDisplay, Parking, Security, Streetlight, Traffic,
};
use crate::event::{Department, Frame, Payload, PlateStatus, Stimulus};
use crate::kernel::{Kernel, KernelError, SimConfig, TranscriptEntry, VirtualTime};
use crate::query::{self, QueryError};
use crate::telemetry::{Telemetry, TelemetryError};
use crate::transports::{LinkConfig, SmsCenter, TransportError, Transports};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlateEntry {
    pub plate: String,
    pub owner: String,
    pub status: PlateStatus,
}

/// Per-city tunables. Everything has a default so an empty `{}` is valid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CityConfig {
    pub ldr_threshold: i64,
    pub smoke_threshold: i64,
    pub flame_threshold: i64,
    pub sample_period_ms: u64,
    /// Department to phone number.
    pub directory: BTreeMap<Department, String>,
    /// Card UID to the slot label shown on entry.
    pub whitelist: BTreeMap<String, String>,
    pub plates: Vec<PlateEntry>,
    pub fingerprints: Vec<String>,
    /// Per-road green duration overrides, keyed by road number.
    pub green_ms: BTreeMap<u8, u64>,
    pub links: Vec<LinkConfig>,
    /// Devices that exist in this city; all of them when empty.
    pub devices: Vec<DeviceId>,
}

impl Default for CityConfig {
    fn default() -> Self {
        CityConfig {
            ldr_threshold: DEFAULT_LDR_THRESHOLD,
            smoke_threshold: DEFAULT_SMOKE_THRESHOLD,
            flame_threshold: DEFAULT_FLAME_THRESHOLD,
            sample_period_ms: SAMPLE_PERIOD_MS,
            directory: [
                (Department::Police, "15".to_string()),
                (Department::Ambulance, "1122".to_string()),
                (Department::Fire, "16".to_string()),
            ]
            .into(),
            whitelist: BTreeMap::new(),
            plates: Vec::new(),
            fingerprints: Vec::new(),
            green_ms: BTreeMap::new(),
            links: LinkConfig::defaults(),
            devices: Vec::new(),
        }
    }
}

#[derive(Debug, Error)]
pub enum CityError {
    #[error("invalid city configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Kernel(#[from] KernelError),
    #[error(transparent)]
    Transport(#[from] TransportError),
    #[error(transparent)]
    Telemetry(#[from] TelemetryError),
    #[error(transparent)]
    Query(#[from] QueryError),
    #[error("writing {path}: {source}")]
    Io { path: String, source: std::io::Error },
}

/// A rejected input, kept for the run report.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Fault {
    pub at: VirtualTime,
    pub target: DeviceId,
    pub kind: String,
    pub error: String,
}

/// Something an operator or scenario asks the city to do at an instant.
#[derive(Debug, Clone, PartialEq)]
pub enum Action {
    /// Hand a frame to a link.
    Transmit { link: String, frame: Frame },
    /// Deliver a stimulus straight to a device.
    Stimulus { target: DeviceId, stimulus: Stimulus },
}

pub struct City {
    sim: SimConfig,
    config: CityConfig,
    kernel: Kernel<Payload>,
    transports: Transports,
    telemetry: Telemetry,
    streetlight: Streetlight,
    home: ApplianceBank,
    security: Security,
    traffic: Traffic,
    parking: Parking,
    accident: Accident<f64>,
    display: InfoDisplay,
    sms: SmsCenter,
    faults: Vec<Fault>,
    changes: Vec<(VirtualTime, DeviceId)>,
}

impl City {
    pub fn new(sim: SimConfig, config: &CityConfig) -> Result<Self, CityError> {
        let bad = |msg: String| CityError::Config(msg);
        for (name, v) in [
            ("ldr_threshold", config.ldr_threshold),
            ("smoke_threshold", config.smoke_threshold),
            ("flame_threshold", config.flame_threshold),
        ] {
            if !(0..=1023).contains(&v) {
                return Err(bad(format!("{name} {v} is outside 0..=1023")));
            }
        }
        for link in &config.links {
            if !(0.0..1.0).contains(&link.loss) {
                return Err(bad(format!("link {} loss {} is outside [0, 1)", link.id, link.loss)));
            }
        }

        let mut kernel = Kernel::new();
        let devices = if config.devices.is_empty() {
            DeviceId::CONTROLLERS.to_vec()
        } else {
            config.devices.clone()
        };
        for id in devices {
            kernel.register(id);
        }
        kernel.register(DeviceId::Sms);

        let mut security = Security::new(config.smoke_threshold);
        for token in &config.fingerprints {
            security
                .enroll_fingerprint(token)
                .map_err(|e| bad(format!("fingerprint `{token}`: {e}")))?;
        }
        let mut traffic = Traffic::new();
        for entry in &config.plates {
            traffic
                .register_plate(&entry.plate, &entry.owner, entry.status)
                .map_err(|e| bad(e.to_string()))?;
        }
        for (&road, &ms) in &config.green_ms {
            traffic.set_green_duration(road, ms).map_err(|e| bad(e.to_string()))?;
        }
        let mut parking = Parking::default();
        for (uid, label) in &config.whitelist {
            parking.allow_card(uid, label).map_err(|e| bad(e.to_string()))?;
        }

        Ok(City {
            transports: Transports::new(config.links.clone(), sim.seed),
            telemetry: Telemetry::new(sim.clone()),
            sim,
            config: config.clone(),
            kernel,
            streetlight: Streetlight::new(config.ldr_threshold),
            home: ApplianceBank::new(),
            security,
            traffic,
            parking,
            accident: Accident::new(config.flame_threshold, config.directory.clone()),
            display: InfoDisplay::new(config.sample_period_ms),
            sms: SmsCenter::new(),
            faults: Vec::new(),
            changes: Vec::new(),
        })
    }

    pub fn sim_config(&self) -> &SimConfig {
        &self.sim
    }

    pub fn config(&self) -> &CityConfig {
        &self.config
    }

    pub fn now(&self) -> VirtualTime {
        self.kernel.now()
    }

    pub fn pending(&self) -> usize {
        self.kernel.pending()
    }

    pub fn kernel(&self) -> &Kernel<Payload> {
        &self.kernel
    }

    pub fn transports(&self) -> &Transports {
        &self.transports
    }

    pub fn telemetry(&self) -> &Telemetry {
        &self.telemetry
    }

    pub fn streetlight(&self) -> &Streetlight {
        &self.streetlight
    }

    pub fn home(&self) -> &ApplianceBank {
        &self.home
    }

    pub fn security(&self) -> &Security {
        &self.security
    }

    pub fn traffic(&self) -> &Traffic {
        &self.traffic
    }

    pub fn parking(&self) -> &Parking {
        &self.parking
    }

    pub fn accident(&self) -> &Accident<f64> {
        &self.accident
    }

    pub fn display(&self) -> &InfoDisplay {
        &self.display
    }

    pub fn sms(&self) -> &SmsCenter {
        &self.sms
    }

    pub fn faults(&self) -> &[Fault] {
        &self.faults
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        self.kernel.transcript()
    }

    pub fn transcript_text(&self) -> String {
        self.kernel.transcript_text()
    }

    pub fn is_registered(&self, id: DeviceId) -> bool {
        self.kernel.is_registered(id)
    }

    fn device(&self, id: DeviceId) -> &dyn Device {
        match id {
            DeviceId::Streetlight => &self.streetlight,
            DeviceId::Home => &self.home,
            DeviceId::Security => &self.security,
            DeviceId::Traffic => &self.traffic,
            DeviceId::Parking => &self.parking,
            DeviceId::Accident => &self.accident,
            DeviceId::Display => &self.display,
            DeviceId::Sms => &self.sms,
        }
    }

    fn device_mut(&mut self, id: DeviceId) -> &mut dyn Device {
        match id {
            DeviceId::Streetlight => &mut self.streetlight,
            DeviceId::Home => &mut self.home,
            DeviceId::Security => &mut self.security,
            DeviceId::Traffic => &mut self.traffic,
            DeviceId::Parking => &mut self.parking,
            DeviceId::Accident => &mut self.accident,
            DeviceId::Display => &mut self.display,
            DeviceId::Sms => &mut self.sms,
        }
    }

    /// Queues `action` to happen at `at`.
    pub fn inject(&mut self, at: VirtualTime, action: Action) -> Result<u64, CityError> {
        match action {
            Action::Transmit { link, frame } => {
                let target = self
                    .transports
                    .link(&link)
                    .ok_or_else(|| TransportError::UnknownLink(link.clone()))?
                    .target;
                Ok(self.kernel.schedule(at, target, Payload::Transmit { link, frame })?)
            }
            Action::Stimulus { target, stimulus } => {
                Ok(self.kernel.schedule(at, target, Payload::Stimulus(stimulus))?)
            }
        }
    }

    fn fault(&mut self, target: DeviceId, kind: String, error: String) {
        log::warn!("{} ms {target} {kind}: {error}", self.now());
        self.faults.push(Fault {
            at: self.now(),
            target,
            kind,
            error,
        });
    }

    /// Dispatches one event. Rejected inputs are recorded as faults; only a
    /// broken invariant of the city itself is returned as an error.
    pub fn step(&mut self) -> Result<Option<TranscriptEntry>, CityError> {
        self.step_inner(None)
    }

    fn step_inner(&mut self, horizon: Option<VirtualTime>) -> Result<Option<TranscriptEntry>, CityError> {
        let popped = match horizon {
            Some(h) => self.kernel.step_due(h),
            None => self.kernel.step(),
        };
        let event = match popped {
            Ok(Some(ev)) => ev,
            Ok(None) => return Ok(None),
            Err(KernelError::UnknownTarget(id)) => {
                self.fault(id, "dispatch".into(), KernelError::UnknownTarget(id).to_string());
                return Ok(None);
            }
            Err(e) => return Err(e.into()),
        };
        let now = event.at;
        let entry = self.kernel.transcript().last().cloned();
        match event.payload {
            Payload::Transmit { link, frame } => {
                let kind = format!("send:{}", frame.name());
                if let Err(e) = self.transports.send(&mut self.kernel, &link, frame) {
                    self.fault(event.target, kind, e.to_string());
                }
            }
            payload => {
                let mut out = Outbox::default();
                let result = self.device_mut(event.target).handle(now, &payload, &mut out);
                if let Err(e) = result {
                    let kind = crate::kernel::EventPayload::kind(&payload);
                    self.fault(event.target, kind, e.to_string());
                }
                self.apply(event.target, out)?;
            }
        }
        Ok(entry)
    }

    fn apply(&mut self, source: DeviceId, out: Outbox) -> Result<(), CityError> {
        let now = self.now();
        for (after, timer) in out.timers {
            self.kernel.schedule(now + after, source, Payload::Timer(timer))?;
        }
        for msg in out.sms {
            if let Err(e) = self.transports.send_sms(&mut self.kernel, msg) {
                self.fault(source, "send:sms".into(), e.to_string());
            }
        }
        for (table, values) in out.rows {
            self.telemetry.record(table, now, values)?;
        }
        if out.changed {
            self.changes.push((now, source));
        }
        Ok(())
    }

    /// Dispatches every event due at or before `horizon`, then parks the
    /// clock at `horizon`. Returns the number of events dispatched.
    pub fn run_until(&mut self, horizon: VirtualTime) -> Result<usize, CityError> {
        if horizon < self.now() {
            return Err(KernelError::PastTimestamp {
                at: horizon,
                now: self.now(),
            }
            .into());
        }
        let mut count = 0;
        while self.kernel.peek_time().is_some_and(|t| t <= horizon) {
            if self.step_inner(Some(horizon))?.is_some() {
                count += 1;
            }
        }
        self.kernel.advance_idle(horizon)?;
        Ok(count)
    }

    /// Devices whose observable state changed since the last call.
    pub fn take_changes(&mut self) -> Vec<(VirtualTime, DeviceId)> {
        std::mem::take(&mut self.changes)
    }

    pub fn snapshot(&self, id: DeviceId) -> serde_json::Value {
        self.device(id).snapshot(self.now())
    }

    /// Every device snapshot keyed by device name, plus the clock.
    pub fn state(&self) -> serde_json::Value {
        let mut obj = serde_json::Map::new();
        for id in DeviceId::CONTROLLERS.into_iter().chain([DeviceId::Sms]) {
            obj.insert(id.to_string(), self.snapshot(id));
        }
        obj.insert("kernel".into(), serde_json::json!({ "now_ms": self.now().millis() }));
        serde_json::Value::Object(obj)
    }

    /// Resolves a dotted path such as `parking.available`.
    pub fn query(&self, path: &str) -> Result<serde_json::Value, QueryError> {
        query::resolve(&self.state(), path)
    }

    /// Writes telemetry CSVs, `telemetry.json`, `sms_inbox.json` and
    /// `transcript.txt` into `dir`.
    pub fn export(&self, dir: &Path) -> Result<(), CityError> {
        self.telemetry.export_csv(dir)?;
        let write = |name: &str, body: String| {
            let path = dir.join(name);
            fs::write(&path, body).map_err(|source| CityError::Io {
                path: path.display().to_string(),
                source,
            })
        };
        write(
            "telemetry.json",
            serde_json::to_string_pretty(&self.telemetry.export_json()).expect("json serializes") + "\n",
        )?;
        write("sms_inbox.json", self.sms.dump_json() + "\n")?;
        write("transcript.txt", self.transcript_text())?;
        Ok(())
    }
}

impl From<DeviceError> for CityError {
    fn from(e: DeviceError) -> Self {
        CityError::Config(e.to_string())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::devices::security::OpenClosed;
    use crate::devices::streetlight::Level;
    use crate::transports::{LINK_HOME, LINK_STREETLIGHT};

    fn city() -> City {
        let config = CityConfig {
            fingerprints: vec!["alice".into()],
            ..CityConfig::default()
        };
        City::new(SimConfig::default(), &config).unwrap()
    }

    fn stim(target: DeviceId, stimulus: Stimulus) -> Action {
        Action::Stimulus { target, stimulus }
    }

    #[test]
    fn serial_command_path() {
        let mut c = city();
        c.inject(
            VirtualTime(100),
            Action::Transmit {
                link: LINK_STREETLIGHT.into(),
                frame: Frame::Serial(b"D3".to_vec()),
            },
        )
        .unwrap();
        c.run_until(VirtualTime(119)).unwrap();
        assert_eq!(c.streetlight().levels(), [Level::Off; 8]);
        c.run_until(VirtualTime(120)).unwrap();
        assert_eq!(c.streetlight().channel(1).level, Level::Dim);
        assert_eq!(c.streetlight().channel(3).level, Level::High);
        let kinds: Vec<_> = c.transcript().iter().map(|e| e.kind.as_str()).collect();
        assert_eq!(kinds, ["send:serial", "frame:serial"]);
    }

    #[test]
    fn lan_delivery_invokes_home_once() {
        let mut c = city();
        c.inject(
            VirtualTime(0),
            Action::Transmit {
                link: LINK_HOME.into(),
                frame: Frame::Lan(r#"{"appliance":"fridge","on":true}"#.into()),
            },
        )
        .unwrap();
        c.run_until(VirtualTime(1000)).unwrap();
        assert_eq!(c.home().toggle_count("fridge").unwrap(), 1);
        let home_events = c.transcript().iter().filter(|e| e.target == DeviceId::Home).count();
        assert_eq!(home_events, 2);
        assert_eq!(c.telemetry().rows(crate::telemetry::Table::HomeAppliance).len(), 1);
    }

    #[test]
    fn door_closes_exactly_five_seconds_later() {
        let mut c = city();
        c.inject(
            VirtualTime(1000),
            stim(DeviceId::Security, Stimulus::Fingerprint { token: "alice".into() }),
        )
        .unwrap();
        c.run_until(VirtualTime(5999)).unwrap();
        assert_eq!(c.security().door(), OpenClosed::Open);
        c.run_until(VirtualTime(6000)).unwrap();
        assert_eq!(c.security().door(), OpenClosed::Closed);
        let close = c.transcript().last().unwrap();
        assert_eq!((close.at, close.kind.as_str()), (VirtualTime(6000), "timer:door_close"));
    }

    #[test]
    fn unregistered_device_is_a_fault() {
        let config = CityConfig {
            devices: vec![DeviceId::Streetlight],
            ..CityConfig::default()
        };
        let mut c = City::new(SimConfig::default(), &config).unwrap();
        c.inject(VirtualTime(0), stim(DeviceId::Parking, Stimulus::EntryPresence(true)))
            .unwrap();
        assert_eq!(c.run_until(VirtualTime(10)).unwrap(), 0);
        assert_eq!(c.faults().len(), 1);
        assert!(c.faults()[0].error.contains("no device registered"));
    }

    #[test]
    fn bad_input_is_recorded_not_fatal() {
        let mut c = city();
        c.inject(VirtualTime(0), stim(DeviceId::Streetlight, Stimulus::LdrSample(5000)))
            .unwrap();
        c.inject(
            VirtualTime(1),
            stim(
                DeviceId::Parking,
                Stimulus::SlotPresence {
                    slot: 1,
                    occupied: true,
                },
            ),
        )
        .unwrap();
        c.run_until(VirtualTime(10)).unwrap();
        assert_eq!(c.faults().len(), 1);
        assert_eq!(c.parking().available(), 3);
    }

    #[test]
    fn flame_sms_reaches_inbox() {
        let mut c = city();
        c.inject(VirtualTime(0), stim(DeviceId::Accident, Stimulus::FlameSample(900)))
            .unwrap();
        c.run_until(VirtualTime(2000)).unwrap();
        let inbox: Vec<_> = c.sms().inbox("16").collect();
        assert_eq!(inbox.len(), 1);
        assert_eq!(inbox[0].body, "FIRE LOCATION UNKNOWN");
        assert_eq!(inbox[0].delivered_at_ms, 2000);
    }

    #[test]
    fn query_paths() {
        let c = city();
        assert_eq!(c.query("parking.available").unwrap(), 4);
        assert_eq!(c.query("door.state").unwrap(), "CLOSED");
        assert!(c.query("parking.nope").is_err());
    }

    #[test]
    fn rejects_bad_thresholds() {
        let config = CityConfig {
            ldr_threshold: 2000,
            ..CityConfig::default()
        };
        assert!(matches!(
            City::new(SimConfig::default(), &config),
            Err(CityError::Config(_))
        ));
    }
}

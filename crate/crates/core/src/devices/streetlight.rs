//! Eight-channel street-light controller.
//!
//! Serial command alphabet, one byte per command:
//!
//! | byte      | effect                                  |
//! |-----------|-----------------------------------------|
//! | `A`       | automatic mode                          |
//! | `H`/`D`/`F` | all channels HIGH / DIM / OFF (manual) |
//! | `1`..`8`  | that channel HIGH (manual, latching)    |
//! | `0`       | clear specific lights (all OFF, manual) |
//!
//! In automatic mode the LDR decides day or night: a reading strictly below
//! the threshold is night, which dims every lamp; day switches them off.
//! At night a vehicle passing a lane sensor lifts that lane to HIGH for
//! [`HIGH_HOLD_MS`].

use serde::Serialize;

use crate::device::{Device, DeviceError, DeviceId, Outbox};
use crate::event::{Frame, Payload, Stimulus, Timer};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;

pub const CHANNELS: usize = 8;
pub const DEFAULT_LDR_THRESHOLD: i64 = 15;
pub const DETECTION_THRESHOLD_CM: f64 = 100.0;
pub const HIGH_HOLD_MS: u64 = 5_000;
pub const ADC_MAX: i64 = 1023;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Level {
    Off,
    Dim,
    High,
}

impl Level {
    pub fn as_str(self) -> &'static str {
        match self {
            Level::Off => "OFF",
            Level::Dim => "DIM",
            Level::High => "HIGH",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Mode {
    Manual,
    Automatic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct LightChannel {
    pub index: u8,
    pub level: Level,
    /// Set only while the lamp is HIGH because of a detected vehicle.
    pub high_hold_until: Option<VirtualTime>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StreetlightSnapshot {
    pub mode: Mode,
    pub levels: Vec<Level>,
    pub is_night: bool,
    pub ldr_threshold: i64,
    pub vehicle_count: Vec<u64>,
}

#[derive(Debug, Clone)]
pub struct Streetlight {
    mode: Mode,
    channels: [LightChannel; CHANNELS],
    is_night: bool,
    ldr_threshold: i64,
    vehicle_count: [u64; CHANNELS],
    occupied: [bool; CHANNELS],
}

impl Default for Streetlight {
    fn default() -> Self {
        Self::new(DEFAULT_LDR_THRESHOLD)
    }
}

impl Streetlight {
    pub fn new(ldr_threshold: i64) -> Self {
        assert!((0..=ADC_MAX).contains(&ldr_threshold), "LDR threshold must be 0..=1023");
        let channels = std::array::from_fn(|i| LightChannel {
            index: i as u8 + 1,
            level: Level::Off,
            high_hold_until: None,
        });
        Streetlight {
            mode: Mode::Manual,
            channels,
            is_night: false,
            ldr_threshold,
            vehicle_count: [0; CHANNELS],
            occupied: [false; CHANNELS],
        }
    }

    pub fn mode(&self) -> Mode {
        self.mode
    }

    pub fn levels(&self) -> [Level; CHANNELS] {
        self.channels.map(|c| c.level)
    }

    pub fn channel(&self, index: u8) -> &LightChannel {
        &self.channels[index as usize - 1]
    }

    pub fn is_night(&self) -> bool {
        self.is_night
    }

    pub fn vehicle_count(&self, lane: u8) -> u64 {
        self.vehicle_count[lane as usize - 1]
    }

    pub fn state(&self) -> StreetlightSnapshot {
        StreetlightSnapshot {
            mode: self.mode,
            levels: self.levels().to_vec(),
            is_night: self.is_night,
            ldr_threshold: self.ldr_threshold,
            vehicle_count: self.vehicle_count.to_vec(),
        }
    }

    /// Applies `f` to the channels and logs one row if any level moved.
    fn update_levels(&mut self, out: &mut Outbox, f: impl FnOnce(&mut [LightChannel; CHANNELS])) {
        let before = self.levels();
        f(&mut self.channels);
        if self.levels() != before {
            out.row(
                Table::Streetlight,
                self.levels().iter().map(|l| l.as_str().to_string()).collect(),
            );
            out.mark_changed();
        }
    }

    fn set_all(&mut self, level: Level, out: &mut Outbox) {
        self.update_levels(out, |chs| {
            for ch in chs.iter_mut() {
                ch.level = level;
                ch.high_hold_until = None;
            }
        });
    }

    fn ambient_level(&self) -> Level {
        if self.is_night {
            Level::Dim
        } else {
            Level::Off
        }
    }

    pub fn handle_command(&mut self, byte: u8, out: &mut Outbox) -> Result<(), DeviceError> {
        match byte {
            b'A' => {
                if self.mode != Mode::Automatic {
                    self.mode = Mode::Automatic;
                    out.mark_changed();
                }
                let level = self.ambient_level();
                self.set_all(level, out);
            }
            b'H' | b'D' | b'F' | b'0' => {
                self.enter_manual(out);
                let level = match byte {
                    b'H' => Level::High,
                    b'D' => Level::Dim,
                    _ => Level::Off,
                };
                self.set_all(level, out);
            }
            b'1'..=b'8' => {
                self.enter_manual(out);
                let idx = (byte - b'1') as usize;
                self.update_levels(out, |chs| {
                    chs[idx].level = Level::High;
                    chs[idx].high_hold_until = None;
                });
            }
            other => return Err(DeviceError::UnknownCommand(other)),
        }
        Ok(())
    }

    fn enter_manual(&mut self, out: &mut Outbox) {
        if self.mode != Mode::Manual {
            self.mode = Mode::Manual;
            out.mark_changed();
        }
        for ch in &mut self.channels {
            ch.high_hold_until = None;
        }
    }

    pub fn on_ldr_sample(&mut self, value: i64, out: &mut Outbox) -> Result<(), DeviceError> {
        if !(0..=ADC_MAX).contains(&value) {
            return Err(DeviceError::OutOfRange {
                what: "LDR",
                value: value as f64,
                min: 0.0,
                max: ADC_MAX as f64,
            });
        }
        let night = value < self.ldr_threshold;
        if night == self.is_night {
            return Ok(());
        }
        self.is_night = night;
        out.mark_changed();
        if self.mode == Mode::Automatic {
            let level = self.ambient_level();
            self.set_all(level, out);
        }
        Ok(())
    }

    pub fn on_lane_presence(
        &mut self,
        now: VirtualTime,
        lane: u8,
        distance_cm: f64,
        out: &mut Outbox,
    ) -> Result<(), DeviceError> {
        if !(1..=CHANNELS as u8).contains(&lane) {
            return Err(DeviceError::InvalidLane(lane));
        }
        if distance_cm.is_nan() || distance_cm < 0.0 {
            return Err(DeviceError::OutOfRange {
                what: "distance",
                value: distance_cm,
                min: 0.0,
                max: f64::INFINITY,
            });
        }
        let idx = lane as usize - 1;
        let detected = distance_cm < DETECTION_THRESHOLD_CM;
        let edge = detected && !self.occupied[idx];
        self.occupied[idx] = detected;
        if !edge {
            return Ok(());
        }
        self.vehicle_count[idx] += 1;
        out.mark_changed();
        if self.mode == Mode::Automatic && self.is_night {
            let until = now + HIGH_HOLD_MS;
            self.update_levels(out, |chs| chs[idx].level = Level::High);
            self.channels[idx].high_hold_until = Some(until);
            out.timer(HIGH_HOLD_MS, Timer::LightHold { lane });
        }
        Ok(())
    }

    /// Hold expiry. Ignored unless it is the live hold for that lane.
    pub fn on_hold_expiry(&mut self, now: VirtualTime, lane: u8, out: &mut Outbox) {
        let idx = lane as usize - 1;
        if self.channels[idx].high_hold_until != Some(now) {
            return;
        }
        self.channels[idx].high_hold_until = None;
        if self.mode == Mode::Automatic && self.is_night {
            self.update_levels(out, |chs| chs[idx].level = Level::Dim);
        }
    }
}

impl Device for Streetlight {
    fn id(&self) -> DeviceId {
        DeviceId::Streetlight
    }

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Frame(Frame::Serial(bytes)) => {
                // a bad byte is reported but does not swallow the rest of the burst
                let mut first_err = None;
                for &b in bytes {
                    if let Err(e) = self.handle_command(b, out) {
                        first_err.get_or_insert(e);
                    }
                }
                first_err.map_or(Ok(()), Err)
            }
            Payload::Stimulus(Stimulus::LdrSample(v)) => self.on_ldr_sample(*v, out),
            Payload::Stimulus(Stimulus::LanePresence { lane, distance_cm }) => {
                self.on_lane_presence(now, *lane, *distance_cm, out)
            }
            Payload::Timer(Timer::LightHold { lane }) => {
                self.on_hold_expiry(now, *lane, out);
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Streetlight, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.state()).expect("snapshot serializes")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use Level::*;

    fn cmd(s: &mut Streetlight, byte: u8) -> Outbox {
        let mut out = Outbox::default();
        s.handle_command(byte, &mut out).unwrap();
        out
    }

    fn night_auto() -> Streetlight {
        let mut s = Streetlight::default();
        cmd(&mut s, b'A');
        s.on_ldr_sample(14, &mut Outbox::default()).unwrap();
        s
    }

    #[test]
    fn fresh_device() {
        let s = Streetlight::default();
        assert_eq!(s.mode(), Mode::Manual);
        assert_eq!(s.levels(), [Off; 8]);
        assert_eq!(s.state().vehicle_count, vec![0; 8]);
    }

    #[test]
    fn all_commands() {
        let mut s = Streetlight::default();
        cmd(&mut s, b'H');
        assert_eq!(s.levels(), [High; 8]);
        assert_eq!(s.mode(), Mode::Manual);
        cmd(&mut s, b'D');
        assert_eq!(s.levels(), [Dim; 8]);
        cmd(&mut s, b'F');
        assert_eq!(s.levels(), [Off; 8]);
    }

    #[test]
    fn specific_light_latches_high() {
        let mut s = Streetlight::default();
        cmd(&mut s, b'2');
        assert_eq!(s.levels(), [Off, High, Off, Off, Off, Off, Off, Off]);
        cmd(&mut s, b'2');
        assert_eq!(s.channel(2).level, High);
        cmd(&mut s, b'0');
        assert_eq!(s.levels(), [Off; 8]);
    }

    #[test]
    fn unknown_command_leaves_state() {
        let mut s = Streetlight::default();
        cmd(&mut s, b'H');
        let mut out = Outbox::default();
        assert_eq!(s.handle_command(b'Z', &mut out), Err(DeviceError::UnknownCommand(b'Z')));
        assert_eq!(s.levels(), [High; 8]);
        assert!(out.rows.is_empty());
    }

    #[test]
    fn one_row_per_change() {
        let mut s = Streetlight::default();
        assert_eq!(cmd(&mut s, b'H').rows.len(), 1);
        assert_eq!(cmd(&mut s, b'H').rows.len(), 0);
        let rows = cmd(&mut s, b'F').rows;
        assert_eq!(rows[0].1, vec!["OFF".to_string(); 8]);
    }

    #[test]
    fn ldr_threshold_is_strict() {
        let mut s = Streetlight::default();
        cmd(&mut s, b'A');
        let mut out = Outbox::default();
        s.on_ldr_sample(14, &mut out).unwrap();
        assert!(s.is_night());
        assert_eq!(s.levels(), [Dim; 8]);
        s.on_ldr_sample(15, &mut out).unwrap();
        assert!(!s.is_night());
        assert_eq!(s.levels(), [Off; 8]);
        s.on_ldr_sample(1023, &mut out).unwrap();
        assert!(!s.is_night());
        assert!(matches!(
            s.on_ldr_sample(1024, &mut out),
            Err(DeviceError::OutOfRange { .. })
        ));
        assert!(matches!(
            s.on_ldr_sample(-1, &mut out),
            Err(DeviceError::OutOfRange { .. })
        ));
    }

    #[test]
    fn manual_mode_ignores_ldr_levels() {
        let mut s = Streetlight::default();
        cmd(&mut s, b'H');
        s.on_ldr_sample(0, &mut Outbox::default()).unwrap();
        assert!(s.is_night());
        assert_eq!(s.levels(), [High; 8]);
    }

    #[test]
    fn night_detection_lifts_lane() {
        let mut s = night_auto();
        let mut out = Outbox::default();
        s.on_lane_presence(VirtualTime(1000), 3, 40.0, &mut out).unwrap();
        assert_eq!(s.channel(3).level, High);
        assert_eq!(s.channel(3).high_hold_until, Some(VirtualTime(6000)));
        assert_eq!(s.vehicle_count(3), 1);
        assert_eq!(out.timers, vec![(HIGH_HOLD_MS, Timer::LightHold { lane: 3 })]);
        s.on_hold_expiry(VirtualTime(6000), 3, &mut out);
        assert_eq!(s.channel(3).level, Dim);
    }

    #[test]
    fn day_detection_only_counts() {
        let mut s = Streetlight::default();
        cmd(&mut s, b'A');
        let mut out = Outbox::default();
        s.on_lane_presence(VirtualTime(0), 3, 40.0, &mut out).unwrap();
        assert_eq!(s.vehicle_count(3), 1);
        assert_eq!(s.levels(), [Off; 8]);
        assert!(out.timers.is_empty());
    }

    #[test]
    fn far_objects_are_ignored() {
        let mut s = night_auto();
        s.on_lane_presence(VirtualTime(0), 3, 300.0, &mut Outbox::default())
            .unwrap();
        assert_eq!(s.vehicle_count(3), 0);
        assert_eq!(s.channel(3).level, Dim);
    }

    #[test]
    fn counting_needs_a_new_edge() {
        let mut s = Streetlight::default();
        let mut out = Outbox::default();
        for d in [40.0, 30.0, 200.0, 50.0] {
            s.on_lane_presence(VirtualTime(0), 1, d, &mut out).unwrap();
        }
        assert_eq!(s.vehicle_count(1), 2);
    }

    #[test]
    fn retrigger_supersedes_older_hold() {
        let mut s = night_auto();
        let mut out = Outbox::default();
        s.on_lane_presence(VirtualTime(0), 3, 40.0, &mut out).unwrap();
        s.on_lane_presence(VirtualTime(1000), 3, 400.0, &mut out).unwrap();
        s.on_lane_presence(VirtualTime(2000), 3, 40.0, &mut out).unwrap();
        s.on_hold_expiry(VirtualTime(5000), 3, &mut out);
        assert_eq!(s.channel(3).level, High);
        s.on_hold_expiry(VirtualTime(7000), 3, &mut out);
        assert_eq!(s.channel(3).level, Dim);
    }

    #[test]
    fn expiry_after_manual_switch_is_inert() {
        let mut s = night_auto();
        let mut out = Outbox::default();
        s.on_lane_presence(VirtualTime(0), 3, 40.0, &mut out).unwrap();
        cmd(&mut s, b'4');
        let before = s.levels();
        s.on_hold_expiry(VirtualTime(5000), 3, &mut out);
        assert_eq!(s.levels(), before);
    }

    #[test]
    fn invalid_lane() {
        let mut s = Streetlight::default();
        assert_eq!(
            s.on_lane_presence(VirtualTime(0), 9, 1.0, &mut Outbox::default()),
            Err(DeviceError::InvalidLane(9))
        );
    }

    #[test]
    fn burst_processes_in_order() {
        let mut s = Streetlight::default();
        let mut out = Outbox::default();
        s.handle(VirtualTime(0), &Payload::Frame(Frame::Serial(b"D3".to_vec())), &mut out)
            .unwrap();
        assert_eq!(s.levels(), [Dim, Dim, High, Dim, Dim, Dim, Dim, Dim]);
        assert_eq!(out.rows.len(), 2);
    }
}

//! Public information display: LCD 1 shows temperature and humidity,
//! LCD 2 shows operator notices received over Bluetooth.
//!
//! The first accepted sensor reading is shown immediately and starts a
//! refresh cycle; from then on the display re-renders every
//! `sample_period_ms` using the latest reading. A period of zero disables the
//! cycle and renders each reading as it arrives.
//!
//! Notices up to 32 characters wrap across both rows. Longer ones scroll as a
//! marquee: a 32-character window over the text followed by 32 blanks,
//! advancing one column every [`MARQUEE_STEP_MS`].

use serde::Serialize;

use crate::device::{Device, DeviceError, DeviceId, Outbox};
use crate::devices::lcd::{fit_row, Lcd, COLS};
use crate::event::{Frame, Payload, Stimulus, Timer};
use crate::kernel::VirtualTime;
use crate::telemetry::Table;

pub const SAMPLE_PERIOD_MS: u64 = 10_000;
pub const MARQUEE_STEP_MS: u64 = 500;
pub const TEMP_RANGE_C: (f64, f64) = (0.0, 50.0);
pub const RH_RANGE_PCT: (f64, f64) = (20.0, 90.0);

const WINDOW: usize = 2 * COLS;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnvSample {
    pub temp_c: f64,
    pub rh_pct: f64,
}

pub fn format_temp(t: f64) -> String {
    format!("{t:.1}")
}

pub fn format_rh(h: f64) -> String {
    format!("{h:.0}")
}

/// Both notice rows for `message` scrolled to `offset`.
pub fn notice_window(message: &str, offset: usize) -> [String; 2] {
    let chars: Vec<char> = message.chars().collect();
    let visible: String = if chars.len() <= WINDOW {
        chars.iter().collect::<String>()
    } else {
        let tape = chars.len() + WINDOW;
        (0..WINDOW)
            .map(|i| chars.get((offset + i) % tape).copied().unwrap_or(' '))
            .collect()
    };
    let top: String = visible.chars().take(COLS).collect();
    let bottom: String = visible.chars().skip(COLS).collect();
    [fit_row(&top), fit_row(&bottom)]
}

/// Number of ticks after which a marquee returns to its starting frame.
pub fn marquee_period(message: &str) -> usize {
    message.chars().count() + WINDOW
}

#[derive(Debug, Clone, Serialize)]
pub struct DisplaySnapshot {
    pub env: Vec<String>,
    pub notice: Vec<String>,
    pub last_sample: Option<EnvSample>,
    pub message: Option<String>,
    pub scroll_offset: usize,
    pub samples_shown: u64,
    pub notices_received: u64,
}

#[derive(Debug, Clone)]
pub struct InfoDisplay {
    env: Lcd,
    notice: Lcd,
    last_sample: Option<EnvSample>,
    pending: Option<EnvSample>,
    sample_period_ms: u64,
    refreshing: bool,
    message: Option<String>,
    scroll_offset: usize,
    generation: u64,
    samples_shown: u64,
    notices_received: u64,
}

impl Default for InfoDisplay {
    fn default() -> Self {
        Self::new(SAMPLE_PERIOD_MS)
    }
}

impl InfoDisplay {
    pub fn new(sample_period_ms: u64) -> Self {
        InfoDisplay {
            env: Lcd::blank(),
            notice: Lcd::blank(),
            last_sample: None,
            pending: None,
            sample_period_ms,
            refreshing: false,
            message: None,
            scroll_offset: 0,
            generation: 0,
            samples_shown: 0,
            notices_received: 0,
        }
    }

    pub fn env_lcd(&self) -> &Lcd {
        &self.env
    }

    pub fn notice_lcd(&self) -> &Lcd {
        &self.notice
    }

    pub fn last_sample(&self) -> Option<EnvSample> {
        self.last_sample
    }

    pub fn scroll_offset(&self) -> usize {
        self.scroll_offset
    }

    fn show(&mut self, sample: EnvSample, out: &mut Outbox) {
        self.last_sample = Some(sample);
        self.samples_shown += 1;
        self.env.set_row(0, &format!("TEMP: {}C", format_temp(sample.temp_c)));
        self.env.set_row(1, &format!("HUM: {}%", format_rh(sample.rh_pct)));
        out.row(
            Table::InfoEnv,
            vec![format_temp(sample.temp_c), format_rh(sample.rh_pct)],
        );
        out.mark_changed();
    }

    pub fn on_env_sample(&mut self, temp_c: f64, rh_pct: f64, out: &mut Outbox) -> Result<(), DeviceError> {
        check_range("temperature", temp_c, TEMP_RANGE_C)?;
        check_range("humidity", rh_pct, RH_RANGE_PCT)?;
        let sample = EnvSample { temp_c, rh_pct };
        if self.sample_period_ms == 0 {
            self.show(sample, out);
        } else if self.refreshing {
            self.pending = Some(sample);
        } else {
            self.refreshing = true;
            self.show(sample, out);
            out.timer(self.sample_period_ms, Timer::EnvRefresh);
        }
        Ok(())
    }

    pub fn on_refresh(&mut self, out: &mut Outbox) {
        if !self.refreshing {
            return;
        }
        if let Some(sample) = self.pending.take().or(self.last_sample) {
            self.show(sample, out);
        }
        out.timer(self.sample_period_ms, Timer::EnvRefresh);
    }

    pub fn on_text_message(&mut self, msg: &str, out: &mut Outbox) -> Result<(), DeviceError> {
        let msg = msg.trim_end_matches(['\r', '\n']);
        if msg.is_empty() {
            return Err(DeviceError::EmptyMessage);
        }
        self.generation += 1;
        self.scroll_offset = 0;
        self.message = Some(msg.to_string());
        self.notices_received += 1;
        self.render_notice();
        if msg.chars().count() > WINDOW {
            out.timer(
                MARQUEE_STEP_MS,
                Timer::MarqueeTick {
                    generation: self.generation,
                },
            );
        }
        out.row(Table::InfoNotice, vec![msg.to_string()]);
        out.mark_changed();
        Ok(())
    }

    pub fn on_marquee_tick(&mut self, generation: u64, out: &mut Outbox) {
        if generation != self.generation {
            return;
        }
        let Some(msg) = &self.message else { return };
        self.scroll_offset = (self.scroll_offset + 1) % marquee_period(msg);
        self.render_notice();
        out.timer(MARQUEE_STEP_MS, Timer::MarqueeTick { generation });
        out.mark_changed();
    }

    fn render_notice(&mut self) {
        if let Some(msg) = &self.message {
            let [top, bottom] = notice_window(msg, self.scroll_offset);
            self.notice.set_row(0, &top);
            self.notice.set_row(1, &bottom);
        }
    }

    pub fn render(&self) -> DisplaySnapshot {
        DisplaySnapshot {
            env: self.env.rows(),
            notice: self.notice.rows(),
            last_sample: self.last_sample,
            message: self.message.clone(),
            scroll_offset: self.scroll_offset,
            samples_shown: self.samples_shown,
            notices_received: self.notices_received,
        }
    }
}

fn check_range(what: &'static str, value: f64, (min, max): (f64, f64)) -> Result<(), DeviceError> {
    if value >= min && value <= max {
        Ok(())
    } else {
        Err(DeviceError::OutOfRange { what, value, min, max })
    }
}

impl Device for InfoDisplay {
    fn id(&self) -> DeviceId {
        DeviceId::Display
    }

    fn handle(&mut self, _now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Frame(Frame::Serial(bytes)) => {
                let text = String::from_utf8_lossy(bytes);
                self.on_text_message(&text, out)
            }
            Payload::Stimulus(Stimulus::EnvSample { temp_c, rh_pct }) => self.on_env_sample(*temp_c, *rh_pct, out),
            Payload::Timer(Timer::EnvRefresh) => {
                self.on_refresh(out);
                Ok(())
            }
            Payload::Timer(Timer::MarqueeTick { generation }) => {
                self.on_marquee_tick(*generation, out);
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Display, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        serde_json::to_value(self.render()).expect("snapshot serializes")
    }
}

//! Virtual links between the outside world and the controllers.
//!
//! Every link has a fixed target device and a latency. Deliveries on one
//! link are FIFO: a frame is never scheduled earlier than the frame sent
//! before it on the same link.

pub mod nmea;

use std::collections::BTreeMap;

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::{Device, DeviceError, DeviceId, Outbox};
use crate::event::{Frame, Payload};
use crate::kernel::{Kernel, KernelError, VirtualTime};

pub use nmea::{compose_rmc, nmea_checksum, parse_nmea_rmc, GpsFix, NmeaError};

pub const SMS_MAX_CHARS: usize = 160;

pub const SERIAL_LATENCY_MS: u64 = 20;
pub const LAN_LATENCY_MS: u64 = 50;
pub const SMS_LATENCY_MS: u64 = 2000;
/// Informational Bluetooth range.
pub const BLUETOOTH_RANGE_M: f64 = 15.0;

pub const LINK_STREETLIGHT: &str = "bt-streetlight";
pub const LINK_DISPLAY: &str = "bt-display";
pub const LINK_HOME: &str = "wifi-home";
pub const LINK_GSM: &str = "gsm";
pub const LINK_GPS: &str = "gps";

#[derive(Debug, Error, PartialEq)]
pub enum TransportError {
    #[error("unknown link `{0}`")]
    UnknownLink(String),
    #[error("link `{link}` carries {kind:?} frames, not {got}")]
    WrongFrameKind {
        link: String,
        kind: LinkKind,
        got: &'static str,
    },
    #[error("refusing to send an empty byte burst")]
    EmptyBurst,
    #[error("SMS body is {0} characters, limit is 160")]
    OversizedBody(usize),
    #[error("SMS recipient is empty")]
    EmptyRecipient,
    #[error(transparent)]
    Kernel(#[from] KernelError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LinkKind {
    Serial,
    Lan,
    Sms,
    Gps,
}

impl LinkKind {
    fn accepts(self, frame: &Frame) -> bool {
        matches!(
            (self, frame),
            (LinkKind::Serial, Frame::Serial(_))
                | (LinkKind::Lan, Frame::Lan(_))
                | (LinkKind::Sms, Frame::Sms(_))
                | (LinkKind::Gps, Frame::Gps(_))
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinkConfig {
    pub id: String,
    pub kind: LinkKind,
    pub target: DeviceId,
    pub latency_ms: u64,
    #[serde(default = "default_range")]
    pub range_m: f64,
    /// Probability in `[0, 1)` that a frame is silently dropped.
    #[serde(default)]
    pub loss: f64,
}

fn default_range() -> f64 {
    BLUETOOTH_RANGE_M
}

impl LinkConfig {
    pub fn new(id: &str, kind: LinkKind, target: DeviceId, latency_ms: u64) -> Self {
        LinkConfig {
            id: id.to_string(),
            kind,
            target,
            latency_ms,
            range_m: BLUETOOTH_RANGE_M,
            loss: 0.0,
        }
    }

    /// The five links of the reference city.
    pub fn defaults() -> Vec<LinkConfig> {
        vec![
            LinkConfig::new(
                LINK_STREETLIGHT,
                LinkKind::Serial,
                DeviceId::Streetlight,
                SERIAL_LATENCY_MS,
            ),
            LinkConfig::new(LINK_DISPLAY, LinkKind::Serial, DeviceId::Display, SERIAL_LATENCY_MS),
            LinkConfig::new(LINK_HOME, LinkKind::Lan, DeviceId::Home, LAN_LATENCY_MS),
            LinkConfig::new(LINK_GSM, LinkKind::Sms, DeviceId::Sms, SMS_LATENCY_MS),
            LinkConfig::new(LINK_GPS, LinkKind::Gps, DeviceId::Accident, SERIAL_LATENCY_MS),
        ]
    }
}

#[derive(Debug)]
struct Link {
    config: LinkConfig,
    last_delivery: VirtualTime,
}

/// An addressed text message.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SmsMessage {
    pub to: String,
    pub body: String,
    pub sent_at: VirtualTime,
}

impl SmsMessage {
    pub fn new(to: impl Into<String>, body: impl Into<String>, sent_at: VirtualTime) -> Result<Self, TransportError> {
        let msg = SmsMessage {
            to: to.into(),
            body: body.into(),
            sent_at,
        };
        msg.validate()?;
        Ok(msg)
    }

    pub fn validate(&self) -> Result<(), TransportError> {
        if self.to.trim().is_empty() {
            return Err(TransportError::EmptyRecipient);
        }
        let len = self.body.chars().count();
        if len > SMS_MAX_CHARS {
            return Err(TransportError::OversizedBody(len));
        }
        Ok(())
    }
}

/// Outcome of a send: when the frame will arrive, or `None` when the link
/// dropped it.
pub type Delivery = Option<VirtualTime>;

pub struct Transports {
    links: BTreeMap<String, Link>,
    rng: ChaCha8Rng,
    dropped: u64,
}

impl Transports {
    pub fn new(configs: Vec<LinkConfig>, seed: u64) -> Self {
        let links = configs
            .into_iter()
            .map(|config| {
                (
                    config.id.clone(),
                    Link {
                        config,
                        last_delivery: VirtualTime::ZERO,
                    },
                )
            })
            .collect();
        Transports {
            links,
            rng: ChaCha8Rng::seed_from_u64(seed),
            dropped: 0,
        }
    }

    pub fn link(&self, id: &str) -> Option<&LinkConfig> {
        self.links.get(id).map(|l| &l.config)
    }

    pub fn links(&self) -> impl Iterator<Item = &LinkConfig> {
        self.links.values().map(|l| &l.config)
    }

    pub fn dropped(&self) -> u64 {
        self.dropped
    }

    /// Schedules delivery of `frame` over `link_id`.
    pub fn send(
        &mut self,
        kernel: &mut Kernel<Payload>,
        link_id: &str,
        frame: Frame,
    ) -> Result<Delivery, TransportError> {
        let link = self
            .links
            .get_mut(link_id)
            .ok_or_else(|| TransportError::UnknownLink(link_id.to_string()))?;
        if !link.config.kind.accepts(&frame) {
            return Err(TransportError::WrongFrameKind {
                link: link_id.to_string(),
                kind: link.config.kind,
                got: frame.name(),
            });
        }
        if link.config.loss > 0.0 && self.rng.gen::<f64>() < link.config.loss {
            self.dropped += 1;
            log::debug!("{link_id}: dropped {} frame", frame.name());
            return Ok(None);
        }
        let at = (kernel.now() + link.config.latency_ms).max(link.last_delivery);
        kernel.schedule(at, link.config.target, Payload::Frame(frame))?;
        link.last_delivery = at;
        Ok(Some(at))
    }

    pub fn send_bytes(
        &mut self,
        kernel: &mut Kernel<Payload>,
        link_id: &str,
        bytes: &[u8],
    ) -> Result<Delivery, TransportError> {
        if bytes.is_empty() {
            return Err(TransportError::EmptyBurst);
        }
        self.send(kernel, link_id, Frame::Serial(bytes.to_vec()))
    }

    pub fn send_sms(&mut self, kernel: &mut Kernel<Payload>, msg: SmsMessage) -> Result<Delivery, TransportError> {
        msg.validate()?;
        self.send(kernel, LINK_GSM, Frame::Sms(msg))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InboxEntry {
    pub to: String,
    pub body: String,
    pub delivered_at_ms: u64,
}

/// Receiving end of the GSM link: one append-only inbox per number.
#[derive(Debug, Default)]
pub struct SmsCenter {
    delivered: Vec<InboxEntry>,
}

impl SmsCenter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn inbox<'a>(&'a self, number: &'a str) -> impl Iterator<Item = &'a InboxEntry> + 'a {
        self.delivered.iter().filter(move |e| e.to == number)
    }

    pub fn all(&self) -> &[InboxEntry] {
        &self.delivered
    }

    /// JSON array of `{to, body, delivered_at_ms}` in delivery order.
    pub fn dump_json(&self) -> String {
        serde_json::to_string_pretty(&self.delivered).expect("inbox entries serialize")
    }
}

impl Device for SmsCenter {
    fn id(&self) -> DeviceId {
        DeviceId::Sms
    }

    fn handle(&mut self, now: VirtualTime, payload: &Payload, out: &mut Outbox) -> Result<(), DeviceError> {
        match payload {
            Payload::Frame(Frame::Sms(msg)) => {
                self.delivered.push(InboxEntry {
                    to: msg.to.clone(),
                    body: msg.body.clone(),
                    delivered_at_ms: now.millis(),
                });
                out.mark_changed();
                Ok(())
            }
            other => Err(DeviceError::unsupported(DeviceId::Sms, other)),
        }
    }

    fn snapshot(&self, _now: VirtualTime) -> serde_json::Value {
        let mut counts = BTreeMap::<&str, usize>::new();
        for e in &self.delivered {
            *counts.entry(e.to.as_str()).or_default() += 1;
        }
        serde_json::json!({ "delivered": self.delivered.len(), "per_number": counts })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn setup(latency: u64) -> (Kernel<Payload>, Transports) {
        let mut k = Kernel::new();
        for id in DeviceId::CONTROLLERS {
            k.register(id);
        }
        k.register(DeviceId::Sms);
        let mut links = LinkConfig::defaults();
        links[0].latency_ms = latency;
        (k, Transports::new(links, 0))
    }

    #[test]
    fn serial_latency() {
        let (mut k, mut t) = setup(20);
        k.schedule(
            VirtualTime(100),
            DeviceId::Streetlight,
            Payload::Frame(Frame::Serial(vec![b'x'])),
        )
        .unwrap();
        k.step().unwrap();
        let at = t.send_bytes(&mut k, LINK_STREETLIGHT, b"H").unwrap();
        assert_eq!(at, Some(VirtualTime(120)));
    }

    #[test]
    fn same_tick_sends_stay_ordered() {
        let (mut k, mut t) = setup(20);
        t.send_bytes(&mut k, LINK_STREETLIGHT, b"D").unwrap();
        t.send_bytes(&mut k, LINK_STREETLIGHT, b"3").unwrap();
        let first = k.step().unwrap().unwrap();
        let second = k.step().unwrap().unwrap();
        assert_eq!(first.payload, Payload::Frame(Frame::Serial(b"D".to_vec())));
        assert_eq!(second.payload, Payload::Frame(Frame::Serial(b"3".to_vec())));
    }

    #[test]
    fn unknown_link_and_empty_burst() {
        let (mut k, mut t) = setup(20);
        assert_eq!(
            t.send_bytes(&mut k, "bt-nowhere", b"H"),
            Err(TransportError::UnknownLink("bt-nowhere".into()))
        );
        assert_eq!(
            t.send_bytes(&mut k, LINK_STREETLIGHT, b""),
            Err(TransportError::EmptyBurst)
        );
    }

    #[test]
    fn frame_kind_must_match_link() {
        let (mut k, mut t) = setup(20);
        assert!(matches!(
            t.send(&mut k, LINK_HOME, Frame::Serial(vec![1])),
            Err(TransportError::WrongFrameKind { .. })
        ));
    }

    #[test]
    fn sms_size_limit() {
        assert!(SmsMessage::new("100", "x".repeat(160), VirtualTime::ZERO).is_ok());
        assert_eq!(
            SmsMessage::new("100", "x".repeat(161), VirtualTime::ZERO),
            Err(TransportError::OversizedBody(161))
        );
        assert_eq!(
            SmsMessage::new("", "hi", VirtualTime::ZERO),
            Err(TransportError::EmptyRecipient)
        );
    }

    #[test]
    fn sms_lands_in_addressed_inbox() {
        let (mut k, mut t) = setup(20);
        let mut center = SmsCenter::new();
        let fire = SmsMessage::new("16", "FIRE lat=28.4200 lon=70.3000", VirtualTime::ZERO).unwrap();
        let police = SmsMessage::new("15", "POLICE ALERT lat=1.0000 lon=2.0000", VirtualTime::ZERO).unwrap();
        assert_eq!(t.send_sms(&mut k, fire).unwrap(), Some(VirtualTime(2000)));
        t.send_sms(&mut k, police).unwrap();
        while let Some(ev) = k.step().unwrap() {
            center.handle(ev.at, &ev.payload, &mut Outbox::default()).unwrap();
        }
        let fire_inbox: Vec<_> = center.inbox("16").collect();
        assert_eq!(fire_inbox.len(), 1);
        assert_eq!(fire_inbox[0].body, "FIRE lat=28.4200 lon=70.3000");
        assert_eq!(fire_inbox[0].delivered_at_ms, 2000);
        assert_eq!(center.inbox("15").count(), 1);
        let dump: serde_json::Value = serde_json::from_str(&center.dump_json()).unwrap();
        assert_eq!(dump[0]["to"], "16");
    }

    #[test]
    fn lossy_link_is_seeded() {
        let run = |seed| {
            let mut k = Kernel::new();
            k.register(DeviceId::Streetlight);
            let mut links = LinkConfig::defaults();
            links[0].loss = 0.5;
            let mut t = Transports::new(links, seed);
            (0..64)
                .map(|_| t.send_bytes(&mut k, LINK_STREETLIGHT, b"H").unwrap().is_some())
                .collect::<Vec<_>>()
        };
        assert_eq!(run(7), run(7));
        assert!(run(7).iter().any(|d| !d));
        assert!(run(7).iter().any(|d| *d));
    }
}

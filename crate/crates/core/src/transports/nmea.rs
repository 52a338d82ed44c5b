//! NMEA-0183 RMC sentences: checksum, decoding and composition.

use std::fmt::Write as _;

use chrono::NaiveDateTime;
use thiserror::Error;

use crate::kernel::VirtualTime;
use crate::num::{lit, Coordinate};

/// A decoded position. Coordinates of an invalid fix are whatever the
/// receiver reported (zero when the fields were empty).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpsFix<S> {
    pub lat: S,
    pub lon: S,
    pub valid: bool,
    pub at: VirtualTime,
}

impl<S: Coordinate> GpsFix<S> {
    pub fn new(lat: S, lon: S) -> Self {
        GpsFix {
            lat,
            lon,
            valid: true,
            at: VirtualTime::ZERO,
        }
    }

    pub fn at(mut self, at: VirtualTime) -> Self {
        self.at = at;
        self
    }

    pub fn in_range(&self) -> bool {
        self.lat.abs() <= lit(90.0) && self.lon.abs() <= lit(180.0)
    }
}

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum NmeaError {
    #[error("checksum mismatch: sentence says {found:02X}, payload gives {computed:02X}")]
    BadChecksum { found: u8, computed: u8 },
    #[error("malformed sentence: {0}")]
    Malformed(String),
    #[error("unsupported sentence type `{0}`")]
    UnsupportedSentence(String),
}

/// XOR of every byte between `$` and `*`.
pub fn nmea_checksum(payload: &str) -> u8 {
    payload.bytes().fold(0, |acc, b| acc ^ b)
}

fn malformed(msg: impl Into<String>) -> NmeaError {
    NmeaError::Malformed(msg.into())
}

/// Splits `$payload*HH` and checks the checksum.
fn checked_payload(sentence: &str) -> Result<&str, NmeaError> {
    let sentence = sentence.trim_end_matches(['\r', '\n']);
    let body = sentence
        .strip_prefix('$')
        .ok_or_else(|| malformed("missing leading '$'"))?;
    let (payload, hex) = body
        .rsplit_once('*')
        .ok_or_else(|| malformed("missing '*' checksum delimiter"))?;
    if hex.len() != 2 || !hex.bytes().all(|b| b.is_ascii_hexdigit()) {
        return Err(malformed(format!("checksum field `{hex}` is not two hex digits")));
    }
    if payload.contains(['$', '*']) {
        return Err(malformed("stray delimiter inside payload"));
    }
    let found = u8::from_str_radix(hex, 16).map_err(|e| malformed(e.to_string()))?;
    let computed = nmea_checksum(payload);
    if found != computed {
        return Err(NmeaError::BadChecksum { found, computed });
    }
    Ok(payload)
}

/// `ddmm.mmmm` / `dddmm.mmmm` to decimal degrees.
fn parse_angle<S: Coordinate>(
    field: &str,
    hemi: &str,
    positive: char,
    negative: char,
    max: f64,
) -> Result<S, NmeaError> {
    let dot = field.find('.').unwrap_or(field.len());
    if dot < 3 || !field[..dot].bytes().all(|b| b.is_ascii_digit()) {
        return Err(malformed(format!("bad angle `{field}`")));
    }
    let (deg, min) = field.split_at(dot - 2);
    let deg: S = deg
        .parse()
        .map_err(|_| malformed(format!("bad degrees in `{field}`")))?;
    let min: S = min
        .parse()
        .map_err(|_| malformed(format!("bad minutes in `{field}`")))?;
    if min >= lit(60.0) {
        return Err(malformed(format!("minutes out of range in `{field}`")));
    }
    let value = deg + min / lit(60.0);
    if value > lit(max) {
        return Err(malformed(format!("angle `{field}` exceeds {max}")));
    }
    match hemi.chars().next() {
        Some(c) if c == positive && hemi.len() == 1 => Ok(value),
        Some(c) if c == negative && hemi.len() == 1 => Ok(-value),
        _ => Err(malformed(format!("bad hemisphere `{hemi}`"))),
    }
}

/// Decodes an RMC sentence (any talker id). The fix is stamped at time zero;
/// receivers re-stamp it with the delivery instant.
pub fn parse_nmea_rmc<S: Coordinate>(sentence: &str) -> Result<GpsFix<S>, NmeaError> {
    let payload = checked_payload(sentence)?;
    let fields: Vec<&str> = payload.split(',').collect();
    let kind = fields[0];
    if kind.len() != 5 || !kind.is_ascii() || !kind.ends_with("RMC") {
        return Err(NmeaError::UnsupportedSentence(kind.to_string()));
    }
    if fields.len() < 10 {
        return Err(malformed(format!("RMC needs at least 10 fields, got {}", fields.len())));
    }
    let valid = match fields[2] {
        "A" => true,
        "V" => false,
        other => return Err(malformed(format!("bad status `{other}`"))),
    };
    let coords_empty = fields[3].is_empty() && fields[5].is_empty();
    let (lat, lon) = if !valid && coords_empty {
        (S::zero(), S::zero())
    } else {
        (
            parse_angle(fields[3], fields[4], 'N', 'S', 90.0)?,
            parse_angle(fields[5], fields[6], 'E', 'W', 180.0)?,
        )
    };
    Ok(GpsFix {
        lat,
        lon,
        valid,
        at: VirtualTime::ZERO,
    })
}

fn write_angle<S: Coordinate>(out: &mut String, value: S, deg_width: usize, positive: char, negative: char) {
    let hemi = if value < S::zero() { negative } else { positive };
    let abs = value.abs().to_f64().unwrap_or(0.0);
    // minutes rounded to 4 places, carrying into degrees when they hit 60
    let total_min = (abs * 60.0 * 10_000.0).round() as u64;
    let deg = total_min / (60 * 10_000);
    let min = total_min % (60 * 10_000);
    let _ = write!(out, "{deg:0deg_width$}{:02}.{:04},{hemi}", min / 10_000, min % 10_000);
}

/// Builds a checksummed `$GPRMC` sentence for `fix`, timestamped `utc`.
pub fn compose_rmc<S: Coordinate>(fix: &GpsFix<S>, utc: NaiveDateTime) -> String {
    let mut payload = String::from("GPRMC,");
    payload.push_str(&utc.format("%H%M%S").to_string());
    payload.push(',');
    payload.push(if fix.valid { 'A' } else { 'V' });
    payload.push(',');
    write_angle(&mut payload, fix.lat, 2, 'N', 'S');
    payload.push(',');
    write_angle(&mut payload, fix.lon, 3, 'E', 'W');
    payload.push_str(",0.0,0.0,");
    payload.push_str(&utc.format("%d%m%y").to_string());
    payload.push_str(",,");
    format!("${payload}*{:02X}", nmea_checksum(&payload))
}

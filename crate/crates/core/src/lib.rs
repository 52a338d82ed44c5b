//! Deterministic discrete-event simulator of a small smart city: street
//! lighting, home automation, door security, traffic signals with plate
//! checks, parking, accident dispatch and an information display.
//!
//! Everything runs on a virtual millisecond clock. Devices are pure state
//! machines; the [`City`] owns the kernel and wires devices, links and
//! telemetry together. Scenarios drive a city from line-delimited JSON.

pub mod city;
pub mod device;
pub mod devices;
pub mod event;
pub mod kernel;
pub mod num;
pub mod query;
pub mod scenario;
pub mod telemetry;
pub mod transports;

pub use city::{Action, City, CityConfig, CityError, Fault};
pub use device::{Device, DeviceError, DeviceId, Outbox};
pub use event::{Department, Frame, Payload, PlateStatus, Stimulus, Timer};
pub use kernel::{Kernel, KernelError, SimConfig, SimEvent, TranscriptEntry, VirtualTime};
pub use num::Coordinate;
pub use scenario::{
    parse_epoch, parse_scenario, parse_scenario_with, parse_step, run_scenario, RunOptions, RunReport, Runner,
    Scenario, ScenarioError, SimOverrides, Step,
};
pub use telemetry::{Table, Telemetry, TelemetryError};
pub use transports::{LinkConfig, SmsCenter, SmsMessage, TransportError, Transports};

/// GPS fix in double precision, as used by the city.
pub type GpsFix = transports::nmea::GpsFix<f64>;
/// Single-precision fix, matching a microcontroller's float.
pub type GpsFix32 = transports::nmea::GpsFix<f32>;
pub type AccidentController = devices::Accident<f64>;

//! Virtual-time event queue.
//!
//! The kernel owns the simulation clock and a min-queue ordered by
//! `(at, seq)`. It is generic over the payload carried by each event so the
//! queue discipline can be exercised on its own; [`crate::city::City`] plugs
//! in the concrete [`crate::event::Payload`].

use std::cmp::{Ordering, Reverse};
use std::collections::{BTreeSet, BinaryHeap};
use std::fmt;
use std::ops::Add;

use chrono::{Duration, NaiveDateTime};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::device::DeviceId;

/// Milliseconds since simulation start.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VirtualTime(pub u64);

impl VirtualTime {
    pub const ZERO: VirtualTime = VirtualTime(0);

    pub fn millis(self) -> u64 {
        self.0
    }

    pub fn saturating_sub(self, other: VirtualTime) -> u64 {
        self.0.saturating_sub(other.0)
    }
}

impl Add<u64> for VirtualTime {
    type Output = VirtualTime;

    fn add(self, ms: u64) -> VirtualTime {
        VirtualTime(self.0 + ms)
    }
}

impl fmt::Display for VirtualTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Run-wide configuration: the calendar instant mapped to `VirtualTime(0)`
/// and the seed for any randomized transport behaviour.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub epoch: NaiveDateTime,
    pub seed: u64,
}

impl SimConfig {
    pub fn wall_clock(&self, at: VirtualTime) -> NaiveDateTime {
        self.epoch + Duration::milliseconds(at.0 as i64)
    }
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            epoch: chrono::NaiveDate::from_ymd_opt(2021, 1, 1)
                .and_then(|d| d.and_hms_opt(0, 0, 0))
                .expect("valid default epoch"),
            seed: 0,
        }
    }
}

/// Something that can ride in the event queue.
pub trait EventPayload {
    /// Short label used in the event transcript, e.g. `timer:door_close`.
    fn kind(&self) -> String;
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimEvent<P> {
    pub at: VirtualTime,
    pub seq: u64,
    pub target: DeviceId,
    pub payload: P,
}

struct Queued<P>(SimEvent<P>);

impl<P> PartialEq for Queued<P> {
    fn eq(&self, other: &Self) -> bool {
        (self.0.at, self.0.seq) == (other.0.at, other.0.seq)
    }
}

impl<P> Eq for Queued<P> {}

impl<P> PartialOrd for Queued<P> {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl<P> Ord for Queued<P> {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.0.at, self.0.seq).cmp(&(other.0.at, other.0.seq))
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum KernelError {
    #[error("event at {at} ms is earlier than the clock ({now} ms)")]
    PastTimestamp { at: VirtualTime, now: VirtualTime },
    #[error("no device registered as `{0}`")]
    UnknownTarget(DeviceId),
}

/// One line of the dispatch transcript.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct TranscriptEntry {
    pub at: VirtualTime,
    pub seq: u64,
    pub target: DeviceId,
    pub kind: String,
}

impl fmt::Display for TranscriptEntry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{},{},{}", self.at, self.seq, self.target, self.kind)
    }
}

pub struct Kernel<P> {
    now: VirtualTime,
    next_seq: u64,
    queue: BinaryHeap<Reverse<Queued<P>>>,
    registered: BTreeSet<DeviceId>,
    transcript: Vec<TranscriptEntry>,
}

impl<P: EventPayload> Default for Kernel<P> {
    fn default() -> Self {
        Self::new()
    }
}

impl<P: EventPayload> Kernel<P> {
    pub fn new() -> Self {
        Kernel {
            now: VirtualTime::ZERO,
            next_seq: 0,
            queue: BinaryHeap::new(),
            registered: BTreeSet::new(),
            transcript: Vec::new(),
        }
    }

    pub fn register(&mut self, id: DeviceId) {
        self.registered.insert(id);
    }

    pub fn is_registered(&self, id: DeviceId) -> bool {
        self.registered.contains(&id)
    }

    pub fn now(&self) -> VirtualTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    /// Time of the earliest queued event, if any.
    pub fn peek_time(&self) -> Option<VirtualTime> {
        self.queue.peek().map(|Reverse(q)| q.0.at)
    }

    /// Enqueues `payload` for `target` at `at`, returning the assigned
    /// sequence number.
    pub fn schedule(&mut self, at: VirtualTime, target: DeviceId, payload: P) -> Result<u64, KernelError> {
        if at < self.now {
            return Err(KernelError::PastTimestamp { at, now: self.now });
        }
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Reverse(Queued(SimEvent {
            at,
            seq,
            target,
            payload,
        })));
        Ok(seq)
    }

    /// Pops the `(at, seq)`-minimal event and advances the clock to it.
    ///
    /// An event for an unregistered target is still consumed (the clock
    /// advances) so a bad event cannot wedge the queue.
    pub fn step(&mut self) -> Result<Option<SimEvent<P>>, KernelError> {
        let Some(Reverse(Queued(event))) = self.queue.pop() else {
            return Ok(None);
        };
        debug_assert!(event.at >= self.now);
        self.now = event.at;
        if !self.registered.contains(&event.target) {
            return Err(KernelError::UnknownTarget(event.target));
        }
        self.transcript.push(TranscriptEntry {
            at: event.at,
            seq: event.seq,
            target: event.target,
            kind: event.payload.kind(),
        });
        Ok(Some(event))
    }

    /// Pops the next event only if it is due at or before `horizon`.
    pub fn step_due(&mut self, horizon: VirtualTime) -> Result<Option<SimEvent<P>>, KernelError> {
        match self.peek_time() {
            Some(at) if at <= horizon => self.step(),
            _ => Ok(None),
        }
    }

    /// Moves the clock forward with nothing dispatched. Refuses to jump over
    /// a pending event.
    pub fn advance_idle(&mut self, to: VirtualTime) -> Result<(), KernelError> {
        if to < self.now {
            return Err(KernelError::PastTimestamp { at: to, now: self.now });
        }
        if let Some(next) = self.peek_time() {
            if next < to {
                self.now = next;
                return Ok(());
            }
        }
        self.now = to;
        Ok(())
    }

    /// Dispatches every event due at or before `horizon`, discarding
    /// payloads. Use [`crate::city::City::run_until`] to actually deliver
    /// them to devices.
    pub fn run_until(&mut self, horizon: VirtualTime) -> Result<usize, KernelError> {
        if horizon < self.now {
            return Err(KernelError::PastTimestamp {
                at: horizon,
                now: self.now,
            });
        }
        let mut count = 0;
        while self.step_due(horizon)?.is_some() {
            count += 1;
        }
        self.now = self.now.max(horizon);
        Ok(count)
    }

    pub fn transcript(&self) -> &[TranscriptEntry] {
        &self.transcript
    }

    /// Transcript rendered as `at,seq,target,kind` lines.
    pub fn transcript_text(&self) -> String {
        let mut out = String::new();
        for entry in &self.transcript {
            out.push_str(&entry.to_string());
            out.push('\n');
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[derive(Debug, Clone, PartialEq)]
    struct Tag(&'static str);

    impl EventPayload for Tag {
        fn kind(&self) -> String {
            self.0.to_string()
        }
    }

    fn kernel() -> Kernel<Tag> {
        let mut k = Kernel::new();
        k.register(DeviceId::Streetlight);
        k
    }

    #[test]
    fn ties_break_by_insertion() {
        let mut k = kernel();
        k.schedule(VirtualTime(5000), DeviceId::Streetlight, Tag("A")).unwrap();
        k.schedule(VirtualTime(5000), DeviceId::Streetlight, Tag("B")).unwrap();
        assert_eq!(k.step().unwrap().unwrap().payload, Tag("A"));
        assert_eq!(k.step().unwrap().unwrap().payload, Tag("B"));
    }

    #[test]
    fn zero_time_event_goes_first() {
        let mut k = kernel();
        k.schedule(VirtualTime(10), DeviceId::Streetlight, Tag("late")).unwrap();
        k.schedule(VirtualTime(0), DeviceId::Streetlight, Tag("first")).unwrap();
        assert_eq!(k.step().unwrap().unwrap().payload, Tag("first"));
    }

    #[test]
    fn rejects_past_timestamp() {
        let mut k = kernel();
        k.schedule(VirtualTime(100), DeviceId::Streetlight, Tag("x")).unwrap();
        k.step().unwrap();
        assert_eq!(
            k.schedule(VirtualTime(99), DeviceId::Streetlight, Tag("y")),
            Err(KernelError::PastTimestamp {
                at: VirtualTime(99),
                now: VirtualTime(100)
            })
        );
    }

    #[test]
    fn step_pops_minimum() {
        let mut k = kernel();
        k.schedule(VirtualTime(3000), DeviceId::Streetlight, Tag("1")).unwrap();
        k.schedule(VirtualTime(2000), DeviceId::Streetlight, Tag("2")).unwrap();
        let ev = k.step().unwrap().unwrap();
        assert_eq!((ev.at, ev.seq), (VirtualTime(2000), 1));
        assert_eq!(k.now(), VirtualTime(2000));
    }

    #[test]
    fn empty_step_keeps_clock() {
        let mut k = kernel();
        assert!(k.step().unwrap().is_none());
        assert_eq!(k.now(), VirtualTime::ZERO);
    }

    #[test]
    fn unknown_target() {
        let mut k = kernel();
        k.schedule(VirtualTime(1), DeviceId::Parking, Tag("x")).unwrap();
        assert_eq!(k.step(), Err(KernelError::UnknownTarget(DeviceId::Parking)));
        assert_eq!(k.pending(), 0);
    }

    #[test]
    fn run_until_counts_due_events() {
        let mut k = kernel();
        for t in [1000, 2000, 9000] {
            k.schedule(VirtualTime(t), DeviceId::Streetlight, Tag("e")).unwrap();
        }
        assert_eq!(k.run_until(VirtualTime(5000)).unwrap(), 2);
        assert_eq!(k.now(), VirtualTime(5000));
        assert_eq!(k.pending(), 1);
        assert_eq!(k.run_until(k.now()).unwrap(), 0);
    }

    #[test]
    fn now_tracks_dispatch() {
        let mut k = kernel();
        assert_eq!(k.now(), VirtualTime(0));
        k.schedule(VirtualTime(7500), DeviceId::Streetlight, Tag("e")).unwrap();
        k.step().unwrap();
        assert_eq!(k.now(), VirtualTime(7500));
    }

    #[test]
    fn advance_idle_stops_at_pending_event() {
        let mut k = kernel();
        k.schedule(VirtualTime(300), DeviceId::Streetlight, Tag("e")).unwrap();
        k.advance_idle(VirtualTime(1000)).unwrap();
        assert_eq!(k.now(), VirtualTime(300));
        assert_eq!(k.pending(), 1);
    }

    #[test]
    fn transcript_lines() {
        let mut k = kernel();
        k.schedule(VirtualTime(5), DeviceId::Streetlight, Tag("timer:x"))
            .unwrap();
        k.run_until(VirtualTime(10)).unwrap();
        assert_eq!(k.transcript_text(), "5,0,streetlight,timer:x\n");
    }
}

//! Multiclock services: per-unit dates, cross-unit comparison, one-shot and
//! recursive timers, and tempo management.
//!
//! The module is passive: it never advances time itself. Callers pass the
//! current wall date in, and the scheduler decides when the next notification
//! is due. Beat-denominated deadlines are stored in beat coordinates, so a
//! tempo change automatically moves their wall due dates.

use std::sync::Arc;

use crate::tree::NodeId;
use crate::value::{ClockSnapshot, Duration, TimeUnit, UnitKind, UnitTable};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClockError {
    #[error("unknown time unit {0}")]
    UnknownUnit(String),
    #[error("timer delay must be positive")]
    NonPositiveDelay,
    #[error("tempo must be a positive finite BPM, got {0}")]
    BadTempo(f64),
    #[error("tempo change at {at} predates the last change at {last}")]
    OutOfOrderTempo { at: f64, last: f64 },
}

#[derive(Debug, Clone, Copy)]
struct Segment {
    wall_start: f64,
    bpm: f64,
    beats_at_start: f64,
}

/// Piecewise-constant tempo over wall time; beat position is its integral,
/// continuous and strictly increasing.
#[derive(Debug, Clone)]
pub struct TempoMap {
    segments: Vec<Segment>,
}

impl TempoMap {
    pub fn new(initial_bpm: f64) -> Result<TempoMap, ClockError> {
        check_bpm(initial_bpm)?;
        Ok(TempoMap {
            segments: vec![Segment { wall_start: 0.0, bpm: initial_bpm, beats_at_start: 0.0 }],
        })
    }

    fn segment_at_wall(&self, wall: f64) -> &Segment {
        match self.segments.iter().rev().find(|s| s.wall_start <= wall) {
            Some(s) => s,
            None => &self.segments[0],
        }
    }

    pub fn bpm_at(&self, wall: f64) -> f64 {
        self.segment_at_wall(wall).bpm
    }

    pub fn beats_at(&self, wall: f64) -> f64 {
        let s = self.segment_at_wall(wall);
        s.beats_at_start + (wall - s.wall_start) * s.bpm / 60.0
    }

    /// Inverse of [`beats_at`].
    pub fn wall_at_beats(&self, beats: f64) -> f64 {
        let s = match self.segments.iter().rev().find(|s| s.beats_at_start <= beats) {
            Some(s) => s,
            None => &self.segments[0],
        };
        s.wall_start + (beats - s.beats_at_start) * 60.0 / s.bpm
    }

    pub fn set_tempo(&mut self, bpm: f64, at: f64) -> Result<(), ClockError> {
        check_bpm(bpm)?;
        let last = self.segments.last().unwrap();
        if at < last.wall_start {
            return Err(ClockError::OutOfOrderTempo { at, last: last.wall_start });
        }
        if at == last.wall_start {
            self.segments.last_mut().unwrap().bpm = bpm;
        } else {
            let beats = self.beats_at(at);
            self.segments.push(Segment { wall_start: at, bpm, beats_at_start: beats });
        }
        Ok(())
    }
}

fn check_bpm(bpm: f64) -> Result<(), ClockError> {
    if bpm.is_finite() && bpm > 0.0 {
        Ok(())
    } else {
        Err(ClockError::BadTempo(bpm))
    }
}

/// An absolute deadline on one of the two underlying clocks.
#[derive(Debug, Clone, Copy, PartialEq)]
enum Deadline {
    Wall(f64),
    Beat(f64),
}

#[derive(Debug, Clone)]
enum TimerEntry {
    OneShot {
        owner: NodeId,
        deadline: Deadline,
        seq: u64,
    },
    Recursive {
        owner: NodeId,
        /// Coordinate of the arming instant on the period's clock.
        tick_base: f64,
        /// Period magnitude on that clock (beats, or already-scaled seconds).
        period: f64,
        tick_on_beats: bool,
        expiry: Deadline,
        next_tick: u64,
        /// Tiebreak for `done`: the original arming order.
        done_seq: u64,
        /// Tiebreak for `step`: refreshed at every delivered tick, so a tick
        /// competes as if armed at the previous one, exactly like the
        /// re-armed await in the lowered repeat encoding.
        step_seq: u64,
    },
}

impl TimerEntry {
    fn owner(&self) -> NodeId {
        match self {
            TimerEntry::OneShot { owner, .. } | TimerEntry::Recursive { owner, .. } => *owner,
        }
    }

}

/// What a timer delivers: `done` ends a wait, `step` is one recursive tick.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerPayload {
    Done(NodeId),
    Step(NodeId),
}

impl TimerPayload {
    pub fn owner(&self) -> NodeId {
        match self {
            TimerPayload::Done(n) | TimerPayload::Step(n) => *n,
        }
    }
}

/// A dated notification; the queue pops in `(due, sequence)` order.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Notification {
    pub due: f64,
    pub payload: TimerPayload,
    pub sequence: u64,
}

#[derive(Debug, Clone)]
pub struct ClockModule {
    tempo: TempoMap,
    units: Arc<UnitTable>,
    timers: Vec<TimerEntry>,
    next_seq: u64,
}

impl ClockModule {
    pub fn new(initial_bpm: f64) -> Result<ClockModule, ClockError> {
        Ok(ClockModule {
            tempo: TempoMap::new(initial_bpm)?,
            units: Arc::new(UnitTable::new()),
            timers: Vec::new(),
            next_seq: 0,
        })
    }

    pub fn register_wall_unit(&mut self, name: &str, seconds_per_unit: f64) {
        Arc::make_mut(&mut self.units).register_wall_unit(name, seconds_per_unit);
    }

    pub fn tempo(&self) -> &TempoMap {
        &self.tempo
    }

    /// Current date in `unit` when the wall clock reads `wall`.
    pub fn now(&self, unit: &TimeUnit, wall: f64) -> Result<f64, ClockError> {
        match self.units.kind(unit) {
            Some(UnitKind::WallScaled(scale)) => Ok(wall / scale),
            Some(UnitKind::Beats) => Ok(self.tempo.beats_at(wall)),
            None => Err(ClockError::UnknownUnit(unit.name().to_string())),
        }
    }

    pub fn snapshot(&self, wall: f64) -> ClockSnapshot {
        ClockSnapshot::new(wall, 60.0 / self.tempo.bpm_at(wall), self.units.clone())
    }

    /// Compare two delays at the rate in effect at `at`.
    pub fn compare(&self, d1: &Duration, d2: &Duration, at: f64) -> Option<std::cmp::Ordering> {
        self.snapshot(at).compare(d1, d2)
    }

    pub fn set_tempo(&mut self, bpm: f64, at: f64) -> Result<(), ClockError> {
        self.tempo.set_tempo(bpm, at)
    }

    fn deadline_after(&self, d: &Duration, at: f64) -> Result<Deadline, ClockError> {
        match self.units.kind(d.unit()) {
            Some(UnitKind::WallScaled(scale)) => Ok(Deadline::Wall(at + d.magnitude() * scale)),
            Some(UnitKind::Beats) => Ok(Deadline::Beat(self.tempo.beats_at(at) + d.magnitude())),
            None => Err(ClockError::UnknownUnit(d.unit().name().to_string())),
        }
    }

    fn resolve(&self, deadline: Deadline) -> f64 {
        match deadline {
            Deadline::Wall(w) => w,
            Deadline::Beat(b) => self.tempo.wall_at_beats(b),
        }
    }

    /// Arm a one-shot timer owned by `owner`: a `done` notification becomes
    /// due when `d` has elapsed from `at`.
    pub fn start_timer(&mut self, owner: NodeId, d: &Duration, at: f64) -> Result<(), ClockError> {
        if d.magnitude() <= 0.0 {
            return Err(ClockError::NonPositiveDelay);
        }
        let deadline = self.deadline_after(d, at)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.timers.push(TimerEntry::OneShot { owner, deadline, seq });
        Ok(())
    }

    /// Arm a recursive timer: `step` notifications every `period` from `at`,
    /// strictly before the expiry instant, then one `done` at expiry. A tick
    /// landing exactly on the expiry is suppressed in favor of `done`.
    pub fn start_recursive_timer(
        &mut self,
        owner: NodeId,
        period: &Duration,
        expiry: &Duration,
        at: f64,
    ) -> Result<(), ClockError> {
        if period.magnitude() <= 0.0 || expiry.magnitude() <= 0.0 {
            return Err(ClockError::NonPositiveDelay);
        }
        let (tick_base, period_mag, on_beats) = match self.units.kind(period.unit()) {
            Some(UnitKind::WallScaled(scale)) => (at, period.magnitude() * scale, false),
            Some(UnitKind::Beats) => (self.tempo.beats_at(at), period.magnitude(), true),
            None => return Err(ClockError::UnknownUnit(period.unit().name().to_string())),
        };
        let expiry = self.deadline_after(expiry, at)?;
        let seq = self.next_seq;
        self.next_seq += 1;
        self.timers.push(TimerEntry::Recursive {
            owner,
            tick_base,
            period: period_mag,
            tick_on_beats: on_beats,
            expiry,
            next_tick: 1,
            done_seq: seq,
            step_seq: seq,
        });
        Ok(())
    }

    /// Remove every pending notification owned by `owner`; unknown owners are
    /// a no-op.
    pub fn cancel(&mut self, owner: NodeId) {
        self.timers.retain(|t| t.owner() != owner);
    }

    fn entry_notification(&self, entry: &TimerEntry) -> Notification {
        match entry {
            TimerEntry::OneShot { owner, deadline, seq } => Notification {
                due: self.resolve(*deadline),
                payload: TimerPayload::Done(*owner),
                sequence: *seq,
            },
            TimerEntry::Recursive {
                owner,
                tick_base,
                period,
                tick_on_beats,
                expiry,
                next_tick,
                done_seq,
                step_seq,
            } => {
                let tick_coord = tick_base + *next_tick as f64 * period;
                let tick_deadline = if *tick_on_beats {
                    Deadline::Beat(tick_coord)
                } else {
                    Deadline::Wall(tick_coord)
                };
                let tick_due = self.resolve(tick_deadline);
                let expiry_due = self.resolve(*expiry);
                if tick_due < expiry_due {
                    Notification {
                        due: tick_due,
                        payload: TimerPayload::Step(*owner),
                        sequence: *step_seq,
                    }
                } else {
                    Notification {
                        due: expiry_due,
                        payload: TimerPayload::Done(*owner),
                        sequence: *done_seq,
                    }
                }
            }
        }
    }

    fn earliest_index(&self) -> Option<usize> {
        (0..self.timers.len()).min_by(|&a, &b| {
            let na = self.entry_notification(&self.timers[a]);
            let nb = self.entry_notification(&self.timers[b]);
            na.due
                .partial_cmp(&nb.due)
                .expect("timer due dates are finite")
                .then(na.sequence.cmp(&nb.sequence))
        })
    }

    /// The earliest pending notification across all clocks, if any.
    pub fn peek_next(&self) -> Option<Notification> {
        self.earliest_index()
            .map(|i| self.entry_notification(&self.timers[i]))
    }

    /// Pop the earliest notification, advancing or retiring its timer.
    pub fn pop_next(&mut self) -> Option<Notification> {
        let idx = self.earliest_index()?;
        let notification = self.entry_notification(&self.timers[idx]);
        match (&mut self.timers[idx], notification.payload) {
            (TimerEntry::Recursive { next_tick, step_seq, .. }, TimerPayload::Step(_)) => {
                *next_tick += 1;
                *step_seq = self.next_seq;
                self.next_seq += 1;
            }
            _ => {
                self.timers.remove(idx);
            }
        }
        Some(notification)
    }

    pub fn pending_count(&self) -> usize {
        self.timers.len()
    }

    pub fn pending_owners(&self) -> Vec<NodeId> {
        self.timers.iter().map(|t| t.owner()).collect()
    }
}

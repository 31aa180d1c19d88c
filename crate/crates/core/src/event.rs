//! Event cloud model.
//!
//! An [`EventStream`] is a time-ordered list of [`Event`]s together with the
//! sensor geometry and a half-open validity window `[t_begin, t_end)`.
//! Timestamps are integer nanoseconds.

use std::fmt;

use crate::error::{Error, Result};

/// A single brightness-change event.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Event {
    /// Pixel column.
    pub x: u16,
    /// Pixel row.
    pub y: u16,
    /// Timestamp in nanoseconds.
    pub t: u64,
    /// Polarity, `+1` or `-1`.
    pub p: i8,
}

impl Event {
    pub const fn new(x: u16, y: u16, t: u64, p: i8) -> Self {
        Self { x, y, t, p }
    }
}

/// Time-ordered events with sensor geometry and a `[t_begin, t_end)` window.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventStream {
    width: u16,
    height: u16,
    t_begin: u64,
    t_end: u64,
    events: Vec<Event>,
}

impl EventStream {
    /// Builds a stream and checks every invariant.
    pub fn new(
        width: u16,
        height: u16,
        t_begin: u64,
        t_end: u64,
        events: Vec<Event>,
    ) -> Result<Self> {
        let stream = Self::new_unchecked(width, height, t_begin, t_end, events);
        let report = stream.validate();
        if report.is_ok() {
            Ok(stream)
        } else {
            Err(Error::Invalid(report.to_string()))
        }
    }

    /// Builds a stream without validation. Use [`EventStream::validate`] to
    /// inspect it afterwards.
    pub fn new_unchecked(
        width: u16,
        height: u16,
        t_begin: u64,
        t_end: u64,
        events: Vec<Event>,
    ) -> Self {
        Self {
            width,
            height,
            t_begin,
            t_end,
            events,
        }
    }

    /// An empty stream over `[t_begin, t_end)`.
    pub fn empty(width: u16, height: u16, t_begin: u64, t_end: u64) -> Self {
        Self::new_unchecked(width, height, t_begin, t_end, Vec::new())
    }

    pub fn width(&self) -> u16 {
        self.width
    }

    pub fn height(&self) -> u16 {
        self.height
    }

    pub fn t_begin(&self) -> u64 {
        self.t_begin
    }

    pub fn t_end(&self) -> u64 {
        self.t_end
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn into_events(self) -> Vec<Event> {
        self.events
    }

    /// Same geometry and window, different events.
    pub fn with_events(&self, events: Vec<Event>) -> Self {
        Self::new_unchecked(self.width, self.height, self.t_begin, self.t_end, events)
    }

    /// Validates with the default violation limit.
    pub fn validate(&self) -> ValidationReport {
        validate_stream(self, ValidationReport::DEFAULT_LIMIT)
    }

    /// Events with `t0 <= t < t1`, with the window set to `[t0, t1)`.
    pub fn slice_time(&self, t0: u64, t1: u64) -> Result<EventStream> {
        slice_time(self, t0, t1)
    }

    /// Index range of events with `t0 <= t < t1` in a sorted stream.
    pub(crate) fn index_range(&self, t0: u64, t1: u64) -> std::ops::Range<usize> {
        let lo = self.events.partition_point(|e| e.t < t0);
        let hi = lo + self.events[lo..].partition_point(|e| e.t < t1);
        lo..hi
    }
}

/// What is wrong with one event.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// Timestamp smaller than its predecessor.
    Unsorted,
    /// Polarity other than `-1` or `+1`.
    Polarity,
    /// Pixel outside the sensor.
    OutOfBounds,
    /// Timestamp outside `[t_begin, t_end)`.
    OutsideWindow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Violation {
    pub index: usize,
    pub kind: ViolationKind,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            ViolationKind::Unsorted => write!(f, "unsorted at index {}", self.index),
            ViolationKind::Polarity => {
                write!(f, "polarity not in {{−1,+1}} at index {}", self.index)
            }
            ViolationKind::OutOfBounds => {
                write!(f, "pixel out of sensor bounds at index {}", self.index)
            }
            ViolationKind::OutsideWindow => {
                write!(f, "timestamp outside window at index {}", self.index)
            }
        }
    }
}

/// Outcome of [`validate_stream`]. Only the first `limit` violations are kept;
/// `total` counts all of them.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
    pub total: usize,
}

impl ValidationReport {
    pub const DEFAULT_LIMIT: usize = 10;

    pub fn is_ok(&self) -> bool {
        self.total == 0
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_ok() {
            return f.write_str("ok");
        }
        write!(f, "{} violation(s): ", self.total)?;
        for (i, v) in self.violations.iter().enumerate() {
            if i > 0 {
                f.write_str("; ")?;
            }
            write!(f, "{v}")?;
        }
        if self.total > self.violations.len() {
            f.write_str("; ...")?;
        }
        Ok(())
    }
}

/// Checks ordering, polarity, pixel bounds and the time window. Reports at
/// most `limit` violations, in index order.
pub fn validate_stream(stream: &EventStream, limit: usize) -> ValidationReport {
    let mut report = ValidationReport::default();
    let mut push = |index, kind| {
        report.total += 1;
        if report.violations.len() < limit {
            report.violations.push(Violation { index, kind });
        }
    };
    let mut prev_t = None;
    for (i, e) in stream.events.iter().enumerate() {
        if prev_t.is_some_and(|p| e.t < p) {
            push(i, ViolationKind::Unsorted);
        }
        prev_t = Some(e.t);
        if e.p != 1 && e.p != -1 {
            push(i, ViolationKind::Polarity);
        }
        if e.x >= stream.width || e.y >= stream.height {
            push(i, ViolationKind::OutOfBounds);
        }
        if e.t < stream.t_begin || e.t >= stream.t_end {
            push(i, ViolationKind::OutsideWindow);
        }
    }
    report
}

/// Events with `t0 <= t < t1`, order preserved, window set to `[t0, t1)`.
/// The input must be sorted.
pub fn slice_time(stream: &EventStream, t0: u64, t1: u64) -> Result<EventStream> {
    if t0 > t1 {
        return Err(Error::InvalidRange { t0, t1 });
    }
    let range = stream.index_range(t0, t1);
    Ok(EventStream::new_unchecked(
        stream.width,
        stream.height,
        t0,
        t1,
        stream.events[range].to_vec(),
    ))
}

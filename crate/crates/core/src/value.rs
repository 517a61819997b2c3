//! Runtime values: scalars, compounds, and durations with time units.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

/// A named time unit. `seconds` and `beats` are always available; further
/// units can be registered on a [`UnitTable`].
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct TimeUnit(String);

impl TimeUnit {
    pub fn seconds() -> TimeUnit {
        TimeUnit("s".to_string())
    }

    pub fn beats() -> TimeUnit {
        TimeUnit("beats".to_string())
    }

    pub fn named(name: &str) -> TimeUnit {
        TimeUnit(name.to_string())
    }

    pub fn name(&self) -> &str {
        &self.0
    }

    pub fn is_seconds(&self) -> bool {
        self.0 == "s"
    }

    pub fn is_beats(&self) -> bool {
        self.0 == "beats"
    }
}

impl fmt::Display for TimeUnit {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// How a registered unit relates to the two underlying clocks.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum UnitKind {
    /// Fixed number of wall seconds per unit (seconds itself has scale 1).
    WallScaled(f64),
    /// Driven by the tempo map.
    Beats,
}

/// Registry of known time units. Seconds and beats are always present.
#[derive(Debug, Clone)]
pub struct UnitTable {
    units: BTreeMap<TimeUnit, UnitKind>,
}

impl UnitTable {
    pub fn new() -> UnitTable {
        let mut units = BTreeMap::new();
        units.insert(TimeUnit::seconds(), UnitKind::WallScaled(1.0));
        units.insert(TimeUnit::beats(), UnitKind::Beats);
        UnitTable { units }
    }

    /// Register a unit worth `seconds_per_unit` wall seconds.
    pub fn register_wall_unit(&mut self, name: &str, seconds_per_unit: f64) {
        self.units
            .insert(TimeUnit::named(name), UnitKind::WallScaled(seconds_per_unit));
    }

    pub fn kind(&self, unit: &TimeUnit) -> Option<UnitKind> {
        self.units.get(unit).copied()
    }
}

impl Default for UnitTable {
    fn default() -> Self {
        UnitTable::new()
    }
}

/// A non-negative span of time in a given unit.
#[derive(Debug, Clone, PartialEq)]
pub struct Duration {
    magnitude: f64,
    unit: TimeUnit,
}

impl Duration {
    /// Returns `None` unless the magnitude is finite and non-negative.
    pub fn new(magnitude: f64, unit: TimeUnit) -> Option<Duration> {
        if magnitude.is_finite() && magnitude >= 0.0 {
            Some(Duration { magnitude, unit })
        } else {
            None
        }
    }

    pub fn seconds(magnitude: f64) -> Option<Duration> {
        Duration::new(magnitude, TimeUnit::seconds())
    }

    pub fn beats(magnitude: f64) -> Option<Duration> {
        Duration::new(magnitude, TimeUnit::beats())
    }

    pub fn magnitude(&self) -> f64 {
        self.magnitude
    }

    pub fn unit(&self) -> &TimeUnit {
        &self.unit
    }

    pub fn is_zero(&self) -> bool {
        self.magnitude == 0.0
    }
}

impl fmt::Display for Duration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:?} {}", self.magnitude, self.unit)
    }
}

/// Frozen view of the clock module at one instant: the current wall date and
/// the conversion rate in effect. Lets value-level code compare durations
/// across units without holding the clock module itself.
#[derive(Debug, Clone)]
pub struct ClockSnapshot {
    pub wall: f64,
    /// Wall seconds per beat at this instant.
    pub secs_per_beat: f64,
    pub units: Arc<UnitTable>,
}

impl ClockSnapshot {
    pub fn new(wall: f64, secs_per_beat: f64, units: Arc<UnitTable>) -> ClockSnapshot {
        ClockSnapshot { wall, secs_per_beat, units }
    }

    /// Snapshot with 60 BPM and only the built-in units; handy for tests and
    /// for evaluating ground expressions.
    pub fn fixed_60bpm() -> ClockSnapshot {
        ClockSnapshot::new(0.0, 1.0, Arc::new(UnitTable::new()))
    }

    /// Convert a duration to wall seconds at the instantaneous rate.
    pub fn to_seconds(&self, d: &Duration) -> Option<f64> {
        match self.units.kind(d.unit())? {
            UnitKind::WallScaled(scale) => Some(d.magnitude() * scale),
            UnitKind::Beats => Some(d.magnitude() * self.secs_per_beat),
        }
    }

    /// Total order on durations at this instant.
    pub fn compare(&self, a: &Duration, b: &Duration) -> Option<std::cmp::Ordering> {
        let (x, y) = (self.to_seconds(a)?, self.to_seconds(b)?);
        x.partial_cmp(&y)
    }
}

/// A runtime value. `Undefined` exists for completeness; it compares unequal
/// to everything, itself included, under expression equality (container
/// equality is structural, so `[undefined] = [undefined]` holds).
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Bool(bool),
    Int(i64),
    Float(f64),
    Str(String),
    Vector(Vec<Value>),
    Map(BTreeMap<String, Value>),
    Duration(Duration),
    Undefined,
}

impl Value {
    pub fn type_name(&self) -> &'static str {
        match self {
            Value::Bool(_) => "bool",
            Value::Int(_) => "int",
            Value::Float(_) => "float",
            Value::Str(_) => "string",
            Value::Vector(_) => "vector",
            Value::Map(_) => "map",
            Value::Duration(_) => "duration",
            Value::Undefined => "undefined",
        }
    }

    /// Expression-level equality: top-level `undefined` is unequal to
    /// everything; all other comparisons are structural.
    pub fn expr_eq(&self, other: &Value) -> bool {
        if matches!(self, Value::Undefined) || matches!(other, Value::Undefined) {
            return false;
        }
        self == other
    }

    pub fn as_bool(&self) -> Option<bool> {
        match self {
            Value::Bool(b) => Some(*b),
            _ => None,
        }
    }

    /// Numeric view, promoting ints to floats.
    pub fn as_number(&self) -> Option<f64> {
        match self {
            Value::Int(i) => Some(*i as f64),
            Value::Float(f) => Some(*f),
            _ => None,
        }
    }
}

pub fn escape_string(s: &str) -> String {
    let mut out = String::with_capacity(s.len() + 2);
    out.push('"');
    for c in s.chars() {
        match c {
            '"' => out.push_str("\\\""),
            '\\' => out.push_str("\\\\"),
            _ => out.push(c),
        }
    }
    out.push('"');
    out
}

impl fmt::Display for Value {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Value::Bool(b) => write!(f, "{b}"),
            Value::Int(i) => write!(f, "{i}"),
            // Debug formatting keeps a trailing ".0" so floats re-parse as floats.
            Value::Float(x) => write!(f, "{x:?}"),
            Value::Str(s) => f.write_str(&escape_string(s)),
            Value::Vector(items) => {
                f.write_str("[")?;
                for (i, v) in items.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{v}")?;
                }
                f.write_str("]")
            }
            Value::Map(entries) => {
                f.write_str("{")?;
                for (i, (k, v)) in entries.iter().enumerate() {
                    if i > 0 {
                        f.write_str(", ")?;
                    }
                    write!(f, "{}: {v}", escape_string(k))?;
                }
                f.write_str("}")
            }
            Value::Duration(d) => write!(f, "{d}"),
            Value::Undefined => f.write_str("undefined"),
        }
    }
}

//! Timed traces and their line serialization.
//!
//! A trace mixes two record shapes, in execution order:
//!
//! ```text
//! cascade k=1 t=0.500000 b=0.500000 trigger=input:NOTE_A ops=send,stop
//! k=1 t=0.500000 b=0.500000 send osc:/play
//! ```
//!
//! `cascade` records head each logical instant: what triggered it and which
//! synchronous opcodes its cascade executed (the safety checker consumes
//! these). Event records carry the observables. Dates are printed with six
//! decimals, so reading back is exact for dates of at most that resolution.

use std::fmt;

use crate::machine::{Diagnostic, Location, Opcode};
use crate::value::Value;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LogicalInstant {
    pub k: u64,
    /// Wall date in seconds.
    pub date: f64,
    /// The same instant on the beat clock.
    pub beat_date: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    Success,
    Error,
    Quiescent,
    MaxInstants,
}

impl Termination {
    pub fn as_str(&self) -> &'static str {
        match self {
            Termination::Success => "success",
            Termination::Error => "error",
            Termination::Quiescent => "quiescent",
            Termination::MaxInstants => "max-instants",
        }
    }

    fn from_str(s: &str) -> Option<Termination> {
        Some(match s {
            "success" => Termination::Success,
            "error" => Termination::Error,
            "quiescent" => Termination::Quiescent,
            "max-instants" => Termination::MaxInstants,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceKind {
    InputReceived(String),
    ExternalAssign(String, Value),
    TempoChange(f64),
    OutputSent(String),
    SignalEmitted(String),
    ErrorNote(String),
    Terminated(Termination),
}

#[derive(Debug, Clone, PartialEq)]
pub struct TraceEvent {
    pub instant: LogicalInstant,
    pub kind: TraceKind,
}

/// What opened a logical instant.
#[derive(Debug, Clone, PartialEq)]
pub enum Trigger {
    /// The initial instant at t = 0.
    Init,
    Eps,
    Input(String),
    Assign(String),
    Tempo,
    /// Timer expiry for the wait at this machine location.
    Done(Location),
    /// Recursive-timer tick for the repeat at this machine location.
    Step(Location),
}

impl fmt::Display for Trigger {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Trigger::Init => f.write_str("init"),
            Trigger::Eps => f.write_str("eps"),
            Trigger::Input(sym) => write!(f, "input:{sym}"),
            Trigger::Assign(name) => write!(f, "assign:${name}"),
            Trigger::Tempo => f.write_str("tempo"),
            Trigger::Done(loc) => write!(f, "done@{loc}"),
            Trigger::Step(loc) => write!(f, "step@{loc}"),
        }
    }
}

impl Trigger {
    fn parse(s: &str) -> Option<Trigger> {
        Some(match s {
            "init" => Trigger::Init,
            "eps" => Trigger::Eps,
            "tempo" => Trigger::Tempo,
            _ => {
                if let Some(sym) = s.strip_prefix("input:") {
                    Trigger::Input(sym.to_string())
                } else if let Some(var) = s.strip_prefix("assign:$") {
                    Trigger::Assign(var.to_string())
                } else if let Some(loc) = s.strip_prefix("done@") {
                    Trigger::Done(Location(loc.parse().ok()?))
                } else if let Some(loc) = s.strip_prefix("step@") {
                    Trigger::Step(Location(loc.parse().ok()?))
                } else {
                    return None;
                }
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CascadeRecord {
    pub instant: LogicalInstant,
    pub trigger: Trigger,
    /// Synchronous opcodes executed in this instant's cascade, in order.
    pub ops: Vec<Opcode>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum TraceRecord {
    Cascade(CascadeRecord),
    Event(TraceEvent),
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Trace {
    pub records: Vec<TraceRecord>,
}

impl Trace {
    pub fn events(&self) -> impl Iterator<Item = &TraceEvent> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Event(e) => Some(e),
            _ => None,
        })
    }

    pub fn cascades(&self) -> impl Iterator<Item = &CascadeRecord> {
        self.records.iter().filter_map(|r| match r {
            TraceRecord::Cascade(c) => Some(c),
            _ => None,
        })
    }

    pub fn termination(&self) -> Option<Termination> {
        self.events()
            .filter_map(|e| match e.kind {
                TraceKind::Terminated(t) => Some(t),
                _ => None,
            })
            .last()
    }
}

/// Keep only the observables: inputs received, external assignments, and
/// outputs sent, with their logical instants.
pub fn observational_trace(t: &Trace) -> Trace {
    Trace {
        records: t
            .records
            .iter()
            .filter(|r| {
                matches!(
                    r,
                    TraceRecord::Event(TraceEvent {
                        kind: TraceKind::InputReceived(_)
                            | TraceKind::ExternalAssign(..)
                            | TraceKind::OutputSent(_),
                        ..
                    })
                )
            })
            .cloned()
            .collect(),
    }
}

fn write_instant(out: &mut String, i: &LogicalInstant) {
    out.push_str(&format!("k={} t={:.6} b={:.6}", i.k, i.date, i.beat_date));
}

/// Render a trace in the line format; the empty trace is the empty string.
pub fn write_trace(t: &Trace) -> String {
    let mut out = String::new();
    for record in &t.records {
        match record {
            TraceRecord::Cascade(c) => {
                out.push_str("cascade ");
                write_instant(&mut out, &c.instant);
                out.push_str(&format!(" trigger={} ops=", c.trigger));
                for (i, op) in c.ops.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    out.push_str(op.name());
                }
            }
            TraceRecord::Event(e) => {
                write_instant(&mut out, &e.instant);
                match &e.kind {
                    TraceKind::InputReceived(sym) => out.push_str(&format!(" input {sym}")),
                    TraceKind::ExternalAssign(name, v) => {
                        out.push_str(&format!(" assign ${name} {v}"))
                    }
                    TraceKind::TempoChange(bpm) => out.push_str(&format!(" tempo {bpm}")),
                    TraceKind::OutputSent(sym) => out.push_str(&format!(" send {sym}")),
                    TraceKind::SignalEmitted(sig) => out.push_str(&format!(" signal {sig}")),
                    TraceKind::ErrorNote(msg) => out.push_str(&format!(" error {msg}")),
                    TraceKind::Terminated(t) => {
                        out.push_str(&format!(" terminated {}", t.as_str()))
                    }
                }
            }
        }
        out.push('\n');
    }
    out
}

fn parse_kv<'a>(token: &'a str, key: &str) -> Option<&'a str> {
    token.strip_prefix(key)?.strip_prefix('=')
}

fn parse_instant(tokens: &mut std::str::SplitWhitespace<'_>) -> Option<LogicalInstant> {
    let k = parse_kv(tokens.next()?, "k")?.parse().ok()?;
    let date = parse_kv(tokens.next()?, "t")?.parse().ok()?;
    let beat_date = parse_kv(tokens.next()?, "b")?.parse().ok()?;
    Some(LogicalInstant { k, date, beat_date })
}

/// Parse the output of [`write_trace`].
pub fn read_trace(text: &str) -> Result<Trace, Diagnostic> {
    let mut records = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = line.trim_end();
        if line.is_empty() {
            continue;
        }
        let bad = |msg: &str| Diagnostic::at_line(line_no, format!("{msg}: {line:?}"));
        if let Some(rest) = line.strip_prefix("cascade ") {
            let mut tokens = rest.split_whitespace();
            let instant = parse_instant(&mut tokens).ok_or_else(|| bad("bad cascade instant"))?;
            let trigger = tokens
                .next()
                .and_then(|t| parse_kv(t, "trigger"))
                .and_then(Trigger::parse)
                .ok_or_else(|| bad("bad cascade trigger"))?;
            let ops_field = tokens
                .next()
                .and_then(|t| parse_kv(t, "ops"))
                .ok_or_else(|| bad("bad cascade ops"))?;
            let mut ops = Vec::new();
            if !ops_field.is_empty() {
                for name in ops_field.split(',') {
                    ops.push(Opcode::from_name(name).ok_or_else(|| bad("unknown opcode"))?);
                }
            }
            if tokens.next().is_some() {
                return Err(bad("trailing tokens"));
            }
            records.push(TraceRecord::Cascade(CascadeRecord { instant, trigger, ops }));
            continue;
        }
        // Event lines: the payload after the kind word is taken verbatim.
        let mut tokens = line.split_whitespace();
        let instant = {
            let mut probe = line.split_whitespace();
            let inst = parse_instant(&mut probe).ok_or_else(|| bad("bad event instant"))?;
            tokens.next();
            tokens.next();
            tokens.next();
            inst
        };
        let kind_word = tokens.next().ok_or_else(|| bad("missing event kind"))?;
        let payload_start = line
            .find(kind_word)
            .map(|p| p + kind_word.len())
            .unwrap_or(line.len());
        let payload = line[payload_start..].trim_start();
        let kind = match kind_word {
            "input" => TraceKind::InputReceived(payload.to_string()),
            "assign" => {
                let mut pieces = payload.splitn(2, char::is_whitespace);
                let var = pieces
                    .next()
                    .and_then(|v| v.strip_prefix('$'))
                    .ok_or_else(|| bad("assign needs a $variable"))?;
                let value_src = pieces.next().unwrap_or("").trim();
                let value = parse_trace_value(value_src)
                    .ok_or_else(|| bad("bad assign value"))?;
                TraceKind::ExternalAssign(var.to_string(), value)
            }
            "tempo" => TraceKind::TempoChange(
                payload.parse().map_err(|_| bad("bad tempo value"))?,
            ),
            "send" => TraceKind::OutputSent(payload.to_string()),
            "signal" => TraceKind::SignalEmitted(payload.to_string()),
            "error" => TraceKind::ErrorNote(payload.to_string()),
            "terminated" => TraceKind::Terminated(
                Termination::from_str(payload).ok_or_else(|| bad("bad termination"))?,
            ),
            _ => return Err(bad("unknown event kind")),
        };
        records.push(TraceRecord::Event(TraceEvent { instant, kind }));
    }
    Ok(Trace { records })
}

fn parse_trace_value(src: &str) -> Option<Value> {
    use crate::expr::{eval, parse_expr};
    use crate::tree::{GlobalStore, LocalStore};
    use crate::value::ClockSnapshot;
    let e = parse_expr(src).ok()?;
    if !e.is_ground() {
        return None;
    }
    let empty = std::collections::BTreeSet::new();
    eval(
        &e,
        &GlobalStore::new(&empty),
        &LocalStore::new(),
        &ClockSnapshot::fixed_60bpm(),
    )
    .ok()
}

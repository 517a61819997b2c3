//! The instruction set and the machine table with its location ordering.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::expr::Expr;

/// An index into the machine table. The total order on locations is file
/// order, which coincides with index order for tables built by the assembler.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Location(pub usize);

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Assignment target: a bare local or a `$`-prefixed global.
#[derive(Debug, Clone, PartialEq)]
pub enum AssignTarget {
    Local(String),
    Global(String),
}

impl fmt::Display for AssignTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            AssignTarget::Local(name) => f.write_str(name),
            AssignTarget::Global(name) => write!(f, "${name}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instruction {
    Emit(String),
    Send(String),
    Assign(AssignTarget, Expr),
    Stop,
    If(Expr, Location),
    Spawn(Location),
    Spawn0(Location),
    Await(Expr, Location),
    Repeat { period: Expr, body: Location, expiry: Expr },
    Receive(String, Location),
    Present(String, Location),
    Suspend(Expr, Location),
    Asap(Vec<Location>),
    Sustain { body: Location, controller: Location },
}

/// Opcode names, used in diagnostics, trace cascade records, and cost tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Opcode {
    Emit,
    Send,
    Assign,
    Stop,
    If,
    Spawn,
    Spawn0,
    Await,
    Repeat,
    Receive,
    Present,
    Suspend,
    Asap,
    Sustain,
}

impl Opcode {
    pub fn name(&self) -> &'static str {
        match self {
            Opcode::Emit => "emit",
            Opcode::Send => "send",
            Opcode::Assign => "assign",
            Opcode::Stop => "stop",
            Opcode::If => "if",
            Opcode::Spawn => "spawn",
            Opcode::Spawn0 => "spawn0",
            Opcode::Await => "await",
            Opcode::Repeat => "repeat",
            Opcode::Receive => "receive",
            Opcode::Present => "present",
            Opcode::Suspend => "suspend",
            Opcode::Asap => "asap",
            Opcode::Sustain => "sustain",
        }
    }

    pub fn from_name(name: &str) -> Option<Opcode> {
        Some(match name {
            "emit" => Opcode::Emit,
            "send" => Opcode::Send,
            "assign" => Opcode::Assign,
            "stop" => Opcode::Stop,
            "if" => Opcode::If,
            "spawn" => Opcode::Spawn,
            "spawn0" => Opcode::Spawn0,
            "await" => Opcode::Await,
            "repeat" => Opcode::Repeat,
            "receive" => Opcode::Receive,
            "present" => Opcode::Present,
            "suspend" => Opcode::Suspend,
            "asap" => Opcode::Asap,
            "sustain" => Opcode::Sustain,
            _ => return None,
        })
    }
}

impl fmt::Display for Opcode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl Instruction {
    pub fn opcode(&self) -> Opcode {
        match self {
            Instruction::Emit(_) => Opcode::Emit,
            Instruction::Send(_) => Opcode::Send,
            Instruction::Assign(..) => Opcode::Assign,
            Instruction::Stop => Opcode::Stop,
            Instruction::If(..) => Opcode::If,
            Instruction::Spawn(_) => Opcode::Spawn,
            Instruction::Spawn0(_) => Opcode::Spawn0,
            Instruction::Await(..) => Opcode::Await,
            Instruction::Repeat { .. } => Opcode::Repeat,
            Instruction::Receive(..) => Opcode::Receive,
            Instruction::Present(..) => Opcode::Present,
            Instruction::Suspend(..) => Opcode::Suspend,
            Instruction::Asap(_) => Opcode::Asap,
            Instruction::Sustain { .. } => Opcode::Sustain,
        }
    }

    /// Synchronous instructions execute within the current logical instant;
    /// asynchronous ones block waiting for a logical event.
    pub fn is_synchronous(&self) -> bool {
        !matches!(
            self,
            Instruction::Await(..)
                | Instruction::Repeat { .. }
                | Instruction::Receive(..)
                | Instruction::Present(..)
                | Instruction::Suspend(..)
        )
    }

    /// Continues at the next location when it neither jumps nor blocks.
    pub fn falls_through(&self) -> bool {
        matches!(
            self,
            Instruction::Emit(_)
                | Instruction::Send(_)
                | Instruction::Assign(..)
                | Instruction::If(..)
                | Instruction::Spawn(_)
                | Instruction::Spawn0(_)
        )
    }

    /// All locations this instruction references.
    pub fn targets(&self) -> Vec<Location> {
        match self {
            Instruction::If(_, t)
            | Instruction::Spawn(t)
            | Instruction::Spawn0(t)
            | Instruction::Await(_, t)
            | Instruction::Receive(_, t)
            | Instruction::Present(_, t)
            | Instruction::Suspend(_, t) => vec![*t],
            Instruction::Repeat { body, .. } => vec![*body],
            Instruction::Asap(ts) => ts.clone(),
            Instruction::Sustain { body, controller } => vec![*body, *controller],
            _ => vec![],
        }
    }
}

/// Declared input symbols, totally ordered by declaration; `next` maps each
/// symbol to its successor.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InputAlphabet {
    symbols: Vec<String>,
}

impl InputAlphabet {
    pub fn new(symbols: Vec<String>) -> InputAlphabet {
        InputAlphabet { symbols }
    }

    pub fn symbols(&self) -> &[String] {
        &self.symbols
    }

    pub fn contains(&self, sym: &str) -> bool {
        self.symbols.iter().any(|s| s == sym)
    }

    pub fn next(&self, sym: &str) -> Option<&str> {
        let idx = self.symbols.iter().position(|s| s == sym)?;
        self.symbols.get(idx + 1).map(String::as_str)
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }
}

/// A fixed table of instructions plus the alphabets derived from it.
#[derive(Debug, Clone)]
pub struct Machine {
    table: Vec<Instruction>,
    inputs: InputAlphabet,
    /// Label names kept for rendering; not part of machine identity.
    labels: BTreeMap<String, Location>,
}

/// Machines compare by table and input alphabet; labels are cosmetic.
impl PartialEq for Machine {
    fn eq(&self, other: &Self) -> bool {
        self.table == other.table && self.inputs == other.inputs
    }
}

impl Machine {
    pub fn new(table: Vec<Instruction>, inputs: InputAlphabet) -> Machine {
        Machine { table, inputs, labels: BTreeMap::new() }
    }

    pub fn with_labels(
        table: Vec<Instruction>,
        inputs: InputAlphabet,
        labels: BTreeMap<String, Location>,
    ) -> Machine {
        Machine { table, inputs, labels }
    }

    pub fn len(&self) -> usize {
        self.table.len()
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    pub fn table(&self) -> &[Instruction] {
        &self.table
    }

    pub fn labels(&self) -> &BTreeMap<String, Location> {
        &self.labels
    }

    pub fn instruction(&self, loc: Location) -> &Instruction {
        &self.table[loc.0]
    }

    pub fn get(&self, loc: Location) -> Option<&Instruction> {
        self.table.get(loc.0)
    }

    /// The first location in the execution order.
    pub fn entry(&self) -> Location {
        Location(0)
    }

    /// Successor with respect to the location order; the last location has none.
    pub fn successor(&self, loc: Location) -> Option<Location> {
        if loc.0 + 1 < self.table.len() {
            Some(Location(loc.0 + 1))
        } else {
            None
        }
    }

    /// The `<<` order on locations.
    pub fn order(&self, a: Location, b: Location) -> std::cmp::Ordering {
        a.0.cmp(&b.0)
    }

    pub fn inputs(&self) -> &InputAlphabet {
        &self.inputs
    }

    /// The signal set: every identifier occurring in emit or present.
    pub fn signals(&self) -> BTreeSet<String> {
        self.table
            .iter()
            .filter_map(|ins| match ins {
                Instruction::Emit(s) | Instruction::Present(s, _) => Some(s.clone()),
                _ => None,
            })
            .collect()
    }

    /// The output symbols occurring in send instructions.
    pub fn outputs(&self) -> BTreeSet<String> {
        self.table
            .iter()
            .filter_map(|ins| match ins {
                Instruction::Send(a) => Some(a.clone()),
                _ => None,
            })
            .collect()
    }
}

/// A validation or parse problem, tagged with a source line and machine
/// location when known.
#[derive(Debug, Clone, PartialEq)]
pub struct Diagnostic {
    pub line: Option<usize>,
    pub location: Option<Location>,
    pub message: String,
}

impl Diagnostic {
    pub fn new(message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: None, location: None, message: message.into() }
    }

    pub fn at_line(line: usize, message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: Some(line), location: None, message: message.into() }
    }

    pub fn at_location(location: Location, message: impl Into<String>) -> Diagnostic {
        Diagnostic { line: None, location: Some(location), message: message.into() }
    }

    pub fn with_line(mut self, line: usize) -> Diagnostic {
        self.line = Some(line);
        self
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if let Some(line) = self.line {
            write!(f, "line {line}: ")?;
        }
        if let Some(loc) = self.location {
            write!(f, "location {loc}: ")?;
        }
        f.write_str(&self.message)
    }
}

/// Check every machine invariant; an empty result means well-formed.
pub fn validate(m: &Machine) -> Vec<Diagnostic> {
    let mut diags = Vec::new();
    if m.is_empty() {
        diags.push(Diagnostic::new("empty program: the table has no instructions"));
        return diags;
    }
    let in_range = |loc: Location| loc.0 < m.len();
    for (idx, ins) in m.table().iter().enumerate() {
        let loc = Location(idx);
        for t in ins.targets() {
            if !in_range(t) {
                diags.push(Diagnostic::at_location(
                    loc,
                    format!("{} target {t} is out of range", ins.opcode()),
                ));
            }
        }
        if ins.falls_through() && m.successor(loc).is_none() {
            diags.push(Diagnostic::at_location(
                loc,
                format!("{} needs a successor but is the last instruction", ins.opcode()),
            ));
        }
        match ins {
            Instruction::Asap(targets) => {
                if targets.is_empty() {
                    diags.push(Diagnostic::at_location(loc, "asap needs targets"));
                }
                for t in targets {
                    if let Some(target_ins) = m.get(*t) {
                        if target_ins.is_synchronous() {
                            diags.push(Diagnostic::at_location(
                                loc,
                                format!(
                                    "asap target {t} is synchronous ({})",
                                    target_ins.opcode()
                                ),
                            ));
                        }
                    }
                }
            }
            Instruction::Sustain { controller, .. } => {
                if let Some(ctrl_ins) = m.get(*controller) {
                    if ctrl_ins.is_synchronous() {
                        diags.push(Diagnostic::at_location(
                            loc,
                            format!(
                                "sustain controller {controller} is synchronous ({})",
                                ctrl_ins.opcode()
                            ),
                        ));
                    }
                }
            }
            Instruction::Receive(sym, _) => {
                if !m.inputs().contains(sym) {
                    diags.push(Diagnostic::at_location(
                        loc,
                        format!("receive of undeclared input symbol {sym}"),
                    ));
                }
            }
            _ => {}
        }
    }
    diags
}

/// Replace every `repeat` with the five-instruction sustain/await/spawn
/// encoding. The block is appended to the table so existing locations keep
/// their order; the waiting thread enters at the period await so the first
/// body runs one period after arming, exactly as the recursive timer does.
pub fn lower_repeat(m: &Machine) -> Machine {
    let mut table = m.table().to_vec();
    let inputs = m.inputs().clone();
    let repeats: Vec<usize> = table
        .iter()
        .enumerate()
        .filter_map(|(i, ins)| matches!(ins, Instruction::Repeat { .. }).then_some(i))
        .collect();
    for idx in repeats {
        let (period, body, expiry) = match &table[idx] {
            Instruction::Repeat { period, body, expiry } => {
                (period.clone(), *body, expiry.clone())
            }
            _ => unreachable!(),
        };
        let base = table.len();
        let spawn_loc = Location(base);
        let tick_loc = Location(base + 1);
        let ctrl_loc = Location(base + 2);
        let stop_loc = Location(base + 3);
        table[idx] = Instruction::Sustain { body: tick_loc, controller: ctrl_loc };
        table.push(Instruction::Spawn0(body)); // falls through to the tick await
        table.push(Instruction::Await(period, spawn_loc));
        table.push(Instruction::Await(expiry, stop_loc));
        table.push(Instruction::Stop);
    }
    Machine::with_labels(table, inputs, m.labels().clone())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn machine(table: Vec<Instruction>) -> Machine {
        Machine::new(table, InputAlphabet::default())
    }

    #[test]
    fn minimal_machine_is_valid() {
        let m = machine(vec![Instruction::Emit("go".into()), Instruction::Stop]);
        assert!(validate(&m).is_empty());
        assert_eq!(m.signals().into_iter().collect::<Vec<_>>(), vec!["go"]);
    }

    #[test]
    fn fall_through_off_the_end() {
        let m = machine(vec![Instruction::Emit("go".into())]);
        let diags = validate(&m);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("needs a successor"));
    }

    #[test]
    fn asap_target_must_be_asynchronous() {
        let m = machine(vec![
            Instruction::Asap(vec![Location(1)]),
            Instruction::Emit("go".into()),
            Instruction::Stop,
        ]);
        let diags = validate(&m);
        assert!(diags.iter().any(|d| d.message.contains("asap target 1 is synchronous")));
    }

    #[test]
    fn sustain_controller_must_be_asynchronous() {
        let m = machine(vec![
            Instruction::Sustain { body: Location(1), controller: Location(1) },
            Instruction::Assign(AssignTarget::Local("x".into()), parse_expr("1").unwrap()),
            Instruction::Stop,
        ]);
        let diags = validate(&m);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("controller 1 is synchronous"));
    }

    #[test]
    fn receive_needs_declared_symbol() {
        let m = Machine::new(
            vec![Instruction::Receive("NOTE".into(), Location(1)), Instruction::Stop],
            InputAlphabet::new(vec!["OTHER".into()]),
        );
        let diags = validate(&m);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("undeclared input symbol NOTE"));
    }

    #[test]
    fn out_of_range_target() {
        let m = machine(vec![Instruction::Spawn(Location(9)), Instruction::Stop]);
        let diags = validate(&m);
        assert!(diags.iter().any(|d| d.message.contains("out of range")));
    }

    #[test]
    fn empty_machine_is_invalid() {
        let m = machine(vec![]);
        assert_eq!(validate(&m).len(), 1);
    }

    #[test]
    fn next_follows_declaration_order() {
        let a = InputAlphabet::new(vec!["A".into(), "B".into(), "C".into()]);
        assert_eq!(a.next("A"), Some("B"));
        assert_eq!(a.next("B"), Some("C"));
        assert_eq!(a.next("C"), None);
        assert_eq!(a.next("Z"), None);
    }

    #[test]
    fn lower_repeat_is_identity_without_repeat() {
        let m = machine(vec![Instruction::Send("x".into()), Instruction::Stop]);
        assert_eq!(lower_repeat(&m), m);
    }

    #[test]
    fn lower_repeat_emits_figure_pattern() {
        let m = machine(vec![
            Instruction::Repeat {
                period: parse_expr("1 s").unwrap(),
                body: Location(1),
                expiry: parse_expr("3 s").unwrap(),
            },
            Instruction::Send("tick".into()),
            Instruction::Stop,
        ]);
        let lowered = lower_repeat(&m);
        assert_eq!(lowered.len(), 7);
        assert_eq!(
            lowered.instruction(Location(0)),
            &Instruction::Sustain { body: Location(4), controller: Location(5) }
        );
        assert_eq!(lowered.instruction(Location(3)), &Instruction::Spawn0(Location(1)));
        assert_eq!(
            lowered.instruction(Location(4)),
            &Instruction::Await(parse_expr("1 s").unwrap(), Location(3))
        );
        assert_eq!(
            lowered.instruction(Location(5)),
            &Instruction::Await(parse_expr("3 s").unwrap(), Location(6))
        );
        assert_eq!(lowered.instruction(Location(6)), &Instruction::Stop);
        assert!(validate(&lowered).is_empty());
    }

    #[test]
    fn lower_repeat_is_idempotent() {
        let m = machine(vec![
            Instruction::Repeat {
                period: parse_expr("0.5 s").unwrap(),
                body: Location(1),
                expiry: parse_expr("2 s").unwrap(),
            },
            Instruction::Send("a".into()),
            Instruction::Stop,
        ]);
        let once = lower_repeat(&m);
        let twice = lower_repeat(&once);
        assert_eq!(once, twice);
    }
}

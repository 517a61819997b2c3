//! Textual assembly for machine tables: one instruction per line, optional
//! labels, a `.inputs` directive for the input alphabet, `#` comments.

use std::collections::BTreeMap;

use crate::expr::{display_operand, parse_expr, Expr};
use crate::machine::{
    validate, AssignTarget, Diagnostic, InputAlphabet, Instruction, Location, Machine,
};
use crate::value::escape_string;

struct RawLine {
    line_no: usize,
    text: String,
}

/// Strip a `#` comment, respecting string literals.
fn strip_comment(line: &str) -> &str {
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in line.char_indices() {
        match c {
            '\\' if in_string && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_string = !in_string,
            '#' if !in_string => return &line[..i],
            _ => {}
        }
        escaped = false;
    }
    line
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    match chars.next() {
        Some(c) if c.is_alphabetic() || c == '_' => {}
        _ => return false,
    }
    chars.all(|c| c.is_alphanumeric() || c == '_')
}

/// Split a leading label off an instruction line. A `:` introduces a label
/// only when it is not the `:=` of an assignment.
fn split_label(text: &str) -> (Option<&str>, &str) {
    if let Some(pos) = text.find(':') {
        if text[pos + 1..].starts_with('=') {
            return (None, text);
        }
        let head = text[..pos].trim();
        if is_ident(head) {
            return (Some(head), text[pos + 1..].trim_start());
        }
    }
    (None, text)
}

/// Take a balanced `(...)` operand off the front of `rest`.
fn take_paren_group(rest: &str) -> Option<(&str, &str)> {
    let rest = rest.trim_start();
    if !rest.starts_with('(') {
        return None;
    }
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in rest.char_indices() {
        match c {
            '\\' if in_string && !escaped => {
                escaped = true;
                continue;
            }
            '"' if !escaped => in_string = !in_string,
            '(' if !in_string => depth += 1,
            ')' if !in_string => {
                depth -= 1;
                if depth == 0 {
                    return Some((&rest[..=i], rest[i + 1..].trim_start()));
                }
            }
            _ => {}
        }
        escaped = false;
    }
    None
}

fn unquote(s: &str) -> Option<String> {
    let s = s.trim();
    let inner = s.strip_prefix('"')?.strip_suffix('"')?;
    let mut out = String::with_capacity(inner.len());
    let mut chars = inner.chars();
    while let Some(c) = chars.next() {
        if c == '\\' {
            match chars.next() {
                Some('"') => out.push('"'),
                Some('\\') => out.push('\\'),
                _ => return None,
            }
        } else if c == '"' {
            return None;
        } else {
            out.push(c);
        }
    }
    Some(out)
}

enum TargetRef {
    Name(String),
}

enum ParsedInstruction {
    Emit(String),
    Send(String),
    Assign(AssignTarget, Expr),
    Stop,
    If(Expr, TargetRef),
    Spawn(TargetRef),
    Spawn0(TargetRef),
    Await(Expr, TargetRef),
    Repeat { period: Expr, body: TargetRef, expiry: Expr },
    Receive(String, TargetRef),
    Present(String, TargetRef),
    Suspend(Expr, TargetRef),
    Asap(Vec<TargetRef>),
    Sustain { body: TargetRef, controller: TargetRef },
}

struct LineParser<'a> {
    line_no: usize,
    diags: &'a mut Vec<Diagnostic>,
}

impl<'a> LineParser<'a> {
    fn fail(&mut self, msg: impl Into<String>) -> Option<ParsedInstruction> {
        self.diags.push(Diagnostic::at_line(self.line_no, msg));
        None
    }

    fn expr(&mut self, src: &str) -> Option<Expr> {
        match parse_expr(src) {
            Ok(e) => Some(e),
            Err(e) => {
                self.diags
                    .push(Diagnostic::at_line(self.line_no, format!("bad expression: {e}")));
                None
            }
        }
    }

    fn paren_operand<'b>(&mut self, rest: &'b str, what: &str) -> Option<(Expr, &'b str)> {
        match take_paren_group(rest) {
            Some((group, tail)) => {
                let e = self.expr(group)?;
                Some((e, tail))
            }
            None => {
                self.fail(format!("{what} needs a parenthesized expression"));
                None
            }
        }
    }

    fn jump_target<'b>(&mut self, rest: &'b str, opcode: &str) -> Option<(TargetRef, &'b str)> {
        let rest = rest.trim_start();
        let rest = match rest.strip_prefix("jump") {
            Some(r) if r.starts_with(char::is_whitespace) => r.trim_start(),
            _ => {
                self.fail(format!("{opcode} expects `jump LABEL`"));
                return None;
            }
        };
        let end = rest
            .find(char::is_whitespace)
            .unwrap_or(rest.len());
        let name = &rest[..end];
        if !is_ident(name) {
            self.fail(format!("{opcode}: bad jump target {name:?}"));
            return None;
        }
        Some((TargetRef::Name(name.to_string()), rest[end..].trim_start()))
    }

    fn ident_operand<'b>(&mut self, rest: &'b str, what: &str) -> Option<(String, &'b str)> {
        let rest = rest.trim_start();
        let end = rest.find(char::is_whitespace).unwrap_or(rest.len());
        let name = &rest[..end];
        if !is_ident(name) {
            self.fail(format!("{what}: expected an identifier, got {name:?}"));
            return None;
        }
        Some((name.to_string(), rest[end..].trim_start()))
    }

    fn done(&mut self, tail: &str, ins: ParsedInstruction) -> Option<ParsedInstruction> {
        if tail.trim().is_empty() {
            Some(ins)
        } else {
            self.fail(format!("trailing input: {:?}", tail.trim()))
        }
    }

    fn parse(&mut self, text: &str) -> Option<ParsedInstruction> {
        // Assignments have no leading keyword.
        if let Some(pos) = text.find(":=") {
            let target_text = text[..pos].trim();
            let target = if let Some(name) = target_text.strip_prefix('$') {
                if !is_ident(name) {
                    return self.fail(format!("bad global variable name {target_text:?}"));
                }
                AssignTarget::Global(name.to_string())
            } else if is_ident(target_text) {
                AssignTarget::Local(target_text.to_string())
            } else {
                return self.fail(format!("bad assignment target {target_text:?}"));
            };
            let e = self.expr(text[pos + 2..].trim())?;
            return Some(ParsedInstruction::Assign(target, e));
        }
        let (keyword, rest) = match text.find(char::is_whitespace) {
            Some(i) => (&text[..i], text[i..].trim_start()),
            None => (text, ""),
        };
        match keyword {
            "emit" => {
                let (sig, tail) = self.ident_operand(rest, "emit")?;
                self.done(tail, ParsedInstruction::Emit(sig))
            }
            "send" => match unquote(rest) {
                Some(sym) => Some(ParsedInstruction::Send(sym)),
                None => self.fail("send expects a double-quoted output symbol"),
            },
            "stop" => self.done(rest, ParsedInstruction::Stop),
            "if" => {
                let (e, tail) = self.paren_operand(rest, "if")?;
                let (t, tail) = self.jump_target(tail, "if")?;
                self.done(tail, ParsedInstruction::If(e, t))
            }
            "spawn" => {
                let (t, tail) = self.ident_operand(rest, "spawn")?;
                self.done(tail, ParsedInstruction::Spawn(TargetRef::Name(t)))
            }
            "spawn0" => {
                let (t, tail) = self.ident_operand(rest, "spawn0")?;
                self.done(tail, ParsedInstruction::Spawn0(TargetRef::Name(t)))
            }
            "await" => {
                let (e, tail) = self.paren_operand(rest, "await")?;
                let (t, tail) = self.jump_target(tail, "await")?;
                self.done(tail, ParsedInstruction::Await(e, t))
            }
            "repeat" => {
                let (period, tail) = self.paren_operand(rest, "repeat")?;
                let (body, tail) = self.jump_target(tail, "repeat")?;
                let tail = match tail.strip_prefix("for") {
                    Some(r) if r.starts_with(char::is_whitespace) || r.trim_start().starts_with('(') => {
                        r.trim_start()
                    }
                    _ => return self.fail("repeat expects `for (expr)` after the jump target"),
                };
                let (expiry, tail) = self.paren_operand(tail, "repeat for")?;
                self.done(tail, ParsedInstruction::Repeat { period, body, expiry })
            }
            "receive" => {
                let (sym, tail) = self.ident_operand(rest, "receive")?;
                let (t, tail) = self.jump_target(tail, "receive")?;
                self.done(tail, ParsedInstruction::Receive(sym, t))
            }
            "present" => {
                let (sig, tail) = self.ident_operand(rest, "present")?;
                let (t, tail) = self.jump_target(tail, "present")?;
                self.done(tail, ParsedInstruction::Present(sig, t))
            }
            "suspend" => {
                let (e, tail) = self.paren_operand(rest, "suspend")?;
                let (t, tail) = self.jump_target(tail, "suspend")?;
                self.done(tail, ParsedInstruction::Suspend(e, t))
            }
            "asap" => {
                let mut targets = Vec::new();
                let mut tail = rest;
                while !tail.trim().is_empty() {
                    let (t, rest2) = self.ident_operand(tail, "asap")?;
                    targets.push(TargetRef::Name(t));
                    tail = rest2;
                }
                if targets.is_empty() {
                    return self.fail("asap needs at least one target");
                }
                Some(ParsedInstruction::Asap(targets))
            }
            "sustain" => {
                let (body, tail) = self.ident_operand(rest, "sustain")?;
                let (controller, tail) = self.ident_operand(tail, "sustain")?;
                self.done(
                    tail,
                    ParsedInstruction::Sustain {
                        body: TargetRef::Name(body),
                        controller: TargetRef::Name(controller),
                    },
                )
            }
            other => self.fail(format!("unknown instruction {other:?}")),
        }
    }
}

/// Parse an assembly text into a machine. The result is validated: any
/// syntax, label, alphabet, or structural problem is reported as a
/// diagnostic and no machine is returned.
pub fn parse_program(text: &str) -> Result<Machine, Vec<Diagnostic>> {
    let mut diags: Vec<Diagnostic> = Vec::new();
    let mut inputs: Vec<String> = Vec::new();
    let mut labels: BTreeMap<String, Location> = BTreeMap::new();
    let mut lines: Vec<RawLine> = Vec::new();

    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let stripped = strip_comment(raw).trim();
        if stripped.is_empty() {
            continue;
        }
        if let Some(rest) = stripped.strip_prefix(".inputs") {
            for sym in rest.split_whitespace() {
                if !is_ident(sym) {
                    diags.push(Diagnostic::at_line(
                        line_no,
                        format!("bad input symbol {sym:?}"),
                    ));
                } else if inputs.iter().any(|s| s == sym) {
                    diags.push(Diagnostic::at_line(
                        line_no,
                        format!("duplicate input symbol {sym}"),
                    ));
                } else {
                    inputs.push(sym.to_string());
                }
            }
            continue;
        }
        if stripped.starts_with('.') {
            diags.push(Diagnostic::at_line(
                line_no,
                format!("unknown directive {:?}", stripped.split_whitespace().next().unwrap()),
            ));
            continue;
        }
        let (label, body) = split_label(stripped);
        let index = Location(lines.len());
        if let Some(name) = label {
            if labels.insert(name.to_string(), index).is_some() {
                diags.push(Diagnostic::at_line(line_no, format!("duplicate label {name}")));
            }
        }
        if body.is_empty() {
            diags.push(Diagnostic::at_line(line_no, "label without an instruction"));
            continue;
        }
        lines.push(RawLine { line_no, text: body.to_string() });
    }

    let mut parsed: Vec<(usize, ParsedInstruction)> = Vec::new();
    for line in &lines {
        let mut p = LineParser { line_no: line.line_no, diags: &mut diags };
        if let Some(ins) = p.parse(&line.text) {
            parsed.push((line.line_no, ins));
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let resolve = |name: &TargetRef, line_no: usize, diags: &mut Vec<Diagnostic>| {
        let TargetRef::Name(name) = name;
        match labels.get(name) {
            Some(loc) => Some(*loc),
            None => {
                diags.push(Diagnostic::at_line(line_no, format!("unknown label {name}")));
                None
            }
        }
    };
    let mut table = Vec::with_capacity(parsed.len());
    let mut instr_lines = Vec::with_capacity(parsed.len());
    for (line_no, ins) in parsed {
        instr_lines.push(line_no);
        let resolved = match ins {
            ParsedInstruction::Emit(s) => Some(Instruction::Emit(s)),
            ParsedInstruction::Send(s) => Some(Instruction::Send(s)),
            ParsedInstruction::Assign(t, e) => Some(Instruction::Assign(t, e)),
            ParsedInstruction::Stop => Some(Instruction::Stop),
            ParsedInstruction::If(e, t) => {
                resolve(&t, line_no, &mut diags).map(|t| Instruction::If(e, t))
            }
            ParsedInstruction::Spawn(t) => {
                resolve(&t, line_no, &mut diags).map(Instruction::Spawn)
            }
            ParsedInstruction::Spawn0(t) => {
                resolve(&t, line_no, &mut diags).map(Instruction::Spawn0)
            }
            ParsedInstruction::Await(e, t) => {
                resolve(&t, line_no, &mut diags).map(|t| Instruction::Await(e, t))
            }
            ParsedInstruction::Repeat { period, body, expiry } => resolve(&body, line_no, &mut diags)
                .map(|body| Instruction::Repeat { period, body, expiry }),
            ParsedInstruction::Receive(s, t) => {
                resolve(&t, line_no, &mut diags).map(|t| Instruction::Receive(s, t))
            }
            ParsedInstruction::Present(s, t) => {
                resolve(&t, line_no, &mut diags).map(|t| Instruction::Present(s, t))
            }
            ParsedInstruction::Suspend(e, t) => {
                resolve(&t, line_no, &mut diags).map(|t| Instruction::Suspend(e, t))
            }
            ParsedInstruction::Asap(ts) => {
                let mut out = Vec::with_capacity(ts.len());
                for t in &ts {
                    match resolve(t, line_no, &mut diags) {
                        Some(loc) => out.push(loc),
                        None => {}
                    }
                }
                (out.len() == ts.len()).then_some(Instruction::Asap(out))
            }
            ParsedInstruction::Sustain { body, controller } => {
                match (
                    resolve(&body, line_no, &mut diags),
                    resolve(&controller, line_no, &mut diags),
                ) {
                    (Some(body), Some(controller)) => {
                        Some(Instruction::Sustain { body, controller })
                    }
                    _ => None,
                }
            }
        };
        if let Some(ins) = resolved {
            table.push(ins);
        }
    }
    if !diags.is_empty() {
        return Err(diags);
    }

    let machine = Machine::with_labels(table, InputAlphabet::new(inputs), labels);
    let mut structural = validate(&machine);
    for d in &mut structural {
        if let Some(loc) = d.location {
            if let Some(line) = instr_lines.get(loc.0) {
                d.line = Some(*line);
            }
        }
    }
    if structural.is_empty() {
        Ok(machine)
    } else {
        Err(structural)
    }
}

/// Render a machine back to assembly. Referenced locations get labels,
/// preferring names the machine already carries.
pub fn pretty_print(m: &Machine) -> String {
    let mut names: BTreeMap<usize, String> = BTreeMap::new();
    for (name, loc) in m.labels() {
        names.entry(loc.0).or_insert_with(|| name.clone());
    }
    let referenced: std::collections::BTreeSet<usize> = m
        .table()
        .iter()
        .flat_map(|ins| ins.targets())
        .map(|t| t.0)
        .collect();
    let taken: std::collections::BTreeSet<String> = names.values().cloned().collect();
    for idx in &referenced {
        if !names.contains_key(idx) {
            let mut candidate = format!("L{idx}");
            while taken.contains(&candidate) {
                candidate.push('_');
            }
            names.insert(*idx, candidate);
        }
    }
    let label_of = |loc: Location| names.get(&loc.0).cloned().unwrap_or_else(|| format!("L{loc}"));

    let mut out = String::new();
    if !m.inputs().is_empty() {
        out.push_str(".inputs");
        for sym in m.inputs().symbols() {
            out.push(' ');
            out.push_str(sym);
        }
        out.push('\n');
    }
    for (idx, ins) in m.table().iter().enumerate() {
        if let Some(name) = names.get(&idx) {
            out.push_str(name);
            out.push_str(": ");
        }
        match ins {
            Instruction::Emit(s) => out.push_str(&format!("emit {s}")),
            Instruction::Send(a) => out.push_str(&format!("send {}", escape_string(a))),
            Instruction::Assign(t, e) => out.push_str(&format!("{t} := {}", display_operand(e))),
            Instruction::Stop => out.push_str("stop"),
            Instruction::If(e, t) => {
                out.push_str(&format!("if {} jump {}", display_operand(e), label_of(*t)))
            }
            Instruction::Spawn(t) => out.push_str(&format!("spawn {}", label_of(*t))),
            Instruction::Spawn0(t) => out.push_str(&format!("spawn0 {}", label_of(*t))),
            Instruction::Await(e, t) => {
                out.push_str(&format!("await {} jump {}", display_operand(e), label_of(*t)))
            }
            Instruction::Repeat { period, body, expiry } => out.push_str(&format!(
                "repeat {} jump {} for {}",
                display_operand(period),
                label_of(*body),
                display_operand(expiry)
            )),
            Instruction::Receive(s, t) => {
                out.push_str(&format!("receive {s} jump {}", label_of(*t)))
            }
            Instruction::Present(s, t) => {
                out.push_str(&format!("present {s} jump {}", label_of(*t)))
            }
            Instruction::Suspend(e, t) => {
                out.push_str(&format!("suspend {} jump {}", display_operand(e), label_of(*t)))
            }
            Instruction::Asap(ts) => {
                out.push_str("asap");
                for t in ts {
                    out.push(' ');
                    out.push_str(&label_of(*t));
                }
            }
            Instruction::Sustain { body, controller } => out.push_str(&format!(
                "sustain {} {}",
                label_of(*body),
                label_of(*controller)
            )),
        }
        out.push('\n');
    }
    out
}

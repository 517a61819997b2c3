//! Environment scripts: the simulated external world, as a dated sequence of
//! input symbols, global-variable assignments, and tempo changes.

use crate::expr::{eval, parse_expr};
use crate::machine::{Diagnostic, Machine};
use crate::tree::{GlobalStore, LocalStore};
use crate::value::{ClockSnapshot, Value};

#[derive(Debug, Clone, PartialEq)]
pub enum ScriptAction {
    Input(String),
    Set(String, Value),
    Tempo(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScriptEntry {
    /// Wall-clock date in seconds.
    pub date: f64,
    pub action: ScriptAction,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvScript {
    pub initial_bpm: f64,
    pub entries: Vec<ScriptEntry>,
}

impl EnvScript {
    pub fn empty() -> EnvScript {
        EnvScript { initial_bpm: 60.0, entries: Vec::new() }
    }

    /// Input symbols must belong to the machine's declared alphabet.
    pub fn validate_against(&self, m: &Machine) -> Vec<Diagnostic> {
        let mut diags = Vec::new();
        for entry in &self.entries {
            if let ScriptAction::Input(sym) = &entry.action {
                if !m.inputs().contains(sym) {
                    diags.push(Diagnostic::new(format!(
                        "script input {sym} is not in the machine's input alphabet"
                    )));
                }
            }
        }
        diags
    }
}

fn parse_date(token: &str) -> Option<f64> {
    let inner = token.strip_prefix('@')?.strip_suffix('s')?;
    let date: f64 = inner.parse().ok()?;
    (date.is_finite() && date >= 0.0).then_some(date)
}

/// Parse a ground literal value, e.g. `42`, `-1.5`, `"text"`, `true`,
/// `0.5 s`, `[1, 2]`.
fn parse_value(src: &str) -> Result<Value, String> {
    let e = parse_expr(src).map_err(|e| e.to_string())?;
    if !e.is_ground() {
        return Err("value must be a ground literal".to_string());
    }
    let empty_signals = std::collections::BTreeSet::new();
    eval(
        &e,
        &GlobalStore::new(&empty_signals),
        &LocalStore::new(),
        &ClockSnapshot::fixed_60bpm(),
    )
    .map_err(|e| e.to_string())
}

/// Parse the script line format: an optional `.tempo <bpm>` header, then
/// entries `@<date>s input SYM` | `@<date>s set $name <value>` |
/// `@<date>s tempo <bpm>`, with `#` comments. Dates must be non-decreasing.
pub fn parse_script(text: &str) -> Result<EnvScript, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut script = EnvScript::empty();
    let mut last_date: Option<f64> = None;
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = match raw.find('#') {
            // Strings in set-values may contain '#'; only treat it as a
            // comment start when no quote precedes it.
            Some(pos) if !raw[..pos].contains('"') => &raw[..pos],
            _ => raw,
        };
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        if let Some(rest) = line.strip_prefix(".tempo") {
            if last_date.is_some() || !script.entries.is_empty() {
                diags.push(Diagnostic::at_line(
                    line_no,
                    ".tempo header must precede all entries",
                ));
                continue;
            }
            match rest.trim().parse::<f64>() {
                Ok(bpm) if bpm.is_finite() && bpm > 0.0 => script.initial_bpm = bpm,
                _ => diags.push(Diagnostic::at_line(line_no, "bad tempo value")),
            }
            continue;
        }
        let mut parts = line.splitn(2, char::is_whitespace);
        let date_tok = parts.next().unwrap_or("");
        let rest = parts.next().unwrap_or("").trim();
        let date = match parse_date(date_tok) {
            Some(d) => d,
            None => {
                diags.push(Diagnostic::at_line(
                    line_no,
                    format!("expected a date like @1.5s, got {date_tok:?}"),
                ));
                continue;
            }
        };
        if let Some(prev) = last_date {
            if date < prev {
                diags.push(Diagnostic::at_line(
                    line_no,
                    format!("date {date} decreases from {prev}"),
                ));
                continue;
            }
        }
        let mut words = rest.splitn(2, char::is_whitespace);
        let verb = words.next().unwrap_or("");
        let arg = words.next().unwrap_or("").trim();
        let action = match verb {
            "input" => {
                if arg.is_empty() || arg.contains(char::is_whitespace) {
                    diags.push(Diagnostic::at_line(line_no, "input expects one symbol"));
                    continue;
                }
                ScriptAction::Input(arg.to_string())
            }
            "set" => {
                let mut pieces = arg.splitn(2, char::is_whitespace);
                let var = pieces.next().unwrap_or("");
                let value_src = pieces.next().unwrap_or("").trim();
                let name = match var.strip_prefix('$') {
                    Some(n) if !n.is_empty() => n.to_string(),
                    _ => {
                        diags.push(Diagnostic::at_line(
                            line_no,
                            "set expects a $-prefixed global variable",
                        ));
                        continue;
                    }
                };
                match parse_value(value_src) {
                    Ok(v) => ScriptAction::Set(name, v),
                    Err(msg) => {
                        diags.push(Diagnostic::at_line(line_no, format!("bad value: {msg}")));
                        continue;
                    }
                }
            }
            "tempo" => match arg.parse::<f64>() {
                Ok(bpm) if bpm.is_finite() && bpm > 0.0 => ScriptAction::Tempo(bpm),
                _ => {
                    diags.push(Diagnostic::at_line(line_no, "bad tempo value"));
                    continue;
                }
            },
            other => {
                diags.push(Diagnostic::at_line(
                    line_no,
                    format!("unknown action {other:?} (expected input, set, or tempo)"),
                ));
                continue;
            }
        };
        last_date = Some(date);
        script.entries.push(ScriptEntry { date, action });
    }
    if diags.is_empty() {
        Ok(script)
    } else {
        Err(diags)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_input_entry() {
        let s = parse_script("@0.5s input NOTE_C4\n").unwrap();
        assert_eq!(s.initial_bpm, 60.0);
        assert_eq!(s.entries.len(), 1);
        assert_eq!(s.entries[0].date, 0.5);
        assert_eq!(s.entries[0].action, ScriptAction::Input("NOTE_C4".into()));
    }

    #[test]
    fn decreasing_dates_are_rejected() {
        let err = parse_script("@1.0s set $g 42\n@0.5s input A\n").unwrap_err();
        assert_eq!(err.len(), 1);
        assert_eq!(err[0].line, Some(2));
        assert!(err[0].message.contains("decreases"));
    }

    #[test]
    fn tempo_header_and_tempo_entries() {
        let s = parse_script(".tempo 120\n@2.0s tempo 90\n").unwrap();
        assert_eq!(s.initial_bpm, 120.0);
        assert_eq!(s.entries[0].action, ScriptAction::Tempo(90.0));
    }

    #[test]
    fn set_parses_value_literals() {
        let s = parse_script(
            "@0s set $a 42\n@0s set $b -1.5\n@0s set $c \"hi there\"\n@0s set $d true\n@0s set $e 2 beats\n@0s set $f [1, 2]\n",
        )
        .unwrap();
        let values: Vec<&Value> = s
            .entries
            .iter()
            .map(|e| match &e.action {
                ScriptAction::Set(_, v) => v,
                _ => panic!(),
            })
            .collect();
        assert_eq!(values[0], &Value::Int(42));
        assert_eq!(values[1], &Value::Float(-1.5));
        assert_eq!(values[2], &Value::Str("hi there".into()));
        assert_eq!(values[3], &Value::Bool(true));
        assert_eq!(
            values[4],
            &Value::Duration(crate::value::Duration::beats(2.0).unwrap())
        );
        assert_eq!(values[5], &Value::Vector(vec![Value::Int(1), Value::Int(2)]));
    }

    #[test]
    fn malformed_lines_get_line_numbers() {
        let err = parse_script("@1s input A\nnot a line\n").unwrap_err();
        assert_eq!(err[0].line, Some(2));
    }

    #[test]
    fn comments_and_blanks() {
        let s = parse_script("# header\n\n@1s input A # trailing\n").unwrap();
        assert_eq!(s.entries.len(), 1);
    }

    #[test]
    fn misplaced_tempo_header() {
        let err = parse_script("@1s input A\n.tempo 90\n").unwrap_err();
        assert!(err[0].message.contains("precede"));
    }

    #[test]
    fn alphabet_check_against_machine() {
        let m = crate::asm::parse_program(".inputs A\nL0: receive A jump L1\nL1: stop\n").unwrap();
        let s = parse_script("@1s input B\n").unwrap();
        let diags = s.validate_against(&m);
        assert_eq!(diags.len(), 1);
        assert!(diags[0].message.contains("not in the machine's input alphabet"));
    }
}

//! Offline time-safety checking over traces: given measured or modeled
//! costs per instant, verify that the logical delay to each next instant
//! covers the synchronous-transition cost plus the previous event-handling
//! cost, and annotate violations with a compensation plan.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::machine::{Diagnostic, Instruction, Machine, Opcode};
use crate::trace::{Trace, Trigger};

/// Transition costs. Either measured per instant, or synthesized from a
/// per-instruction table (in which case event-handling costs are zero).
#[derive(Debug, Clone, PartialEq)]
pub enum CostModel {
    /// Instant index -> (synchronous-transition cost, event-handling cost).
    PerInstant(BTreeMap<u64, (f64, f64)>),
    /// Cost of each executed synchronous instruction; an instant's
    /// transition cost is the sum over its cascade.
    PerInstruction(BTreeMap<Opcode, f64>),
}

/// Parse a cost file: lines `k <int> delta <seconds> eps <seconds>` or
/// `instr <opcode> cost <seconds>`, one mode per file, `#` comments.
pub fn parse_costs(text: &str) -> Result<CostModel, Vec<Diagnostic>> {
    let mut diags = Vec::new();
    let mut per_instant: BTreeMap<u64, (f64, f64)> = BTreeMap::new();
    let mut per_instr: BTreeMap<Opcode, f64> = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line_no = i + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let words: Vec<&str> = line.split_whitespace().collect();
        match words.as_slice() {
            ["k", k, "delta", delta, "eps", eps] => {
                match (k.parse::<u64>(), delta.parse::<f64>(), eps.parse::<f64>()) {
                    (Ok(k), Ok(d), Ok(e)) if d >= 0.0 && e >= 0.0 => {
                        if per_instant.insert(k, (d, e)).is_some() {
                            diags.push(Diagnostic::at_line(
                                line_no,
                                format!("duplicate cost entry for instant {k}"),
                            ));
                        }
                    }
                    _ => diags.push(Diagnostic::at_line(
                        line_no,
                        "costs must be non-negative numbers",
                    )),
                }
            }
            ["instr", op, "cost", cost] => {
                match (Opcode::from_name(op), cost.parse::<f64>()) {
                    (Some(op), Ok(c)) if c >= 0.0 => {
                        if per_instr.insert(op, c).is_some() {
                            diags.push(Diagnostic::at_line(
                                line_no,
                                format!("duplicate cost entry for {op}"),
                            ));
                        }
                    }
                    _ => diags.push(Diagnostic::at_line(line_no, "bad instruction cost line")),
                }
            }
            _ => diags.push(Diagnostic::at_line(
                line_no,
                "expected `k <int> delta <s> eps <s>` or `instr <opcode> cost <s>`",
            )),
        }
    }
    if !per_instant.is_empty() && !per_instr.is_empty() {
        diags.push(Diagnostic::new(
            "cost file mixes per-instant and per-instruction entries",
        ));
    }
    if !diags.is_empty() {
        return Err(diags);
    }
    if per_instant.is_empty() && per_instr.is_empty() {
        return Err(vec![Diagnostic::new("cost file has no entries")]);
    }
    Ok(if per_instant.is_empty() {
        CostModel::PerInstruction(per_instr)
    } else {
        CostModel::PerInstant(per_instant)
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Safe,
    Violated,
}

/// One checked time-advancing instant. Instants chained at the same date
/// (epsilon steps and event ties) are folded into one record, labeled by the
/// first instant index; their costs add into `delta`.
#[derive(Debug, Clone, PartialEq)]
pub struct SafetyRecord {
    pub k: u64,
    pub date: f64,
    /// Logical delay to the next instant group.
    pub d: f64,
    pub delta: f64,
    pub eps_prev: f64,
    pub theta: f64,
    pub verdict: Verdict,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SafetyReport {
    pub records: Vec<SafetyRecord>,
}

struct InstantGroup {
    first_k: u64,
    date: f64,
    ks: Vec<u64>,
    ops: Vec<Opcode>,
    /// Trigger that opened the group (its first instant).
    trigger: Trigger,
}

fn group_instants(trace: &Trace) -> Vec<InstantGroup> {
    let mut groups: Vec<InstantGroup> = Vec::new();
    for c in trace.cascades() {
        match groups.last_mut() {
            Some(g) if g.date == c.instant.date => {
                g.ks.push(c.instant.k);
                g.ops.extend(c.ops.iter().copied());
            }
            _ => groups.push(InstantGroup {
                first_k: c.instant.k,
                date: c.instant.date,
                ks: vec![c.instant.k],
                ops: c.ops.clone(),
                trigger: c.trigger.clone(),
            }),
        }
    }
    groups
}

fn group_costs(g: &InstantGroup, costs: &CostModel) -> Result<(f64, f64), Diagnostic> {
    match costs {
        CostModel::PerInstant(table) => {
            let mut delta = 0.0;
            let mut eps = 0.0;
            for k in &g.ks {
                match table.get(k) {
                    Some((d, e)) => {
                        delta += d;
                        eps += e;
                    }
                    None => {
                        return Err(Diagnostic::new(format!(
                            "missing cost entry for instant {k}"
                        )))
                    }
                }
            }
            Ok((delta, eps))
        }
        CostModel::PerInstruction(table) => {
            let mut delta = 0.0;
            for op in &g.ops {
                match table.get(op) {
                    Some(c) => delta += c,
                    None => {
                        return Err(Diagnostic::new(format!(
                            "missing cost entry for instruction {op}"
                        )))
                    }
                }
            }
            Ok((delta, 0.0))
        }
    }
}

/// Check `d_k >= theta_k` with `theta_k = delta_k + eps_{k-1}` over the
/// trace's time-advancing instants.
pub fn check(trace: &Trace, costs: &CostModel) -> Result<SafetyReport, Diagnostic> {
    let groups = group_instants(trace);
    let mut records = Vec::new();
    let mut eps_prev = 0.0;
    for window in groups.windows(2) {
        let (g, next) = (&window[0], &window[1]);
        let (delta, eps) = group_costs(g, costs)?;
        let d = next.date - g.date;
        let theta = delta + eps_prev;
        let slack = d - theta;
        records.push(SafetyRecord {
            k: g.first_k,
            date: g.date,
            d,
            delta,
            eps_prev,
            theta,
            verdict: if d >= theta { Verdict::Safe } else { Verdict::Violated },
            slack,
        });
        eps_prev = eps;
    }
    Ok(SafetyReport { records })
}

#[derive(Debug, Clone, PartialEq)]
pub enum Compensation {
    /// The wait that ends this instant is an await with enough remaining
    /// delay: shaving the deficit off it re-aligns logical and real time.
    Compensable {
        await_location: crate::machine::Location,
        remaining: f64,
        deduct_to: f64,
    },
    Uncompensable { reason: String },
}

#[derive(Debug, Clone, PartialEq)]
pub struct CompensationNote {
    pub k: u64,
    pub deficit: f64,
    pub plan: Compensation,
}

/// For each violated instant, decide whether the deficit can be recovered
/// from the delay of the await that opens the next instant.
pub fn compensation_plan(
    trace: &Trace,
    report: &SafetyReport,
    machine: &Machine,
) -> Vec<CompensationNote> {
    let groups = group_instants(trace);
    let mut notes = Vec::new();
    for (idx, record) in report.records.iter().enumerate() {
        if record.verdict == Verdict::Safe {
            continue;
        }
        let deficit = -record.slack;
        let next_trigger = groups.get(idx + 1).map(|g| &g.trigger);
        let plan = match next_trigger {
            Some(Trigger::Done(loc)) => match machine.get(*loc) {
                Some(Instruction::Await(..)) => {
                    let remaining = record.d;
                    if remaining >= deficit {
                        Compensation::Compensable {
                            await_location: *loc,
                            remaining,
                            deduct_to: remaining - deficit,
                        }
                    } else {
                        Compensation::Uncompensable {
                            reason: format!(
                                "await at {loc} has only {remaining:.6}s remaining"
                            ),
                        }
                    }
                }
                _ => Compensation::Uncompensable {
                    reason: format!("expiry at {loc} is not an await"),
                },
            },
            Some(Trigger::Step(loc)) => Compensation::Uncompensable {
                reason: format!("next instant is a periodic tick of the repeat at {loc}"),
            },
            Some(t) => Compensation::Uncompensable {
                reason: format!("next instant is driven by the environment ({t})"),
            },
            None => Compensation::Uncompensable {
                reason: "no further instant".to_string(),
            },
        };
        notes.push(CompensationNote { k: record.k, deficit, plan });
    }
    notes
}

/// Aligned human-readable table followed by machine-readable lines.
pub fn render_report(report: &SafetyReport, plan: &[CompensationNote]) -> String {
    let mut out = String::new();
    writeln!(
        out,
        "{:>6} {:>12} {:>12} {:>12} {:>12} {:>12}  verdict",
        "k", "d", "theta", "delta", "eps_prev", "slack"
    )
    .unwrap();
    for r in &report.records {
        writeln!(
            out,
            "{:>6} {:>12.6} {:>12.6} {:>12.6} {:>12.6} {:>12.6}  {}",
            r.k,
            r.d,
            r.theta,
            r.delta,
            r.eps_prev,
            r.slack,
            match r.verdict {
                Verdict::Safe => "safe",
                Verdict::Violated => "VIOLATED",
            }
        )
        .unwrap();
    }
    for r in &report.records {
        writeln!(
            out,
            "safety k={} d={:.6} theta={:.6} delta={:.6} eps_prev={:.6} verdict={} slack={:.6}",
            r.k,
            r.d,
            r.theta,
            r.delta,
            r.eps_prev,
            match r.verdict {
                Verdict::Safe => "safe",
                Verdict::Violated => "violated",
            },
            r.slack
        )
        .unwrap();
    }
    for note in plan {
        match &note.plan {
            Compensation::Compensable { await_location, remaining, deduct_to } => writeln!(
                out,
                "compensation k={} deficit={:.6} verdict=compensable await@{} remaining={:.6} deduct_to={:.6}",
                note.k, note.deficit, await_location, remaining, deduct_to
            )
            .unwrap(),
            Compensation::Uncompensable { reason } => writeln!(
                out,
                "compensation k={} deficit={:.6} verdict=uncompensable reason={}",
                note.k, note.deficit, reason
            )
            .unwrap(),
        }
    }
    out
}

//! The execution loop: alternate synchronous cascades with logical events,
//! maintain logical instants, reset signals on time advance, merge clock
//! notifications with scripted environment events, and emit the trace.

use std::collections::VecDeque;

use crate::asm::parse_program;
use crate::clocks::{ClockModule, TimerPayload};
use crate::event::{apply_event, unlocks, LogicalEvent};
use crate::machine::{validate, Diagnostic, Location, Machine};
use crate::script::{parse_script, EnvScript, ScriptAction, ScriptEntry};
use crate::sync::{sync_normalize, Effect};
use crate::trace::{
    CascadeRecord, LogicalInstant, Termination, Trace, TraceEvent, TraceKind, TraceRecord,
    Trigger,
};
use crate::tree::{GlobalState, GlobalStore, LocalState, NodeId, NodeIdGen, Tree};
use crate::value::TimeUnit;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Dates advance only through the event queue; runs are exact and fast.
    #[default]
    Virtual,
    /// Events are released at their wall dates against the host clock.
    Realtime,
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub mode: Mode,
    /// Synchronous steps allowed per instant before declaring divergence.
    pub step_budget: u64,
    /// Largest instant index a run may reach.
    pub max_instants: u64,
    /// Apply the strict reading of wait arming: a zero or non-evaluable
    /// delay collapses the whole tree to error instead of being handled by
    /// the epsilon rules.
    pub strict_await_zero: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            mode: Mode::Virtual,
            step_budget: 1_000_000,
            max_instants: 100_000,
            strict_await_zero: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum RunError {
    #[error("invalid program or script")]
    Invalid(Vec<Diagnostic>),
    #[error("synchronous cascade diverged at instant {instant} (budget {budget})")]
    Divergence { instant: u64, budget: u64 },
}

/// Kept for callers that want to distinguish load errors from run errors.
pub type ProgramError = RunError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Progress {
    Continued,
    Finished(Termination),
}

#[derive(Debug)]
pub struct Executor {
    machine: Machine,
    cfg: RunConfig,
    clocks: ClockModule,
    ids: NodeIdGen,
    state: GlobalState,
    script: VecDeque<ScriptEntry>,
    k: u64,
    date: f64,
    trigger: Trigger,
    trace: Trace,
    outcome: Option<Termination>,
    /// Wait leaves already processed for timer arming.
    waiting: std::collections::BTreeSet<NodeId>,
    host_anchor: Option<std::time::Instant>,
}

enum NextEvent {
    Script(ScriptEntry),
    Timer { payload: TimerPayload, due: f64, location: Location },
}

impl Executor {
    pub fn new(machine: Machine, script: EnvScript, cfg: RunConfig) -> Result<Executor, RunError> {
        let mut diags = validate(&machine);
        diags.extend(script.validate_against(&machine));
        if !diags.is_empty() {
            return Err(RunError::Invalid(diags));
        }
        let clocks = ClockModule::new(script.initial_bpm)
            .expect("script parsing checked the tempo is positive");
        let mut ids = NodeIdGen::new();
        let store = GlobalStore::new(&machine.signals());
        let tree = Tree::leaf(ids.fresh(), LocalState::entry(machine.entry()));
        Ok(Executor {
            machine,
            cfg,
            clocks,
            ids,
            state: GlobalState { store, tree },
            script: script.entries.into(),
            k: 0,
            date: 0.0,
            trigger: Trigger::Init,
            trace: Trace::default(),
            outcome: None,
            waiting: std::collections::BTreeSet::new(),
            host_anchor: None,
        })
    }

    pub fn machine(&self) -> &Machine {
        &self.machine
    }

    pub fn clocks(&self) -> &ClockModule {
        &self.clocks
    }

    pub fn trace(&self) -> &Trace {
        &self.trace
    }

    pub fn into_trace(self) -> Trace {
        self.trace
    }

    pub fn tree_dump(&self) -> String {
        self.state.tree.dump()
    }

    pub fn outcome(&self) -> Option<Termination> {
        self.outcome
    }

    fn instant(&self) -> LogicalInstant {
        LogicalInstant {
            k: self.k,
            date: self.date,
            beat_date: self
                .clocks
                .now(&TimeUnit::beats(), self.date)
                .expect("beats is always registered"),
        }
    }

    fn push_event(&mut self, kind: TraceKind) {
        self.trace
            .records
            .push(TraceRecord::Event(TraceEvent { instant: self.instant(), kind }));
    }

    fn finish(&mut self, reason: Termination) -> Progress {
        self.push_event(TraceKind::Terminated(reason));
        self.outcome = Some(reason);
        Progress::Finished(reason)
    }

    /// Move to instant k+1, or terminate when the budget is exhausted.
    fn advance_instant(&mut self) -> bool {
        if self.k + 1 > self.cfg.max_instants {
            return false;
        }
        self.k += 1;
        true
    }

    fn location_of(&self, node: NodeId) -> Option<Location> {
        self.state
            .tree
            .leaves_in_order()
            .into_iter()
            .find(|(id, _)| *id == node)
            .map(|(_, leaf)| leaf.location)
    }

    /// Execute one logical instant: run the synchronous cascade, then either
    /// terminate, take an internal epsilon step, or deliver the earliest
    /// external event.
    pub fn step(&mut self) -> Result<Progress, RunError> {
        if let Some(t) = self.outcome {
            return Ok(Progress::Finished(t));
        }
        if self.host_anchor.is_none() {
            self.host_anchor = Some(std::time::Instant::now());
        }

        let state = std::mem::replace(
            &mut self.state,
            GlobalState {
                store: GlobalStore::new(&std::collections::BTreeSet::new()),
                tree: Tree::terminal_true(),
            },
        );
        let outcome = sync_normalize(
            &self.machine,
            state,
            &mut self.clocks,
            self.date,
            &mut self.ids,
            self.cfg.step_budget,
            self.cfg.strict_await_zero,
            &mut self.waiting,
        )
        .map_err(|e| RunError::Divergence { instant: self.k, budget: e.budget })?;
        self.state = outcome.state;
        self.trace.records.push(TraceRecord::Cascade(CascadeRecord {
            instant: self.instant(),
            trigger: self.trigger.clone(),
            ops: outcome.executed,
        }));
        for effect in outcome.effects {
            match effect {
                Effect::OutputSent(sym) => self.push_event(TraceKind::OutputSent(sym)),
                Effect::SignalEmitted(sig) => self.push_event(TraceKind::SignalEmitted(sig)),
                Effect::NodeErrored { location, reason, .. } => {
                    self.push_event(TraceKind::ErrorNote(format!("@{location}: {reason}")))
                }
                Effect::GlobalAssigned(..) | Effect::TimerArmed { .. } => {}
            }
        }

        if self.state.tree.is_true() {
            return Ok(self.finish(Termination::Success));
        }
        if self.state.tree.is_error() {
            return Ok(self.finish(Termination::Error));
        }

        // Internal events first: same date, signals preserved.
        let snap = self.clocks.snapshot(self.date);
        if unlocks(&self.machine, &self.state.tree, &LogicalEvent::Epsilon, &self.state.store, &snap)
        {
            if !self.advance_instant() {
                return Ok(self.finish(Termination::MaxInstants));
            }
            let tree = std::mem::replace(&mut self.state.tree, Tree::terminal_true());
            let out = apply_event(
                &self.machine,
                tree,
                &LogicalEvent::Epsilon,
                &self.state.store,
                &snap,
                &mut self.ids,
            );
            self.state.tree = out.tree;
            for id in out.discarded {
                self.clocks.cancel(id);
            }
            self.trigger = Trigger::Eps;
            return Ok(Progress::Continued);
        }

        // Otherwise the earliest pending external event opens the next
        // instant. Script entries win date ties against timer notifications;
        // stale notifications are dropped without consuming an instant.
        let next = loop {
            let script_date = self.script.front().map(|e| e.date);
            let notification = self.clocks.peek_next();
            match (script_date, notification) {
                (None, None) => return Ok(self.finish(Termination::Quiescent)),
                (Some(_), None) => break NextEvent::Script(self.script.pop_front().unwrap()),
                (script, Some(n)) => {
                    if script.is_some_and(|d| d <= n.due) {
                        break NextEvent::Script(self.script.pop_front().unwrap());
                    }
                    let n = self.clocks.pop_next().expect("peeked");
                    match self.location_of(n.payload.owner()) {
                        Some(location) => {
                            break NextEvent::Timer { payload: n.payload, due: n.due, location }
                        }
                        None => continue,
                    }
                }
            }
        };

        if !self.advance_instant() {
            return Ok(self.finish(Termination::MaxInstants));
        }
        let event_date = match &next {
            NextEvent::Script(e) => e.date,
            NextEvent::Timer { due, .. } => *due,
        };
        debug_assert!(event_date >= self.date, "event dates are monotone");
        if self.cfg.mode == Mode::Realtime {
            let anchor = self.host_anchor.expect("anchored at first step");
            let target = anchor + std::time::Duration::from_secs_f64(event_date.max(0.0));
            let now = std::time::Instant::now();
            if target > now {
                std::thread::sleep(target - now);
            }
        }
        self.date = event_date;

        match next {
            NextEvent::Script(entry) => match entry.action {
                ScriptAction::Input(sym) => {
                    self.apply_external(LogicalEvent::Input(sym.clone()));
                    self.push_event(TraceKind::InputReceived(sym.clone()));
                    self.trigger = Trigger::Input(sym);
                }
                ScriptAction::Set(name, value) => {
                    self.apply_external(LogicalEvent::ExternalAssign(name.clone(), value.clone()));
                    self.state.store.set_var(&name, value.clone());
                    self.state.store.reset_signals();
                    self.push_event(TraceKind::ExternalAssign(name.clone(), value));
                    self.trigger = Trigger::Assign(name);
                    return Ok(Progress::Continued);
                }
                ScriptAction::Tempo(bpm) => {
                    self.clocks
                        .set_tempo(bpm, self.date)
                        .expect("script dates are non-decreasing");
                    self.push_event(TraceKind::TempoChange(bpm));
                    self.trigger = Trigger::Tempo;
                }
            },
            NextEvent::Timer { payload, location, .. } => {
                let event = match payload {
                    TimerPayload::Done(node) => {
                        self.trigger = Trigger::Done(location);
                        LogicalEvent::Done(node)
                    }
                    TimerPayload::Step(node) => {
                        self.trigger = Trigger::Step(location);
                        LogicalEvent::Step(node)
                    }
                };
                self.apply_external(event);
            }
        }
        self.state.store.reset_signals();
        Ok(Progress::Continued)
    }

    /// Apply a time-advancing event against the pre-reset store, as the
    /// asynchronous rules read it.
    fn apply_external(&mut self, event: LogicalEvent) {
        let snap = self.clocks.snapshot(self.date);
        let tree = std::mem::replace(&mut self.state.tree, Tree::terminal_true());
        let out = apply_event(&self.machine, tree, &event, &self.state.store, &snap, &mut self.ids);
        self.state.tree = out.tree;
        for id in out.discarded {
            self.clocks.cancel(id);
        }
    }

    pub fn run_to_end(&mut self) -> Result<Termination, RunError> {
        loop {
            match self.step()? {
                Progress::Continued => {}
                Progress::Finished(t) => return Ok(t),
            }
        }
    }
}

/// Run a validated machine against a script and return the full trace.
pub fn run(machine: Machine, script: EnvScript, cfg: RunConfig) -> Result<Trace, RunError> {
    let mut exec = Executor::new(machine, script, cfg)?;
    exec.run_to_end()?;
    Ok(exec.into_trace())
}

/// Library entry point over textual inputs: assemble, parse the script,
/// validate, and run.
pub fn run_program(
    machine_text: &str,
    script_text: &str,
    cfg: RunConfig,
) -> Result<Trace, RunError> {
    let machine = parse_program(machine_text).map_err(RunError::Invalid)?;
    let script = parse_script(script_text).map_err(RunError::Invalid)?;
    run(machine, script, cfg)
}

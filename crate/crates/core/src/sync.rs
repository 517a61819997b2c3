//! The synchronous engine: execute synchronous instructions in location
//! order until every leaf is asynchronous, then arm timers for freshly
//! entered waits.

use std::collections::BTreeSet;

use crate::clocks::ClockModule;
use crate::expr::{eval, eval_duration};
use crate::machine::{AssignTarget, Instruction, Location, Machine, Opcode};
use crate::tree::{
    normalize_logged, replace, GlobalState, LocalState, NodeId, NodeIdGen, NormalizeLog, Tree,
};
use crate::value::{ClockSnapshot, Value};

/// Which clock service a wait armed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TimerKind {
    OneShot,
    Recursive,
}

/// Observable consequences of executing synchronous instructions.
#[derive(Debug, Clone, PartialEq)]
pub enum Effect {
    OutputSent(String),
    SignalEmitted(String),
    GlobalAssigned(String, Value),
    TimerArmed { node: NodeId, kind: TimerKind },
    NodeErrored { node: NodeId, location: Location, reason: String },
}

/// One small-step result.
#[derive(Debug)]
pub enum SyncStep {
    Stepped {
        state: GlobalState,
        effects: Vec<Effect>,
        opcode: Opcode,
        discarded: Vec<NodeId>,
    },
    /// Every leaf is asynchronous.
    NoSynchronousLeaf(GlobalState),
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("synchronous cascade exceeded the step budget of {budget}")]
pub struct DivergenceError {
    pub budget: u64,
}

/// Execute the one synchronous leaf whose location is least in the `<<`
/// order (leftmost in the tree on ties), then normalize.
pub fn sync_step(
    m: &Machine,
    state: GlobalState,
    snap: &ClockSnapshot,
    ids: &mut NodeIdGen,
) -> SyncStep {
    let chosen = state
        .tree
        .leaves_in_order()
        .into_iter()
        .enumerate()
        .filter(|(_, (_, leaf))| m.instruction(leaf.location).is_synchronous())
        .min_by_key(|(pos, (_, leaf))| (leaf.location.0, *pos))
        .map(|(_, (id, leaf))| (id, leaf.clone()));
    let (node, leaf) = match chosen {
        Some(x) => x,
        None => return SyncStep::NoSynchronousLeaf(state),
    };
    let GlobalState { mut store, tree } = state;
    let mut effects = Vec::new();
    let loc = leaf.location;
    let instruction = m.instruction(loc);
    let opcode = instruction.opcode();
    let succ = |m: &Machine| {
        m.successor(loc)
            .expect("validated machines give every fall-through a successor")
    };
    let errored = |effects: &mut Vec<Effect>, reason: String| {
        effects.push(Effect::NodeErrored { node, location: loc, reason });
        Tree::terminal_error()
    };
    let replacement = match instruction {
        Instruction::Emit(s) => {
            store.emit_signal(s);
            effects.push(Effect::SignalEmitted(s.clone()));
            Tree::leaf(ids.fresh(), LocalState::new(succ(m), leaf.store.clone()))
        }
        Instruction::Send(a) => {
            effects.push(Effect::OutputSent(a.clone()));
            Tree::leaf(ids.fresh(), LocalState::new(succ(m), leaf.store.clone()))
        }
        Instruction::Assign(target, e) => match eval(e, &store, &leaf.store, snap) {
            Ok(v) => {
                let mut local = leaf.store.clone();
                match target {
                    AssignTarget::Local(name) => local.set(name, v),
                    AssignTarget::Global(name) => {
                        effects.push(Effect::GlobalAssigned(name.clone(), v.clone()));
                        store.set_var(name, v);
                    }
                }
                Tree::leaf(ids.fresh(), LocalState::new(succ(m), local))
            }
            Err(e) => errored(&mut effects, e.reason),
        },
        Instruction::Stop => Tree::terminal_true(),
        Instruction::If(e, target) => match eval(e, &store, &leaf.store, snap) {
            Ok(Value::Bool(true)) => {
                Tree::leaf(ids.fresh(), LocalState::new(*target, leaf.store.clone()))
            }
            Ok(Value::Bool(false)) => {
                Tree::leaf(ids.fresh(), LocalState::new(succ(m), leaf.store.clone()))
            }
            Ok(v) => errored(
                &mut effects,
                format!("if condition must be a bool, got {}", v.type_name()),
            ),
            Err(e) => errored(&mut effects, e.reason),
        },
        Instruction::Spawn(target) => Tree::and(
            ids.fresh(),
            vec![
                Tree::leaf(ids.fresh(), LocalState::new(succ(m), leaf.store.clone())),
                Tree::leaf(ids.fresh(), LocalState::new(*target, leaf.store.clone())),
            ],
        ),
        Instruction::Spawn0(target) => Tree::and(
            ids.fresh(),
            vec![
                Tree::leaf(ids.fresh(), LocalState::new(succ(m), leaf.store.clone())),
                Tree::leaf(ids.fresh(), LocalState::entry(*target)),
            ],
        ),
        Instruction::Asap(targets) => Tree::xor(
            ids.fresh(),
            targets
                .iter()
                .map(|t| Tree::leaf(ids.fresh(), LocalState::new(*t, leaf.store.clone())))
                .collect(),
        ),
        Instruction::Sustain { body, controller } => Tree::sor(
            ids.fresh(),
            Tree::leaf(ids.fresh(), LocalState::new(*body, leaf.store.clone())),
            Tree::leaf(ids.fresh(), LocalState::new(*controller, leaf.store.clone())),
        ),
        async_instr => unreachable!("synchronous leaf holds {}", async_instr.opcode()),
    };
    let tree = replace(tree, node, replacement).expect("selected leaf exists");
    let mut log = NormalizeLog::default();
    let tree = normalize_logged(tree, &mut log);
    SyncStep::Stepped {
        state: GlobalState { store, tree },
        effects,
        opcode,
        discarded: log.discarded,
    }
}

/// Result of a full cascade: the quiesced state, effects in execution order,
/// and the executed synchronous opcodes.
#[derive(Debug)]
pub struct SyncOutcome {
    pub state: GlobalState,
    pub effects: Vec<Effect>,
    pub executed: Vec<Opcode>,
}

/// Run [`sync_step`] to its fixpoint, then arm a timer for every leaf that
/// newly entered an `await` or `repeat` with a positive evaluable delay.
/// `waiting` carries the already-processed wait leaves across instants, so a
/// wait that survives an instant untouched is never re-armed. Zero or
/// non-evaluable delays are left unarmed for the epsilon phase; with
/// `strict` they collapse the whole tree to error instead.
#[allow(clippy::too_many_arguments)]
pub fn sync_normalize(
    m: &Machine,
    state: GlobalState,
    clocks: &mut ClockModule,
    now: f64,
    ids: &mut NodeIdGen,
    budget: u64,
    strict: bool,
    waiting: &mut BTreeSet<NodeId>,
) -> Result<SyncOutcome, DivergenceError> {
    let snap = clocks.snapshot(now);
    let GlobalState { store, tree } = state;

    // Pick up reductions left pending by the previous instant, e.g. a sor
    // whose body terminated through a mark-clearing event application.
    let mut entry_log = NormalizeLog::default();
    let tree = normalize_logged(tree, &mut entry_log);
    for id in entry_log.discarded {
        clocks.cancel(id);
    }

    let mut state = GlobalState { store, tree };
    let mut effects = Vec::new();
    let mut executed = Vec::new();
    let mut steps = 0u64;
    loop {
        match sync_step(m, state, &snap, ids) {
            SyncStep::NoSynchronousLeaf(s) => {
                state = s;
                break;
            }
            SyncStep::Stepped { state: s, effects: fx, opcode, discarded } => {
                state = s;
                effects.extend(fx);
                executed.push(opcode);
                for id in discarded {
                    clocks.cancel(id);
                }
                steps += 1;
                if steps >= budget {
                    return Err(DivergenceError { budget });
                }
            }
        }
    }

    arm_new_waits(m, &mut state, clocks, now, &snap, waiting, strict, &mut effects);
    Ok(SyncOutcome { state, effects, executed })
}

#[allow(clippy::too_many_arguments)]
fn arm_new_waits(
    m: &Machine,
    state: &mut GlobalState,
    clocks: &mut ClockModule,
    now: f64,
    snap: &ClockSnapshot,
    waiting: &mut BTreeSet<NodeId>,
    strict: bool,
    effects: &mut Vec<Effect>,
) {
    let mut to_arm: Vec<(NodeId, TimerKind, crate::value::Duration, Option<crate::value::Duration>)> =
        Vec::new();
    let mut strict_violation = false;
    let mut live_waits: BTreeSet<NodeId> = BTreeSet::new();
    for (id, leaf) in state.tree.leaves_in_order() {
        if matches!(
            m.instruction(leaf.location),
            Instruction::Await(..) | Instruction::Repeat { .. }
        ) {
            live_waits.insert(id);
        }
        if waiting.contains(&id) {
            continue;
        }
        match m.instruction(leaf.location) {
            Instruction::Await(e, _) => {
                match eval_duration(e, &state.store, &leaf.store, snap) {
                    Ok(d) if !d.is_zero() && snap.to_seconds(&d).is_some() => {
                        to_arm.push((id, TimerKind::OneShot, d, None));
                    }
                    _ => strict_violation = true,
                }
            }
            Instruction::Repeat { period, expiry, .. } => {
                let pd = eval_duration(period, &state.store, &leaf.store, snap);
                let ed = eval_duration(expiry, &state.store, &leaf.store, snap);
                match (pd, ed) {
                    (Ok(p), Ok(e))
                        if !p.is_zero()
                            && !e.is_zero()
                            && snap.to_seconds(&p).is_some()
                            && snap.to_seconds(&e).is_some() =>
                    {
                        to_arm.push((id, TimerKind::Recursive, p, Some(e)));
                    }
                    _ => strict_violation = true,
                }
            }
            _ => {}
        }
    }
    if strict && strict_violation {
        let mut all = Vec::new();
        state.tree.collect_ids(&mut all);
        for id in all {
            clocks.cancel(id);
        }
        state.tree = Tree::terminal_error();
        waiting.clear();
        return;
    }
    *waiting = live_waits;
    for (id, kind, d, expiry) in to_arm {
        let armed = match kind {
            TimerKind::OneShot => clocks.start_timer(id, &d, now),
            TimerKind::Recursive => {
                clocks.start_recursive_timer(id, &d, expiry.as_ref().unwrap(), now)
            }
        };
        armed.expect("delays were checked positive and in registered units");
        effects.push(Effect::TimerArmed { node: id, kind });
    }
}

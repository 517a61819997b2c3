//! The asynchronous engine: logical events, the per-leaf unlock rules, and
//! the three-phase event application (rewrite each leaf at most once,
//! normalize, clear marks).

use crate::expr::{eval, eval_duration};
use crate::machine::{Instruction, Machine};
use crate::tree::{
    normalize_logged, GlobalStore, LocalState, NodeId, NodeIdGen, NormalizeLog,
    RuleId, Tree, TreeNode,
};
use crate::value::{ClockSnapshot, Value};

/// An occurrence that can unlock waiting leaves. `Epsilon` is the internal
/// same-date event; `Done`/`Step` are timer notifications addressed to a
/// node; stale node ids are permitted and simply unlock nothing.
#[derive(Debug, Clone, PartialEq)]
pub enum LogicalEvent {
    Epsilon,
    Done(NodeId),
    Step(NodeId),
    Input(String),
    ExternalAssign(String, Value),
}

/// Apply the leaf rule for `event` at one asynchronous leaf. Returns the
/// marked replacement when a rule matches, `None` otherwise.
pub fn leaf_transition(
    m: &Machine,
    leaf: &LocalState,
    node: NodeId,
    event: &LogicalEvent,
    global: &GlobalStore,
    snap: &ClockSnapshot,
    ids: &mut NodeIdGen,
) -> Option<Tree> {
    let jump = |ids: &mut NodeIdGen, target| {
        Some(Tree::leaf(ids.fresh(), LocalState::new(target, leaf.store.clone())).with_mark())
    };
    match (m.instruction(leaf.location), event) {
        (Instruction::Await(e, target), LogicalEvent::Epsilon) => {
            match eval_duration(e, global, &leaf.store, snap) {
                Err(_) => Some(Tree::terminal_error()),
                Ok(d) if snap.to_seconds(&d).is_none() => Some(Tree::terminal_error()),
                Ok(d) if d.is_zero() => jump(ids, *target),
                Ok(_) => None,
            }
        }
        (Instruction::Await(_, target), LogicalEvent::Done(p)) if *p == node => {
            jump(ids, *target)
        }
        (Instruction::Repeat { period, body, expiry }, LogicalEvent::Epsilon) => {
            let pd = eval_duration(period, global, &leaf.store, snap);
            let ed = eval_duration(expiry, global, &leaf.store, snap);
            match (pd, ed) {
                (Err(_), _) | (_, Err(_)) => Some(Tree::terminal_error()),
                (Ok(p), Ok(e)) => {
                    if p.is_zero()
                        || snap.to_seconds(&p).is_none()
                        || snap.to_seconds(&e).is_none()
                    {
                        Some(Tree::terminal_error())
                    } else if e.is_zero() {
                        // The body inherits the current store here, unlike
                        // the periodic steps which start empty.
                        jump(ids, *body)
                    } else {
                        None
                    }
                }
            }
        }
        (Instruction::Repeat { body, .. }, LogicalEvent::Step(p)) if *p == node => {
            let and_id = ids.fresh();
            let body_leaf = Tree::leaf(ids.fresh(), LocalState::entry(*body));
            Some(
                Tree::and(and_id, vec![Tree::leaf(node, leaf.clone()), body_leaf]).with_mark(),
            )
        }
        (Instruction::Repeat { .. }, LogicalEvent::Done(p)) if *p == node => {
            // Expiry terminates the looping thread, as the lowered encoding's
            // controller jumping to stop does.
            Some(Tree::terminal_true().with_mark())
        }
        (Instruction::Receive(expected, target), LogicalEvent::Input(sym)) if sym == expected => {
            jump(ids, *target)
        }
        (Instruction::Present(signal, target), LogicalEvent::Epsilon)
            if global.signal(signal) =>
        {
            jump(ids, *target)
        }
        (Instruction::Suspend(e, target), LogicalEvent::Epsilon) => {
            match eval(e, global, &leaf.store, snap) {
                Ok(Value::Bool(true)) => jump(ids, *target),
                // Not yet evaluable, or not true: keep waiting.
                _ => None,
            }
        }
        (Instruction::Suspend(e, target), LogicalEvent::ExternalAssign(x, v)) => {
            let mut overridden = global.clone();
            overridden.set_var(x, v.clone());
            match eval(e, &overridden, &leaf.store, snap) {
                Ok(Value::Bool(true)) => jump(ids, *target),
                _ => None,
            }
        }
        _ => None,
    }
}

/// True when `event` unlocks at least one leaf of `tree` under `global`.
pub fn unlocks(
    m: &Machine,
    tree: &Tree,
    event: &LogicalEvent,
    global: &GlobalStore,
    snap: &ClockSnapshot,
) -> bool {
    let mut scratch = NodeIdGen::new();
    tree.leaves_in_order()
        .into_iter()
        .any(|(id, leaf)| leaf_transition(m, leaf, id, event, global, snap, &mut scratch).is_some())
}

/// Outcome of one event application.
#[derive(Debug)]
pub struct ApplyOutcome {
    pub tree: Tree,
    /// Whether any leaf rule matched in phase 1.
    pub unlocked: bool,
    /// Nodes removed by the rewrite or the normalization; their timers must
    /// be cancelled by the caller.
    pub discarded: Vec<NodeId>,
    /// Normalization rules applied, in order.
    pub rules: Vec<RuleId>,
}

/// The three-phase transformation: rewrite every unlocked leaf at most once
/// against the same store, normalize to the rule fixpoint, clear all marks.
pub fn apply_event(
    m: &Machine,
    tree: Tree,
    event: &LogicalEvent,
    global: &GlobalStore,
    snap: &ClockSnapshot,
    ids: &mut NodeIdGen,
) -> ApplyOutcome {
    let mut unlocked = false;
    let mut replaced: Vec<NodeId> = Vec::new();
    let rewritten = rewrite_leaves(m, tree, event, global, snap, ids, &mut unlocked, &mut replaced);

    let mut log = NormalizeLog::default();
    let mut tree = normalize_logged(rewritten, &mut log);
    tree.clear_marks();

    let mut discarded = replaced;
    discarded.extend(log.discarded);
    ApplyOutcome { tree, unlocked, discarded, rules: log.applied }
}

#[allow(clippy::too_many_arguments)]
fn rewrite_leaves(
    m: &Machine,
    t: Tree,
    event: &LogicalEvent,
    global: &GlobalStore,
    snap: &ClockSnapshot,
    ids: &mut NodeIdGen,
    unlocked: &mut bool,
    replaced: &mut Vec<NodeId>,
) -> Tree {
    match t.node {
        TreeNode::Leaf { id, state } => {
            match leaf_transition(m, &state, id, event, global, snap, ids) {
                Some(replacement) => {
                    *unlocked = true;
                    let mut survivors = Vec::new();
                    replacement.collect_ids(&mut survivors);
                    if !survivors.contains(&id) {
                        replaced.push(id);
                    }
                    replacement
                }
                None => Tree { marked: t.marked, node: TreeNode::Leaf { id, state } },
            }
        }
        TreeNode::And { id, children } => {
            let children = children
                .into_iter()
                .map(|c| rewrite_leaves(m, c, event, global, snap, ids, unlocked, replaced))
                .collect();
            let mut out = Tree::and(id, children);
            if t.marked && !out.is_error() && out.id() == Some(id) {
                out.marked = true;
            }
            out
        }
        TreeNode::Xor { id, children } => {
            let children = children
                .into_iter()
                .map(|c| rewrite_leaves(m, c, event, global, snap, ids, unlocked, replaced))
                .collect();
            let mut out = Tree::xor(id, children);
            if t.marked && !out.is_error() && out.id() == Some(id) {
                out.marked = true;
            }
            out
        }
        TreeNode::Sor { id, body, ctrl } => {
            let body = rewrite_leaves(m, *body, event, global, snap, ids, unlocked, replaced);
            let ctrl = rewrite_leaves(m, *ctrl, event, global, snap, ids, unlocked, replaced);
            let mut out = Tree::sor(id, body, ctrl);
            out.marked = t.marked;
            out
        }
        node => Tree { marked: t.marked, node },
    }
}

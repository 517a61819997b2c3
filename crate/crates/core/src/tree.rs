//! Stores, local states, and the global concurrent state tree with its
//! mark-driven normalization rules.
//!
//! Leaves are waiting or running threads; `and` runs children in parallel,
//! `xor` races them competitively, `sor` runs a body under a controlling
//! watchdog. A transient mark on a subtree root means "unlocked this instant"
//! and drives the `xor`/`sor` resolution rules; marks never survive outside
//! an event application.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use crate::machine::Location;
use crate::value::Value;

/// Identity of a tree node, stable for as long as the node itself survives.
/// Timers are owned by node ids, and fresh ids mark freshly entered states.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(pub u64);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Monotonic counter handing out node ids.
#[derive(Debug, Default, Clone)]
pub struct NodeIdGen {
    next: u64,
}

impl NodeIdGen {
    pub fn new() -> NodeIdGen {
        NodeIdGen { next: 0 }
    }

    pub fn fresh(&mut self) -> NodeId {
        let id = NodeId(self.next);
        self.next += 1;
        id
    }
}

/// Mapping from local variable names to values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LocalStore {
    vars: BTreeMap<String, Value>,
}

impl LocalStore {
    pub fn new() -> LocalStore {
        LocalStore::default()
    }

    pub fn get(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    pub fn set(&mut self, name: &str, v: Value) {
        self.vars.insert(name.to_string(), v);
    }

    pub fn is_empty(&self) -> bool {
        self.vars.is_empty()
    }
}

impl fmt::Display for LocalStore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str("{")?;
        for (i, (k, v)) in self.vars.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{k}={v}")?;
        }
        f.write_str("}")
    }
}

/// Global variables plus the signal environment. The signal domain is fixed
/// to the machine's signal set for the whole run.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalStore {
    vars: BTreeMap<String, Value>,
    signals: BTreeMap<String, bool>,
}

impl GlobalStore {
    pub fn new(signal_set: &BTreeSet<String>) -> GlobalStore {
        GlobalStore {
            vars: BTreeMap::new(),
            signals: signal_set.iter().map(|s| (s.clone(), false)).collect(),
        }
    }

    pub fn get_var(&self, name: &str) -> Option<&Value> {
        self.vars.get(name)
    }

    pub fn set_var(&mut self, name: &str, v: Value) {
        self.vars.insert(name.to_string(), v);
    }

    pub fn signal(&self, name: &str) -> bool {
        self.signals.get(name).copied().unwrap_or(false)
    }

    pub fn emit_signal(&mut self, name: &str) {
        debug_assert!(
            self.signals.contains_key(name),
            "signal {name} is not in the machine's signal set"
        );
        self.signals.insert(name.to_string(), true);
    }

    /// Reset every signal assignment to false; the domain is unchanged.
    pub fn reset_signals(&mut self) {
        for v in self.signals.values_mut() {
            *v = false;
        }
    }

    pub fn vars(&self) -> &BTreeMap<String, Value> {
        &self.vars
    }
}

/// One thread: an instruction pointer plus its local store.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalState {
    pub location: Location,
    pub store: LocalStore,
}

impl LocalState {
    pub fn new(location: Location, store: LocalStore) -> LocalState {
        LocalState { location, store }
    }

    pub fn entry(location: Location) -> LocalState {
        LocalState::new(location, LocalStore::new())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    True,
    False,
    Error,
    Leaf { id: NodeId, state: LocalState },
    And { id: NodeId, children: Vec<Tree> },
    Xor { id: NodeId, children: Vec<Tree> },
    Sor { id: NodeId, body: Box<Tree>, ctrl: Box<Tree> },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    pub marked: bool,
    pub node: TreeNode,
}

impl Tree {
    pub fn terminal_true() -> Tree {
        Tree { marked: false, node: TreeNode::True }
    }

    pub fn terminal_false() -> Tree {
        Tree { marked: false, node: TreeNode::False }
    }

    pub fn terminal_error() -> Tree {
        Tree { marked: false, node: TreeNode::Error }
    }

    pub fn leaf(id: NodeId, state: LocalState) -> Tree {
        Tree { marked: false, node: TreeNode::Leaf { id, state } }
    }

    /// Build an `and`, splicing nested `and` children flat. Empty input is
    /// the unit (true); a single child is returned as-is.
    pub fn and(id: NodeId, children: Vec<Tree>) -> Tree {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c.node {
                TreeNode::And { children: inner, .. } => flat.extend(inner),
                _ => flat.push(c),
            }
        }
        match flat.len() {
            0 => Tree::terminal_true(),
            1 => flat.into_iter().next().unwrap(),
            _ => Tree { marked: false, node: TreeNode::And { id, children: flat } },
        }
    }

    /// Build an `xor`, splicing nested `xor` children flat.
    pub fn xor(id: NodeId, children: Vec<Tree>) -> Tree {
        let mut flat = Vec::with_capacity(children.len());
        for c in children {
            match c.node {
                TreeNode::Xor { children: inner, .. } => flat.extend(inner),
                _ => flat.push(c),
            }
        }
        match flat.len() {
            0 => panic!("xor needs at least one child"),
            1 => flat.into_iter().next().unwrap(),
            _ => Tree { marked: false, node: TreeNode::Xor { id, children: flat } },
        }
    }

    pub fn sor(id: NodeId, body: Tree, ctrl: Tree) -> Tree {
        Tree {
            marked: false,
            node: TreeNode::Sor { id, body: Box::new(body), ctrl: Box::new(ctrl) },
        }
    }

    pub fn with_mark(mut self) -> Tree {
        debug_assert!(
            !matches!(self.node, TreeNode::Error),
            "error is never marked"
        );
        self.marked = true;
        self
    }

    pub fn id(&self) -> Option<NodeId> {
        match &self.node {
            TreeNode::Leaf { id, .. }
            | TreeNode::And { id, .. }
            | TreeNode::Xor { id, .. }
            | TreeNode::Sor { id, .. } => Some(*id),
            _ => None,
        }
    }

    pub fn is_terminal(&self) -> bool {
        matches!(self.node, TreeNode::True | TreeNode::False | TreeNode::Error)
    }

    pub fn is_true(&self) -> bool {
        matches!(self.node, TreeNode::True)
    }

    pub fn is_error(&self) -> bool {
        matches!(self.node, TreeNode::Error)
    }

    fn is_marked_nonerror(&self) -> bool {
        self.marked && !self.is_error()
    }

    /// Leaves in left-to-right structural order; a sor yields its body's
    /// leaves before the controller's.
    pub fn leaves_in_order(&self) -> Vec<(NodeId, &LocalState)> {
        let mut out = Vec::new();
        self.collect_leaves(&mut out);
        out
    }

    fn collect_leaves<'a>(&'a self, out: &mut Vec<(NodeId, &'a LocalState)>) {
        match &self.node {
            TreeNode::Leaf { id, state } => out.push((*id, state)),
            TreeNode::And { children, .. } | TreeNode::Xor { children, .. } => {
                for c in children {
                    c.collect_leaves(out);
                }
            }
            TreeNode::Sor { body, ctrl, .. } => {
                body.collect_leaves(out);
                ctrl.collect_leaves(out);
            }
            _ => {}
        }
    }

    /// All node ids in the subtree (leaves and internal nodes).
    pub fn collect_ids(&self, out: &mut Vec<NodeId>) {
        if let Some(id) = self.id() {
            out.push(id);
        }
        match &self.node {
            TreeNode::And { children, .. } | TreeNode::Xor { children, .. } => {
                for c in children {
                    c.collect_ids(out);
                }
            }
            TreeNode::Sor { body, ctrl, .. } => {
                body.collect_ids(out);
                ctrl.collect_ids(out);
            }
            _ => {}
        }
    }

    pub fn clear_marks(&mut self) {
        self.marked = false;
        match &mut self.node {
            TreeNode::And { children, .. } | TreeNode::Xor { children, .. } => {
                for c in children {
                    c.clear_marks();
                }
            }
            TreeNode::Sor { body, ctrl, .. } => {
                body.clear_marks();
                ctrl.clear_marks();
            }
            _ => {}
        }
    }

    pub fn has_marks(&self) -> bool {
        if self.marked {
            return true;
        }
        match &self.node {
            TreeNode::And { children, .. } | TreeNode::Xor { children, .. } => {
                children.iter().any(Tree::has_marks)
            }
            TreeNode::Sor { body, ctrl, .. } => body.has_marks() || ctrl.has_marks(),
            _ => false,
        }
    }

    /// Debug rendering: nested s-expressions with node ids; a `*` after the
    /// id marks an unlocked subtree root.
    pub fn dump(&self) -> String {
        let mut s = String::new();
        self.dump_into(&mut s);
        s
    }

    fn dump_into(&self, out: &mut String) {
        let mark = if self.marked { "*" } else { "" };
        match &self.node {
            TreeNode::True => out.push_str(&format!("true{mark}")),
            TreeNode::False => out.push_str(&format!("false{mark}")),
            TreeNode::Error => out.push_str("error"),
            TreeNode::Leaf { id, state } => {
                out.push_str(&format!(
                    "(leaf#{id}{mark} @{} {})",
                    state.location, state.store
                ));
            }
            TreeNode::And { id, children } => {
                out.push_str(&format!("(and#{id}{mark}"));
                for c in children {
                    out.push(' ');
                    c.dump_into(out);
                }
                out.push(')');
            }
            TreeNode::Xor { id, children } => {
                out.push_str(&format!("(xor#{id}{mark}"));
                for c in children {
                    out.push(' ');
                    c.dump_into(out);
                }
                out.push(')');
            }
            TreeNode::Sor { id, body, ctrl } => {
                out.push_str(&format!("(sor#{id}{mark} "));
                body.dump_into(out);
                out.push(' ');
                ctrl.dump_into(out);
                out.push(')');
            }
        }
    }
}

/// The global state: shared store plus the concurrent tree.
#[derive(Debug, Clone, PartialEq)]
pub struct GlobalState {
    pub store: GlobalStore,
    pub tree: Tree,
}

/// The normalization rules. The first eight resolve marked and error subtrees
/// under `xor`, `sor`, and `and`; `SorBodyDone` discards a controller whose
/// body has terminated.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RuleId {
    /// xor(T̲, T) → T̲
    XorSelect,
    /// xor(T̲, T̲′) → error
    XorConflict,
    /// xor(X, error) → error
    XorError,
    /// sor(T, T̲) → T̲
    SorController,
    /// sor(T̲, T̲′) → error
    SorConflict,
    /// sor(X, error) → error and sor(error, X) → error
    SorError,
    /// and(X, true) → X
    AndTrue,
    /// and(X, error) → error
    AndError,
    /// sor(true, T) → true
    SorBodyDone,
}

pub const ALL_RULES: [RuleId; 9] = [
    RuleId::XorSelect,
    RuleId::XorConflict,
    RuleId::XorError,
    RuleId::SorController,
    RuleId::SorConflict,
    RuleId::SorError,
    RuleId::AndTrue,
    RuleId::AndError,
    RuleId::SorBodyDone,
];

/// Bookkeeping produced by a normalization: the rules applied in order and
/// the ids of every discarded node (whose timers must be cancelled).
#[derive(Debug, Default, Clone)]
pub struct NormalizeLog {
    pub applied: Vec<RuleId>,
    pub discarded: Vec<NodeId>,
}

impl NormalizeLog {
    fn discard_subtree(&mut self, t: &Tree) {
        t.collect_ids(&mut self.discarded);
    }
}

/// Normalize to the fixpoint of the rules.
pub fn normalize(t: Tree) -> Tree {
    let mut log = NormalizeLog::default();
    normalize_logged(t, &mut log)
}

/// As [`normalize`], recording applied rules and discarded nodes.
pub fn normalize_logged(t: Tree, log: &mut NormalizeLog) -> Tree {
    match t.node {
        TreeNode::And { id, children } => {
            let children = children
                .into_iter()
                .map(|c| normalize_logged(c, log))
                .collect();
            reduce_node(t.marked, id, Tree::and(id, children), log)
        }
        TreeNode::Xor { id, children } => {
            let children = children
                .into_iter()
                .map(|c| normalize_logged(c, log))
                .collect();
            reduce_node(t.marked, id, Tree::xor(id, children), log)
        }
        TreeNode::Sor { id, body, ctrl } => {
            let body = normalize_logged(*body, log);
            let ctrl = normalize_logged(*ctrl, log);
            reduce_node(t.marked, id, Tree::sor(id, body, ctrl), log)
        }
        other => Tree { marked: t.marked, node: other },
    }
}

/// Apply rules at one node (whose children are already normal) until none
/// matches. Each loop iteration applies exactly one binary rule instance.
/// A promoted child is already normal and keeps its own mark; the original
/// node's mark survives only while the node itself does.
fn reduce_node(marked: bool, orig_id: NodeId, mut t: Tree, log: &mut NormalizeLog) -> Tree {
    loop {
        match t.node {
            TreeNode::Xor { id, mut children } if id == orig_id => {
                if children.iter().any(Tree::is_error) {
                    log.applied.push(RuleId::XorError);
                    match children.iter().position(|c| !c.is_error()) {
                        Some(victim) => {
                            let removed = children.remove(victim);
                            log.discard_subtree(&removed);
                            t = collapse(marked, id, children, false);
                            continue;
                        }
                        None => return Tree::terminal_error(),
                    }
                }
                let marked_idx: Vec<usize> = children
                    .iter()
                    .enumerate()
                    .filter_map(|(i, c)| c.is_marked_nonerror().then_some(i))
                    .collect();
                if marked_idx.len() >= 2 {
                    let second = children.remove(marked_idx[1]);
                    let first =
                        std::mem::replace(&mut children[marked_idx[0]], Tree::terminal_error());
                    log.applied.push(RuleId::XorConflict);
                    log.discard_subtree(&first);
                    log.discard_subtree(&second);
                    t = collapse(marked, id, children, false);
                    continue;
                }
                if marked_idx.len() == 1 {
                    let victim = children
                        .iter()
                        .position(|c| !c.is_marked_nonerror())
                        .expect("xor holds at least two children");
                    let removed = children.remove(victim);
                    log.applied.push(RuleId::XorSelect);
                    log.discard_subtree(&removed);
                    t = collapse(marked, id, children, false);
                    continue;
                }
                return Tree { marked, node: TreeNode::Xor { id, children } };
            }
            TreeNode::And { id, mut children } if id == orig_id => {
                if children.iter().any(Tree::is_error) {
                    log.applied.push(RuleId::AndError);
                    match children.iter().position(|c| !c.is_error()) {
                        Some(victim) => {
                            let removed = children.remove(victim);
                            log.discard_subtree(&removed);
                            t = collapse(marked, id, children, true);
                            continue;
                        }
                        None => return Tree::terminal_error(),
                    }
                }
                if let Some(pos) = children.iter().position(Tree::is_true) {
                    children.remove(pos);
                    log.applied.push(RuleId::AndTrue);
                    t = collapse(marked, id, children, true);
                    continue;
                }
                return Tree { marked, node: TreeNode::And { id, children } };
            }
            TreeNode::Sor { id, body, ctrl } if id == orig_id => {
                if body.is_error() || ctrl.is_error() {
                    log.applied.push(RuleId::SorError);
                    if body.is_error() {
                        log.discard_subtree(&ctrl);
                    } else {
                        log.discard_subtree(&body);
                    }
                    return Tree::terminal_error();
                }
                if body.is_marked_nonerror() && ctrl.is_marked_nonerror() {
                    log.applied.push(RuleId::SorConflict);
                    log.discard_subtree(&body);
                    log.discard_subtree(&ctrl);
                    return Tree::terminal_error();
                }
                if ctrl.is_marked_nonerror() {
                    log.applied.push(RuleId::SorController);
                    log.discard_subtree(&body);
                    return *ctrl;
                }
                if body.is_true() && !body.marked && !ctrl.marked {
                    log.applied.push(RuleId::SorBodyDone);
                    log.discard_subtree(&ctrl);
                    return Tree::terminal_true();
                }
                return Tree { marked, node: TreeNode::Sor { id, body, ctrl } };
            }
            // A promoted child or terminal: already normal, mark intact.
            node => return Tree { marked: t.marked, node },
        }
    }
}

/// Rebuild an and/xor after removing a child, handing a singleton back as
/// the child itself.
fn collapse(marked: bool, id: NodeId, mut children: Vec<Tree>, is_and: bool) -> Tree {
    if children.len() == 1 {
        return children.pop().unwrap();
    }
    let node = if is_and {
        TreeNode::And { id, children }
    } else {
        TreeNode::Xor { id, children }
    };
    Tree { marked, node }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("unknown node id {0}")]
pub struct UnknownNodeId(pub NodeId);

/// Substitute the subtree rooted at `node` with `sub`, splicing nested
/// and/xor flat. Ids in `sub` are the caller's responsibility: mint fresh
/// ones for newly created nodes, reuse ids only for nodes that survive.
pub fn replace(t: Tree, node: NodeId, sub: Tree) -> Result<Tree, UnknownNodeId> {
    let mut sub = Some(sub);
    let out = replace_impl(t, node, &mut sub);
    if sub.is_none() {
        Ok(out)
    } else {
        Err(UnknownNodeId(node))
    }
}

fn replace_impl(t: Tree, node: NodeId, sub: &mut Option<Tree>) -> Tree {
    if sub.is_some() && t.id() == Some(node) {
        return sub.take().unwrap();
    }
    let marked = t.marked;
    let rebuilt = match t.node {
        TreeNode::And { id, children } => Tree::and(
            id,
            children
                .into_iter()
                .map(|c| replace_impl(c, node, sub))
                .collect(),
        ),
        TreeNode::Xor { id, children } => Tree::xor(
            id,
            children
                .into_iter()
                .map(|c| replace_impl(c, node, sub))
                .collect(),
        ),
        TreeNode::Sor { id, body, ctrl } => Tree::sor(
            id,
            replace_impl(*body, node, sub),
            replace_impl(*ctrl, node, sub),
        ),
        other => Tree { marked, node: other },
    };
    // Internal nodes keep their mark unless they were themselves replaced.
    let mut rebuilt = rebuilt;
    if marked && !rebuilt.is_error() {
        rebuilt.marked = true;
    }
    rebuilt
}

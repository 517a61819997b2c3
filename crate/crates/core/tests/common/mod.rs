//! Shared generators and oracles for the acceptance suite.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

use tivm::machine::Location;
use tivm::tree::{LocalState, NodeIdGen, Tree, TreeNode};

// ---------------------------------------------------------------------------
// Random marked trees and an independent single-step normalization oracle.
// ---------------------------------------------------------------------------

pub fn gen_tree(rng: &mut StdRng, ids: &mut NodeIdGen, budget: &mut u32) -> Tree {
    *budget = budget.saturating_sub(1);
    let can_branch = *budget >= 2;
    let choice = rng.gen_range(0..100);
    let t = if !can_branch || choice < 45 {
        match rng.gen_range(0..10) {
            0 => Tree::terminal_true(),
            1 => Tree::terminal_error(),
            2 => Tree::terminal_false(),
            _ => Tree::leaf(ids.fresh(), LocalState::entry(Location(rng.gen_range(0..3)))),
        }
    } else if choice < 65 {
        let n = if *budget >= 3 && rng.gen_bool(0.3) { 3 } else { 2 };
        let children = (0..n).map(|_| gen_tree(rng, ids, budget)).collect();
        Tree::and(ids.fresh(), children)
    } else if choice < 85 {
        let n = if *budget >= 3 && rng.gen_bool(0.3) { 3 } else { 2 };
        let children = (0..n).map(|_| gen_tree(rng, ids, budget)).collect();
        Tree::xor(ids.fresh(), children)
    } else {
        let body = gen_tree(rng, ids, budget);
        let ctrl = gen_tree(rng, ids, budget);
        Tree::sor(ids.fresh(), body, ctrl)
    };
    if !t.is_error() && rng.gen_bool(0.35) {
        t.with_mark()
    } else {
        t
    }
}

fn is_marked_nonerror(t: &Tree) -> bool {
    t.marked && !t.is_error()
}

/// Rebuild after removing a child. A singleton collapses to that child,
/// whose own mark stands; the dying node's mark dies with it.
fn rebuild_and(id: tivm::tree::NodeId, children: Vec<Tree>, marked: bool) -> Tree {
    if children.len() == 1 {
        children.into_iter().next().unwrap()
    } else {
        Tree { marked, node: TreeNode::And { id, children } }
    }
}

fn rebuild_xor(id: tivm::tree::NodeId, children: Vec<Tree>, marked: bool) -> Tree {
    if children.len() == 1 {
        children.into_iter().next().unwrap()
    } else {
        Tree { marked, node: TreeNode::Xor { id, children } }
    }
}

fn with_mark_flag(mut t: Tree, marked: bool) -> Tree {
    if marked && !t.is_error() {
        t.marked = true;
    }
    t
}

/// True when no rule instance applies anywhere in the subtree.
pub fn is_normal_form(t: &Tree) -> bool {
    single_steps(t).is_empty()
}

/// Every tree reachable from `t` by applying exactly one rule instance
/// somewhere. Rule operands must themselves be normal forms, as the rule
/// schema requires. Independent of the library's normalization strategy.
pub fn single_steps(t: &Tree) -> Vec<Tree> {
    let mut out = Vec::new();
    match &t.node {
        TreeNode::And { id, children } => {
            let normal: Vec<bool> = children.iter().map(is_normal_form).collect();
            // and(X, error) -> error: drop a normal non-error partner of an
            // error terminal.
            if children.iter().any(Tree::is_error) {
                for j in 0..children.len() {
                    if normal[j]
                        && children.iter().enumerate().any(|(i, c)| i != j && c.is_error())
                    {
                        let mut rest = children.clone();
                        rest.remove(j);
                        out.push(rebuild_and(*id, rest, t.marked));
                    }
                }
            }
            // and(X, true) -> X: drop a true child next to a normal sibling.
            for j in 0..children.len() {
                if children[j].is_true()
                    && children.iter().enumerate().any(|(i, _)| i != j && normal[i])
                {
                    let mut rest = children.clone();
                    rest.remove(j);
                    out.push(rebuild_and(*id, rest, t.marked));
                }
            }
            for (i, c) in children.iter().enumerate() {
                for sub in single_steps(c) {
                    let mut next = children.clone();
                    next[i] = sub;
                    out.push(with_mark_flag(Tree::and(*id, next), t.marked));
                }
            }
        }
        TreeNode::Xor { id, children } => {
            let normal: Vec<bool> = children.iter().map(is_normal_form).collect();
            if children.iter().any(Tree::is_error) {
                for j in 0..children.len() {
                    if normal[j]
                        && children.iter().enumerate().any(|(i, c)| i != j && c.is_error())
                    {
                        let mut rest = children.clone();
                        rest.remove(j);
                        out.push(rebuild_xor(*id, rest, t.marked));
                    }
                }
            }
            // xor(T-marked, T-marked') -> error.
            for i in 0..children.len() {
                for j in (i + 1)..children.len() {
                    if is_marked_nonerror(&children[i])
                        && is_marked_nonerror(&children[j])
                        && normal[i]
                        && normal[j]
                    {
                        let mut rest = children.clone();
                        rest.remove(j);
                        rest[i] = Tree::terminal_error();
                        out.push(rebuild_xor(*id, rest, t.marked));
                    }
                }
            }
            // xor(T-marked, T) -> T-marked: drop an unmarked non-error child.
            for i in 0..children.len() {
                if is_marked_nonerror(&children[i]) && normal[i] {
                    for j in 0..children.len() {
                        if j != i && !children[j].marked && !children[j].is_error() && normal[j]
                        {
                            let mut rest = children.clone();
                            rest.remove(j);
                            out.push(rebuild_xor(*id, rest, t.marked));
                        }
                    }
                }
            }
            for (i, c) in children.iter().enumerate() {
                for sub in single_steps(c) {
                    let mut next = children.clone();
                    next[i] = sub;
                    out.push(with_mark_flag(Tree::xor(*id, next), t.marked));
                }
            }
        }
        TreeNode::Sor { id, body, ctrl } => {
            let body_nf = is_normal_form(body);
            let ctrl_nf = is_normal_form(ctrl);
            if (body.is_error() && ctrl_nf) || (ctrl.is_error() && body_nf) {
                out.push(Tree::terminal_error());
            } else if body_nf && ctrl_nf {
                if is_marked_nonerror(body) && is_marked_nonerror(ctrl) {
                    out.push(Tree::terminal_error());
                }
                if is_marked_nonerror(ctrl) && !is_marked_nonerror(body) {
                    out.push((**ctrl).clone());
                }
                if body.is_true() && !body.marked && !ctrl.marked && !ctrl.is_error() {
                    out.push(Tree::terminal_true());
                }
            }
            for sub in single_steps(body) {
                out.push(with_mark_flag(
                    Tree::sor(*id, sub, (**ctrl).clone()),
                    t.marked,
                ));
            }
            for sub in single_steps(ctrl) {
                out.push(with_mark_flag(
                    Tree::sor(*id, (**body).clone(), sub),
                    t.marked,
                ));
            }
        }
        _ => {}
    }
    out
}

/// All normal forms reachable by maximal rule application, keyed by dump.
pub fn reachable_normal_forms(
    t: &Tree,
    seen: &mut std::collections::HashMap<String, std::collections::BTreeSet<String>>,
) -> std::collections::BTreeSet<String> {
    let key = t.dump();
    if let Some(cached) = seen.get(&key) {
        return cached.clone();
    }
    // Mark in-progress to guard against cycles (none are expected: every
    // rule strictly shrinks the tree).
    seen.insert(key.clone(), Default::default());
    let steps = single_steps(t);
    let mut out = std::collections::BTreeSet::new();
    if steps.is_empty() {
        out.insert(key.clone());
    } else {
        for next in steps {
            out.extend(reachable_normal_forms(&next, seen));
        }
    }
    seen.insert(key, out.clone());
    out
}

// ---------------------------------------------------------------------------
// Random valid machines and scripts for determinism runs.
// ---------------------------------------------------------------------------

struct MachineGen {
    rng: StdRng,
    lines: Vec<String>,
    label_n: usize,
    out_n: usize,
    pending: std::collections::VecDeque<(String, u32)>,
}

const SYMBOLS: [&str; 3] = ["SYM_A", "SYM_B", "SYM_C"];
const SIGNALS: [&str; 3] = ["sig0", "sig1", "sig2"];
const GLOBALS: [&str; 3] = ["g0", "g1", "g2"];

impl MachineGen {
    fn fresh(&mut self) -> String {
        let l = format!("B{}", self.label_n);
        self.label_n += 1;
        l
    }

    fn dyadic(&mut self) -> f64 {
        self.rng.gen_range(1..=8) as f64 * 0.25
    }

    fn sync_action(&mut self, skip_to: &str) -> String {
        match self.rng.gen_range(0..6) {
            0 => format!("emit {}", SIGNALS[self.rng.gen_range(0..3)]),
            1 => {
                self.out_n += 1;
                format!("send \"m{}\"", self.out_n)
            }
            2 => format!("x := ({})", self.rng.gen_range(0..10)),
            3 => format!(
                "$t{} := ({} + {})",
                self.rng.gen_range(0..3),
                self.rng.gen_range(0..5),
                self.rng.gen_range(0..5)
            ),
            4 => format!(
                "if ($%G% > {}) jump {}",
                self.rng.gen_range(0..4),
                skip_to
            )
            .replace("%G%", GLOBALS[self.rng.gen_range(0..3)]),
            _ => {
                self.out_n += 1;
                format!("send \"n{}\"", self.out_n)
            }
        }
    }

    fn async_step(&mut self, next: &str) -> String {
        match self.rng.gen_range(0..5) {
            0 => {
                let unit = if self.rng.gen_bool(0.5) { "s" } else { "beats" };
                format!("await ({} {unit}) jump {next}", self.dyadic())
            }
            1 => format!("receive {} jump {next}", SYMBOLS[self.rng.gen_range(0..3)]),
            2 => format!(
                "suspend ($%G% > {}) jump {next}",
                self.rng.gen_range(0..6)
            )
            .replace("%G%", GLOBALS[self.rng.gen_range(0..3)]),
            3 => format!("present {} jump {next}", SIGNALS[self.rng.gen_range(0..3)]),
            _ => format!("await ({} s) jump {next}", self.dyadic()),
        }
    }

    /// Emit one chain: segments of sync actions separated by async steps,
    /// ending in stop. May queue further chains for spawn/asap/sustain;
    /// chain-terminating forms are decided before any action can reference
    /// a later label.
    fn emit_chain(&mut self, entry: String, depth: u32) {
        let segments = self.rng.gen_range(1..=2);
        let mut seg_labels = vec![entry];
        for _ in 0..segments {
            seg_labels.push(self.fresh());
        }
        let stop_label = seg_labels.last().unwrap().clone();
        for s in 0..segments {
            let here = seg_labels[s].clone();
            let next = seg_labels[s + 1].clone();
            let mut first = true;
            if depth < 2 && self.rng.gen_bool(0.35) {
                match self.rng.gen_range(0..4) {
                    0 => {
                        let child = self.fresh();
                        let op = if self.rng.gen_bool(0.5) { "spawn" } else { "spawn0" };
                        self.push_line(Some(&here), &format!("{op} {child}"));
                        first = false;
                        self.pending.push_back((child, depth + 1));
                    }
                    1 => {
                        // repeat ends the chain; its body is a fresh chain.
                        let body = self.fresh();
                        let p = self.dyadic();
                        let e = p * self.rng.gen_range(2..=5) as f64;
                        self.push_line(
                            Some(&here),
                            &format!("repeat ({p} s) jump {body} for ({e} s)"),
                        );
                        self.pending.push_back((body, depth + 1));
                        self.retire_labels(&seg_labels[s + 1..]);
                        return;
                    }
                    2 => {
                        // asap over an await and a receive ends the chain.
                        let a = self.fresh();
                        let b = self.fresh();
                        let ca = self.fresh();
                        let cb = self.fresh();
                        self.push_line(Some(&here), &format!("asap {a} {b}"));
                        let line = format!("await ({} s) jump {ca}", self.dyadic());
                        self.push_line(Some(&a), &line);
                        let line = format!(
                            "receive {} jump {cb}",
                            SYMBOLS[self.rng.gen_range(0..3)]
                        );
                        self.push_line(Some(&b), &line);
                        self.pending.push_back((ca, depth + 1));
                        self.pending.push_back((cb, depth + 1));
                        self.retire_labels(&seg_labels[s + 1..]);
                        return;
                    }
                    _ => {
                        // sustain ends the chain; the controller await sits inline.
                        let body = self.fresh();
                        let ctrl = self.fresh();
                        let cc = self.fresh();
                        self.push_line(Some(&here), &format!("sustain {body} {ctrl}"));
                        let line = format!("await ({} s) jump {cc}", self.dyadic());
                        self.push_line(Some(&ctrl), &line);
                        self.pending.push_back((body, depth + 1));
                        self.pending.push_back((cc, depth + 1));
                        self.retire_labels(&seg_labels[s + 1..]);
                        return;
                    }
                }
            }
            let n_actions = self.rng.gen_range(0..=2);
            for _ in 0..n_actions {
                let action = self.sync_action(&next);
                self.push_line(if first { Some(&here) } else { None }, &action);
                first = false;
            }
            let step = self.async_step(&next);
            self.push_line(if first { Some(&here) } else { None }, &step);
        }
        self.push_line(Some(&stop_label), "stop");
    }

    /// Labels reserved for segments that a chain-terminating form cut off
    /// still need definitions; emit them as standalone stop chains.
    fn retire_labels(&mut self, labels: &[String]) {
        for l in labels {
            self.push_line(Some(l), "stop");
        }
    }

    fn push_line(&mut self, label: Option<&str>, text: &str) {
        match label {
            Some(l) => self.lines.push(format!("{l}: {text}")),
            None => self.lines.push(text.to_string()),
        }
    }
}

pub struct GeneratedPair {
    pub machine: String,
    pub script: String,
}

/// A random valid (machine, script) pair; the same seed reproduces the pair.
pub fn gen_pair(seed: u64) -> GeneratedPair {
    let mut g = MachineGen {
        rng: StdRng::seed_from_u64(seed),
        lines: Vec::new(),
        label_n: 0,
        out_n: 0,
        pending: std::collections::VecDeque::new(),
    };
    // Seed the globals the generator branches on, so if-conditions evaluate.
    let main = g.fresh();
    let start = main.clone();
    for (i, name) in GLOBALS.iter().enumerate() {
        let line = format!("${name} := ({})", i + 1);
        g.push_line(if i == 0 { Some(&start) } else { None }, &line);
    }
    let first_chain = g.fresh();
    g.emit_chain(first_chain, 0);
    // The preamble falls through into the first chain, which was emitted
    // under a fresh entry label; stitch by order of emission.
    let mut text = String::from(".inputs SYM_A SYM_B SYM_C\n");
    while let Some((label, depth)) = g.pending.pop_front() {
        g.emit_chain(label, depth);
    }
    for line in &g.lines {
        text.push_str(line);
        text.push('\n');
    }

    let mut rng = StdRng::seed_from_u64(seed ^ 0x9e3779b97f4a7c15);
    let mut script = String::new();
    if rng.gen_bool(0.5) {
        script.push_str(&format!(".tempo {}\n", [60, 90, 120][rng.gen_range(0..3)]));
    }
    let mut date = 0.0f64;
    for _ in 0..rng.gen_range(0..=5) {
        date += rng.gen_range(0..=6) as f64 * 0.25;
        match rng.gen_range(0..3) {
            0 => script.push_str(&format!(
                "@{date}s input {}\n",
                SYMBOLS[rng.gen_range(0..3)]
            )),
            1 => script.push_str(&format!(
                "@{date}s set ${} {}\n",
                GLOBALS[rng.gen_range(0..3)],
                rng.gen_range(0..9)
            )),
            _ => script.push_str(&format!(
                "@{date}s tempo {}\n",
                [45, 60, 80, 120][rng.gen_range(0..4)]
            )),
        }
    }
    GeneratedPair { machine: text, script }
}

// ---------------------------------------------------------------------------
// Repeat corpus for the lowering-equivalence runs.
// ---------------------------------------------------------------------------

pub struct RepeatCase {
    pub name: String,
    pub machine: String,
}

/// Machines containing repeat with constant ground delays: periods within
/// 0.25..=2 s, expiries within 1..=8 s, bodies emitting distinct outputs.
pub fn repeat_corpus() -> Vec<RepeatCase> {
    let mut cases = Vec::new();
    let periods = [0.25, 0.5, 0.75, 1.0, 1.5, 2.0];
    let expiries = [1.0, 2.0, 3.0, 4.5, 6.0, 8.0];
    let mut i = 0;
    for (pi, &p) in periods.iter().enumerate() {
        for &e in &expiries[pi % 2..periods.len().min(expiries.len())] {
            if cases.len() >= 16 {
                break;
            }
            i += 1;
            let body_sends = i % 3 + 1;
            let mut m = String::from(".inputs PING\n");
            m.push_str(&format!("L0: repeat ({p} s) jump BODY for ({e} s)\n"));
            m.push_str(&format!("BODY: send \"tick{i}a\"\n"));
            for extra in 1..body_sends {
                m.push_str(&format!("send \"tick{i}{}\"\n", (b'a' + extra as u8) as char));
            }
            m.push_str("stop\n");
            cases.push(RepeatCase { name: format!("single_{i}"), machine: m });
        }
    }
    // Two repeats running in parallel.
    for j in 0..6 {
        let p1 = periods[j % periods.len()];
        let p2 = periods[(j + 2) % periods.len()];
        let e1 = expiries[j % expiries.len()];
        let e2 = expiries[(j + 3) % expiries.len()];
        let m = format!(
            ".inputs PING\n\
             L0: spawn SECOND\n\
             L1: repeat ({p1} s) jump BODY1 for ({e1} s)\n\
             SECOND: repeat ({p2} s) jump BODY2 for ({e2} s)\n\
             BODY1: send \"pair{j}x\"\nstop\n\
             BODY2: send \"pair{j}y\"\nstop\n"
        );
        cases.push(RepeatCase { name: format!("pair_{j}"), machine: m });
    }
    cases
}

/// The three scripts every repeat-corpus machine runs against.
pub fn repeat_scripts() -> Vec<(&'static str, String)> {
    vec![
        ("empty", String::new()),
        (
            "inputs",
            "@0.9s input PING\n@3.3s input PING\n@5.1s input PING\n".to_string(),
        ),
        (
            "tempo",
            ".tempo 90\n@1.1s tempo 140\n@2.7s tempo 60\n@4.4s tempo 75\n".to_string(),
        ),
    ]
}

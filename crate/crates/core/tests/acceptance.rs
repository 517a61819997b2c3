//! Acceptance suite: one test per criterion, each printing a PASS line with
//! the checked property (run with `cargo test --test acceptance -- --nocapture`
//! to see them).

mod common;

use std::collections::BTreeMap;

use rand::rngs::StdRng;
use rand::SeedableRng;

use tivm::clocks::{ClockModule, TimerPayload};
use tivm::machine::{Location, Opcode};
use tivm::safety::{check, compensation_plan, parse_costs, Compensation, CostModel, Verdict};
use tivm::scheduler::{run, Executor, Progress, RunConfig};
use tivm::trace::{
    CascadeRecord, LogicalInstant, Termination, Trace, TraceKind, TraceRecord, Trigger,
};
use tivm::tree::{normalize, LocalState, NodeIdGen, Tree, TreeNode};
use tivm::value::Duration;
use tivm::{
    lower_repeat, observational_trace, parse_program, parse_script, run_program, write_trace,
    EnvScript,
};

fn run_text(machine: &str, script: &str) -> Trace {
    run_program(machine, script, RunConfig::default()).expect("program runs")
}

fn sends(trace: &Trace) -> Vec<(u64, f64, String)> {
    trace
        .events()
        .filter_map(|e| match &e.kind {
            TraceKind::OutputSent(s) => Some((e.instant.k, e.instant.date, s.clone())),
            _ => None,
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Criterion 1: the nine normalization rules, exact tree in, exact tree out.
// ---------------------------------------------------------------------------

#[test]
fn criterion_1_normalization_rules() {
    fn leaf(ids: &mut NodeIdGen, loc: usize) -> Tree {
        Tree::leaf(ids.fresh(), LocalState::entry(Location(loc)))
    }
    let ids = &mut NodeIdGen::new();

    // xor(T-marked, T) -> T-marked
    let a = leaf(ids, 1).with_mark();
    let b = leaf(ids, 2);
    let t = Tree::xor(ids.fresh(), vec![a.clone(), b]);
    assert_eq!(normalize(t), a);

    // xor(T-marked, T-marked') -> error
    let t = Tree::xor(
        ids.fresh(),
        vec![leaf(ids, 1).with_mark(), leaf(ids, 2).with_mark()],
    );
    assert_eq!(normalize(t), Tree::terminal_error());

    // xor(X, error) -> error, with X both marked and unmarked
    let t = Tree::xor(
        ids.fresh(),
        vec![leaf(ids, 1).with_mark(), Tree::terminal_error()],
    );
    assert_eq!(normalize(t), Tree::terminal_error());
    let t = Tree::xor(ids.fresh(), vec![leaf(ids, 1), Tree::terminal_error()]);
    assert_eq!(normalize(t), Tree::terminal_error());

    // sor(T, T-marked) -> T-marked
    let body = leaf(ids, 1);
    let ctrl = leaf(ids, 2).with_mark();
    let t = Tree::sor(ids.fresh(), body, ctrl.clone());
    assert_eq!(normalize(t), ctrl);

    // sor(T-marked, T-marked') -> error
    let t = Tree::sor(
        ids.fresh(),
        leaf(ids, 1).with_mark(),
        leaf(ids, 2).with_mark(),
    );
    assert_eq!(normalize(t), Tree::terminal_error());

    // sor(X, error) -> error and sor(error, X) -> error
    let t = Tree::sor(ids.fresh(), leaf(ids, 1), Tree::terminal_error());
    assert_eq!(normalize(t), Tree::terminal_error());
    let t = Tree::sor(ids.fresh(), Tree::terminal_error(), leaf(ids, 1));
    assert_eq!(normalize(t), Tree::terminal_error());

    // and(X, true) -> X
    let x = leaf(ids, 3);
    let t = Tree::and(ids.fresh(), vec![x.clone(), Tree::terminal_true()]);
    assert_eq!(normalize(t), x);

    // and(X, error) -> error
    let t = Tree::and(ids.fresh(), vec![leaf(ids, 3), Tree::terminal_error()]);
    assert_eq!(normalize(t), Tree::terminal_error());

    // sor(true, T) -> true (the documented extension)
    let t = Tree::sor(ids.fresh(), Tree::terminal_true(), leaf(ids, 4));
    assert_eq!(normalize(t), Tree::terminal_true());

    println!("ACCEPTANCE 1 PASS: all nine normalization rules rewrite exactly");
}

// ---------------------------------------------------------------------------
// Criterion 2: confluence, brute-forced over all rule-application orders.
// ---------------------------------------------------------------------------

#[test]
fn criterion_2_confluence() {
    let mut checked = 0;
    for seed in 0..600u64 {
        let mut rng = StdRng::seed_from_u64(seed);
        let mut ids = NodeIdGen::new();
        let mut budget = 7u32;
        let t = common::gen_tree(&mut rng, &mut ids, &mut budget);
        let mut seen = std::collections::HashMap::new();
        let forms = common::reachable_normal_forms(&t, &mut seen);
        assert_eq!(
            forms.len(),
            1,
            "tree {} reaches {} normal forms: {:?}",
            t.dump(),
            forms.len(),
            forms
        );
        let impl_nf = normalize(t.clone()).dump();
        assert_eq!(
            forms.iter().next().unwrap(),
            &impl_nf,
            "normalize() disagrees with the exhaustive oracle on {}",
            t.dump()
        );
        checked += 1;
    }
    println!(
        "ACCEPTANCE 2 PASS: {checked} random marked trees are confluent and match normalize()"
    );
}

// ---------------------------------------------------------------------------
// Criterion 3: repeat and its lowered encoding are observationally equal.
// ---------------------------------------------------------------------------

#[test]
fn criterion_3_lowering_equivalence() {
    let corpus = common::repeat_corpus();
    assert!(corpus.len() >= 20, "corpus has {}", corpus.len());
    let scripts = common::repeat_scripts();
    let mut runs = 0;
    for case in &corpus {
        let machine = parse_program(&case.machine).expect("corpus machine parses");
        let lowered = lower_repeat(&machine);
        for (script_name, script_text) in &scripts {
            let script = parse_script(script_text).expect("corpus script parses");
            let direct = run(machine.clone(), script.clone(), RunConfig::default())
                .unwrap_or_else(|e| panic!("{} direct run failed: {e}", case.name));
            let encoded = run(lowered.clone(), script, RunConfig::default())
                .unwrap_or_else(|e| panic!("{} lowered run failed: {e}", case.name));
            let a = write_trace(&observational_trace(&direct));
            let b = write_trace(&observational_trace(&encoded));
            assert_eq!(
                a, b,
                "observational traces differ for {} under script {script_name}",
                case.name
            );
            assert!(!a.is_empty(), "{} produced an empty trace", case.name);
            runs += 1;
        }
    }
    println!(
        "ACCEPTANCE 3 PASS: {} machines x {} scripts ({} runs) byte-identical after lowering",
        corpus.len(),
        scripts.len(),
        runs
    );
}

// ---------------------------------------------------------------------------
// Criterion 4: determinism over a random corpus.
// ---------------------------------------------------------------------------

#[test]
fn criterion_4_determinism() {
    let cfg = RunConfig { max_instants: 300, ..RunConfig::default() };
    let mut ran = 0;
    for seed in 0..100u64 {
        let pair = common::gen_pair(seed);
        let machine = parse_program(&pair.machine)
            .unwrap_or_else(|d| panic!("seed {seed}: generator made an invalid machine: {d:?}\n{}", pair.machine));
        let script = parse_script(&pair.script).expect("generated script parses");
        let first = run(machine.clone(), script.clone(), cfg.clone()).map(|t| write_trace(&t));
        let second = run(machine, script, cfg.clone()).map(|t| write_trace(&t));
        assert_eq!(first, second, "seed {seed} is nondeterministic");
        ran += 1;
    }
    println!("ACCEPTANCE 4 PASS: {ran} random (machine, script) pairs replay byte-identically");
}

// ---------------------------------------------------------------------------
// Criterion 5: synchronicity and signal lifetime.
// ---------------------------------------------------------------------------

#[test]
fn criterion_5_synchronicity_and_signals() {
    // (a) Every send of one cascade shares one instant date.
    let t = run_text(
        "L0: spawn L3\nL1: send \"one\"\nL2: stop\nL3: send \"two\"\nL4: send \"three\"\nL5: stop\n",
        "",
    );
    let got = sends(&t);
    assert_eq!(got.len(), 3);
    assert!(got.iter().all(|(k, date, _)| *k == 0 && *date == 0.0));
    assert_eq!(
        got.iter().map(|(_, _, s)| s.as_str()).collect::<Vec<_>>(),
        vec!["one", "two", "three"]
    );

    // (b) emit -> present works across an epsilon chain at the same date,
    // including a second hop.
    let t = run_text(
        "L0: spawn L4\nL1: spawn L7\nL2: emit a\nL3: stop\n\
         L4: present a jump L5\nL5: emit b\nL6: stop\n\
         L7: present b jump L8\nL8: send \"chained\"\nL9: stop\n",
        "",
    );
    let got = sends(&t);
    assert_eq!(got.len(), 1);
    let (k, date, name) = &got[0];
    assert_eq!((name.as_str(), *date), ("chained", 0.0));
    assert_eq!(*k, 2, "two epsilon instants precede the chained send");
    assert_eq!(t.termination(), Some(Termination::Success));

    // (c) present blocks once any time-advancing event has reset signals.
    let t = run_text(
        "L0: emit go\nL1: await (1 s) jump L2\nL2: present go jump L3\nL3: send \"late\"\nL4: stop\n",
        "",
    );
    assert!(sends(&t).is_empty());
    assert_eq!(t.termination(), Some(Termination::Quiescent));

    println!("ACCEPTANCE 5 PASS: cascade outputs share dates; signals live through epsilon chains and die on time advance");
}

// ---------------------------------------------------------------------------
// Criterion 6: multiclock arithmetic.
// ---------------------------------------------------------------------------

#[test]
fn criterion_6_multiclock() {
    // await 2 beats at 60 BPM with tempo -> 120 at t=1 fires at exactly 1.5 s.
    let t = run_text(
        "L0: await (2 beats) jump L1\nL1: send \"beat\"\nL2: stop\n",
        ".tempo 60\n@1.0s tempo 120\n",
    );
    let got = sends(&t);
    assert_eq!(got.len(), 1);
    assert!(
        (got[0].1 - 1.5).abs() < 1e-9,
        "fired at {} instead of 1.5",
        got[0].1
    );

    // Recursive timer: period 1 s, expiry 3 s -> steps at 1 and 2, done at 3,
    // both straight from the clock module and through a repeat run.
    let mut clocks = ClockModule::new(60.0).unwrap();
    let mut ids = NodeIdGen::new();
    let owner = ids.fresh();
    clocks
        .start_recursive_timer(
            owner,
            &Duration::seconds(1.0).unwrap(),
            &Duration::seconds(3.0).unwrap(),
            0.0,
        )
        .unwrap();
    let mut seen = Vec::new();
    while let Some(n) = clocks.pop_next() {
        seen.push((n.due, matches!(n.payload, TimerPayload::Step(_))));
    }
    assert_eq!(seen, vec![(1.0, true), (2.0, true), (3.0, false)]);

    let t = run_text(
        "L0: repeat (1 s) jump L1 for (3 s)\nL1: send \"tick\"\nL2: stop\n",
        "",
    );
    let got = sends(&t);
    assert_eq!(
        got.iter().map(|(_, d, _)| *d).collect::<Vec<_>>(),
        vec![1.0, 2.0]
    );
    let done_dates: Vec<f64> = t
        .cascades()
        .filter(|c| matches!(c.trigger, Trigger::Done(_)))
        .map(|c| c.instant.date)
        .collect();
    assert_eq!(done_dates, vec![3.0]);

    println!("ACCEPTANCE 6 PASS: beat await fires at 1.5 s after the tempo change; recursive timer steps at 1, 2 and finishes at 3");
}

// ---------------------------------------------------------------------------
// Criterion 7: asap competition.
// ---------------------------------------------------------------------------

#[test]
fn criterion_7_competition() {
    let machine = ".inputs NOTE\n\
        L0: asap L1 L2\n\
        L1: receive NOTE jump L3\n\
        L2: await (1 s) jump L5\n\
        L3: send \"note-first\"\n\
        L4: stop\n\
        L5: send \"timeout\"\n\
        L6: stop\n";

    // Input earlier than the timer: the receive branch wins.
    let t = run_text(machine, "@0.5s input NOTE\n");
    assert_eq!(
        sends(&t),
        vec![(1, 0.5, "note-first".to_string())]
    );
    assert_eq!(t.termination(), Some(Termination::Success));

    // Timer earlier than any input: the await branch wins.
    let t = run_text(machine, "@2.0s input NOTE\n");
    let got = sends(&t);
    assert_eq!(got, vec![(1, 1.0, "timeout".to_string())]);

    // Engineered simultaneous unlock: one input matching two receives under
    // the same xor ends the run in error.
    let t = run_text(
        ".inputs NOTE\nL0: asap L1 L2\nL1: receive NOTE jump L3\nL2: receive NOTE jump L5\nL3: send \"a\"\nL4: stop\nL5: send \"b\"\nL6: stop\n",
        "@0.5s input NOTE\n",
    );
    assert!(sends(&t).is_empty());
    assert_eq!(t.termination(), Some(Termination::Error));

    println!("ACCEPTANCE 7 PASS: xor resolves to the earlier event; simultaneous unlock is an error");
}

// ---------------------------------------------------------------------------
// Criterion 8: sustain semantics with timer-queue assertions.
// ---------------------------------------------------------------------------

#[test]
fn criterion_8_sustain() {
    // Body unlocking leaves the controller armed.
    let machine = parse_program(
        ".inputs NOTE\n\
         L0: sustain L1 L5\n\
         L1: receive NOTE jump L2\n\
         L2: send \"body\"\n\
         L3: receive NOTE jump L4\n\
         L4: stop\n\
         L5: await (10 s) jump L6\n\
         L6: send \"watchdog\"\n\
         L7: stop\n",
    )
    .unwrap();
    let script = parse_script("@0.5s input NOTE\n").unwrap();
    let mut exec = Executor::new(machine, script, RunConfig::default()).unwrap();
    // The first step arms the controller, then delivers the 0.5 s input,
    // which unlocks the body only.
    assert!(matches!(exec.step().unwrap(), Progress::Continued));
    assert_eq!(
        exec.clocks().pending_count(),
        1,
        "controller stays armed after the body advances"
    );
    let dump = exec.tree_dump();
    assert!(dump.starts_with("(sor#"), "sor survives: {dump}");
    assert!(dump.contains("@2"), "body advanced to its send: {dump}");
    assert!(dump.contains("@5"), "controller still waits at its await: {dump}");
    let termination = exec.run_to_end().unwrap();
    // With no second input the watchdog eventually fires and the body is
    // discarded.
    assert_eq!(termination, Termination::Success);
    let t = exec.trace().clone();
    let names: Vec<String> = sends(&t).into_iter().map(|(_, _, s)| s).collect();
    assert_eq!(names, vec!["body".to_string(), "watchdog".to_string()]);

    // Controller unlocking discards the waiting body and cancels its timer.
    // An unmatched input at 0.5 s exposes the both-armed state at a step
    // boundary before the controller fires at 1 s.
    let machine = parse_program(
        ".inputs PING\n\
         L0: sustain L1 L3\n\
         L1: await (10 s) jump L2\n\
         L2: stop\n\
         L3: await (1 s) jump L4\n\
         L4: send \"ctrl\"\n\
         L5: stop\n",
    )
    .unwrap();
    let script = parse_script("@0.5s input PING\n").unwrap();
    let mut exec = Executor::new(machine, script, RunConfig::default()).unwrap();
    assert!(matches!(exec.step().unwrap(), Progress::Continued));
    assert_eq!(exec.clocks().pending_count(), 2, "body and controller both armed");
    let termination = exec.run_to_end().unwrap();
    assert_eq!(termination, Termination::Success);
    assert_eq!(
        exec.clocks().pending_count(),
        0,
        "the body's 10 s timer was cancelled when the controller fired"
    );
    let names: Vec<(u64, f64, String)> = sends(exec.trace());
    assert_eq!(names, vec![(2, 1.0, "ctrl".to_string())]);

    println!("ACCEPTANCE 8 PASS: body advance keeps the controller armed; controller unlock discards the body and cancels its timer");
}

// ---------------------------------------------------------------------------
// Criterion 9: the safety checker against a hand computation.
// ---------------------------------------------------------------------------

#[test]
fn criterion_9_safety_checker() {
    // Synthetic trace: eleven instants at hand-chosen dates.
    let dates = [0.0, 1.0, 1.5, 1.75, 3.0, 3.25, 4.5, 5.0, 6.5, 7.0, 9.0];
    let triggers = [
        Trigger::Init,
        Trigger::Done(Location(0)),
        Trigger::Done(Location(0)),
        Trigger::Done(Location(0)), // ends k=2's gap: an await -> compensable
        Trigger::Input("A".into()),
        Trigger::Input("A".into()), // ends k=4's gap: environment event
        Trigger::Done(Location(0)),
        Trigger::Step(Location(1)), // ends k=6's gap: periodic tick
        Trigger::Done(Location(0)),
        Trigger::Done(Location(0)), // ends k=8's gap: await -> compensable
        Trigger::Done(Location(0)),
    ];
    let trace = Trace {
        records: dates
            .iter()
            .zip(triggers.iter())
            .enumerate()
            .map(|(k, (&date, trigger))| {
                TraceRecord::Cascade(CascadeRecord {
                    instant: LogicalInstant { k: k as u64, date, beat_date: date },
                    trigger: trigger.clone(),
                    ops: vec![],
                })
            })
            .collect(),
    };
    let cost_text = "\
k 0 delta 0.2 eps 0.1
k 1 delta 0.3 eps 0.05
k 2 delta 0.3 eps 0
k 3 delta 0.1 eps 0.2
k 4 delta 0.5 eps 0
k 5 delta 0 eps 0
k 6 delta 0.6 eps 0.1
k 7 delta 0.2 eps 0.2
k 8 delta 0.7 eps 0
k 9 delta 1.0 eps 0
k 10 delta 0 eps 0
";
    let costs = parse_costs(cost_text).unwrap();
    let report = check(&trace, &costs).unwrap();

    // Hand computation of (d_k, theta_k, verdict, slack), theta_k = delta_k
    // + eps_{k-1} with eps_{-1} = 0:
    let expected = [
        (0u64, 1.0, 0.2, Verdict::Safe, 0.8),
        (1, 0.5, 0.4, Verdict::Safe, 0.1),
        (2, 0.25, 0.35, Verdict::Violated, -0.1),
        (3, 1.25, 0.1, Verdict::Safe, 1.15),
        (4, 0.25, 0.7, Verdict::Violated, -0.45),
        (5, 1.25, 0.0, Verdict::Safe, 1.25),
        (6, 0.5, 0.6, Verdict::Violated, -0.1),
        (7, 1.5, 0.3, Verdict::Safe, 1.2),
        (8, 0.5, 0.9, Verdict::Violated, -0.4),
        (9, 2.0, 1.0, Verdict::Safe, 1.0),
    ];
    assert_eq!(report.records.len(), expected.len());
    for (r, (k, d, theta, verdict, slack)) in report.records.iter().zip(expected.iter()) {
        assert_eq!(r.k, *k);
        assert!((r.d - d).abs() < 1e-12, "k={k}: d {} vs {d}", r.d);
        assert!((r.theta - theta).abs() < 1e-12, "k={k}: theta {} vs {theta}", r.theta);
        assert_eq!(r.verdict, *verdict, "k={k}");
        assert!((r.slack - slack).abs() < 1e-12, "k={k}: slack {} vs {slack}", r.slack);
    }

    // Compensation: only the violations whose next wait is an await with
    // enough remaining delay are compensable.
    let machine = parse_program(
        "L0: await (1 s) jump L2\nL1: repeat (1 s) jump L2 for (2 s)\nL2: stop\n",
    )
    .unwrap();
    let plan = compensation_plan(&trace, &report, &machine);
    assert_eq!(plan.len(), 4);
    match &plan[0].plan {
        Compensation::Compensable { await_location, remaining, deduct_to } => {
            assert_eq!((plan[0].k, await_location.0), (2, 0));
            assert!((remaining - 0.25).abs() < 1e-12);
            assert!((deduct_to - 0.15).abs() < 1e-12);
        }
        other => panic!("k=2 should be compensable, got {other:?}"),
    }
    assert!(matches!(&plan[1].plan, Compensation::Uncompensable { .. }), "k=4 input");
    assert!(matches!(&plan[2].plan, Compensation::Uncompensable { .. }), "k=6 tick");
    match &plan[3].plan {
        Compensation::Compensable { remaining, deduct_to, .. } => {
            assert_eq!(plan[3].k, 8);
            assert!((remaining - 0.5).abs() < 1e-12);
            assert!((deduct_to - 0.1).abs() < 1e-12);
        }
        other => panic!("k=8 should be compensable, got {other:?}"),
    }

    println!("ACCEPTANCE 9 PASS: verdicts match the 10-line hand computation; compensation marks exactly the awaits with enough remaining delay");
}

// ---------------------------------------------------------------------------
// Criterion 10: golden traces, byte-exact.
// ---------------------------------------------------------------------------

#[test]
fn criterion_10_golden_traces() {
    let goldens: [(&str, &str, Option<&str>, &str); 6] = [
        (
            "g1_send",
            include_str!("golden/g1_send.ivm"),
            None,
            include_str!("golden/g1_send.trace"),
        ),
        (
            "g2_branch",
            include_str!("golden/g2_branch.ivm"),
            None,
            include_str!("golden/g2_branch.trace"),
        ),
        (
            "g3_spawn_signal",
            include_str!("golden/g3_spawn_signal.ivm"),
            None,
            include_str!("golden/g3_spawn_signal.trace"),
        ),
        (
            "g4_beats",
            include_str!("golden/g4_beats.ivm"),
            Some(include_str!("golden/g4_beats.evt")),
            include_str!("golden/g4_beats.trace"),
        ),
        (
            "g5_repeat",
            include_str!("golden/g5_repeat.ivm"),
            None,
            include_str!("golden/g5_repeat.trace"),
        ),
        (
            "g6_sustain_race",
            include_str!("golden/g6_sustain_race.ivm"),
            Some(include_str!("golden/g6_sustain_race.evt")),
            include_str!("golden/g6_sustain_race.trace"),
        ),
    ];
    for (name, machine, script, expected) in goldens {
        let trace = run_program(machine, script.unwrap_or(""), RunConfig::default())
            .unwrap_or_else(|e| panic!("golden {name} failed to run: {e}"));
        let text = write_trace(&trace);
        assert_eq!(text, expected, "golden {name} diverged");
        // The serialized trace reads back to the same value.
        let back = tivm::read_trace(&text).unwrap();
        assert_eq!(write_trace(&back), text, "golden {name} does not round-trip");
    }
    println!("ACCEPTANCE 10 PASS: six hand-derived golden traces match byte-for-byte");
}

// ---------------------------------------------------------------------------
// Cross-cutting: the opcode tally in cascade records feeds the
// per-instruction cost mode end to end.
// ---------------------------------------------------------------------------

#[test]
fn per_instruction_costs_over_a_real_trace() {
    let t = run_text("L0: send \"hi\"\nL1: await (1 s) jump L2\nL2: send \"bye\"\nL3: stop\n", "");
    let k0_ops: Vec<Opcode> = t.cascades().next().unwrap().ops.clone();
    assert_eq!(k0_ops, vec![Opcode::Send]);
    let mut table = BTreeMap::new();
    table.insert(Opcode::Send, 0.4);
    table.insert(Opcode::Stop, 0.1);
    let report = check(&t, &CostModel::PerInstruction(table)).unwrap();
    assert_eq!(report.records.len(), 1);
    assert_eq!(report.records[0].verdict, Verdict::Safe);
    assert!((report.records[0].delta - 0.4).abs() < 1e-12);
}

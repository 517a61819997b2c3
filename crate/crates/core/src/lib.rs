//! A deterministic virtual machine for timed reactive programs.
//!
//! Programs are tables of synchronous instructions (instantaneous: emit,
//! send, assign, stop, if, spawn, spawn0, asap, sustain) and asynchronous
//! instructions (blocking: await, repeat, receive, present, suspend).
//! Concurrent threads live in a global tree whose `and`/`xor`/`sor` nodes
//! run children in parallel, race them, or scope a body under a watchdog.
//! Time is multiclock: wall seconds plus tempo-driven beats, with timers on
//! either clock. Execution alternates synchronous cascades with logical
//! events and emits a timed observational trace.

pub mod asm;
pub mod clocks;
pub mod event;
pub mod expr;
pub mod machine;
pub mod safety;
pub mod scheduler;
pub mod script;
pub mod sync;
pub mod trace;
pub mod tree;
pub mod value;

pub use asm::{parse_program, pretty_print};
pub use machine::{lower_repeat, validate, Diagnostic, Instruction, Location, Machine, Opcode};
pub use scheduler::{run, run_program, Executor, Mode, ProgramError, RunConfig, RunError};
pub use script::{parse_script, EnvScript};
pub use trace::{observational_trace, read_trace, write_trace, Trace};
pub use value::{Duration, TimeUnit, Value};

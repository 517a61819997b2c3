use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use tivm::machine::Diagnostic;
use tivm::safety::{check, compensation_plan, parse_costs, render_report};
use tivm::scheduler::{run, Mode, RunConfig, RunError};
use tivm::trace::Termination;
use tivm::{lower_repeat, observational_trace, parse_program, parse_script, pretty_print,
    read_trace, validate, write_trace};

#[derive(Parser)]
#[command(name = "tivm", version, about = "Deterministic VM for timed reactive programs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    Virtual,
    Realtime,
}

#[derive(Subcommand)]
enum Command {
    /// Execute a machine against an environment script and emit the trace.
    Run {
        machine: PathBuf,
        /// Environment script; omit for an empty environment.
        #[arg(long)]
        events: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "virtual")]
        mode: ModeArg,
        /// Write the trace here instead of standard output.
        #[arg(long)]
        trace: Option<PathBuf>,
        #[arg(long, default_value_t = 100_000)]
        max_instants: u64,
        #[arg(long, default_value_t = 1_000_000)]
        step_budget: u64,
        /// Treat zero or non-evaluable wait delays as a whole-tree error.
        #[arg(long)]
        strict_await_zero: bool,
    },
    /// Parse and validate a machine, printing diagnostics.
    Check { machine: PathBuf },
    /// Rewrite every repeat into its sustain/spawn0/await encoding.
    LowerRepeat {
        machine: PathBuf,
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Check time safety of a trace against a cost model.
    Safety {
        trace: PathBuf,
        #[arg(long)]
        costs: PathBuf,
        /// Machine used for the compensation plan.
        #[arg(long)]
        machine: Option<PathBuf>,
    },
    /// Pretty-print a trace file, optionally filtered to the observables.
    PrintTrace {
        trace: PathBuf,
        #[arg(long)]
        observational: bool,
    },
}

fn read_file(path: &PathBuf) -> Result<String, String> {
    fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))
}

fn report_diags(diags: &[Diagnostic]) {
    for d in diags {
        eprintln!("{d}");
    }
}

fn cmd_run(
    machine: PathBuf,
    events: Option<PathBuf>,
    mode: ModeArg,
    trace_out: Option<PathBuf>,
    max_instants: u64,
    step_budget: u64,
    strict_await_zero: bool,
) -> Result<u8, String> {
    let machine_text = read_file(&machine)?;
    let m = match parse_program(&machine_text) {
        Ok(m) => m,
        Err(diags) => {
            report_diags(&diags);
            return Ok(1);
        }
    };
    let script = match events {
        Some(path) => match parse_script(&read_file(&path)?) {
            Ok(s) => s,
            Err(diags) => {
                report_diags(&diags);
                return Ok(1);
            }
        },
        None => tivm::EnvScript::empty(),
    };
    let cfg = RunConfig {
        mode: match mode {
            ModeArg::Virtual => Mode::Virtual,
            ModeArg::Realtime => Mode::Realtime,
        },
        step_budget,
        max_instants,
        strict_await_zero,
    };
    let trace = match run(m, script, cfg) {
        Ok(t) => t,
        Err(RunError::Invalid(diags)) => {
            report_diags(&diags);
            return Ok(1);
        }
        Err(e @ RunError::Divergence { .. }) => {
            eprintln!("{e}");
            return Ok(1);
        }
    };
    let text = write_trace(&trace);
    match trace_out {
        Some(path) => fs::write(&path, text)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{text}"),
    }
    Ok(match trace.termination() {
        Some(Termination::Success) | Some(Termination::Quiescent) => 0,
        _ => 1,
    })
}

fn cmd_check(machine: PathBuf) -> Result<u8, String> {
    let text = read_file(&machine)?;
    match parse_program(&text) {
        Ok(m) => {
            // parse_program validates, so this re-check is for machines that
            // parsed; it keeps the command meaningful on programmatic input.
            let diags = validate(&m);
            if diags.is_empty() {
                println!("ok: {} instructions", m.len());
                Ok(0)
            } else {
                report_diags(&diags);
                Ok(1)
            }
        }
        Err(diags) => {
            report_diags(&diags);
            Ok(1)
        }
    }
}

fn cmd_lower_repeat(machine: PathBuf, output: Option<PathBuf>) -> Result<u8, String> {
    let text = read_file(&machine)?;
    let m = match parse_program(&text) {
        Ok(m) => m,
        Err(diags) => {
            report_diags(&diags);
            return Ok(1);
        }
    };
    let lowered = pretty_print(&lower_repeat(&m));
    match output {
        Some(path) => fs::write(&path, lowered)
            .map_err(|e| format!("cannot write {}: {e}", path.display()))?,
        None => print!("{lowered}"),
    }
    Ok(0)
}

fn cmd_safety(trace: PathBuf, costs: PathBuf, machine: Option<PathBuf>) -> Result<u8, String> {
    let trace = match read_trace(&read_file(&trace)?) {
        Ok(t) => t,
        Err(d) => {
            report_diags(&[d]);
            return Ok(1);
        }
    };
    let costs = match parse_costs(&read_file(&costs)?) {
        Ok(c) => c,
        Err(diags) => {
            report_diags(&diags);
            return Ok(1);
        }
    };
    let report = match check(&trace, &costs) {
        Ok(r) => r,
        Err(d) => {
            report_diags(&[d]);
            return Ok(1);
        }
    };
    let plan = match machine {
        Some(path) => {
            let m = match parse_program(&read_file(&path)?) {
                Ok(m) => m,
                Err(diags) => {
                    report_diags(&diags);
                    return Ok(1);
                }
            };
            compensation_plan(&trace, &report, &m)
        }
        None => Vec::new(),
    };
    print!("{}", render_report(&report, &plan));
    let violated = report
        .records
        .iter()
        .any(|r| r.verdict == tivm::safety::Verdict::Violated);
    Ok(if violated { 1 } else { 0 })
}

fn cmd_print_trace(trace: PathBuf, observational: bool) -> Result<u8, String> {
    let t = match read_trace(&read_file(&trace)?) {
        Ok(t) => t,
        Err(d) => {
            report_diags(&[d]);
            return Ok(1);
        }
    };
    let t = if observational { observational_trace(&t) } else { t };
    print!("{}", write_trace(&t));
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            machine,
            events,
            mode,
            trace,
            max_instants,
            step_budget,
            strict_await_zero,
        } => cmd_run(machine, events, mode, trace, max_instants, step_budget, strict_await_zero),
        Command::Check { machine } => cmd_check(machine),
        Command::LowerRepeat { machine, output } => cmd_lower_repeat(machine, output),
        Command::Safety { trace, costs, machine } => cmd_safety(trace, costs, machine),
        Command::PrintTrace { trace, observational } => cmd_print_trace(trace, observational),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(msg) => {
            eprintln!("{msg}");
            ExitCode::from(2)
        }
    }
}

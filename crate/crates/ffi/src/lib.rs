//! C ABI over the tivm library: opaque handles, status codes, and a
//! thread-local last-error message. All strings are UTF-8 and NUL-terminated;
//! strings returned by this library are freed with [`tivm_string_free`].

use std::cell::RefCell;
use std::ffi::{CStr, CString};
use std::os::raw::c_char;
use std::ptr;

use tivm::scheduler::{Mode, RunConfig};
use tivm::trace::Termination;

/// Result of every fallible call. Non-OK statuses leave a human-readable
/// explanation in [`tivm_last_error`].
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum TivmStatus {
    Ok = 0,
    /// A required pointer was null or a string was not valid UTF-8.
    InvalidArgument = 1,
    /// The machine, script, trace, or cost input was rejected.
    ParseError = 2,
    /// The run failed (divergent cascade or invalid program/script pairing).
    RunError = 3,
}

/// Opaque parsed machine.
pub struct TivmMachine(tivm::Machine);

/// Opaque parsed environment script.
pub struct TivmScript(tivm::EnvScript);

/// Opaque execution trace.
pub struct TivmTrace(tivm::Trace);

/// Run parameters; obtain defaults from [`tivm_run_config_default`].
#[repr(C)]
#[derive(Clone, Copy)]
pub struct TivmRunConfig {
    /// 0 = virtual time (deterministic, fast), 1 = paced against the host clock.
    pub realtime: u8,
    /// Treat zero/non-evaluable wait delays as a whole-tree error.
    pub strict_await_zero: u8,
    /// Synchronous steps allowed per instant.
    pub step_budget: u64,
    /// Largest instant index a run may reach.
    pub max_instants: u64,
}

/// How a trace ended; [`tivm_trace_termination`] reports one of these.
#[repr(C)]
#[derive(Clone, Copy, PartialEq, Eq)]
pub enum TivmTermination {
    Running = 0,
    Success = 1,
    Error = 2,
    Quiescent = 3,
    MaxInstants = 4,
}

thread_local! {
    static LAST_ERROR: RefCell<Option<CString>> = const { RefCell::new(None) };
}

fn set_error(msg: impl Into<String>) {
    let msg = msg.into();
    LAST_ERROR.with(|slot| {
        *slot.borrow_mut() = CString::new(msg.replace('\0', " ")).ok();
    });
}

fn clear_error() {
    LAST_ERROR.with(|slot| slot.borrow_mut().take());
}

fn diagnostics_message(diags: &[tivm::Diagnostic]) -> String {
    diags
        .iter()
        .map(|d| d.to_string())
        .collect::<Vec<_>>()
        .join("\n")
}

/// The message for the most recent non-OK status on this thread, or null.
/// The pointer stays valid until the next failing call on the same thread;
/// do not free it.
#[no_mangle]
pub extern "C" fn tivm_last_error() -> *const c_char {
    LAST_ERROR.with(|slot| match &*slot.borrow() {
        Some(s) => s.as_ptr(),
        None => ptr::null(),
    })
}

unsafe fn utf8_in<'a>(text: *const c_char, what: &str) -> Result<&'a str, TivmStatus> {
    if text.is_null() {
        set_error(format!("{what} is null"));
        return Err(TivmStatus::InvalidArgument);
    }
    match CStr::from_ptr(text).to_str() {
        Ok(s) => Ok(s),
        Err(_) => {
            set_error(format!("{what} is not valid UTF-8"));
            Err(TivmStatus::InvalidArgument)
        }
    }
}

fn string_out(s: String) -> *mut c_char {
    match CString::new(s.replace('\0', " ")) {
        Ok(c) => c.into_raw(),
        Err(_) => ptr::null_mut(),
    }
}

/// Free a string returned by this library; null is a no-op.
///
/// # Safety
/// `s` must have been returned by a `tivm_*` function and not freed before.
#[no_mangle]
pub unsafe extern "C" fn tivm_string_free(s: *mut c_char) {
    if !s.is_null() {
        drop(CString::from_raw(s));
    }
}

/// Assemble a machine from its textual form.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tivm_machine_parse(
    text: *const c_char,
    out: *mut *mut TivmMachine,
) -> TivmStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return TivmStatus::InvalidArgument;
    }
    let text = match utf8_in(text, "machine text") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match tivm::parse_program(text) {
        Ok(m) => {
            clear_error();
            *out = Box::into_raw(Box::new(TivmMachine(m)));
            TivmStatus::Ok
        }
        Err(diags) => {
            set_error(diagnostics_message(&diags));
            TivmStatus::ParseError
        }
    }
}

/// Rewrite every repeat into its sustain/spawn0/await encoding.
///
/// # Safety
/// `machine` must be a live handle from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tivm_machine_lower_repeat(
    machine: *const TivmMachine,
    out: *mut *mut TivmMachine,
) -> TivmStatus {
    if machine.is_null() || out.is_null() {
        set_error("machine or out pointer is null");
        return TivmStatus::InvalidArgument;
    }
    let lowered = tivm::lower_repeat(&(*machine).0);
    clear_error();
    *out = Box::into_raw(Box::new(TivmMachine(lowered)));
    TivmStatus::Ok
}

/// Render a machine back to assembly text; free with [`tivm_string_free`].
///
/// # Safety
/// `machine` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn tivm_machine_print(machine: *const TivmMachine) -> *mut c_char {
    if machine.is_null() {
        return ptr::null_mut();
    }
    string_out(tivm::pretty_print(&(*machine).0))
}

/// # Safety
/// `machine` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tivm_machine_free(machine: *mut TivmMachine) {
    if !machine.is_null() {
        drop(Box::from_raw(machine));
    }
}

/// Parse an environment script. The empty string is the empty environment.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tivm_script_parse(
    text: *const c_char,
    out: *mut *mut TivmScript,
) -> TivmStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return TivmStatus::InvalidArgument;
    }
    let text = match utf8_in(text, "script text") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match tivm::parse_script(text) {
        Ok(s) => {
            clear_error();
            *out = Box::into_raw(Box::new(TivmScript(s)));
            TivmStatus::Ok
        }
        Err(diags) => {
            set_error(diagnostics_message(&diags));
            TivmStatus::ParseError
        }
    }
}

/// # Safety
/// `script` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tivm_script_free(script: *mut TivmScript) {
    if !script.is_null() {
        drop(Box::from_raw(script));
    }
}

#[no_mangle]
pub extern "C" fn tivm_run_config_default() -> TivmRunConfig {
    let d = RunConfig::default();
    TivmRunConfig {
        realtime: 0,
        strict_await_zero: 0,
        step_budget: d.step_budget,
        max_instants: d.max_instants,
    }
}

/// Execute `machine` against `script` and hand back the trace. A null
/// `config` uses the defaults; a null `script` means the empty environment.
///
/// # Safety
/// Handles must be live handles from this library; `out` must be valid.
#[no_mangle]
pub unsafe extern "C" fn tivm_run(
    machine: *const TivmMachine,
    script: *const TivmScript,
    config: *const TivmRunConfig,
    out: *mut *mut TivmTrace,
) -> TivmStatus {
    if machine.is_null() || out.is_null() {
        set_error("machine or out pointer is null");
        return TivmStatus::InvalidArgument;
    }
    let cfg = if config.is_null() {
        tivm_run_config_default()
    } else {
        *config
    };
    let run_cfg = RunConfig {
        mode: if cfg.realtime != 0 { Mode::Realtime } else { Mode::Virtual },
        step_budget: cfg.step_budget.max(1),
        max_instants: cfg.max_instants.max(1),
        strict_await_zero: cfg.strict_await_zero != 0,
    };
    let script_value = if script.is_null() {
        tivm::EnvScript::empty()
    } else {
        (*script).0.clone()
    };
    match tivm::run((*machine).0.clone(), script_value, run_cfg) {
        Ok(trace) => {
            clear_error();
            *out = Box::into_raw(Box::new(TivmTrace(trace)));
            TivmStatus::Ok
        }
        Err(e) => {
            set_error(e.to_string());
            TivmStatus::RunError
        }
    }
}

/// Serialize a trace in the line format; free with [`tivm_string_free`].
///
/// # Safety
/// `trace` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn tivm_trace_write(trace: *const TivmTrace) -> *mut c_char {
    if trace.is_null() {
        return ptr::null_mut();
    }
    string_out(tivm::write_trace(&(*trace).0))
}

/// Parse a serialized trace.
///
/// # Safety
/// `text` must be a NUL-terminated string; `out` must be a valid pointer.
#[no_mangle]
pub unsafe extern "C" fn tivm_trace_parse(
    text: *const c_char,
    out: *mut *mut TivmTrace,
) -> TivmStatus {
    if out.is_null() {
        set_error("out pointer is null");
        return TivmStatus::InvalidArgument;
    }
    let text = match utf8_in(text, "trace text") {
        Ok(t) => t,
        Err(s) => return s,
    };
    match tivm::read_trace(text) {
        Ok(t) => {
            clear_error();
            *out = Box::into_raw(Box::new(TivmTrace(t)));
            TivmStatus::Ok
        }
        Err(d) => {
            set_error(d.to_string());
            TivmStatus::ParseError
        }
    }
}

/// The observational filter: keeps inputs received, external assignments,
/// and outputs sent.
///
/// # Safety
/// `trace` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn tivm_trace_observational(trace: *const TivmTrace) -> *mut TivmTrace {
    if trace.is_null() {
        return ptr::null_mut();
    }
    Box::into_raw(Box::new(TivmTrace(tivm::observational_trace(&(*trace).0))))
}

/// How the traced run ended.
///
/// # Safety
/// `trace` must be a live handle from this library.
#[no_mangle]
pub unsafe extern "C" fn tivm_trace_termination(trace: *const TivmTrace) -> TivmTermination {
    if trace.is_null() {
        return TivmTermination::Running;
    }
    match (*trace).0.termination() {
        None => TivmTermination::Running,
        Some(Termination::Success) => TivmTermination::Success,
        Some(Termination::Error) => TivmTermination::Error,
        Some(Termination::Quiescent) => TivmTermination::Quiescent,
        Some(Termination::MaxInstants) => TivmTermination::MaxInstants,
    }
}

/// # Safety
/// `trace` must be a handle from this library, not yet freed.
#[no_mangle]
pub unsafe extern "C" fn tivm_trace_free(trace: *mut TivmTrace) {
    if !trace.is_null() {
        drop(Box::from_raw(trace));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(s: &str) -> CString {
        CString::new(s).unwrap()
    }

    #[test]
    fn parse_run_write_through_the_abi() {
        unsafe {
            let mut machine: *mut TivmMachine = ptr::null_mut();
            let status = tivm_machine_parse(
                c("L0: send \"hi\"\nL1: stop\n").as_ptr(),
                &mut machine,
            );
            assert!(status == TivmStatus::Ok);
            let mut script: *mut TivmScript = ptr::null_mut();
            assert!(tivm_script_parse(c("").as_ptr(), &mut script) == TivmStatus::Ok);
            let mut trace: *mut TivmTrace = ptr::null_mut();
            let cfg = tivm_run_config_default();
            assert!(tivm_run(machine, script, &cfg, &mut trace) == TivmStatus::Ok);
            assert!(tivm_trace_termination(trace) == TivmTermination::Success);
            let text = tivm_trace_write(trace);
            let rust_text = CStr::from_ptr(text).to_str().unwrap().to_string();
            assert!(rust_text.contains("send hi"));

            // Round-trip the serialized trace.
            let mut back: *mut TivmTrace = ptr::null_mut();
            assert!(tivm_trace_parse(text, &mut back) == TivmStatus::Ok);
            let text2 = tivm_trace_write(back);
            assert_eq!(rust_text, CStr::from_ptr(text2).to_str().unwrap());

            tivm_string_free(text);
            tivm_string_free(text2);
            tivm_trace_free(back);
            tivm_trace_free(trace);
            tivm_script_free(script);
            tivm_machine_free(machine);
        }
    }

    #[test]
    fn parse_errors_set_last_error() {
        unsafe {
            let mut machine: *mut TivmMachine = ptr::null_mut();
            let status = tivm_machine_parse(c("L0: blorp\n").as_ptr(), &mut machine);
            assert!(status == TivmStatus::ParseError);
            let msg = tivm_last_error();
            assert!(!msg.is_null());
            let msg = CStr::from_ptr(msg).to_str().unwrap();
            assert!(msg.contains("unknown instruction"), "{msg}");
            assert!(machine.is_null());
        }
    }

    #[test]
    fn null_arguments_are_rejected() {
        unsafe {
            let mut machine: *mut TivmMachine = ptr::null_mut();
            assert!(
                tivm_machine_parse(ptr::null(), &mut machine) == TivmStatus::InvalidArgument
            );
            assert!(tivm_machine_print(ptr::null()).is_null());
            let mut trace: *mut TivmTrace = ptr::null_mut();
            assert!(
                tivm_run(ptr::null(), ptr::null(), ptr::null(), &mut trace)
                    == TivmStatus::InvalidArgument
            );
            // Frees tolerate null.
            tivm_machine_free(ptr::null_mut());
            tivm_script_free(ptr::null_mut());
            tivm_trace_free(ptr::null_mut());
            tivm_string_free(ptr::null_mut());
        }
    }

    #[test]
    fn lower_repeat_and_print() {
        unsafe {
            let mut machine: *mut TivmMachine = ptr::null_mut();
            let src = c("L0: repeat (1 s) jump L1 for (2 s)\nL1: send \"t\"\nL2: stop\n");
            assert!(tivm_machine_parse(src.as_ptr(), &mut machine) == TivmStatus::Ok);
            let mut lowered: *mut TivmMachine = ptr::null_mut();
            assert!(tivm_machine_lower_repeat(machine, &mut lowered) == TivmStatus::Ok);
            let text = tivm_machine_print(lowered);
            let s = CStr::from_ptr(text).to_str().unwrap();
            assert!(s.contains("sustain"));
            assert!(s.contains("spawn0"));
            tivm_string_free(text);
            tivm_machine_free(lowered);
            tivm_machine_free(machine);
        }
    }

    #[test]
    fn observational_filter_over_the_abi() {
        unsafe {
            let mut machine: *mut TivmMachine = ptr::null_mut();
            let src = c("L0: emit s\nL1: send \"out\"\nL2: stop\n");
            assert!(tivm_machine_parse(src.as_ptr(), &mut machine) == TivmStatus::Ok);
            let mut trace: *mut TivmTrace = ptr::null_mut();
            assert!(
                tivm_run(machine, ptr::null(), ptr::null(), &mut trace) == TivmStatus::Ok
            );
            let obs = tivm_trace_observational(trace);
            let text = tivm_trace_write(obs);
            let s = CStr::from_ptr(text).to_str().unwrap();
            assert_eq!(s, "k=0 t=0.000000 b=0.000000 send out\n");
            tivm_string_free(text);
            tivm_trace_free(obs);
            tivm_trace_free(trace);
            tivm_machine_free(machine);
        }
    }
}

/* Minimal embedding example: assemble a program, run it against a scripted
 * environment, and print both the full and the observational trace.
 *
 * Build (after `cargo build -p tivm-ffi`):
 *   cc demo.c -I../include -L../../../target/debug -ltivm_ffi -lm -o demo
 */
#include <stdio.h>

#include "tivm.h"

static const char *program =
    ".inputs NOTE\n"
    "L0: asap L1 L2\n"
    "L1: receive NOTE jump L3\n"
    "L2: await (2 beats) jump L5\n"
    "L3: send \"note-first\"\n"
    "L4: stop\n"
    "L5: send \"timeout\"\n"
    "L6: stop\n";

static const char *events =
    ".tempo 120\n"
    "@0.4s input NOTE\n";

int main(void) {
  TivmMachine *machine = NULL;
  TivmScript *script = NULL;
  TivmTrace *trace = NULL;
  TivmTrace *observational = NULL;
  char *text = NULL;
  int rc = 1;

  if (tivm_machine_parse(program, &machine) != TIVM_STATUS_OK) {
    fprintf(stderr, "machine: %s\n", tivm_last_error());
    goto out;
  }
  if (tivm_script_parse(events, &script) != TIVM_STATUS_OK) {
    fprintf(stderr, "script: %s\n", tivm_last_error());
    goto out;
  }
  TivmRunConfig cfg = tivm_run_config_default();
  if (tivm_run(machine, script, &cfg, &trace) != TIVM_STATUS_OK) {
    fprintf(stderr, "run: %s\n", tivm_last_error());
    goto out;
  }

  text = tivm_trace_write(trace);
  printf("full trace:\n%s", text);
  tivm_string_free(text);

  observational = tivm_trace_observational(trace);
  text = tivm_trace_write(observational);
  printf("observational:\n%s", text);
  tivm_string_free(text);

  if (tivm_trace_termination(trace) != TIVM_TERMINATION_SUCCESS) {
    fprintf(stderr, "unexpected termination\n");
    goto out;
  }
  rc = 0;

out:
  tivm_trace_free(observational);
  tivm_trace_free(trace);
  tivm_script_free(script);
  tivm_machine_free(machine);
  return rc;
}

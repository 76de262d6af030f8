#pragma once

#include "repton/config.hpp"

namespace repton {

// Runs the configured experiment and writes its outputs (config.json,
// report.json, kind-specific CSV tables, state snapshots) under
// config.output_dir. Scientific outputs are deterministic functions of the
// config; wall-clock timestamps go to the run.log sidecar only.
//
// Returns the process exit status: 0 on success (including inconclusive
// verdicts), 2 when the experiment ran and its verdict failed, 1 when a
// trajectory aborted (partial outputs are written with incomplete = true).
// Configuration and I/O faults propagate as exceptions.
int run_experiment(const ExperimentConfig& cfg);

}  // namespace repton

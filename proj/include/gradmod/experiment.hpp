#pragma once

#include <iosfwd>
#include <string>

#include "gradmod/config.hpp"

namespace gradmod {

enum class Command { Invert, Baseline, Compare, Edit, Project, Selftest };

std::string to_string(Command c);
Command command_from_string(const std::string& s);

/// Runs one subcommand and writes its artifacts under config.output_dir:
///
///   config.ini            resolved configuration
///   target.ppm            image to invert
///   initial.ppm           G(w, theta) for the initial code
///   <arm>_final.ppm       G(w, theta') per arm
///   <arm>_trace.csv       per-iteration loss terms
///   metrics.csv           metric rows at the first and last iteration
///   <arm>_theta.gmodc     tuned generator parameters
///   gmm_psi.gmodc         trained modules (gmm arm)
///   compare.csv           per-arm summary (compare)
///   edit_*.ppm            edited images (edit)
///
/// With `dry_run` the resolved config is printed and nothing is written.
/// Returns the process exit code; errors are reported on `err`.
int run_experiment(const ExperimentConfig& config, Command command, bool dry_run, std::ostream& out,
                   std::ostream& err);

}  // namespace gradmod

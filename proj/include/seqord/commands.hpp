#pragma once
/** \file
 * The batch commands behind the command-line front end. Each reads a
 * RunConfig, writes its outputs atomically under `config.out`, and throws
 * DataError or ConvergenceError on failure.
 */

#include <iosfwd>

#include "seqord/io.hpp"

namespace seqord {

/// observations.csv, controls.csv, truth.json
void run_simulate(const RunConfig& config, std::ostream& log);
/// summary.csv, dic.csv and the fit archive
FitResult run_fit(const RunConfig& config, std::ostream& log);
/// predictions.csv
PredictionResult run_predict(const RunConfig& config, std::ostream& log);
/// dic.csv with one row per variant, ascending
std::vector<std::pair<std::string, double>> run_compare(const RunConfig& config, std::ostream& log);

}  // namespace seqord

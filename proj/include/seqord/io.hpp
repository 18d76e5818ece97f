#pragma once
/** \file
 * CSV and JSON input/output: observation and control tables, prediction
 * grids, run configuration, and the fit archive consumed by `predict`.
 */

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "seqord/fit.hpp"
#include "seqord/simulate.hpp"

namespace seqord {

namespace fs = std::filesystem;

/// Shortest "%.6g"-style rendering, independent of the process locale.
std::string format_number(double value);

/// Writes `content` to a temporary sibling and renames it over `path`.
void write_atomic(const fs::path& path, const std::string& content);
std::string read_file(const fs::path& path);

std::vector<Observation> parse_observations(const std::string& text, const std::string& source = "observations.csv");
std::vector<ControlEvent> parse_controls(const std::string& text, const std::string& source = "controls.csv");
std::string format_observations(const std::vector<Observation>& observations);
std::string format_controls(const std::vector<ControlEvent>& events);

struct GridTarget {
  V2d location;
  int year = 0;
  Habitat habitat = Habitat::grassland;
  double access_km = 1.0;
  int ctrl = 0;
  double duration = 0.0;
};

/// x_km,y_km,year,habitat,access_km[,ctrl,duration]
std::vector<GridTarget> parse_prediction_grid(const std::string& text, const std::string& source = "grid.csv");

/// Everything a command needs, with defaults for every field.
struct RunConfig {
  fs::path observations;
  fs::path controls;
  fs::path prediction_grid;
  fs::path fit_archive;  ///< defaults to <out>/fit.json
  fs::path out = ".";
  ModelSpec model = ModelSpec::defaults(5);
  FitOptions inference;
  std::vector<Variant> compare_variants{Variant::M1, Variant::M2, Variant::M3};
  std::optional<GroundTruth> truth;
  nlohmann::json source;  ///< the parsed file, for hashing

  /// Paths in the file are relative to the file's directory.
  static RunConfig load(const fs::path& path);
  static RunConfig from_json(const nlohmann::json& j, const fs::path& base = {});
  fs::path archive_path() const { return fit_archive.empty() ? out / "fit.json" : fit_archive; }
};

nlohmann::json model_to_json(const ModelSpec& spec);
nlohmann::json truth_to_json(const GroundTruth& truth);

/// FNV-1a 64 of the model settings and the bytes of the data files, as hex.
std::string config_hash(const RunConfig& config);

struct FitArchive {
  DesignLayout layout;
  std::vector<Hyperparameters> grid;
  std::vector<double> weights;
  PosteriorDraws draws;
  std::uint64_t seed = 0;
  std::string config_hash;
};

nlohmann::json archive_to_json(const FitArchive& archive);
FitArchive archive_from_json(const nlohmann::json& j);

std::string format_summary(const FitResult& fit);
std::string format_dic(const std::vector<std::pair<std::string, double>>& rows);

}  // namespace seqord

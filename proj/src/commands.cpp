#include "seqord/commands.hpp"

#include <algorithm>
#include <ostream>

namespace seqord {

namespace {

struct Dataset {
  std::vector<Observation> observations;
  std::vector<ControlEvent> controls;
};

Dataset load_data(const RunConfig& config) {
  if (config.observations.empty()) throw DataError("config: no observations file given");
  Dataset d;
  d.observations = parse_observations(read_file(config.observations), config.observations.string());
  if (!config.controls.empty()) d.controls = parse_controls(read_file(config.controls), config.controls.string());
  return d;
}

FitResult fit_variant(const Dataset& data, const RunConfig& config, Variant variant, std::ostream& log) {
  ModelSpec spec = config.model;
  spec.variant = variant;
  const ExpandedDesign design = build_design(data.observations, data.controls, spec);
  log << to_string(variant) << ": " << data.observations.size() << " observations, " << design.rows()
      << " binary rows, " << design.layout.knot_count() << " knots, latent dimension " << design.latent_dim() << "\n";
  FitResult result = fit(design, spec, config.inference);
  log << to_string(variant) << ": " << result.grid.size() << " grid points, DIC " << format_number(result.dic)
      << " (pD " << format_number(result.p_d) << ")\n";
  return result;
}

}  // namespace

void run_simulate(const RunConfig& config, std::ostream& log) {
  GroundTruth truth;
  if (config.truth) {
    truth = *config.truth;
  } else {
    truth.scale = config.model.scale;
    truth.link = config.model.link;
    truth.reference = config.model.reference_date;
    truth.beta_cuts = Vxd::LinSpaced(truth.scale.thresholds(), -1.0, 0.5);
    truth.beta_global = (Vxd(Covariates::size) << -0.5, 0.3, 0.1, 0.4, -0.2).finished();
    truth.seed = config.inference.seed;
  }
  const SimulatedData data = simulate_dataset(truth);
  write_atomic(config.out / "observations.csv", format_observations(data.observations));
  write_atomic(config.out / "controls.csv", format_controls(data.controls));
  nlohmann::json j = truth_to_json(truth);
  nlohmann::json field = nlohmann::json::array();
  for (Eigen::Index i = 0; i < data.field.rows(); ++i) {
    const Vxd row = data.field.row(i).transpose();
    field.push_back(std::vector<double>(row.data(), row.data() + row.size()));
  }
  j["field"] = field;
  write_atomic(config.out / "truth.json", j.dump(2) + "\n");
  log << "simulated " << data.observations.size() << " observations and " << data.controls.size()
      << " control events into " << config.out.string() << "\n";
}

FitResult run_fit(const RunConfig& config, std::ostream& log) {
  const Dataset data = load_data(config);
  FitResult result = fit_variant(data, config, config.model.variant, log);
  write_atomic(config.out / "summary.csv", format_summary(result));
  write_atomic(config.out / "dic.csv", format_dic({{to_string(config.model.variant), result.dic}}));

  FitArchive archive;
  archive.layout = result.layout;
  for (const auto& g : result.grid) {
    archive.grid.push_back(g.hyper);
    archive.weights.push_back(g.weight);
  }
  archive.draws = sample_posterior(result, config.inference.samples, derive_seed(config.inference.seed, 1),
                                   config.inference.threads);
  archive.seed = config.inference.seed;
  archive.config_hash = config_hash(config);
  write_atomic(config.archive_path(), archive_to_json(archive).dump() + "\n");
  return result;
}

PredictionResult run_predict(const RunConfig& config, std::ostream& log) {
  if (config.prediction_grid.empty()) throw DataError("config: no prediction_grid file given");
  const FitArchive archive = archive_from_json([&] {
    try {
      return nlohmann::json::parse(read_file(config.archive_path()));
    } catch (const nlohmann::json::parse_error& e) {
      throw DataError(config.archive_path().string() + ": " + e.what());
    }
  }());
  if (archive.config_hash != config_hash(config))
    throw DataError("fit archive " + config.archive_path().string() +
                    " was produced from a different model or data; refit first");
  const auto grid = parse_prediction_grid(read_file(config.prediction_grid), config.prediction_grid.string());

  std::vector<PredictionTarget> targets;
  for (const auto& g : grid)
    targets.push_back({g.location, g.year,
                       target_covariates(archive.layout, g.year, g.habitat, g.access_km, g.ctrl, g.duration)});
  const PredictionResult result = predict(archive.layout, archive.grid, archive.draws, targets, config.inference.seed);

  std::string s = "x_km,y_km,year,category,q0.05,q0.50,q0.95\n";
  const auto& labels = archive.layout.scale.labels();
  for (const auto& r : result.rows) {
    const auto& t = targets[r.target];
    s += format_number(t.location.x()) + "," + format_number(t.location.y()) + "," + std::to_string(t.year) + "," +
         labels[static_cast<std::size_t>(r.category - 1)] + "," + format_number(r.q05) + "," + format_number(r.q50) +
         "," + format_number(r.q95) + "\n";
  }
  write_atomic(config.out / "predictions.csv", s);
  log << "predicted " << targets.size() << " targets from " << archive.draws.theta.cols()
      << " draws; max |sum(pi) - 1| = " << format_number(result.max_sum_error) << "\n";
  return result;
}

std::vector<std::pair<std::string, double>> run_compare(const RunConfig& config, std::ostream& log) {
  if (config.compare_variants.size() < 2) throw DataError("config: compare needs at least two variants");
  const Dataset data = load_data(config);
  std::vector<std::pair<std::string, double>> rows;
  for (Variant v : config.compare_variants) {
    try {
      rows.emplace_back(to_string(v), fit_variant(data, config, v, log).dic);
    } catch (...) {
      log << "compare aborted at " << to_string(v) << "; partial results:\n" << format_dic(rows);
      throw;
    }
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.second < b.second; });
  write_atomic(config.out / "dic.csv", format_dic(rows));
  return rows;
}

}  // namespace seqord

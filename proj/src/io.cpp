#include "seqord/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <unistd.h>

namespace seqord {

using nlohmann::json;

std::string format_number(double value) {
  if (value == 0.0) value = 0.0;  // no "-0"
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, value, std::chars_format::general, 6);
  return std::string(buf, res.ptr);
}

void write_atomic(const fs::path& path, const std::string& content) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(::getpid());
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot write " + tmp.string());
    os << content;
    os.flush();
    if (!os) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw DataError("cannot open " + path.string());
  std::ostringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

namespace {

struct CsvRow {
  std::size_t line = 0;
  std::vector<std::string> fields;
};

std::string trim(std::string s) {
  const auto a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return {};
  const auto b = s.find_last_not_of(" \t\r");
  s = s.substr(a, b - a + 1);
  if (s.size() >= 2 && s.front() == '"' && s.back() == '"') s = s.substr(1, s.size() - 2);
  return s;
}

std::vector<std::string> split(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

// Header-checked table; blank lines are skipped.
class CsvTable {
 public:
  CsvTable(const std::string& text, std::string source, const std::vector<std::string>& required,
           const std::vector<std::string>& optional = {})
      : source_(std::move(source)) {
    std::istringstream in(text);
    std::string line;
    std::size_t lineno = 0;
    bool header = false;
    while (std::getline(in, line)) {
      ++lineno;
      if (trim(line).empty()) continue;
      auto fields = split(line);
      if (!header) {
        header = true;
        for (std::size_t i = 0; i < fields.size(); ++i) column_[fields[i]] = i;
        for (const auto& name : required)
          if (!column_.count(name)) fail(lineno, "missing column '" + name + "'");
        for (const auto& name : fields) {
          const bool known = std::find(required.begin(), required.end(), name) != required.end() ||
                             std::find(optional.begin(), optional.end(), name) != optional.end();
          if (!known) fail(lineno, "unexpected column '" + name + "'");
        }
        width_ = fields.size();
        continue;
      }
      if (fields.size() != width_)
        fail(lineno, "expected " + std::to_string(width_) + " fields, found " + std::to_string(fields.size()));
      rows_.push_back({lineno, std::move(fields)});
    }
    if (!header) fail(0, "empty file");
  }

  const std::vector<CsvRow>& rows() const { return rows_; }
  bool has(const std::string& name) const { return column_.count(name) > 0; }

  const std::string& text(const CsvRow& row, const std::string& name) const {
    const auto& v = row.fields[column_.at(name)];
    if (v.empty()) fail(row.line, "empty " + name);
    return v;
  }

  double number(const CsvRow& row, const std::string& name) const {
    const std::string& v = text(row, name);
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size() || !std::isfinite(out))
      fail(row.line, name + " '" + v + "' is not a finite number");
    return out;
  }

  int integer(const CsvRow& row, const std::string& name) const {
    const std::string& v = text(row, name);
    int out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
      fail(row.line, name + " '" + v + "' is not an integer");
    return out;
  }

  template <typename F>
  auto wrap(const CsvRow& row, F&& parse) const {
    try {
      return parse();
    } catch (const DataError& e) {
      fail(row.line, e.what());
    }
  }

  [[noreturn]] void fail(std::size_t line, const std::string& msg) const {
    throw DataError(source_ + (line ? ":" + std::to_string(line) : std::string()) + ": " + msg);
  }

 private:
  std::string source_;
  std::map<std::string, std::size_t> column_;
  std::size_t width_ = 0;
  std::vector<CsvRow> rows_;
};

}  // namespace

std::vector<Observation> parse_observations(const std::string& text, const std::string& source) {
  const CsvTable t(text, source, {"site_id", "x_km", "y_km", "year", "species", "score", "habitat", "access_km"});
  std::vector<Observation> out;
  for (const auto& row : t.rows()) {
    Observation o;
    o.site_id = t.text(row, "site_id");
    o.location = V2d(t.number(row, "x_km"), t.number(row, "y_km"));
    o.year = t.integer(row, "year");
    o.species = t.text(row, "species");
    o.score = t.integer(row, "score");
    o.habitat = t.wrap(row, [&] { return parse_habitat(t.text(row, "habitat")); });
    o.access_km = t.number(row, "access_km");
    if (o.access_km < 0.0) t.fail(row.line, "access_km must be non-negative");
    out.push_back(std::move(o));
  }
  if (out.empty()) t.fail(0, "no observations");
  return out;
}

std::vector<ControlEvent> parse_controls(const std::string& text, const std::string& source) {
  const CsvTable t(text, source, {"species", "site_id", "date"});
  std::vector<ControlEvent> out;
  for (const auto& row : t.rows())
    out.push_back({t.text(row, "species"), t.text(row, "site_id"),
                   t.wrap(row, [&] { return parse_date(t.text(row, "date")); })});
  return out;
}

std::vector<GridTarget> parse_prediction_grid(const std::string& text, const std::string& source) {
  const CsvTable t(text, source, {"x_km", "y_km", "year", "habitat", "access_km"}, {"ctrl", "duration"});
  std::vector<GridTarget> out;
  for (const auto& row : t.rows()) {
    GridTarget g;
    g.location = V2d(t.number(row, "x_km"), t.number(row, "y_km"));
    g.year = t.integer(row, "year");
    g.habitat = t.wrap(row, [&] { return parse_habitat(t.text(row, "habitat")); });
    g.access_km = t.number(row, "access_km");
    if (t.has("ctrl")) g.ctrl = t.integer(row, "ctrl");
    if (t.has("duration")) g.duration = t.number(row, "duration");
    if (g.ctrl != 0 && g.ctrl != 1) t.fail(row.line, "ctrl must be 0 or 1");
    out.push_back(g);
  }
  if (out.empty()) t.fail(0, "no grid points");
  return out;
}

std::string format_observations(const std::vector<Observation>& observations) {
  std::string s = "site_id,x_km,y_km,year,species,score,habitat,access_km\n";
  for (const auto& o : observations)
    s += o.site_id + "," + format_number(o.location.x()) + "," + format_number(o.location.y()) + "," +
         std::to_string(o.year) + "," + o.species + "," + std::to_string(o.score) + "," + to_string(o.habitat) + "," +
         format_number(o.access_km) + "\n";
  return s;
}

std::string format_controls(const std::vector<ControlEvent>& events) {
  std::string s = "species,site_id,date\n";
  for (const auto& e : events) s += e.species + "," + e.site_id + "," + format_date(e.date) + "\n";
  return s;
}

namespace {

json prior_to_json(const PCPrior& p) { return {{"u", p.u}, {"alpha", p.alpha}}; }

PCPrior prior_from_json(const json& j, PCPrior fallback) {
  return PCPrior(fallback.kind, j.value("u", fallback.u), j.value("alpha", fallback.alpha));
}

std::chrono::month_day parse_month_day(const std::string& s) {
  unsigned m = 0, d = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%u-%u%c", &m, &d, &tail) != 2)
    throw std::invalid_argument("reference_date '" + s + "' must be MM-DD");
  const std::chrono::month_day md{std::chrono::month{m}, std::chrono::day{d}};
  if (!md.ok()) throw std::invalid_argument("reference_date '" + s + "' is not a calendar day");
  return md;
}

std::string format_month_day(std::chrono::month_day md) {
  char buf[8];
  std::snprintf(buf, sizeof buf, "%02u-%02u", unsigned(md.month()), unsigned(md.day()));
  return buf;
}

fs::path resolve(const json& j, const char* key, const fs::path& base) {
  if (!j.contains(key)) return {};
  const fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() || base.empty() ? p : base / p;
}

Vxd vector_from_json(const json& j) {
  const auto v = j.get<std::vector<double>>();
  return Eigen::Map<const Vxd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

std::vector<double> vector_to_json(const Vxd& v) { return {v.data(), v.data() + v.size()}; }

GroundTruth truth_from_json(const json& j, const ModelSpec& model) {
  GroundTruth g;
  g.scale = model.scale;
  g.link = model.link;
  g.matern = MaternParams<double>(j.value("sigma", 1.0), j.value("range", 5.0));
  g.ar = ARParams<double>(j.value("rho", 0.9));
  const int q = g.scale.thresholds();
  if (j.contains("beta_cuts")) {
    g.beta_cuts = vector_from_json(j.at("beta_cuts"));
  } else {
    g.beta_cuts = Vxd::LinSpaced(q, -1.0, 0.5);
  }
  if (g.beta_cuts.size() != q) throw std::invalid_argument("truth: beta_cuts needs one entry per threshold");
  if (j.contains("beta_global")) {
    g.beta_global = vector_from_json(j.at("beta_global"));
  } else {
    g.beta_global = (Vxd(Covariates::size) << -0.5, 0.3, 0.1, 0.4, -0.2).finished();
  }
  if (g.beta_global.size() != Covariates::size) throw std::invalid_argument("truth: beta_global needs 5 entries");
  if (j.contains("sites")) {
    const auto& s = j.at("sites");
    if (s.is_array()) {
      Eigen::Matrix<double, Eigen::Dynamic, 2> xy(static_cast<Eigen::Index>(s.size()), 2);
      for (std::size_t i = 0; i < s.size(); ++i) {
        const auto p = s[i].get<std::vector<double>>();
        if (p.size() != 2) throw std::invalid_argument("truth: each site is [x_km, y_km]");
        xy(static_cast<Eigen::Index>(i), 0) = p[0];
        xy(static_cast<Eigen::Index>(i), 1) = p[1];
      }
      g.sites = KnotSet<double>(xy);
    } else {
      g.sites = GroundTruth::grid_sites(s.value("count", 40), s.value("extent_km", 20.0),
                                        s.value("seed", std::uint64_t{7}));
    }
  }
  g.species = j.value("species", g.species);
  g.year_min = j.value("year_min", g.year_min);
  g.years = j.value("years", g.years);
  g.obs_per_year = j.value("obs_per_year", g.obs_per_year);
  g.forest_prob = j.value("forest_prob", g.forest_prob);
  g.access_log_mean = j.value("access_log_mean", g.access_log_mean);
  g.access_log_sd = j.value("access_log_sd", g.access_log_sd);
  g.control_rate = j.value("control_rate", g.control_rate);
  g.reference = model.reference_date;
  return g;
}

}  // namespace

json model_to_json(const ModelSpec& spec) {
  return {{"categories", spec.scale.categories()},
          {"labels", spec.scale.labels()},
          {"link", to_string(spec.link)},
          {"variant", to_string(spec.variant)},
          {"max_knots", spec.max_knots},
          {"reference_date", format_month_day(spec.reference_date)},
          {"negate_globals", spec.negate_globals},
          {"priors",
           {{"sigma", prior_to_json(spec.priors.sigma)},
            {"range", prior_to_json(spec.priors.range)},
            {"rho", prior_to_json(spec.priors.rho)},
            {"coef_variance", spec.priors.coef_variance}}}};
}

json truth_to_json(const GroundTruth& g) {
  json sites = json::array();
  for (Eigen::Index i = 0; i < g.sites.size(); ++i) sites.push_back({g.sites[i].x(), g.sites[i].y()});
  return {{"sigma", g.matern.sigma},
          {"range", g.matern.range},
          {"rho", g.ar.rho},
          {"beta_cuts", vector_to_json(g.beta_cuts)},
          {"beta_global", vector_to_json(g.beta_global)},
          {"global_names", global_covariate_names()},
          {"sites", sites},
          {"categories", g.scale.categories()},
          {"link", to_string(g.link)},
          {"species", g.species},
          {"year_min", g.year_min},
          {"years", g.years},
          {"obs_per_year", g.obs_per_year},
          {"forest_prob", g.forest_prob},
          {"access_log_mean", g.access_log_mean},
          {"access_log_sd", g.access_log_sd},
          {"control_rate", g.control_rate},
          {"seed", g.seed}};
}

RunConfig RunConfig::load(const fs::path& path) {
  json j;
  try {
    j = json::parse(read_file(path));
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

RunConfig RunConfig::from_json(const json& j, const fs::path& base) {
  RunConfig c;
  c.source = j;
  try {
    c.observations = resolve(j, "observations", base);
    c.controls = resolve(j, "controls", base);
    c.prediction_grid = resolve(j, "prediction_grid", base);
    c.fit_archive = resolve(j, "fit_archive", base);
    if (j.contains("out")) c.out = resolve(j, "out", base);

    const json m = j.value("model", json::object());
    if (m.contains("labels")) {
      c.model.scale = OrdinalScale(m.at("labels").get<std::vector<std::string>>());
    } else {
      c.model.scale = OrdinalScale(m.value("categories", 5));
    }
    if (m.contains("categories") && m.at("categories").get<int>() != c.model.scale.categories())
      throw std::invalid_argument("model.categories disagrees with model.labels");
    c.model.priors = PriorSet::defaults(c.model.scale);
    c.model.link = parse_link(m.value("link", std::string("cloglog")));
    c.model.variant = parse_variant(m.value("variant", std::string("M3")));
    c.model.max_knots = m.value("max_knots", 0);
    c.model.negate_globals = m.value("negate_globals", true);
    if (m.contains("reference_date")) c.model.reference_date = parse_month_day(m.at("reference_date").get<std::string>());
    if (m.contains("priors")) {
      const json& p = m.at("priors");
      if (p.contains("sigma")) c.model.priors.sigma = prior_from_json(p.at("sigma"), c.model.priors.sigma);
      if (p.contains("range")) c.model.priors.range = prior_from_json(p.at("range"), c.model.priors.range);
      if (p.contains("rho")) c.model.priors.rho = prior_from_json(p.at("rho"), c.model.priors.rho);
      c.model.priors.coef_variance = p.value("coef_variance", c.model.priors.coef_variance);
    }

    const json inf = j.value("inference", json::object());
    FitOptions& o = c.inference;
    o.grid_z = inf.value("grid_z", o.grid_z);
    o.samples = inf.value("samples", o.samples);
    o.max_mode_evaluations = inf.value("max_mode_evaluations", o.max_mode_evaluations);
    o.hyper_marginal_draws = inf.value("hyper_marginal_draws", o.hyper_marginal_draws);
    o.init_sigma = inf.value("init_sigma", o.init_sigma);
    o.init_range = inf.value("init_range", o.init_range);
    o.init_rho = inf.value("init_rho", o.init_rho);
    o.fixed_hyper = inf.value("fixed_hyper", o.fixed_hyper);
    o.seed = j.value("seed", o.seed);
    o.threads = j.value("threads", o.threads);
    if (o.samples < 1) throw std::invalid_argument("inference.samples must be positive");
    if (o.threads < 1) throw std::invalid_argument("threads must be positive");
    if (o.grid_z.empty()) throw std::invalid_argument("inference.grid_z must not be empty");

    if (j.contains("compare")) {
      c.compare_variants.clear();
      for (const auto& v : j.at("compare").value("variants", std::vector<std::string>{}))
        c.compare_variants.push_back(parse_variant(v));
    }
    if (j.contains("truth")) {
      c.truth = truth_from_json(j.at("truth"), c.model);
      c.truth->seed = c.inference.seed;
    }
  } catch (const json::exception& e) {
    throw DataError(std::string("config: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("config: ") + e.what());
  }
  return c;
}

std::string config_hash(const RunConfig& config) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&h](const std::string& bytes) {
    for (unsigned char ch : bytes) {
      h ^= ch;
      h *= 1099511628211ull;
    }
    h ^= 0xff;
    h *= 1099511628211ull;
  };
  mix(model_to_json(config.model).dump());
  mix(config.observations.empty() ? std::string() : read_file(config.observations));
  mix(config.controls.empty() ? std::string() : read_file(config.controls));
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

json archive_to_json(const FitArchive& a) {
  const DesignLayout& L = a.layout;
  json knots = json::array();
  for (Eigen::Index i = 0; i < L.knots.rows(); ++i) knots.push_back({L.knots(i, 0), L.knots(i, 1)});
  json grid = json::array();
  for (std::size_t i = 0; i < a.grid.size(); ++i)
    grid.push_back({{"sigma", a.grid[i].sigma},
                    {"range", a.grid[i].range},
                    {"rho", a.grid[i].rho},
                    {"weight", a.weights.at(i)}});
  json theta = json::array();
  for (Eigen::Index s = 0; s < a.draws.theta.cols(); ++s) theta.push_back(vector_to_json(a.draws.theta.col(s)));
  return {{"format", "seqord-fit-1"},
          {"config_hash", a.config_hash},
          {"seed", a.seed},
          {"layout",
           {{"labels", L.scale.labels()},
            {"link", to_string(L.link)},
            {"variant", to_string(L.variant)},
            {"negate_globals", L.negate_globals},
            {"knots", knots},
            {"year_min", L.year_min},
            {"year_max", L.year_max},
            {"year_center", L.year_center},
            {"times", L.times}}},
          {"grid", grid},
          {"draws", {{"grid_index", a.draws.grid_index}, {"theta", theta}}}};
}

FitArchive archive_from_json(const json& j) {
  try {
    if (j.value("format", std::string()) != "seqord-fit-1") throw DataError("fit archive: unknown format");
    FitArchive a;
    a.config_hash = j.at("config_hash").get<std::string>();
    a.seed = j.at("seed").get<std::uint64_t>();
    const json& l = j.at("layout");
    DesignLayout& L = a.layout;
    L.scale = OrdinalScale(l.at("labels").get<std::vector<std::string>>());
    L.link = parse_link(l.at("link").get<std::string>());
    L.variant = parse_variant(l.at("variant").get<std::string>());
    L.negate_globals = l.at("negate_globals").get<bool>();
    const json& knots = l.at("knots");
    L.knots.resize(static_cast<Eigen::Index>(knots.size()), 2);
    for (std::size_t i = 0; i < knots.size(); ++i) {
      L.knots(static_cast<Eigen::Index>(i), 0) = knots[i].at(0).get<double>();
      L.knots(static_cast<Eigen::Index>(i), 1) = knots[i].at(1).get<double>();
    }
    L.year_min = l.at("year_min").get<int>();
    L.year_max = l.at("year_max").get<int>();
    L.year_center = l.at("year_center").get<double>();
    L.times = l.at("times").get<int>();
    for (const auto& g : j.at("grid")) {
      Hyperparameters h;
      h.variant = L.variant;
      h.sigma = g.at("sigma").get<double>();
      h.range = g.at("range").get<double>();
      h.rho = g.at("rho").get<double>();
      a.grid.push_back(h);
      a.weights.push_back(g.at("weight").get<double>());
    }
    const json& d = j.at("draws");
    a.draws.grid_index = d.at("grid_index").get<std::vector<int>>();
    const json& theta = d.at("theta");
    const Eigen::Index dim = L.coef_dim() + L.latent_dim();
    a.draws.theta.resize(dim, static_cast<Eigen::Index>(theta.size()));
    for (std::size_t s = 0; s < theta.size(); ++s) {
      const Vxd col = vector_from_json(theta[s]);
      if (col.size() != dim) throw DataError("fit archive: draw has the wrong dimension");
      a.draws.theta.col(static_cast<Eigen::Index>(s)) = col;
    }
    if (a.draws.grid_index.size() != theta.size()) throw DataError("fit archive: draw bookkeeping mismatch");
    for (int gi : a.draws.grid_index)
      if (gi < 0 || static_cast<std::size_t>(gi) >= a.grid.size()) throw DataError("fit archive: bad grid index");
    return a;
  } catch (const json::exception& e) {
    throw DataError(std::string("fit archive: ") + e.what());
  } catch (const std::invalid_argument& e) {
    throw DataError(std::string("fit archive: ") + e.what());
  }
}

std::string format_summary(const FitResult& fit) {
  std::string s = "parameter,q0.025,q0.50,q0.975\n";
  auto row = [&s](const ParameterSummary& p) {
    s += p.name + "," + format_number(p.q025) + "," + format_number(p.q50) + "," + format_number(p.q975) + "\n";
  };
  for (const auto& p : fit.coefficients) row(p);
  for (const auto& p : fit.hyperparameters) row(p);
  return s;
}

std::string format_dic(const std::vector<std::pair<std::string, double>>& rows) {
  std::string s = "model,DIC\n";
  for (const auto& [name, value] : rows) s += name + "," + format_number(value) + "\n";
  return s;
}

}  // namespace seqord

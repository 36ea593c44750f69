#include "lmekf/config.hpp"

#include <algorithm>
#include <fstream>
#include <stdexcept>

namespace lmekf {

namespace {
constexpr FilterKind kAllFilters[] = {FilterKind::Lmekf, FilterKind::Ekf,    FilterKind::Enkf,
                                      FilterKind::Pf,    FilterKind::Nleaf1, FilterKind::Nleaf2};
}

const std::vector<std::string>& filter_names() {
  static const std::vector<std::string> names = {"lmekf", "ekf", "enkf", "pf", "nleaf1", "nleaf2"};
  return names;
}

std::optional<FilterKind> parse_filter(const std::string& name) {
  const auto& names = filter_names();
  for (std::size_t i = 0; i < names.size(); ++i) {
    if (names[i] == name) return kAllFilters[i];
  }
  return std::nullopt;
}

std::size_t filter_index(FilterKind kind) { return static_cast<std::size_t>(kind); }

std::string to_string(FilterKind kind) { return filter_names()[filter_index(kind)]; }

std::optional<SystemKind> parse_system(const std::string& name) {
  if (name == "lorenz96") return SystemKind::Lorenz96;
  if (name == "fisher") return SystemKind::Fisher;
  return std::nullopt;
}

std::string to_string(SystemKind kind) { return kind == SystemKind::Lorenz96 ? "lorenz96" : "fisher"; }

int ExperimentConfig::resolved_time_steps() const {
  if (time_steps) return *time_steps;
  return system == SystemKind::Lorenz96 ? 40 : 60;
}

void ExperimentConfig::validate() const {
  if (ensemble_size < 2) throw std::invalid_argument("ensemble_size must be at least 2");
  if (trials < 1) throw std::invalid_argument("trials must be at least 1");
  if (resolved_time_steps() < 1) throw std::invalid_argument("time_steps must be at least 1");
  if (filters.empty()) throw std::invalid_argument("at least one filter is required");
  if (workers < 1) throw std::invalid_argument("workers must be at least 1");
  if (!(obs_scale > 0.0)) throw std::invalid_argument("observation.a must be positive");
  if (!(noise_dof > 2.0)) throw std::invalid_argument("observation.noise_dof must exceed 2");
  if (!(scale_floor > 0.0)) throw std::invalid_argument("observation.scale_floor must be positive");
  if (localization) {
    if (localization->half_width < 1 || localization->aggregation_half_width < 1 ||
        localization->aggregation_half_width > localization->half_width) {
      throw std::invalid_argument("localization needs 1 <= aggregation_half_width <= half_width");
    }
  }
  gd.validate();
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::invalid_argument("config must be a JSON object");
  ExperimentConfig cfg;
  for (const auto& [key, _] : j.items()) {
    static const std::vector<std::string> known = {
        "system", "theta", "ensemble_size", "trials", "time_steps", "filters", "localization",
        "localize_pf", "gd", "observation", "seed", "workers"};
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw std::invalid_argument("unknown config key '" + key + "'");
    }
  }
  try {
    const auto system = parse_system(j.at("system").get<std::string>());
    if (!system) throw std::invalid_argument("system must be 'lorenz96' or 'fisher'");
    cfg.system = *system;
    cfg.theta = j.value("theta", cfg.theta);
    cfg.ensemble_size = j.value("ensemble_size", cfg.ensemble_size);
    cfg.trials = j.value("trials", cfg.trials);
    if (j.contains("time_steps") && !j["time_steps"].is_null()) cfg.time_steps = j["time_steps"].get<int>();
    if (j.contains("filters")) {
      for (const auto& f : j["filters"]) {
        const auto kind = parse_filter(f.get<std::string>());
        if (!kind) throw std::invalid_argument("unknown filter '" + f.get<std::string>() + "'");
        cfg.filters.push_back(*kind);
      }
    } else {
      cfg.filters.assign(std::begin(kAllFilters), std::end(kAllFilters));
    }
    if (j.contains("localization") && !j["localization"].is_null()) {
      const auto& l = j["localization"];
      LocalizationSettings loc;
      loc.half_width = l.value("half_width", loc.half_width);
      loc.aggregation_half_width = l.value("aggregation_half_width", loc.aggregation_half_width);
      loc.cyclic = l.value("cyclic", loc.cyclic);
      cfg.localization = loc;
    }
    cfg.localize_pf = j.value("localize_pf", cfg.localize_pf);
    if (j.contains("gd")) {
      const auto& g = j["gd"];
      cfg.gd.step_size = g.value("step_size", cfg.gd.step_size);
      cfg.gd.window = g.value("window", cfg.gd.window);
      cfg.gd.threshold = g.value("threshold", cfg.gd.threshold);
      cfg.gd.max_iters = g.value("max_iters", cfg.gd.max_iters);
    }
    if (j.contains("observation")) {
      const auto& o = j["observation"];
      cfg.obs_scale = o.value("a", cfg.obs_scale);
      cfg.noise_dof = o.value("noise_dof", cfg.noise_dof);
      cfg.scale_floor = o.value("scale_floor", cfg.scale_floor);
    }
    cfg.seed = j.value("seed", cfg.seed);
    cfg.workers = j.value("workers", cfg.workers);
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument(std::string("malformed config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw std::invalid_argument("invalid JSON in " + path.string() + ": " + e.what());
  }
  return from_json(j);
}

nlohmann::json ExperimentConfig::to_json() const {
  nlohmann::json j;
  j["system"] = to_string(system);
  j["theta"] = theta;
  j["ensemble_size"] = ensemble_size;
  j["trials"] = trials;
  j["time_steps"] = resolved_time_steps();
  j["filters"] = nlohmann::json::array();
  for (const auto f : filters) j["filters"].push_back(to_string(f));
  if (localization) {
    j["localization"] = {{"half_width", localization->half_width},
                         {"aggregation_half_width", localization->aggregation_half_width},
                         {"cyclic", localization->cyclic}};
  } else {
    j["localization"] = nullptr;
  }
  j["localize_pf"] = localize_pf;
  j["gd"] = {{"step_size", gd.step_size}, {"window", gd.window}, {"threshold", gd.threshold},
             {"max_iters", gd.max_iters}};
  j["observation"] = {{"a", obs_scale}, {"noise_dof", noise_dof}, {"scale_floor", scale_floor}};
  j["seed"] = seed;
  j["workers"] = workers;
  return j;
}

}  // namespace lmekf

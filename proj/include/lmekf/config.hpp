#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "lmekf/kld_optimizer.hpp"

namespace lmekf {

enum class SystemKind { Lorenz96, Fisher };

enum class FilterKind { Lmekf, Ekf, Enkf, Pf, Nleaf1, Nleaf2 };

/// Canonical filter names, in the order used for random substreams.
const std::vector<std::string>& filter_names();
std::optional<FilterKind> parse_filter(const std::string& name);
std::string to_string(FilterKind kind);
std::size_t filter_index(FilterKind kind);

std::optional<SystemKind> parse_system(const std::string& name);
std::string to_string(SystemKind kind);

/// Localization as configured; the state dimension comes from the system.
struct LocalizationSettings {
  int half_width = 3;
  int aggregation_half_width = 2;
  bool cyclic = false;
};

/// Declarative twin-experiment description.
///
/// JSON keys (all optional except "system"):
///   system            "lorenz96" | "fisher"
///   theta             observation noise exponent (default 0)
///   ensemble_size     M (default 100)
///   trials            (default 20)
///   time_steps        T (default 40 for lorenz96, 60 for fisher)
///   filters           subset of filter_names() (default: all)
///   localization      null or {half_width, aggregation_half_width, cyclic}
///   localize_pf       apply localization to the particle filter too (default false)
///   gd                {step_size, window, threshold, max_iters}
///   observation       {a, noise_dof, scale_floor}
///   seed              root seed (default 0)
///   workers           trial-level threads (default 1)
struct ExperimentConfig {
  SystemKind system = SystemKind::Lorenz96;
  double theta = 0.0;
  int ensemble_size = 100;
  int trials = 20;
  std::optional<int> time_steps;
  std::vector<FilterKind> filters;
  std::optional<LocalizationSettings> localization;
  bool localize_pf = false;
  GdConfig gd;
  double obs_scale = 1.0;
  double noise_dof = 6.0;
  double scale_floor = 1e-8;
  std::uint64_t seed = 0;
  int workers = 1;

  int resolved_time_steps() const;
  /// Throws std::invalid_argument describing the first invalid field.
  void validate() const;

  static ExperimentConfig from_json(const nlohmann::json& j);
  static ExperimentConfig load(const std::filesystem::path& path);
  nlohmann::json to_json() const;
};

}  // namespace lmekf

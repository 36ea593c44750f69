#include "lmekf/localization.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

#include "lmekf/errors.hpp"

namespace lmekf {

void LocalizationConfig::validate() const {
  if (half_width < 1) throw std::invalid_argument("LocalizationConfig: half_width must be positive");
  if (aggregation_half_width < 1) {
    throw std::invalid_argument("LocalizationConfig: aggregation_half_width must be positive");
  }
  if (aggregation_half_width > half_width) {
    throw std::invalid_argument("LocalizationConfig: aggregation_half_width must not exceed half_width");
  }
  if (state_dim < 1) throw std::invalid_argument("LocalizationConfig: state_dim must be positive");
}

namespace {

// Indices i-h..i+h, clamped to [0, d) or wrapped modulo d; never repeats an
// index when the window covers the whole ring.
std::vector<Index> neighbourhood(Index i, Index h, Index d, bool cyclic) {
  std::vector<Index> out;
  if (!cyclic || 2 * h + 1 >= d) {
    if (cyclic) {
      out.resize(static_cast<std::size_t>(d));
      for (Index j = 0; j < d; ++j) out[static_cast<std::size_t>(j)] = j;
      return out;
    }
    for (Index j = std::max<Index>(0, i - h); j <= std::min<Index>(d - 1, i + h); ++j) out.push_back(j);
    return out;
  }
  for (Index off = -h; off <= h; ++off) out.push_back(((i + off) % d + d) % d);
  return out;
}

}  // namespace

std::vector<std::vector<Index>> windows(const LocalizationConfig& cfg) {
  cfg.validate();
  std::vector<std::vector<Index>> out;
  out.reserve(static_cast<std::size_t>(cfg.state_dim));
  for (Index i = 0; i < cfg.state_dim; ++i) {
    out.push_back(neighbourhood(i, cfg.half_width, cfg.state_dim, cfg.cyclic));
  }
  return out;
}

std::vector<Index> contributing_windows(const LocalizationConfig& cfg, Index i) {
  return neighbourhood(i, cfg.aggregation_half_width, cfg.state_dim, cfg.cyclic);
}

StateEnsemble localized_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                               const LocalizationConfig& cfg, const LocalUpdate& inner, RandomStream& rng) {
  if (cfg.state_dim != prior_ens.dim() || y.size() != prior_ens.dim() || obs.obs_dim() != prior_ens.dim()) {
    throw std::invalid_argument("localized_update: observation components must align with state components");
  }
  const auto sets = windows(cfg);
  const Index d = prior_ens.dim();
  const Index m = prior_ens.size();

  // Local results, plus each window's position lookup for component i.
  std::vector<Matrix> local(sets.size());
  for (std::size_t w = 0; w < sets.size(); ++w) {
    const std::vector<Index>& idx = sets[w];
    const StateEnsemble window_ens(prior_ens.members()(idx, Eigen::all));
    const auto window_obs = obs.restrict_to(idx);
    const Vector window_y = y(idx);
    RandomStream window_rng = rng.split(w);
    try {
      StateEnsemble updated = inner(window_ens, *window_obs, window_y, window_rng, w);
      if (updated.dim() != window_ens.dim() || updated.size() != m) {
        throw FilterError("inner update changed the ensemble shape");
      }
      local[w] = updated.members();
    } catch (const std::exception& e) {
      throw FilterError("localized_update: window " + std::to_string(w + 1) + " failed: " + e.what());
    }
  }

  // Average as ref + sum(v - ref) / n so identical contributions reproduce
  // the shared value exactly.
  Matrix out(d, m);
  for (Index i = 0; i < d; ++i) {
    const std::vector<Index> from = contributing_windows(cfg, i);
    auto value_in = [&](Index w) {
      const std::vector<Index>& idx = sets[static_cast<std::size_t>(w)];
      const auto pos = std::find(idx.begin(), idx.end(), i) - idx.begin();
      return local[static_cast<std::size_t>(w)].row(pos);
    };
    const Eigen::RowVectorXd ref = value_in(from.front());
    Eigen::RowVectorXd acc = Eigen::RowVectorXd::Zero(m);
    for (std::size_t j = 1; j < from.size(); ++j) {
      acc += value_in(from[j]) - ref;
    }
    out.row(i) = ref + acc / static_cast<double>(from.size());
  }
  return StateEnsemble(std::move(out));
}

}  // namespace lmekf

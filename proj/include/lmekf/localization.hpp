#pragma once

#include <cstddef>
#include <functional>
#include <vector>

#include "lmekf/ensemble.hpp"
#include "lmekf/observation.hpp"
#include "lmekf/random.hpp"

namespace lmekf {

/// Sliding-window localization settings.
///
/// Window i (1-based) covers N_i = [max(1, i-l) : min(i+l, d)]. Component i
/// is the average of its updated values in windows N_j for
/// j in [max(1, i-k), min(i+k, d)]. With `cyclic` set, both ranges wrap
/// around the state instead of being clamped.
struct LocalizationConfig {
  int half_width = 1;              ///< l
  int aggregation_half_width = 1;  ///< k, at most l
  Index state_dim = 1;             ///< d
  bool cyclic = false;

  void validate() const;
};

/// Window index sets, stored 0-based (window i holds the 0-based indices of
/// N_{i+1}).
std::vector<std::vector<Index>> windows(const LocalizationConfig& cfg);

/// Windows whose updates are averaged into component i (0-based).
std::vector<Index> contributing_windows(const LocalizationConfig& cfg, Index i);

/// Update applied to one window: restricted ensemble, restricted observation
/// model, restricted observation, a window-specific random substream and the
/// 0-based window index.
using LocalUpdate = std::function<StateEnsemble(const StateEnsemble&, const ObservationModel&, const Vector&,
                                                RandomStream&, std::size_t)>;

/// Runs `inner` on every window and averages the overlapping results.
/// Window w draws from rng.split(w). A failing window rethrows as FilterError
/// naming the window.
StateEnsemble localized_update(const StateEnsemble& prior_ens, const ObservationModel& obs, const Vector& y,
                               const LocalizationConfig& cfg, const LocalUpdate& inner, RandomStream& rng);

}  // namespace lmekf

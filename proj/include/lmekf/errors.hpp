#pragma once

#include <stdexcept>
#include <string>

namespace lmekf {

/// Runtime failure of a filter update (degenerate weights, singular
/// covariance, optimizer abort). The harness records these per trial instead
/// of aborting the process; precondition violations use std::invalid_argument.
class FilterError : public std::runtime_error {
 public:
  explicit FilterError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace lmekf

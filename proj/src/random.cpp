#include "lmekf/random.hpp"

namespace lmekf {

namespace {
constexpr std::uint64_t kGoldenGamma = 0x9E3779B97F4A7C15ULL;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += kGoldenGamma;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

RandomStream::RandomStream(std::uint64_t seed) : seed_(seed), engine_(splitmix64(seed)) {}

RandomStream RandomStream::split(std::uint64_t key) const {
  return RandomStream(splitmix64(splitmix64(seed_) ^ splitmix64(key + kGoldenGamma)));
}

double RandomStream::normal() { return normal_(engine_); }

double RandomStream::uniform(double lo, double hi) {
  return std::uniform_real_distribution<double>(lo, hi)(engine_);
}

double RandomStream::student_t(double dof) {
  if (student_.n() != dof) {
    student_ = std::student_t_distribution<double>(dof);
  }
  return student_(engine_);
}

}  // namespace lmekf

#include "oto/rng.hpp"

#include <cmath>

#include "oto/errors.hpp"

namespace oto::rng {

double CounterRng::normal() {
  // 1 - u1 lies in (0, 1], so the log is finite.
  const double u1 = u01();
  const double u2 = u01();
  const double r = std::sqrt(-2.0 * std::log(1.0 - u1));
  return r * std::cos(2.0 * M_PI * u2);
}

std::int64_t CounterRng::uniform_int(std::int64_t lo, std::int64_t hi) {
  if (lo > hi) throw InvalidArgument("uniform_int: empty range");
  const auto range = static_cast<std::uint64_t>(hi) - static_cast<std::uint64_t>(lo) + 1;
  const auto wide = static_cast<unsigned __int128>(next_u64()) * range;
  return lo + static_cast<std::int64_t>(static_cast<std::uint64_t>(wide >> 64));
}

std::uint64_t CounterRng::geometric(double p) {
  if (!(p > 0.0 && p < 1.0)) throw InvalidArgument("geometric: p must be in (0,1)");
  const double u = u01();
  return static_cast<std::uint64_t>(std::floor(std::log(1.0 - u) / std::log(1.0 - p)));
}

}  // namespace oto::rng

#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace gnepmpc {

/// Seeded stream of standard normal draws (Box-Muller with cached spare).
/// The draw count per call is fixed, so identical seeds reproduce identical
/// sequences bit for bit.
class GaussianStream {
 public:
  explicit GaussianStream(std::uint64_t seed) : eng_(seed) {}

  double next() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    const double u1 = uniform_open();
    const double u2 = uniform_open();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * 3.14159265358979323846 * u2;
    spare_ = r * std::sin(th);
    has_spare_ = true;
    return r * std::cos(th);
  }

 private:
  double uniform_open() {  // maps to (0, 1]
    return (static_cast<double>(eng_()) + 1.0) * 0x1p-64;
  }
  std::mt19937_64 eng_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

}  // namespace gnepmpc

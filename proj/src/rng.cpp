#include "latreg/rng.hpp"

#include <cmath>

namespace latreg {

std::uint64_t mix_key(std::uint64_t key, std::uint64_t tag) {
  // splitmix64 step applied to key xor golden-ratio-scrambled tag.
  std::uint64_t z = key ^ (tag + 0x9e3779b97f4a7c15ULL + (key << 6) + (key >> 2));
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

Rng::Rng(std::uint64_t key) : key_(key), engine_(key) {}

Rng Rng::fork(std::uint64_t tag) const { return Rng(mix_key(key_, tag)); }

std::uint64_t Rng::next_u64() { return engine_(); }

double Rng::uniform() {
  return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform_pos() {
  return (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
}

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  const double u1 = uniform_pos();
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * M_PI * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_ = true;
  return r * std::cos(theta);
}

}  // namespace latreg

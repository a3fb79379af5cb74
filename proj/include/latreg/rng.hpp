#pragma once

#include <cstdint>
#include <random>

namespace latreg {

/// Deterministic RNG with keyed substreams.
///
/// A stream is identified by a 64-bit key derived from a master seed and a
/// path of tags (purpose, iteration, block index, ...).  Forking the same
/// path always yields the same stream, independent of draw order elsewhere,
/// which is what makes per-block and per-replicate work reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t key);

  /// Child stream whose key mixes this stream's key with `tag`.
  /// Forking does not disturb the parent's state.
  Rng fork(std::uint64_t tag) const;

  std::uint64_t key() const { return key_; }

  std::uint64_t next_u64();

  /// Uniform on [0,1), 53-bit resolution.
  double uniform();

  /// Uniform on (0,1]; never returns zero.
  double uniform_pos();

  /// Standard normal (Box-Muller, pairs cached).
  double normal();

 private:
  std::uint64_t key_;
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

/// splitmix64 finalizer; mixes a key with a tag into a new key.
std::uint64_t mix_key(std::uint64_t key, std::uint64_t tag);

/// Stream purpose tags.  Values are part of the determinism contract:
/// changing them changes every derived stream.
namespace stream {
inline constexpr std::uint64_t kChainInit = 0x01;
inline constexpr std::uint64_t kChainStep = 0x02;
inline constexpr std::uint64_t kNoise = 0x03;
inline constexpr std::uint64_t kEStepA = 0x04;
inline constexpr std::uint64_t kEStepF = 0x05;
inline constexpr std::uint64_t kResample = 0x06;
inline constexpr std::uint64_t kReplicate = 0x07;
inline constexpr std::uint64_t kHellingerMc = 0x08;
inline constexpr std::uint64_t kTailCheck = 0x09;
}  // namespace stream

}  // namespace latreg

#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace convlab {

/// Splittable, counter-addressed random stream.
///
/// Every draw is a pure function of (key, counter), and split(label) derives a
/// child key from (key, label). Replaying a stream with the same seed and split
/// path therefore yields identical draws, independent of what other streams do.
/// The construction follows the SplitMix design (Steele, Lea, Flood 2014):
/// draw i of a stream is mix64(key + i * gamma) with a per-stream odd gamma.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed);

  RngStream split(std::uint64_t label) const;
  RngStream split(std::string_view label) const;

  std::uint64_t next_u64();
  /// Uniform draw in (0, 1].
  double next_uniform();
  /// Standard normal draw (Box-Muller; pairs are cached per stream).
  double next_normal();

  std::uint64_t seed() const { return seed_; }
  std::uint64_t counter() const { return counter_; }
  /// Human-readable split path, e.g. "root/chain-sim/7/layer-1".
  const std::string& path() const { return path_; }

 private:
  RngStream(std::uint64_t seed, std::uint64_t key, std::string path);

  std::uint64_t seed_ = 0;
  std::uint64_t key_ = 0;
  std::uint64_t gamma_ = 0;
  std::uint64_t counter_ = 0;
  std::string path_;
  double cached_normal_ = 0.0;
  bool has_cached_normal_ = false;
};

}  // namespace convlab

#include "convlab/rng.hpp"

#include <cmath>

namespace convlab {
namespace {

constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ull;

std::uint64_t mix64(std::uint64_t z) {
  z += kGolden;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t derive_gamma(std::uint64_t key) {
  return mix64(key ^ 0xDA3E39CB94B95BDBull) | 1ull;
}

}  // namespace

RngStream::RngStream(std::uint64_t seed)
    : RngStream(seed, mix64(seed ^ 0x5851F42D4C957F2Dull), "root") {}

RngStream::RngStream(std::uint64_t seed, std::uint64_t key, std::string path)
    : seed_(seed), key_(key), gamma_(derive_gamma(key)), path_(std::move(path)) {}

RngStream RngStream::split(std::uint64_t label) const {
  std::uint64_t child = mix64(key_ ^ mix64(label ^ 0x632BE59BD9B4E019ull));
  return RngStream(seed_, child, path_ + "/" + std::to_string(label));
}

RngStream RngStream::split(std::string_view label) const {
  std::uint64_t child = mix64(key_ ^ mix64(fnv1a(label)));
  return RngStream(seed_, child, path_ + "/" + std::string(label));
}

std::uint64_t RngStream::next_u64() {
  ++counter_;
  return mix64(key_ + counter_ * gamma_);
}

double RngStream::next_uniform() {
  // 53 significant bits, shifted into (0, 1].
  return static_cast<double>((next_u64() >> 11) + 1) * 0x1p-53;
}

double RngStream::next_normal() {
  if (has_cached_normal_) {
    has_cached_normal_ = false;
    return cached_normal_;
  }
  double u1 = next_uniform();
  double u2 = next_uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 6.283185307179586476925286766559 * u2;
  cached_normal_ = r * std::sin(theta);
  has_cached_normal_ = true;
  return r * std::cos(theta);
}

}  // namespace convlab

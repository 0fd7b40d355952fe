#include "mhdshred/common.hpp"

namespace mhdshred {

std::string_view field_label(FieldKind f) {
  switch (f) {
    case FieldKind::Temperature: return "T";
    case FieldKind::Velocity: return "u";
    case FieldKind::Pressure: return "p";
  }
  return "?";
}

FieldKind field_from_label(std::string_view label) {
  if (label == "T") return FieldKind::Temperature;
  if (label == "u") return FieldKind::Velocity;
  if (label == "p") return FieldKind::Pressure;
  fail(ErrorKind::InvalidArgument, "unknown field label '" + std::string(label) + "'");
}

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n) {
  if (n == 0) fail(ErrorKind::InvalidArgument, "uniform_index: empty range");
  // Rejection on the largest multiple of n keeps the draw unbiased.
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                              std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t x;
  do {
    x = rng();
  } while (x >= limit);
  return x % n;
}

double uniform_unit(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

}  // namespace mhdshred

#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <limits>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mhdshred {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Physical fields carried through compression, learning and evaluation.
enum class FieldKind : int { Temperature = 0, Velocity = 1, Pressure = 2 };

inline constexpr std::array<FieldKind, 3> kAllFields = {
    FieldKind::Temperature, FieldKind::Velocity, FieldKind::Pressure};

std::string_view field_label(FieldKind f);
FieldKind field_from_label(std::string_view label);

/// Failure categories. The CLI maps each onto a distinct exit status.
enum class ErrorKind {
  InvalidArgument,
  Geometry,
  BlowUp,
  LinearSolver,
  ShapeMismatch,
  Integrity,
  Config,
  Io,
  Training,
  Acceptance,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& what)
      : std::runtime_error(what), kind_(kind) {}
  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
  throw Error(kind, what);
}

/// splitmix64 finalizer; used to derive independent child seeds.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream);

// The std distributions are implementation-defined, so draws that must be
// reproducible across toolchains go through these two helpers.

/// Unbiased integer in [0, n).
std::uint64_t uniform_index(std::mt19937_64& rng, std::uint64_t n);
/// Double in [0, 1) with 53 random bits.
double uniform_unit(std::mt19937_64& rng);

}  // namespace mhdshred

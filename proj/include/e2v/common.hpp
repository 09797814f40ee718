#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace e2v {

using Index = std::ptrdiff_t;
using Index3 = std::array<Index, 3>;

enum class Errc {
  // events
  NonMonotoneTimestamp,
  OutOfBoundsCoordinate,
  InvalidPolarity,
  TimestampOutOfRange,
  ZeroWindow,
  NonDivisibleDimensions,
  // voxelkit
  MalformedLine,
  IndexOutOfRange,
  EmptyMesh,
  DegenerateExtent,
  ResolutionZero,
  ThresholdOutOfRange,
  ResolutionMismatch,
  NonPositiveDistance,
  // tensornet / model
  ShapeMismatch,
  ZeroBatchVolume,
  ChannelMismatch,
  // trainer
  StateShapeMismatch,
  EmptyDataset,
  ShapeInconsistency,
  CheckpointMismatch,
  // evsim
  TimeOutOfRange,
  ContrastNonPositive,
  FrameDimMismatch,
  InvalidSceneSpec,
  // io / config
  IoFailure,
  BadFormat,
  ConfigError,
};

const char* errc_name(Errc code) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& what)
      : std::runtime_error(std::string(errc_name(code)) + ": " + what), code_(code) {}

  Errc code() const noexcept { return code_; }

 private:
  Errc code_;
};

/// Seeded xorshift64* generator. Output is a pure function of the seed on
/// every platform, which keeps initial weights and shuffles reproducible.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) {
    // splitmix64 scramble so that small seeds still give well-mixed state
    std::uint64_t z = seed + 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    state_ = z ^ (z >> 31);
    if (state_ == 0) state_ = 0x2545F4914F6CDD1Dull;
  }

  std::uint64_t next_u64() {
    state_ ^= state_ >> 12;
    state_ ^= state_ << 25;
    state_ ^= state_ >> 27;
    return state_ * 0x2545F4914F6CDD1Dull;
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(next_u64()) * n) >> 64);
  }

 private:
  std::uint64_t state_;
};

/// Mixes several integers into one 64-bit seed (order sensitive).
inline std::uint64_t mix_seed(std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = a * 0x9E3779B97F4A7C15ull + b + 0x632BE59BD9B4E019ull;
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
  return z ^ (z >> 31);
}

/// Number of fixed-width windows covering [0, span]; ratios within 1e-9 of an
/// integer are snapped so that e.g. 0.5 / 0.005 counts exactly 100.
Index window_count(double span, double window);

/// Index of the half-open window [k*window, (k+1)*window) holding t, using the
/// same snapping as window_count.
Index window_index(double t, double window);

}  // namespace e2v

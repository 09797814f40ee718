#include "e2v/common.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "binary_io.hpp"

namespace e2v {

const char* errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::NonMonotoneTimestamp: return "NonMonotoneTimestamp";
    case Errc::OutOfBoundsCoordinate: return "OutOfBoundsCoordinate";
    case Errc::InvalidPolarity: return "InvalidPolarity";
    case Errc::TimestampOutOfRange: return "TimestampOutOfRange";
    case Errc::ZeroWindow: return "ZeroWindow";
    case Errc::NonDivisibleDimensions: return "NonDivisibleDimensions";
    case Errc::MalformedLine: return "MalformedLine";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::EmptyMesh: return "EmptyMesh";
    case Errc::DegenerateExtent: return "DegenerateExtent";
    case Errc::ResolutionZero: return "ResolutionZero";
    case Errc::ThresholdOutOfRange: return "ThresholdOutOfRange";
    case Errc::ResolutionMismatch: return "ResolutionMismatch";
    case Errc::NonPositiveDistance: return "NonPositiveDistance";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::ZeroBatchVolume: return "ZeroBatchVolume";
    case Errc::ChannelMismatch: return "ChannelMismatch";
    case Errc::StateShapeMismatch: return "StateShapeMismatch";
    case Errc::EmptyDataset: return "EmptyDataset";
    case Errc::ShapeInconsistency: return "ShapeInconsistency";
    case Errc::CheckpointMismatch: return "CheckpointMismatch";
    case Errc::TimeOutOfRange: return "TimeOutOfRange";
    case Errc::ContrastNonPositive: return "ContrastNonPositive";
    case Errc::FrameDimMismatch: return "FrameDimMismatch";
    case Errc::InvalidSceneSpec: return "InvalidSceneSpec";
    case Errc::IoFailure: return "IoFailure";
    case Errc::BadFormat: return "BadFormat";
    case Errc::ConfigError: return "ConfigError";
  }
  return "Unknown";
}

namespace {

double snapped_ratio(double a, double b) {
  const double q = a / b;
  const double r = std::round(q);
  if (std::abs(q - r) <= 1e-9 * std::max(1.0, std::abs(q))) return r;
  return q;
}

}  // namespace

Index window_count(double span, double window) {
  return static_cast<Index>(std::ceil(snapped_ratio(span, window)));
}

Index window_index(double t, double window) {
  return static_cast<Index>(std::floor(snapped_ratio(t, window)));
}

namespace detail {

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(Errc::IoFailure, "cannot open " + path);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const std::string& path, const std::vector<std::uint8_t>& data) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error(Errc::IoFailure, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size()));
  if (!out) throw Error(Errc::IoFailure, "write failed for " + path);
}

}  // namespace detail
}  // namespace e2v

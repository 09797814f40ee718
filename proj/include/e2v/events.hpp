#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "e2v/common.hpp"

namespace e2v {

/// One brightness-change record from an M x N sensor.
struct Event {
  std::int32_t x = 0;  ///< pixel column, 0..M-1
  std::int32_t y = 0;  ///< pixel row, 0..N-1
  double t = 0.0;      ///< seconds
  std::int32_t p = 1;  ///< polarity, +1 or -1

  bool operator==(const Event&) const = default;
};

/// A validated, time-ordered event sequence. Only validate_stream and
/// read_event_file produce one, so holders may rely on the invariants.
class EventStream {
 public:
  EventStream() = default;

  std::int32_t width() const { return width_; }
  std::int32_t height() const { return height_; }
  double duration() const { return duration_; }
  const std::vector<Event>& events() const { return events_; }
  std::size_t size() const { return events_.size(); }
  bool empty() const { return events_.empty(); }

  bool operator==(const EventStream&) const = default;

 private:
  friend EventStream validate_stream(std::vector<Event>, std::int32_t, std::int32_t, double);

  std::int32_t width_ = 0;
  std::int32_t height_ = 0;
  double duration_ = 0.0;
  std::vector<Event> events_;
};

/// Checks every stream invariant and returns the stream with input order preserved.
EventStream validate_stream(std::vector<Event> raw, std::int32_t width, std::int32_t height,
                            double duration);

enum class BinningMode { uniform, anchored };

class BinningConfig {
 public:
  /// target_height/width of 0 keep the sensor resolution.
  BinningConfig(double window, BinningMode mode = BinningMode::uniform, Index target_height = 0,
                Index target_width = 0);

  double window() const { return window_; }
  BinningMode mode() const { return mode_; }
  Index target_height() const { return target_height_; }
  Index target_width() const { return target_width_; }

 private:
  double window_;
  BinningMode mode_;
  Index target_height_;
  Index target_width_;
};

/// D binary event frames of H x W, stored frame-major with x fastest.
struct FrameStack {
  Index depth = 0;
  Index height = 0;
  Index width = 0;
  double window = 0.0;
  std::vector<std::uint8_t> cells;

  FrameStack() = default;
  FrameStack(Index d, Index h, Index w, double window_)
      : depth(d), height(h), width(w), window(window_),
        cells(static_cast<std::size_t>(d * h * w), 0) {}

  std::uint8_t& at(Index k, Index v, Index u) { return cells[offset(k, v, u)]; }
  std::uint8_t at(Index k, Index v, Index u) const { return cells[offset(k, v, u)]; }
  std::size_t offset(Index k, Index v, Index u) const {
    return static_cast<std::size_t>((k * height + v) * width + u);
  }

  /// Number of set cells in frame k.
  Index popcount(Index k) const;

  bool operator==(const FrameStack&) const = default;
};

/// Accumulates events into binary frames. In uniform mode frame k covers
/// [k*dt, (k+1)*dt) and exactly ceil(T/dt) frames are emitted (an event at t == T
/// falls into the last frame). In anchored mode a frame opens at the first event
/// after the previous one closed and keeps events with t_i - t_open <= dt.
FrameStack bin_to_frames(const EventStream& stream, const BinningConfig& cfg);

/// Binary OR pooling over factor x factor blocks.
FrameStack downscale_frames(const FrameStack& stack, Index factor);

// EVT1 codec
std::vector<std::uint8_t> encode_event_stream(const EventStream& stream);
EventStream decode_event_stream(const std::vector<std::uint8_t>& bytes,
                                const std::string& context = "EVT1");
void write_event_file(const std::string& path, const EventStream& stream);
EventStream read_event_file(const std::string& path);

// FRM1 frame cache: magic, u32 D, u32 H, u32 W, f64 window, bit-packed cells.
std::vector<std::uint8_t> encode_frame_stack(const FrameStack& stack);
FrameStack decode_frame_stack(const std::vector<std::uint8_t>& bytes,
                              const std::string& context = "FRM1");
void write_frame_file(const std::string& path, const FrameStack& stack);
FrameStack read_frame_file(const std::string& path);

}  // namespace e2v

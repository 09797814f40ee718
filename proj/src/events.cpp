#include "e2v/events.hpp"

#include <algorithm>
#include <cmath>

#include "binary_io.hpp"

namespace e2v {

EventStream validate_stream(std::vector<Event> raw, std::int32_t width, std::int32_t height,
                            double duration) {
  if (width <= 0 || height <= 0) {
    throw Error(Errc::OutOfBoundsCoordinate, "sensor dimensions must be positive");
  }
  if (!(duration >= 0.0) || !std::isfinite(duration)) {
    throw Error(Errc::TimestampOutOfRange, "duration must be finite and non-negative");
  }
  for (std::size_t i = 0; i < raw.size(); ++i) {
    const Event& e = raw[i];
    const std::string where = "event " + std::to_string(i);
    if (e.p != 1 && e.p != -1) {
      throw Error(Errc::InvalidPolarity, where + " has polarity " + std::to_string(e.p));
    }
    if (e.x < 0 || e.x >= width || e.y < 0 || e.y >= height) {
      throw Error(Errc::OutOfBoundsCoordinate, where + " at (" + std::to_string(e.x) + "," +
                                                   std::to_string(e.y) + ")");
    }
    if (!(e.t >= 0.0 && e.t <= duration)) {
      throw Error(Errc::TimestampOutOfRange, where + " at t=" + std::to_string(e.t));
    }
    if (i > 0 && raw[i - 1].t > e.t) {
      throw Error(Errc::NonMonotoneTimestamp, where + " precedes its predecessor");
    }
  }
  EventStream s;
  s.width_ = width;
  s.height_ = height;
  s.duration_ = duration;
  s.events_ = std::move(raw);
  return s;
}

BinningConfig::BinningConfig(double window, BinningMode mode, Index target_height,
                             Index target_width)
    : window_(window), mode_(mode), target_height_(target_height), target_width_(target_width) {
  if (!(window > 0.0) || !std::isfinite(window)) {
    throw Error(Errc::ZeroWindow, "binning window must be positive");
  }
  if (target_height < 0 || target_width < 0) {
    throw Error(Errc::NonDivisibleDimensions, "target dimensions must be non-negative");
  }
}

Index FrameStack::popcount(Index k) const {
  const auto first = cells.begin() + static_cast<std::ptrdiff_t>(offset(k, 0, 0));
  return std::count(first, first + height * width, std::uint8_t{1});
}

namespace {

Index downscale_factor(const EventStream& stream, const BinningConfig& cfg) {
  const Index th = cfg.target_height() == 0 ? stream.height() : cfg.target_height();
  const Index tw = cfg.target_width() == 0 ? stream.width() : cfg.target_width();
  if (stream.height() % th != 0 || stream.width() % tw != 0 ||
      stream.height() / th != stream.width() / tw) {
    throw Error(Errc::NonDivisibleDimensions,
                "sensor " + std::to_string(stream.width()) + "x" + std::to_string(stream.height()) +
                    " cannot be pooled to " + std::to_string(tw) + "x" + std::to_string(th));
  }
  return stream.height() / th;
}

}  // namespace

FrameStack bin_to_frames(const EventStream& stream, const BinningConfig& cfg) {
  const Index factor = downscale_factor(stream, cfg);
  const double dt = cfg.window();
  FrameStack out;

  if (cfg.mode() == BinningMode::uniform) {
    Index depth = window_count(stream.duration(), dt);
    // a zero-duration stream still needs one frame for its events at t = 0
    if (depth == 0 && !stream.empty()) depth = 1;
    out = FrameStack(depth, stream.height(), stream.width(), dt);
    for (const Event& e : stream.events()) {
      const Index k = std::min(window_index(e.t, dt), depth - 1);
      out.at(k, e.y, e.x) = 1;
    }
  } else {
    // frame opening times first, then fill
    std::vector<Index> frame_of(stream.size());
    Index k = -1;
    double opened = 0.0;
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const double t = stream.events()[i].t;
      if (k < 0 || t - opened > dt) {
        ++k;
        opened = t;
      }
      frame_of[i] = k;
    }
    out = FrameStack(k + 1, stream.height(), stream.width(), dt);
    for (std::size_t i = 0; i < stream.size(); ++i) {
      const Event& e = stream.events()[i];
      out.at(frame_of[i], e.y, e.x) = 1;
    }
  }

  return factor == 1 ? out : downscale_frames(out, factor);
}

FrameStack downscale_frames(const FrameStack& stack, Index factor) {
  if (factor <= 0 || stack.height % factor != 0 || stack.width % factor != 0) {
    throw Error(Errc::NonDivisibleDimensions,
                std::to_string(stack.width) + "x" + std::to_string(stack.height) +
                    " not divisible by " + std::to_string(factor));
  }
  if (factor == 1) return stack;
  FrameStack out(stack.depth, stack.height / factor, stack.width / factor, stack.window);
  for (Index k = 0; k < stack.depth; ++k) {
    for (Index v = 0; v < stack.height; ++v) {
      for (Index u = 0; u < stack.width; ++u) {
        if (stack.at(k, v, u)) out.at(k, v / factor, u / factor) = 1;
      }
    }
  }
  return out;
}

namespace {

constexpr const char* kEventMagic = "E2VEVT1";
constexpr const char* kFrameMagic = "E2VFRM1";

}  // namespace

std::vector<std::uint8_t> encode_event_stream(const EventStream& stream) {
  detail::ByteWriter w;
  w.buffer().reserve(32 + 16 * stream.size());
  w.magic(kEventMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stream.width()));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stream.height()));
  w.put<double>(stream.duration());
  w.put<std::uint64_t>(stream.size());
  for (const Event& e : stream.events()) {
    w.put<double>(e.t);
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.x));
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.y));
    w.put<std::int8_t>(static_cast<std::int8_t>(e.p));
    const std::uint8_t pad[3] = {0, 0, 0};
    w.bytes(pad, 3);
  }
  return std::move(w.buffer());
}

EventStream decode_event_stream(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  r.expect_magic(kEventMagic);
  const auto width = r.get<std::uint32_t>();
  const auto height = r.get<std::uint32_t>();
  const auto duration = r.get<double>();
  const auto count = r.get<std::uint64_t>();
  if (count > r.remaining() / 16) {
    throw Error(Errc::BadFormat, context + ": header claims " + std::to_string(count) +
                                     " records but only " + std::to_string(r.remaining()) +
                                     " bytes follow");
  }
  std::vector<Event> events(count);
  for (auto& e : events) {
    e.t = r.get<double>();
    e.x = r.get<std::uint16_t>();
    e.y = r.get<std::uint16_t>();
    e.p = r.get<std::int8_t>();
    std::uint8_t pad[3];
    r.bytes(pad, 3);
  }
  r.expect_end();
  return validate_stream(std::move(events), static_cast<std::int32_t>(width),
                         static_cast<std::int32_t>(height), duration);
}

void write_event_file(const std::string& path, const EventStream& stream) {
  detail::write_file(path, encode_event_stream(stream));
}

EventStream read_event_file(const std::string& path) {
  return decode_event_stream(detail::read_file(path), path);
}

std::vector<std::uint8_t> encode_frame_stack(const FrameStack& stack) {
  detail::ByteWriter w;
  w.magic(kFrameMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stack.depth));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stack.height));
  w.put<std::uint32_t>(static_cast<std::uint32_t>(stack.width));
  w.put<double>(stack.window);
  std::vector<std::uint8_t> packed((stack.cells.size() + 7) / 8, 0);
  for (std::size_t i = 0; i < stack.cells.size(); ++i) {
    if (stack.cells[i]) packed[i / 8] |= static_cast<std::uint8_t>(1u << (i % 8));
  }
  w.bytes(packed.data(), packed.size());
  return std::move(w.buffer());
}

FrameStack decode_frame_stack(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  r.expect_magic(kFrameMagic);
  const Index d = r.get<std::uint32_t>();
  const Index h = r.get<std::uint32_t>();
  const Index w = r.get<std::uint32_t>();
  const double window = r.get<double>();
  const std::size_t n = static_cast<std::size_t>(d * h * w);
  if ((n + 7) / 8 != r.remaining()) throw Error(Errc::BadFormat, context + ": payload size");
  FrameStack out(d, h, w, window);
  std::vector<std::uint8_t> packed(r.remaining());
  r.bytes(packed.data(), packed.size());
  for (std::size_t i = 0; i < n; ++i) out.cells[i] = (packed[i / 8] >> (i % 8)) & 1u;
  return out;
}

void write_frame_file(const std::string& path, const FrameStack& stack) {
  detail::write_file(path, encode_frame_stack(stack));
}

FrameStack read_frame_file(const std::string& path) {
  return decode_frame_stack(detail::read_file(path), path);
}

}  // namespace e2v

#include "e2v/checkpoint.hpp"

#include <limits>

#include "binary_io.hpp"

namespace e2v {

namespace {
constexpr std::string_view kMagic = "E2VCKP1";
}

void Checkpoint::add(TensorRecord rec) {
  if (find(rec.name)) throw Error(Errc::CheckpointMismatch, "duplicate tensor '" + rec.name + "'");
  std::size_t n = 1;
  for (auto d : rec.dims) n *= d;
  if (n != rec.values.size()) {
    throw Error(Errc::CheckpointMismatch, "tensor '" + rec.name + "' dims do not match payload");
  }
  entries_.push_back(std::move(rec));
}

const TensorRecord* Checkpoint::find(std::string_view name) const {
  for (const auto& e : entries_) {
    if (e.name == name) return &e;
  }
  return nullptr;
}

const TensorRecord& Checkpoint::at(std::string_view name) const {
  const auto* rec = find(name);
  if (!rec) throw Error(Errc::CheckpointMismatch, "missing tensor '" + std::string(name) + "'");
  return *rec;
}

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckp) {
  detail::ByteWriter w;
  w.magic(kMagic);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(ckp.size()));
  for (const auto& e : ckp.entries()) {
    if (e.name.size() > std::numeric_limits<std::uint16_t>::max() || e.dims.size() > 255) {
      throw Error(Errc::BadFormat, "tensor '" + e.name + "' cannot be encoded");
    }
    w.put<std::uint16_t>(static_cast<std::uint16_t>(e.name.size()));
    w.bytes(e.name.data(), e.name.size());
    w.put<std::uint8_t>(static_cast<std::uint8_t>(e.dims.size()));
    for (auto d : e.dims) w.put<std::uint32_t>(d);
    for (float v : e.values) w.put<float>(v);
  }
  return std::move(w.buffer());
}

Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& context) {
  detail::ByteReader r(bytes, context);
  r.expect_magic(kMagic);
  const auto count = r.get<std::uint32_t>();
  Checkpoint ckp;
  for (std::uint32_t k = 0; k < count; ++k) {
    TensorRecord rec;
    rec.name.resize(r.get<std::uint16_t>());
    r.bytes(rec.name.data(), rec.name.size());
    const auto rank = r.get<std::uint8_t>();
    std::size_t n = 1;
    for (std::uint8_t i = 0; i < rank; ++i) {
      rec.dims.push_back(r.get<std::uint32_t>());
      n *= rec.dims.back();
    }
    if (n > r.remaining() / sizeof(float)) throw Error(Errc::BadFormat, context + ": truncated payload");
    rec.values.resize(n);
    for (auto& v : rec.values) v = r.get<float>();
    try {
      ckp.add(std::move(rec));
    } catch (const Error& e) {
      throw Error(Errc::BadFormat, context + ": " + e.what());
    }
  }
  r.expect_end();
  return ckp;
}

void write_checkpoint_file(const std::string& path, const Checkpoint& ckp) {
  detail::write_file(path, encode_checkpoint(ckp));
}

Checkpoint read_checkpoint_file(const std::string& path) {
  return decode_checkpoint(detail::read_file(path), path);
}

}  // namespace e2v

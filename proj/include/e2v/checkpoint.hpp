#pragma once

// CKP1 checkpoints: a flat list of named float32 tensors.

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "e2v/model.hpp"

namespace e2v {

struct TensorRecord {
  std::string name;
  std::vector<std::uint32_t> dims;
  std::vector<float> values;

  bool operator==(const TensorRecord&) const = default;
};

class Checkpoint {
 public:
  void add(TensorRecord rec);
  const TensorRecord* find(std::string_view name) const;
  const TensorRecord& at(std::string_view name) const;  ///< CheckpointMismatch if absent

  const std::vector<TensorRecord>& entries() const { return entries_; }
  std::size_t size() const { return entries_.size(); }

  bool operator==(const Checkpoint&) const = default;

 private:
  std::vector<TensorRecord> entries_;
};

std::vector<std::uint8_t> encode_checkpoint(const Checkpoint& ckp);
Checkpoint decode_checkpoint(const std::vector<std::uint8_t>& bytes, const std::string& context = "CKP1");
void write_checkpoint_file(const std::string& path, const Checkpoint& ckp);
Checkpoint read_checkpoint_file(const std::string& path);

inline constexpr std::string_view kOptimizerPrefix = "opt.";

namespace detail {

template <typename Scalar>
TensorRecord make_record(const std::string& name, const std::vector<Index>& dims, const Tensor5<Scalar>& t) {
  TensorRecord rec{name, {}, std::vector<float>(static_cast<std::size_t>(t.size()))};
  for (Index d : dims) rec.dims.push_back(static_cast<std::uint32_t>(d));
  for (Index i = 0; i < t.size(); ++i) rec.values[static_cast<std::size_t>(i)] = static_cast<float>(t[i]);
  return rec;
}

template <typename Scalar>
void load_record(const TensorRecord& rec, const std::vector<Index>& dims, Tensor5<Scalar>& t) {
  bool same = rec.dims.size() == dims.size();
  for (std::size_t i = 0; same && i < dims.size(); ++i) same = rec.dims[i] == static_cast<std::uint32_t>(dims[i]);
  if (!same || rec.values.size() != static_cast<std::size_t>(t.size())) {
    throw Error(Errc::CheckpointMismatch, "tensor '" + rec.name + "' has incompatible dims");
  }
  for (Index i = 0; i < t.size(); ++i) t[i] = static_cast<Scalar>(rec.values[static_cast<std::size_t>(i)]);
}

}  // namespace detail

/// Parameters and running statistics of `model`, in registry order.
template <typename Scalar>
Checkpoint export_model(E2VModel<Scalar>& model) {
  Checkpoint ckp;
  for (const auto* p : model.parameters()) ckp.add(detail::make_record(p->name, p->dims(), p->value));
  for (const auto& [name, t] : model.buffers()) ckp.add(detail::make_record(name, {t->shape().c}, *t));
  return ckp;
}

/// Loads every parameter and buffer. Missing, extra (non-optimizer) or
/// mis-shaped entries raise CheckpointMismatch and leave the model untouched.
template <typename Scalar>
void import_model(E2VModel<Scalar>& model, const Checkpoint& ckp) {
  auto params = model.parameters();
  auto buffers = model.buffers();
  std::size_t model_entries = 0;
  for (const auto& rec : ckp.entries()) {
    if (!rec.name.starts_with(kOptimizerPrefix)) ++model_entries;
  }
  if (model_entries != params.size() + buffers.size()) {
    throw Error(Errc::CheckpointMismatch, "checkpoint holds " + std::to_string(model_entries) +
                                              " model tensors, model has " +
                                              std::to_string(params.size() + buffers.size()));
  }
  std::vector<Tensor5<Scalar>> staged;
  staged.reserve(params.size() + buffers.size());
  for (const auto* p : params) {
    staged.emplace_back(p->value.shape());
    detail::load_record(ckp.at(p->name), p->dims(), staged.back());
  }
  for (const auto& [name, t] : buffers) {
    staged.emplace_back(t->shape());
    detail::load_record(ckp.at(name), {t->shape().c}, staged.back());
  }
  std::size_t k = 0;
  for (auto* p : params) p->value = std::move(staged[k++]);
  for (auto& [name, t] : buffers) *t = std::move(staged[k++]);
}

}  // namespace e2v

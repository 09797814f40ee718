#pragma once

// Finite-difference oracle for analytic gradients. Lives in test code only and
// does not share any code path with the layer backward passes it checks.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <vector>

#include "e2v/layers.hpp"
#include "e2v/tensor.hpp"

namespace e2v::testing {

inline constexpr double kFdStep = 1e-5;
/// Step for checks through the assembled network, where rounding inside
/// some 20 stacked layers makes the 1e-5 estimate noisy at the 1e-6 level.
inline constexpr double kNetworkFdStep = 1e-4;
/// Denominator floor for relative error: gradients smaller than this are
/// compared on an absolute scale, where central-difference round-off
/// (~1e-16 * |L| / h) would otherwise dominate.
inline constexpr double kRelFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), kRelFloor});
}

struct GradCheckStats {
  double max_rel = 0.0;
  long checked = 0;
  long skipped = 0;  ///< perturbations that crossed a relu / pool / clamp branch

  void merge(const GradCheckStats& o) {
    max_rel = std::max(max_rel, o.max_rel);
    checked += o.checked;
    skipped += o.skipped;
  }
};

using ScalarFn = std::function<double()>;
using TensorFn = std::function<Tensor5<double>()>;

/// Evaluates `f` with non-smooth branch decisions hashed into `signature`.
template <typename F>
auto probed(const F& f, std::uint64_t& signature) {
  signature = 0xCBF29CE484222325ull;
  detail::kink_probe = &signature;
  auto v = f();
  detail::kink_probe = nullptr;
  return v;
}

/// Central difference of `loss` at `coord`, or NaN if either perturbation
/// changes a branch decision of the forward pass.
inline double central_difference(double& coord, const ScalarFn& loss, double h = kFdStep) {
  std::uint64_t base = 0, plus = 0, minus = 0;
  probed(loss, base);
  const double saved = coord;
  coord = saved + h;
  const double lp = probed(loss, plus);
  coord = saved - h;
  const double lm = probed(loss, minus);
  coord = saved;
  if (plus != base || minus != base) return std::nan("");
  return (lp - lm) / (2.0 * h);
}

/// Central difference of L = <f, r>. The outputs are differenced before the
/// projection so that summation round-off in L does not enter the estimate.
inline double central_difference(double& coord, const TensorFn& f, const Tensor5<double>& r,
                                 double h = kFdStep) {
  std::uint64_t base = 0, plus = 0, minus = 0;
  probed(f, base);
  const double saved = coord;
  coord = saved + h;
  const Tensor5<double> yp = probed(f, plus);
  coord = saved - h;
  const Tensor5<double> ym = probed(f, minus);
  coord = saved;
  if (plus != base || minus != base) return std::nan("");
  long double acc = 0.0L;
  for (Index i = 0; i < r.size(); ++i) acc += static_cast<long double>(yp[i] - ym[i]) * r[i];
  return static_cast<double>(acc / (2.0L * h));
}

namespace detail_fd {
inline std::vector<Index> all_or(std::vector<Index> indices, Index n) {
  if (indices.empty()) {
    indices.resize(static_cast<std::size_t>(n));
    for (Index i = 0; i < n; ++i) indices[static_cast<std::size_t>(i)] = i;
  }
  return indices;
}

template <typename Diff>
GradCheckStats compare(Tensor5<double>& values, const Tensor5<double>& analytic, const std::vector<Index>& indices,
                       const Diff& diff) {
  GradCheckStats stats;
  for (const Index i : indices) {
    const double fd = diff(values[i]);
    if (std::isnan(fd)) {
      ++stats.skipped;
      continue;
    }
    stats.max_rel = std::max(stats.max_rel, relative_error(analytic[i], fd));
    ++stats.checked;
  }
  return stats;
}
}  // namespace detail_fd

/// Compares analytic[i] with the central difference of a scalar `loss`
/// w.r.t. values[i] for every i in `indices` (all indices when empty).
inline GradCheckStats check_coordinates(Tensor5<double>& values, const Tensor5<double>& analytic,
                                        const ScalarFn& loss, std::vector<Index> indices = {}) {
  return detail_fd::compare(values, analytic, detail_fd::all_or(std::move(indices), values.size()),
                            [&](double& c) { return central_difference(c, loss); });
}

/// Same, for the projected loss <f, r>.
inline GradCheckStats check_coordinates(Tensor5<double>& values, const Tensor5<double>& analytic,
                                        const TensorFn& f, const Tensor5<double>& r,
                                        std::vector<Index> indices = {}, double h = kFdStep) {
  return detail_fd::compare(values, analytic, detail_fd::all_or(std::move(indices), values.size()),
                            [&](double& c) { return central_difference(c, f, r, h); });
}

inline Tensor5<double> random_tensor(const Shape5& s, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor5<double> t(s);
  for (Index i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

/// <a, b> over all elements.
inline double inner(const Tensor5<double>& a, const Tensor5<double>& b) { return a.data().dot(b.data()); }

inline std::vector<Index> sample_indices(Index n, Index k, Rng& rng) {
  std::vector<Index> out;
  if (k >= n) {
    for (Index i = 0; i < n; ++i) out.push_back(i);
    return out;
  }
  for (Index j = 0; j < k; ++j) out.push_back(static_cast<Index>(rng.below(static_cast<std::uint64_t>(n))));
  return out;
}

}  // namespace e2v::testing

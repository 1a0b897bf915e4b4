#pragma once

// Training objective: negative Pearson correlation plus KL divergence between
// the predicted map S and the ground-truth density G.

#include <cstddef>

#include "thtd/tensor.hpp"

namespace thtd {

/// Floor applied to the normalized prediction inside the KL logarithm.
inline constexpr double kKlEpsilon = 1e-7;

struct PearsonStats {
  double r = 0.0;
  double var_a = 0.0;  // sum of squared deviations
  double var_b = 0.0;
  double mean_a = 0.0;
  double mean_b = 0.0;
  bool degenerate() const { return !(var_a > 0.0) || !(var_b > 0.0); }
};

/// Two-pass Pearson correlation accumulated in double.
template <typename T>
PearsonStats pearson(const T* a, const T* b, std::size_t n);

struct LossReport {
  double cc_term = 0.0;
  double kl_term = 0.0;
  double total = 0.0;
};

/// -Pearson(S, G); throws DegenerateInputError when either map is constant.
template <typename T>
Tensor<T> cc_loss(const Tensor<T>& s, const Tensor<T>& g);

/// sum G~ log(G~ / max(S~, eps)) with S~, G~ normalized to unit sum.
/// Negative entries are rejected; zero-sum maps raise DegenerateInputError.
template <typename T>
Tensor<T> kl_loss(const Tensor<T>& s, const Tensor<T>& g);

template <typename T>
struct TotalLoss {
  Tensor<T> loss;
  LossReport report;
  bool cc_skipped = false;
};

/// cc_loss + kl_loss. With `lenient`, a constant map contributes cc_term = 0
/// (and a warning on stderr) instead of throwing.
template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& s, const Tensor<T>& g, bool lenient = false);

}  // namespace thtd

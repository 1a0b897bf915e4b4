#include "thtd/objectives.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

#include "thtd/ops.hpp"

namespace thtd {

template <typename T>
PearsonStats pearson(const T* a, const T* b, std::size_t n) {
  PearsonStats st;
  if (n == 0) return st;
  double sa = 0, sb = 0;
  for (std::size_t i = 0; i < n; ++i) {
    sa += static_cast<double>(a[i]);
    sb += static_cast<double>(b[i]);
  }
  st.mean_a = sa / static_cast<double>(n);
  st.mean_b = sb / static_cast<double>(n);
  double cov = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double da = static_cast<double>(a[i]) - st.mean_a;
    const double db = static_cast<double>(b[i]) - st.mean_b;
    cov += da * db;
    st.var_a += da * da;
    st.var_b += db * db;
  }
  // constant inputs can leave rounding residue in the variance
  if (std::all_of(a, a + n, [&](T v) { return v == a[0]; })) st.var_a = 0.0;
  if (std::all_of(b, b + n, [&](T v) { return v == b[0]; })) st.var_b = 0.0;
  if (!st.degenerate()) st.r = cov / std::sqrt(st.var_a * st.var_b);
  return st;
}

namespace {

template <typename T>
void check_pair(const Tensor<T>& s, const Tensor<T>& g, const char* op) {
  if (s.shape() != g.shape())
    throw ShapeError(std::string(op) + ": shape mismatch " + shape_str(s.shape()) + " vs " + shape_str(g.shape()));
  if (s.numel() < 2) throw ShapeError(std::string(op) + ": needs at least 2 elements");
}

}  // namespace

template <typename T>
Tensor<T> cc_loss(const Tensor<T>& s, const Tensor<T>& g) {
  check_pair(s, g, "cc_loss");
  const auto n = static_cast<std::size_t>(s.numel());
  const auto st = pearson(s.storage().data(), g.storage().data(), n);
  if (st.degenerate()) throw DegenerateInputError("cc_loss: correlation undefined for a constant map");
  auto sn = s.node(), gn = g.node();
  return make_result<T>({}, {static_cast<T>(-st.r)}, {s}, [sn, gn, st, n](detail::Node<T>& self) {
    auto& gs = sn->ensure_grad();
    const double up = static_cast<double>(self.grad[0]);
    const double norm = std::sqrt(st.var_a * st.var_b);
    for (std::size_t i = 0; i < n; ++i) {
      const double da = static_cast<double>(sn->data[i]) - st.mean_a;
      const double db = static_cast<double>(gn->data[i]) - st.mean_b;
      const double dr = db / norm - st.r * da / st.var_a;
      gs[i] += static_cast<T>(-up * dr);
    }
  });
}

template <typename T>
Tensor<T> kl_loss(const Tensor<T>& s, const Tensor<T>& g) {
  check_pair(s, g, "kl_loss");
  const auto n = static_cast<std::size_t>(s.numel());
  const auto& sd = s.storage();
  const auto& gd = g.storage();
  double ssum = 0, gsum = 0;
  for (std::size_t i = 0; i < n; ++i) {
    if (sd[i] < T(0) || gd[i] < T(0) || !std::isfinite(static_cast<double>(sd[i])) ||
        !std::isfinite(static_cast<double>(gd[i])))
      throw DegenerateInputError("kl_loss: maps must be finite and non-negative (index " + std::to_string(i) + ")");
    ssum += static_cast<double>(sd[i]);
    gsum += static_cast<double>(gd[i]);
  }
  if (!(ssum > 0.0) || !(gsum > 0.0)) throw DegenerateInputError("kl_loss: map sums to zero");
  double kl = 0;
  for (std::size_t i = 0; i < n; ++i) {
    const double gi = static_cast<double>(gd[i]) / gsum;
    if (gi <= 0.0) continue;
    const double si = std::max(static_cast<double>(sd[i]) / ssum, kKlEpsilon);
    kl += gi * (std::log(gi) - std::log(si));
  }
  auto sn = s.node(), gn = g.node();
  return make_result<T>({}, {static_cast<T>(kl)}, {s}, [sn, gn, ssum, gsum, n](detail::Node<T>& self) {
    auto& gs = sn->ensure_grad();
    const double up = static_cast<double>(self.grad[0]);
    // d KL / d s~_i, then through the normalization s~ = S / sum(S)
    std::vector<double> d(n, 0.0);
    double dot = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double si = static_cast<double>(sn->data[i]) / ssum;
      const double gi = static_cast<double>(gn->data[i]) / gsum;
      if (si > kKlEpsilon) d[i] = -gi / si;
      dot += d[i] * si;
    }
    for (std::size_t i = 0; i < n; ++i) gs[i] += static_cast<T>(up * (d[i] - dot) / ssum);
  });
}

template <typename T>
TotalLoss<T> total_loss(const Tensor<T>& s, const Tensor<T>& g, bool lenient) {
  TotalLoss<T> out;
  auto kl = kl_loss(s, g);
  out.report.kl_term = static_cast<double>(kl.item());
  try {
    auto cc = cc_loss(s, g);
    out.report.cc_term = static_cast<double>(cc.item());
    out.loss = add(cc, kl);
  } catch (const DegenerateInputError& e) {
    if (!lenient) throw;
    std::cerr << "warning: " << e.what() << "; cc term set to 0\n";
    out.cc_skipped = true;
    out.loss = kl;
  }
  out.report.total = out.report.cc_term + out.report.kl_term;
  return out;
}

template PearsonStats pearson(const float*, const float*, std::size_t);
template PearsonStats pearson(const double*, const double*, std::size_t);
template Tensor<float> cc_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> cc_loss(const Tensor<double>&, const Tensor<double>&);
template Tensor<float> kl_loss(const Tensor<float>&, const Tensor<float>&);
template Tensor<double> kl_loss(const Tensor<double>&, const Tensor<double>&);
template TotalLoss<float> total_loss(const Tensor<float>&, const Tensor<float>&, bool);
template TotalLoss<double> total_loss(const Tensor<double>&, const Tensor<double>&, bool);

}  // namespace thtd

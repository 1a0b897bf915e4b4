#pragma once

// Shared helpers and independent reference implementations for the unit tests.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <vector>

#include "thtd/metrics.hpp"
#include "thtd/ops.hpp"
#include "thtd/random.hpp"
#include "thtd/tensor.hpp"

namespace testing {

using thtd::Shape;

template <typename T = double>
thtd::Tensor<T> random_tensor(Shape shape, thtd::Rng& rng, bool grad = false, double scale = 1.0) {
  std::vector<T> v(static_cast<std::size_t>(thtd::numel(shape)));
  for (auto& x : v) x = static_cast<T>(scale * rng.normal());
  return thtd::Tensor<T>::from_data(std::move(shape), std::move(v), grad);
}

inline std::vector<double> random_values(std::size_t n, thtd::Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

inline std::vector<double> uniform_values(std::size_t n, thtd::Rng& rng, double lo = 0.0, double hi = 1.0) {
  std::vector<double> v(n);
  for (auto& x : v) x = lo + (hi - lo) * rng.uniform();
  return v;
}

template <typename A, typename B>
double max_abs_diff(const A& a, const B& b) {
  double m = 0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(double(a[i]) - double(b[i])));
  return m;
}

// direct 5-nested-loop convolution, [N,Cin,T,H,W] -> [N,Cout,T',H',W']
inline std::vector<double> naive_conv3d(const std::vector<double>& in, const Shape& s, const thtd::ConvSpec& sp,
                                        const std::vector<double>& w, const std::vector<double>& b) {
  const auto N = s[0], Ci = s[1], T = s[2], H = s[3], W = s[4];
  const auto Co = sp.out_channels, G = sp.groups, cig = Ci / G, cog = Co / G;
  const auto [kt, kh, kw] = sp.kernel;
  const auto [st, sh, sw] = sp.stride;
  const auto [pt, ph, pw] = sp.padding;
  const auto To = (T + 2 * pt - kt) / st + 1, Ho = (H + 2 * ph - kh) / sh + 1, Wo = (W + 2 * pw - kw) / sw + 1;
  std::vector<double> out(static_cast<std::size_t>(N * Co * To * Ho * Wo));
  auto at = [&](auto n, auto c, auto t, auto y, auto x) -> double {
    if (t < 0 || t >= T || y < 0 || y >= H || x < 0 || x >= W) return 0.0;
    return in[static_cast<std::size_t>((((n * Ci + c) * T + t) * H + y) * W + x)];
  };
  std::size_t o = 0;
  for (std::int64_t n = 0; n < N; ++n)
    for (std::int64_t co = 0; co < Co; ++co)
      for (std::int64_t t = 0; t < To; ++t)
        for (std::int64_t y = 0; y < Ho; ++y)
          for (std::int64_t x = 0; x < Wo; ++x) {
            double acc = b.empty() ? 0.0 : b[static_cast<std::size_t>(co)];
            const auto g = co / cog;
            for (std::int64_t ci = 0; ci < cig; ++ci)
              for (std::int64_t a = 0; a < kt; ++a)
                for (std::int64_t p = 0; p < kh; ++p)
                  for (std::int64_t q = 0; q < kw; ++q)
                    acc += w[static_cast<std::size_t>((((co * cig + ci) * kt + a) * kh + p) * kw + q)] *
                           at(n, g * cig + ci, t * st - pt + a, y * sh - ph + p, x * sw - pw + q);
            out[o++] = acc;
          }
  return out;
}

inline double oracle_pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const double n = static_cast<double>(a.size());
  double ma = 0, mb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) ma += a[i], mb += b[i];
  ma /= n;
  mb /= n;
  double sab = 0, saa = 0, sbb = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  return sab / std::sqrt(saa * sbb);
}

inline double oracle_kl(const std::vector<double>& s, const std::vector<double>& g, double eps = 1e-7) {
  double ss = 0, gs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) ss += s[i], gs += g[i];
  double kl = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    const double gn = g[i] / gs;
    if (gn > 0) kl += gn * std::log(gn / std::max(s[i] / ss, eps));
  }
  return kl;
}

inline double oracle_sim(const std::vector<double>& s, const std::vector<double>& g) {
  double ss = 0, gs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) ss += s[i], gs += g[i];
  double acc = 0;
  for (std::size_t i = 0; i < s.size(); ++i) acc += std::min(s[i] / ss, g[i] / gs);
  return acc;
}

inline double oracle_nss(const std::vector<double>& s, std::int64_t cols, const std::vector<thtd::Fixation>& fix) {
  const double n = static_cast<double>(s.size());
  double mu = 0;
  for (double v : s) mu += v;
  mu /= n;
  double var = 0;
  for (double v : s) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / n);
  double acc = 0;
  for (const auto& f : fix) acc += (s[static_cast<std::size_t>(f.row * cols + f.col)] - mu) / sd;
  return acc / static_cast<double>(fix.size());
}

// Enumerates every distinct positive value as a threshold (>= classifies
// positive), adds the (0,0) and (1,1) anchors and integrates with trapezoids.
inline double oracle_auc(const std::vector<double>& pos, const std::vector<double>& neg) {
  std::set<double, std::greater<>> thresholds(pos.begin(), pos.end());
  std::vector<std::pair<double, double>> pts{{0.0, 0.0}};
  for (double t : thresholds) {
    double tp = 0, fp = 0;
    for (double p : pos) tp += p >= t;
    for (double q : neg) fp += q >= t;
    pts.push_back({fp / static_cast<double>(neg.size()), tp / static_cast<double>(pos.size())});
  }
  pts.push_back({1.0, 1.0});
  double area = 0;
  for (std::size_t i = 1; i < pts.size(); ++i)
    area += (pts[i].first - pts[i - 1].first) * (pts[i].second + pts[i - 1].second) / 2.0;
  return area;
}

}  // namespace testing

#include "thtd/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <stdexcept>
#include <unordered_set>

#include "thtd/errors.hpp"
#include "thtd/objectives.hpp"
#include "thtd/random.hpp"

namespace thtd {

Map2D::Map2D(std::int64_t r, std::int64_t c, std::vector<double> v) : rows(r), cols(c), values(std::move(v)) {
  if (r < 0 || c < 0 || static_cast<std::int64_t>(values.size()) != r * c)
    throw ShapeError("Map2D: " + std::to_string(values.size()) + " values for " + std::to_string(r) + "x" +
                     std::to_string(c));
}

void FixationRecord::validate() const {
  for (const auto& p : points)
    if (p.row < 0 || p.row >= rows || p.col < 0 || p.col >= cols)
      throw std::out_of_range("fixation (" + std::to_string(p.row) + ", " + std::to_string(p.col) +
                              ") outside " + std::to_string(rows) + "x" + std::to_string(cols) + " frame " +
                              std::to_string(frame));
}

namespace {

void check_same(const Map2D& a, const Map2D& b, const char* op) {
  if (a.rows != b.rows || a.cols != b.cols)
    throw ShapeError(std::string(op) + ": map sizes differ");
}

void check_fix(const Map2D& s, const FixationRecord& fix) {
  if (fix.rows != s.rows || fix.cols != s.cols)
    throw ShapeError("fixation record dims " + std::to_string(fix.rows) + "x" + std::to_string(fix.cols) +
                     " differ from map " + std::to_string(s.rows) + "x" + std::to_string(s.cols));
  fix.validate();
}

std::int64_t key(const Fixation& f, std::int64_t cols) { return f.row * cols + f.col; }

}  // namespace

double cc_metric(const Map2D& s, const Map2D& g) {
  check_same(s, g, "cc");
  const auto st = pearson(s.values.data(), g.values.data(), s.size());
  if (st.degenerate()) throw DegenerateInputError("cc: correlation undefined for a constant map");
  return st.r;
}

double sim(const Map2D& s, const Map2D& g) {
  check_same(s, g, "sim");
  double ss = 0, gs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (s.values[i] < 0 || g.values[i] < 0) throw DegenerateInputError("sim: maps must be non-negative");
    ss += s.values[i];
    gs += g.values[i];
  }
  if (!(ss > 0) || !(gs > 0)) throw DegenerateInputError("sim: map sums to zero");
  double total = 0;
  for (std::size_t i = 0; i < s.size(); ++i) total += std::min(s.values[i] / ss, g.values[i] / gs);
  return total;
}

std::optional<double> nss(const Map2D& s, const FixationRecord& fix) {
  check_fix(s, fix);
  if (fix.points.empty()) return std::nullopt;
  const double n = static_cast<double>(s.size());
  const double mu = std::accumulate(s.values.begin(), s.values.end(), 0.0) / n;
  double var = 0;
  for (double v : s.values) var += (v - mu) * (v - mu);
  const double sd = std::sqrt(var / n);
  const auto [lo, hi] = std::minmax_element(s.values.begin(), s.values.end());
  if (!(sd > 0) || *lo == *hi) throw DegenerateInputError("nss: constant saliency map");
  double acc = 0;
  for (const auto& p : fix.points) acc += (s.at(p.row, p.col) - mu) / sd;
  return acc / static_cast<double>(fix.points.size());
}

double roc_auc_at_positive_thresholds(std::vector<double> positives, std::vector<double> negatives) {
  if (positives.empty()) throw DegenerateInputError("auc: no positives");
  if (negatives.empty()) throw DegenerateInputError("auc: no negatives");
  std::sort(positives.begin(), positives.end(), std::greater<>());
  std::sort(negatives.begin(), negatives.end(), std::greater<>());
  const double np = static_cast<double>(positives.size());
  const double nn = static_cast<double>(negatives.size());
  double area = 0, prev_fpr = 0, prev_tpr = 0;
  std::size_t ip = 0, in = 0;
  while (ip < positives.size()) {
    const double thr = positives[ip];
    while (ip < positives.size() && positives[ip] >= thr) ++ip;
    while (in < negatives.size() && negatives[in] >= thr) ++in;
    const double tpr = static_cast<double>(ip) / np;
    const double fpr = static_cast<double>(in) / nn;
    area += (fpr - prev_fpr) * (tpr + prev_tpr) / 2.0;
    prev_fpr = fpr;
    prev_tpr = tpr;
  }
  area += (1.0 - prev_fpr) * (1.0 + prev_tpr) / 2.0;
  return area;
}

std::optional<double> auc_judd(const Map2D& s, const FixationRecord& fix) {
  check_fix(s, fix);
  if (fix.points.empty()) return std::nullopt;
  std::vector<char> fixated(s.size(), 0);
  std::vector<double> pos;
  pos.reserve(fix.points.size());
  for (const auto& p : fix.points) {
    pos.push_back(s.at(p.row, p.col));
    fixated[static_cast<std::size_t>(key(p, s.cols))] = 1;
  }
  std::vector<double> neg;
  neg.reserve(s.size());
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!fixated[i]) neg.push_back(s.values[i]);
  return roc_auc_at_positive_thresholds(std::move(pos), std::move(neg));
}

std::optional<double> shuffled_auc(const Map2D& s, const FixationRecord& fix,
                                   const std::vector<FixationRecord>& negatives, std::uint64_t seed) {
  check_fix(s, fix);
  if (fix.points.empty()) return std::nullopt;
  std::unordered_set<std::int64_t> positive_locs;
  std::vector<double> pos;
  for (const auto& p : fix.points) {
    pos.push_back(s.at(p.row, p.col));
    positive_locs.insert(key(p, s.cols));
  }
  std::vector<Fixation> pool;
  for (const auto& rec : negatives) {
    check_fix(s, rec);
    for (const auto& p : rec.points)
      if (!positive_locs.count(key(p, s.cols))) pool.push_back(p);
  }
  if (pool.empty()) throw DegenerateInputError("shuffled_auc: empty negative pool");
  const std::size_t cap = kShuffledNegativeCap * fix.points.size();
  if (pool.size() > cap) {
    Rng rng(seed);
    for (std::size_t i = 0; i < cap; ++i) {
      const auto j = i + static_cast<std::size_t>(rng.below(pool.size() - i));
      std::swap(pool[i], pool[j]);
    }
    pool.resize(cap);
  }
  std::vector<double> neg;
  neg.reserve(pool.size());
  for (const auto& p : pool) neg.push_back(s.at(p.row, p.col));
  return roc_auc_at_positive_thresholds(std::move(pos), std::move(neg));
}

void MetricsReport::aggregate() {
  double a = 0, sa = 0, ns = 0, c = 0, si = 0;
  std::int64_t na = 0, nsa = 0, nns = 0;
  skipped_frames = 0;
  for (const auto& f : frames) {
    c += f.cc;
    si += f.sim;
    if (f.auc_j) a += *f.auc_j, ++na;
    if (f.s_auc) sa += *f.s_auc, ++nsa;
    if (f.nss) ns += *f.nss, ++nns;
    if (!f.auc_j) ++skipped_frames;
  }
  const auto nf = static_cast<double>(frames.size());
  cc = frames.empty() ? 0.0 : c / nf;
  sim = frames.empty() ? 0.0 : si / nf;
  auc_j = na ? a / static_cast<double>(na) : 0.0;
  s_auc = nsa ? sa / static_cast<double>(nsa) : 0.0;
  nss = nns ? ns / static_cast<double>(nns) : 0.0;
}

MetricsReport evaluate_video(const std::string& video, const std::vector<Map2D>& predictions,
                             const std::vector<Map2D>& ground_truth, const std::vector<FixationRecord>& fixations,
                             const std::vector<FixationRecord>& negative_pool, std::uint64_t seed) {
  if (predictions.size() != ground_truth.size() || predictions.size() != fixations.size())
    throw ShapeError("evaluate_video: " + std::to_string(predictions.size()) + " predictions, " +
                     std::to_string(ground_truth.size()) + " ground-truth maps, " +
                     std::to_string(fixations.size()) + " fixation records");
  MetricsReport r;
  r.video = video;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const auto& s = predictions[i];
    FrameMetrics f;
    f.frame = fixations[i].frame;
    bool degenerate = false;
    try {
      f.cc = cc_metric(s, ground_truth[i]);
    } catch (const DegenerateInputError&) {
      f.cc = 0.0;
      degenerate = true;
    }
    f.sim = sim(s, ground_truth[i]);
    if (!fixations[i].points.empty()) {
      f.auc_j = auc_judd(s, fixations[i]);
      try {
        f.nss = nss(s, fixations[i]);
      } catch (const DegenerateInputError&) {
        f.nss = 0.0;
        degenerate = true;
      }
      if (!negative_pool.empty()) {
        try {
          f.s_auc = shuffled_auc(s, fixations[i], negative_pool, mix_seed(seed, 0x5a, i));
        } catch (const DegenerateInputError&) {
        }
      }
    }
    if (degenerate) ++r.degenerate_frames;
    r.frames.push_back(f);
  }
  r.aggregate();
  return r;
}

MetricsReport combine_reports(const std::string& name, const std::vector<MetricsReport>& reports) {
  MetricsReport all;
  all.video = name;
  for (const auto& r : reports) {
    all.frames.insert(all.frames.end(), r.frames.begin(), r.frames.end());
    all.degenerate_frames += r.degenerate_frames;
  }
  all.aggregate();
  return all;
}

}  // namespace thtd

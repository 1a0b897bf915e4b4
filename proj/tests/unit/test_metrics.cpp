#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "thtd/metrics.hpp"
#include "thtd/objectives.hpp"

using namespace thtd;
using testing::uniform_values;

namespace {

// distinct values so rank-based checks have no ties
Map2D tie_free_map(std::int64_t r, std::int64_t c, Rng& rng) {
  auto v = uniform_values(static_cast<std::size_t>(r * c), rng);
  for (std::size_t i = 0; i < v.size(); ++i) v[i] = v[i] * 0.5 + static_cast<double>(i) * 1e-9;
  return Map2D(r, c, v);
}

FixationRecord random_fix(std::int64_t r, std::int64_t c, std::size_t n, Rng& rng, std::int64_t frame = 0) {
  FixationRecord f{frame, r, c, {}};
  for (std::size_t i = 0; i < n; ++i)
    f.points.push_back({static_cast<std::int64_t>(rng.below(r)), static_cast<std::int64_t>(rng.below(c))});
  return f;
}

double brute_judd(const Map2D& s, const FixationRecord& fix) {
  std::vector<char> fixated(s.size(), 0);
  std::vector<double> pos, neg;
  for (const auto& p : fix.points) {
    pos.push_back(s.at(p.row, p.col));
    fixated[p.row * s.cols + p.col] = 1;
  }
  for (std::size_t i = 0; i < s.size(); ++i)
    if (!fixated[i]) neg.push_back(s.values[i]);
  return testing::oracle_auc(pos, neg);
}

}  // namespace

TEST_CASE("nss examples") {
  Rng rng(1);
  auto s = tie_free_map(4, 4, rng);
  FixationRecord all{0, 4, 4, {}};
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) all.points.push_back({r, c});
  CHECK(std::abs(*nss(s, all)) <= 1e-9);

  std::vector<double> peak(16, 0.0);
  peak[6] = 1.0;
  const double mu = 1.0 / 16, sd = std::sqrt((std::pow(1 - mu, 2) + 15 * mu * mu) / 16);
  CHECK(std::abs(*nss(Map2D(4, 4, peak), FixationRecord{0, 4, 4, {{1, 2}}}) - (1 - mu) / sd) <= 1e-12);

  CHECK_FALSE(nss(s, FixationRecord{0, 4, 4, {}}).has_value());
  CHECK_THROWS_AS(nss(Map2D(4, 4, std::vector<double>(16, 0.2)), all), DegenerateInputError);
  CHECK_THROWS_AS(nss(s, FixationRecord{0, 4, 4, {{0, 4}}}), std::out_of_range);
}

TEST_CASE("direct-formula oracles for cc, sim and nss") {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    auto s = uniform_values(256, rng), g = uniform_values(256, rng);
    Map2D sm(16, 16, s), gm(16, 16, g);
    CHECK(std::abs(cc_metric(sm, gm) - testing::oracle_pearson(s, g)) <= 1e-10);
    CHECK(std::abs(sim(sm, gm) - testing::oracle_sim(s, g)) <= 1e-12);
    auto f = random_fix(16, 16, 1 + rng.below(20), rng);
    CHECK(std::abs(*nss(sm, f) - testing::oracle_nss(s, 16, f.points)) <= 1e-10);
  }
}

TEST_CASE("cc metric examples") {
  Rng rng(3);
  auto g = uniform_values(64, rng);
  Map2D gm(8, 8, g);
  CHECK(std::abs(cc_metric(gm, gm) - 1.0) <= 1e-12);
  std::vector<double> aff(64);
  for (int i = 0; i < 64; ++i) aff[i] = 3 * g[i] + 2;
  CHECK(std::abs(cc_metric(Map2D(8, 8, aff), gm) - 1.0) <= 1e-9);
  auto s = uniform_values(64, rng);
  Map2D sm(8, 8, s);
  CHECK(std::abs(cc_metric(sm, gm) + cc_loss(Tensor<double>::from_data({8, 8}, s), Tensor<double>::from_data({8, 8}, g)).item()) <= 1e-12);
  CHECK(std::abs(cc_metric(sm, gm) - cc_metric(gm, sm)) <= 1e-12);
  CHECK_THROWS_AS(cc_metric(Map2D(8, 8, std::vector<double>(64, 1.0)), gm), DegenerateInputError);
}

TEST_CASE("sim examples") {
  Rng rng(4);
  auto g = uniform_values(64, rng), s = uniform_values(64, rng);
  Map2D gm(8, 8, g), sm(8, 8, s);
  CHECK(std::abs(sim(gm, gm) - 1.0) <= 1e-9);
  CHECK(std::abs(sim(sm, gm) - sim(gm, sm)) <= 1e-12);
  std::vector<double> a(64, 0.0), b(64, 0.0);
  for (int i = 0; i < 32; ++i) a[i] = 1.0, b[32 + i] = 2.0;
  CHECK(sim(Map2D(8, 8, a), Map2D(8, 8, b)) == 0.0);
  CHECK_THROWS_AS(sim(Map2D(8, 8, std::vector<double>(64, 0.0)), gm), DegenerateInputError);
}

TEST_CASE("auc_judd examples") {
  Rng rng(5);
  std::vector<double> v(64);
  for (int i = 0; i < 64; ++i) v[i] = 0.1 * rng.uniform();
  FixationRecord f{0, 8, 8, {{1, 1}, {3, 4}, {6, 2}}};
  for (const auto& p : f.points) v[p.row * 8 + p.col] = 1.0 + 0.1 * p.col;
  CHECK(*auc_judd(Map2D(8, 8, v), f) == 1.0);
  CHECK(*auc_judd(Map2D(8, 8, std::vector<double>(64, 0.3)), f) == 0.5);
  CHECK_FALSE(auc_judd(Map2D(8, 8, v), FixationRecord{0, 8, 8, {}}).has_value());
}

TEST_CASE("auc_judd and shuffled auc equal the threshold-enumeration oracle") {
  Rng rng(6);
  for (int trial = 0; trial < 200; ++trial) {
    // quantized values create ties on purpose
    auto raw = uniform_values(256, rng);
    if (trial % 2) for (auto& x : raw) x = std::floor(x * 8) / 8;
    Map2D s(16, 16, raw);
    auto f = random_fix(16, 16, 1 + rng.below(20), rng);
    CHECK(*auc_judd(s, f) == brute_judd(s, f));

    std::vector<FixationRecord> others{random_fix(16, 16, 15, rng, 1), random_fix(16, 16, 5, rng, 2)};
    // pool small enough that no subsampling happens
    std::vector<double> pos, neg;
    for (const auto& p : f.points) pos.push_back(s.at(p.row, p.col));
    for (const auto& o : others)
      for (const auto& p : o.points) {
        bool hit = false;
        for (const auto& q : f.points) hit |= q == p;
        if (!hit) neg.push_back(s.at(p.row, p.col));
      }
    if (neg.empty() || neg.size() > kShuffledNegativeCap * f.points.size()) continue;
    CHECK(*shuffled_auc(s, f, others, 17) == testing::oracle_auc(pos, neg));
  }
}

TEST_CASE("auc_judd invariant under increasing transforms") {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    auto s = tie_free_map(16, 16, rng);
    auto f = random_fix(16, 16, 12, rng);
    Map2D e = s, l = s;
    for (auto& x : e.values) x = std::exp(x);
    for (auto& x : l.values) x = 10 * x + 3;
    const double base = *auc_judd(s, f);
    CHECK(*auc_judd(e, f) == base);
    CHECK(*auc_judd(l, f) == base);
    CHECK((base >= 0.0 && base <= 1.0));
    CHECK(std::abs(*nss(l, f) - *nss(s, f)) <= 1e-9);
  }
}

TEST_CASE("shuffled auc: peaked map, symmetric case, empty pool") {
  Rng rng(8);
  std::vector<double> v(256, 0.0);
  FixationRecord f{0, 16, 16, {{2, 2}, {5, 9}}};
  for (const auto& p : f.points) v[p.row * 16 + p.col] = 1.0;
  Map2D s(16, 16, v);
  std::vector<FixationRecord> others{FixationRecord{1, 16, 16, {{0, 0}, {10, 10}, {15, 3}}}};
  CHECK(*shuffled_auc(s, f, others, 1) == 1.0);
  CHECK_THROWS_AS(shuffled_auc(s, f, {FixationRecord{1, 16, 16, {{2, 2}}}}, 1), DegenerateInputError);

  // positives and negatives drawn from the same location distribution
  double acc = 0;
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    Rng r(seed + 1000);
    auto m = tie_free_map(16, 16, r);
    auto pos = random_fix(16, 16, 20, r);
    std::vector<FixationRecord> pool;
    for (int k = 0; k < 10; ++k) pool.push_back(random_fix(16, 16, 20, r, k + 1));
    acc += *shuffled_auc(m, pos, pool, seed);
  }
  CHECK(std::abs(acc / 100 - 0.5) <= 0.05);
}

TEST_CASE("shuffled auc subsampling is seeded") {
  Rng rng(9);
  auto s = tie_free_map(16, 16, rng);
  auto f = random_fix(16, 16, 3, rng);
  std::vector<FixationRecord> pool;
  for (int k = 0; k < 20; ++k) pool.push_back(random_fix(16, 16, 10, rng, k + 1));
  CHECK(*shuffled_auc(s, f, pool, 5) == *shuffled_auc(s, f, pool, 5));
}

TEST_CASE("roc helper on a hand example") {
  // thresholds 0.9, 0.5: (0,0) (0,0.5) (0.5,1) (1,1)
  CHECK(roc_auc_at_positive_thresholds({0.9, 0.5}, {0.7, 0.1}) == 0.875);
}

TEST_CASE("evaluate_video") {
  Rng rng(10);
  std::vector<Map2D> pred, gt;
  std::vector<FixationRecord> fix;
  for (int f = 0; f < 3; ++f) {
    auto g = tie_free_map(8, 8, rng);
    gt.push_back(g);
    pred.push_back(g);
    // top-3 pixels
    std::vector<std::size_t> idx(64);
    for (std::size_t i = 0; i < 64; ++i) idx[i] = i;
    std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return g.values[a] > g.values[b]; });
    FixationRecord r{f, 8, 8, {}};
    for (int k = 0; k < 3; ++k) r.points.push_back({static_cast<std::int64_t>(idx[k] / 8), static_cast<std::int64_t>(idx[k] % 8)});
    fix.push_back(r);
  }
  auto rep = evaluate_video("v", pred, gt, fix, {}, 0);
  REQUIRE(rep.frames.size() == 3);
  for (const auto& f : rep.frames) {
    CHECK(std::abs(f.cc - 1.0) <= 1e-12);
    CHECK(std::abs(f.sim - 1.0) <= 1e-12);
    CHECK(*f.auc_j == 1.0);
    CHECK_FALSE(f.s_auc.has_value());
  }

  // per-frame oracle calls on perturbed predictions
  std::vector<Map2D> noisy;
  for (int f = 0; f < 3; ++f) noisy.push_back(tie_free_map(8, 8, rng));
  auto r2 = evaluate_video("v", noisy, gt, fix, {}, 0);
  double cc = 0, nssm = 0;
  for (int f = 0; f < 3; ++f) {
    CHECK(r2.frames[f].cc == cc_metric(noisy[f], gt[f]));
    CHECK(*r2.frames[f].auc_j == *auc_judd(noisy[f], fix[f]));
    cc += cc_metric(noisy[f], gt[f]);
    nssm += *nss(noisy[f], fix[f]);
  }
  CHECK(std::abs(r2.cc - cc / 3) <= 1e-12);
  CHECK(std::abs(r2.nss - nssm / 3) <= 1e-12);

  auto one = evaluate_video("v", {noisy[0]}, {gt[0]}, {fix[0]}, {}, 0);
  CHECK(one.cc == one.frames[0].cc);
  CHECK(one.auc_j == *one.frames[0].auc_j);

  // a frame without fixations counts for cc/sim only
  auto fx = fix;
  fx[1].points.clear();
  auto r3 = evaluate_video("v", noisy, gt, fx, {}, 0);
  CHECK(r3.skipped_frames == 1);
  CHECK(std::abs(r3.auc_j - (*r3.frames[0].auc_j + *r3.frames[2].auc_j) / 2) <= 1e-12);
  CHECK(std::abs(r3.cc - cc / 3) <= 1e-12);

  CHECK_THROWS_AS(evaluate_video("v", noisy, gt, {fix[0]}, {}, 0), ShapeError);
}

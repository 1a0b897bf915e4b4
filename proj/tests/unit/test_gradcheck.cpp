#include "doctest.h"
#include "support.hpp"
#include "thtd/gradcheck.hpp"

using namespace thtd;

TEST_CASE("every suite passes over ten seeds at 64-bit") {
  for (const auto& name : gradcheck_suite_names())
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
      auto r = run_gradcheck_suite<double>(name, seed);
      CAPTURE(name);
      CAPTURE(seed);
      CAPTURE(r.rel_error);
      CHECK(r.tolerance <= 1e-4);
      CHECK(r.coords > 0);
      CHECK(r.passed());
    }
}

TEST_CASE("full toy model at 64-bit") {
  auto r = run_gradcheck_suite<double>("model", 0);
  CAPTURE(r.rel_error);
  CHECK(r.tolerance <= 1e-3);
  CHECK(r.passed());
}

TEST_CASE("a wrong analytic gradient is caught") {
  Rng rng(1);
  auto x = testing::random_tensor({4, 3}, rng, true);
  LossFn<double> f = [](const std::vector<Tensor<double>>& in) { return sum(mul(in[0], in[0])); };
  GradcheckOptions o;
  auto good = gradcheck(f, {x}, o);
  CHECK(good.rel_error <= 1e-8);
  std::vector<std::vector<double>> wrong{std::vector<double>(12, 0.0)};
  for (std::size_t i = 0; i < 12; ++i) wrong[0][i] = 2.0 * x.storage()[i] * (i == 5 ? 1.01 : 1.0);
  auto bad = gradcheck(f, {x}, o, &wrong);
  CHECK(bad.rel_error > 1e-3);
}

TEST_CASE("unknown suite name") { CHECK_THROWS(run_gradcheck_suite<double>("nope", 0)); }

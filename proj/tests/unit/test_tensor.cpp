#include <cmath>

#include "doctest.h"
#include "support.hpp"
#include "thtd/adam.hpp"
#include "thtd/ops.hpp"

using namespace thtd;
using testing::max_abs_diff;
using testing::random_tensor;
using TD = Tensor<double>;

TEST_CASE("conv3d identity kernel returns the input") {
  auto x = TD::full({1, 1, 2, 3, 3}, 1.0);
  ConvSpec sp;
  auto w = TD::full({1, 1, 1, 1, 1}, 1.0);
  auto b = TD::zeros({1});
  auto y = conv3d(x, sp, w, b);
  CHECK(y.shape() == x.shape());
  CHECK(max_abs_diff(y.storage(), x.storage()) == 0.0);
}

TEST_CASE("conv3d temporal halving shape") {
  ConvSpec sp;
  sp.kernel = {2, 3, 3};
  sp.stride = {2, 1, 1};
  sp.padding = {0, 1, 1};
  auto y = conv3d(TD::full({1, 1, 4, 4, 4}, 1.0), sp, TD::full(sp.weight_shape(), 0.1), TD::zeros({1}));
  CHECK(y.shape() == Shape{1, 1, 2, 4, 4});
}

TEST_CASE("conv3d matches the nested-loop oracle") {
  Rng rng(7);
  struct Case {
    Shape in;
    ConvSpec sp;
  };
  std::vector<Case> cases;
  {
    ConvSpec sp;
    sp.kernel = {2, 3, 3};
    sp.in_channels = 2;
    sp.out_channels = 4;
    cases.push_back({{1, 2, 3, 5, 5}, sp});
  }
  {
    ConvSpec sp;
    sp.kernel = {2, 3, 3};
    sp.stride = {2, 2, 1};
    sp.padding = {1, 1, 1};
    sp.in_channels = 3;
    sp.out_channels = 2;
    cases.push_back({{2, 3, 4, 6, 5}, sp});
  }
  {
    ConvSpec sp;
    sp.kernel = {1, 3, 3};
    sp.padding = {0, 1, 1};
    sp.in_channels = 4;
    sp.out_channels = 4;
    sp.groups = 4;
    cases.push_back({{1, 4, 2, 4, 4}, sp});
  }
  {
    ConvSpec sp;
    sp.kernel = {3, 1, 2};
    sp.stride = {1, 1, 2};
    sp.padding = {2, 0, 0};
    sp.in_channels = 4;
    sp.out_channels = 6;
    sp.groups = 2;
    cases.push_back({{1, 4, 3, 3, 6}, sp});
  }
  for (const auto& c : cases) {
    auto x = random_tensor(c.in, rng);
    auto w = random_tensor(c.sp.weight_shape(), rng);
    auto b = random_tensor({c.sp.out_channels}, rng);
    auto y = conv3d(x, c.sp, w, b);
    auto ref = testing::naive_conv3d(x.storage(), c.in, c.sp, w.storage(), b.storage());
    REQUIRE(y.storage().size() == ref.size());
    CHECK(max_abs_diff(y.storage(), ref) <= 1e-12);
  }
}

TEST_CASE("conv3d errors") {
  ConvSpec sp;
  sp.kernel = {3, 3, 3};
  CHECK_THROWS_AS(conv3d(TD::zeros({1, 1, 2, 2, 2}), sp, TD::zeros(sp.weight_shape()), TD::zeros({1})),
                  ConfigError);
  ConvSpec sp2;
  sp2.in_channels = 2;
  CHECK_THROWS_AS(conv3d(TD::zeros({1, 3, 2, 2, 2}), sp2, TD::zeros(sp2.weight_shape()), TD::zeros({1})),
                  ShapeError);
  CHECK_THROWS_AS(conv3d(TD::zeros({1, 2, 2, 2, 2}), sp2, TD::zeros({1, 3, 1, 1, 1}), TD::zeros({1})), ShapeError);
}

TEST_CASE("upsample_spatial") {
  auto x = TD::from_data({1, 1, 1, 2, 2}, {1, 2, 3, 4});
  CHECK(upsample_spatial(x, 1).storage() == x.storage());
  auto y = upsample_spatial(x, 2);
  CHECK(y.shape() == Shape{1, 1, 1, 4, 4});
  CHECK(y.storage() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  Rng rng(3);
  auto r = random_tensor({2, 3, 2, 3, 5}, rng);
  for (std::int64_t f : {2, 3}) {
    auto u = upsample_spatial(r, f);
    CHECK(sum(u).item() == doctest::Approx(double(f * f) * sum(r).item()).epsilon(1e-12));
  }
  CHECK_THROWS_AS(upsample_spatial(x, 0), ConfigError);
}

TEST_CASE("linear") {
  Rng rng(11);
  auto x = random_tensor({2, 3, 4}, rng);
  std::vector<double> eye(16, 0.0);
  for (int i = 0; i < 4; ++i) eye[i * 5] = 1.0;
  CHECK(linear(x, TD::from_data({4, 4}, eye), TD::zeros({4})).storage() == x.storage());

  auto s = linear(x, TD::full({1, 4}, 1.0), TD::zeros({1}));
  for (int p = 0; p < 6; ++p) {
    double acc = 0;
    for (int k = 0; k < 4; ++k) acc += x.storage()[p * 4 + k];
    CHECK(std::abs(s.storage()[p] - acc) <= 1e-15);
  }

  auto w = random_tensor({5, 4}, rng);
  auto b = random_tensor({5}, rng);
  auto y = linear(x, w, b);
  CHECK(y.shape() == Shape{2, 3, 5});
  double worst = 0;
  for (int p = 0; p < 6; ++p)
    for (int o = 0; o < 5; ++o) {
      double acc = b.storage()[o];
      for (int k = 0; k < 4; ++k) acc += w.storage()[o * 4 + k] * x.storage()[p * 4 + k];
      worst = std::max(worst, std::abs(acc - y.storage()[p * 5 + o]));
    }
  CHECK(worst <= 1e-12);
  CHECK_THROWS_AS(linear(x, TD::zeros({5, 3}), TD::zeros({5})), ShapeError);
}

TEST_CASE("softmax, relu, sigmoid") {
  auto c = softmax(TD::full({1, 6}, 2.5), -1);
  for (double v : c.storage()) CHECK(std::abs(v - 1.0 / 6.0) <= 1e-15);

  Rng rng(5);
  auto x = random_tensor({4, 7, 3}, rng, false, 20.0);
  for (int axis : {0, 1, 2, -1}) {
    auto s = softmax(x, axis);
    const auto& sh = x.shape();
    const int a = axis < 0 ? axis + 3 : axis;
    std::int64_t inner = 1;
    for (int d = a + 1; d < 3; ++d) inner *= sh[d];
    const auto outer = x.numel() / (sh[a] * inner);
    for (std::int64_t o = 0; o < outer; ++o)
      for (std::int64_t i = 0; i < inner; ++i) {
        double acc = 0;
        for (std::int64_t k = 0; k < sh[a]; ++k) acc += s.storage()[(o * sh[a] + k) * inner + i];
        CHECK(std::abs(acc - 1.0) <= 1e-9);
      }
  }
  CHECK_THROWS_AS(softmax(x, 3), ShapeError);
  CHECK_THROWS_AS(softmax(x, -4), ShapeError);

  auto r = relu(TD::from_data({2}, {-3.0, 2.0}));
  CHECK(r.storage() == std::vector<double>{0.0, 2.0});
  CHECK(sigmoid(TD::zeros({1})).item() == 0.5);
  auto sg = sigmoid(random_tensor({100}, rng, false, 10.0));
  for (double v : sg.storage()) CHECK((v > 0.0 && v < 1.0));
  auto sat = sigmoid(TD::from_data({4}, {-800.0, -40.0, 40.0, 800.0}));
  for (double v : sat.storage()) CHECK((v > 0.0 && v < 1.0));
  auto satf = sigmoid(Tensor<float>::from_data({2}, {-200.f, 200.f}));
  for (float v : satf.storage()) CHECK((v > 0.f && v < 1.f));
  CHECK(std::isnan(sigmoid(TD::from_data({1}, {std::nan("")})).item()));
}

TEST_CASE("layer_norm statistics before the affine part") {
  Rng rng(9);
  auto x = random_tensor({3, 32}, rng, false, 4.0);
  auto y = layer_norm(x, TD::full({32}, 1.0), TD::zeros({32}), 0.0);
  for (int r = 0; r < 3; ++r) {
    double m = 0, v = 0;
    for (int i = 0; i < 32; ++i) m += y.storage()[r * 32 + i];
    m /= 32;
    for (int i = 0; i < 32; ++i) v += std::pow(y.storage()[r * 32 + i] - m, 2);
    v /= 32;
    CHECK(std::abs(m) <= 1e-9);
    CHECK(std::abs(v - 1.0) <= 1e-6);
  }
  CHECK_THROWS_AS(layer_norm(x, TD::zeros({31}), TD::zeros({31})), ShapeError);
}

TEST_CASE("backward basics") {
  Rng rng(2);
  auto x = random_tensor({3, 4}, rng, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  auto z = random_tensor({5}, rng, true);
  backward(sum(mul(z, z)));
  for (std::size_t i = 0; i < 5; ++i) CHECK(z.grad()[i] == doctest::Approx(2 * z.storage()[i]).epsilon(1e-15));
}

TEST_CASE("backward errors and retain_graph") {
  Rng rng(4);
  auto x = random_tensor({3}, rng, true);
  CHECK_THROWS_AS(backward(mul(x, x)), GraphError);

  auto loss = sum(mul(x, x));
  backward(loss);
  CHECK_THROWS_AS(backward(loss), GraphError);

  auto y = random_tensor({3}, rng, true);
  auto l2 = sum(mul(y, y));
  backward(l2, true);
  backward(l2);
  for (std::size_t i = 0; i < 3; ++i) CHECK(y.grad()[i] == doctest::Approx(4 * y.storage()[i]));

  CHECK_THROWS_AS(backward(sum(TD::zeros({2}))), GraphError);
}

TEST_CASE("no-grad guard skips graph recording") {
  auto x = TD::full({2}, 1.0, true);
  NoGradGuard g;
  auto y = mul(x, x);
  CHECK_FALSE(y.requires_grad());
}

TEST_CASE("ops are deterministic") {
  Rng a(13), b(13);
  ConvSpec sp;
  sp.kernel = {2, 3, 3};
  sp.padding = {1, 1, 1};
  sp.in_channels = 3;
  sp.out_channels = 5;
  auto run = [&](Rng& r) {
    auto x = random_tensor({1, 3, 4, 6, 6}, r);
    return conv3d(x, sp, random_tensor(sp.weight_shape(), r), random_tensor({5}, r)).storage();
  };
  CHECK(run(a) == run(b));
}

TEST_CASE("adam: zero gradient leaves everything unchanged") {
  std::vector<TD> p{TD::from_data({3}, {1.0, -2.0, 0.5})};
  auto st = AdamState<double>::zeros_like(p, {});
  std::vector<std::vector<double>> g{{0.0, 0.0, 0.0}};
  adam_step(p, g, st);
  CHECK(p[0].storage() == std::vector<double>{1.0, -2.0, 0.5});
  CHECK(st.m[0] == std::vector<double>{0, 0, 0});
  CHECK(st.v[0] == std::vector<double>{0, 0, 0});
  CHECK(st.step == 1);
}

TEST_CASE("adam: one hand-computed step") {
  std::vector<TD> p{TD::from_data({1}, {3.0})};
  AdamOptions o;
  o.lr = 0.1;
  auto st = AdamState<double>::zeros_like(p, o);
  adam_step(p, std::vector<std::vector<double>>{{1.0}}, st);
  // m = 0.1, v = 0.001, m_hat = 1, v_hat = 1
  const double expect = 3.0 - 0.1 * 1.0 / (1.0 + 1e-8);
  CHECK(std::abs(p[0].item() - expect) <= 1e-15);
  CHECK(std::abs(st.m[0][0] - 0.1) <= 1e-15);
  CHECK(std::abs(st.v[0][0] - 0.001) <= 1e-15);
}

TEST_CASE("adam minimizes x^2") {
  std::vector<TD> p{TD::from_data({1}, {5.0}, true)};
  AdamOptions o;
  o.lr = 0.1;
  auto st = AdamState<double>::zeros_like(p, o);
  for (int i = 0; i < 100; ++i) {
    p[0].zero_grad();
    backward(sum(mul(p[0], p[0])));
    adam_step(p, st);
  }
  // scalar reference loop
  double x = 5, m = 0, v = 0;
  for (int t = 1; t <= 100; ++t) {
    const double g = 2 * x;
    m = 0.9 * m + 0.1 * g;
    v = 0.999 * v + 0.001 * g * g;
    x -= 0.1 * (m / (1 - std::pow(0.9, t))) / (std::sqrt(v / (1 - std::pow(0.999, t))) + 1e-8);
  }
  CHECK(std::abs(p[0].item()) < 1.0);
  CHECK(p[0].item() == doctest::Approx(x).epsilon(1e-9));
}

TEST_CASE("adam shape mismatch") {
  std::vector<TD> p{TD::zeros({3})};
  auto st = AdamState<double>::zeros_like(p, {});
  CHECK_THROWS_AS(adam_step(p, std::vector<std::vector<double>>{{1.0}}, st), ShapeError);
}

TEST_CASE("rng is reproducible and mix_seed separates streams") {
  Rng a(42), b(42);
  for (int i = 0; i < 10; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 2, 4));
  CHECK(mix_seed(1, 2, 3) != mix_seed(1, 3, 3));
  Rng c(1);
  for (int i = 0; i < 1000; ++i) {
    const double u = c.uniform();
    CHECK((u >= 0.0 && u < 1.0));
    CHECK(std::abs(c.trunc_normal(0.02)) <= 0.04);
  }
}

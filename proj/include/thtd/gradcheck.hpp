#pragma once

// Central finite-difference checks of the analytic gradients.

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "thtd/tensor.hpp"

namespace thtd {

template <typename T>
using LossFn = std::function<Tensor<T>(const std::vector<Tensor<T>>&)>;

struct GradcheckOptions {
  double step = 1e-5;
  /// Coordinates checked per input tensor; 0 checks every coordinate.
  std::int64_t max_coords = 0;
  std::uint64_t seed = 0;  // picks the sampled coordinates
  /// Denominator floor as a fraction of the largest numeric gradient.
  double scale_floor = 1e-6;
  /// When > 0, each coordinate is also differenced with half the step; if the
  /// two estimates differ by more than this fraction of the gradient scale
  /// the stencil straddles a kink and the coordinate is skipped.
  double kink_tolerance = 0.0;
};

struct GradcheckStats {
  /// Max over inputs of max|analytic - numeric| / max|numeric|, both maxima
  /// over the checked coordinates of that input. The denominator is floored at
  /// `scale_floor` times the largest numeric gradient of any input, so inputs
  /// whose true gradient vanishes are compared against the problem's scale.
  double rel_error = 0.0;
  std::int64_t coords = 0;   // compared coordinates
  std::int64_t skipped = 0;  // coordinates rejected as non-smooth
  std::size_t worst_input = 0;
  std::vector<double> max_abs_diff;     // per input
  std::vector<double> max_abs_numeric;  // per input
};

/// `inputs` must be leaves with requires_grad; their storage is perturbed in
/// place and restored. `analytic`, when given, replaces the gradients
/// obtained by backpropagating f.
template <typename T>
GradcheckStats gradcheck(const LossFn<T>& f, const std::vector<Tensor<T>>& inputs, const GradcheckOptions& opts,
                         const std::vector<std::vector<double>>* analytic = nullptr);

struct GradcheckResult {
  std::string suite;
  std::uint64_t seed = 0;
  double rel_error = 0.0;
  double tolerance = 0.0;
  std::int64_t coords = 0;
  std::int64_t skipped = 0;
  /// At most a tenth of the probed coordinates may be rejected as kinks.
  bool passed() const { return rel_error <= tolerance && skipped * 9 <= coords; }
};

/// Names of the primitive/loss/module suites (excluding the full model).
const std::vector<std::string>& gradcheck_suite_names();

/// Runs one named suite ("model" for the full toy network) at one seed.
template <typename T>
GradcheckResult run_gradcheck_suite(const std::string& name, std::uint64_t seed);

struct GradcheckPlan {
  bool f64 = true;
  std::int64_t seeds = 10;
  bool include_model = true;
  std::uint64_t seed = 0;  // first seed
};

std::vector<GradcheckResult> run_gradcheck(const GradcheckPlan& plan,
                                           const std::function<void(const GradcheckResult&)>& on_result = {});

}  // namespace thtd

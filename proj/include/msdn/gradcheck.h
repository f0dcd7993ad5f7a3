#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msdn/dataset.h"
#include "msdn/losses.h"
#include "msdn/model.h"

namespace msdn {

struct TinyDims {
  int num_attributes = 5;
  int num_regions = 4;
  int dim_visual = 8;
  int dim_attribute = 6;
  int num_seen = 3;
  int num_unseen = 2;
  int batch = 2;
};

// Parses "k,r,dv,da,cs,cu"; batch keeps its default.
TinyDims parse_tiny_dims(const std::string& text);

struct TinyProblem {
  Dataset dataset;
  ModelParams params;
  std::vector<int> batch;
};

// Random features, attributes and class semantics with `batch` training
// samples of seen classes and one test sample per unseen class. Parameters
// are drawn from N(0, 0.5²) so attention is far from uniform.
TinyProblem random_tiny_problem(const TinyDims& dims, std::uint64_t seed);

// Loss settings used for gradient checks: every term carries a weight of
// order one so that each backward path is visible at the tolerance.
LossConfig gradient_check_loss_config();

struct MatrixCheck {
  std::string name;
  GradCheckResult result;
};

// Lets a caller alter the analytic gradients before comparison.
using GradientHook = std::function<void(ModelParams&)>;

// Checks d total_loss / d W for each of the five matrices separately.
std::vector<MatrixCheck> check_total_loss_gradients(const TinyProblem& problem, const LossConfig& cfg,
                                                    const GradientHook& hook = {},
                                                    double step = kDefaultGradCheckStep);

inline constexpr double kGradCheckTolerance = 1e-5;

}  // namespace msdn

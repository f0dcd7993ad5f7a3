#include "msdn/gradcheck.h"

#include <sstream>

#include "msdn/errors.h"
#include "msdn/training.h"

namespace msdn {

TinyDims parse_tiny_dims(const std::string& text) {
  std::vector<int> values;
  std::stringstream in(text);
  std::string item;
  while (std::getline(in, item, ',')) {
    std::size_t used = 0;
    int v = 0;
    try {
      v = std::stoi(item, &used);
    } catch (const std::exception&) {
      used = 0;
    }
    if (used == 0 || used != item.size()) throw ArgumentError("--dims: '" + item + "' is not an integer");
    if (v < 1) throw ArgumentError("--dims: every entry must be >= 1");
    values.push_back(v);
  }
  if (values.size() != 6) throw ArgumentError("--dims expects k,r,dv,da,cs,cu (6 integers)");
  TinyDims d;
  d.num_attributes = values[0];
  d.num_regions = values[1];
  d.dim_visual = values[2];
  d.dim_attribute = values[3];
  d.num_seen = values[4];
  d.num_unseen = values[5];
  return d;
}

TinyProblem random_tiny_problem(const TinyDims& dims, std::uint64_t seed) {
  if (dims.num_attributes < 1 || dims.num_regions < 1 || dims.dim_visual < 1 || dims.dim_attribute < 1 ||
      dims.num_seen < 1 || dims.num_unseen < 1 || dims.batch < 1) {
    throw ArgumentError("tiny dims must all be >= 1");
  }
  Rng rng(seed);
  auto normal = [&](std::size_t rows, std::size_t cols, double scale) {
    Matrix m(rows, cols);
    for (double& x : m.data()) x = scale * rng.next_normal();
    return m;
  };
  const std::size_t k = dims.num_attributes, r = dims.num_regions;
  const std::size_t dv = dims.dim_visual, da = dims.dim_attribute;
  const int classes = dims.num_seen + dims.num_unseen;

  TinyProblem p;
  Dataset& ds = p.dataset;
  ds.attributes = normal(k, da, 1.0);
  ds.class_semantics = rng_uniform(rng, 0.0, 1.0, classes, k);
  for (int c = 0; c < dims.num_seen; ++c) ds.seen_classes.push_back(c);
  for (int c = dims.num_seen; c < classes; ++c) ds.unseen_classes.push_back(c);
  for (int i = 0; i < dims.batch; ++i) {
    ds.features.push_back(normal(r, dv, 1.0));
    ds.labels.push_back(static_cast<int>(rng.next_index(dims.num_seen)));
    ds.train_idx.push_back(i);
    p.batch.push_back(i);
  }
  for (int c : ds.unseen_classes) {
    ds.test_unseen_idx.push_back(static_cast<int>(ds.features.size()));
    ds.features.push_back(normal(r, dv, 1.0));
    ds.labels.push_back(c);
  }

  p.params = ModelParams::zeros(dims_for(ds));
  for (Matrix* m : p.params.matrices()) *m = normal(m->rows(), m->cols(), 0.5);
  return p;
}

LossConfig gradient_check_loss_config() {
  LossConfig cfg;
  cfg.lambda_cal = 0.5;
  cfg.lambda_distill = 1.0;
  cfg.epsilon_kl = 1e-8;
  return cfg;
}

std::vector<MatrixCheck> check_total_loss_gradients(const TinyProblem& problem, const LossConfig& cfg,
                                                    const GradientHook& hook, double step) {
  ModelParams analytic = total_loss(problem.params, problem.dataset, problem.batch, cfg).grads;
  if (hook) hook(analytic);

  std::vector<MatrixCheck> out;
  for (std::size_t m = 0; m < ModelParams::kNames.size(); ++m) {
    const Matrix& point = *problem.params.matrices()[m];
    auto objective = [&](std::span<const double> values) {
      ModelParams perturbed = problem.params;
      Matrix& target = *perturbed.matrices()[m];
      std::copy(values.begin(), values.end(), target.data().begin());
      return total_loss(perturbed, problem.dataset, problem.batch, cfg).breakdown.total;
    };
    out.push_back({ModelParams::kNames[m],
                   grad_check(objective, point.data(), analytic.matrices()[m]->data(), step)});
  }
  return out;
}

}  // namespace msdn

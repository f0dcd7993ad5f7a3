#pragma once

#include <string>
#include <vector>

#include "msdn/config.h"
#include "msdn/dataset.h"
#include "msdn/training.h"

namespace msdn {

// Global-average-pooling baseline: e(x) = M · mean_r v_r with M of shape
// K×d_v, trained with the same calibrated cross-entropy as the sub-nets.
struct BaselineModel {
  Matrix projection;  // K×d_v
};

struct BaselineResult {
  BaselineModel model;
  std::vector<double> history;  // training-split objective per epoch
};

std::vector<double> baseline_embedding(const BaselineModel& model, const Matrix& regions);
BaselineResult train_baseline(const Dataset& ds, const TrainConfig& cfg);
EvalReport evaluate_baseline(const BaselineModel& model, const Dataset& ds);

struct AblationRow {
  std::string variant;
  double acc = 0.0;
  double harmonic = 0.0;
  // Training objective per epoch of the model the row was evaluated on.
  std::vector<double> loss_trace;
};

// Variant names in output order:
//   baseline, v2a_no_distill, a2v_no_distill, v2a_distill, a2v_distill,
//   distill_jsd_only, distill_l2_only, full
const std::vector<std::string>& ablation_variants();

// Trains every variant with the shared seed and settings of `cfg`. The
// single-branch rows "with distillation" evaluate one branch of the jointly
// trained model.
std::vector<AblationRow> run_ablation(const Dataset& ds, const RunConfig& cfg);

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

}  // namespace msdn

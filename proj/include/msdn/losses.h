#pragma once

#include <span>
#include <string>

#include "msdn/dataset.h"
#include "msdn/model.h"
#include "msdn/ndmath.h"

namespace msdn {

// Sign of the self-calibration term. kProse adds λ_cal·Σ_{c'∈U} −log q(c'),
// pushing probability towards unseen classes. kLiteral subtracts it, which
// is what the bracketed formula gives when expanded as typeset.
enum class CalibrationSign { kProse, kLiteral };

// Which parts of the mutual distillation loss are active.
enum class DistillTerms { kBoth, kJsdOnly, kL2Only };

// Which sub-nets contribute a supervised loss. Distillation needs both.
enum class Branches { kBoth, kA2VOnly, kV2AOnly };

struct LossConfig {
  double lambda_cal = 0.1;
  double lambda_distill = 0.001;
  CalibrationSign calibration_sign = CalibrationSign::kProse;
  double epsilon_kl = 1e-8;
  DistillTerms distill_terms = DistillTerms::kBoth;
  Branches branches = Branches::kBoth;

  // Throws ArgumentError on negative weights or epsilon_kl outside (0, 1e-3].
  void validate() const;
};

struct LossBreakdown {
  double acec_a2v = 0.0;
  double acec_v2a = 0.0;
  double distill = 0.0;
  double total = 0.0;
};

struct ScoreLoss {
  double loss = 0.0;
  Matrix grad;  // d loss / d scores, same shape as the scores
};

// Attribute-based cross-entropy with self-calibration on a batch×C score
// matrix. Labels must belong to `seen_classes`; all quantities are averaged
// over the batch.
ScoreLoss acec_loss(const Matrix& scores, std::span<const int> labels,
                    std::span<const int> seen_classes, std::span<const int> unseen_classes,
                    const LossConfig& cfg);

struct DistillLoss {
  double loss = 0.0;
  Matrix grad_first;
  Matrix grad_second;
};

// Symmetric KL plus squared ℓ2 between row-wise softmaxes of two batch×C_s
// score matrices. Probabilities are clamped to [epsilon_kl, 1] and
// renormalized before use.
DistillLoss distill_loss(const Matrix& first, const Matrix& second, const LossConfig& cfg);

// Clamped, renormalized probability vector used by distill_loss.
std::vector<double> distill_probabilities(std::span<const double> scores, double epsilon);

struct TotalLoss {
  LossBreakdown breakdown;
  ModelParams grads;
};

// Overall objective on the samples `batch` of `ds`, with gradients of
// breakdown.total w.r.t. every parameter matrix.
TotalLoss total_loss(const ModelParams& params, const Dataset& ds, std::span<const int> batch,
                     const LossConfig& cfg);

const char* to_string(CalibrationSign s);
const char* to_string(DistillTerms t);
const char* to_string(Branches b);
CalibrationSign parse_calibration_sign(const std::string& s);
DistillTerms parse_distill_terms(const std::string& s);
Branches parse_branches(const std::string& s);

}  // namespace msdn

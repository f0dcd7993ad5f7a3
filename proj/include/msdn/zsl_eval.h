#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "msdn/dataset.h"
#include "msdn/model.h"

namespace msdn {

enum class EvalMode { kCzsl, kGzsl };

struct PredictConfig {
  double alpha1 = 0.9;  // weight of the attribute→visual embedding
  double alpha2 = 0.1;  // weight of the visual→attribute embedding
  EvalMode mode = EvalMode::kGzsl;

  void validate() const;
};

// +1 for unseen classes, −1 for every other class.
std::vector<double> calibration_offsets(std::size_t num_classes, std::span<const int> unseen_classes);

// (alpha1·psi + alpha2·Psi)ᵀ z^c + offset[c] for every class c.
std::vector<double> calibrated_scores(std::span<const double> psi, std::span<const double> big_psi,
                                      const Matrix& class_semantics, std::span<const int> unseen_classes,
                                      double alpha1, double alpha2);

// Highest-scoring candidate; ties go to the smallest class index.
int argmax_over(std::span<const double> scores, std::span<const int> candidates);

// CZSL restricts candidates to unseen classes, GZSL uses all of them.
int predict(const ForwardTrace& trace, const Matrix& class_semantics, std::span<const int> seen_classes,
            std::span<const int> unseen_classes, const PredictConfig& cfg);

double harmonic_mean(double seen, double unseen);

struct ClassAccuracy {
  int class_id = 0;
  std::string split;  // "seen" or "unseen"
  double accuracy = 0.0;
};

struct EvalReport {
  double acc = 0.0;  // CZSL per-class top-1 on unseen classes
  double unseen = 0.0;
  double seen = 0.0;
  double harmonic = 0.0;
  std::vector<ClassAccuracy> per_class;  // rows for the requested mode
};

// Mean over classes present in `labels` of the fraction predicted correctly.
// `class_ids` receives the classes in ascending order, `accuracies` the
// matching per-class values.
double per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                          std::vector<int>* class_ids = nullptr,
                          std::vector<double>* accuracies = nullptr);

// Maps (sample index, mode) to a predicted class.
using Predictor = std::function<int(int, EvalMode)>;

EvalReport evaluate_with(const Predictor& predictor, const Dataset& ds, EvalMode table_mode);
EvalReport evaluate(const ModelParams& params, const Dataset& ds, const PredictConfig& cfg);

// Per-class accuracy over `indices` when the argmax runs over seen classes
// only (no calibration needed since the offset is constant there).
double seen_class_accuracy(const ModelParams& params, const Dataset& ds, std::span<const int> indices,
                           const PredictConfig& cfg);

void write_metrics_csv(const EvalReport& report, const std::string& path);
void write_per_class_csv(const EvalReport& report, const std::string& path);

const char* to_string(EvalMode mode);
EvalMode parse_eval_mode(const std::string& s);

}  // namespace msdn

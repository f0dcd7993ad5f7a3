#include "msdn/zsl_eval.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <locale>
#include <map>

#include "msdn/errors.h"

namespace msdn {

void PredictConfig::validate() const {
  if (!(alpha1 >= 0.0) || !(alpha2 >= 0.0)) throw ArgumentError("alpha1 and alpha2 must be >= 0");
  if (alpha1 == 0.0 && alpha2 == 0.0) throw ArgumentError("alpha1 and alpha2 cannot both be 0");
}

std::vector<double> calibration_offsets(std::size_t num_classes, std::span<const int> unseen_classes) {
  std::vector<double> offsets(num_classes, -1.0);
  for (int c : unseen_classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) {
      throw ArgumentError("unseen class " + std::to_string(c) + " out of range");
    }
    offsets[c] = 1.0;
  }
  return offsets;
}

std::vector<double> calibrated_scores(std::span<const double> psi, std::span<const double> big_psi,
                                      const Matrix& class_semantics, std::span<const int> unseen_classes,
                                      double alpha1, double alpha2) {
  if (psi.size() != big_psi.size()) throw ShapeError("calibrated_scores: embedding lengths differ");
  std::vector<double> fused(psi.size());
  for (std::size_t k = 0; k < psi.size(); ++k) fused[k] = alpha1 * psi[k] + alpha2 * big_psi[k];
  std::vector<double> scores = class_scores(fused, class_semantics);
  const auto offsets = calibration_offsets(scores.size(), unseen_classes);
  for (std::size_t c = 0; c < scores.size(); ++c) scores[c] += offsets[c];
  return scores;
}

int argmax_over(std::span<const double> scores, std::span<const int> candidates) {
  if (candidates.empty()) throw ArgumentError("argmax over an empty candidate set");
  int best = -1;
  for (int c : candidates) {
    if (c < 0 || static_cast<std::size_t>(c) >= scores.size()) {
      throw ArgumentError("candidate class " + std::to_string(c) + " out of range");
    }
    if (best < 0 || scores[c] > scores[best] || (scores[c] == scores[best] && c < best)) best = c;
  }
  return best;
}

int predict(const ForwardTrace& trace, const Matrix& class_semantics, std::span<const int> seen_classes,
            std::span<const int> unseen_classes, const PredictConfig& cfg) {
  cfg.validate();
  const auto scores = calibrated_scores(trace.a2v.psi, trace.v2a.psi, class_semantics, unseen_classes,
                                        cfg.alpha1, cfg.alpha2);
  if (cfg.mode == EvalMode::kCzsl) return argmax_over(scores, unseen_classes);
  std::vector<int> all(seen_classes.begin(), seen_classes.end());
  all.insert(all.end(), unseen_classes.begin(), unseen_classes.end());
  return argmax_over(scores, all);
}

double harmonic_mean(double seen, double unseen) {
  if (!(seen >= 0.0 && seen <= 1.0) || !(unseen >= 0.0 && unseen <= 1.0)) {
    throw ArgumentError("harmonic_mean: accuracies must lie in [0, 1]");
  }
  if (seen + unseen == 0.0) return 0.0;
  return 2.0 * seen * unseen / (seen + unseen);
}

double per_class_accuracy(std::span<const int> predictions, std::span<const int> labels,
                          std::vector<int>* class_ids, std::vector<double>* accuracies) {
  if (predictions.size() != labels.size()) throw ShapeError("per_class_accuracy: length mismatch");
  if (labels.empty()) throw ArgumentError("per_class_accuracy: no samples");
  std::map<int, std::pair<std::size_t, std::size_t>> counts;  // class -> (correct, total)
  for (std::size_t i = 0; i < labels.size(); ++i) {
    auto& [correct, total] = counts[labels[i]];
    ++total;
    if (predictions[i] == labels[i]) ++correct;
  }
  double sum = 0.0;
  for (const auto& [cls, ct] : counts) {
    const double acc = static_cast<double>(ct.first) / static_cast<double>(ct.second);
    sum += acc;
    if (class_ids != nullptr) class_ids->push_back(cls);
    if (accuracies != nullptr) accuracies->push_back(acc);
  }
  return sum / static_cast<double>(counts.size());
}

EvalReport evaluate_with(const Predictor& predictor, const Dataset& ds, EvalMode table_mode) {
  if (ds.test_unseen_idx.empty()) throw ArgumentError("evaluate: test_unseen_idx is empty");
  if (ds.test_seen_idx.empty()) throw ArgumentError("evaluate: test_seen_idx is empty");

  auto run = [&](const std::vector<int>& idx, EvalMode mode, std::vector<int>* ids,
                 std::vector<double>* accs) {
    std::vector<int> preds, labels;
    preds.reserve(idx.size());
    labels.reserve(idx.size());
    for (int i : idx) {
      preds.push_back(predictor(i, mode));
      labels.push_back(ds.labels[i]);
    }
    return per_class_accuracy(preds, labels, ids, accs);
  };

  EvalReport report;
  std::vector<int> czsl_ids, unseen_ids, seen_ids;
  std::vector<double> czsl_acc, unseen_acc, seen_acc;
  report.acc = run(ds.test_unseen_idx, EvalMode::kCzsl, &czsl_ids, &czsl_acc);
  report.unseen = run(ds.test_unseen_idx, EvalMode::kGzsl, &unseen_ids, &unseen_acc);
  report.seen = run(ds.test_seen_idx, EvalMode::kGzsl, &seen_ids, &seen_acc);
  report.harmonic = harmonic_mean(report.seen, report.unseen);

  if (table_mode == EvalMode::kCzsl) {
    for (std::size_t i = 0; i < czsl_ids.size(); ++i) report.per_class.push_back({czsl_ids[i], "unseen", czsl_acc[i]});
  } else {
    for (std::size_t i = 0; i < seen_ids.size(); ++i) report.per_class.push_back({seen_ids[i], "seen", seen_acc[i]});
    for (std::size_t i = 0; i < unseen_ids.size(); ++i) report.per_class.push_back({unseen_ids[i], "unseen", unseen_acc[i]});
    std::sort(report.per_class.begin(), report.per_class.end(),
              [](const ClassAccuracy& a, const ClassAccuracy& b) { return a.class_id < b.class_id; });
  }
  return report;
}

EvalReport evaluate(const ModelParams& params, const Dataset& ds, const PredictConfig& cfg) {
  cfg.validate();
  std::vector<int> all(ds.seen_classes);
  all.insert(all.end(), ds.unseen_classes.begin(), ds.unseen_classes.end());
  // Both modes score the same sample, so cache the calibrated scores.
  std::map<int, std::vector<double>> cache;
  Predictor predictor = [&](int i, EvalMode mode) {
    auto it = cache.find(i);
    if (it == cache.end()) {
      const ForwardTrace trace = forward(ds.features[i], ds.attributes, params);
      it = cache.emplace(i, calibrated_scores(trace.a2v.psi, trace.v2a.psi, ds.class_semantics,
                                              ds.unseen_classes, cfg.alpha1, cfg.alpha2)).first;
    }
    return mode == EvalMode::kCzsl ? argmax_over(it->second, ds.unseen_classes) : argmax_over(it->second, all);
  };
  return evaluate_with(predictor, ds, cfg.mode);
}

double seen_class_accuracy(const ModelParams& params, const Dataset& ds, std::span<const int> indices,
                           const PredictConfig& cfg) {
  cfg.validate();
  std::vector<int> preds, labels;
  for (int i : indices) {
    const ForwardTrace trace = forward(ds.features[i], ds.attributes, params);
    const auto scores = calibrated_scores(trace.a2v.psi, trace.v2a.psi, ds.class_semantics,
                                          ds.unseen_classes, cfg.alpha1, cfg.alpha2);
    preds.push_back(argmax_over(scores, ds.seen_classes));
    labels.push_back(ds.labels[i]);
  }
  return per_class_accuracy(preds, labels);
}

namespace {

std::ofstream open_csv(const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  return out;
}

}  // namespace

void write_metrics_csv(const EvalReport& report, const std::string& path) {
  auto out = open_csv(path);
  out << "metric,value\n";
  out << "acc," << report.acc << "\n";
  out << "U," << report.unseen << "\n";
  out << "S," << report.seen << "\n";
  out << "H," << report.harmonic << "\n";
}

void write_per_class_csv(const EvalReport& report, const std::string& path) {
  auto out = open_csv(path);
  out << "class_id,split,accuracy\n";
  for (const auto& row : report.per_class) out << row.class_id << "," << row.split << "," << row.accuracy << "\n";
}

const char* to_string(EvalMode mode) { return mode == EvalMode::kCzsl ? "czsl" : "gzsl"; }

EvalMode parse_eval_mode(const std::string& s) {
  if (s == "czsl") return EvalMode::kCzsl;
  if (s == "gzsl") return EvalMode::kGzsl;
  throw ArgumentError("mode must be 'czsl' or 'gzsl', got '" + s + "'");
}

}  // namespace msdn

#include "msdn/losses.h"

#include <algorithm>
#include <cmath>

#include "msdn/errors.h"

namespace msdn {

void LossConfig::validate() const {
  if (!(lambda_cal >= 0.0) || !(lambda_distill >= 0.0)) {
    throw ArgumentError("loss weights lambda_cal and lambda_distill must be >= 0");
  }
  if (!(epsilon_kl > 0.0 && epsilon_kl <= 1e-3)) {
    throw ArgumentError("epsilon_kl must lie in (0, 1e-3]");
  }
}

ScoreLoss acec_loss(const Matrix& scores, std::span<const int> labels,
                    std::span<const int> seen_classes, std::span<const int> unseen_classes,
                    const LossConfig& cfg) {
  const std::size_t batch = scores.rows();
  const std::size_t num_classes = scores.cols();
  if (labels.size() != batch) {
    throw ShapeError("acec_loss: " + std::to_string(labels.size()) + " labels for " +
                     std::to_string(batch) + " score rows");
  }
  if (batch == 0) throw ArgumentError("acec_loss: empty batch");
  if (seen_classes.empty()) throw ArgumentError("acec_loss: no seen classes");

  std::vector<int> seen_pos(num_classes, -1);
  std::vector<bool> is_unseen(num_classes, false);
  for (std::size_t i = 0; i < seen_classes.size(); ++i) {
    const int c = seen_classes[i];
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw ArgumentError("acec_loss: seen class out of range");
    seen_pos[c] = static_cast<int>(i);
  }
  for (int c : unseen_classes) {
    if (c < 0 || static_cast<std::size_t>(c) >= num_classes) throw ArgumentError("acec_loss: unseen class out of range");
    is_unseen[c] = true;
  }

  const double cal_weight =
      (cfg.calibration_sign == CalibrationSign::kProse ? 1.0 : -1.0) * cfg.lambda_cal;
  const double inv_batch = 1.0 / static_cast<double>(batch);
  const double num_unseen = static_cast<double>(unseen_classes.size());

  ScoreLoss out{0.0, Matrix(batch, num_classes)};
  std::vector<double> seen_logits(seen_classes.size());
  std::vector<double> calibrated(num_classes);
  for (std::size_t i = 0; i < batch; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= num_classes || seen_pos[y] < 0) {
      throw ArgumentError("acec_loss: label " + std::to_string(y) + " of row " + std::to_string(i) +
                          " is not a seen class");
    }
    const auto row = scores.row(i);
    auto grad = out.grad.row(i);

    for (std::size_t j = 0; j < seen_classes.size(); ++j) seen_logits[j] = row[seen_classes[j]];
    const double seen_lse = log_sum_exp(seen_logits);
    double loss = seen_lse - row[y];
    for (std::size_t j = 0; j < seen_classes.size(); ++j) {
      const double p = std::exp(seen_logits[j] - seen_lse);
      grad[seen_classes[j]] += (p - (seen_classes[j] == y ? 1.0 : 0.0)) * inv_batch;
    }

    if (cal_weight != 0.0 && !unseen_classes.empty()) {
      for (std::size_t c = 0; c < num_classes; ++c) calibrated[c] = row[c] + (is_unseen[c] ? 1.0 : -1.0);
      const double all_lse = log_sum_exp(calibrated);
      double cal = 0.0;
      for (int c : unseen_classes) cal += all_lse - calibrated[c];
      loss += cal_weight * cal;
      for (std::size_t c = 0; c < num_classes; ++c) {
        const double q = std::exp(calibrated[c] - all_lse);
        grad[c] += cal_weight * (num_unseen * q - (is_unseen[c] ? 1.0 : 0.0)) * inv_batch;
      }
    }
    out.loss += loss;
  }
  out.loss *= inv_batch;
  return out;
}

std::vector<double> distill_probabilities(std::span<const double> scores, double epsilon) {
  std::vector<double> p = softmax_stable(scores);
  double total = 0.0;
  for (double& v : p) {
    v = std::max(v, epsilon);
    total += v;
  }
  for (double& v : p) v /= total;
  return p;
}

namespace {

// Pulls a gradient w.r.t. the clamped/renormalized probabilities back to the
// raw scores of one row.
void distill_row_backward(std::span<const double> scores, double epsilon,
                          std::span<const double> d_prob, std::span<double> d_scores) {
  const std::vector<double> p = softmax_stable(scores);
  double total = 0.0;
  for (double v : p) total += std::max(v, epsilon);
  double inner = 0.0;
  for (std::size_t j = 0; j < p.size(); ++j) inner += d_prob[j] * std::max(p[j], epsilon) / total;
  std::vector<double> d_softmax(p.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    d_softmax[j] = p[j] > epsilon ? (d_prob[j] - inner) / total : 0.0;
  }
  const double weighted = dot(p, d_softmax);
  for (std::size_t j = 0; j < p.size(); ++j) d_scores[j] = p[j] * (d_softmax[j] - weighted);
}

}  // namespace

DistillLoss distill_loss(const Matrix& first, const Matrix& second, const LossConfig& cfg) {
  if (first.rows() != second.rows() || first.cols() != second.cols()) {
    throw ShapeError("distill_loss: shapes " + first.shape_string() + " and " + second.shape_string() +
                     " differ");
  }
  const std::size_t batch = first.rows();
  const std::size_t n = first.cols();
  DistillLoss out{0.0, Matrix(batch, n), Matrix(batch, n)};
  if (batch == 0) return out;
  const bool use_jsd = cfg.distill_terms != DistillTerms::kL2Only;
  const bool use_l2 = cfg.distill_terms != DistillTerms::kJsdOnly;
  const double inv_batch = 1.0 / static_cast<double>(batch);

  std::vector<double> d1(n), d2(n);
  for (std::size_t i = 0; i < batch; ++i) {
    const auto p = distill_probabilities(first.row(i), cfg.epsilon_kl);
    const auto q = distill_probabilities(second.row(i), cfg.epsilon_kl);
    double sample = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const double diff = p[j] - q[j];
      const double log_ratio = std::log(p[j]) - std::log(q[j]);
      // ½(KL(p‖q) + KL(q‖p)) = ½ Σ (p − q)(log p − log q); the product form
      // is bitwise symmetric in (p, q).
      double term = 0.0;
      d1[j] = 0.0;
      d2[j] = 0.0;
      if (use_jsd) {
        term += 0.5 * (diff * log_ratio);
        d1[j] += 0.5 * (log_ratio + diff / p[j]);
        d2[j] += 0.5 * (-log_ratio - diff / q[j]);
      }
      if (use_l2) {
        term += diff * diff;
        d1[j] += 2.0 * diff;
        d2[j] -= 2.0 * diff;
      }
      sample += term;
    }
    out.loss += sample;
    for (std::size_t j = 0; j < n; ++j) {
      d1[j] *= inv_batch;
      d2[j] *= inv_batch;
    }
    distill_row_backward(first.row(i), cfg.epsilon_kl, d1, out.grad_first.row(i));
    distill_row_backward(second.row(i), cfg.epsilon_kl, d2, out.grad_second.row(i));
  }
  out.loss *= inv_batch;
  return out;
}

TotalLoss total_loss(const ModelParams& params, const Dataset& ds, std::span<const int> batch,
                     const LossConfig& cfg) {
  cfg.validate();
  if (batch.empty()) throw ArgumentError("total_loss: empty batch");
  const Matrix& z = ds.class_semantics;
  const std::size_t num_classes = z.rows();
  const std::size_t n = batch.size();
  const bool use_a2v = cfg.branches != Branches::kV2AOnly;
  const bool use_v2a = cfg.branches != Branches::kA2VOnly;
  const bool use_distill = use_a2v && use_v2a;

  std::vector<A2VOutput> a2v(use_a2v ? n : 0);
  std::vector<V2AOutput> v2a(use_v2a ? n : 0);
  Matrix scores_a2v(use_a2v ? n : 0, num_classes);
  Matrix scores_v2a(use_v2a ? n : 0, num_classes);
  std::vector<int> labels(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int idx = batch[i];
    if (idx < 0 || static_cast<std::size_t>(idx) >= ds.num_samples()) {
      throw ArgumentError("total_loss: sample index " + std::to_string(idx) + " out of range");
    }
    labels[i] = ds.labels[idx];
    const Matrix& v = ds.features[idx];
    if (use_a2v) {
      a2v[i] = a2v_forward(v, ds.attributes, params);
      const auto s = class_scores(a2v[i].psi, z);
      std::copy(s.begin(), s.end(), scores_a2v.row(i).begin());
    }
    if (use_v2a) {
      v2a[i] = v2a_forward(v, ds.attributes, params);
      const auto s = class_scores(v2a[i].psi, z);
      std::copy(s.begin(), s.end(), scores_v2a.row(i).begin());
    }
  }

  TotalLoss out{{}, ModelParams::zeros(params.dims)};
  Matrix grad_a2v(use_a2v ? n : 0, num_classes);
  Matrix grad_v2a(use_v2a ? n : 0, num_classes);
  if (use_a2v) {
    auto l = acec_loss(scores_a2v, labels, ds.seen_classes, ds.unseen_classes, cfg);
    out.breakdown.acec_a2v = l.loss;
    grad_a2v = std::move(l.grad);
  }
  if (use_v2a) {
    auto l = acec_loss(scores_v2a, labels, ds.seen_classes, ds.unseen_classes, cfg);
    out.breakdown.acec_v2a = l.loss;
    grad_v2a = std::move(l.grad);
  }
  if (use_distill) {
    const std::size_t cs = ds.seen_classes.size();
    Matrix seen_a2v(n, cs), seen_v2a(n, cs);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < cs; ++j) {
        seen_a2v(i, j) = scores_a2v(i, ds.seen_classes[j]);
        seen_v2a(i, j) = scores_v2a(i, ds.seen_classes[j]);
      }
    }
    const auto d = distill_loss(seen_a2v, seen_v2a, cfg);
    out.breakdown.distill = d.loss;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < cs; ++j) {
        grad_a2v(i, ds.seen_classes[j]) += cfg.lambda_distill * d.grad_first(i, j);
        grad_v2a(i, ds.seen_classes[j]) += cfg.lambda_distill * d.grad_second(i, j);
      }
    }
  }
  out.breakdown.total =
      out.breakdown.acec_a2v + out.breakdown.acec_v2a + cfg.lambda_distill * out.breakdown.distill;

  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& v = ds.features[batch[i]];
    if (use_a2v) {
      const auto d_psi = vecmat(grad_a2v.row(i), z);
      a2v_backward(v, ds.attributes, params, a2v[i], d_psi, out.grads);
    }
    if (use_v2a) {
      const auto d_psi = vecmat(grad_v2a.row(i), z);
      v2a_backward(v, ds.attributes, params, v2a[i], d_psi, out.grads);
    }
  }
  return out;
}

const char* to_string(CalibrationSign s) { return s == CalibrationSign::kProse ? "prose" : "literal"; }

const char* to_string(DistillTerms t) {
  switch (t) {
    case DistillTerms::kBoth: return "both";
    case DistillTerms::kJsdOnly: return "jsd";
    case DistillTerms::kL2Only: return "l2";
  }
  return "both";
}

const char* to_string(Branches b) {
  switch (b) {
    case Branches::kBoth: return "both";
    case Branches::kA2VOnly: return "a2v";
    case Branches::kV2AOnly: return "v2a";
  }
  return "both";
}

CalibrationSign parse_calibration_sign(const std::string& s) {
  if (s == "prose") return CalibrationSign::kProse;
  if (s == "literal") return CalibrationSign::kLiteral;
  throw ArgumentError("calibration_sign must be 'prose' or 'literal', got '" + s + "'");
}

DistillTerms parse_distill_terms(const std::string& s) {
  if (s == "both") return DistillTerms::kBoth;
  if (s == "jsd") return DistillTerms::kJsdOnly;
  if (s == "l2") return DistillTerms::kL2Only;
  throw ArgumentError("distill_terms must be 'both', 'jsd' or 'l2', got '" + s + "'");
}

Branches parse_branches(const std::string& s) {
  if (s == "both") return Branches::kBoth;
  if (s == "a2v") return Branches::kA2VOnly;
  if (s == "v2a") return Branches::kV2AOnly;
  throw ArgumentError("branches must be 'both', 'a2v' or 'v2a', got '" + s + "'");
}

}  // namespace msdn

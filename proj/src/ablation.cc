#include "msdn/ablation.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <locale>

#include "msdn/losses.h"

namespace msdn {

std::vector<double> baseline_embedding(const BaselineModel& model, const Matrix& regions) {
  std::vector<double> pooled(regions.cols(), 0.0);
  for (std::size_t r = 0; r < regions.rows(); ++r)
    for (std::size_t d = 0; d < regions.cols(); ++d) pooled[d] += regions(r, d);
  for (double& v : pooled) v /= static_cast<double>(regions.rows());
  return matvec(model.projection, pooled);
}

namespace {

constexpr std::uint64_t kShuffleStream = 0xD1B54A32D192ED03ULL;

// Loss and gradient of the baseline on `batch`.
std::pair<double, Matrix> baseline_loss(const BaselineModel& model, const Dataset& ds, std::span<const int> batch,
                                        const LossConfig& cfg) {
  const std::size_t n = batch.size();
  Matrix scores(n, ds.num_classes());
  std::vector<int> labels(n);
  std::vector<std::vector<double>> pooled(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Matrix& v = ds.features[batch[i]];
    pooled[i].assign(v.cols(), 0.0);
    for (std::size_t r = 0; r < v.rows(); ++r)
      for (std::size_t d = 0; d < v.cols(); ++d) pooled[i][d] += v(r, d);
    for (double& x : pooled[i]) x /= static_cast<double>(v.rows());
    const auto s = class_scores(matvec(model.projection, pooled[i]), ds.class_semantics);
    std::copy(s.begin(), s.end(), scores.row(i).begin());
    labels[i] = ds.labels[batch[i]];
  }
  const ScoreLoss loss = acec_loss(scores, labels, ds.seen_classes, ds.unseen_classes, cfg);
  Matrix grad(model.projection.rows(), model.projection.cols());
  for (std::size_t i = 0; i < n; ++i) {
    const auto d_embedding = vecmat(loss.grad.row(i), ds.class_semantics);
    for (std::size_t k = 0; k < grad.rows(); ++k)
      for (std::size_t d = 0; d < grad.cols(); ++d) grad(k, d) += d_embedding[k] * pooled[i][d];
  }
  return {loss.loss, std::move(grad)};
}

}  // namespace

BaselineResult train_baseline(const Dataset& ds, const TrainConfig& cfg) {
  cfg.validate();
  if (ds.train_idx.empty()) throw ValidationError("invalid dataset: train_idx is empty");
  const std::size_t k = ds.num_attributes(), dv = ds.dim_visual();
  Rng init_rng(cfg.seed);
  const double limit = glorot_limit(k, dv);
  BaselineResult result{{rng_uniform(init_rng, -limit, limit, k, dv)}, {}};
  Matrix square_avg(k, dv), momentum_buf(k, dv);
  Rng shuffle_rng(cfg.seed ^ kShuffleStream);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = make_batches(ds.train_idx.size(), static_cast<std::size_t>(cfg.batch_size), shuffle_rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<int> samples;
      for (int pos : batches[b]) samples.push_back(ds.train_idx[pos]);
      auto [loss, grad] = baseline_loss(result.model, ds, samples, cfg.loss);
      if (!std::isfinite(loss)) {
        throw TrainingDiverged(epoch, static_cast<int>(b), "baseline: non-finite loss at epoch " +
                                                               std::to_string(epoch) + " batch " + std::to_string(b));
      }
      rmsprop_update(result.model.projection, grad, square_avg, momentum_buf, cfg);
    }
    result.history.push_back(baseline_loss(result.model, ds, ds.train_idx, cfg.loss).first);
  }
  return result;
}

EvalReport evaluate_baseline(const BaselineModel& model, const Dataset& ds) {
  std::vector<int> all(ds.seen_classes);
  all.insert(all.end(), ds.unseen_classes.begin(), ds.unseen_classes.end());
  const auto offsets = calibration_offsets(ds.num_classes(), ds.unseen_classes);
  Predictor predictor = [&](int i, EvalMode mode) {
    auto scores = class_scores(baseline_embedding(model, ds.features[i]), ds.class_semantics);
    for (std::size_t c = 0; c < scores.size(); ++c) scores[c] += offsets[c];
    return mode == EvalMode::kCzsl ? argmax_over(scores, ds.unseen_classes) : argmax_over(scores, all);
  };
  return evaluate_with(predictor, ds, EvalMode::kGzsl);
}

const std::vector<std::string>& ablation_variants() {
  static const std::vector<std::string> names = {
      "baseline",    "v2a_no_distill",   "a2v_no_distill",  "v2a_distill",
      "a2v_distill", "distill_jsd_only", "distill_l2_only", "full"};
  return names;
}

namespace {

std::vector<double> totals(const std::vector<LossBreakdown>& history) {
  std::vector<double> out;
  out.reserve(history.size());
  for (const auto& h : history) out.push_back(h.total);
  return out;
}

AblationRow evaluate_row(const std::string& name, const ModelParams& params, const Dataset& ds,
                         PredictConfig predict, const std::vector<LossBreakdown>& history) {
  predict.mode = EvalMode::kGzsl;
  const EvalReport report = evaluate(params, ds, predict);
  return {name, report.acc, report.harmonic, totals(history)};
}

}  // namespace

std::vector<AblationRow> run_ablation(const Dataset& ds, const RunConfig& cfg) {
  std::vector<AblationRow> rows;
  const PredictConfig a2v_only{1.0, 0.0, EvalMode::kGzsl};
  const PredictConfig v2a_only{0.0, 1.0, EvalMode::kGzsl};

  {
    const BaselineResult baseline = train_baseline(ds, cfg.train);
    const EvalReport report = evaluate_baseline(baseline.model, ds);
    rows.push_back({"baseline", report.acc, report.harmonic, baseline.history});
  }

  auto variant = [&](Branches branches, double lambda_distill, DistillTerms terms) {
    TrainConfig t = cfg.train;
    t.loss.branches = branches;
    t.loss.lambda_distill = lambda_distill;
    t.loss.distill_terms = terms;
    return train(ds, t);
  };

  const TrainResult v2a = variant(Branches::kV2AOnly, 0.0, DistillTerms::kBoth);
  rows.push_back(evaluate_row("v2a_no_distill", v2a.params, ds, v2a_only, v2a.history));
  const TrainResult a2v = variant(Branches::kA2VOnly, 0.0, DistillTerms::kBoth);
  rows.push_back(evaluate_row("a2v_no_distill", a2v.params, ds, a2v_only, a2v.history));

  const double lambda = cfg.train.loss.lambda_distill;
  const TrainResult full = variant(Branches::kBoth, lambda, DistillTerms::kBoth);
  rows.push_back(evaluate_row("v2a_distill", full.params, ds, v2a_only, full.history));
  rows.push_back(evaluate_row("a2v_distill", full.params, ds, a2v_only, full.history));

  const TrainResult jsd = variant(Branches::kBoth, lambda, DistillTerms::kJsdOnly);
  rows.push_back(evaluate_row("distill_jsd_only", jsd.params, ds, cfg.predict, jsd.history));
  const TrainResult l2 = variant(Branches::kBoth, lambda, DistillTerms::kL2Only);
  rows.push_back(evaluate_row("distill_l2_only", l2.params, ds, cfg.predict, l2.history));

  rows.push_back(evaluate_row("full", full.params, ds, cfg.predict, full.history));
  return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  out << "variant,acc,H\n";
  for (const auto& row : rows) out << row.variant << "," << row.acc << "," << row.harmonic << "\n";
}

}  // namespace msdn

#include "msdn/training.h"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <locale>
#include <numeric>

namespace msdn {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ArgumentError("learning_rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ArgumentError("momentum must lie in [0, 1)");
  if (!(rms_decay >= 0.0 && rms_decay < 1.0)) throw ArgumentError("rms_decay must lie in [0, 1)");
  if (batch_size < 1) throw ArgumentError("batch_size must be >= 1");
  if (epochs < 0) throw ArgumentError("epochs must be >= 0");
  if (!(weight_decay >= 0.0)) throw ArgumentError("weight_decay must be >= 0");
  if (!(epsilon_opt > 0.0)) throw ArgumentError("epsilon_opt must be > 0");
  loss.validate();
}

OptState OptState::init(const ModelDims& dims) {
  return {ModelParams::zeros(dims), ModelParams::zeros(dims), 0};
}

void rmsprop_update(Matrix& param, const Matrix& grad, Matrix& square_avg, Matrix& momentum_buf,
                    const TrainConfig& cfg) {
  if (param.rows() != grad.rows() || param.cols() != grad.cols() || param.size() != square_avg.size() ||
      param.size() != momentum_buf.size()) {
    throw ShapeError("rmsprop_update: parameter " + param.shape_string() + " vs gradient " + grad.shape_string());
  }
  auto& pd = param.data();
  const auto& gd = grad.data();
  auto& sd = square_avg.data();
  auto& bd = momentum_buf.data();
  for (std::size_t i = 0; i < pd.size(); ++i) {
    const double g = gd[i] + cfg.weight_decay * pd[i];
    sd[i] = cfg.rms_decay * sd[i] + (1.0 - cfg.rms_decay) * g * g;
    bd[i] = cfg.momentum * bd[i] + g / (std::sqrt(sd[i]) + cfg.epsilon_opt);
    pd[i] -= cfg.learning_rate * bd[i];
  }
}

void rmsprop_step(ModelParams& params, const ModelParams& grads, OptState& state, const TrainConfig& cfg) {
  auto p = params.matrices();
  auto g = grads.matrices();
  auto sq = state.square_avg.matrices();
  auto buf = state.momentum_buf.matrices();
  for (std::size_t m = 0; m < p.size(); ++m) rmsprop_update(*p[m], *g[m], *sq[m], *buf[m], cfg);
  ++state.step;
}

std::vector<std::vector<int>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng) {
  if (n == 0) throw ArgumentError("make_batches: n must be >= 1");
  if (batch_size == 0) throw ArgumentError("make_batches: batch_size must be >= 1");
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  for (std::size_t i = n - 1; i > 0; --i) std::swap(order[i], order[rng.next_index(i + 1)]);
  std::vector<std::vector<int>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(start),
                         order.begin() + static_cast<std::ptrdiff_t>(end));
  }
  return batches;
}

ModelDims dims_for(const Dataset& ds) {
  return {ds.dim_visual(), ds.dim_attribute(), ds.num_attributes(), ds.num_regions()};
}

namespace {

// Separates the shuffling stream from the initialization stream.
constexpr std::uint64_t kShuffleStream = 0xD1B54A32D192ED03ULL;

}  // namespace

TrainResult train(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch) {
  cfg.validate();
  const auto violations = validate_dataset(ds);
  if (!violations.empty()) {
    throw ValidationError("invalid dataset: " + violations.front().invariant + ": " + violations.front().detail);
  }
  if (ds.train_idx.empty()) throw ValidationError("invalid dataset: train_idx is empty");

  TrainResult result{init_params(dims_for(ds), cfg.seed), {}};
  OptState state = OptState::init(result.params.dims);
  Rng shuffle_rng(cfg.seed ^ kShuffleStream);

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto batches = make_batches(ds.train_idx.size(), static_cast<std::size_t>(cfg.batch_size), shuffle_rng);
    for (std::size_t b = 0; b < batches.size(); ++b) {
      std::vector<int> samples;
      samples.reserve(batches[b].size());
      for (int pos : batches[b]) samples.push_back(ds.train_idx[pos]);
      const TotalLoss loss = total_loss(result.params, ds, samples, cfg.loss);
      if (!std::isfinite(loss.breakdown.total)) {
        throw TrainingDiverged(epoch, static_cast<int>(b),
                               "non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
      }
      rmsprop_step(result.params, loss.grads, state, cfg);
      for (const Matrix* m : result.params.matrices()) {
        if (!all_finite(*m)) {
          throw TrainingDiverged(epoch, static_cast<int>(b),
                                 "non-finite parameter at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
        }
      }
    }
    const LossBreakdown epoch_loss = total_loss(result.params, ds, ds.train_idx, cfg.loss).breakdown;
    result.history.push_back(epoch_loss);
    if (on_epoch) on_epoch(epoch, epoch_loss, result.params);
  }
  return result;
}

void write_history_csv(const std::vector<LossBreakdown>& history, const std::string& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot open " + path + " for writing");
  out.imbue(std::locale::classic());
  out << std::setprecision(17);
  out << "epoch,acec_a2v,acec_v2a,distill,total\n";
  for (std::size_t e = 0; e < history.size(); ++e) {
    const auto& h = history[e];
    out << e << "," << h.acec_a2v << "," << h.acec_v2a << "," << h.distill << "," << h.total << "\n";
  }
}

}  // namespace msdn

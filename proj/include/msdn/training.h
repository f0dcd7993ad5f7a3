#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "msdn/dataset.h"
#include "msdn/errors.h"
#include "msdn/losses.h"
#include "msdn/model.h"

namespace msdn {

struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 50;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  int epochs = 200;
  std::uint64_t seed = 1;
  LossConfig loss;
  double rms_decay = 0.99;
  double epsilon_opt = 1e-8;

  void validate() const;
};

// RMSProp buffers, one per parameter matrix.
struct OptState {
  ModelParams square_avg;
  ModelParams momentum_buf;
  std::uint64_t step = 0;

  static OptState init(const ModelDims& dims);
};

// Coupled-L2 RMSProp with momentum applied to the preconditioned gradient:
//   g   = grad + weight_decay·param
//   sq  = rms_decay·sq + (1 − rms_decay)·g²
//   buf = momentum·buf + g / (√sq + epsilon_opt)
//   param -= learning_rate·buf
void rmsprop_step(ModelParams& params, const ModelParams& grads, OptState& state, const TrainConfig& cfg);

// The same rule applied to a single matrix and its buffers.
void rmsprop_update(Matrix& param, const Matrix& grad, Matrix& square_avg, Matrix& momentum_buf,
                    const TrainConfig& cfg);

// Fisher–Yates permutation of [0, n) cut into consecutive batches; the last
// batch may be short.
std::vector<std::vector<int>> make_batches(std::size_t n, std::size_t batch_size, Rng& rng);

class TrainingDiverged : public NumericError {
 public:
  TrainingDiverged(int epoch, int batch, const std::string& what)
      : NumericError(what), epoch_(epoch), batch_(batch) {}
  int epoch() const { return epoch_; }
  int batch() const { return batch_; }

 private:
  int epoch_;
  int batch_;
};

struct TrainResult {
  ModelParams params;
  // Objective over the whole training split, evaluated with the parameters
  // reached at the end of each epoch.
  std::vector<LossBreakdown> history;
};

// Called after every epoch with its index, the epoch loss and the current
// parameters.
using EpochCallback = std::function<void(int, const LossBreakdown&, const ModelParams&)>;

// Trains on ds.train_idx. Deterministic in (ds, cfg). Throws ValidationError
// for an invalid dataset and TrainingDiverged on a non-finite loss or
// parameter.
TrainResult train(const Dataset& ds, const TrainConfig& cfg, const EpochCallback& on_epoch = {});

ModelDims dims_for(const Dataset& ds);

void write_history_csv(const std::vector<LossBreakdown>& history, const std::string& path);

}  // namespace msdn

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "wsol/augment.hpp"
#include "wsol/data.hpp"
#include "wsol/model.hpp"

namespace wsol {

struct TrainConfig {
  int epochs = 1500;
  int batch_size = 256;
  double base_lr = 0.1;
  int lr_drop_every = 250;
  double lr_drop_factor = 10.0;
  double momentum = 0.9;
  double weight_decay = 1e-4;
  /// Apply weight decay to batchnorm gamma/beta as well.
  bool decay_bn_params = true;
  std::uint64_t seed = 0;
  AugmentSpec augment;

  void validate() const;
};

/// base_lr / lr_drop_factor^floor(epoch / lr_drop_every).
double lr_at_epoch(const TrainConfig& cfg, int epoch);

struct OptimizerState {
  std::vector<Tensord> velocity;

  static OptimizerState zeros_like(std::span<Tensord* const> params);
};

struct NesterovHyper {
  double lr = 0.1;
  double momentum = 0.9;
  double weight_decay = 0.0;
};

/// For each parameter: g' = g + wd*theta; v = mu*v + g'; theta -= lr*(g' + mu*v).
/// `decay_mask`, when non-empty, selects which parameters receive weight decay.
void nesterov_step(std::span<Tensord* const> params, std::span<const Tensord> grads,
                   OptimizerState& state, const NesterovHyper& hyper,
                   std::span<const bool> decay_mask = {});

struct EpochRecord {
  int epoch = 0;
  double lr = 0.0;
  double mean_loss = 0.0;
  double wall_ms = 0.0;
};

struct TrainLog {
  std::string header;  // JSON line echoing every hyperparameter
  std::vector<EpochRecord> records;

  /// Newline-delimited JSON: header, then one record per epoch.
  std::string to_jsonl(bool include_wall_time = true) const;
};

struct FitResult {
  Network net;
  TrainLog log;
};

/// Nesterov SGD over `data`. Each epoch shuffles with a permutation drawn
/// from (seed, epoch), augments sample i from substream (seed, epoch, i),
/// and drops the final short minibatch. An unset augment fill value becomes
/// the training-set mean pixel. Throws TrainingDiverged on a non-finite loss.
FitResult fit(Network net, std::span<const Sample> data, const TrainConfig& cfg,
              const std::function<void(const EpochRecord&)>& on_epoch = {});

}  // namespace wsol

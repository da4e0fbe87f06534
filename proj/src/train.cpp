#include "wsol/train.hpp"

#include <chrono>
#include <cmath>
#include <memory>
#include <numeric>

#include "wsol/config.hpp"
#include "wsol/error.hpp"
#include "wsol/parallel.hpp"
#include "wsol/rng.hpp"

namespace wsol {

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("train.epochs must be >= 0");
  if (batch_size < 2) throw InvalidArgument("train.batch_size must be >= 2");
  if (!(base_lr > 0)) throw InvalidArgument("train.base_lr must be > 0");
  if (lr_drop_every < 1) throw InvalidArgument("train.lr_drop_every must be >= 1");
  if (!(lr_drop_factor >= 1)) throw InvalidArgument("train.lr_drop_factor must be >= 1");
  if (!(momentum >= 0 && momentum < 1)) throw InvalidArgument("train.momentum must be in [0, 1)");
  if (!(weight_decay >= 0)) throw InvalidArgument("train.weight_decay must be >= 0");
  augment.validate();
}

double lr_at_epoch(const TrainConfig& cfg, int epoch) {
  if (epoch < 0 || epoch >= cfg.epochs) {
    throw InvalidArgument("lr_at_epoch: epoch " + std::to_string(epoch) + " outside [0, " +
                          std::to_string(cfg.epochs) + ")");
  }
  const int drops = epoch / cfg.lr_drop_every;
  return cfg.base_lr / std::pow(cfg.lr_drop_factor, drops);
}

OptimizerState OptimizerState::zeros_like(std::span<Tensord* const> params) {
  OptimizerState s;
  s.velocity.reserve(params.size());
  for (const Tensord* p : params) s.velocity.push_back(Tensord::zeros_like(*p));
  return s;
}

void nesterov_step(std::span<Tensord* const> params, std::span<const Tensord> grads,
                   OptimizerState& state, const NesterovHyper& hyper,
                   std::span<const bool> decay_mask) {
  if (grads.size() != params.size() || state.velocity.size() != params.size()) {
    throw InvalidArgument("nesterov_step: parameter, gradient and velocity counts differ");
  }
  if (!decay_mask.empty() && decay_mask.size() != params.size()) {
    throw InvalidArgument("nesterov_step: decay mask length differs from parameter count");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensord& theta = *params[i];
    if (grads[i].shape() != theta.shape() || state.velocity[i].shape() != theta.shape()) {
      throw InvalidArgument("nesterov_step: shape mismatch at parameter " + std::to_string(i));
    }
    const double wd = decay_mask.empty() || decay_mask[i] ? hyper.weight_decay : 0.0;
    auto& th = theta.flat();
    auto& v = state.velocity[i].flat();
    const Eigen::VectorXd g = grads[i].flat() + wd * th;
    v = hyper.momentum * v + g;
    th -= hyper.lr * (g + hyper.momentum * v);
  }
}

std::string TrainLog::to_jsonl(bool include_wall_time) const {
  std::string out = header + "\n";
  for (const EpochRecord& r : records) {
    Json j;
    j["epoch"] = r.epoch;
    j["lr"] = r.lr;
    j["mean_loss"] = r.mean_loss;
    if (include_wall_time) j["wall_ms"] = r.wall_ms;
    out += j.dump() + "\n";
  }
  return out;
}

FitResult fit(Network net, std::span<const Sample> data, const TrainConfig& config,
              const std::function<void(const EpochRecord&)>& on_epoch) {
  TrainConfig cfg = config;
  cfg.validate();
  const Index n = static_cast<Index>(data.size());
  if (cfg.epochs > 0 && n < cfg.batch_size) {
    throw InvalidArgument("fit: " + std::to_string(n) + " samples cannot fill one batch of " +
                          std::to_string(cfg.batch_size));
  }
  const Index side = net.config.input_side;
  for (const Sample& s : data) {
    if (s.image.width != side || s.image.height != side) {
      throw InvalidArgument("fit: image size differs from model input side " + std::to_string(side));
    }
    if (s.label < 0 || s.label >= net.config.num_classes) throw InvalidArgument("fit: label out of range");
  }
  if (!cfg.augment.fill_value && n > 0) cfg.augment.fill_value = mean_pixel(data);

  FitResult result;
  Json header;
  header["train"] = to_json(cfg);
  header["model"] = to_json(net.config);
  header["model"]["init_seed"] = net.init_seed;
  header["samples"] = n;
  result.log.header = header.dump();

  auto params = parameters(net);
  std::vector<Tensord*> param_ptrs;
  auto decay_mask = std::make_unique<bool[]>(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    param_ptrs.push_back(params[i].tensor);
    decay_mask[i] = cfg.decay_bn_params || params[i].kind != ParamKind::batchnorm;
  }
  OptimizerState state = OptimizerState::zeros_like(param_ptrs);
  const std::span<const bool> mask(decay_mask.get(), params.size());

  const Index batches = cfg.epochs > 0 ? n / cfg.batch_size : 0;
  std::vector<Index> order(static_cast<std::size_t>(n));
  std::vector<int> labels(static_cast<std::size_t>(cfg.batch_size));
  Tensord batch({cfg.batch_size, 3, side, side});

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto start = std::chrono::steady_clock::now();
    std::iota(order.begin(), order.end(), Index{0});
    RngStream shuffle(cfg.seed, static_cast<std::uint64_t>(epoch), 0, StreamDomain::shuffle);
    for (Index i = n - 1; i > 0; --i) {
      std::swap(order[static_cast<std::size_t>(i)],
                order[shuffle.uniform_index(static_cast<std::uint64_t>(i + 1))]);
    }
    const NesterovHyper hyper{lr_at_epoch(cfg, epoch), cfg.momentum, cfg.weight_decay};
    double loss_sum = 0.0;
    for (Index b = 0; b < batches; ++b) {
      parallel_for(static_cast<std::size_t>(cfg.batch_size), [&](std::size_t k) {
        const Index idx = order[static_cast<std::size_t>(b * cfg.batch_size) + k];
        const Sample& s = data[static_cast<std::size_t>(idx)];
        RngStream rng(cfg.seed, static_cast<std::uint64_t>(epoch), static_cast<std::uint64_t>(idx));
        copy_to_batch(apply_policy(cfg.augment, s.image, rng), batch, static_cast<Index>(k));
        labels[k] = s.label;
      });
      ForwardCache cache;
      forward(net, batch, Mode::train, &cache);
      Backprop bp = backprop(net, cache, labels);
      if (!std::isfinite(bp.loss)) {
        throw TrainingDiverged(epoch, "training diverged: non-finite loss at epoch " + std::to_string(epoch));
      }
      nesterov_step(param_ptrs, bp.grads, state, hyper, mask);
      loss_sum += bp.loss;
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.lr = hyper.lr;
    rec.mean_loss = batches ? loss_sum / static_cast<double>(batches) : 0.0;
    rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
    result.log.records.push_back(rec);
    if (on_epoch) on_epoch(rec);
  }
  result.net = std::move(net);
  return result;
}

}  // namespace wsol

#include "wsol/model.hpp"

#include <cmath>

#include "wsol/rng.hpp"

namespace wsol {

std::string_view to_string(Variant v) {
  switch (v) {
    case Variant::toy10: return "toy10";
    case Variant::res18: return "res18";
    case Variant::res34: return "res34";
  }
  return "?";
}

std::string_view display_name(Variant v) {
  switch (v) {
    case Variant::toy10: return "Toy10";
    case Variant::res18: return "ResNet18";
    case Variant::res34: return "ResNet34";
  }
  return "?";
}

Variant parse_variant(std::string_view name) {
  for (Variant v : {Variant::toy10, Variant::res18, Variant::res34}) {
    if (to_string(v) == name) return v;
  }
  throw InvalidArgument("unknown model variant '" + std::string(name) + "'");
}

ModelConfig ModelConfig::preset(Variant variant, int num_classes, int input_side) {
  ModelConfig cfg;
  cfg.variant = variant;
  cfg.num_classes = num_classes;
  cfg.input_side = input_side;
  switch (variant) {
    case Variant::toy10:
      cfg.stage_widths = {16, 32, 64};
      cfg.blocks_per_stage = {1, 1, 1};
      break;
    case Variant::res18:
      cfg.stage_widths = {64, 128, 256, 512};
      cfg.blocks_per_stage = {2, 2, 2, 2};
      break;
    case Variant::res34:
      cfg.stage_widths = {64, 128, 256, 512};
      cfg.blocks_per_stage = {3, 4, 6, 3};
      break;
  }
  return cfg;
}

ModelConfig ModelConfig::resolved() const {
  if (!stage_widths.empty() || !blocks_per_stage.empty()) return *this;
  return preset(variant, num_classes, input_side);
}

void ModelConfig::validate() const {
  if (num_classes < 2) throw InvalidArgument("model: num_classes must be >= 2");
  if (stage_widths.empty() || stage_widths.size() != blocks_per_stage.size()) {
    throw InvalidArgument("model: stage_widths and blocks_per_stage must be non-empty and equal length");
  }
  for (std::size_t i = 0; i < stage_widths.size(); ++i) {
    if (stage_widths[i] < 1 || blocks_per_stage[i] < 1) {
      throw InvalidArgument("model: stage widths and block counts must be positive");
    }
  }
  if (input_side < 1) throw InvalidArgument("model: input_side must be positive");
  const int halvings = static_cast<int>(stage_widths.size()) - 1;
  if (halvings >= 31 || (input_side >> halvings) < 1) {
    throw InvalidArgument("model: input_side too small for the number of stages");
  }
}

int ModelConfig::feature_side() const {
  int side = input_side;
  for (std::size_t s = 1; s < stage_widths.size(); ++s) side = (side - 1) / 2 + 1;
  return side;
}

namespace {

Conv2dParams he_conv(Index out, Index in, Index k, int stride, int pad, RngStream& rng) {
  Conv2dParams conv{Tensord(Shape{out, in, k, k}), stride, pad};
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in * k * k));
  for (Index i = 0; i < conv.weight.size(); ++i) conv.weight[i] = std_dev * rng.normal();
  return conv;
}

template <typename Net, typename Out>
void collect_parameters(Net& net, Out& out) {
  out.push_back({"stem.weight", &net.stem.weight, ParamKind::conv});
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    for (std::size_t b = 0; b < net.stages[s].size(); ++b) {
      auto& blk = net.stages[s][b];
      const std::string p = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
      out.push_back({p + "bn1.gamma", &blk.bn1.gamma, ParamKind::batchnorm});
      out.push_back({p + "bn1.beta", &blk.bn1.beta, ParamKind::batchnorm});
      out.push_back({p + "conv1.weight", &blk.conv1.weight, ParamKind::conv});
      out.push_back({p + "bn2.gamma", &blk.bn2.gamma, ParamKind::batchnorm});
      out.push_back({p + "bn2.beta", &blk.bn2.beta, ParamKind::batchnorm});
      out.push_back({p + "conv2.weight", &blk.conv2.weight, ParamKind::conv});
      if (blk.shortcut) out.push_back({p + "shortcut.weight", &blk.shortcut->weight, ParamKind::conv});
    }
  }
  out.push_back({"final_bn.gamma", &net.final_bn.gamma, ParamKind::batchnorm});
  out.push_back({"final_bn.beta", &net.final_bn.beta, ParamKind::batchnorm});
  out.push_back({"classifier.weight", &net.classifier.weight, ParamKind::linear});
  out.push_back({"classifier.bias", &net.classifier.bias, ParamKind::linear});
}

template <typename Net, typename Out>
void collect_buffers(Net& net, Out& out) {
  auto add = [&](const std::string& p, auto& bn) {
    out.push_back({p + "running_mean", &bn.running_mean, ParamKind::batchnorm});
    out.push_back({p + "running_var", &bn.running_var, ParamKind::batchnorm});
  };
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    for (std::size_t b = 0; b < net.stages[s].size(); ++b) {
      const std::string p = "stage" + std::to_string(s) + ".block" + std::to_string(b) + ".";
      add(p + "bn1.", net.stages[s][b].bn1);
      add(p + "bn2.", net.stages[s][b].bn2);
    }
  }
  add("final_bn.", net.final_bn);
}

void check_input(const Network& net, const Tensord& batch) {
  const Index side = net.config.input_side;
  if (batch.rank() != 4 || batch.dim(1) != 3 || batch.dim(2) != side || batch.dim(3) != side) {
    throw InvalidArgument("forward: expected input [N,3," + std::to_string(side) + "," +
                          std::to_string(side) + "], got " + shape_string(batch.shape()));
  }
}

Tensord conv(const Conv2dParams& p, const Tensord& x) {
  return conv2d(x, p.weight, p.stride, p.pad);
}

// Shared body of the train and eval forward passes. `mut` is non-null only in
// train mode, where batchnorm statistics are used and updated.
ForwardResult run_forward(const Network& net, Network* mut, const Tensord& batch,
                          ForwardCache* cache) {
  check_input(net, batch);
  const bool train = mut != nullptr;
  auto bn = [&](const BatchNormParams<double>& p, BatchNormParams<double>* mp, const Tensord& x,
                BatchNormCache<double>* c) {
    return train ? batch_norm_train(x, *mp, c) : batch_norm_eval(x, p);
  };
  if (cache) {
    *cache = ForwardCache{};
    cache->input = batch;
    cache->blocks.resize(net.stages.size());
  }
  Tensord h = conv(net.stem, batch);
  for (std::size_t s = 0; s < net.stages.size(); ++s) {
    for (std::size_t b = 0; b < net.stages[s].size(); ++b) {
      const ResidualBlock& blk = net.stages[s][b];
      ResidualBlock* mblk = train ? &mut->stages[s][b] : nullptr;
      ForwardCache::Block* bc = nullptr;
      if (cache) bc = &cache->blocks[s].emplace_back();
      Tensord pre1 = bn(blk.bn1, mblk ? &mblk->bn1 : nullptr, h, bc ? &bc->bn1 : nullptr);
      Tensord act1 = relu(pre1);
      Tensord pre2 = bn(blk.bn2, mblk ? &mblk->bn2 : nullptr, conv(blk.conv1, act1),
                        bc ? &bc->bn2 : nullptr);
      Tensord act2 = relu(pre2);
      Tensord out = conv(blk.conv2, act2) + (blk.shortcut ? conv(*blk.shortcut, act1) : h);
      if (bc) {
        bc->input = std::move(h);
        bc->pre1 = std::move(pre1);
        bc->act1 = std::move(act1);
        bc->pre2 = std::move(pre2);
        bc->act2 = std::move(act2);
      }
      h = std::move(out);
    }
  }
  Tensord final_pre = bn(net.final_bn, train ? &mut->final_bn : nullptr, h,
                         cache ? &cache->final_bn : nullptr);
  ForwardResult result;
  result.features = relu(final_pre);
  Tensord pooled = gap(result.features);
  result.logits = linear(pooled, net.classifier.weight, net.classifier.bias);
  if (cache) {
    cache->final_pre = std::move(final_pre);
    cache->features = result.features;
    cache->pooled = std::move(pooled);
    cache->logits = result.logits;
  }
  return result;
}

}  // namespace

std::vector<NamedTensor<Tensord>> parameters(Network& net) {
  std::vector<NamedTensor<Tensord>> out;
  collect_parameters(net, out);
  return out;
}

std::vector<NamedTensor<const Tensord>> parameters(const Network& net) {
  std::vector<NamedTensor<const Tensord>> out;
  collect_parameters(net, out);
  return out;
}

std::vector<NamedTensor<Tensord>> buffers(Network& net) {
  std::vector<NamedTensor<Tensord>> out;
  collect_buffers(net, out);
  return out;
}

std::vector<NamedTensor<const Tensord>> buffers(const Network& net) {
  std::vector<NamedTensor<const Tensord>> out;
  collect_buffers(net, out);
  return out;
}

Index parameter_count(const Network& net) {
  Index total = 0;
  for (const auto& p : parameters(net)) total += p.tensor->size();
  return total;
}

Network build_network(const ModelConfig& requested, std::uint64_t init_seed) {
  const ModelConfig config = requested.resolved();
  config.validate();
  RngStream rng(init_seed, 0, 0, StreamDomain::init);
  Network net;
  net.config = config;
  net.init_seed = init_seed;
  net.stem = he_conv(config.stage_widths[0], 3, 3, 1, 1, rng);
  Index in = config.stage_widths[0];
  net.stages.resize(config.stage_widths.size());
  for (std::size_t s = 0; s < config.stage_widths.size(); ++s) {
    const Index width = config.stage_widths[s];
    for (int b = 0; b < config.blocks_per_stage[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      ResidualBlock blk;
      blk.bn1 = BatchNormParams<double>(in);
      blk.conv1 = he_conv(width, in, 3, stride, 1, rng);
      blk.bn2 = BatchNormParams<double>(width);
      blk.conv2 = he_conv(width, width, 3, 1, 1, rng);
      if (stride != 1 || in != width) blk.shortcut = he_conv(width, in, 1, stride, 0, rng);
      net.stages[s].push_back(std::move(blk));
      in = width;
    }
  }
  net.final_bn = BatchNormParams<double>(in);
  net.classifier.weight = Tensord(Shape{in, config.num_classes});
  const double std_dev = std::sqrt(2.0 / static_cast<double>(in));
  for (Index i = 0; i < net.classifier.weight.size(); ++i) {
    net.classifier.weight[i] = std_dev * rng.normal();
  }
  net.classifier.bias = Tensord(Shape{config.num_classes});
  return net;
}

ForwardResult forward(Network& net, const Tensord& batch, Mode mode, ForwardCache* cache) {
  if (mode == Mode::eval) {
    if (cache) *cache = ForwardCache{};
    return run_forward(net, nullptr, batch, nullptr);
  }
  return run_forward(net, &net, batch, cache);
}

ForwardResult forward(const Network& net, const Tensord& batch) {
  return run_forward(net, nullptr, batch, nullptr);
}

Tensord block_forward(const ResidualBlock& blk, const Tensord& x) {
  Tensord act1 = relu(batch_norm_eval(x, blk.bn1));
  Tensord act2 = relu(batch_norm_eval(conv(blk.conv1, act1), blk.bn2));
  return conv(blk.conv2, act2) + (blk.shortcut ? conv(*blk.shortcut, act1) : x);
}

Backprop backprop(const Network& net, const ForwardCache& cache, std::span<const int> labels) {
  if (!cache.valid()) throw MissingCache("backprop: no cached train-mode forward pass");
  if (static_cast<Index>(labels.size()) != cache.logits.dim(0)) {
    throw InvalidArgument("backprop: label count does not match the cached batch");
  }
  auto sce = softmax_cross_entropy(cache.logits, labels);
  Backprop out;
  out.loss = sce.loss;
  out.probs = sce.probs;

  // Gradients are produced back to front; reverse() restores parameter order.
  std::vector<Tensord> rev;
  const Tensord dlogits = softmax_cross_entropy_backward(sce.probs, labels);
  auto lin = linear_backward(cache.pooled, net.classifier.weight, dlogits);
  rev.push_back(std::move(lin.bias));
  rev.push_back(std::move(lin.weight));
  const Tensord dfeat = gap_backward(lin.input, cache.features.dim(2), cache.features.dim(3));
  auto fbn = batch_norm_backward(cache.final_bn, net.final_bn, relu_backward(cache.final_pre, dfeat));
  rev.push_back(std::move(fbn.beta));
  rev.push_back(std::move(fbn.gamma));
  Tensord dh = std::move(fbn.input);

  for (std::size_t s = net.stages.size(); s-- > 0;) {
    for (std::size_t b = net.stages[s].size(); b-- > 0;) {
      const ResidualBlock& blk = net.stages[s][b];
      const ForwardCache::Block& bc = cache.blocks.at(s).at(b);
      Tensord dact1;
      Tensord dshortcut;
      if (blk.shortcut) {
        auto sc = conv2d_backward(bc.act1, blk.shortcut->weight, dh, blk.shortcut->stride,
                                  blk.shortcut->pad);
        dshortcut = std::move(sc.weight);
        dact1 = std::move(sc.input);
      }
      auto c2 = conv2d_backward(bc.act2, blk.conv2.weight, dh, blk.conv2.stride, blk.conv2.pad);
      auto b2 = batch_norm_backward(bc.bn2, blk.bn2, relu_backward(bc.pre2, c2.input));
      auto c1 = conv2d_backward(bc.act1, blk.conv1.weight, b2.input, blk.conv1.stride, blk.conv1.pad);
      if (blk.shortcut) {
        dact1.flat() += c1.input.flat();
      } else {
        dact1 = std::move(c1.input);
      }
      auto b1 = batch_norm_backward(bc.bn1, blk.bn1, relu_backward(bc.pre1, dact1));
      if (blk.shortcut) {
        rev.push_back(std::move(dshortcut));
        dh = std::move(b1.input);
      } else {
        dh.flat() += b1.input.flat();
      }
      rev.push_back(std::move(c2.weight));
      rev.push_back(std::move(b2.beta));
      rev.push_back(std::move(b2.gamma));
      rev.push_back(std::move(c1.weight));
      rev.push_back(std::move(b1.beta));
      rev.push_back(std::move(b1.gamma));
    }
  }
  auto stem = conv2d_backward(cache.input, net.stem.weight, dh, net.stem.stride, net.stem.pad);
  rev.push_back(std::move(stem.weight));
  out.grads.assign(std::make_move_iterator(rev.rbegin()), std::make_move_iterator(rev.rend()));
  return out;
}

}  // namespace wsol

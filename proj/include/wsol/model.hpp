#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "wsol/tensor.hpp"

namespace wsol {

enum class Variant { toy10, res18, res34 };

std::string_view to_string(Variant v);
/// Row heading used in report tables ("ResNet18", ...).
std::string_view display_name(Variant v);
Variant parse_variant(std::string_view name);

struct ModelConfig {
  Variant variant = Variant::toy10;
  int num_classes = 4;
  int input_side = 64;
  std::vector<int> stage_widths;
  std::vector<int> blocks_per_stage;

  /// Widths and block counts of the named variant:
  /// toy10 (16,32,64)x(1,1,1), res18 (64..512)x(2,2,2,2), res34 (64..512)x(3,4,6,3).
  static ModelConfig preset(Variant variant, int num_classes, int input_side = 64);

  /// Copy with empty stage lists filled from the variant preset.
  ModelConfig resolved() const;
  void validate() const;
  /// Spatial side of the final feature map: one halving per stage after the first.
  int feature_side() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

struct Conv2dParams {
  Tensord weight;  // [out, in, kh, kw]
  int stride = 1;
  int pad = 0;
};

/// Pre-activation block: BN -> ReLU -> conv3x3 -> BN -> ReLU -> conv3x3, plus
/// the skip path. Downsampling blocks stride the first conv and project the
/// pre-activated input with a strided 1x1 conv.
struct ResidualBlock {
  BatchNormParams<double> bn1;
  Conv2dParams conv1;
  BatchNormParams<double> bn2;
  Conv2dParams conv2;
  std::optional<Conv2dParams> shortcut;
};

struct Network {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  Conv2dParams stem;
  std::vector<std::vector<ResidualBlock>> stages;
  BatchNormParams<double> final_bn;
  LinearParams<double> classifier;  // weight [K, C], bias [C]

  Index feature_channels() const { return classifier.weight.dim(0); }
  Index num_classes() const { return classifier.weight.dim(1); }
};

enum class ParamKind { conv, batchnorm, linear };

template <typename T>
struct NamedTensor {
  std::string name;
  T* tensor;
  ParamKind kind;
};

/// Trainable parameters in a fixed order; gradients use the same order.
std::vector<NamedTensor<Tensord>> parameters(Network& net);
std::vector<NamedTensor<const Tensord>> parameters(const Network& net);
/// Batchnorm running statistics (not trained).
std::vector<NamedTensor<Tensord>> buffers(Network& net);
std::vector<NamedTensor<const Tensord>> buffers(const Network& net);
Index parameter_count(const Network& net);

/// He-normal conv and classifier weights drawn from init_seed in parameter
/// order; gamma 1, beta 0, classifier bias 0, running stats (0, 1).
Network build_network(const ModelConfig& config, std::uint64_t init_seed);

struct ForwardResult {
  Tensord logits;    // [N, C]
  Tensord features;  // [N, K, h, w], after the final BN and ReLU
};

/// Intermediates kept by a train-mode forward for backprop.
struct ForwardCache {
  struct Block {
    Tensord input;
    BatchNormCache<double> bn1;
    Tensord pre1;  // bn1 output
    Tensord act1;  // relu(pre1)
    BatchNormCache<double> bn2;
    Tensord pre2;
    Tensord act2;
  };
  Tensord input;
  std::vector<std::vector<Block>> blocks;
  BatchNormCache<double> final_bn;
  Tensord final_pre;
  Tensord features;
  Tensord pooled;
  Tensord logits;

  bool valid() const { return !logits.empty(); }
};

/// Runs the network. Train mode uses and updates batchnorm statistics and
/// fills `cache` when given.
ForwardResult forward(Network& net, const Tensord& batch, Mode mode, ForwardCache* cache = nullptr);
/// Eval-mode forward over a shared network.
ForwardResult forward(const Network& net, const Tensord& batch);

/// Output of a residual block in eval mode; exposed for the identity-skip check.
Tensord block_forward(const ResidualBlock& block, const Tensord& x);

struct Backprop {
  double loss = 0.0;
  Tensord probs;
  std::vector<Tensord> grads;  // aligned with parameters(net)
};

/// Exact gradients of the mean cross-entropy for the cached forward pass.
/// Throws MissingCache if the cache was not filled by forward().
Backprop backprop(const Network& net, const ForwardCache& cache, std::span<const int> labels);

}  // namespace wsol

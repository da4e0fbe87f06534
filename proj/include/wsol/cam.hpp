#pragma once

#include <optional>
#include <span>
#include <vector>

#include "wsol/image.hpp"
#include "wsol/model.hpp"

namespace wsol {

struct LocalizeOptions {
  /// Fraction of the normalized heatmap range kept by the binarization.
  double threshold_frac = 0.2;
  /// 4 or 8.
  int connectivity = 8;

  void validate() const;
};

/// M(y, x) = sum_k w[k] * f[k, y, x] for features [K,h,w] (or [1,K,h,w]).
Heatmap compute_cam(const Tensord& features, std::span<const double> class_weights);

/// Column c of the classifier weight matrix.
std::vector<double> class_weights(const Network& net, int cls);

struct Component {
  long area = 0;
  BBox box;
};

struct Labeling {
  Eigen::Array<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> labels;  // 0 = background
  std::vector<Component> components;  // component k has label k + 1, raster order of first pixel
};

/// Connected components of the nonzero pixels (two-pass union-find).
Labeling label_components(const Mask& mask, int connectivity);

/// Box of the largest component; ties go to the smallest (y_min, x_min), then
/// to the component met first in raster order. Empty masks yield nullopt.
std::optional<BBox> largest_component_box(const Mask& mask, int connectivity);

/// Min-max normalization to [0,1]; a constant map becomes all zeros.
Heatmap normalize(const Heatmap& map);

/// Heatmap -> box: upsample to input_side^2, min-max normalize, keep values
/// >= threshold_frac, and box the largest connected component. A constant
/// heatmap yields the full-image box.
BBox localize(const Heatmap& heatmap, int input_side, const LocalizeOptions& options = {});

struct Localization {
  int predicted_class = 0;
  int cam_class = 0;
  BBox box;
  Heatmap cam;  // raw CAM at feature resolution
  std::vector<double> logits;
};

/// Eval-mode forward of one image. The CAM uses target_class when given
/// (ground-truth-known path), otherwise the arg-max class.
Localization predict_and_localize(const Network& net, const Image& image,
                                  std::optional<int> target_class = std::nullopt,
                                  const LocalizeOptions& options = {});

}  // namespace wsol

#pragma once

// Reference implementations written independently of the library code they
// check: direct loops, flood fill, pixel counting, finite differences.

#include <functional>
#include <optional>
#include <vector>

#include "wsol/cam.hpp"
#include "wsol/model.hpp"
#include "wsol/tensor.hpp"

namespace wsol::oracle {

/// Direct six-loop convolution.
Tensord conv2d(const Tensord& x, const Tensord& w, int stride, int pad);

/// Breadth-first flood fill from every unvisited set pixel in raster order.
std::vector<Component> flood_fill_components(const Mask& mask, int connectivity);
/// Largest flood-fill component; ties to smallest (y_min, x_min), then raster order.
std::optional<BBox> flood_fill_largest_box(const Mask& mask, int connectivity);

/// IoU by counting pixels of the two boxes over their common frame.
double pixel_iou(const BBox& a, const BBox& b);

/// Trainable parameter count from the widths/blocks table alone.
Index parameter_count(const ModelConfig& config);

/// Central-difference derivative of f along every element of `param`.
/// The parameter is restored afterwards.
Tensord numeric_gradient(const std::function<double()>& f, Tensord& param, double step = 1e-3);

/// |a - n| / max(|a|, |n|, floor). Below the floor the O(step^2) truncation
/// error of the central difference dominates, so the ratio is taken against
/// the floor instead.
double relative_error(double analytic, double numeric, double floor = 1e-3);

struct GradientReport {
  double worst = 0.0;
  double worst_abs = 0.0;
  std::string where;
  long checked = 0;
  long skipped = 0;  // steps that crossed a ReLU kink
};

/// Loss value plus the sign pattern of every ReLU input it passed through.
struct PiecewiseLoss {
  double value = 0.0;
  std::vector<bool> pattern;
};

/// Compares an analytic gradient with numeric_gradient of f on `param`.
void compare_gradient(const std::string& name, const Tensord& analytic,
                      const std::function<double()>& f, Tensord& param, GradientReport& report,
                      double step = 1e-3);
/// Same, for a piecewise-smooth loss: coordinates whose +-step perturbations
/// see different ReLU patterns have no central difference and are skipped.
void compare_gradient(const std::string& name, const Tensord& analytic,
                      const std::function<PiecewiseLoss()>& f, Tensord& param,
                      GradientReport& report, double step = 1e-3);

}  // namespace wsol::oracle

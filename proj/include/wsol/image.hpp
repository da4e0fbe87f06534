#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>

#include "wsol/error.hpp"
#include "wsol/tensor.hpp"

namespace wsol {

/// Row-major single-channel plane; rows are image rows (y), columns x.
using Plane = Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rgb = std::array<double, 3>;

/// Binary pixel map (object masks, thresholded heatmaps); nonzero is set.
using Mask = Eigen::Array<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// RGB image with channel-interleaved row-major pixels in [0, 1].
struct Image {
  static constexpr Index channels = 3;

  Index width = 0;
  Index height = 0;
  Eigen::ArrayXd pixels;

  Image() = default;
  Image(Index w, Index h, double fill = 0.0)
      : width(w), height(h), pixels(Eigen::ArrayXd::Constant(w * h * channels, fill)) {
    if (w < 1 || h < 1) throw InvalidArgument("image: dimensions must be positive");
  }
  Image(Index w, Index h, const Rgb& color) : Image(w, h) {
    for (Index i = 0; i < w * h; ++i)
      for (Index c = 0; c < channels; ++c) pixels[i * channels + c] = color[c];
  }

  double& at(Index x, Index y, Index c) { return pixels[(y * width + x) * channels + c]; }
  double at(Index x, Index y, Index c) const { return pixels[(y * width + x) * channels + c]; }

  Plane channel(Index c) const;
  void set_channel(Index c, const Plane& plane);

  friend bool operator==(const Image& a, const Image& b) {
    return a.width == b.width && a.height == b.height && (a.pixels == b.pixels).all();
  }
};

/// Class activation heatmap; values have no fixed range until normalized.
struct Heatmap {
  Plane values;

  Heatmap() = default;
  explicit Heatmap(Plane v) : values(std::move(v)) {}
  Index width() const { return values.cols(); }
  Index height() const { return values.rows(); }
};

/// Pixel box with inclusive minimum and exclusive maximum corners.
struct BBox {
  int x_min = 0;
  int y_min = 0;
  int x_max = 1;
  int y_max = 1;

  int width() const { return x_max - x_min; }
  int height() const { return y_max - y_min; }
  long area() const { return static_cast<long>(width()) * height(); }
  bool valid() const { return x_min >= 0 && y_min >= 0 && x_min < x_max && y_min < y_max; }
  bool fits(Index frame_w, Index frame_h) const {
    return valid() && x_max <= frame_w && y_max <= frame_h;
  }
  std::string str() const;

  friend bool operator==(const BBox&, const BBox&) = default;
};

/// Align-corners bilinear resampling: output index i samples source
/// coordinate i*(S-1)/(D-1), or 0 when D == 1.
Plane bilinear_resize(const Eigen::Ref<const Plane>& src, Index out_w, Index out_h);
Image bilinear_resize(const Image& img, Index out_w, Index out_h);
Heatmap bilinear_resize(const Heatmap& map, Index out_w, Index out_h);

/// Sub-image copy; the box must fit inside the image.
Image crop(const Image& img, const BBox& box);

/// NCHW tensor of one image, [1,3,H,W].
Tensord to_tensor(const Image& img);
/// Writes image into batch slot n of an [N,3,H,W] tensor.
void copy_to_batch(const Image& img, Tensord& batch, Index n);

}  // namespace wsol

#include "wsol/image.hpp"

#include <cmath>
#include <sstream>

namespace wsol {

Plane Image::channel(Index c) const {
  Plane p(height, width);
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) p(y, x) = at(x, y, c);
  return p;
}

void Image::set_channel(Index c, const Plane& plane) {
  if (plane.rows() != height || plane.cols() != width) {
    throw InvalidArgument("image: channel plane size mismatch");
  }
  for (Index y = 0; y < height; ++y)
    for (Index x = 0; x < width; ++x) at(x, y, c) = plane(y, x);
}

std::string BBox::str() const {
  std::ostringstream os;
  os << '(' << x_min << ',' << y_min << ',' << x_max << ',' << y_max << ')';
  return os.str();
}

namespace {

struct Tap {
  Index lo, hi;
  double t;
};

std::vector<Tap> taps(Index src, Index dst) {
  std::vector<Tap> out(static_cast<std::size_t>(dst));
  for (Index i = 0; i < dst; ++i) {
    const double s = dst > 1 ? static_cast<double>(i) * static_cast<double>(src - 1) /
                                   static_cast<double>(dst - 1)
                             : 0.0;
    Index lo = static_cast<Index>(std::floor(s));
    if (lo > src - 1) lo = src - 1;
    const Index hi = lo + 1 < src ? lo + 1 : lo;
    out[static_cast<std::size_t>(i)] = {lo, hi, s - static_cast<double>(lo)};
  }
  return out;
}

}  // namespace

Plane bilinear_resize(const Eigen::Ref<const Plane>& src, Index out_w, Index out_h) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("bilinear_resize: output size must be >= 1");
  if (src.rows() < 1 || src.cols() < 1) throw InvalidArgument("bilinear_resize: empty source");
  if (src.rows() == out_h && src.cols() == out_w) return src;
  const auto xs = taps(src.cols(), out_w);
  const auto ys = taps(src.rows(), out_h);
  Plane out(out_h, out_w);
  for (Index i = 0; i < out_h; ++i) {
    const Tap& ty = ys[static_cast<std::size_t>(i)];
    for (Index j = 0; j < out_w; ++j) {
      const Tap& tx = xs[static_cast<std::size_t>(j)];
      const double top = src(ty.lo, tx.lo) + tx.t * (src(ty.lo, tx.hi) - src(ty.lo, tx.lo));
      const double bottom = src(ty.hi, tx.lo) + tx.t * (src(ty.hi, tx.hi) - src(ty.hi, tx.lo));
      out(i, j) = top + ty.t * (bottom - top);
    }
  }
  return out;
}

Image bilinear_resize(const Image& img, Index out_w, Index out_h) {
  if (img.width == out_w && img.height == out_h) return img;
  Image out(out_w, out_h);
  for (Index c = 0; c < Image::channels; ++c) {
    // Convex combinations stay inside [0,1] up to round-off; clamp that away.
    out.set_channel(c, bilinear_resize(img.channel(c), out_w, out_h).max(0.0).min(1.0));
  }
  return out;
}

Heatmap bilinear_resize(const Heatmap& map, Index out_w, Index out_h) {
  return Heatmap(bilinear_resize(map.values, out_w, out_h));
}

Image crop(const Image& img, const BBox& box) {
  if (!box.fits(img.width, img.height)) {
    throw InvalidArgument("crop: box " + box.str() + " outside image");
  }
  Image out(box.width(), box.height());
  for (Index y = 0; y < out.height; ++y) {
    const Index src = ((box.y_min + y) * img.width + box.x_min) * Image::channels;
    out.pixels.segment(y * out.width * Image::channels, out.width * Image::channels) =
        img.pixels.segment(src, out.width * Image::channels);
  }
  return out;
}

Tensord to_tensor(const Image& img) {
  Tensord t(Shape{1, Image::channels, img.height, img.width});
  copy_to_batch(img, t, 0);
  return t;
}

void copy_to_batch(const Image& img, Tensord& batch, Index n) {
  if (batch.rank() != 4 || batch.dim(1) != Image::channels || batch.dim(2) != img.height ||
      batch.dim(3) != img.width || n < 0 || n >= batch.dim(0)) {
    throw InvalidArgument("copy_to_batch: image " + std::to_string(img.width) + "x" +
                          std::to_string(img.height) + " does not fit batch " +
                          shape_string(batch.shape()));
  }
  for (Index c = 0; c < Image::channels; ++c)
    for (Index y = 0; y < img.height; ++y)
      for (Index x = 0; x < img.width; ++x) batch(n, c, y, x) = img.at(x, y, c);
}

}  // namespace wsol

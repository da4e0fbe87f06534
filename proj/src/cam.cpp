#include "wsol/cam.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>

namespace wsol {

void LocalizeOptions::validate() const {
  if (!(threshold_frac > 0.0 && threshold_frac < 1.0)) {
    throw InvalidArgument("localize: threshold_frac must lie in (0,1)");
  }
  if (connectivity != 4 && connectivity != 8) {
    throw InvalidArgument("localize: connectivity must be 4 or 8");
  }
}

Heatmap compute_cam(const Tensord& features, std::span<const double> class_weights) {
  Tensord f = features;
  if (f.rank() == 4 && f.dim(0) == 1) f = f.reshaped({f.dim(1), f.dim(2), f.dim(3)});
  if (f.rank() != 3) {
    throw InvalidArgument("compute_cam: expected features [K,h,w], got " + shape_string(features.shape()));
  }
  const Index k = f.dim(0), h = f.dim(1), w = f.dim(2);
  if (static_cast<Index>(class_weights.size()) != k) {
    throw InvalidArgument("compute_cam: " + std::to_string(class_weights.size()) +
                          " weights for " + std::to_string(k) + " channels");
  }
  Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> maps(
      f.data(), k, h * w);
  Eigen::Map<const Eigen::VectorXd> weights(class_weights.data(), k);
  Plane cam(h, w);
  Eigen::Map<Eigen::RowVectorXd>(cam.data(), h * w).noalias() = weights.transpose() * maps;
  return Heatmap(std::move(cam));
}

std::vector<double> class_weights(const Network& net, int cls) {
  if (cls < 0 || cls >= net.num_classes()) {
    throw InvalidArgument("class index " + std::to_string(cls) + " out of range");
  }
  const auto col = net.classifier.weight.matrix().col(cls);
  return {col.begin(), col.end()};
}

namespace {

int find_root(std::vector<int>& parent, int x) {
  while (parent[static_cast<std::size_t>(x)] != x) {
    parent[static_cast<std::size_t>(x)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(x)])];
    x = parent[static_cast<std::size_t>(x)];
  }
  return x;
}

void unite(std::vector<int>& parent, int a, int b) {
  a = find_root(parent, a);
  b = find_root(parent, b);
  if (a == b) return;
  if (a < b) std::swap(a, b);
  parent[static_cast<std::size_t>(a)] = b;
}

}  // namespace

Labeling label_components(const Mask& mask, int connectivity) {
  if (connectivity != 4 && connectivity != 8) {
    throw InvalidArgument("label_components: connectivity must be 4 or 8");
  }
  const Index rows = mask.rows(), cols = mask.cols();
  Labeling out;
  out.labels.setZero(rows, cols);
  std::vector<int> parent{0};

  // Pass 1: provisional labels from the already-visited neighbours.
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      if (!mask(y, x)) continue;
      int label = 0;
      auto consider = [&](Index ny, Index nx) {
        if (ny < 0 || nx < 0 || nx >= cols) return;
        const int l = out.labels(ny, nx);
        if (!l) return;
        if (!label) {
          label = l;
        } else {
          unite(parent, label, l);
        }
      };
      consider(y, x - 1);
      consider(y - 1, x);
      if (connectivity == 8) {
        consider(y - 1, x - 1);
        consider(y - 1, x + 1);
      }
      if (!label) {
        label = static_cast<int>(parent.size());
        parent.push_back(label);
      }
      out.labels(y, x) = label;
    }
  }

  // Pass 2: compact roots to 1..n in raster order of first pixel.
  std::vector<int> remap(parent.size(), 0);
  for (Index y = 0; y < rows; ++y) {
    for (Index x = 0; x < cols; ++x) {
      int& l = out.labels(y, x);
      if (!l) continue;
      const int root = find_root(parent, l);
      int& id = remap[static_cast<std::size_t>(root)];
      if (!id) {
        out.components.push_back({0, {static_cast<int>(x), static_cast<int>(y),
                                      static_cast<int>(x) + 1, static_cast<int>(y) + 1}});
        id = static_cast<int>(out.components.size());
      }
      l = id;
      Component& c = out.components[static_cast<std::size_t>(id - 1)];
      ++c.area;
      c.box.x_min = std::min(c.box.x_min, static_cast<int>(x));
      c.box.y_min = std::min(c.box.y_min, static_cast<int>(y));
      c.box.x_max = std::max(c.box.x_max, static_cast<int>(x) + 1);
      c.box.y_max = std::max(c.box.y_max, static_cast<int>(y) + 1);
    }
  }
  return out;
}

std::optional<BBox> largest_component_box(const Mask& mask, int connectivity) {
  const Labeling lab = label_components(mask, connectivity);
  const Component* best = nullptr;
  for (const Component& c : lab.components) {
    if (!best || c.area > best->area ||
        (c.area == best->area &&
         std::tie(c.box.y_min, c.box.x_min) < std::tie(best->box.y_min, best->box.x_min))) {
      best = &c;
    }
  }
  if (!best) return std::nullopt;
  return best->box;
}

Heatmap normalize(const Heatmap& map) {
  const double lo = map.values.minCoeff();
  const double hi = map.values.maxCoeff();
  if (!(hi > lo)) return Heatmap(Plane::Zero(map.height(), map.width()));
  return Heatmap((map.values - lo) / (hi - lo));
}

BBox localize(const Heatmap& heatmap, int input_side, const LocalizeOptions& options) {
  options.validate();
  if (input_side < 1) throw InvalidArgument("localize: input_side must be positive");
  if (heatmap.width() < 1 || heatmap.height() < 1) throw InvalidArgument("localize: empty heatmap");
  if (!heatmap.values.allFinite()) throw InvalidArgument("localize: non-finite heatmap");
  const Heatmap up = bilinear_resize(heatmap, input_side, input_side);
  const BBox full{0, 0, input_side, input_side};
  if (!(up.values.maxCoeff() > up.values.minCoeff())) return full;
  const Heatmap norm = normalize(up);
  const Mask binary = (norm.values >= options.threshold_frac).cast<std::uint8_t>();
  return largest_component_box(binary, options.connectivity).value_or(full);
}

Localization predict_and_localize(const Network& net, const Image& image,
                                  std::optional<int> target_class, const LocalizeOptions& options) {
  if (target_class && (*target_class < 0 || *target_class >= net.num_classes())) {
    throw InvalidArgument("predict_and_localize: target class " + std::to_string(*target_class) +
                          " out of range");
  }
  const ForwardResult fr = forward(net, to_tensor(image));
  Localization out;
  const auto row = fr.logits.matrix().row(0);
  out.logits.assign(row.begin(), row.end());
  Index argmax = 0;
  row.maxCoeff(&argmax);
  out.predicted_class = static_cast<int>(argmax);
  out.cam_class = target_class.value_or(out.predicted_class);
  const auto w = class_weights(net, out.cam_class);
  out.cam = compute_cam(fr.features, w);
  out.box = localize(out.cam, net.config.input_side, options);
  return out;
}

}  // namespace wsol

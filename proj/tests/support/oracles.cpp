#include "oracles.hpp"

#include <cmath>
#include <deque>

namespace wsol::oracle {

Tensord conv2d(const Tensord& x, const Tensord& w, int stride, int pad) {
  const Index n = x.dim(0), c = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const Index k = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const Index oh = (h + 2 * pad - kh) / stride + 1, ow = (wd + 2 * pad - kw) / stride + 1;
  Tensord y(Shape{n, k, oh, ow});
  for (Index b = 0; b < n; ++b)
    for (Index o = 0; o < k; ++o)
      for (Index i = 0; i < oh; ++i)
        for (Index j = 0; j < ow; ++j) {
          double s = 0;
          for (Index ch = 0; ch < c; ++ch)
            for (Index a = 0; a < kh; ++a)
              for (Index bb = 0; bb < kw; ++bb) {
                const Index yy = i * stride + a - pad, xx = j * stride + bb - pad;
                if (yy >= 0 && yy < h && xx >= 0 && xx < wd) s += x(b, ch, yy, xx) * w(o, ch, a, bb);
              }
          y(b, o, i, j) = s;
        }
  return y;
}

std::vector<Component> flood_fill_components(const Mask& mask, int connectivity) {
  const int rows = static_cast<int>(mask.rows()), cols = static_cast<int>(mask.cols());
  std::vector<char> seen(static_cast<std::size_t>(rows * cols), 0);
  std::vector<Component> out;
  for (int y0 = 0; y0 < rows; ++y0)
    for (int x0 = 0; x0 < cols; ++x0) {
      if (!mask(y0, x0) || seen[y0 * cols + x0]) continue;
      Component comp;
      comp.box = {x0, y0, x0 + 1, y0 + 1};
      std::deque<std::pair<int, int>> queue{{x0, y0}};
      seen[y0 * cols + x0] = 1;
      while (!queue.empty()) {
        auto [x, y] = queue.front();
        queue.pop_front();
        ++comp.area;
        comp.box.x_min = std::min(comp.box.x_min, x);
        comp.box.y_min = std::min(comp.box.y_min, y);
        comp.box.x_max = std::max(comp.box.x_max, x + 1);
        comp.box.y_max = std::max(comp.box.y_max, y + 1);
        for (int dy = -1; dy <= 1; ++dy)
          for (int dx = -1; dx <= 1; ++dx) {
            if (dx == 0 && dy == 0) continue;
            if (connectivity == 4 && dx != 0 && dy != 0) continue;
            const int nx = x + dx, ny = y + dy;
            if (nx < 0 || ny < 0 || nx >= cols || ny >= rows) continue;
            if (!mask(ny, nx) || seen[ny * cols + nx]) continue;
            seen[ny * cols + nx] = 1;
            queue.emplace_back(nx, ny);
          }
      }
      out.push_back(comp);
    }
  return out;
}

std::optional<BBox> flood_fill_largest_box(const Mask& mask, int connectivity) {
  const auto comps = flood_fill_components(mask, connectivity);
  const Component* best = nullptr;
  for (const Component& c : comps) {
    if (!best || c.area > best->area ||
        (c.area == best->area &&
         std::pair(c.box.y_min, c.box.x_min) < std::pair(best->box.y_min, best->box.x_min))) {
      best = &c;
    }
  }
  if (!best) return std::nullopt;
  return best->box;
}

double pixel_iou(const BBox& a, const BBox& b) {
  const int w = std::max(a.x_max, b.x_max), h = std::max(a.y_max, b.y_max);
  long inter = 0, uni = 0;
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const bool in_a = x >= a.x_min && x < a.x_max && y >= a.y_min && y < a.y_max;
      const bool in_b = x >= b.x_min && x < b.x_max && y >= b.y_min && y < b.y_max;
      inter += in_a && in_b;
      uni += in_a || in_b;
    }
  return uni ? static_cast<double>(inter) / static_cast<double>(uni) : 0.0;
}

Index parameter_count(const ModelConfig& requested) {
  const ModelConfig cfg = requested.resolved();
  Index total = 3 * cfg.stage_widths[0] * 9;  // stem
  Index in = cfg.stage_widths[0];
  for (std::size_t s = 0; s < cfg.stage_widths.size(); ++s) {
    const Index w = cfg.stage_widths[s];
    for (int b = 0; b < cfg.blocks_per_stage[s]; ++b) {
      total += 2 * in + in * w * 9 + 2 * w + w * w * 9;
      const bool downsample = s > 0 && b == 0;
      if (downsample || in != w) total += in * w;
      in = w;
    }
  }
  return total + 2 * in + in * cfg.num_classes + cfg.num_classes;
}

Tensord numeric_gradient(const std::function<double()>& f, Tensord& param, double step) {
  Tensord g = Tensord::zeros_like(param);
  for (Index i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + step;
    const double up = f();
    param[i] = keep - step;
    const double down = f();
    param[i] = keep;
    g[i] = (up - down) / (2 * step);
  }
  return g;
}

double relative_error(double analytic, double numeric, double floor) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

void compare_gradient(const std::string& name, const Tensord& analytic,
                      const std::function<double()>& f, Tensord& param, GradientReport& report,
                      double step) {
  const Tensord numeric = numeric_gradient(f, param, step);
  for (Index i = 0; i < numeric.size(); ++i) {
    const double e = relative_error(analytic[i], numeric[i]);
    report.worst_abs = std::max(report.worst_abs, std::abs(analytic[i] - numeric[i]));
    ++report.checked;
    if (e > report.worst) {
      report.worst = e;
      report.where = name + "[" + std::to_string(i) + "]";
    }
  }
}

void compare_gradient(const std::string& name, const Tensord& analytic,
                      const std::function<PiecewiseLoss()>& f, Tensord& param,
                      GradientReport& report, double step) {
  for (Index i = 0; i < param.size(); ++i) {
    const double keep = param[i];
    param[i] = keep + step;
    const PiecewiseLoss up = f();
    param[i] = keep - step;
    const PiecewiseLoss down = f();
    param[i] = keep;
    if (up.pattern != down.pattern) {
      ++report.skipped;
      continue;
    }
    const double numeric = (up.value - down.value) / (2 * step);
    const double e = relative_error(analytic[i], numeric);
    report.worst_abs = std::max(report.worst_abs, std::abs(analytic[i] - numeric));
    ++report.checked;
    if (e > report.worst) {
      report.worst = e;
      report.where = name + "[" + std::to_string(i) + "]";
    }
  }
}

}  // namespace wsol::oracle

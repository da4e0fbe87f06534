#include "wsol/augment.hpp"

#include <algorithm>
#include <cmath>

namespace wsol {

std::string_view to_string(Policy p) {
  switch (p) {
    case Policy::none: return "none";
    case Policy::hns: return "hns";
    case Policy::gr: return "gr";
    case Policy::gr_then_hns: return "gr_then_hns";
    case Policy::hns_then_gr: return "hns_then_gr";
  }
  return "?";
}

std::string_view display_name(Policy p) {
  switch (p) {
    case Policy::none: return "CAM";
    case Policy::hns: return "HnS";
    case Policy::gr: return "GR (Proposed)";
    case Policy::gr_then_hns: return "HnS after GR";
    case Policy::hns_then_gr: return "GR after HnS";
  }
  return "?";
}

Policy parse_policy(std::string_view name) {
  for (Policy p : kAllPolicies) {
    if (to_string(p) == name) return p;
  }
  throw InvalidArgument("unknown augmentation policy '" + std::string(name) + "'");
}

void AugmentSpec::validate() const {
  for (int g : hns_grid_sizes) {
    if (g < 0) throw InvalidArgument("augment: negative grid size");
  }
  if (hns_grid_sizes.empty() && (policy != Policy::none && policy != Policy::gr)) {
    throw InvalidArgument("augment: hns_grid_sizes is empty");
  }
  if (!(hide_prob >= 0.0 && hide_prob <= 1.0)) {
    throw InvalidArgument("augment: hide_prob must lie in [0,1]");
  }
  if (!(area_range.lo > 0.0 && area_range.lo <= area_range.hi && area_range.hi <= 1.0)) {
    throw InvalidArgument("augment: area_range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(aspect_range.lo > 0.0 && aspect_range.lo <= 1.0 && aspect_range.hi >= 1.0)) {
    throw InvalidArgument("augment: aspect_range must satisfy 0 < lo <= 1 <= hi");
  }
  if (max_attempts < 1) throw InvalidArgument("augment: max_attempts must be positive");
  if (fill_value) {
    for (double v : *fill_value) {
      if (!(v >= 0.0 && v <= 1.0)) throw InvalidArgument("augment: fill_value outside [0,1]");
    }
  }
}

Image hns_mask(const Image& img, const std::vector<int>& grid_sizes, double hide_prob,
               const Rgb& fill_value, RngStream& rng, HnsTrace* trace) {
  if (grid_sizes.empty()) throw InvalidArgument("hns_mask: no grid sizes");
  for (int g : grid_sizes) {
    if (g < 0 || g > img.width || g > img.height) {
      throw InvalidArgument("hns_mask: grid size " + std::to_string(g) +
                            " does not fit a " + std::to_string(img.width) + "x" +
                            std::to_string(img.height) + " image");
    }
  }
  const int g = grid_sizes[rng.uniform_index(grid_sizes.size())];
  HnsTrace local;
  local.grid = g;
  Image out = img;
  if (g > 0) {
    for (Index py = 0; py < img.height; py += g) {
      for (Index px = 0; px < img.width; px += g) {
        ++local.patches;
        if (!rng.bernoulli(hide_prob)) continue;
        ++local.hidden_patches;
        const Index y_end = std::min<Index>(py + g, img.height);
        const Index x_end = std::min<Index>(px + g, img.width);
        for (Index y = py; y < y_end; ++y)
          for (Index x = px; x < x_end; ++x)
            for (Index c = 0; c < Image::channels; ++c) out.at(x, y, c) = fill_value[c];
        local.hidden_pixels += (y_end - py) * (x_end - px);
      }
    }
  }
  if (trace) *trace = local;
  return out;
}

Image gr_crop(const Image& img, Range area_range, Range aspect_range, Index out_w, Index out_h,
              int max_attempts, RngStream& rng, GrTrace* trace) {
  if (out_w < 1 || out_h < 1) throw InvalidArgument("gr_crop: output size must be >= 1");
  const double W = static_cast<double>(img.width);
  const double H = static_cast<double>(img.height);
  GrTrace local;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    ++local.attempts;
    const double a = rng.uniform(area_range.lo, area_range.hi);
    // w/h = r with w*h = a*W*H fits iff a*W/H <= r <= W/(a*H).
    const double log_lo = std::max(std::log(aspect_range.lo), std::log(a * W / H));
    const double log_hi = std::min(std::log(aspect_range.hi), std::log(W / (a * H)));
    local.target_area = a;
    if (log_lo > log_hi) continue;
    const double r = std::exp(rng.uniform(log_lo, log_hi));
    local.target_aspect = r;
    const Index w = std::lround(std::sqrt(a * W * H * r));
    const Index h = std::lround(std::sqrt(a * W * H / r));
    if (w < 1 || h < 1 || w > img.width || h > img.height) continue;
    // Rounding can nudge the realized ratio past the range on small crops.
    const double realized = static_cast<double>(w) / static_cast<double>(h);
    if (realized < aspect_range.lo || realized > aspect_range.hi) continue;
    const auto x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(img.width - w + 1)));
    const auto y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(img.height - h + 1)));
    local.box = {x0, y0, x0 + static_cast<int>(w), y0 + static_cast<int>(h)};
    if (trace) *trace = local;
    return bilinear_resize(crop(img, local.box), out_w, out_h);
  }
  const Index side = std::min(img.width, img.height);
  const int x0 = static_cast<int>((img.width - side) / 2);
  const int y0 = static_cast<int>((img.height - side) / 2);
  local.fallback = true;
  local.box = {x0, y0, x0 + static_cast<int>(side), y0 + static_cast<int>(side)};
  if (trace) *trace = local;
  return bilinear_resize(crop(img, local.box), out_w, out_h);
}

Image apply_policy(const AugmentSpec& spec, const Image& img, RngStream& rng) {
  spec.validate();
  auto gr = [&](const Image& in) {
    return gr_crop(in, spec.area_range, spec.aspect_range, in.width, in.height, spec.max_attempts,
                   rng);
  };
  auto hns = [&](const Image& in) {
    if (!spec.fill_value) throw InvalidArgument("apply_policy: fill_value is unresolved");
    return hns_mask(in, spec.hns_grid_sizes, spec.hide_prob, *spec.fill_value, rng);
  };
  switch (spec.policy) {
    case Policy::none: return img;
    case Policy::hns: return hns(img);
    case Policy::gr: return gr(img);
    case Policy::gr_then_hns: return hns(gr(img));
    case Policy::hns_then_gr: return gr(hns(img));
  }
  return img;
}

}  // namespace wsol

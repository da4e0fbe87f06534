#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "wsol/image.hpp"
#include "wsol/rng.hpp"

namespace wsol {

enum class Policy { none, hns, gr, gr_then_hns, hns_then_gr };

/// Policies in the column order of the augmentation comparison table.
inline constexpr Policy kAllPolicies[] = {Policy::none, Policy::hns, Policy::gr,
                                          Policy::gr_then_hns, Policy::hns_then_gr};

std::string_view to_string(Policy p);
/// Column heading used in report tables ("CAM", "HnS", "GR (Proposed)", ...).
std::string_view display_name(Policy p);
Policy parse_policy(std::string_view name);

struct Range {
  double lo;
  double hi;
};

struct AugmentSpec {
  Policy policy = Policy::gr;
  /// Patch side lengths in pixels; 0 leaves the image untouched.
  std::vector<int> hns_grid_sizes{0, 4, 8, 16};
  double hide_prob = 0.5;
  /// Unset means "per-channel mean of the training set", resolved by the trainer.
  std::optional<Rgb> fill_value;
  Range area_range{0.08, 1.0};
  Range aspect_range{0.75, 4.0 / 3.0};
  int max_attempts = 10;

  /// Throws InvalidArgument describing the first violated constraint.
  void validate() const;
};

/// What hns_mask drew; for statistics and tests.
struct HnsTrace {
  int grid = 0;
  long patches = 0;
  long hidden_patches = 0;
  long hidden_pixels = 0;
};

/// Hide-and-Seek masking.
///
/// Draw order: one uniform index into grid_sizes, then one uniform per patch
/// in row-major patch order (hidden when the draw is below hide_prob). Edge
/// patches are clipped to the image.
Image hns_mask(const Image& img, const std::vector<int>& grid_sizes, double hide_prob,
               const Rgb& fill_value, RngStream& rng, HnsTrace* trace = nullptr);

/// What gr_crop drew and produced.
struct GrTrace {
  int attempts = 0;
  bool fallback = false;
  double target_area = 0.0;    // last sampled area fraction
  double target_aspect = 0.0;  // last sampled width/height ratio
  BBox box;                    // realized crop in source pixels
};

/// GoogLeNet-style random resized crop.
///
/// Each attempt draws an area fraction a ~ U(area_range) and then a log-uniform
/// aspect r from the part of aspect_range for which an a-sized crop fits
/// inside the image; the attempt fails when that part is empty or the rounded
/// crop degenerates or leaves the aspect range. A successful attempt draws
/// the top-left x then y uniformly.
/// After max_attempts failures the largest centered square is used. The crop
/// is bilinearly resized to out_w x out_h.
Image gr_crop(const Image& img, Range area_range, Range aspect_range, Index out_w, Index out_h,
              int max_attempts, RngStream& rng, GrTrace* trace = nullptr);

/// Applies spec.policy. The two compositions run their stages in the named
/// order ("gr_then_hns" crops first) on the same stream. GR output keeps the
/// input size.
Image apply_policy(const AugmentSpec& spec, const Image& img, RngStream& rng);

}  // namespace wsol

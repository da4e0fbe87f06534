#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wsol/augment.hpp"
#include "wsol/cam.hpp"
#include "wsol/data.hpp"
#include "wsol/json.hpp"
#include "wsol/model.hpp"
#include "wsol/train.hpp"

namespace wsol {

/// Intersection over union of half-open pixel boxes; 0 when disjoint.
double iou(const BBox& a, const BBox& b);

struct SampleResult {
  int id = 0;
  int true_class = 0;
  int predicted_class = 0;
  BBox gt_box;
  BBox bbox_top1;     // CAM of the predicted class
  BBox bbox_gtknown;  // CAM of the true class
  double iou_top1 = 0.0;
  double iou_gtknown = 0.0;
};

/// Hit counts for one slice of results. Percentages are 100 * hits / n.
struct MetricCounts {
  long n = 0;
  long gt_known = 0;  // iou_gtknown > 0.5
  long top1_loc = 0;  // iou_top1 > 0.5 and correct class
  long top1_clas = 0;
  long iou_top1_hits = 0;  // iou_top1 > 0.5 regardless of class

  double gt_known_loc_pct() const { return pct(gt_known); }
  double top1_loc_pct() const { return pct(top1_loc); }
  double top1_clas_pct() const { return pct(top1_clas); }

 private:
  double pct(long k) const { return n ? 100.0 * static_cast<double>(k) / static_cast<double>(n) : 0.0; }
};

struct MetricsReport {
  MetricCounts overall;
  std::vector<MetricCounts> per_class;  // indexed by true class
  Json config = Json::object();         // echo of the producing run

  double gt_known_loc() const { return overall.gt_known_loc_pct(); }
  double top1_loc() const { return overall.top1_loc_pct(); }
  double top1_clas() const { return overall.top1_clas_pct(); }
  long n_samples() const { return overall.n; }
};

/// The three localization metrics; a tie at IoU exactly 0.5 is a miss.
MetricsReport evaluate(std::span<const SampleResult> results);

/// Runs CAM localization for both the predicted and the true class of every
/// sample. Samples are processed in eval mode, in parallel batches.
std::vector<SampleResult> localize_dataset(const Network& net, std::span<const Sample> samples,
                                           const LocalizeOptions& options = {});

/// "12.50" style rendering used by every report.
std::string format_pct(double value);
Json to_json(const MetricsReport& report);
Json to_json(const SampleResult& r);
/// Inverse of to_json(SampleResult). IoUs missing from the record are
/// recomputed from its boxes; present ones must match them.
SampleResult sample_result_from_json(const Json& j);
/// Aligned plain-text summary with a per-class breakdown.
std::string format_report(const MetricsReport& report);

struct MatrixConfig {
  std::vector<Policy> policies{std::begin(kAllPolicies), std::end(kAllPolicies)};
  std::vector<int> batch_sizes{32, 128, 256};
  std::vector<Variant> variants{Variant::res34, Variant::res18};
  std::vector<std::uint64_t> seeds{0};
};

struct MatrixCell {
  Policy policy = Policy::none;
  int batch_size = 0;
  Variant variant = Variant::toy10;
  std::uint64_t seed = 0;
  std::optional<MetricsReport> report;  // empty when training failed
  std::string error;
  bool diverged = false;
};

struct MatrixReport {
  MatrixConfig axes;
  std::vector<MatrixCell> cells;  // policy-major, then batch, variant, seed

  bool any_failed() const;
  const MatrixCell& cell(Policy p, int batch, Variant v, std::uint64_t seed) const;
  /// Mean of a metric over the seeds whose cell succeeded; nullopt if none did.
  std::optional<double> mean(Policy p, int batch, Variant v,
                             double (MetricsReport::*metric)() const) const;
};

struct MatrixSpec {
  MatrixConfig axes;
  int num_classes = 4;
  int input_side = 64;
  /// Base hyperparameters; batch size, policy and seed are set per cell.
  TrainConfig train;
  LocalizeOptions localize;
};

/// Trains and evaluates one network per (policy, batch, variant, seed). The
/// cell seed drives both initialization and training. Cells run in parallel
/// up to the worker cap; a failing cell is recorded and the rest continue.
MatrixReport run_matrix(std::span<const Sample> train, std::span<const Sample> test,
                        const MatrixSpec& spec,
                        const std::function<void(const MatrixCell&)>& on_cell = {});

Json to_json(const MatrixReport& report);
/// The augmentation table (depth x metric rows, policy columns) per batch
/// size, then the batch-size table of Top-1 Loc (method x batch rows,
/// depth columns), then per-seed Top-1 Loc values.
std::string format_matrix(const MatrixReport& report);

}  // namespace wsol

#include "wsol/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <mutex>
#include <sstream>

#include "wsol/config.hpp"
#include "wsol/parallel.hpp"

namespace wsol {

double iou(const BBox& a, const BBox& b) {
  if (!a.valid() || !b.valid()) throw InvalidArgument("iou: invalid box " + (a.valid() ? b : a).str());
  const long ix = std::max(0, std::min(a.x_max, b.x_max) - std::max(a.x_min, b.x_min));
  const long iy = std::max(0, std::min(a.y_max, b.y_max) - std::max(a.y_min, b.y_min));
  const long inter = ix * iy;
  const long uni = a.area() + b.area() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MetricsReport evaluate(std::span<const SampleResult> results) {
  if (results.empty()) throw InvalidArgument("evaluate: no results");
  MetricsReport report;
  for (const SampleResult& r : results) {
    if (r.true_class < 0) throw InvalidArgument("evaluate: negative class");
    if (static_cast<std::size_t>(r.true_class) >= report.per_class.size()) {
      report.per_class.resize(static_cast<std::size_t>(r.true_class) + 1);
    }
    const bool correct = r.predicted_class == r.true_class;
    const bool loc_gt = r.iou_gtknown > 0.5;
    const bool loc_top1 = r.iou_top1 > 0.5;
    for (MetricCounts* m : {&report.overall, &report.per_class[static_cast<std::size_t>(r.true_class)]}) {
      ++m->n;
      m->gt_known += loc_gt;
      m->top1_loc += loc_top1 && correct;
      m->top1_clas += correct;
      m->iou_top1_hits += loc_top1;
    }
  }
  return report;
}

std::vector<SampleResult> localize_dataset(const Network& net, std::span<const Sample> samples,
                                           const LocalizeOptions& options) {
  options.validate();
  constexpr std::size_t kBatch = 32;
  const Index side = net.config.input_side;
  std::vector<SampleResult> out(samples.size());
  const std::size_t batches = (samples.size() + kBatch - 1) / kBatch;
  parallel_for(batches, [&](std::size_t b) {
    const std::size_t first = b * kBatch;
    const std::size_t count = std::min(kBatch, samples.size() - first);
    Tensord batch(Shape{static_cast<Index>(count), 3, side, side});
    for (std::size_t i = 0; i < count; ++i) {
      copy_to_batch(samples[first + i].image, batch, static_cast<Index>(i));
    }
    const ForwardResult fr = forward(net, batch);
    const Index k = fr.features.dim(1), h = fr.features.dim(2), w = fr.features.dim(3);
    for (std::size_t i = 0; i < count; ++i) {
      const Sample& s = samples[first + i];
      if (s.label < 0 || s.label >= net.num_classes()) {
        throw InvalidArgument("localize_dataset: label " + std::to_string(s.label) + " out of range");
      }
      Index argmax = 0;
      fr.logits.matrix().row(static_cast<Index>(i)).maxCoeff(&argmax);
      Tensord feat(Shape{k, h, w},
                   std::span<const double>(fr.features.data() + static_cast<Index>(i) * k * h * w,
                                           static_cast<std::size_t>(k * h * w)));
      SampleResult& r = out[first + i];
      r.id = static_cast<int>(first + i);
      r.true_class = s.label;
      r.predicted_class = static_cast<int>(argmax);
      r.gt_box = s.gt_box;
      r.bbox_top1 = localize(compute_cam(feat, class_weights(net, r.predicted_class)),
                             static_cast<int>(side), options);
      r.bbox_gtknown = r.predicted_class == r.true_class
                           ? r.bbox_top1
                           : localize(compute_cam(feat, class_weights(net, r.true_class)),
                                      static_cast<int>(side), options);
      r.iou_top1 = iou(r.bbox_top1, s.gt_box);
      r.iou_gtknown = iou(r.bbox_gtknown, s.gt_box);
    }
  });
  return out;
}

std::string format_pct(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

namespace {

Json counts_json(const MetricCounts& m) {
  Json j;
  j["n"] = m.n;
  j["gt_known_loc"] = format_pct(m.gt_known_loc_pct());
  j["top1_loc"] = format_pct(m.top1_loc_pct());
  j["top1_clas"] = format_pct(m.top1_clas_pct());
  j["counts"] = {{"gt_known", m.gt_known},
                 {"top1_loc", m.top1_loc},
                 {"top1_clas", m.top1_clas},
                 {"iou_top1_over_half", m.iou_top1_hits}};
  return j;
}

Json box_json(const BBox& b) { return Json::array({b.x_min, b.y_min, b.x_max, b.y_max}); }

std::string pad(const std::string& s, std::size_t width) {
  return s.size() >= width ? s + " " : s + std::string(width - s.size(), ' ');
}

}  // namespace

Json to_json(const MetricsReport& report) {
  Json j = counts_json(report.overall);
  j["n_samples"] = report.n_samples();
  Json per = Json::array();
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    Json e = counts_json(report.per_class[c]);
    e["class"] = c;
    per.push_back(std::move(e));
  }
  j["per_class"] = std::move(per);
  j["config"] = report.config;
  return j;
}

Json to_json(const SampleResult& r) {
  Json j;
  j["id"] = r.id;
  j["true_class"] = r.true_class;
  j["predicted_class"] = r.predicted_class;
  j["gt_box"] = box_json(r.gt_box);
  j["bbox_top1"] = box_json(r.bbox_top1);
  j["bbox_gtknown"] = box_json(r.bbox_gtknown);
  j["iou_top1"] = r.iou_top1;
  j["iou_gtknown"] = r.iou_gtknown;
  return j;
}

SampleResult sample_result_from_json(const Json& j) {
  auto box = [&j](const char* key) -> std::optional<BBox> {
    if (!j.contains(key)) return std::nullopt;
    const Json& b = j.at(key);
    if (!b.is_array() || b.size() != 4) throw InvalidArgument(std::string("sample result: ") + key + " must be [x0,y0,x1,y1]");
    return BBox{b[0].get<int>(), b[1].get<int>(), b[2].get<int>(), b[3].get<int>()};
  };
  SampleResult r;
  try {
    r.id = j.value("id", 0);
    r.true_class = j.at("true_class").get<int>();
    r.predicted_class = j.at("predicted_class").get<int>();
    const auto gt = box("gt_box"), top1 = box("bbox_top1"), known = box("bbox_gtknown");
    if (gt) r.gt_box = *gt;
    if (top1) r.bbox_top1 = *top1;
    if (known) r.bbox_gtknown = *known;
    // IoUs may be given directly or derived from the boxes; when both are
    // present they must agree.
    auto resolve = [&](const char* key, const std::optional<BBox>& pred, double& out) {
      const bool derivable = gt && pred;
      if (j.contains(key)) {
        out = j.at(key).get<double>();
        if (derivable && std::abs(out - iou(*gt, *pred)) > 1e-12) {
          throw InvalidArgument(std::string("sample result: ") + key + " disagrees with its boxes");
        }
      } else if (derivable) {
        out = iou(*gt, *pred);
      } else {
        throw InvalidArgument(std::string("sample result: ") + key + " missing and not derivable");
      }
      if (!(out >= 0.0 && out <= 1.0)) throw InvalidArgument(std::string("sample result: ") + key + " outside [0,1]");
    };
    resolve("iou_top1", top1, r.iou_top1);
    resolve("iou_gtknown", known, r.iou_gtknown);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("sample result: ") + e.what());
  }
  return r;
}

std::string format_report(const MetricsReport& report) {
  std::ostringstream os;
  os << pad("Slice", 10) << pad("N", 7) << pad("GT-known Loc", 14) << pad("Top-1 Loc", 11)
     << "Top-1 Clas\n";
  auto row = [&](const std::string& name, const MetricCounts& m) {
    os << pad(name, 10) << pad(std::to_string(m.n), 7) << pad(format_pct(m.gt_known_loc_pct()), 14)
       << pad(format_pct(m.top1_loc_pct()), 11) << format_pct(m.top1_clas_pct()) << '\n';
  };
  row("all", report.overall);
  for (std::size_t c = 0; c < report.per_class.size(); ++c) {
    if (report.per_class[c].n) row("class " + std::to_string(c), report.per_class[c]);
  }
  return os.str();
}

bool MatrixReport::any_failed() const {
  return std::any_of(cells.begin(), cells.end(), [](const MatrixCell& c) { return !c.report; });
}

const MatrixCell& MatrixReport::cell(Policy p, int batch, Variant v, std::uint64_t seed) const {
  for (const MatrixCell& c : cells) {
    if (c.policy == p && c.batch_size == batch && c.variant == v && c.seed == seed) return c;
  }
  throw InvalidArgument("matrix: no such cell");
}

std::optional<double> MatrixReport::mean(Policy p, int batch, Variant v,
                                         double (MetricsReport::*metric)() const) const {
  double sum = 0.0;
  int n = 0;
  for (const MatrixCell& c : cells) {
    if (c.policy == p && c.batch_size == batch && c.variant == v && c.report) {
      sum += ((*c.report).*metric)();
      ++n;
    }
  }
  if (!n) return std::nullopt;
  return sum / n;
}

MatrixReport run_matrix(std::span<const Sample> train, std::span<const Sample> test,
                        const MatrixSpec& spec, const std::function<void(const MatrixCell&)>& on_cell) {
  if (test.empty()) throw InvalidArgument("run_matrix: empty test set");
  MatrixReport report;
  report.axes = spec.axes;
  for (Policy p : spec.axes.policies)
    for (int batch : spec.axes.batch_sizes)
      for (Variant v : spec.axes.variants)
        for (std::uint64_t seed : spec.axes.seeds) {
          MatrixCell cell;
          cell.policy = p;
          cell.batch_size = batch;
          cell.variant = v;
          cell.seed = seed;
          report.cells.push_back(std::move(cell));
        }
  if (report.cells.empty()) throw InvalidArgument("run_matrix: empty axes");
  std::mutex progress;
  parallel_for(report.cells.size(), [&](std::size_t i) {
    MatrixCell& cell = report.cells[i];
    TrainConfig cfg = spec.train;
    cfg.batch_size = cell.batch_size;
    cfg.seed = cell.seed;
    cfg.augment.policy = cell.policy;
    try {
      const ModelConfig model = ModelConfig::preset(cell.variant, spec.num_classes, spec.input_side);
      FitResult fitted = fit(build_network(model, cell.seed), train, cfg);
      const auto results = localize_dataset(fitted.net, test, spec.localize);
      MetricsReport metrics = evaluate(results);
      metrics.config = {{"policy", std::string(to_string(cell.policy))},
                        {"batch_size", cell.batch_size},
                        {"variant", std::string(to_string(cell.variant))},
                        {"seed", cell.seed}};
      cell.report = std::move(metrics);
    } catch (const TrainingDiverged& e) {
      cell.diverged = true;
      cell.error = e.what();
    } catch (const Error& e) {
      cell.error = e.what();
    }
    if (on_cell) {
      std::lock_guard lock(progress);
      on_cell(cell);
    }
  });
  return report;
}

Json to_json(const MatrixReport& report) {
  Json j;
  Json axes;
  axes["policies"] = Json::array();
  for (Policy p : report.axes.policies) axes["policies"].push_back(std::string(to_string(p)));
  axes["batch_sizes"] = report.axes.batch_sizes;
  axes["variants"] = Json::array();
  for (Variant v : report.axes.variants) axes["variants"].push_back(std::string(to_string(v)));
  axes["seeds"] = report.axes.seeds;
  j["axes"] = std::move(axes);
  Json cells = Json::array();
  for (const MatrixCell& c : report.cells) {
    Json e;
    e["policy"] = std::string(to_string(c.policy));
    e["batch_size"] = c.batch_size;
    e["variant"] = std::string(to_string(c.variant));
    e["seed"] = c.seed;
    e["status"] = c.report ? "ok" : (c.diverged ? "diverged" : "failed");
    if (c.report) {
      e["gt_known_loc"] = format_pct(c.report->gt_known_loc());
      e["top1_loc"] = format_pct(c.report->top1_loc());
      e["top1_clas"] = format_pct(c.report->top1_clas());
      e["n_samples"] = c.report->n_samples();
    } else {
      e["error"] = c.error;
    }
    cells.push_back(std::move(e));
  }
  j["cells"] = std::move(cells);
  Json means = Json::array();
  for (Policy p : report.axes.policies)
    for (int b : report.axes.batch_sizes)
      for (Variant v : report.axes.variants) {
        Json e;
        e["policy"] = std::string(to_string(p));
        e["batch_size"] = b;
        e["variant"] = std::string(to_string(v));
        auto put = [&](const char* key, double (MetricsReport::*m)() const) {
          const auto value = report.mean(p, b, v, m);
          e[key] = value ? Json(format_pct(*value)) : Json(nullptr);
        };
        put("gt_known_loc", &MetricsReport::gt_known_loc);
        put("top1_loc", &MetricsReport::top1_loc);
        put("top1_clas", &MetricsReport::top1_clas);
        means.push_back(std::move(e));
      }
  j["means"] = std::move(means);
  return j;
}

std::string format_matrix(const MatrixReport& report) {
  const auto& ax = report.axes;
  std::ostringstream os;
  auto cell_text = [&](Policy p, int b, Variant v, double (MetricsReport::*m)() const) {
    const auto value = report.mean(p, b, v, m);
    return value ? format_pct(*value) : std::string("failed");
  };
  const std::size_t col = 15;
  for (int b : ax.batch_sizes) {
    os << "Augmentation comparison, batch size " << b << " (mean over " << ax.seeds.size()
       << " seed" << (ax.seeds.size() == 1 ? "" : "s") << ")\n";
    os << pad("Depth", 10) << pad("Metric", 14);
    for (Policy p : ax.policies) os << pad(std::string(display_name(p)), col);
    os << '\n';
    for (Variant v : ax.variants) {
      const std::pair<const char*, double (MetricsReport::*)() const> metrics[] = {
          {"GT-known Loc", &MetricsReport::gt_known_loc},
          {"Top-1 Loc", &MetricsReport::top1_loc},
          {"Top-1 Clas", &MetricsReport::top1_clas}};
      bool first = true;
      for (const auto& [name, m] : metrics) {
        os << pad(first ? std::string(display_name(v)) : "", 10) << pad(name, 14);
        for (Policy p : ax.policies) os << pad(cell_text(p, b, v, m), col);
        os << '\n';
        first = false;
      }
    }
    os << '\n';
  }
  os << "Top-1 Loc by batch size and depth\n";
  os << pad("Method", 15) << pad("Batch size", 12);
  for (Variant v : ax.variants) os << pad(std::string(display_name(v)), 11);
  os << '\n';
  for (Policy p : ax.policies) {
    bool first = true;
    for (int b : ax.batch_sizes) {
      os << pad(first ? std::string(display_name(p)) : "", 15) << pad(std::to_string(b), 12);
      for (Variant v : ax.variants) os << pad(cell_text(p, b, v, &MetricsReport::top1_loc), 11);
      os << '\n';
      first = false;
    }
  }
  os << "\nPer-seed Top-1 Loc\n";
  for (const MatrixCell& c : report.cells) {
    os << pad(std::string(to_string(c.policy)), 13) << pad("batch " + std::to_string(c.batch_size), 11)
       << pad(std::string(to_string(c.variant)), 7) << pad("seed " + std::to_string(c.seed), 9)
       << (c.report ? format_pct(c.report->top1_loc()) : (c.diverged ? "diverged" : "failed")) << '\n';
  }
  return os.str();
}

}  // namespace wsol

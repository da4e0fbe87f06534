// wsol: command-line front end for data generation, training, evaluation,
// localization, augmentation previews, the experiment matrix and selftest.

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "checks.hpp"
#include "wsol/checkpoint.hpp"
#include "wsol/config.hpp"
#include "wsol/rng.hpp"

namespace fs = std::filesystem;
using namespace wsol;

namespace {

constexpr int kUsage = 1;
constexpr int kRuntime = 2;

// Bad flags, unreadable or invalid configuration.
class UsageError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Common {
  std::string config;
  std::vector<std::string> sets;
  std::string out = "run";
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("--config", c.config, "JSON run configuration");
  sub->add_option("--set", c.sets, "Override as dotted.key=value (repeatable)");
  sub->add_option("--out", c.out, "Run directory for all artifacts")->capture_default_str();
}

RunConfig load_config(const Common& c) {
  Json doc = Json::object();
  if (!c.config.empty()) {
    std::ifstream in(c.config);
    if (!in) throw UsageError("cannot read config " + c.config);
    try {
      doc = Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw UsageError("config " + c.config + " is not valid JSON: " + e.what());
    }
  }
  try {
    for (const std::string& s : c.sets) apply_override(doc, s);
    RunConfig cfg = run_config_from_json(doc);
    cfg.model = cfg.model.resolved();
    cfg.model.validate();
    cfg.train.validate();
    return cfg;
  } catch (const InvalidArgument& e) {
    throw UsageError(e.what());
  }
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  out << text;
  if (!out) throw Error("write failed for " + path.string());
}

fs::path prepare_out(const Common& c) {
  const fs::path out(c.out);
  fs::create_directories(out);
  return out;
}

void write_config(const fs::path& out, const RunConfig& cfg) {
  write_text(out / "config.json", to_json(cfg).dump(2) + "\n");
}

struct Splits {
  Dataset train;
  Dataset test;
};

Splits load_splits(const RunConfig& cfg) {
  Splits s;
  if (!cfg.data.train_manifest.empty() || !cfg.data.test_manifest.empty()) {
    if (!cfg.data.train_manifest.empty()) s.train = load_dataset(cfg.data.train_manifest);
    if (!cfg.data.test_manifest.empty()) s.test = load_dataset(cfg.data.test_manifest);
  } else {
    if (cfg.data.synthetic.side != cfg.model.input_side) {
      throw UsageError("data.side (" + std::to_string(cfg.data.synthetic.side) +
                       ") differs from model.input_side (" + std::to_string(cfg.model.input_side) + ")");
    }
    if (cfg.data.synthetic.num_classes != cfg.model.num_classes) {
      throw UsageError("data.num_classes differs from model.num_classes");
    }
    SyntheticDataset d = generate_synthetic(cfg.data.synthetic);
    s.train = std::move(d.train);
    s.test = std::move(d.test);
  }
  return s;
}

Json lineage(const RunConfig& cfg, int epochs_run) {
  return {{"init_seed", cfg.init_seed},
          {"train_seed", cfg.train.seed},
          {"data_seed", cfg.data.synthetic.seed},
          {"epochs", epochs_run},
          {"policy", std::string(to_string(cfg.train.augment.policy))},
          {"batch_size", cfg.train.batch_size}};
}

int cmd_generate(const Common& c) {
  RunConfig cfg = load_config(c);
  const fs::path out = prepare_out(c);
  const SyntheticDataset d = generate_synthetic(cfg.data.synthetic);
  const fs::path train = save_dataset(d.train, out / "train");
  const fs::path test = save_dataset(d.test, out / "test");
  cfg.data.train_manifest = train.string();
  cfg.data.test_manifest = test.string();
  write_config(out, cfg);
  std::cout << "wrote " << d.train.samples.size() << " training samples to " << train.string() << "\n"
            << "wrote " << d.test.samples.size() << " test samples to " << test.string() << "\n";
  return 0;
}

int cmd_train(const Common& c) {
  RunConfig cfg = load_config(c);
  const fs::path out = prepare_out(c);
  const Splits data = load_splits(cfg);
  if (data.train.samples.empty()) throw UsageError("no training data (set data.train_manifest)");
  if (!cfg.train.augment.fill_value) cfg.train.augment.fill_value = mean_pixel(data.train.samples);
  write_config(out, cfg);

  Network net = build_network(cfg.model, cfg.init_seed);
  std::cout << "model " << to_string(cfg.model.variant) << ", " << parameter_count(net)
            << " parameters; " << data.train.samples.size() << " training samples\n";
  FitResult fitted = fit(std::move(net), data.train.samples, cfg.train, [](const EpochRecord& r) {
    std::cout << "epoch " << r.epoch << "  lr " << r.lr << "  loss " << r.mean_loss << "\n" << std::flush;
  });
  save_checkpoint(fitted.net, lineage(cfg, cfg.train.epochs), out / "model.ckpt");
  write_text(out / "train_log.jsonl", fitted.log.to_jsonl());
  std::cout << "checkpoint " << (out / "model.ckpt").string() << "\n";
  return 0;
}

Json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot read " + path);
  try {
    return Json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(path + " is not valid JSON: " + e.what());
  }
}

int cmd_evaluate(const Common& c, const std::string& checkpoint, const std::string& results_path) {
  RunConfig cfg = load_config(c);
  if (checkpoint.empty() == results_path.empty()) {
    throw UsageError("evaluate needs exactly one of --checkpoint or --results");
  }
  const fs::path out = prepare_out(c);
  std::vector<SampleResult> results;
  Json echo;
  if (!results_path.empty()) {
    const Json doc = read_json_file(results_path);
    if (!doc.is_array()) throw UsageError(results_path + " must hold an array of sample results");
    try {
      for (const Json& r : doc) results.push_back(sample_result_from_json(r));
    } catch (const InvalidArgument& e) {
      throw UsageError(e.what());
    }
    echo = {{"results", results_path}};
  } else {
    const Checkpoint ck = load_checkpoint(checkpoint);
    cfg.model = ck.net.config;
    cfg.init_seed = ck.net.init_seed;
    const Splits data = load_splits(cfg);
    if (data.test.samples.empty()) throw UsageError("no test data (set data.test_manifest)");
    results = localize_dataset(ck.net, data.test.samples, cfg.eval);
    echo = ck.lineage;
    echo["variant"] = std::string(to_string(ck.net.config.variant));
    echo["threshold_frac"] = cfg.eval.threshold_frac;
    echo["connectivity"] = cfg.eval.connectivity;
  }
  write_config(out, cfg);
  MetricsReport report = evaluate(results);
  report.config = echo;
  write_text(out / "report.json", to_json(report).dump(2) + "\n");
  Json samples = Json::array();
  for (const SampleResult& r : results) samples.push_back(to_json(r));
  write_text(out / "samples.json", samples.dump(1) + "\n");
  std::cout << format_report(report);
  return 0;
}

void draw_box(Image& img, const BBox& b, const Rgb& color) {
  auto put = [&](int x, int y) {
    if (x < 0 || y < 0 || x >= img.width || y >= img.height) return;
    for (Index ch = 0; ch < 3; ++ch) img.at(x, y, ch) = color[ch];
  };
  for (int x = b.x_min; x < b.x_max; ++x) {
    put(x, b.y_min);
    put(x, b.y_max - 1);
  }
  for (int y = b.y_min; y < b.y_max; ++y) {
    put(b.x_min, y);
    put(b.x_max - 1, y);
  }
}

BBox parse_box(const std::string& text) {
  BBox b;
  char sep[3];
  std::istringstream is(text);
  if (!(is >> b.x_min >> sep[0] >> b.y_min >> sep[1] >> b.x_max >> sep[2] >> b.y_max) ||
      sep[0] != ',' || sep[1] != ',' || sep[2] != ',' || !b.valid()) {
    throw UsageError("--gt expects x_min,y_min,x_max,y_max with a positive area, got '" + text + "'");
  }
  return b;
}

struct LocalizeArgs {
  std::string checkpoint;
  std::string image;
  int index = -1;
  int target = -1;
  std::string gt;
};

int cmd_localize(const Common& c, const LocalizeArgs& a) {
  RunConfig cfg = load_config(c);
  if (a.checkpoint.empty()) throw UsageError("localize needs --checkpoint");
  if (a.image.empty() == (a.index < 0)) throw UsageError("localize needs exactly one of --image or --index");
  const fs::path out = prepare_out(c);
  const Checkpoint ck = load_checkpoint(a.checkpoint);
  cfg.model = ck.net.config;
  cfg.init_seed = ck.net.init_seed;

  Image image;
  std::optional<BBox> gt;
  std::optional<int> target;
  if (a.target >= 0) target = a.target;
  if (!a.image.empty()) {
    image = read_ppm(a.image);
  } else {
    const Splits data = load_splits(cfg);
    if (static_cast<std::size_t>(a.index) >= data.test.samples.size()) {
      throw UsageError("--index " + std::to_string(a.index) + " beyond the test set");
    }
    const Sample& s = data.test.samples[static_cast<std::size_t>(a.index)];
    image = s.image;
    gt = s.gt_box;
  }
  if (!a.gt.empty()) gt = parse_box(a.gt);
  const Index side = ck.net.config.input_side;
  if (image.width != side || image.height != side) {
    throw UsageError("image is " + std::to_string(image.width) + "x" + std::to_string(image.height) +
                     ", the model expects " + std::to_string(side) + "x" + std::to_string(side));
  }
  if (gt && !gt->fits(side, side)) throw UsageError("ground-truth box " + gt->str() + " leaves the image");
  write_config(out, cfg);

  const Localization loc = predict_and_localize(ck.net, image, target, cfg.eval);
  const Heatmap up = normalize(bilinear_resize(loc.cam, side, side));
  write_pgm(up.values, out / "heatmap.pgm");
  Image overlay = image;
  if (gt) draw_box(overlay, *gt, Rgb{0, 0, 1});
  draw_box(overlay, loc.box, Rgb{0, 1, 0});
  write_ppm(overlay, out / "overlay.ppm");

  Json j;
  j["class"] = loc.predicted_class;
  j["cam_class"] = loc.cam_class;
  j["box"] = Json::array({loc.box.x_min, loc.box.y_min, loc.box.x_max, loc.box.y_max});
  j["iou_if_gt_given"] = gt ? Json(iou(*gt, loc.box)) : Json(nullptr);
  write_text(out / "localize.json", j.dump(2) + "\n");
  std::cout << j.dump() << "\n";
  return 0;
}

int cmd_augment_preview(const Common& c, int count) {
  RunConfig cfg = load_config(c);
  if (count < 1) throw UsageError("--count must be positive");
  const fs::path out = prepare_out(c);
  const Splits data = load_splits(cfg);
  if (data.train.samples.empty()) throw UsageError("no training data to preview");
  AugmentSpec spec = cfg.train.augment;
  if (!spec.fill_value) spec.fill_value = mean_pixel(data.train.samples);
  cfg.train.augment.fill_value = spec.fill_value;
  write_config(out, cfg);

  const std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(count), data.train.samples.size());
  const std::size_t stride = data.train.samples.size() / n;
  // Columns: original, then each policy. Rows: samples.
  const Index side = data.train.samples.front().image.width;
  const Index cols = 1 + static_cast<Index>(std::size(kAllPolicies));
  Image grid(cols * side, static_cast<Index>(n) * side, 1.0);
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t idx = r * stride;
    const Image& src = data.train.samples[idx].image;
    auto paste = [&](const Image& img, Index col) {
      for (Index y = 0; y < side; ++y)
        for (Index x = 0; x < side; ++x)
          for (Index ch = 0; ch < 3; ++ch) {
            grid.at(col * side + x, static_cast<Index>(r) * side + y, ch) = img.at(x, y, ch);
          }
    };
    paste(src, 0);
    for (std::size_t p = 0; p < std::size(kAllPolicies); ++p) {
      spec.policy = kAllPolicies[p];
      RngStream rng(cfg.train.seed, 0, idx);
      const Image aug = apply_policy(spec, src, rng);
      paste(aug, static_cast<Index>(p) + 1);
      write_ppm(aug, out / ("sample" + std::to_string(idx) + "_" + std::string(to_string(spec.policy)) + ".ppm"));
    }
    write_ppm(src, out / ("sample" + std::to_string(idx) + "_original.ppm"));
  }
  write_ppm(grid, out / "preview.ppm");
  std::cout << "columns: original";
  for (Policy p : kAllPolicies) std::cout << " | " << display_name(p);
  std::cout << "\nwrote " << (out / "preview.ppm").string() << "\n";
  return 0;
}

int cmd_matrix(const Common& c) {
  RunConfig cfg = load_config(c);
  const fs::path out = prepare_out(c);
  const Splits data = load_splits(cfg);
  if (data.train.samples.empty() || data.test.samples.empty()) throw UsageError("matrix needs train and test data");
  if (!cfg.train.augment.fill_value) cfg.train.augment.fill_value = mean_pixel(data.train.samples);
  write_config(out, cfg);
  MatrixSpec spec;
  spec.axes = cfg.matrix;
  spec.num_classes = cfg.model.num_classes;
  spec.input_side = cfg.model.input_side;
  spec.train = cfg.train;
  spec.localize = cfg.eval;
  const MatrixReport report = run_matrix(data.train.samples, data.test.samples, spec, [](const MatrixCell& cell) {
    std::cerr << "cell " << to_string(cell.policy) << " batch " << cell.batch_size << " "
              << to_string(cell.variant) << " seed " << cell.seed << ": "
              << (cell.report ? "top1_loc " + format_pct(cell.report->top1_loc()) : "FAILED " + cell.error)
              << "\n";
  });
  write_text(out / "matrix.json", to_json(report).dump(2) + "\n");
  const std::string table = format_matrix(report);
  write_text(out / "matrix.txt", table);
  std::cout << table;
  if (report.any_failed()) {
    std::cerr << "wsol: at least one matrix cell failed\n";
    return kRuntime;
  }
  return 0;
}

int cmd_selftest(const Common& c) {
  const RunConfig cfg = load_config(c);
  const fs::path out = prepare_out(c);
  write_config(out, cfg);
  bool ok = true;
  Json results = Json::array();
  for (const checks::Verdict& v : checks::invariant_suite()) {
    std::cout << (v.pass ? "PASS " : "FAIL ") << v.name << ": " << v.detail << "\n";
    results.push_back({{"name", v.name}, {"pass", v.pass}, {"detail", v.detail}});
    ok = ok && v.pass;
  }
  write_text(out / "selftest.json", results.dump(2) + "\n");
  if (!ok) std::cerr << "wsol: selftest failed\n";
  return ok ? 0 : kRuntime;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Weakly supervised object localization with CAM and crop/hide augmentations"};
  app.require_subcommand(1);
  Common common;

  auto* gen = app.add_subcommand("generate-data", "Write the synthetic train/test datasets");
  add_common(gen, common);

  auto* train = app.add_subcommand("train", "Train a network and write a checkpoint and log");
  add_common(train, common);

  std::string checkpoint, results;
  auto* eval = app.add_subcommand("evaluate", "Score a checkpoint (or precomputed results) on the test set");
  add_common(eval, common);
  eval->add_option("--checkpoint", checkpoint, "Checkpoint from train");
  eval->add_option("--results", results, "JSON array of per-sample results to score instead");

  LocalizeArgs loc;
  auto* localize_cmd = app.add_subcommand("localize", "Heatmap, overlay and box for one image");
  add_common(localize_cmd, common);
  localize_cmd->add_option("--checkpoint", loc.checkpoint, "Checkpoint from train");
  localize_cmd->add_option("--image", loc.image, "P6 PPM image");
  localize_cmd->add_option("--index", loc.index, "Test-set sample index instead of --image");
  localize_cmd->add_option("--class", loc.target, "CAM class (default: predicted)");
  localize_cmd->add_option("--gt", loc.gt, "Ground-truth box x_min,y_min,x_max,y_max");

  int count = 4;
  auto* preview = app.add_subcommand("augment-preview", "Before/after images for every policy");
  add_common(preview, common);
  preview->add_option("--count", count, "Number of samples")->capture_default_str();

  auto* matrix = app.add_subcommand("matrix", "Policy x batch x depth x seed experiment matrix");
  add_common(matrix, common);

  auto* selftest = app.add_subcommand("selftest", "Run the invariant and oracle suite");
  add_common(selftest, common);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kUsage;
  }

  try {
    if (gen->parsed()) return cmd_generate(common);
    if (train->parsed()) return cmd_train(common);
    if (eval->parsed()) return cmd_evaluate(common, checkpoint, results);
    if (localize_cmd->parsed()) return cmd_localize(common, loc);
    if (preview->parsed()) return cmd_augment_preview(common, count);
    if (matrix->parsed()) return cmd_matrix(common);
    if (selftest->parsed()) return cmd_selftest(common);
  } catch (const UsageError& e) {
    std::cerr << "wsol: " << e.what() << "\n";
    return kUsage;
  } catch (const std::exception& e) {
    std::cerr << "wsol: " << e.what() << "\n";
    return kRuntime;
  }
  return kUsage;
}

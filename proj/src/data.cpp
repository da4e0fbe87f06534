#include "wsol/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "wsol/error.hpp"
#include "wsol/rng.hpp"

namespace wsol {
namespace fs = std::filesystem;

namespace {

constexpr const char* kShapeNames[] = {"disk", "square", "triangle", "cross", "diamond", "ring"};
constexpr int kNumShapes = 6;

int shape_of(int label) { return label % kNumShapes; }

// Evenly spaced hues, so every class is a distinct (shape, hue) pair.
double hue_of(int label, int num_classes) {
  return static_cast<double>(label) / static_cast<double>(num_classes);
}

Rgb hsv(double h, double s, double v) {
  h = std::fmod(h, 1.0) * 6.0;
  const int i = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = v * (1 - s), q = v * (1 - s * f), t = v * (1 - s * (1 - f));
  switch (i) {
    case 0: return {v, t, p};
    case 1: return {q, v, p};
    case 2: return {p, v, t};
    case 3: return {p, q, v};
    case 4: return {t, p, v};
    default: return {v, p, q};
  }
}

bool inside_shape(int shape, double u, double v) {
  // (u, v) in [-1, 1]^2 relative to the object's square frame.
  switch (shape) {
    case 0: return u * u + v * v <= 1.0;
    case 1: return std::abs(u) <= 0.9 && std::abs(v) <= 0.9;
    case 2: return v >= -1.0 && v <= 1.0 && std::abs(u) <= (v + 1.0) / 2.0;
    case 3: return std::abs(u) <= 0.34 || std::abs(v) <= 0.34;
    case 4: return std::abs(u) + std::abs(v) <= 1.0;
    case 5: {
      const double r2 = u * u + v * v;
      return r2 <= 1.0 && r2 >= 0.36;
    }
  }
  return false;
}

double quantize(double v) { return std::round(std::clamp(v, 0.0, 1.0) * 255.0) / 255.0; }

struct Rendered {
  Sample sample;
  Mask mask;
};

Rendered render(int label, int num_classes, int side, RngStream& rng) {
  Rendered out;
  Image img(side, side);
  // Background: dull base colour with per-pixel noise.
  const Rgb base = hsv(rng.uniform(), rng.uniform(0.0, 0.3), rng.uniform(0.3, 0.7));
  for (Index y = 0; y < side; ++y)
    for (Index x = 0; x < side; ++x)
      for (Index c = 0; c < 3; ++c) img.at(x, y, c) = base[c] + rng.uniform(-0.08, 0.08);

  // Striped distractor patch. One stripe colour is a class colour, so colour
  // alone does not identify the class and the stripes carry no label signal.
  const int dsize = std::max(2, static_cast<int>(std::lround(rng.uniform(0.15, 0.3) * side)));
  const int dx = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - dsize + 1)));
  const int dy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - dsize + 1)));
  const int stripe_class = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(num_classes)));
  const Rgb c1 = hsv(hue_of(stripe_class, num_classes), 0.85, 0.9);
  const Rgb c2 = hsv(rng.uniform(), rng.uniform(0.3, 0.8), rng.uniform(0.2, 0.6));
  const bool vertical = rng.bernoulli(0.5);
  const int period = 2 + static_cast<int>(rng.uniform_index(2));
  for (int y = dy; y < dy + dsize; ++y)
    for (int x = dx; x < dx + dsize; ++x) {
      const int k = vertical ? (x - dx) : (y - dy);
      const Rgb& col = (k / period) % 2 == 0 ? c1 : c2;
      for (Index c = 0; c < 3; ++c) img.at(x, y, c) = col[c];
    }

  // Object.
  const int size = std::max(3, static_cast<int>(std::lround(rng.uniform(0.2, 0.6) * side)));
  const int ox = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - size + 1)));
  const int oy = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(side - size + 1)));
  const Rgb color = hsv(hue_of(label, num_classes), 0.85, 0.9);
  const int shape = shape_of(label);
  out.mask = Mask::Zero(side, side);
  for (int y = oy; y < oy + size; ++y) {
    for (int x = ox; x < ox + size; ++x) {
      const double u = (x + 0.5 - ox) / size * 2.0 - 1.0;
      const double v = (y + 0.5 - oy) / size * 2.0 - 1.0;
      if (!inside_shape(shape, u, v)) continue;
      out.mask(y, x) = 1;
      const double shade = rng.uniform(0.85, 1.0);
      for (Index c = 0; c < 3; ++c) img.at(x, y, c) = color[c] * shade;
    }
  }
  // Degenerate tiny shapes can miss every pixel centre; mark the centre pixel.
  if (!(out.mask != 0).any()) {
    const int cx = ox + size / 2, cy = oy + size / 2;
    out.mask(cy, cx) = 1;
    for (Index c = 0; c < 3; ++c) img.at(cx, cy, c) = color[c];
  }
  img.pixels = img.pixels.unaryExpr(&quantize);
  out.sample = Sample{std::move(img), label, mask_bbox(out.mask)};
  return out;
}

void generate_split(const SyntheticSpec& spec, int per_class, StreamDomain domain, Dataset& data,
                    std::vector<Mask>& masks) {
  for (int label = 0; label < spec.num_classes; ++label) {
    for (int i = 0; i < per_class; ++i) {
      const auto index = static_cast<std::uint64_t>(label * per_class + i);
      RngStream rng(spec.seed, 0, index, domain);
      Rendered r = render(label, spec.num_classes, spec.side, rng);
      data.samples.push_back(std::move(r.sample));
      masks.push_back(std::move(r.mask));
    }
  }
}

[[noreturn]] void load_fail(std::size_t line, const fs::path& file, const std::string& what) {
  throw LoadError(line, file.string() + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream is(line);
  while (std::getline(is, field, ',')) out.push_back(field);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

bool parse_int(const std::string& s, int& out) {
  const char* first = s.data();
  const char* last = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(first, last, out);
  return ec == std::errc() && ptr == last && !s.empty();
}

std::string strip_cr(std::string s) {
  if (!s.empty() && s.back() == '\r') s.pop_back();
  return s;
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CodecError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

void SyntheticSpec::validate() const {
  if (num_classes < 2) throw InvalidArgument("synthetic: num_classes must be >= 2");
  if (side < 16) throw InvalidArgument("synthetic: side must be >= 16");
  if (per_class_train < 0 || per_class_test < 0) {
    throw InvalidArgument("synthetic: per-class counts must be non-negative");
  }
}

SyntheticDataset generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();
  SyntheticDataset out;
  for (int c = 0; c < spec.num_classes; ++c) {
    out.train.class_names.push_back(synthetic_class_name(c, spec.num_classes));
  }
  out.test.class_names = out.train.class_names;
  generate_split(spec, spec.per_class_train, StreamDomain::data_train, out.train, out.train_masks);
  generate_split(spec, spec.per_class_test, StreamDomain::data_test, out.test, out.test_masks);
  return out;
}

std::string synthetic_class_name(int label, int num_classes) {
  std::ostringstream os;
  os << kShapeNames[shape_of(label)] << "_h"
     << static_cast<int>(std::lround(hue_of(label, num_classes) * 360.0)) % 360;
  return os.str();
}

BBox mask_bbox(const Mask& mask) {
  int x0 = static_cast<int>(mask.cols()), y0 = static_cast<int>(mask.rows()), x1 = -1, y1 = -1;
  for (Index y = 0; y < mask.rows(); ++y)
    for (Index x = 0; x < mask.cols(); ++x)
      if (mask(y, x)) {
        x0 = std::min(x0, static_cast<int>(x));
        y0 = std::min(y0, static_cast<int>(y));
        x1 = std::max(x1, static_cast<int>(x));
        y1 = std::max(y1, static_cast<int>(y));
      }
  if (x1 < 0) throw InvalidArgument("mask_bbox: empty mask");
  return {x0, y0, x1 + 1, y1 + 1};
}

Rgb mean_pixel(std::span<const Sample> samples) {
  Rgb sum{0, 0, 0};
  double count = 0;
  for (const Sample& s : samples) {
    const Index n = s.image.width * s.image.height;
    for (Index c = 0; c < 3; ++c) {
      sum[c] += Eigen::Map<const Eigen::ArrayXd, 0, Eigen::InnerStride<3>>(s.image.pixels.data() + c, n).sum();
    }
    count += static_cast<double>(n);
  }
  if (count == 0) throw InvalidArgument("mean_pixel: no samples");
  for (double& v : sum) v /= count;
  return sum;
}

fs::path save_dataset(const Dataset& data, const fs::path& root) {
  fs::create_directories(root / "images");
  const fs::path manifest = root / "manifest.csv";
  std::ofstream out(manifest, std::ios::binary);
  if (!out) throw Error("cannot write " + manifest.string());
  out << "filename,label,x_min,y_min,x_max,y_max\n";
  for (std::size_t i = 0; i < data.samples.size(); ++i) {
    const Sample& s = data.samples[i];
    std::ostringstream name;
    name << "images/" << std::setw(5) << std::setfill('0') << i << ".ppm";
    write_ppm(s.image, root / name.str());
    out << name.str() << ',' << s.label << ',' << s.gt_box.x_min << ',' << s.gt_box.y_min << ','
        << s.gt_box.x_max << ',' << s.gt_box.y_max << '\n';
  }
  std::ofstream classes(root / "classes.txt", std::ios::binary);
  for (const auto& name : data.class_names) classes << name << '\n';
  return manifest;
}

Dataset load_dataset(const fs::path& manifest_path) {
  std::ifstream in(manifest_path, std::ios::binary);
  if (!in) throw LoadError(0, "cannot open manifest " + manifest_path.string());
  const fs::path dir = manifest_path.parent_path();
  Dataset data;
  const fs::path classes_path = dir / "classes.txt";
  if (fs::exists(classes_path)) {
    std::ifstream cls(classes_path, std::ios::binary);
    std::string name;
    while (std::getline(cls, name)) {
      name = strip_cr(name);
      if (!name.empty()) data.class_names.push_back(name);
    }
  }
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) load_fail(1, manifest_path, "empty manifest");
  ++line_no;
  if (strip_cr(line) != "filename,label,x_min,y_min,x_max,y_max") {
    load_fail(line_no, manifest_path, "expected header filename,label,x_min,y_min,x_max,y_max");
  }
  std::set<std::string> seen;
  while (std::getline(in, line)) {
    ++line_no;
    line = strip_cr(line);
    if (line.empty()) continue;
    const auto fields = split_csv(line);
    if (fields.size() != 6) {
      load_fail(line_no, manifest_path,
                "expected 6 fields, got " + std::to_string(fields.size()));
    }
    int values[5];
    for (int k = 0; k < 5; ++k) {
      if (!parse_int(fields[static_cast<std::size_t>(k + 1)], values[k])) {
        load_fail(line_no, manifest_path,
                  "field " + std::to_string(k + 2) + " is not an integer: '" +
                      fields[static_cast<std::size_t>(k + 1)] + "'");
      }
    }
    if (!seen.insert(fields[0]).second) {
      load_fail(line_no, manifest_path, "duplicate filename " + fields[0]);
    }
    Sample s;
    s.label = values[0];
    s.gt_box = {values[1], values[2], values[3], values[4]};
    if (s.label < 0 || (!data.class_names.empty() &&
                        s.label >= static_cast<int>(data.class_names.size()))) {
      load_fail(line_no, manifest_path, "label " + std::to_string(s.label) + " out of range");
    }
    if (!s.gt_box.valid()) load_fail(line_no, manifest_path, "invalid box " + s.gt_box.str());
    const fs::path image_path = dir / fields[0];
    if (!fs::exists(image_path)) {
      load_fail(line_no, manifest_path, "missing image " + image_path.string());
    }
    try {
      s.image = read_ppm(image_path);
    } catch (const CodecError& e) {
      load_fail(line_no, manifest_path, e.what());
    }
    if (!s.gt_box.fits(s.image.width, s.image.height)) {
      load_fail(line_no, manifest_path, "box " + s.gt_box.str() + " outside the image");
    }
    data.samples.push_back(std::move(s));
  }
  return data;
}

Image decode_ppm(const std::string& bytes) {
  std::size_t pos = 0;
  auto skip_space = [&] {
    while (pos < bytes.size()) {
      if (bytes[pos] == '#') {
        while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      } else if (std::isspace(static_cast<unsigned char>(bytes[pos]))) {
        ++pos;
      } else {
        break;
      }
    }
  };
  auto read_number = [&](const char* what) {
    skip_space();
    long v = 0;
    std::size_t start = pos;
    while (pos < bytes.size() && std::isdigit(static_cast<unsigned char>(bytes[pos]))) {
      v = v * 10 + (bytes[pos] - '0');
      if (v > 1 << 20) throw CodecError(std::string("ppm: ") + what + " too large");
      ++pos;
    }
    if (pos == start) throw CodecError(std::string("ppm: missing ") + what);
    return v;
  };
  if (bytes.size() < 2 || bytes[0] != 'P' || bytes[1] != '6') {
    throw CodecError("ppm: unsupported magic '" + bytes.substr(0, 2) + "', expected P6");
  }
  pos = 2;
  const long w = read_number("width");
  const long h = read_number("height");
  const long maxval = read_number("maxval");
  if (w < 1 || h < 1) throw CodecError("ppm: non-positive dimensions");
  if (maxval != 255) throw CodecError("ppm: maxval " + std::to_string(maxval) + " unsupported");
  if (pos >= bytes.size() || !std::isspace(static_cast<unsigned char>(bytes[pos]))) {
    throw CodecError("ppm: missing separator before payload");
  }
  ++pos;
  const std::size_t need = static_cast<std::size_t>(w * h * 3);
  if (bytes.size() - pos < need) throw CodecError("ppm: truncated payload");
  Image img(w, h);
  for (std::size_t i = 0; i < need; ++i) {
    img.pixels[static_cast<Index>(i)] = static_cast<unsigned char>(bytes[pos + i]) / 255.0;
  }
  return img;
}

Image read_ppm(const fs::path& path) { return decode_ppm(read_file(path)); }

std::string encode_ppm(const Image& img) {
  std::string out = "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n";
  out.reserve(out.size() + static_cast<std::size_t>(img.pixels.size()));
  for (Index i = 0; i < img.pixels.size(); ++i) {
    const double v = std::floor(img.pixels[i] * 255.0 + 0.5);
    out.push_back(static_cast<char>(static_cast<unsigned char>(std::clamp(v, 0.0, 255.0))));
  }
  return out;
}

void write_ppm(const Image& img, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CodecError("cannot write " + path.string());
  out << encode_ppm(img);
}

void write_pgm(const Plane& plane, const fs::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CodecError("cannot write " + path.string());
  out << "P5\n" << plane.cols() << ' ' << plane.rows() << "\n255\n";
  for (Index y = 0; y < plane.rows(); ++y)
    for (Index x = 0; x < plane.cols(); ++x) {
      const double v = std::clamp(std::floor(plane(y, x) * 255.0 + 0.5), 0.0, 255.0);
      out.put(static_cast<char>(static_cast<unsigned char>(v)));
    }
}

}  // namespace wsol

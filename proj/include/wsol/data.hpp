#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "wsol/image.hpp"

namespace wsol {

struct Sample {
  Image image;
  int label = 0;
  BBox gt_box;

  friend bool operator==(const Sample&, const Sample&) = default;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;
};

struct SyntheticSpec {
  int num_classes = 4;
  int per_class_train = 100;
  int per_class_test = 25;
  int side = 32;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SyntheticDataset {
  Dataset train;
  Dataset test;
  std::vector<Mask> train_masks;
  std::vector<Mask> test_masks;
};

/// Renders one (shape, hue) object per image over a noisy background with a
/// striped distractor patch. Samples are ordered class-major; each sample
/// draws from its own substream, and the two splits use different stream
/// domains. Pixels are multiples of 1/255 so PPM round trips are exact.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Shape name and hue (degrees) of a synthetic class.
std::string synthetic_class_name(int label, int num_classes);

/// Tight half-open box around the nonzero mask pixels. The mask must be non-empty.
BBox mask_bbox(const Mask& mask);

/// Per-channel mean pixel over all samples.
Rgb mean_pixel(std::span<const Sample> samples);

/// Writes images/NNNNN.ppm, manifest.csv and classes.txt under root and
/// returns the manifest path.
std::filesystem::path save_dataset(const Dataset& data, const std::filesystem::path& root);

/// Reads a manifest CSV (header filename,label,x_min,y_min,x_max,y_max) with
/// image paths relative to the manifest's directory. classes.txt next to the
/// manifest, when present, bounds the labels. Throws LoadError naming the
/// offending line; never returns a partial dataset.
Dataset load_dataset(const std::filesystem::path& manifest_path);

/// Binary P6, maxval 255. Bytes map to b/255.
Image read_ppm(const std::filesystem::path& path);
Image decode_ppm(const std::string& bytes);
/// Bytes are round(v*255) with halves rounded up, clamped to [0,255].
void write_ppm(const Image& img, const std::filesystem::path& path);
std::string encode_ppm(const Image& img);
/// Binary P5 grayscale of a plane with values in [0,1].
void write_pgm(const Plane& plane, const std::filesystem::path& path);

}  // namespace wsol

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "wsol/data.hpp"

using namespace wsol;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() /
            ("wsol_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }

 private:
  fs::path path_;
};

void write_file(const fs::path& p, const std::string& text) {
  std::ofstream(p, std::ios::binary) << text;
}

SyntheticSpec small_spec() {
  SyntheticSpec s;
  s.per_class_train = 10;
  s.per_class_test = 3;
  s.side = 24;
  return s;
}

}  // namespace

TEST(Synthetic, DeterministicAndBalanced) {
  const SyntheticDataset a = generate_synthetic(small_spec());
  const SyntheticDataset b = generate_synthetic(small_spec());
  EXPECT_EQ(a.train.samples, b.train.samples);
  EXPECT_EQ(a.test.samples, b.test.samples);
  ASSERT_EQ(a.train.samples.size(), 40u);
  int counts[4] = {};
  for (const Sample& s : a.train.samples) ++counts[s.label];
  for (int c : counts) EXPECT_EQ(c, 10);
}

TEST(Synthetic, BoxesAreTightAroundMasks) {
  const SyntheticDataset d = generate_synthetic(small_spec());
  for (std::size_t i = 0; i < d.train.samples.size(); ++i) {
    const Sample& s = d.train.samples[i];
    const Mask& m = d.train_masks[i];
    ASSERT_TRUE(s.gt_box.fits(24, 24));
    // Independent scan: every edge row/column of the box holds a mask pixel
    // and nothing lies outside.
    long inside = 0;
    bool top = false, bottom = false, left = false, right = false;
    for (Index y = 0; y < m.rows(); ++y)
      for (Index x = 0; x < m.cols(); ++x) {
        if (!m(y, x)) continue;
        ASSERT_TRUE(x >= s.gt_box.x_min && x < s.gt_box.x_max && y >= s.gt_box.y_min && y < s.gt_box.y_max);
        ++inside;
        top |= y == s.gt_box.y_min;
        bottom |= y == s.gt_box.y_max - 1;
        left |= x == s.gt_box.x_min;
        right |= x == s.gt_box.x_max - 1;
      }
    EXPECT_GT(inside, 0);
    EXPECT_TRUE(top && bottom && left && right) << i;
    EXPECT_EQ(mask_bbox(m), s.gt_box);
  }
}

TEST(Synthetic, SplitsDiffer) {
  SyntheticSpec s = small_spec();
  s.per_class_test = 10;
  const SyntheticDataset d = generate_synthetic(s);
  for (std::size_t i = 0; i < d.train.samples.size(); ++i) EXPECT_NE(d.train.samples[i], d.test.samples[i]);
}

TEST(Synthetic, InvalidSpecThrows) {
  SyntheticSpec s = small_spec();
  s.side = 8;
  EXPECT_THROW(generate_synthetic(s), InvalidArgument);
  s = small_spec();
  s.num_classes = 1;
  EXPECT_THROW(generate_synthetic(s), InvalidArgument);
}

TEST(Manifest, SaveLoadRoundTrip) {
  TempDir dir;
  const SyntheticDataset d = generate_synthetic(small_spec());
  const fs::path manifest = save_dataset(d.train, dir.path() / "train");
  const Dataset back = load_dataset(manifest);
  EXPECT_EQ(back.samples, d.train.samples);
  EXPECT_EQ(back.class_names, d.train.class_names);
}

TEST(Manifest, HandWrittenTwoRecords) {
  TempDir dir;
  fs::create_directories(dir.path() / "img");
  write_ppm(Image(4, 4, Rgb{1, 0, 0}), dir.path() / "img" / "a.ppm");
  write_ppm(Image(4, 4, Rgb{0, 0, 1}), dir.path() / "img" / "b.ppm");
  write_file(dir.path() / "m.csv",
             "filename,label,x_min,y_min,x_max,y_max\nimg/b.ppm,1,0,0,2,3\nimg/a.ppm,0,1,1,4,4\n");
  const Dataset d = load_dataset(dir.path() / "m.csv");
  ASSERT_EQ(d.samples.size(), 2u);
  EXPECT_EQ(d.samples[0].label, 1);
  EXPECT_EQ(d.samples[0].gt_box, (BBox{0, 0, 2, 3}));
  EXPECT_EQ(d.samples[0].image.at(0, 0, 2), 1.0);
  EXPECT_EQ(d.samples[1].label, 0);
  EXPECT_EQ(d.samples[1].gt_box, (BBox{1, 1, 4, 4}));
}

TEST(Manifest, ErrorsNameTheLine) {
  TempDir dir;
  write_ppm(Image(4, 4), dir.path() / "a.ppm");
  const std::string header = "filename,label,x_min,y_min,x_max,y_max\n";
  const std::string good = "a.ppm,0,0,0,2,2\n";
  struct Case {
    std::string body;
    std::size_t line;
  };
  const Case cases[] = {
      {good + "a.ppm,0,3,0,3,2\n", 3},      // x_max <= x_min
      {good + "b.ppm,0,0,0,2\n", 3},         // field count
      {"a.ppm,0,0,x,2,2\n", 2},              // non-integer
      {"missing.ppm,0,0,0,2,2\n", 2},        // no such file
      {"a.ppm,0,0,0,5,2\n", 2},              // box leaves the image
      {good + good, 3},                      // duplicate filename
  };
  for (const Case& c : cases) {
    write_file(dir.path() / "m.csv", header + c.body);
    try {
      load_dataset(dir.path() / "m.csv");
      ADD_FAILURE() << "accepted: " << c.body;
    } catch (const LoadError& e) {
      EXPECT_EQ(e.line(), c.line) << c.body << " -> " << e.what();
    }
  }
  EXPECT_THROW(load_dataset(dir.path() / "nope.csv"), LoadError);
}

TEST(Ppm, HandEncodedBytes) {
  const std::string bytes = std::string("P6\n2 1\n255\n") + std::string("\xff\x00\x00\x00\x00\xff", 6);
  const Image img = decode_ppm(bytes);
  ASSERT_EQ(img.width, 2);
  ASSERT_EQ(img.height, 1);
  Image want(2, 1);
  want.at(0, 0, 0) = 1.0;
  want.at(1, 0, 2) = 1.0;
  EXPECT_EQ(img, want);
  EXPECT_EQ(encode_ppm(img), bytes);
}

TEST(Ppm, RoundTripWithinQuantization) {
  Image img(5, 3);
  for (Index i = 0; i < img.pixels.size(); ++i) img.pixels[i] = static_cast<double>(i * 37 % 101) / 100.0;
  const Image back = decode_ppm(encode_ppm(img));
  EXPECT_LE((back.pixels - img.pixels).abs().maxCoeff(), 1.0 / 510.0 + 1e-15);
}

TEST(Ppm, RoundsHalfUp) {
  Image img(1, 1, 0.5 / 255.0);
  EXPECT_EQ(static_cast<unsigned char>(encode_ppm(img).back()), 1);
}

TEST(Ppm, CodecErrors) {
  EXPECT_THROW(decode_ppm("P5\n1 1\n255\n\x00"), CodecError);
  EXPECT_THROW(decode_ppm("P6\n2 2\n255\n\x00\x00\x00"), CodecError);
  EXPECT_THROW(decode_ppm(std::string("P6\n1 1\n65535\n") + std::string(6, '\0')), CodecError);
}

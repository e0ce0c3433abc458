#include <gtest/gtest.h>

#include <algorithm>
#include <set>
#include <string>
#include <vector>

#include "coftad/data.hpp"
#include "test_support.hpp"

using namespace coftad;
using coftad::testing::random_image;
using coftad::testing::read_file;
using coftad::testing::TempDir;
using coftad::testing::write_file;

namespace {

void write_images(const std::filesystem::path& dir, const std::string& prefix, int n, Rng& rng) {
  for (int i = 0; i < n; ++i) write_png(dir / (prefix + std::to_string(i) + ".png"), random_image(3, 8, rng));
}

DatasetManifest fake_manifest(int normals, int abnormals) {
  DatasetManifest m;
  m.root = "/nowhere";
  for (int i = 0; i < normals; ++i) m.entries.push_back({"normal/n" + std::to_string(i) + ".png", false, "normal", 8, 8});
  for (int i = 0; i < abnormals; ++i) m.entries.push_back({"abnormal/a" + std::to_string(i) + ".png", true, "abnormal", 8, 8});
  return m;
}

}  // namespace

TEST(ImageFolder, LabelsAndOrder) {
  TempDir dir;
  Rng rng(1);
  write_images(dir / "normal", "img", 3, rng);
  write_images(dir / "abnormal", "img", 2, rng);
  write_file(dir / "normal" / "notes.txt", "ignored");
  const auto m = load_image_folder(dir.path());
  ASSERT_EQ(m.entries.size(), 5u);
  EXPECT_EQ(m.count(false), 3u);
  EXPECT_EQ(m.count(true), 2u);
  EXPECT_EQ(m.entries[0].id, "normal/img0.png");
  // The same file name in both folders stays distinct.
  EXPECT_EQ(m.entries[3].id, "abnormal/img0.png");
  std::set<std::string> ids;
  for (const auto& e : m.entries) ids.insert(e.id);
  EXPECT_EQ(ids.size(), 5u);
  EXPECT_EQ(load_image(m, "abnormal/img1.png", 4).width, 4);
}

TEST(ImageFolder, EmptyAbnormalAndErrors) {
  TempDir dir;
  Rng rng(2);
  write_images(dir / "normal", "n", 2, rng);
  std::filesystem::create_directories(dir / "abnormal");
  write_file(dir / "normal" / "broken.png", "not a png");
  const auto m = load_image_folder(dir.path());
  EXPECT_EQ(m.count(true), 0u);
  EXPECT_EQ(m.count(false), 2u);
  EXPECT_EQ(m.errors.size(), 1u);
  TempDir empty;
  EXPECT_THROW(load_image_folder(empty.path()), DataError);
}

TEST(Split, FlowersProtocolSizes) {
  const auto m = fake_manifest(80, 10);
  const auto s = sample_few_shot(m, 5, 3, Reserve{70, 10});
  EXPECT_EQ(s.train_ids.size(), 5u);
  EXPECT_EQ(s.test_normal_ids.size(), 70u);
  EXPECT_EQ(s.test_abnormal_ids.size(), 10u);
  std::set<std::string> all(s.train_ids.begin(), s.train_ids.end());
  all.insert(s.test_normal_ids.begin(), s.test_normal_ids.end());
  EXPECT_EQ(all.size(), 75u);
  EXPECT_EQ(s, sample_few_shot(m, 5, 3, Reserve{70, 10}));
  EXPECT_NE(s.train_ids, sample_few_shot(m, 5, 4, Reserve{70, 10}).train_ids);
}

TEST(Split, AllNormalsForTraining) {
  const auto m = fake_manifest(6, 3);
  const auto s = sample_few_shot(m, 6, 1, Reserve{0, 3});
  EXPECT_EQ(std::set<std::string>(s.train_ids.begin(), s.train_ids.end()).size(), 6u);
  EXPECT_TRUE(s.test_normal_ids.empty());
}

TEST(Split, ShortfallIsReported) {
  const auto m = fake_manifest(10, 2);
  try {
    sample_few_shot(m, 5, 1, Reserve{8, 2});
    FAIL();
  } catch (const DataError& e) {
    EXPECT_NE(std::string(e.what()).find("short by 3"), std::string::npos) << e.what();
  }
  EXPECT_THROW(sample_few_shot(m, 5, 1, Reserve{5, 3}), DataError);
}

TEST(Split, JsonRoundTrip) {
  TempDir dir;
  const auto s = sample_few_shot(fake_manifest(20, 4), 5, 9);
  save_split(dir / "split.json", s);
  EXPECT_EQ(load_split(dir / "split.json"), s);
  EXPECT_THROW(load_split(dir / "missing.json"), DataError);
}

TEST(Split, SubsampleAnomalies) {
  const auto s = sample_few_shot(fake_manifest(505, 110), 5, 2, Reserve{500, 110});
  const auto sub = subsample_anomalies(s, 5, 7);
  EXPECT_EQ(sub.test_normal_ids, s.test_normal_ids);
  EXPECT_EQ(sub.test_abnormal_ids.size(), 5u);
  for (const auto& id : sub.test_abnormal_ids) {
    EXPECT_NE(std::find(s.test_abnormal_ids.begin(), s.test_abnormal_ids.end(), id), s.test_abnormal_ids.end());
  }
  EXPECT_EQ(subsample_anomalies(s, 110, 7), s);
  EXPECT_THROW(subsample_anomalies(s, 111, 7), DataError);
}

TEST(Corruption, CountsAndLayout) {
  TempDir dir;
  Rng rng(3);
  write_images(dir / "clean" / "normal", "c", 10, rng);
  const auto clean = load_image_folder(dir / "clean");
  const auto out = build_corruption_protocol(clean, CorruptionSpec{}, dir / "out");
  EXPECT_EQ(out.count(false), 10u);
  EXPECT_EQ(out.count(true), 90u);
  const auto reread = load_image_folder(dir / "out");
  EXPECT_EQ(reread.count(true), 90u);
  EXPECT_TRUE(std::filesystem::exists(dir / "out" / "abnormal" / "fog__c3.png"));
}

TEST(Corruption, Rejections) {
  TempDir dir;
  Rng rng(4);
  write_images(dir / "clean" / "normal", "c", 2, rng);
  const auto clean = load_image_folder(dir / "clean");
  CorruptionSpec empty;
  empty.types.clear();
  EXPECT_THROW(build_corruption_protocol(clean, empty, dir / "o1"), ConfigError);
  CorruptionSpec unknown;
  unknown.types = {"fog", "sparkles"};
  EXPECT_THROW(build_corruption_protocol(clean, unknown, dir / "o2"), ConfigError);
  CorruptionSpec severe;
  severe.severity = 6;
  EXPECT_THROW(build_corruption_protocol(clean, severe, dir / "o3"), ConfigError);
}

TEST(Corruption, IdentityFunctionCopiesBitwise) {
  TempDir dir;
  Rng rng(5);
  write_images(dir / "clean" / "normal", "c", 3, rng);
  const auto clean = load_image_folder(dir / "clean");
  CorruptionSpec spec;
  spec.types = {"fog", "contrast"};
  const auto out = build_corruption_protocol(
      clean, spec, dir / "out", [](const Image& img, const std::string&, int, Rng&) { return img; });
  for (const auto& e : out.entries) {
    if (!e.abnormal) continue;
    const std::string name = e.id.substr(e.id.find("__") + 2);
    EXPECT_EQ(read_file(out.path_of(e.id)), read_file(dir / "clean" / "normal" / name)) << e.id;
  }
}

TEST(Corruption, EveryKernelChangesTheImage) {
  Rng rng(6);
  const Image img = coftad::testing::smooth_image(24, rng);
  for (const auto& [name, fn] : corruptions::registry()) {
    Rng r(7);
    const Image out = default_corruption(img, name, 4, r);
    EXPECT_TRUE(out.same_shape(img)) << name;
    EXPECT_NE(out, img) << name;
  }
  EXPECT_THROW(default_corruption(img, "nope", 1, rng), ConfigError);
}

TEST(Crops, WideImage) {
  Rng rng(8);
  Image img(1, 256, 4096);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = static_cast<float>(i % 4096) / 4096.0f;
  const auto patches = crop_patches(img, 256, 5, rng);
  ASSERT_EQ(patches.size(), 5u);
  for (const auto& p : patches) {
    EXPECT_EQ(p.height, 256);
    EXPECT_EQ(p.width, 256);
    const float x0 = p.at(0, 0, 0) * 4096.0f;
    EXPECT_NEAR(p.at(0, 100, 255) * 4096.0f, x0 + 255, 1e-2);
  }
  Rng a(9), b(9);
  EXPECT_EQ(crop_patches(img, 256, 3, a), crop_patches(img, 256, 3, b));
  EXPECT_THROW(crop_patches(Image(1, 100, 400), 256, 1, rng), DataError);
}

TEST(Crops, ExactSize) {
  Rng rng(10);
  const Image img = random_image(3, 32, rng);
  for (const auto& p : crop_patches(img, 32, 4, rng)) EXPECT_EQ(p, img);
}

TEST(Synth, NormalOnlyAndRerun) {
  TempDir a, b;
  SynthSpec spec;
  spec.n_normal = 4;
  spec.n_abnormal = 0;
  spec.image_size = 16;
  const auto m = synth_dataset(spec, a.path(), 11);
  EXPECT_EQ(m.count(true), 0u);
  EXPECT_EQ(m.count(false), 4u);
  spec.n_abnormal = 3;
  const auto m1 = synth_dataset(spec, b.path(), 11);
  EXPECT_EQ(read_file(a / "normal/normal_0002.png"), read_file(b / "normal/normal_0002.png"));
  TempDir c;
  synth_dataset(spec, c.path(), 11);
  for (const auto& e : m1.entries) EXPECT_EQ(read_file(b / e.id), read_file(c / e.id)) << e.id;
  EXPECT_EQ(load_image_folder(b.path()).entries.size(), 7u);
  spec.shape = "hexagon";
  EXPECT_THROW(synth_dataset(spec, c.path(), 1), ConfigError);
}

TEST(Synth, PasteDefectIsOneRectangle) {
  for (const char* shape : {"circle", "square", "triangle"}) {
    SynthSpec spec;
    spec.shape = shape;
    Rng rng(12);
    for (int t = 0; t < 30; ++t) {
      const auto pair = render_synth_pair(spec, rng);
      const int s = spec.image_size;
      int x0 = s, y0 = s, x1 = -1, y1 = -1;
      double diff = 0.0;
      for (int y = 0; y < s; ++y) {
        for (int x = 0; x < s; ++x) {
          bool differs = false;
          for (int c = 0; c < 3; ++c) {
            differs |= pair.normal.at(c, y, x) != pair.abnormal.at(c, y, x);
            diff += std::abs(pair.normal.at(c, y, x) - pair.abnormal.at(c, y, x));
          }
          if (!differs) continue;
          ASSERT_TRUE(pair.defect.contains(x, y)) << shape << " pixel " << x << "," << y;
          x0 = std::min(x0, x), y0 = std::min(y0, y), x1 = std::max(x1, x), y1 = std::max(y1, y);
        }
      }
      ASSERT_GE(x1, 0) << "no difference";
      EXPECT_GT(diff, 0.0);
      EXPECT_GE(pair.defect.width, s * 3 / 20);
    }
  }
}

TEST(Synth, ScarAndBlurStayInsideTheirBox) {
  for (const char* defect : {"scar", "blur"}) {
    SynthSpec spec;
    spec.defect = defect;
    Rng rng(13);
    for (int t = 0; t < 10; ++t) {
      const auto pair = render_synth_pair(spec, rng);
      for (int y = 0; y < spec.image_size; ++y) {
        for (int x = 0; x < spec.image_size; ++x) {
          if (pair.defect.contains(x, y)) continue;
          for (int c = 0; c < 3; ++c) ASSERT_EQ(pair.normal.at(c, y, x), pair.abnormal.at(c, y, x)) << defect;
        }
      }
    }
  }
}

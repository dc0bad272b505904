#include <filesystem>
#include <fstream>

#include "mlagan/data.hpp"
#include "mlagan/metrics.hpp"
#include "test_util.hpp"

using namespace mlagan;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / "mlagan_test_data" / name;
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(ImageIo, RoundTripWithinQuantization) {
  const fs::path dir = fresh_dir("io");
  const Tensor<double> img = mlagan::testing::rand_t({3, 9, 13}, 1, 0, 1);
  save_image(img, dir / "a.png");
  const Tensor<double> back = load_image<double>(dir / "a.png");
  ASSERT_EQ(back.shape(), img.shape());
  EXPECT_LE(max_abs_diff(back, img), 0.5 / 255 + 1e-12);
}

TEST(ImageIo, BlackAndWhiteAreExact) {
  const fs::path dir = fresh_dir("bw");
  Tensor<float> img = Tensor<float>::zeros({3, 2, 2});
  img[1] = 1.0f;
  save_image(img, dir / "bw.png");
  const Tensor<float> back = load_image<float>(dir / "bw.png");
  EXPECT_EQ(back[0], 0.0f);
  EXPECT_EQ(back[1], 1.0f);
}

TEST(ImageIo, RoundHalfUp) {
  EXPECT_EQ(to_byte(0.5 / 255.0 + 1e-12), 1);
  EXPECT_EQ(to_byte(127.5 / 255.0 + 1e-12), 128);
  EXPECT_EQ(to_byte(-0.2), 0);
  EXPECT_EQ(to_byte(1.7), 255);
}

TEST(ImageIo, TruncatedAndForeignFilesError) {
  const fs::path dir = fresh_dir("bad");
  save_image(mlagan::testing::rand_t({3, 16, 16}, 2, 0, 1), dir / "ok.png");
  const std::string bytes = slurp(dir / "ok.png");
  {
    std::ofstream f(dir / "trunc.png", std::ios::binary);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
  }
  EXPECT_THROW(load_image<float>(dir / "trunc.png"), IoError);
  {
    std::ofstream f(dir / "text.png");
    f << "not an image at all";
  }
  EXPECT_THROW(load_image<float>(dir / "text.png"), IoError);
  EXPECT_THROW(load_image<float>(dir / "missing.png"), IoError);
}

TEST(ImageIo, SaveRejectsNonRgb) {
  const fs::path dir = fresh_dir("shape");
  EXPECT_THROW(save_image(Tensor<float>::zeros({1, 4, 4}), dir / "x.png"), DimensionError);
}

TEST(CloudField, RangeIsExactlyZeroToMax) {
  for (double amax : {0.3, 0.9, 1.0}) {
    CloudParams p;
    p.max_opacity = amax;
    p.seed = 5;
    const Tensor<double> a = synth_cloud_field<double>(32, p);
    const auto [lo, hi] = std::minmax_element(a.values().begin(), a.values().end());
    EXPECT_EQ(*lo, 0.0);
    EXPECT_DOUBLE_EQ(*hi, amax);
  }
}

TEST(CloudField, SameSeedSameField) {
  CloudParams p;
  p.seed = 77;
  EXPECT_EQ(synth_cloud_field<float>(32, p), synth_cloud_field<float>(32, p));
  CloudParams q = p;
  q.seed = 78;
  EXPECT_FALSE(synth_cloud_field<float>(32, p) == synth_cloud_field<float>(32, q));
}

TEST(CloudField, IsSmooth) {
  for (std::uint64_t seed = 0; seed < 50; ++seed) {
    CloudParams p;
    p.seed = seed;
    const Tensor<double> a = synth_cloud_field<double>(32, p);
    double m = 0;
    for (std::size_t y = 0; y < 32; ++y)
      for (std::size_t x = 0; x + 1 < 32; ++x) m += std::abs(a.at(y, x + 1) - a.at(y, x));
    EXPECT_LT(m / (32 * 31), 0.1) << "seed " << seed;
  }
}

TEST(CloudField, InvalidParamsThrow) {
  CloudParams p;
  p.max_opacity = 0.0;
  EXPECT_THROW(synth_cloud_field<float>(32, p), ConfigError);
  p = CloudParams{};
  p.tint = {0.5, 1.0, 1.0};
  EXPECT_THROW(synth_cloud_field<float>(32, p), ConfigError);
  EXPECT_THROW(synth_cloud_field<float>(4, CloudParams{}), ConfigError);
}

TEST(ClearImage, InUnitRangeAndSeeded) {
  const Tensor<float> a = synth_clear_image<float>(32, 3), b = synth_clear_image<float>(32, 3);
  EXPECT_EQ(a, b);
  EXPECT_FALSE(a == synth_clear_image<float>(32, 4));
  for (float v : a.values()) {
    EXPECT_GE(v, 0.0f);
    EXPECT_LE(v, 1.0f);
  }
}

TEST(ApplyCloud, ZeroOpacityIsIdentity) {
  const Tensor<double> clear = synth_clear_image<double>(16, 1);
  EXPECT_EQ(apply_cloud(clear, Tensor<double>::zeros({16, 16}), {0.95, 0.95, 0.95}), clear);
}

TEST(ApplyCloud, FullOpacityIsTint) {
  const Tensor<double> clear = synth_clear_image<double>(16, 1);
  const Tensor<double> out = apply_cloud(clear, Tensor<double>::ones({16, 16}), {0.9, 0.95, 1.0});
  for (std::size_t i = 0; i < 256; ++i) {
    EXPECT_DOUBLE_EQ(out[i], 0.9);
    EXPECT_DOUBLE_EQ(out[256 + i], 0.95);
    EXPECT_DOUBLE_EQ(out[512 + i], 1.0);
  }
}

TEST(ApplyCloud, HalfOpacityBlend) {
  Tensor<double> half({8, 8});
  for (auto& v : half.data()) v = 0.5;
  const Tensor<double> out = apply_cloud(Tensor<double>::zeros({3, 8, 8}), half, {1.0, 1.0, 1.0});
  for (double v : out.values()) EXPECT_DOUBLE_EQ(v, 0.5);
}

TEST(ApplyCloud, ShapeMismatchThrows) {
  EXPECT_THROW(apply_cloud(Tensor<double>::zeros({3, 8, 8}), Tensor<double>::zeros({8, 9}), {1, 1, 1}),
               DimensionError);
}

TEST(SyntheticPairs, CloudyEqualsClearWhereAlphaIsZero) {
  for (std::size_t i = 0; i < 10; ++i) {
    const auto p = synth_pair<double>(32, 7, i);
    std::size_t exact = 0;
    for (std::size_t k = 0; k < p.clear.size(); ++k) exact += p.cloudy[k] == p.clear[k];
    EXPECT_GE(exact, 3u);  // the field's minimum pixel, in every channel
  }
}

TEST(SyntheticPairs, BaselinePsnrFallsWithOpacity) {
  double prev = std::numeric_limits<double>::infinity();
  for (double amax : {0.3, 0.6, 0.9}) {
    const auto split = make_dataset<double>(20, 32, 7, amax);
    double m = 0;
    for (const auto& p : split.train) m += psnr(p.cloudy, p.clear);
    m /= static_cast<double>(split.train.size());
    EXPECT_LT(m, prev) << "alpha_max " << amax;
    prev = m;
  }
}

TEST(Split, EightyTwentyWithFloorOnTest) {
  const auto s200 = split_indices(200, 7);
  EXPECT_EQ(s200.first.size(), 160u);
  EXPECT_EQ(s200.second.size(), 40u);
  const auto s5 = split_indices(5, 7);
  EXPECT_EQ(s5.first.size(), 4u);
  EXPECT_EQ(s5.second.size(), 1u);
  const auto s9 = split_indices(9, 7);
  EXPECT_EQ(s9.second.size(), 1u);
}

TEST(Split, SeededMembership) {
  EXPECT_EQ(split_indices(200, 7), split_indices(200, 7));
  EXPECT_NE(split_indices(200, 7).second, split_indices(200, 8).second);
  const auto [train, test] = split_indices(50, 3);
  std::vector<std::size_t> all(train);
  all.insert(all.end(), test.begin(), test.end());
  std::sort(all.begin(), all.end());
  for (std::size_t i = 0; i < 50; ++i) EXPECT_EQ(all[i], i);
}

TEST(MakeDataset, DeterministicAndSized) {
  const auto a = make_dataset<float>(10, 16, 3), b = make_dataset<float>(10, 16, 3);
  ASSERT_EQ(a.train.size(), 8u);
  ASSERT_EQ(a.test.size(), 2u);
  for (std::size_t i = 0; i < a.train.size(); ++i) {
    EXPECT_EQ(a.train[i].id, b.train[i].id);
    EXPECT_EQ(a.train[i].cloudy, b.train[i].cloudy);
    EXPECT_EQ(a.train[i].clear, b.train[i].clear);
  }
  EXPECT_THROW(make_dataset<float>(4, 16, 3), ConfigError);
}

TEST(DatasetDir, WriteThenLoadPreservesSplitAndPixels) {
  const fs::path root = fresh_dir("roundtrip");
  const auto split = make_dataset<float>(10, 16, 9);
  write_dataset(split, root);
  EXPECT_EQ(slurp(root / "manifest.csv").substr(0, 9), "id,split\n");
  const auto loaded = load_dataset<float>(root);
  ASSERT_EQ(loaded.split.train.size(), 8u);
  ASSERT_EQ(loaded.split.test.size(), 2u);
  for (std::size_t i = 0; i < 8; ++i) {
    EXPECT_EQ(loaded.split.train[i].id, split.train[i].id);
    EXPECT_LE(max_abs_diff(loaded.split.train[i].clear, split.train[i].clear), 0.5f / 255 + 1e-6f);
  }
  for (const auto& e : fs::directory_iterator(root / "cloud")) EXPECT_EQ(e.path().extension(), ".png");
}

TEST(DatasetDir, RewriteIsByteIdentical) {
  const fs::path a = fresh_dir("rewrite_a"), b = fresh_dir("rewrite_b");
  write_dataset(make_dataset<float>(6, 16, 4), a);
  write_dataset(make_dataset<float>(6, 16, 4), b);
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    EXPECT_EQ(slurp(e.path()), slurp(b / fs::relative(e.path(), a))) << e.path();
  }
}

TEST(PairedDir, UnpairedFilesAbortUnlessSkipped) {
  const fs::path root = fresh_dir("unpaired");
  write_dataset(make_dataset<float>(6, 16, 4), root);
  fs::remove(root / "manifest.csv");
  save_image(Tensor<float>::zeros({3, 16, 16}), root / "cloud" / "extra.png");
  EXPECT_THROW(load_paired_dir<float>(root / "cloud", root / "label"), IoError);
  const auto loaded = load_paired_dir<float>(root / "cloud", root / "label", 0, true);
  EXPECT_EQ(loaded.report.unpaired, std::vector<std::string>{"extra.png"});
  EXPECT_EQ(loaded.split.train.size() + loaded.split.test.size(), 6u);
  EXPECT_EQ(loaded.split.test.size(), 1u);
}

TEST(PairedDir, CorruptFileIsListed) {
  const fs::path root = fresh_dir("corrupt");
  write_dataset(make_dataset<float>(6, 16, 4), root);
  {
    std::ofstream f(root / "label" / "0000.png", std::ios::trunc);
    f << "garbage";
  }
  EXPECT_THROW(load_dataset<float>(root), IoError);
  const auto loaded = load_paired_dir<float>(root / "cloud", root / "label", 0, true);
  EXPECT_EQ(loaded.report.unreadable, std::vector<std::string>{"0000.png"});
}

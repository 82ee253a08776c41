#include "abunet/data.hpp"
#include "abunet/error.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <set>

using namespace abunet;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("abunet_data_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

Dataset ramp_dataset(int label, int classes) {
  Dataset d;
  d.num_classes = classes;
  d.labels = {label};
  d.images.resize(kImageValues);
  for (std::size_t i = 0; i < kImageValues; ++i)
    d.images[i] = static_cast<std::uint8_t>(i % 256);
  return d;
}

double mean_of(std::span<const double> v) {
  double m = 0.0;
  for (double x : v)
    m += x;
  return m / static_cast<double>(v.size());
}

double std_of(std::span<const double> v) {
  const double m = mean_of(v);
  double s = 0.0;
  for (double x : v)
    s += (x - m) * (x - m);
  return std::sqrt(s / static_cast<double>(v.size()));
}

} // namespace

TEST(Cifar, RecordRoundTrip) {
  const auto dir = scratch_dir("roundtrip10");
  const Dataset one = ramp_dataset(7, 10);
  write_cifar_records(dir / "test_batch.bin", one, CifarKind::Cifar10);
  EXPECT_EQ(fs::file_size(dir / "test_batch.bin") % 3073, 0u);
  const Dataset back = load_cifar(dir, CifarKind::Cifar10, CifarSplit::Test);
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back.labels[0], 7);
  EXPECT_EQ(back.images, one.images);
}

TEST(Cifar, ChannelPlanarLayoutOnDisk) {
  const auto dir = scratch_dir("planar");
  Dataset d = ramp_dataset(3, 10);
  // Pixel (0,0): channels 10, 20, 30.
  d.images[0] = 10;
  d.images[1] = 20;
  d.images[2] = 30;
  write_cifar_records(dir / "test_batch.bin", d, CifarKind::Cifar10);
  std::ifstream in(dir / "test_batch.bin", std::ios::binary);
  std::vector<unsigned char> raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  EXPECT_EQ(raw[0], 3);
  EXPECT_EQ(raw[1], 10);
  EXPECT_EQ(raw[1 + 1024], 20);
  EXPECT_EQ(raw[1 + 2048], 30);
}

TEST(Cifar, HundredClassUsesFineLabel) {
  const auto dir = scratch_dir("roundtrip100") / "cifar-100-binary";
  fs::create_directories(dir);
  Dataset d = ramp_dataset(87, 100);
  write_cifar_records(dir / "train.bin", d, CifarKind::Cifar100);
  EXPECT_EQ(fs::file_size(dir / "train.bin"), 3074u);
  {
    std::ifstream in(dir / "train.bin", std::ios::binary);
    char head[2];
    in.read(head, 2);
    EXPECT_EQ(static_cast<unsigned char>(head[1]), 87);
  }
  // Loaded through the parent directory.
  const Dataset back = load_cifar(dir.parent_path(), CifarKind::Cifar100, CifarSplit::Train);
  EXPECT_EQ(back.labels[0], 87);
  EXPECT_EQ(back.num_classes, 100);
}

TEST(Cifar, LoadErrors) {
  const auto dir = scratch_dir("errors");
  EXPECT_THROW(load_cifar(dir, CifarKind::Cifar10, CifarSplit::Test), IoError);

  {
    std::ofstream out(dir / "test_batch.bin", std::ios::binary);
    std::vector<char> bytes(3073 + 100, 1);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_cifar(dir, CifarKind::Cifar10, CifarSplit::Test);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 3073"), std::string::npos) << e.what();
  }

  {
    std::ofstream out(dir / "test_batch.bin", std::ios::binary);
    std::vector<char> bytes(2 * 3073, 0);
    bytes[3073] = 12;
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  try {
    load_cifar(dir, CifarKind::Cifar10, CifarSplit::Test);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("offset 3073"), std::string::npos) << e.what();
  }

  // Training split needs all five batches.
  write_cifar_records(dir / "data_batch_1.bin", ramp_dataset(1, 10), CifarKind::Cifar10);
  EXPECT_THROW(load_cifar(dir, CifarKind::Cifar10, CifarSplit::Train), IoError);
}

TEST(Cifar, TaskNames) {
  EXPECT_EQ(parse_task("cifar100"), CifarKind::Cifar100);
  EXPECT_EQ(cifar_classes(CifarKind::Cifar10), 10);
  EXPECT_THROW(parse_task("mnist"), ConfigError);
}

TEST(ZTransform, ConstantImageIsZero) {
  std::vector<std::uint8_t> img(kImageValues, 128);
  std::vector<double> out(kImageValues, 9.0);
  z_transform(img, out);
  for (double v : out)
    EXPECT_EQ(v, 0.0);
}

TEST(ZTransform, TwoValuedImageMapsToUnit) {
  std::vector<std::uint8_t> img(kImageValues);
  for (std::size_t i = 0; i < kImageValues; ++i)
    img[i] = i < kImageValues / 2 ? 0 : 255;
  std::vector<double> out(kImageValues);
  z_transform(img, out);
  EXPECT_NEAR(out.front(), -1.0, 1e-12);
  EXPECT_NEAR(out.back(), 1.0, 1e-12);
}

TEST(ZTransform, RandomImagesAreStandardized) {
  Rng rng(1);
  std::vector<std::uint8_t> img(kImageValues);
  std::vector<double> out(kImageValues), again(kImageValues);
  for (int trial = 0; trial < 50; ++trial) {
    for (auto& v : img)
      v = static_cast<std::uint8_t>(rng() % 256);
    z_transform(img, out);
    EXPECT_LT(std::abs(mean_of(out)), 1e-6);
    EXPECT_NEAR(std_of(out), 1.0, 1e-6);
  }
}

TEST(Split, SizesAndDisjointness) {
  Dataset d = make_synthetic(1000, 4, 3);
  const auto s = split(d, 0.05, 9);
  EXPECT_EQ(s.val.size(), 50u);
  EXPECT_EQ(s.train.size(), 950u);
  // The round(0.05 * 50,000) arithmetic.
  EXPECT_EQ(std::llround(0.05 * 50000), 2500);

  const auto half = split(make_synthetic(10, 2, 1), 0.5, 1);
  EXPECT_EQ(half.val.size(), 5u);
  EXPECT_EQ(half.train.size(), 5u);
  EXPECT_THROW(split(d, 0.0, 1), ConfigError);
  EXPECT_THROW(split(d, 1.0, 1), ConfigError);
}

TEST(Split, NoImageOnBothSides) {
  // Tag each image with a unique id in its first two bytes.
  Dataset d = make_synthetic(600, 3, 4);
  for (std::size_t i = 0; i < d.size(); ++i) {
    d.images[i * kImageValues] = static_cast<std::uint8_t>(i % 256);
    d.images[i * kImageValues + 1] = static_cast<std::uint8_t>(i / 256);
  }
  const auto s = split(d, 0.05, 2);
  std::set<int> train_ids;
  for (std::size_t i = 0; i < s.train.size(); ++i)
    train_ids.insert(s.train.image(i)[0] + 256 * s.train.image(i)[1]);
  for (std::size_t i = 0; i < s.val.size(); ++i)
    EXPECT_FALSE(train_ids.contains(s.val.image(i)[0] + 256 * s.val.image(i)[1]));
  EXPECT_EQ(train_ids.size() + s.val.size(), 600u);
}

TEST(Split, SameSeedSameSplit) {
  const Dataset d = make_synthetic(300, 3, 5);
  const auto a = split(d, 0.1, 11), b = split(d, 0.1, 11), c = split(d, 0.1, 12);
  EXPECT_EQ(a.val.images, b.val.images);
  EXPECT_EQ(a.train.labels, b.train.labels);
  EXPECT_NE(a.val.images, c.val.images);
}

TEST(Batches, EpochArithmetic) {
  Dataset d;
  d.num_classes = 10;
  d.labels.assign(47500, 0);
  d.images.assign(47500 * kImageValues, 0);
  BatchIterator it(d, 256, 1);
  EXPECT_EQ(it.batches_per_epoch(), 185u);
}

TEST(Batches, EachIndexAtMostOncePerEpoch) {
  Dataset d = make_synthetic(100, 4, 1);
  for (std::size_t i = 0; i < d.size(); ++i)
    d.images[i * kImageValues] = static_cast<std::uint8_t>(i);
  BatchIterator it(d, 16, 3);
  ASSERT_EQ(it.batches_per_epoch(), 6u);
  for (int epoch = 0; epoch < 3; ++epoch) {
    std::set<std::size_t> seen;
    for (std::size_t b = 0; b < it.batches_per_epoch(); ++b) {
      const auto idx = it.peek_indices();
      EXPECT_EQ(it.epoch(), static_cast<std::size_t>(epoch));
      for (auto i : idx)
        EXPECT_TRUE(seen.insert(i).second);
      const Batch batch = it.next();
      EXPECT_EQ(batch.x.shape(), (Shape{16, 32, 32, 3}));
      EXPECT_EQ(batch.y.size(), 16u);
    }
    EXPECT_EQ(seen.size(), 96u);
  }
}

TEST(Batches, SameSeedSameSequence) {
  const Dataset d = make_synthetic(64, 4, 1);
  BatchIterator a(d, 8, 5), b(d, 8, 5);
  for (int i = 0; i < 20; ++i) {
    const Batch x = a.next(), y = b.next();
    EXPECT_EQ(x.y, y.y);
    for (std::size_t k = 0; k < x.x.size(); ++k)
      ASSERT_EQ(x.x.values()[k], y.x.values()[k]);
  }
}

TEST(Batches, ImagesAreStandardizedAtAssembly) {
  const Dataset d = make_synthetic(32, 4, 1);
  BatchIterator it(d, 4, 5);
  const Batch b = it.next();
  for (std::size_t k = 0; k < 4; ++k) {
    const auto img = b.x.values().subspan(k * kImageValues, kImageValues);
    EXPECT_LT(std::abs(mean_of(img)), 1e-6);
    EXPECT_NEAR(std_of(img), 1.0, 1e-6);
  }
  EXPECT_THROW(BatchIterator(d, 33, 1), ConfigError);
}

TEST(Synthetic, BalancedLabels) {
  const Dataset d = make_synthetic(512, 4, 1);
  std::vector<int> count(4, 0);
  for (int l : d.labels)
    ++count[l];
  for (int c : count)
    EXPECT_EQ(c, 128);
  EXPECT_NO_THROW(d.validate());
}

TEST(Synthetic, SeedDeterminism) {
  EXPECT_EQ(make_synthetic(40, 4, 7).images, make_synthetic(40, 4, 7).images);
  EXPECT_NE(make_synthetic(40, 4, 7).images, make_synthetic(40, 4, 8).images);
}

TEST(Synthetic, LinearlySeparableBeyondNinetyFivePercent) {
  for (int classes : {4, 10}) {
    const Dataset fit = make_synthetic(2000, classes, 21), held = make_synthetic(2000, classes, 22);
    std::vector<std::vector<double>> centroid(classes, std::vector<double>(3, 0.0));
    std::vector<int> count(classes, 0);
    for (std::size_t i = 0; i < fit.size(); ++i) {
      const auto m = channel_means(fit.image(i));
      for (int c = 0; c < 3; ++c)
        centroid[fit.labels[i]][c] += m[c];
      ++count[fit.labels[i]];
    }
    for (int k = 0; k < classes; ++k)
      for (auto& v : centroid[k])
        v /= count[k];
    std::size_t correct = 0;
    for (std::size_t i = 0; i < held.size(); ++i) {
      const auto m = channel_means(held.image(i));
      int best = 0;
      double best_d = 1e300;
      for (int k = 0; k < classes; ++k) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c)
          d += (m[c] - centroid[k][c]) * (m[c] - centroid[k][c]);
        if (d < best_d) {
          best_d = d;
          best = k;
        }
      }
      correct += best == held.labels[i] ? 1 : 0;
    }
    EXPECT_GT(static_cast<double>(correct) / held.size(), 0.95) << classes << " classes";
  }
}

TEST(DataDir, FlagThenEnvironment) {
  EXPECT_EQ(resolve_data_dir("/x").value(), fs::path("/x"));
  ::setenv("ABUNET_DATA_DIR", "/from/env", 1);
  EXPECT_EQ(resolve_data_dir("").value(), fs::path("/from/env"));
  ::unsetenv("ABUNET_DATA_DIR");
  EXPECT_FALSE(resolve_data_dir("").has_value());
}

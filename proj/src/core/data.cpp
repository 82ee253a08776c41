#include "abunet/data.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <numbers>
#include <numeric>

namespace abunet {

namespace fs = std::filesystem;

Dataset Dataset::select(std::span<const std::size_t> indices, std::string new_name) const {
  Dataset out;
  out.num_classes = num_classes;
  out.name = std::move(new_name);
  out.images.reserve(indices.size() * kImageValues);
  out.labels.reserve(indices.size());
  for (std::size_t i : indices) {
    if (i >= size())
      throw ConfigError("dataset index " + std::to_string(i) + " out of range for " + name);
    const auto img = image(i);
    out.images.insert(out.images.end(), img.begin(), img.end());
    out.labels.push_back(labels[i]);
  }
  return out;
}

void Dataset::validate() const {
  if (labels.empty())
    throw ConfigError("dataset '" + name + "' is empty");
  if (images.size() != labels.size() * kImageValues)
    throw ConfigError("dataset '" + name + "' has " + std::to_string(images.size()) + " pixel values for " +
                      std::to_string(labels.size()) + " labels");
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i] < 0 || labels[i] >= num_classes)
      throw ConfigError("dataset '" + name + "' label " + std::to_string(labels[i]) + " at index " +
                        std::to_string(i) + " outside [0," + std::to_string(num_classes) + ")");
}

std::string cifar_task_name(CifarKind kind) { return kind == CifarKind::Cifar10 ? "cifar10" : "cifar100"; }

CifarKind parse_task(const std::string& name) {
  if (name == "cifar10")
    return CifarKind::Cifar10;
  if (name == "cifar100")
    return CifarKind::Cifar100;
  throw ConfigError("unknown task '" + name + "' (expected cifar10 or cifar100)");
}

int cifar_classes(CifarKind kind) { return kind == CifarKind::Cifar10 ? 10 : 100; }

namespace {

std::size_t record_bytes(CifarKind kind) { return kind == CifarKind::Cifar10 ? 3073 : 3074; }

std::vector<std::string> batch_files(CifarKind kind, CifarSplit split) {
  if (kind == CifarKind::Cifar100)
    return {split == CifarSplit::Train ? "train.bin" : "test.bin"};
  if (split == CifarSplit::Test)
    return {"test_batch.bin"};
  return {"data_batch_1.bin", "data_batch_2.bin", "data_batch_3.bin", "data_batch_4.bin", "data_batch_5.bin"};
}

fs::path locate(const fs::path& dir, CifarKind kind, const std::string& first_file) {
  const char* sub = kind == CifarKind::Cifar10 ? "cifar-10-batches-bin" : "cifar-100-binary";
  for (const fs::path& candidate : {dir, dir / sub})
    if (fs::exists(candidate / first_file))
      return candidate;
  throw IoError("missing " + first_file + " in " + dir.string() + " (or its " + sub + " subdirectory)");
}

void read_file(const fs::path& file, CifarKind kind, Dataset& out) {
  std::ifstream in(file, std::ios::binary);
  if (!in)
    throw IoError("cannot open " + file.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t rec = record_bytes(kind);
  if (bytes.empty() || bytes.size() % rec != 0)
    throw IoError(file.string() + ": size " + std::to_string(bytes.size()) + " is not a multiple of " +
                  std::to_string(rec) + "; truncated record at offset " +
                  std::to_string(bytes.size() / rec * rec));
  const std::size_t label_byte = kind == CifarKind::Cifar10 ? 0 : 1;
  const std::size_t plane = kImageSide * kImageSide;
  for (std::size_t off = 0; off < bytes.size(); off += rec) {
    const int label = bytes[off + label_byte];
    if (label >= out.num_classes)
      throw IoError(file.string() + ": label " + std::to_string(label) + " at offset " + std::to_string(off) +
                    " exceeds " + std::to_string(out.num_classes - 1));
    out.labels.push_back(label);
    const std::uint8_t* px = bytes.data() + off + rec - kImageValues;
    const std::size_t base = out.images.size();
    out.images.resize(base + kImageValues);
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < kImageChannels; ++c)
        out.images[base + p * kImageChannels + c] = px[c * plane + p];
  }
}

} // namespace

Dataset load_cifar(const fs::path& dir, CifarKind kind, CifarSplit split) {
  const auto files = batch_files(kind, split);
  const fs::path root = locate(dir, kind, files.front());
  Dataset out;
  out.num_classes = cifar_classes(kind);
  out.name = cifar_task_name(kind) + (split == CifarSplit::Train ? "/train" : "/test");
  for (const auto& f : files) {
    if (!fs::exists(root / f))
      throw IoError("missing " + (root / f).string());
    read_file(root / f, kind, out);
  }
  out.validate();
  return out;
}

void write_cifar_records(const fs::path& file, const Dataset& data, CifarKind kind) {
  std::ofstream out(file, std::ios::binary);
  if (!out)
    throw IoError("cannot write " + file.string());
  const std::size_t plane = kImageSide * kImageSide;
  std::vector<char> rec(record_bytes(kind));
  for (std::size_t i = 0; i < data.size(); ++i) {
    if (kind == CifarKind::Cifar10) {
      rec[0] = static_cast<char>(data.labels[i]);
    } else {
      rec[0] = static_cast<char>(data.labels[i] / 5);
      rec[1] = static_cast<char>(data.labels[i]);
    }
    char* px = rec.data() + rec.size() - kImageValues;
    const auto img = data.image(i);
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < kImageChannels; ++c)
        px[c * plane + p] = static_cast<char>(img[p * kImageChannels + c]);
    out.write(rec.data(), static_cast<std::streamsize>(rec.size()));
  }
  if (!out)
    throw IoError("write failed for " + file.string());
}

std::optional<fs::path> resolve_data_dir(const std::string& flag_value) {
  if (!flag_value.empty())
    return fs::path(flag_value);
  if (const char* env = std::getenv("ABUNET_DATA_DIR"); env && *env)
    return fs::path(env);
  return std::nullopt;
}

void z_transform(std::span<const std::uint8_t> image, std::span<double> out) {
  if (image.size() != out.size())
    throw ShapeError("z_transform: input and output sizes differ");
  const double n = static_cast<double>(image.size());
  double mean = 0.0;
  for (auto v : image)
    mean += v;
  mean /= n;
  double var = 0.0;
  for (auto v : image)
    var += (v - mean) * (v - mean);
  const double denom = std::max(std::sqrt(var / n), kZEpsilon);
  for (std::size_t i = 0; i < image.size(); ++i)
    out[i] = (image[i] - mean) / denom;
}

SplitDataset split(const Dataset& data, double fraction, std::uint64_t seed) {
  if (!(fraction > 0.0 && fraction < 1.0))
    throw ConfigError("split fraction must lie in (0, 1)");
  const std::size_t n = data.size();
  const auto n_val = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(n)));
  if (n_val == 0 || n_val >= n)
    throw ConfigError("split of " + std::to_string(n) + " examples leaves an empty side");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  std::vector<std::size_t> val(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(n_val));
  std::vector<std::size_t> train(order.begin() + static_cast<std::ptrdiff_t>(n_val), order.end());
  std::sort(val.begin(), val.end());
  std::sort(train.begin(), train.end());
  return {data.select(train, data.name + "/fit"), data.select(val, data.name + "/val"), seed};
}

Dataset take_subset(const Dataset& data, std::size_t n, std::uint64_t seed) {
  if (n == 0 || n > data.size())
    throw ConfigError("subset size " + std::to_string(n) + " outside [1," + std::to_string(data.size()) + "]");
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  order.resize(n);
  return data.select(order, data.name + "/subset" + std::to_string(n));
}

Batch assemble_batch(const Dataset& data, std::span<const std::size_t> indices) {
  Batch b{Tensor(Shape{indices.size(), kImageSide, kImageSide, kImageChannels}), {}};
  b.y.reserve(indices.size());
  auto xs = b.x.values();
  for (std::size_t k = 0; k < indices.size(); ++k) {
    z_transform(data.image(indices[k]), xs.subspan(k * kImageValues, kImageValues));
    b.y.push_back(data.labels[indices[k]]);
  }
  return b;
}

BatchIterator::BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed)
    : data_(&data), batch_size_(batch_size), rng_(seed), order_(data.size()) {
  if (batch_size == 0 || batch_size > data.size())
    throw ConfigError("batch size " + std::to_string(batch_size) + " must lie in [1," +
                      std::to_string(data.size()) + "]");
  reshuffle();
}

void BatchIterator::reshuffle() {
  std::iota(order_.begin(), order_.end(), 0);
  std::shuffle(order_.begin(), order_.end(), rng_);
  cursor_ = 0;
}

std::span<const std::size_t> BatchIterator::peek_indices() {
  if (cursor_ + batch_size_ > order_.size()) {
    reshuffle();
    ++epoch_;
  }
  return {order_.data() + cursor_, batch_size_};
}

Batch BatchIterator::next() {
  const auto idx = peek_indices();
  cursor_ += batch_size_;
  return assemble_batch(*data_, idx);
}

Dataset make_synthetic(std::size_t n, int classes, std::uint64_t seed) {
  if (classes < 2 || n < static_cast<std::size_t>(classes))
    throw ConfigError("make_synthetic needs classes >= 2 and n >= classes");
  Rng rng(seed);
  // Orthonormal basis of the plane orthogonal to (1,1,1).
  const double u[3] = {1 / std::sqrt(2.0), -1 / std::sqrt(2.0), 0.0};
  const double v[3] = {1 / std::sqrt(6.0), 1 / std::sqrt(6.0), -2 / std::sqrt(6.0)};
  const double radius = 3.0 / std::sin(std::numbers::pi / classes);
  const double intensity = 7.0;   // gray levels per unit of sigma
  const double pixel_noise = 20.0;

  Dataset out;
  out.num_classes = classes;
  out.name = "synthetic" + std::to_string(classes);
  out.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i)
    out.labels[i] = static_cast<int>(i % static_cast<std::size_t>(classes));
  std::shuffle(out.labels.begin(), out.labels.end(), rng);

  std::normal_distribution<double> unit(0.0, 1.0);
  out.images.resize(n * kImageValues);
  for (std::size_t i = 0; i < n; ++i) {
    const double angle = 2.0 * std::numbers::pi * out.labels[i] / classes;
    double mean[3];
    for (std::size_t c = 0; c < 3; ++c)
      mean[c] = radius * (std::cos(angle) * u[c] + std::sin(angle) * v[c]) + unit(rng);
    std::uint8_t* img = out.images.data() + i * kImageValues;
    for (std::size_t p = 0; p < kImageSide * kImageSide; ++p)
      for (std::size_t c = 0; c < 3; ++c) {
        const double value = 128.0 + intensity * mean[c] + pixel_noise * unit(rng);
        img[p * 3 + c] = static_cast<std::uint8_t>(std::clamp(std::lround(value), 0L, 255L));
      }
  }
  return out;
}

std::vector<double> channel_means(std::span<const std::uint8_t> image) {
  std::vector<double> z(image.size());
  z_transform(image, z);
  std::vector<double> means(kImageChannels, 0.0);
  for (std::size_t i = 0; i < z.size(); ++i)
    means[i % kImageChannels] += z[i];
  for (auto& m : means)
    m /= static_cast<double>(z.size() / kImageChannels);
  return means;
}

} // namespace abunet

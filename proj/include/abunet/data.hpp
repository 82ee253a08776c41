#pragma once

#include "abunet/rng.hpp"
#include "abunet/tensor.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace abunet {

inline constexpr std::size_t kImageSide = 32;
inline constexpr std::size_t kImageChannels = 3;
inline constexpr std::size_t kImageValues = kImageSide * kImageSide * kImageChannels;

/// Images are stored height-width-channel, 8 bits per value.
struct Dataset {
  std::vector<std::uint8_t> images;
  std::vector<int> labels;
  int num_classes = 10;
  std::string name;

  std::size_t size() const { return labels.size(); }
  std::span<const std::uint8_t> image(std::size_t i) const {
    return {images.data() + i * kImageValues, kImageValues};
  }

  /// Copies the listed examples, in order.
  Dataset select(std::span<const std::size_t> indices, std::string new_name) const;

  /// Throws ConfigError when the invariants (N > 0, labels in range, pixel
  /// count) do not hold.
  void validate() const;
};

enum class CifarKind { Cifar10, Cifar100 };
enum class CifarSplit { Train, Test };

std::string cifar_task_name(CifarKind kind);
CifarKind parse_task(const std::string& name);
int cifar_classes(CifarKind kind);

/// Reads the standard binary batches. CIFAR-10 records are 1 label byte +
/// 3072 channel-planar pixels (data_batch_1..5.bin, test_batch.bin);
/// CIFAR-100 records carry a coarse and a fine label byte (train.bin,
/// test.bin) and the fine label is used. `dir` may also be the parent of
/// the extracted cifar-10-batches-bin / cifar-100-binary folder.
Dataset load_cifar(const std::filesystem::path& dir, CifarKind kind, CifarSplit split);

/// Writes records in the same layout load_cifar reads.
void write_cifar_records(const std::filesystem::path& file, const Dataset& data, CifarKind kind);

/// Resolves --data-dir, falling back to $ABUNET_DATA_DIR.
std::optional<std::filesystem::path> resolve_data_dir(const std::string& flag_value);

/// Lower bound on the divisor, so constant images map to zeros.
inline const double kZEpsilon = 1.0 / std::sqrt(static_cast<double>(kImageValues));

/// Standardizes all 3072 values of one image jointly.
void z_transform(std::span<const std::uint8_t> image, std::span<double> out);

struct SplitDataset {
  Dataset train;
  Dataset val;
  std::uint64_t split_seed = 0;
};

/// Shuffled hold-out split; val gets round(fraction * N) examples.
SplitDataset split(const Dataset& data, double fraction, std::uint64_t seed);

/// Random subset of n examples (without replacement), order shuffled.
Dataset take_subset(const Dataset& data, std::size_t n, std::uint64_t seed);

struct Batch {
  Tensor x;            ///< [B,32,32,3], z-transformed
  std::vector<int> y;  ///< [B]
};

/// Assembles the listed examples into one z-transformed batch.
Batch assemble_batch(const Dataset& data, std::span<const std::size_t> indices);

/// Endless mini-batch stream: every epoch is a fresh permutation and the
/// short remainder of an epoch is dropped.
class BatchIterator {
public:
  BatchIterator(const Dataset& data, std::size_t batch_size, std::uint64_t seed);

  Batch next();
  std::size_t batches_per_epoch() const { return data_->size() / batch_size_; }
  std::size_t epoch() const { return epoch_; }

  /// Indices of the batch next() would return.
  std::span<const std::size_t> peek_indices();

private:
  void reshuffle();

  const Dataset* data_;
  std::size_t batch_size_;
  Rng rng_;
  std::vector<std::size_t> order_;
  std::size_t cursor_ = 0;
  std::size_t epoch_ = 0;
};

/// Class-conditional blobs in channel-mean space. Class centers lie on a
/// circle in the plane orthogonal to (1,1,1), so they survive per-image
/// standardization, with adjacent centers 6 sigma apart. Labels are
/// balanced (n / classes each, remainder to the lowest classes).
Dataset make_synthetic(std::size_t n, int classes, std::uint64_t seed);

/// Per-image channel means of the z-transformed image; the features the
/// synthetic classes are separable in.
std::vector<double> channel_means(std::span<const std::uint8_t> image);

} // namespace abunet

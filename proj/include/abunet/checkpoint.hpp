#pragma once

#include "abunet/network.hpp"

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace abunet {

inline constexpr std::uint32_t kCheckpointVersion = 1;

struct OptimizerSnapshot {
  std::string kind;       ///< "adam", "momentum" or empty
  std::uint64_t step = 0; ///< updates applied so far
  /// Per-parameter state arrays keyed "<slot>:<parameter name>".
  std::map<std::string, std::vector<double>> slots;
};

struct StoredArray {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

/// Everything needed to rebuild a network and resume its optimizer. Stored
/// little-endian with 64-bit floats regardless of training precision.
struct Checkpoint {
  std::uint32_t version = kCheckpointVersion;
  std::string variant;
  std::string activation;
  int num_classes = 10;
  ArchDims dims;
  std::uint64_t global_step = 0;
  std::string rng_state;
  std::vector<StoredArray> params;
  std::vector<ops::BatchNormState> batch_norms;
  OptimizerSnapshot optimizer;

  const StoredArray* find(const std::string& name) const;
};

void save_checkpoint(const std::filesystem::path& file, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::filesystem::path& file);

Checkpoint snapshot(const Network& net, std::uint64_t global_step, const std::string& rng_state = {},
                    const OptimizerSnapshot& optimizer = {});

/// Rebuilds the network described by a checkpoint with its stored values.
Network restore_network(const Checkpoint& ckpt);

/// Overwrites every parameter and batch-norm state of `net`; names and
/// shapes must match exactly.
void load_parameters(Network& net, const Checkpoint& ckpt);

} // namespace abunet

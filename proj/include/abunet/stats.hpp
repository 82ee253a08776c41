#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace abunet {

struct MeanSe {
  double mean = 0.0;
  double se = 0.0; ///< sample standard deviation / sqrt(n); 0 for a single value
  std::size_t n = 0;
};

MeanSe mean_se(std::span<const double> values);

/// Rank 1 for the highest value; tied values share the average of the ranks
/// they span. NaN entries are missing: they get a NaN rank and take no rank.
std::vector<double> average_ranks(std::span<const double> column);

/// table[row][column]; ranks are computed per column and averaged over the
/// columns where the row has a value (NaN when it has none).
std::vector<double> mean_ranks(const std::vector<std::vector<double>>& table);

} // namespace abunet

#include "abunet/stats.hpp"

#include "abunet/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace abunet {

MeanSe mean_se(std::span<const double> values) {
  if (values.empty())
    throw ConfigError("mean_se of an empty sample");
  MeanSe out;
  out.n = values.size();
  const double n = static_cast<double>(out.n);
  out.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  if (out.n > 1) {
    double sq = 0.0;
    for (double v : values)
      sq += (v - out.mean) * (v - out.mean);
    out.se = std::sqrt(sq / (n - 1.0)) / std::sqrt(n);
  }
  return out;
}

std::vector<double> average_ranks(std::span<const double> column) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  std::vector<double> ranks(column.size(), nan);
  std::vector<std::size_t> order;
  for (std::size_t i = 0; i < column.size(); ++i)
    if (!std::isnan(column[i]))
      order.push_back(i);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return column[a] > column[b]; });
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && column[order[j + 1]] == column[order[i]])
      ++j;
    const double shared = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k)
      ranks[order[k]] = shared;
    i = j + 1;
  }
  return ranks;
}

std::vector<double> mean_ranks(const std::vector<std::vector<double>>& table) {
  const std::size_t rows = table.size();
  const std::size_t cols = rows ? table[0].size() : 0;
  for (const auto& r : table)
    if (r.size() != cols)
      throw ConfigError("mean_ranks: rows have different lengths");
  std::vector<double> sum(rows, 0.0);
  std::vector<std::size_t> count(rows, 0);
  std::vector<double> column(rows);
  for (std::size_t c = 0; c < cols; ++c) {
    for (std::size_t r = 0; r < rows; ++r)
      column[r] = table[r][c];
    const auto ranks = average_ranks(column);
    for (std::size_t r = 0; r < rows; ++r)
      if (!std::isnan(ranks[r])) {
        sum[r] += ranks[r];
        ++count[r];
      }
  }
  std::vector<double> out(rows);
  for (std::size_t r = 0; r < rows; ++r)
    out[r] = count[r] ? sum[r] / static_cast<double>(count[r]) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

} // namespace abunet

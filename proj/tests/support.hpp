#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "dsex/metrics.hpp"
#include "dsex/space.hpp"

namespace testing {

inline std::filesystem::path source_dir() { return DSEX_SOURCE_DIR; }
inline std::filesystem::path fixture(const std::string& rel) { return source_dir() / "fixtures" / rel; }
inline std::filesystem::path config(const std::string& rel) { return source_dir() / "configs" / rel; }
inline std::string dsex_exe() { return DSEX_EXE; }

inline dsex::Schema grid_schema(const std::vector<int>& sizes) {
  std::vector<dsex::ParamSpec> params;
  for (std::size_t k = 0; k < sizes.size(); ++k)
    params.push_back({"x" + std::to_string(k), dsex::ParamDomain::linear(0, sizes[k] - 1), {"all"}});
  return dsex::Schema(std::move(params));
}

/// Row-major index of coords in a full grid, computed independently of the
/// library's hash index.
inline std::size_t flat_index(const std::vector<int>& sizes, const dsex::Coords& c) {
  std::size_t idx = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) idx = idx * static_cast<std::size_t>(sizes[k]) + static_cast<std::size_t>(c[k]);
  return idx;
}

/// Host-code evaluator computing one metric from coordinates, counting calls.
inline std::shared_ptr<dsex::FunctionEvaluator> coord_evaluator(
    std::string name, std::string metric, std::function<double(const dsex::Coords&)> f,
    std::shared_ptr<std::atomic<int>> calls = nullptr) {
  return std::make_shared<dsex::FunctionEvaluator>(
      std::move(name), std::vector<std::string>{std::move(metric)},
      [f = std::move(f), calls](const dsex::Schema&, const dsex::Point& p) -> dsex::Result<dsex::MetricValues> {
        if (calls) ++*calls;
        return dsex::MetricValues{f(p.coords)};
      });
}

/// Random upward-closed threshold: keep iff sum_k w_k * c_k >= t with
/// positive weights, or its downward mirror.
struct MonotoneInstance {
  std::vector<int> sizes;
  std::vector<double> weights;
  double threshold = 0;
  bool upward = true;

  bool keep(const dsex::Coords& c) const {
    double s = 0;
    for (std::size_t k = 0; k < c.size(); ++k) s += weights[k] * c[k];
    return upward ? s >= threshold : s <= threshold;
  }
};

inline MonotoneInstance random_monotone(std::mt19937_64& rng, std::vector<int> sizes, bool upward) {
  MonotoneInstance m;
  m.sizes = std::move(sizes);
  m.upward = upward;
  std::uniform_real_distribution<double> w(0.2, 3.0);
  double max_sum = 0;
  for (int s : m.sizes) {
    m.weights.push_back(w(rng));
    max_sum += m.weights.back() * (s - 1);
  }
  std::uniform_real_distribution<double> t(0.05 * max_sum, 0.95 * max_sum);
  m.threshold = t(rng);
  return m;
}

}  // namespace testing

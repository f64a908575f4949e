#pragma once

#include <cstdint>
#include <string>

#include "dsex/metrics.hpp"
#include "dsex/simd/kernels.hpp"

namespace dsex::bsim {

/// Geometric Brownian motion constants. The defaults are fixture values.
struct ModelParams {
  double s0 = 100.0;
  double mu = 0.05;
  double sigma = 0.2;
  double T = 1.0;
};

/// Signed fixed point with `dynamic` integer bits and `precision` fraction bits.
struct FixedFormat {
  int dynamic = 16;
  int precision = 16;

  simd::QuantSpec spec() const;
  /// Largest representable magnitude, 2^dynamic - 2^-precision.
  double max_value() const;
  double quantize(double x) const;
  double quantize(double x, std::uint64_t& saturations) const;
};

struct BsConfig {
  int dynamic = 16;
  int precision = 16;
  std::int64_t nb_iteration = 1024;
  std::int64_t nb_euler = 64;
  std::int64_t nb_core = 64;  // latency only
  ModelParams model;
  std::uint64_t seed = 42;
};

/// E[S(T)] = S0 * exp(mu * T).
double closed_form(const ModelParams& m);

/// Combined Tausworthe generator (three-component LFSR, L'Ecuyer taus88
/// parameters). Seeded through splitmix64 so any 64-bit seed is usable.
class Tausworthe {
 public:
  explicit Tausworthe(std::uint64_t seed);
  std::uint32_t next();

 private:
  std::uint32_t s1_, s2_, s3_;
};

/// Box-Muller pair from two raw 32-bit draws.
std::pair<double, double> box_muller(std::uint32_t a, std::uint32_t b);

/// Standard normals for nb_iteration paths of nb_euler steps, drawn path by
/// path (so doubling nb_iteration extends the sample), returned step-major:
/// z[e * nb_iteration + i].
std::vector<double> normals(std::uint64_t seed, std::int64_t nb_iteration, std::int64_t nb_euler);

struct EulerResult {
  double estimate = 0.0;
  std::uint64_t saturations = 0;
};

/// Quantized Euler-Maruyama Monte-Carlo estimate of E[S(T)].
EulerResult euler_estimate(const BsConfig& cfg, const simd::KernelTable& kernels = simd::active_kernels());

/// Same draws, double arithmetic throughout.
double euler_reference(const BsConfig& cfg);

/// ceil(nb_iteration / nb_core) * nb_euler + overhead.
std::int64_t latency_cycles(std::int64_t nb_iteration, std::int64_t nb_euler, std::int64_t nb_core,
                            std::int64_t overhead = 0);

/// Seed for a configuration; nbCore is deliberately not an input.
std::uint64_t point_seed(std::int64_t dynamic, std::int64_t precision, std::int64_t nb_iteration,
                         std::int64_t nb_euler, std::uint64_t global_seed);

struct QosOptions {
  std::string name = "qos";
  ModelParams model;
  std::uint64_t global_seed = 42;
  /// Also produce `saturations`.
  bool diagnostics = false;
};

/// Produces `error`, the relative error of the estimate against closed_form.
/// Reads dynamic, precision, nbIteration and nbEuler from the point.
EvaluatorPtr qos_evaluator(QosOptions options);

/// Produces `latency_cycles` from nbIteration, nbEuler and nbCore.
EvaluatorPtr latency_evaluator(std::string name = "latency", std::int64_t overhead = 0);

}  // namespace dsex::bsim

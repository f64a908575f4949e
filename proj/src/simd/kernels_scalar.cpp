#include <cmath>

#include "dsex/simd/kernels.hpp"

namespace dsex::simd {

namespace {

inline double quantize_one(const QuantSpec& q, double x, std::uint64_t& sat) {
  double y = std::nearbyint(x * q.scale);
  if (y > q.max_q) {
    y = q.max_q;
    ++sat;
  } else if (y < -q.max_q) {
    y = -q.max_q;
    ++sat;
  }
  return y * q.inv_scale;
}

std::uint64_t quantize_span_scalar(const QuantSpec& q, double* x, std::size_t n) {
  std::uint64_t sat = 0;
  for (std::size_t i = 0; i < n; ++i) x[i] = quantize_one(q, x[i], sat);
  return sat;
}

std::uint64_t euler_step_scalar(const QuantSpec& q, double c, double vol, const double* z, double* s, std::size_t n) {
  std::uint64_t sat = 0;
  for (std::size_t i = 0; i < n; ++i) {
    double inc = quantize_one(q, vol * z[i], sat);
    double m = quantize_one(q, c + inc, sat);
    s[i] = quantize_one(q, s[i] * m, sat);
  }
  return sat;
}

}  // namespace

const KernelTable& scalar_kernels() {
  static const KernelTable table{"scalar", quantize_span_scalar, euler_step_scalar};
  return table;
}

}  // namespace dsex::simd

#pragma once

#include <cstddef>
#include <cstdint>

namespace dsex::simd {

/// Fixed-point grid: values are rounded to multiples of inv_scale (ties to
/// even) and clamped to [-max_q, max_q] in scaled units.
struct QuantSpec {
  double scale;
  double inv_scale;
  double max_q;
};

/// Quantizes x[0..n) in place. Returns the number of saturated elements.
using QuantizeSpanFn = std::uint64_t (*)(const QuantSpec& q, double* x, std::size_t n);

/// One Euler step over n paths: s[i] = q(s[i] * q(c + q(vol * z[i]))).
/// Returns the number of saturating quantizations.
using EulerStepFn = std::uint64_t (*)(const QuantSpec& q, double c, double vol, const double* z, double* s,
                                      std::size_t n);

struct KernelTable {
  const char* name;
  QuantizeSpanFn quantize_span;
  EulerStepFn euler_step;
};

const KernelTable& scalar_kernels();
/// Null when the CPU (or the build) lacks AVX2.
const KernelTable* avx2_kernels();
/// AVX2 when available unless DSEX_SIMD=scalar is set; chosen once.
const KernelTable& active_kernels();

}  // namespace dsex::simd

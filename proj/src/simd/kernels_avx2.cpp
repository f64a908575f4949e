#include <immintrin.h>

#include <cmath>

#include "dsex/simd/kernels.hpp"

namespace dsex::simd {

namespace {

constexpr int kRound = _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC;

struct Quantizer {
  __m256d scale, inv_scale, hi, lo;

  explicit Quantizer(const QuantSpec& q)
      : scale(_mm256_set1_pd(q.scale)),
        inv_scale(_mm256_set1_pd(q.inv_scale)),
        hi(_mm256_set1_pd(q.max_q)),
        lo(_mm256_set1_pd(-q.max_q)) {}

  __m256d operator()(__m256d x, std::uint64_t& sat) const {
    __m256d y = _mm256_round_pd(_mm256_mul_pd(x, scale), kRound);
    __m256d out = _mm256_or_pd(_mm256_cmp_pd(y, hi, _CMP_GT_OQ), _mm256_cmp_pd(y, lo, _CMP_LT_OQ));
    sat += static_cast<std::uint64_t>(__builtin_popcount(static_cast<unsigned>(_mm256_movemask_pd(out))));
    y = _mm256_min_pd(_mm256_max_pd(y, lo), hi);
    return _mm256_mul_pd(y, inv_scale);
  }
};

inline double quantize_tail(const QuantSpec& q, double x, std::uint64_t& sat) {
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

std::uint64_t quantize_span_avx2(const QuantSpec& q, double* x, std::size_t n) {
  const Quantizer quant(q);
  std::uint64_t sat = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) _mm256_storeu_pd(x + i, quant(_mm256_loadu_pd(x + i), sat));
  for (; i < n; ++i) x[i] = quantize_tail(q, x[i], sat);
  return sat;
}

std::uint64_t euler_step_avx2(const QuantSpec& q, double c, double vol, const double* z, double* s, std::size_t n) {
  const Quantizer quant(q);
  const __m256d vc = _mm256_set1_pd(c);
  const __m256d vv = _mm256_set1_pd(vol);
  std::uint64_t sat = 0;
  std::size_t i = 0;
  for (; i + 4 <= n; i += 4) {
    __m256d inc = quant(_mm256_mul_pd(vv, _mm256_loadu_pd(z + i)), sat);
    __m256d m = quant(_mm256_add_pd(vc, inc), sat);
    _mm256_storeu_pd(s + i, quant(_mm256_mul_pd(_mm256_loadu_pd(s + i), m), sat));
  }
  for (; i < n; ++i) {
    double inc = quantize_tail(q, vol * z[i], sat);
    double m = quantize_tail(q, c + inc, sat);
    s[i] = quantize_tail(q, s[i] * m, sat);
  }
  return sat;
}

}  // namespace

const KernelTable* avx2_kernels() {
  static const KernelTable table{"avx2", quantize_span_avx2, euler_step_avx2};
  static const bool supported = __builtin_cpu_supports("avx2");
  return supported ? &table : nullptr;
}

}  // namespace dsex::simd

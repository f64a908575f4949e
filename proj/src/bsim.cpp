#include "dsex/bsim.hpp"

#include <cmath>
#include <numbers>

namespace dsex::bsim {

namespace {

std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

constexpr double kTwoPow32 = 4294967296.0;

}  // namespace

simd::QuantSpec FixedFormat::spec() const {
  const double scale = std::ldexp(1.0, precision);
  return {scale, std::ldexp(1.0, -precision), std::ldexp(1.0, dynamic + precision) - 1.0};
}

double FixedFormat::max_value() const { return spec().max_q * spec().inv_scale; }

double FixedFormat::quantize(double x, std::uint64_t& saturations) const {
  simd::QuantSpec q = spec();
  saturations += simd::scalar_kernels().quantize_span(q, &x, 1);
  return x;
}

double FixedFormat::quantize(double x) const {
  std::uint64_t ignored = 0;
  return quantize(x, ignored);
}

double closed_form(const ModelParams& m) { return m.s0 * std::exp(m.mu * m.T); }

Tausworthe::Tausworthe(std::uint64_t seed) {
  std::uint64_t state = seed;
  // Each component needs its state above a small bound to stay out of the
  // degenerate all-zero cycle.
  s1_ = static_cast<std::uint32_t>(splitmix64(state)) | 0x2u;
  s2_ = static_cast<std::uint32_t>(splitmix64(state)) | 0x8u;
  s3_ = static_cast<std::uint32_t>(splitmix64(state)) | 0x10u;
}

std::uint32_t Tausworthe::next() {
  std::uint32_t b;
  b = ((s1_ << 13) ^ s1_) >> 19;
  s1_ = ((s1_ & 0xFFFFFFFEu) << 12) ^ b;
  b = ((s2_ << 2) ^ s2_) >> 25;
  s2_ = ((s2_ & 0xFFFFFFF8u) << 4) ^ b;
  b = ((s3_ << 3) ^ s3_) >> 11;
  s3_ = ((s3_ & 0xFFFFFFF0u) << 17) ^ b;
  return s1_ ^ s2_ ^ s3_;
}

std::pair<double, double> box_muller(std::uint32_t a, std::uint32_t b) {
  const double u1 = (static_cast<double>(a) + 1.0) / kTwoPow32;  // (0, 1]
  const double u2 = static_cast<double>(b) / kTwoPow32;          // [0, 1)
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  return {r * std::cos(theta), r * std::sin(theta)};
}

std::vector<double> normals(std::uint64_t seed, std::int64_t nb_iteration, std::int64_t nb_euler) {
  const auto n = static_cast<std::size_t>(nb_iteration);
  const auto e = static_cast<std::size_t>(nb_euler);
  std::vector<double> z(n * e);
  Tausworthe rng(seed);
  bool have_spare = false;
  double spare = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t k = 0; k < e; ++k) {
      double v;
      if (have_spare) {
        v = spare;
        have_spare = false;
      } else {
        std::uint32_t a = rng.next();
        std::uint32_t b = rng.next();
        auto [z0, z1] = box_muller(a, b);
        v = z0;
        spare = z1;
        have_spare = true;
      }
      z[k * n + i] = v;
    }
  return z;
}

EulerResult euler_estimate(const BsConfig& cfg, const simd::KernelTable& kernels) {
  const FixedFormat fmt{cfg.dynamic, cfg.precision};
  const simd::QuantSpec q = fmt.spec();
  const auto n = static_cast<std::size_t>(cfg.nb_iteration);
  const auto e = static_cast<std::size_t>(cfg.nb_euler);
  const ModelParams& m = cfg.model;

  EulerResult out;
  const double dt = m.T / static_cast<double>(cfg.nb_euler);
  // Euler-Maruyama on dS = mu S dt + sigma S dW. The log-space drift
  // mu - sigma^2/2 would converge to the median instead of E[S(T)].
  const double drift = fmt.quantize(m.mu * dt, out.saturations);
  const double vol = fmt.quantize(m.sigma * std::sqrt(dt), out.saturations);
  const double c = 1.0 + drift;
  const double s0 = fmt.quantize(m.s0, out.saturations);

  std::vector<double> z = normals(cfg.seed, cfg.nb_iteration, cfg.nb_euler);
  out.saturations += kernels.quantize_span(q, z.data(), z.size());

  std::vector<double> s(n, s0);
  for (std::size_t k = 0; k < e; ++k) out.saturations += kernels.euler_step(q, c, vol, z.data() + k * n, s.data(), n);

  // Path values are integers in scaled units, so the sum is exact.
  __int128 sum = 0;
  for (double v : s) sum += static_cast<__int128>(v * q.scale);
  const double mean = static_cast<double>(sum) * q.inv_scale / static_cast<double>(n);
  out.estimate = fmt.quantize(mean, out.saturations);
  return out;
}

double euler_reference(const BsConfig& cfg) {
  const auto n = static_cast<std::size_t>(cfg.nb_iteration);
  const auto e = static_cast<std::size_t>(cfg.nb_euler);
  const ModelParams& m = cfg.model;
  const double dt = m.T / static_cast<double>(cfg.nb_euler);
  const double drift = m.mu * dt;
  const double vol = m.sigma * std::sqrt(dt);
  std::vector<double> z = normals(cfg.seed, cfg.nb_iteration, cfg.nb_euler);
  std::vector<double> s(n, m.s0);
  for (std::size_t k = 0; k < e; ++k)
    for (std::size_t i = 0; i < n; ++i) s[i] *= 1.0 + drift + vol * z[k * n + i];
  double sum = 0.0;
  for (double v : s) sum += v;
  return sum / static_cast<double>(n);
}

std::int64_t latency_cycles(std::int64_t nb_iteration, std::int64_t nb_euler, std::int64_t nb_core,
                            std::int64_t overhead) {
  return (nb_iteration + nb_core - 1) / nb_core * nb_euler + overhead;
}

std::uint64_t point_seed(std::int64_t dynamic, std::int64_t precision, std::int64_t nb_iteration,
                         std::int64_t nb_euler, std::uint64_t global_seed) {
  std::uint64_t state = global_seed;
  std::uint64_t h = splitmix64(state);
  for (std::int64_t v : {dynamic, precision, nb_iteration, nb_euler}) {
    state = h ^ static_cast<std::uint64_t>(v);
    h = splitmix64(state);
  }
  return h;
}

namespace {

std::optional<std::int64_t> integer_param(const Schema& schema, const Point& point, std::string_view name,
                                          EvalError& err) {
  auto v = PointScope(schema, point).lookup(name);
  if (!v) {
    err = EvalError{EvalErrorKind::NameNotFound, std::string(name), point.coords, 0};
    return std::nullopt;
  }
  return static_cast<std::int64_t>(std::llround(*v));
}

class QosEvaluator final : public Evaluator {
 public:
  explicit QosEvaluator(QosOptions opts)
      : Evaluator(opts.name, opts.diagnostics ? std::vector<std::string>{"error", "saturations"}
                                              : std::vector<std::string>{"error"}),
        opts_(std::move(opts)) {}

  Result<MetricValues> evaluate(const Schema& schema, const Point& point) const override {
    EvalError err;
    std::int64_t raw[4];
    const char* names[4] = {"dynamic", "precision", "nbIteration", "nbEuler"};
    for (int k = 0; k < 4; ++k) {
      auto v = integer_param(schema, point, names[k], err);
      if (!v) return err;
      raw[k] = *v;
    }
    if (raw[0] < 1 || raw[0] > 40 || raw[1] < 1 || raw[1] > 40 || raw[2] < 1 || raw[3] < 1 ||
        raw[2] * raw[3] > (std::int64_t{1} << 26))
      return EvalError{EvalErrorKind::ToolFailure, "fixed-point configuration out of range", point.coords, 0};

    const double cf = closed_form(opts_.model);
    if (cf == 0.0) return EvalError{EvalErrorKind::DivByZero, "closed-form reference is zero", point.coords, 0};

    BsConfig cfg;
    cfg.dynamic = static_cast<int>(raw[0]);
    cfg.precision = static_cast<int>(raw[1]);
    cfg.nb_iteration = raw[2];
    cfg.nb_euler = raw[3];
    cfg.model = opts_.model;
    cfg.seed = point_seed(raw[0], raw[1], raw[2], raw[3], opts_.global_seed);
    EulerResult r = euler_estimate(cfg);
    MetricValues out{std::fabs(r.estimate - cf) / std::fabs(cf)};
    if (opts_.diagnostics) out.push_back(static_cast<double>(r.saturations));
    return out;
  }

 private:
  QosOptions opts_;
};

class LatencyEvaluator final : public Evaluator {
 public:
  LatencyEvaluator(std::string name, std::int64_t overhead)
      : Evaluator(std::move(name), {"latency_cycles"}), overhead_(overhead) {}

  Result<MetricValues> evaluate(const Schema& schema, const Point& point) const override {
    EvalError err;
    auto it = integer_param(schema, point, "nbIteration", err);
    if (!it) return err;
    auto eu = integer_param(schema, point, "nbEuler", err);
    if (!eu) return err;
    auto co = integer_param(schema, point, "nbCore", err);
    if (!co) return err;
    if (*co <= 0) return EvalError{EvalErrorKind::DivByZero, "nbCore must be positive", point.coords, 0};
    return MetricValues{static_cast<double>(latency_cycles(*it, *eu, *co, overhead_))};
  }

 private:
  std::int64_t overhead_;
};

}  // namespace

EvaluatorPtr qos_evaluator(QosOptions options) { return std::make_shared<QosEvaluator>(std::move(options)); }

EvaluatorPtr latency_evaluator(std::string name, std::int64_t overhead) {
  return std::make_shared<LatencyEvaluator>(std::move(name), overhead);
}

}  // namespace dsex::bsim

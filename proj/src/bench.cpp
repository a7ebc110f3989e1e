// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/bench.hpp"

#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <new>
#include <random>
#include <stdexcept>
#include <thread>

#include "invact/tape.hpp"

namespace invact {
namespace {

constexpr std::int64_t kPow10 = std::int64_t{1} << 10;
constexpr std::int64_t kPow15 = std::int64_t{1} << 15;
constexpr std::int64_t kPow25 = std::int64_t{1} << 25;

std::size_t available_memory_bytes() {
  const long pages = sysconf(_SC_AVPHYS_PAGES);
  const long page_size = sysconf(_SC_PAGE_SIZE);
  if (pages <= 0 || page_size <= 0) return 0;
  return static_cast<std::size_t>(pages) * static_cast<std::size_t>(page_size);
}

// Rough peak of one trial: inputs, weights, activations, gradients.
std::size_t working_set_bytes(const BenchPreset& p, std::size_t width) {
  const auto b = static_cast<std::size_t>(p.batch);
  const auto f = static_cast<std::size_t>(p.features);
  const auto h = static_cast<std::size_t>(p.hidden);
  switch (p.layout) {
    case BenchLayout::Plain: return b * width * 6;
    case BenchLayout::ActivationLinear: return (b * f * 8 + f * f * 2) * width;
    case BenchLayout::Mlp: return (b * f * 4 + b * h * 6 + f * h * 4) * width;
    case BenchLayout::Geglu: return (b * f * 4 + b * h * 10 + f * h * 4) * width;
  }
  return 0;
}

template <typename T>
Tensor<T> random_tensor(std::mt19937_64& rng, Shape shape, double scale) {
  std::normal_distribution<double> normal(0.0, scale);
  typename Tensor<T>::Array a(element_count(shape));
  for (auto& v : a) v = from_double<T>(normal(rng));
  return Tensor<T>(std::move(shape), std::move(a));
}

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

struct TrialResult {
  double seconds = 0.0;
  std::size_t saved_bytes = 0;
};

template <typename T>
class PlainRunner {
 public:
  PlainRunner(const BenchPreset& p, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    xs_ = random_tensor<T>(rng, Shape{p.batch}, 2.0);
    dys_ = random_tensor<T>(rng, Shape{p.batch}, 1.0);
  }

  TrialResult trial(const InvertedActivation<T>& layer) const {
    const auto start = Clock::now();
    auto [ys, ctx] = layer.forward(xs_);
    const auto dxs = layer.backward(ctx, dys_);
    TrialResult r{seconds_since(start), ctx.extra_bytes()};
    sink_ = dxs.size() + ys.size();
    return r;
  }

 private:
  Tensor<T> xs_, dys_;
  mutable Eigen::Index sink_ = 0;
};

template <typename S>
class BlockRunner {
 public:
  BlockRunner(const BenchPreset& p, std::uint64_t seed) : preset_(p) {
    std::mt19937_64 rng(seed);
    const double in_scale = 1.0 / std::sqrt(static_cast<double>(p.features));
    x_ = random_tensor<S>(rng, Shape{p.batch, p.features}, 1.0);
    switch (p.layout) {
      case BenchLayout::ActivationLinear:
        w1_ = random_tensor<S>(rng, Shape{p.features, p.features}, in_scale);
        b1_ = random_tensor<S>(rng, Shape{1, p.features}, in_scale);
        dy_ = random_tensor<S>(rng, Shape{p.batch, p.features}, 1.0);
        break;
      case BenchLayout::Mlp:
        w1_ = random_tensor<S>(rng, Shape{p.features, p.hidden}, in_scale);
        b1_ = random_tensor<S>(rng, Shape{1, p.hidden}, in_scale);
        w2_ = random_tensor<S>(rng, Shape{p.hidden, p.features}, 1.0 / std::sqrt(static_cast<double>(p.hidden)));
        b2_ = random_tensor<S>(rng, Shape{1, p.features}, in_scale);
        dy_ = random_tensor<S>(rng, Shape{p.batch, p.features}, 1.0);
        break;
      case BenchLayout::Geglu:
        w1_ = random_tensor<S>(rng, Shape{p.features, p.hidden}, in_scale);
        b1_ = random_tensor<S>(rng, Shape{1, p.hidden}, in_scale);
        w2_ = random_tensor<S>(rng, Shape{p.features, p.hidden}, in_scale);
        b2_ = random_tensor<S>(rng, Shape{1, p.hidden}, in_scale);
        dy_ = random_tensor<S>(rng, Shape{p.batch, p.hidden}, 1.0);
        break;
      case BenchLayout::Plain: throw std::logic_error("BlockRunner: plain layout");
    }
  }

  TrialResult trial(ActivationKind kind, const ActivationPolicy& policy, int threads) const {
    using Matrix = typename Tape<S>::Matrix;
    const auto start = Clock::now();
    Tape<S> tape(threads);
    const auto x = tape.input(x_);
    const auto w1 = tape.parameter(w1_);
    const auto b1 = tape.parameter(b1_);
    typename Tape<S>::Var out{};
    switch (preset_.layout) {
      case BenchLayout::ActivationLinear: {
        const auto a = tape.activation(x, kind, policy);
        out = tape.linear(a, w1, b1);
        break;
      }
      case BenchLayout::Mlp:
        out = mlp_block<S>(tape, x, {w1, b1}, {tape.parameter(w2_), tape.parameter(b2_)}, kind, policy);
        break;
      case BenchLayout::Geglu:
        out = geglu_block<S>(tape, x, {w1, b1}, {tape.parameter(w2_), tape.parameter(b2_)}, kind, policy);
        break;
      case BenchLayout::Plain: break;
    }
    tape.backward(out, Eigen::Map<const Matrix>(dy_.values().data(), dy_.shape()[0], dy_.shape()[1]));
    return {seconds_since(start), tape.saved_bytes()};
  }

 private:
  BenchPreset preset_;
  Tensor<S> x_, w1_, b1_, w2_, b2_, dy_;
};

template <typename Baseline, typename Variant>
void measure(const BenchOptions& opt, BenchReport& report, Baseline baseline, Variant variant) {
  for (int i = 0; i < opt.warmup; ++i) {
    baseline();
    variant();
  }
  std::vector<double> base_times, var_times;
  for (int i = 0; i < opt.trials; ++i) {
    const auto b = baseline();
    const auto v = variant();
    base_times.push_back(b.seconds);
    var_times.push_back(v.seconds);
    report.baseline_saved_bytes = b.saved_bytes;
    report.variant_saved_bytes = v.saved_bytes;
  }
  report.baseline = timing_stats(std::move(base_times));
  report.variant = timing_stats(std::move(var_times));
}

template <typename T>
void run_plain(const BenchOptions& opt, BenchReport& report) {
  const PlainRunner<T> runner(report.run, opt.seed);
  const InvertedActivation<T> base(opt.kind, Strategy::Baseline, opt.threads);
  const InvertedActivation<T> var(opt.kind, opt.strategy, opt.threads);
  measure(opt, report, [&] { return runner.trial(base); }, [&] { return runner.trial(var); });
}

template <typename S>
void run_block(const BenchOptions& opt, BenchReport& report) {
  const BlockRunner<S> runner(report.run, opt.seed);
  const auto base = ActivationPolicy::exact();
  const auto var = ActivationPolicy::inverted(opt.strategy);
  measure(opt, report, [&] { return runner.trial(opt.kind, base, opt.threads); },
          [&] { return runner.trial(opt.kind, var, opt.threads); });
}

void dispatch(const BenchOptions& opt, BenchReport& report) {
  if (report.run.layout == BenchLayout::Plain) {
    switch (opt.format) {
      case ElementFormat::Binary16: run_plain<Eigen::half>(opt, report); return;
      case ElementFormat::Binary32: run_plain<float>(opt, report); return;
      case ElementFormat::Binary64: run_plain<double>(opt, report); return;
    }
  }
  switch (opt.format) {
    case ElementFormat::Binary16:
      throw std::invalid_argument("bench: binary16 is only supported for the plain preset");
    case ElementFormat::Binary32: run_block<float>(opt, report); return;
    case ElementFormat::Binary64: run_block<double>(opt, report); return;
  }
}

}  // namespace

std::string_view to_string(BenchLayout layout) {
  switch (layout) {
    case BenchLayout::Plain: return "plain";
    case BenchLayout::ActivationLinear: return "act-linear";
    case BenchLayout::Mlp: return "mlp";
    case BenchLayout::Geglu: return "geglu";
  }
  return "?";
}

std::uint64_t BenchPreset::input_elements() const {
  return layout == BenchLayout::Plain ? static_cast<std::uint64_t>(batch)
                                      : static_cast<std::uint64_t>(batch) * static_cast<std::uint64_t>(features);
}

const std::vector<BenchPreset>& bench_presets() {
  static const std::vector<BenchPreset> all = {
      {"plain", BenchLayout::Plain, kPow25, 1, 1},
      {"act-linear", BenchLayout::ActivationLinear, kPow15, kPow10, kPow10},
      {"mlp", BenchLayout::Mlp, kPow15, kPow10, 4 * kPow10},
      {"geglu", BenchLayout::Geglu, kPow15, kPow10, 4 * kPow10},
  };
  return all;
}

const BenchPreset& find_preset(std::string_view name) {
  for (const auto& p : bench_presets()) {
    if (p.name == name) return p;
  }
  throw std::invalid_argument("unknown bench preset: " + std::string(name));
}

BenchPreset desk_scale(const BenchPreset& preset) {
  BenchPreset p = preset;
  switch (p.layout) {
    case BenchLayout::Plain: p.batch = std::min<std::int64_t>(p.batch, std::int64_t{1} << 22); break;
    case BenchLayout::ActivationLinear: p.batch = std::min<std::int64_t>(p.batch, std::int64_t{1} << 9); break;
    case BenchLayout::Mlp:
    case BenchLayout::Geglu: p.batch = std::min<std::int64_t>(p.batch, std::int64_t{1} << 7); break;
  }
  return p;
}

BlockSpec block_spec(const BenchPreset& p) {
  const auto b = static_cast<std::uint64_t>(p.batch);
  const auto f = static_cast<std::uint64_t>(p.features);
  const auto h = static_cast<std::uint64_t>(p.hidden);
  switch (p.layout) {
    case BenchLayout::Plain: return presets::plain_activation(b);
    case BenchLayout::ActivationLinear: return presets::activation_linear(f, b);
    case BenchLayout::Mlp: return presets::mlp_block(f, h / f, b);
    case BenchLayout::Geglu: return presets::geglu_block(f, h, b);
  }
  throw std::logic_error("block_spec: unknown layout");
}

TimingStats timing_stats(std::vector<double> seconds) {
  TimingStats s;
  s.seconds = std::move(seconds);
  if (s.seconds.empty()) return s;
  std::vector<double> sorted = s.seconds;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  s.median = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
  s.min = sorted.front();
  s.max = sorted.back();
  return s;
}

std::map<std::string, std::string> environment_metadata(int threads) {
  std::map<std::string, std::string> env;
  env["compiler"] = __VERSION__;
#ifdef NDEBUG
  env["build"] = "optimized";
#else
  env["build"] = "debug";
#endif
  env["eigen"] = std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                 std::to_string(EIGEN_MINOR_VERSION);
  env["simd"] = Eigen::SimdInstructionSetsInUse();
  env["hardware_threads"] = std::to_string(std::thread::hardware_concurrency());
  env["threads"] = std::to_string(threads);
  env["device"] = "cpu";
  return env;
}

BenchReport run_bench(const BenchOptions& options) {
  if (options.trials < 1) throw std::invalid_argument("bench: trials must be >= 1");
  if (options.warmup < 0) throw std::invalid_argument("bench: warmup must be >= 0");
  if (options.threads < 1) throw std::invalid_argument("bench: threads must be >= 1");
  if (options.strategy == Strategy::Baseline) throw std::invalid_argument("bench: compare a non-baseline strategy");

  BenchReport report;
  report.options = options;
  report.requested = find_preset(options.preset);
  report.run = options.full_scale ? report.requested : desk_scale(report.requested);
  report.environment = environment_metadata(options.threads);
  report.environment["scale"] = options.full_scale ? "full" : "desk";
  if (report.run.batch != report.requested.batch) {
    report.notes.push_back("desk scale: batch " + std::to_string(report.requested.batch) + " -> " +
                           std::to_string(report.run.batch));
  }

  const std::size_t width = format_width(options.format);
  const std::size_t budget = available_memory_bytes() / 2;
  const std::int64_t floor_batch = report.run.layout == BenchLayout::Plain ? std::int64_t{1} << 22 : 8;
  while (budget > 0 && working_set_bytes(report.run, width) > budget && report.run.batch > floor_batch) {
    report.run.batch /= 2;
    report.notes.push_back("memory-constrained: batch halved to " + std::to_string(report.run.batch));
  }

  for (;;) {
    try {
      dispatch(options, report);
      break;
    } catch (const std::bad_alloc&) {
      if (report.run.batch <= floor_batch) throw std::runtime_error("bench: allocation failed at the smallest batch");
      report.run.batch /= 2;
      report.notes.push_back("allocation failed: batch halved to " + std::to_string(report.run.batch));
    }
  }

  report.time_ratio = report.variant.median / report.baseline.median;
  report.low_confidence = options.trials == 1;
  if (report.run.layout != BenchLayout::Plain) {
    const auto spec = block_spec(report.run);
    report.estimate_baseline = estimate_memory(spec, Strategy::Baseline, options.format);
    report.estimate_variant = estimate_memory(spec, options.strategy, options.format);
    report.bytes_match_estimate = report.baseline_saved_bytes == report.estimate_baseline->baseline_total &&
                                  report.variant_saved_bytes == report.estimate_variant->invact_total;
  }
  return report;
}

}  // namespace invact

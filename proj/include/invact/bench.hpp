// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "invact/activation_math.hpp"
#include "invact/invact_layer.hpp"
#include "invact/memory.hpp"

namespace invact {

enum class BenchLayout { Plain, ActivationLinear, Mlp, Geglu };

std::string_view to_string(BenchLayout layout);

// `batch` rows of `features` inputs; `hidden` is the width after the first
// projection (Mlp, Geglu). Plain uses only `batch` as the element count.
struct BenchPreset {
  std::string name;
  BenchLayout layout = BenchLayout::Plain;
  std::int64_t batch = 0;
  std::int64_t features = 0;
  std::int64_t hidden = 0;

  std::uint64_t input_elements() const;
};

// Full-size shapes: plain 2^25; act-linear 2^15 x 2^10; mlp 2^15 x 2^10 x
// 4*2^10; geglu 2^15 x 2^10 -> 4*2^10.
const std::vector<BenchPreset>& bench_presets();
const BenchPreset& find_preset(std::string_view name);

// Single-core sizes: the plain batch drops to 2^22 and block batches shrink
// until one trial is a fraction of a second. Feature widths are unchanged.
BenchPreset desk_scale(const BenchPreset& preset);

BlockSpec block_spec(const BenchPreset& preset);

struct BenchOptions {
  std::string preset = "plain";
  ActivationKind kind = ActivationKind::Gelu;
  Strategy strategy = Strategy::Bitset;
  ElementFormat format = ElementFormat::Binary32;
  int trials = 20;
  int warmup = 3;
  int threads = 1;
  bool full_scale = false;
  std::uint64_t seed = 42;
};

struct TimingStats {
  std::vector<double> seconds;  // completed trials only
  double median = 0.0;
  double min = 0.0;
  double max = 0.0;
};

TimingStats timing_stats(std::vector<double> seconds);

struct BenchReport {
  BenchPreset requested;
  BenchPreset run;
  std::vector<std::string> notes;  // shrinking and other deviations from `requested`
  BenchOptions options;
  TimingStats baseline;
  TimingStats variant;
  double time_ratio = 0.0;  // variant median / baseline median
  bool low_confidence = false;
  std::size_t baseline_saved_bytes = 0;
  std::size_t variant_saved_bytes = 0;
  std::optional<MemoryEstimate> estimate_baseline;
  std::optional<MemoryEstimate> estimate_variant;
  bool bytes_match_estimate = false;
  std::map<std::string, std::string> environment;
};

// Forward + backward of the preset under Baseline and under
// `options.strategy`, trials interleaved.
BenchReport run_bench(const BenchOptions& options);

std::map<std::string, std::string> environment_metadata(int threads);

}  // namespace invact

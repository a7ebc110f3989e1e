// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/quant_baseline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "invact/kv_file.hpp"

namespace invact {
namespace {

// Derivative values of the grid sorted ascending, with their weights and
// extended-precision prefix sums.
struct SortedSamples {
  std::vector<double> d;
  std::vector<double> w;
  std::vector<long double> w_prefix;   // size n + 1
  std::vector<long double> wd_prefix;  // size n + 1
};

SortedSamples sorted_samples(ActivationKind kind, const WeightedGrid& grid) {
  const auto n = static_cast<std::size_t>(grid.x.size());
  std::vector<std::size_t> order(n);
  std::vector<double> deriv(n);
  for (std::size_t i = 0; i < n; ++i) deriv[i] = eval_derivative(kind, grid.x[static_cast<Eigen::Index>(i)]);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return deriv[a] < deriv[b]; });

  SortedSamples s;
  s.d.resize(n);
  s.w.resize(n);
  s.w_prefix.assign(n + 1, 0.0L);
  s.wd_prefix.assign(n + 1, 0.0L);
  for (std::size_t i = 0; i < n; ++i) {
    s.d[i] = deriv[order[i]];
    s.w[i] = grid.w[static_cast<Eigen::Index>(order[i])];
    s.w_prefix[i + 1] = s.w_prefix[i] + s.w[i];
    s.wd_prefix[i + 1] = s.wd_prefix[i] + static_cast<long double>(s.w[i]) * s.d[i];
  }
  return s;
}

// Prefix differences lose all precision for cells that only hold far-tail
// points of the normal measure; those are summed directly.
constexpr long double kDirectSumWeight = 1e-6L;

bool cell_mean(const SortedSamples& s, std::size_t begin, std::size_t end, double& mean) {
  if (begin >= end) return false;
  long double w = s.w_prefix[end] - s.w_prefix[begin];
  long double wd = s.wd_prefix[end] - s.wd_prefix[begin];
  if (w < kDirectSumWeight) {
    w = 0.0L;
    wd = 0.0L;
    for (std::size_t i = begin; i < end; ++i) {
      w += s.w[i];
      wd += static_cast<long double>(s.w[i]) * s.d[i];
    }
    if (!(w > 0.0L)) return false;
  }
  mean = static_cast<double>(wd / w);
  return true;
}

std::vector<double> midpoints(const std::vector<double>& levels) {
  std::vector<double> b(levels.size() - 1);
  for (std::size_t j = 0; j + 1 < levels.size(); ++j) b[j] = 0.5 * (levels[j] + levels[j + 1]);
  return b;
}

// splits[j] = number of samples with d < boundaries[j-1]; splits[0] = 0 and
// splits[L] = n.
std::vector<std::size_t> partition(const SortedSamples& s, const std::vector<double>& boundaries) {
  std::vector<std::size_t> splits(boundaries.size() + 2);
  splits.front() = 0;
  splits.back() = s.d.size();
  for (std::size_t j = 0; j < boundaries.size(); ++j) {
    splits[j + 1] = static_cast<std::size_t>(std::lower_bound(s.d.begin(), s.d.end(), boundaries[j]) - s.d.begin());
  }
  return splits;
}

WeightedGrid table_grid(const QuantizerTable& table, std::size_t grid_points) {
  return make_grid(table.measure, grid_points);
}

}  // namespace

std::uint8_t QuantizerTable::code_of_derivative(double derivative) const {
  return static_cast<std::uint8_t>(std::upper_bound(boundaries.begin(), boundaries.end(), derivative) -
                                   boundaries.begin());
}

QuantizerTable build_quantizer(ActivationKind kind, int bits, InputMeasure measure, std::size_t grid_points) {
  if (bits < 1 || bits > 8) throw std::invalid_argument("build_quantizer: bits must be in [1, 8]");
  const auto grid = make_grid(measure, grid_points);
  const auto samples = sorted_samples(kind, grid);
  const std::size_t count = std::size_t{1} << bits;

  QuantizerTable table;
  table.kind = kind;
  table.bits = bits;
  table.measure = measure;
  table.grid_points = grid_points;
  table.levels.resize(count);
  const double lo = samples.d.front();
  const double hi = samples.d.back();
  for (std::size_t j = 0; j < count; ++j) {
    table.levels[j] = lo + (static_cast<double>(j) + 0.5) * (hi - lo) / static_cast<double>(count);
  }

  std::vector<std::size_t> splits;
  for (std::size_t it = 1; it <= kQuantizerMaxIterations; ++it) {
    table.boundaries = midpoints(table.levels);
    auto next = partition(samples, table.boundaries);
    if (next == splits) {
      table.iterations = it - 1;
      for (std::size_t j = 1; j < table.boundaries.size(); ++j) {
        if (!(table.boundaries[j - 1] < table.boundaries[j])) {
          throw QuantizerConvergenceError("build_quantizer: boundaries not strictly increasing at index " +
                                          std::to_string(j));
        }
      }
      return table;
    }
    splits = std::move(next);
    for (std::size_t j = 0; j < count; ++j) {
      double mean = 0.0;
      if (cell_mean(samples, splits[j], splits[j + 1], mean)) table.levels[j] = mean;
    }
  }

  double largest_cell = 0.0;
  for (std::size_t j = 0; j < count; ++j) {
    largest_cell = std::max(largest_cell, static_cast<double>(splits[j + 1] - splits[j]));
  }
  std::ostringstream msg;
  msg << "build_quantizer: no fixed point after " << kQuantizerMaxIterations << " iterations (" << to_string(kind)
      << ", " << bits << " bits, " << to_string(measure) << " measure, " << grid_points
      << " nodes, largest cell " << largest_cell << " nodes)";
  throw QuantizerConvergenceError(msg.str());
}

FixedPointResidual fixed_point_residual(const QuantizerTable& table) {
  const auto grid = table_grid(table, table.grid_points);
  const auto samples = sorted_samples(table.kind, grid);
  const auto splits = partition(samples, table.boundaries);
  FixedPointResidual r;
  for (std::size_t j = 0; j < table.levels.size(); ++j) {
    double mean = 0.0;
    if (cell_mean(samples, splits[j], splits[j + 1], mean)) {
      r.centroid = std::max(r.centroid, std::fabs(mean - table.levels[j]));
    }
  }
  const auto& l = table.levels;
  for (double d : samples.d) {
    const std::size_t code = table.code_of_derivative(d);
    double best = std::fabs(d - l[code]);
    if (code > 0) best = std::min(best, std::fabs(d - l[code - 1]));
    if (code + 1 < l.size()) best = std::min(best, std::fabs(d - l[code + 1]));
    r.nearest_neighbour = std::max(r.nearest_neighbour, std::fabs(d - l[code]) - best);
  }
  return r;
}

ErrorReport quantizer_error(const QuantizerTable& table, std::size_t grid_points) {
  const auto grid = table_grid(table, grid_points);
  const Eigen::ArrayXd exact = grid.x.unaryExpr([&](double x) { return eval_derivative(table.kind, x); });
  const Eigen::ArrayXd quantized =
      exact.unaryExpr([&](double d) { return table.levels[table.code_of_derivative(d)]; });
  return weighted_error(grid, quantized, exact,
                        std::string(to_string(table.measure)) + " measure on x in [-12, 12], " +
                            std::to_string(grid_points) + " nodes");
}

ErrorReport quantizer_error(const QuantizerTable& table) { return quantizer_error(table, table.grid_points); }

void write_quantizer(std::ostream& out, const QuantizerTable& table) {
  KeyValueRecord rec;
  rec.set("kind", std::string(to_string(table.kind)));
  rec.set("bits", std::to_string(table.bits));
  rec.set("measure", std::string(to_string(table.measure)));
  rec.set("grid_points", std::to_string(table.grid_points));
  rec.set("iterations", std::to_string(table.iterations));
  for (std::size_t j = 0; j < table.levels.size(); ++j) rec.set("level" + std::to_string(j), table.levels[j]);
  for (std::size_t j = 0; j < table.boundaries.size(); ++j) {
    rec.set("boundary" + std::to_string(j), table.boundaries[j]);
  }
  write_records(out, {rec});
}

QuantizerTable read_quantizer(std::istream& in) {
  const auto records = read_records(in);
  if (records.size() != 1) throw std::invalid_argument("read_quantizer: expected exactly one record");
  const auto& rec = records.front();
  QuantizerTable table;
  table.kind = parse_activation_kind(rec.require("kind"));
  table.bits = static_cast<int>(rec.require_int("bits"));
  if (table.bits < 1 || table.bits > 8) throw std::invalid_argument("read_quantizer: bits must be in [1, 8]");
  table.measure = parse_input_measure(rec.require("measure"));
  table.grid_points = static_cast<std::size_t>(rec.get_int("grid_points", 0));
  table.iterations = static_cast<std::size_t>(rec.get_int("iterations", 0));
  const std::size_t count = std::size_t{1} << table.bits;
  for (std::size_t j = 0; j < count; ++j) table.levels.push_back(rec.require_double("level" + std::to_string(j)));
  for (std::size_t j = 0; j + 1 < count; ++j) {
    table.boundaries.push_back(rec.require_double("boundary" + std::to_string(j)));
    if (j > 0 && !(table.boundaries[j - 1] < table.boundaries[j])) {
      throw std::invalid_argument("read_quantizer: boundaries must be strictly increasing");
    }
  }
  return table;
}

}  // namespace invact

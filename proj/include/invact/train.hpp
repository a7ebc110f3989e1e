// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "invact/activation_math.hpp"
#include "invact/invact_layer.hpp"
#include "invact/kv_file.hpp"
#include "invact/measure.hpp"
#include "invact/tape.hpp"

namespace invact {

enum class Architecture { Mlp, GegluMlp };
enum class DatasetKind { SinRegression, TwoMoons };
enum class OptimizerKind { Sgd, Adam };

std::string_view to_string(Architecture a);
std::string_view to_string(DatasetKind d);
std::string_view to_string(OptimizerKind o);
Architecture parse_architecture(std::string_view text);
DatasetKind parse_dataset(std::string_view text);
OptimizerKind parse_optimizer(std::string_view text);

// Toy training setup. `seed` drives initialization and batch order; the
// dataset comes from `data_seed` and is the same for every run seed.
// The compared ("invact") arm uses `strategy`, or a `quant_bits`-bit
// quantizer of f' when quant_bits > 0.
struct TrainConfig {
  Architecture architecture = Architecture::Mlp;
  DatasetKind dataset = DatasetKind::SinRegression;
  int input_dim = 8;
  int hidden_dim = 64;
  int output_dim = 4;
  ActivationKind activation = ActivationKind::Gelu;
  Strategy strategy = Strategy::Bitset;
  int quant_bits = 0;
  InputMeasure quant_measure = InputMeasure::Uniform;
  int steps = 2000;
  int batch_size = 32;
  double learning_rate = 0.05;
  OptimizerKind optimizer = OptimizerKind::Sgd;
  std::uint64_t seed = 1;
  std::uint64_t data_seed = 20240601;
  int train_size = 1024;
  int val_size = 512;
  double noise = 0.05;
  int eval_every = 100;
  ElementFormat precision = ElementFormat::Binary64;

  void validate() const;
};

TrainConfig config_from_record(const KeyValueRecord& record);
KeyValueRecord to_record(const TrainConfig& cfg);
TrainConfig load_train_config(const std::string& path);

struct Dataset {
  Eigen::MatrixXd x_train, y_train, x_val, y_val;  // y is one-hot for classification
  std::vector<int> labels_train, labels_val;
};

Dataset make_dataset(const TrainConfig& cfg);

struct RunResult {
  std::string policy;
  std::vector<double> train_loss;                 // batch loss before each update
  std::vector<std::pair<int, double>> val_loss;   // (step, loss) every eval_every steps and at the end
  double final_val_loss = 0.0;
  bool diverged = false;
  int diverged_at = -1;
  std::uint64_t init_hash = 0;
  std::uint64_t schedule_hash = 0;
};

RunResult train(const TrainConfig& cfg, const ActivationPolicy& policy);

// The policy of the compared arm; quantizer tables are built once per
// (kind, bits, measure) and shared.
ActivationPolicy variant_policy(const TrainConfig& cfg);

struct TrajectoryPair {
  std::uint64_t seed = 0;
  std::string variant;
  std::vector<double> loss_exact;
  std::vector<double> loss_invact;
  double final_val_exact = 0.0;
  double final_val_invact = 0.0;
  bool diverged = false;
  std::string note;
  std::uint64_t init_hash = 0;
  std::uint64_t schedule_hash = 0;
};

// Exact activation vs the configured variant under one seed. Throws
// std::logic_error if the two runs did not share initialization and batch
// schedule byte for byte.
TrajectoryPair train_compare(const TrainConfig& cfg);
TrajectoryPair train_compare(const TrainConfig& cfg, const ActivationPolicy& reference,
                             const ActivationPolicy& variant);

// Paired statistics over seeds, per step.
struct EquivalenceSummary {
  std::size_t seeds = 0;
  std::size_t steps = 0;
  std::vector<double> mean_abs_delta;
  std::vector<double> std_exact;       // sample standard deviation across seeds
  double max_relative_gap = 0.0;       // max over steps and seeds of |delta| / loss_exact
  std::size_t steps_mean_below_std = 0;
  double worst_mean_to_std = 0.0;      // max over steps of mean_abs_delta / std_exact
};

EquivalenceSummary summarize(const std::vector<TrajectoryPair>& pairs);

void write_trajectories_csv(std::ostream& out, const std::vector<TrajectoryPair>& pairs);

inline constexpr std::string_view kTrajectoryCsvHeader = "step,loss_exact,loss_invact,seed";
inline constexpr std::string_view kTrajectoryCsvSchema = "# schema: invact-trajectories v1";

}  // namespace invact

// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

#include "invact/train.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <map>
#include <mutex>
#include <numbers>
#include <numeric>
#include <ostream>
#include <random>
#include <stdexcept>
#include <tuple>

namespace invact {
namespace {

class Fnv1a {
 public:
  void add(std::uint64_t word) {
    for (int i = 0; i < 8; ++i) {
      state_ ^= (word >> (8 * i)) & 0xffu;
      state_ *= 0x100000001b3ULL;
    }
  }
  std::uint64_t value() const { return state_; }

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

// Weights and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
std::vector<Eigen::MatrixXd> init_parameters(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed);
  auto uniform = [&](int rows, int cols, int fan_in) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    Eigen::MatrixXd m(rows, cols);
    for (Eigen::Index j = 0; j < m.cols(); ++j)
      for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = dist(rng);
    return m;
  };
  std::vector<Eigen::MatrixXd> params;
  params.push_back(uniform(cfg.input_dim, cfg.hidden_dim, cfg.input_dim));
  params.push_back(uniform(1, cfg.hidden_dim, cfg.input_dim));
  if (cfg.architecture == Architecture::GegluMlp) {
    params.push_back(uniform(cfg.input_dim, cfg.hidden_dim, cfg.input_dim));
    params.push_back(uniform(1, cfg.hidden_dim, cfg.input_dim));
  }
  params.push_back(uniform(cfg.hidden_dim, cfg.output_dim, cfg.hidden_dim));
  params.push_back(uniform(1, cfg.output_dim, cfg.hidden_dim));
  return params;
}

// Row indices for every step: each epoch is a fresh permutation, split into
// full batches.
std::vector<std::vector<int>> batch_schedule(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  std::vector<int> perm(static_cast<std::size_t>(cfg.train_size));
  std::vector<std::vector<int>> schedule;
  std::size_t cursor = perm.size();
  for (int step = 0; step < cfg.steps; ++step) {
    if (cursor + static_cast<std::size_t>(cfg.batch_size) > perm.size()) {
      std::iota(perm.begin(), perm.end(), 0);
      std::shuffle(perm.begin(), perm.end(), rng);
      cursor = 0;
    }
    schedule.emplace_back(perm.begin() + static_cast<std::ptrdiff_t>(cursor),
                          perm.begin() + static_cast<std::ptrdiff_t>(cursor + cfg.batch_size));
    cursor += static_cast<std::size_t>(cfg.batch_size);
  }
  return schedule;
}

template <typename Scalar>
class Model {
 public:
  using T = Tape<Scalar>;
  using Matrix = typename T::Matrix;

  Model(const TrainConfig& cfg, const std::vector<Eigen::MatrixXd>& init) : cfg_(cfg) {
    for (const auto& p : init) params_.push_back(p.cast<Scalar>());
  }

  // Returns the loss node.
  typename T::Var loss(T& tape, const Eigen::MatrixXd& x, const Eigen::MatrixXd& y, const std::vector<int>& labels,
                       const ActivationPolicy& policy) {
    vars_.clear();
    for (const auto& p : params_) vars_.push_back(tape.parameter(p));
    const auto in = tape.constant(x.cast<Scalar>());
    typename T::Var hidden{};
    std::size_t next = 0;
    if (cfg_.architecture == Architecture::Mlp) {
      const auto h = tape.linear(in, vars_[0], vars_[1]);
      hidden = tape.activation(h, cfg_.activation, policy);
      next = 2;
    } else {
      hidden = geglu_block<Scalar>(tape, in, {vars_[0], vars_[1]}, {vars_[2], vars_[3]}, cfg_.activation, policy);
      next = 4;
    }
    const auto out = tape.linear(hidden, vars_[next], vars_[next + 1]);
    if (cfg_.dataset == DatasetKind::SinRegression) return tape.mse_loss(out, tape.constant(y.cast<Scalar>()));
    return tape.cross_entropy_loss(out, labels);
  }

  std::vector<Matrix>& params() { return params_; }
  const std::vector<typename T::Var>& vars() const { return vars_; }

 private:
  const TrainConfig& cfg_;
  std::vector<Matrix> params_;
  std::vector<typename T::Var> vars_;
};

template <typename Scalar>
class OptimizerState {
 public:
  using Matrix = typename Tape<Scalar>::Matrix;

  explicit OptimizerState(const TrainConfig& cfg) : cfg_(cfg) {}

  void step(std::vector<Matrix>& params, const std::vector<Matrix>& grads) {
    const auto lr = static_cast<Scalar>(cfg_.learning_rate);
    if (cfg_.optimizer == OptimizerKind::Sgd) {
      for (std::size_t i = 0; i < params.size(); ++i) params[i] -= lr * grads[i];
      return;
    }
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.rows(), p.cols()));
        v_.push_back(Matrix::Zero(p.rows(), p.cols()));
      }
    }
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, t_);
    const double c2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = Scalar(beta1) * m_[i] + Scalar(1.0 - beta1) * grads[i];
      v_[i] = Scalar(beta2) * v_[i] + Scalar(1.0 - beta2) * grads[i].cwiseAbs2();
      const auto mhat = m_[i].array() / Scalar(c1);
      const auto vhat = v_[i].array() / Scalar(c2);
      params[i].array() -= lr * mhat / (vhat.sqrt() + Scalar(eps));
    }
  }

 private:
  const TrainConfig& cfg_;
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

Eigen::MatrixXd gather_rows(const Eigen::MatrixXd& m, const std::vector<int>& rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(rows[i]);
  return out;
}

std::vector<int> gather(const std::vector<int>& v, const std::vector<int>& rows) {
  std::vector<int> out;
  if (v.empty()) return out;
  for (int r : rows) out.push_back(v[static_cast<std::size_t>(r)]);
  return out;
}

template <typename Scalar>
double validation_loss(Model<Scalar>& model, const Dataset& data) {
  Tape<Scalar> tape;
  const auto loss = model.loss(tape, data.x_val, data.y_val, data.labels_val, ActivationPolicy::exact());
  return static_cast<double>(tape.scalar(loss));
}

template <typename Scalar>
RunResult train_impl(const TrainConfig& cfg, const ActivationPolicy& policy) {
  const Dataset data = make_dataset(cfg);
  const auto init = init_parameters(cfg);
  const auto schedule = batch_schedule(cfg);

  RunResult run;
  run.policy = policy.label();
  Fnv1a init_hash;
  for (const auto& p : init)
    for (Eigen::Index i = 0; i < p.size(); ++i) init_hash.add(std::bit_cast<std::uint64_t>(p.data()[i]));
  run.init_hash = init_hash.value();
  Fnv1a schedule_hash;
  for (const auto& batch : schedule)
    for (int r : batch) schedule_hash.add(static_cast<std::uint64_t>(r));
  run.schedule_hash = schedule_hash.value();

  Model<Scalar> model(cfg, init);
  OptimizerState<Scalar> opt(cfg);
  std::vector<typename Tape<Scalar>::Matrix> grads;
  for (int step = 0; step < cfg.steps; ++step) {
    const auto& rows = schedule[static_cast<std::size_t>(step)];
    Tape<Scalar> tape;
    const auto loss = model.loss(tape, gather_rows(data.x_train, rows), gather_rows(data.y_train, rows),
                                 gather(data.labels_train, rows), policy);
    const double value = static_cast<double>(tape.scalar(loss));
    if (!std::isfinite(value)) {
      run.diverged = true;
      run.diverged_at = step;
      break;
    }
    run.train_loss.push_back(value);
    tape.backward(loss);
    grads.clear();
    for (const auto& v : model.vars()) grads.push_back(tape.grad(v));
    opt.step(model.params(), grads);
    if (cfg.eval_every > 0 && (step + 1) % cfg.eval_every == 0 && step + 1 < cfg.steps) {
      run.val_loss.emplace_back(step + 1, validation_loss(model, data));
    }
  }
  run.final_val_loss = validation_loss(model, data);
  if (!std::isfinite(run.final_val_loss) && !run.diverged) {
    run.diverged = true;
    run.diverged_at = cfg.steps;
  }
  run.val_loss.emplace_back(static_cast<int>(run.train_loss.size()), run.final_val_loss);
  return run;
}

}  // namespace

std::string_view to_string(Architecture a) { return a == Architecture::Mlp ? "mlp" : "geglu-mlp"; }
std::string_view to_string(DatasetKind d) { return d == DatasetKind::SinRegression ? "sin-regression" : "two-moons"; }
std::string_view to_string(OptimizerKind o) { return o == OptimizerKind::Sgd ? "sgd" : "adam"; }

Architecture parse_architecture(std::string_view text) {
  if (text == "mlp") return Architecture::Mlp;
  if (text == "geglu-mlp" || text == "geglu") return Architecture::GegluMlp;
  throw std::invalid_argument("unknown architecture: " + std::string(text));
}

DatasetKind parse_dataset(std::string_view text) {
  if (text == "sin-regression" || text == "sin") return DatasetKind::SinRegression;
  if (text == "two-moons" || text == "moons") return DatasetKind::TwoMoons;
  throw std::invalid_argument("unknown dataset: " + std::string(text));
}

OptimizerKind parse_optimizer(std::string_view text) {
  if (text == "sgd") return OptimizerKind::Sgd;
  if (text == "adam") return OptimizerKind::Adam;
  throw std::invalid_argument("unknown optimizer: " + std::string(text));
}

void TrainConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("TrainConfig: ") + what);
  };
  require(steps >= 1, "steps must be >= 1");
  require(input_dim >= 1 && hidden_dim >= 1 && output_dim >= 1, "widths must be >= 1");
  require(batch_size >= 1 && batch_size <= train_size, "batch_size must be in [1, train_size]");
  require(val_size >= 1, "val_size must be >= 1");
  require(learning_rate > 0.0 && std::isfinite(learning_rate), "learning_rate must be positive");
  require(quant_bits >= 0 && quant_bits <= 8, "quant_bits must be in [0, 8]");
  require(noise >= 0.0, "noise must be >= 0");
  require(precision != ElementFormat::Binary16, "training runs in binary64 or binary32");
  if (dataset == DatasetKind::TwoMoons) require(input_dim == 2 && output_dim == 2, "two-moons needs 2 -> 2 widths");
}

TrainConfig config_from_record(const KeyValueRecord& r) {
  TrainConfig cfg;
  cfg.dataset = parse_dataset(r.get("dataset", std::string(to_string(cfg.dataset))));
  if (cfg.dataset == DatasetKind::TwoMoons) {
    cfg.input_dim = 2;
    cfg.output_dim = 2;
  }
  cfg.architecture = parse_architecture(r.get("architecture", std::string(to_string(cfg.architecture))));
  cfg.input_dim = static_cast<int>(r.get_int("input_dim", cfg.input_dim));
  cfg.hidden_dim = static_cast<int>(r.get_int("hidden_dim", cfg.hidden_dim));
  cfg.output_dim = static_cast<int>(r.get_int("output_dim", cfg.output_dim));
  cfg.activation = parse_activation_kind(r.get("activation", std::string(to_string(cfg.activation))));
  cfg.strategy = parse_strategy(r.get("strategy", std::string(to_string(cfg.strategy))));
  cfg.quant_bits = static_cast<int>(r.get_int("quant_bits", cfg.quant_bits));
  cfg.quant_measure = parse_input_measure(r.get("quant_measure", std::string(to_string(cfg.quant_measure))));
  cfg.steps = static_cast<int>(r.get_int("steps", cfg.steps));
  cfg.batch_size = static_cast<int>(r.get_int("batch_size", cfg.batch_size));
  cfg.learning_rate = r.get_double("learning_rate", cfg.learning_rate);
  cfg.optimizer = parse_optimizer(r.get("optimizer", std::string(to_string(cfg.optimizer))));
  cfg.seed = static_cast<std::uint64_t>(r.get_int("seed", static_cast<long long>(cfg.seed)));
  cfg.data_seed = static_cast<std::uint64_t>(r.get_int("data_seed", static_cast<long long>(cfg.data_seed)));
  cfg.train_size = static_cast<int>(r.get_int("train_size", cfg.train_size));
  cfg.val_size = static_cast<int>(r.get_int("val_size", cfg.val_size));
  cfg.noise = r.get_double("noise", cfg.noise);
  cfg.eval_every = static_cast<int>(r.get_int("eval_every", cfg.eval_every));
  cfg.precision = parse_element_format(r.get("precision", std::string(to_string(cfg.precision))));
  for (const auto& [key, value] : r.entries()) {
    static const char* known[] = {"dataset",    "architecture", "input_dim", "hidden_dim", "output_dim",
                                  "activation", "strategy",     "quant_bits", "quant_measure", "steps",
                                  "batch_size", "learning_rate", "optimizer", "seed",       "data_seed",
                                  "train_size", "val_size",     "noise",     "eval_every", "precision"};
    if (std::find_if(std::begin(known), std::end(known), [&](const char* k) { return key == k; }) ==
        std::end(known)) {
      throw std::invalid_argument("TrainConfig: unknown key '" + key + "'");
    }
  }
  cfg.validate();
  return cfg;
}

KeyValueRecord to_record(const TrainConfig& cfg) {
  KeyValueRecord r;
  r.set("architecture", std::string(to_string(cfg.architecture)));
  r.set("dataset", std::string(to_string(cfg.dataset)));
  r.set("input_dim", std::to_string(cfg.input_dim));
  r.set("hidden_dim", std::to_string(cfg.hidden_dim));
  r.set("output_dim", std::to_string(cfg.output_dim));
  r.set("activation", std::string(to_string(cfg.activation)));
  r.set("strategy", std::string(to_string(cfg.strategy)));
  r.set("quant_bits", std::to_string(cfg.quant_bits));
  r.set("quant_measure", std::string(to_string(cfg.quant_measure)));
  r.set("steps", std::to_string(cfg.steps));
  r.set("batch_size", std::to_string(cfg.batch_size));
  r.set("learning_rate", cfg.learning_rate);
  r.set("optimizer", std::string(to_string(cfg.optimizer)));
  r.set("seed", std::to_string(cfg.seed));
  r.set("data_seed", std::to_string(cfg.data_seed));
  r.set("train_size", std::to_string(cfg.train_size));
  r.set("val_size", std::to_string(cfg.val_size));
  r.set("noise", cfg.noise);
  r.set("eval_every", std::to_string(cfg.eval_every));
  r.set("precision", std::string(to_string(cfg.precision)));
  return r;
}

TrainConfig load_train_config(const std::string& path) {
  const auto records = read_records_file(path);
  if (records.size() != 1) throw std::invalid_argument("train config " + path + ": expected exactly one record");
  return config_from_record(records.front());
}

Dataset make_dataset(const TrainConfig& cfg) {
  std::mt19937_64 rng(cfg.data_seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  Dataset d;
  const int n = cfg.train_size + cfg.val_size;
  Eigen::MatrixXd x(n, cfg.input_dim);
  Eigen::MatrixXd y(n, cfg.output_dim);
  std::vector<int> labels;

  if (cfg.dataset == DatasetKind::SinRegression) {
    Eigen::MatrixXd w(cfg.input_dim, cfg.output_dim);
    const double scale = 1.0 / std::sqrt(static_cast<double>(cfg.input_dim));
    for (Eigen::Index j = 0; j < w.cols(); ++j)
      for (Eigen::Index i = 0; i < w.rows(); ++i) w(i, j) = normal(rng) * scale;
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      for (Eigen::Index i = 0; i < x.rows(); ++i) x(i, j) = normal(rng);
    y = (x * w).array().sin().matrix();
    for (Eigen::Index j = 0; j < y.cols(); ++j)
      for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, j) += cfg.noise * normal(rng);
  } else {
    std::uniform_real_distribution<double> angle(0.0, std::numbers::pi);
    std::bernoulli_distribution coin(0.5);
    y.setZero();
    for (int i = 0; i < n; ++i) {
      const int label = coin(rng) ? 1 : 0;
      const double t = angle(rng);
      const double px = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
      const double py = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
      x(i, 0) = px + cfg.noise * normal(rng);
      x(i, 1) = py + cfg.noise * normal(rng);
      y(i, label) = 1.0;
      labels.push_back(label);
    }
  }

  d.x_train = x.topRows(cfg.train_size);
  d.y_train = y.topRows(cfg.train_size);
  d.x_val = x.bottomRows(cfg.val_size);
  d.y_val = y.bottomRows(cfg.val_size);
  if (!labels.empty()) {
    d.labels_train.assign(labels.begin(), labels.begin() + cfg.train_size);
    d.labels_val.assign(labels.begin() + cfg.train_size, labels.end());
  }
  return d;
}

RunResult train(const TrainConfig& cfg, const ActivationPolicy& policy) {
  cfg.validate();
  if (cfg.precision == ElementFormat::Binary32) return train_impl<float>(cfg, policy);
  return train_impl<double>(cfg, policy);
}

ActivationPolicy variant_policy(const TrainConfig& cfg) {
  if (cfg.quant_bits == 0) return ActivationPolicy::inverted(cfg.strategy);
  static std::mutex mutex;
  static std::map<std::tuple<ActivationKind, int, InputMeasure>, std::shared_ptr<const QuantizerTable>> cache;
  const std::lock_guard lock(mutex);
  auto& slot = cache[{cfg.activation, cfg.quant_bits, cfg.quant_measure}];
  if (!slot) {
    slot = std::make_shared<const QuantizerTable>(build_quantizer(cfg.activation, cfg.quant_bits, cfg.quant_measure));
  }
  return ActivationPolicy::quantized(slot);
}

TrajectoryPair train_compare(const TrainConfig& cfg) {
  return train_compare(cfg, ActivationPolicy::exact(), variant_policy(cfg));
}

TrajectoryPair train_compare(const TrainConfig& cfg, const ActivationPolicy& reference,
                             const ActivationPolicy& variant) {
  const RunResult a = train(cfg, reference);
  const RunResult b = train(cfg, variant);
  if (a.init_hash != b.init_hash || a.schedule_hash != b.schedule_hash) {
    throw std::logic_error("train_compare: runs did not share initialization and batch schedule");
  }
  TrajectoryPair pair;
  pair.seed = cfg.seed;
  pair.variant = variant.label();
  pair.init_hash = a.init_hash;
  pair.schedule_hash = a.schedule_hash;
  const std::size_t n = std::min(a.train_loss.size(), b.train_loss.size());
  pair.loss_exact.assign(a.train_loss.begin(), a.train_loss.begin() + static_cast<std::ptrdiff_t>(n));
  pair.loss_invact.assign(b.train_loss.begin(), b.train_loss.begin() + static_cast<std::ptrdiff_t>(n));
  pair.final_val_exact = a.final_val_loss;
  pair.final_val_invact = b.final_val_loss;
  pair.diverged = a.diverged || b.diverged;
  if (a.diverged) pair.note += "exact run diverged at step " + std::to_string(a.diverged_at) + "; ";
  if (b.diverged) pair.note += variant.label() + " run diverged at step " + std::to_string(b.diverged_at) + "; ";
  return pair;
}

EquivalenceSummary summarize(const std::vector<TrajectoryPair>& pairs) {
  EquivalenceSummary s;
  s.seeds = pairs.size();
  if (pairs.empty()) return s;
  s.steps = pairs.front().loss_exact.size();
  for (const auto& p : pairs) s.steps = std::min(s.steps, p.loss_exact.size());
  s.mean_abs_delta.assign(s.steps, 0.0);
  s.std_exact.assign(s.steps, 0.0);
  const auto k = static_cast<double>(pairs.size());
  for (std::size_t t = 0; t < s.steps; ++t) {
    double mean = 0.0;
    for (const auto& p : pairs) {
      const double delta = std::fabs(p.loss_exact[t] - p.loss_invact[t]);
      s.mean_abs_delta[t] += delta / k;
      mean += p.loss_exact[t] / k;
      s.max_relative_gap = std::max(s.max_relative_gap, delta / std::fabs(p.loss_exact[t]));
    }
    double var = 0.0;
    for (const auto& p : pairs) var += (p.loss_exact[t] - mean) * (p.loss_exact[t] - mean);
    s.std_exact[t] = pairs.size() > 1 ? std::sqrt(var / (k - 1.0)) : 0.0;
    if (s.mean_abs_delta[t] < s.std_exact[t]) ++s.steps_mean_below_std;
    const double ratio = s.std_exact[t] > 0.0 ? s.mean_abs_delta[t] / s.std_exact[t] : INFINITY;
    s.worst_mean_to_std = std::max(s.worst_mean_to_std, ratio);
  }
  return s;
}

void write_trajectories_csv(std::ostream& out, const std::vector<TrajectoryPair>& pairs) {
  out << kTrajectoryCsvSchema << '\n' << kTrajectoryCsvHeader << '\n';
  for (const auto& p : pairs) {
    for (std::size_t t = 0; t < p.loss_exact.size(); ++t) {
      out << t << ',' << format_double(p.loss_exact[t]) << ',' << format_double(p.loss_invact[t]) << ',' << p.seed
          << '\n';
    }
  }
}

}  // namespace invact

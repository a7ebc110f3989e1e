// Copyright 2026 The InvAct Authors
// SPDX-License-Identifier: Apache-2.0

// invact_cli: error reports, gradient checks, paired training runs, memory
// estimates and throughput benchmarks.
//
// Exit codes: 0 success, 1 usage error, 2 runtime failure.
// Without --out, results go to $INVACT_OUTPUT_DIR/<command>.<ext> when that
// variable is set, and to stdout otherwise.

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "invact/activation_math.hpp"
#include "invact/bench.hpp"
#include "invact/gradcheck.hpp"
#include "invact/kv_file.hpp"
#include "invact/measure.hpp"
#include "invact/memory.hpp"
#include "invact/quant_baseline.hpp"
#include "invact/train.hpp"

namespace {

using json = nlohmann::ordered_json;
using namespace invact;

constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

constexpr const char* kApproxCsvSchema = "# schema: invact-approx-error v1";
constexpr const char* kApproxCsvHeader = "kind,measure,method,bits,branch,metric,value";

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Owns the output stream for one command.
class Output {
 public:
  Output(const std::string& out, const std::string& default_name) {
    std::string path = out;
    if (path.empty()) {
      if (const char* dir = std::getenv("INVACT_OUTPUT_DIR"); dir != nullptr && *dir != '\0') {
        std::filesystem::create_directories(dir);
        path = (std::filesystem::path(dir) / default_name).string();
      }
    }
    if (!path.empty()) {
      file_ = std::make_unique<std::ofstream>(path);
      if (!*file_) throw std::runtime_error("cannot open output file " + path);
      path_ = path;
    }
  }

  std::ostream& stream() { return file_ ? *file_ : std::cout; }
  const std::string& path() const { return path_; }

 private:
  std::unique_ptr<std::ofstream> file_;
  std::string path_;
};

std::vector<ActivationKind> kinds_from(const std::string& text) {
  if (text == "both" || text == "all") return {ActivationKind::Gelu, ActivationKind::Silu};
  return {parse_activation_kind(text)};
}

json report_json(const ErrorReport& r) {
  return {{"l2", r.l2}, {"linf", r.linf}, {"points", r.points}, {"grid", r.grid_spec}};
}

// ---- approx-error ---------------------------------------------------------

struct ApproxArgs {
  std::string kind = "both";
  std::string branch = "both";
  std::string measure = "both";
  std::size_t points = 100001;
  int max_bits = 8;
  std::string out;
};

int cmd_approx_error(const ApproxArgs& a) {
  std::vector<Branch> branches;
  if (a.branch == "both") {
    branches = {Branch::Left, Branch::Right};
  } else {
    branches = {parse_branch(a.branch)};
  }
  std::vector<InputMeasure> measures;
  if (a.measure == "both") {
    measures = {InputMeasure::Uniform, InputMeasure::StandardNormal};
  } else {
    measures = {parse_input_measure(a.measure)};
  }
  if (a.points < 2) throw UsageError("--points must be >= 2");
  if (a.max_bits < 1 || a.max_bits > 8) throw UsageError("--max-bits must be in [1, 8]");

  Output out(a.out, "approx-error.csv");
  auto& os = out.stream();
  os << kApproxCsvSchema << '\n' << kApproxCsvHeader << '\n';
  auto row = [&](ActivationKind kind, std::string_view measure, std::string_view method, const std::string& bits,
                 std::string_view branch, const ErrorReport& r) {
    os << to_string(kind) << ',' << measure << ',' << method << ',' << bits << ',' << branch << ",l2,"
       << format_double(r.l2) << '\n';
    os << to_string(kind) << ',' << measure << ',' << method << ',' << bits << ',' << branch << ",linf,"
       << format_double(r.linf) << '\n';
  };

  for (const auto kind : kinds_from(a.kind)) {
    for (const auto measure : measures) {
      const auto out_measure =
          measure == InputMeasure::Uniform ? OutputMeasure::UniformGrid : OutputMeasure::GaussianPushforward;
      for (const auto branch : branches) {
        row(kind, to_string(out_measure), "invact", "", to_string(branch),
            approx_error(kind, branch, a.points, out_measure));
      }
      row(kind, to_string(measure), "invact", "", "combined", invact_error(kind, measure, a.points));
      for (int bits = 1; bits <= a.max_bits; ++bits) {
        const auto table = build_quantizer(kind, bits, measure, a.points);
        row(kind, to_string(measure), "lloyd-max", std::to_string(bits), "combined", quantizer_error(table));
      }
    }
  }
  return 0;
}

// ---- bench ----------------------------------------------------------------

json bench_json(const BenchReport& r) {
  auto preset = [](const BenchPreset& p) {
    return json{{"name", p.name},
                {"layout", to_string(p.layout)},
                {"batch", p.batch},
                {"features", p.features},
                {"hidden", p.hidden}};
  };
  auto timing = [](const TimingStats& t) {
    return json{{"median_s", t.median}, {"min_s", t.min}, {"max_s", t.max}, {"trials", t.seconds.size()},
                {"samples_s", t.seconds}};
  };
  json j{{"schema", "invact-bench v1"},
         {"requested", preset(r.requested)},
         {"run", preset(r.run)},
         {"notes", r.notes},
         {"kind", to_string(r.options.kind)},
         {"strategy", to_string(r.options.strategy)},
         {"format", to_string(r.options.format)},
         {"warmup", r.options.warmup},
         {"threads", r.options.threads},
         {"baseline", timing(r.baseline)},
         {"variant", timing(r.variant)},
         {"time_ratio", r.time_ratio},
         {"low_confidence", r.low_confidence},
         {"saved_bytes", {{"baseline", r.baseline_saved_bytes}, {"variant", r.variant_saved_bytes}}}};
  if (r.estimate_baseline && r.estimate_variant) {
    j["estimate"] = {{"baseline", r.estimate_baseline->baseline_total},
                     {"variant", r.estimate_variant->invact_total},
                     {"matches_measured", r.bytes_match_estimate}};
  }
  j["environment"] = r.environment;
  return j;
}

struct BenchArgs {
  std::string preset = "plain";
  std::string kind = "gelu";
  std::string strategy = "bitset";
  std::string format = "binary32";
  int trials = 20;
  int warmup = 3;
  int threads = 1;
  bool full_scale = false;
  std::string out;
};

int cmd_bench(const BenchArgs& a) {
  std::vector<std::string> names;
  if (a.preset == "all") {
    for (const auto& p : bench_presets()) names.push_back(p.name);
  } else {
    find_preset(a.preset);
    names.push_back(a.preset);
  }
  json reports = json::array();
  for (const auto& name : names) {
    BenchOptions opt;
    opt.preset = name;
    opt.kind = parse_activation_kind(a.kind);
    opt.strategy = parse_strategy(a.strategy);
    opt.format = parse_element_format(a.format);
    opt.trials = a.trials;
    opt.warmup = a.warmup;
    opt.threads = a.threads;
    opt.full_scale = a.full_scale;
    const auto report = run_bench(opt);
    std::cerr << name << ": " << to_string(opt.strategy) << "/baseline median ratio " << report.time_ratio
              << (report.low_confidence ? " (low confidence: single trial)" : "") << '\n';
    reports.push_back(bench_json(report));
  }
  Output out(a.out, "bench.json");
  out.stream() << (reports.size() == 1 ? reports[0] : reports).dump(2) << '\n';
  return 0;
}

// ---- train-compare --------------------------------------------------------

struct TrainArgs {
  std::string config;
  int seeds = 16;
  std::uint64_t first_seed = 1;
  std::string out;
};

int cmd_train_compare(const TrainArgs& a) {
  if (a.seeds < 1) throw UsageError("--seeds must be >= 1");
  const TrainConfig base = load_train_config(a.config);
  std::vector<TrajectoryPair> pairs;
  json runs = json::array();
  for (int i = 0; i < a.seeds; ++i) {
    TrainConfig cfg = base;
    cfg.seed = a.first_seed + static_cast<std::uint64_t>(i);
    auto pair = train_compare(cfg);
    runs.push_back({{"seed", pair.seed},
                    {"final_val_exact", pair.final_val_exact},
                    {"final_val_variant", pair.final_val_invact},
                    {"diverged", pair.diverged},
                    {"note", pair.note}});
    pairs.push_back(std::move(pair));
  }
  Output out(a.out, "train-compare.csv");
  write_trajectories_csv(out.stream(), pairs);

  const auto s = summarize(pairs);
  json summary{{"variant", pairs.front().variant},
               {"seeds", s.seeds},
               {"steps", s.steps},
               {"max_relative_gap", s.max_relative_gap},
               {"steps_mean_delta_below_std", s.steps_mean_below_std},
               {"worst_mean_delta_to_std", s.worst_mean_to_std},
               {"runs", runs}};
  (out.path().empty() ? std::cerr : std::cout) << summary.dump(2) << '\n';
  return 0;
}

// ---- gradcheck ------------------------------------------------------------

int cmd_gradcheck(const std::string& target, double tol, double h) {
  std::vector<std::string> targets = target == "all" ? gradcheck_targets() : std::vector<std::string>{target};
  bool ok = true;
  json results = json::array();
  for (const auto& t : targets) {
    const auto r = run_gradcheck_target(t, tol, h);
    ok = ok && r.passed;
    results.push_back({{"target", r.target},
                       {"dimension", r.dimension},
                       {"h", r.h},
                       {"tol", r.tol},
                       {"max_abs_error", r.max_abs_error},
                       {"max_rel_error", r.max_rel_error},
                       {"worst_index", r.worst_index},
                       {"passed", r.passed}});
  }
  std::cout << results.dump(2) << '\n';
  return ok ? 0 : kExitRuntime;
}

// ---- memory ---------------------------------------------------------------

struct MemoryArgs {
  std::string spec;
  std::string preset;
  std::string strategy = "bitset";
  std::string format = "binary16";
  std::string out;
};

int cmd_memory(const MemoryArgs& a) {
  BlockSpec block;
  if (!a.spec.empty()) {
    const auto records = read_records_file(a.spec);
    if (records.size() != 1) throw UsageError("memory spec " + a.spec + ": expected exactly one record");
    block = block_from_record(records.front());
  } else if (!a.preset.empty()) {
    KeyValueRecord r;
    r.set("block", a.preset);
    block = block_from_record(r);
  } else {
    throw UsageError("memory: one of --spec or --preset is required");
  }
  const auto est = estimate_memory(block, parse_strategy(a.strategy), parse_element_format(a.format));
  json layers = json::array();
  for (const auto& l : est.per_layer) {
    layers.push_back({{"layer", l.layer}, {"baseline_bytes", l.baseline_bytes}, {"invact_bytes", l.invact_bytes}});
  }
  json j{{"schema", "invact-memory v1"},
         {"block", est.block},
         {"strategy", to_string(est.strategy)},
         {"format", to_string(est.format)},
         {"repeat", block.repeat},
         {"per_layer", layers},
         {"baseline_total_bytes", est.baseline_total},
         {"invact_total_bytes", est.invact_total},
         {"saving", est.saving},
         {"warnings", est.warnings}};
  for (const auto& w : est.warnings) std::cerr << "warning: " << w << '\n';
  Output out(a.out, "memory.json");
  out.stream() << j.dump(2) << '\n';
  return 0;
}

// ---- coeff-validate -------------------------------------------------------

int cmd_coeff_validate(const std::string& kind_text, std::size_t points, const std::string& out_path) {
  if (points < 2) throw UsageError("--points must be >= 2");
  json all = json::array();
  for (const auto kind : kinds_from(kind_text)) {
    const auto res = resolve_approximation(kind, points);
    json candidates = json::array();
    for (const auto& c : res.candidates) {
      json entry{{"label", c.label}, {"evaluable", c.evaluable}, {"combined_linf", c.combined_linf}};
      if (c.evaluable) {
        entry["left"] = report_json(c.left);
        entry["right"] = report_json(c.right);
      }
      candidates.push_back(entry);
    }
    const auto& chosen = res.chosen();
    std::ostringstream coeffs;
    write_coefficients(coeffs, {chosen.approx.left, chosen.approx.right});
    all.push_back({{"kind", to_string(kind)},
                   {"adopted", chosen.label},
                   {"left_linf", chosen.left.linf},
                   {"right_linf", chosen.right.linf},
                   {"candidates", candidates},
                   {"coefficients", coeffs.str()}});
  }
  Output out(out_path, "coeff-validate.json");
  out.stream() << (all.size() == 1 ? all[0] : all).dump(2) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Inverted-activation toolkit: approximation errors, gradient checks, training comparisons, "
               "memory estimates and benchmarks"};
  app.require_subcommand(1);

  ApproxArgs approx;
  auto* approx_cmd = app.add_subcommand("approx-error", "Approximation error of the inverse-derivative fit and of "
                                                        "Lloyd-Max quantizers of f' (CSV)");
  approx_cmd->add_option("--kind", approx.kind, "gelu, silu or both")->check(CLI::IsMember({"gelu", "silu", "both"}));
  approx_cmd->add_option("--branch", approx.branch, "left, right or both")
      ->check(CLI::IsMember({"left", "right", "both"}));
  approx_cmd->add_option("--measure", approx.measure, "uniform, normal or both")
      ->check(CLI::IsMember({"uniform", "normal", "both"}));
  approx_cmd->add_option("--points", approx.points, "grid size")->check(CLI::Range(2, 50'000'000));
  approx_cmd->add_option("--max-bits", approx.max_bits, "largest quantizer width")->check(CLI::Range(1, 8));
  approx_cmd->add_option("--out", approx.out, "output CSV path");

  BenchArgs bench;
  auto* bench_cmd = app.add_subcommand("bench", "Forward+backward wall time, baseline vs inverted (JSON)");
  bench_cmd->add_option("--preset", bench.preset, "plain, act-linear, mlp, geglu or all")
      ->check(CLI::IsMember({"plain", "act-linear", "mlp", "geglu", "all"}));
  bench_cmd->add_option("--kind", bench.kind)->check(CLI::IsMember({"gelu", "silu"}));
  bench_cmd->add_option("--strategy", bench.strategy, "bitset, sign-bit or precision-bit")
      ->check(CLI::IsMember({"bitset", "sign-bit", "precision-bit"}));
  bench_cmd->add_option("--format", bench.format)->check(CLI::IsMember({"binary16", "binary32", "binary64"}));
  bench_cmd->add_option("--trials", bench.trials)->check(CLI::Range(1, 100000));
  bench_cmd->add_option("--warmup", bench.warmup)->check(CLI::Range(0, 100000));
  bench_cmd->add_option("--threads", bench.threads)->check(CLI::Range(1, 1024));
  bench_cmd->add_flag("--full-scale", bench.full_scale, "use the full preset sizes instead of desk scale");
  bench_cmd->add_option("--out", bench.out, "output JSON path");

  TrainArgs train_args;
  auto* train_cmd = app.add_subcommand("train-compare", "Paired exact vs inverted training runs (CSV)");
  train_cmd->add_option("--config", train_args.config, "key=value training config")
      ->required()
      ->check(CLI::ExistingFile);
  train_cmd->add_option("--seeds", train_args.seeds)->check(CLI::Range(1, 100000));
  train_cmd->add_option("--first-seed", train_args.first_seed);
  train_cmd->add_option("--out", train_args.out, "output CSV path");

  std::string grad_target = "all";
  double grad_tol = 1e-5;
  double grad_h = 1e-6;
  auto* grad_cmd = app.add_subcommand("gradcheck", "Analytic vs central-difference gradients (JSON)");
  std::vector<std::string> target_names = gradcheck_targets();
  target_names.push_back("all");
  grad_cmd->add_option("--target", grad_target)->check(CLI::IsMember(target_names));
  grad_cmd->add_option("--tol", grad_tol)->check(CLI::PositiveNumber);
  grad_cmd->add_option("--step", grad_h, "finite-difference step")->check(CLI::PositiveNumber);

  MemoryArgs mem;
  auto* mem_cmd = app.add_subcommand("memory", "Saved-activation bytes for a block layout (JSON)");
  mem_cmd->add_option("--spec", mem.spec, "key=value block spec")->check(CLI::ExistingFile);
  mem_cmd->add_option("--preset", mem.preset, "mlp, act-linear, geglu, plain, act-add or transformer")
      ->check(CLI::IsMember({"mlp", "act-linear", "geglu", "plain", "act-add", "transformer"}));
  mem_cmd->add_option("--strategy", mem.strategy)
      ->check(CLI::IsMember({"baseline", "bitset", "sign-bit", "precision-bit"}));
  mem_cmd->add_option("--format", mem.format)->check(CLI::IsMember({"binary16", "binary32", "binary64"}));
  mem_cmd->add_option("--out", mem.out, "output JSON path");

  std::string coeff_kind = "both";
  std::size_t coeff_points = 20000;
  std::string coeff_out;
  auto* coeff_cmd = app.add_subcommand("coeff-validate", "Score candidate coefficient assignments (JSON)");
  coeff_cmd->add_option("--kind", coeff_kind)->check(CLI::IsMember({"gelu", "silu", "both"}));
  coeff_cmd->add_option("--points", coeff_points)->check(CLI::Range(2, 10'000'000));
  coeff_cmd->add_option("--out", coeff_out, "output JSON path");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (*approx_cmd) return cmd_approx_error(approx);
    if (*bench_cmd) return cmd_bench(bench);
    if (*train_cmd) return cmd_train_compare(train_args);
    if (*grad_cmd) return cmd_gradcheck(grad_target, grad_tol, grad_h);
    if (*mem_cmd) return cmd_memory(mem);
    if (*coeff_cmd) return cmd_coeff_validate(coeff_kind, coeff_points, coeff_out);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::invalid_argument& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitUsage;
}

#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "ifdfm/data.hpp"
#include "ifdfm/model.hpp"
#include "ifdfm/solvers.hpp"
#include "ifdfm/training.hpp"

namespace ifdfm {

inline constexpr std::string_view kMethodVanilla = "vanilla";
inline constexpr std::string_view kMethodRetrain = "retrain";
inline constexpr std::string_view kMethodOracle = "oracle";
inline constexpr std::string_view kMethodIfdfm = "ifdfm";
inline constexpr std::string_view kMethodIfdfmWoAdd = "ifdfm_wo_add";

// Everything one experiment needs. Defaults describe the desk-scale synthetic
// setup: 14 days of clicks, training cutoff at day 10, test from day 13.
struct ExperimentConfig {
  std::string data_source = "synthetic";  // "synthetic" or "csv"
  std::filesystem::path csv_path;
  SyntheticConfig synth;

  Timestamp t{10 * kSecondsPerDay};
  Timestamp t_prime{13 * kSecondsPerDay};
  std::int64_t d_test = kSecondsPerDay;

  ModelSpec::Kind model_kind = ModelSpec::Kind::kMlp;
  std::vector<Index> hidden{64, 64};
  double l2 = 1e-4;

  TrainConfig train;

  // Update template used by the offline protocol and the `update` command.
  bool include_delay = true;
  bool include_add = false;
  double lambda = 1e-3;
  SolverConfig solver;
  // Use the best iterate when the solver stops above tolerance, recording the
  // residual, instead of failing.
  bool accept_unconverged = false;
  // Training rows behind the Hessian; 0 uses all of them.
  Index hessian_rows = 0;

  std::vector<std::string> methods{"vanilla", "retrain", "oracle", "ifdfm"};
  std::vector<std::uint64_t> seeds{0, 1, 2};
  std::filesystem::path output_dir = "ifdfm_out";
  std::vector<Index> timing_sizes{25000, 50000, 100000};

  ModelSpec model_spec(Index input_dim) const;
  bool has_method(std::string_view name) const;

  // Throws ConfigError.
  void validate() const;
};

// One configurable key. `set` throws ConfigError on a malformed value.
struct ConfigKey {
  std::string name;
  std::string help;
  std::function<void(ExperimentConfig&, std::string_view)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

const std::vector<ConfigKey>& config_keys();

// Throws ConfigError for unknown keys or malformed values.
void set_config_value(ExperimentConfig& cfg, std::string_view key,
                      std::string_view value);

// "key = value" lines; '#' starts a comment. Throws ParseError naming the
// line for syntax errors, unknown keys, bad values and repeated keys.
ExperimentConfig parse_config(std::string_view text,
                              ExperimentConfig base = {});
ExperimentConfig load_config(const std::filesystem::path& path,
                             ExperimentConfig base = {});

// Every key with its current value, for embedding in reports.
std::map<std::string, std::string> resolved(const ExperimentConfig& cfg);
// Inverse of parse_config.
std::string to_text(const ExperimentConfig& cfg);

// Durations: plain integer seconds or a number with suffix s, m, h or d.
std::int64_t parse_duration(std::string_view text);
std::string format_duration(std::int64_t seconds);

}  // namespace ifdfm

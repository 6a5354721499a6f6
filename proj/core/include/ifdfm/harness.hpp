#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "ifdfm/config.hpp"
#include "ifdfm/data.hpp"
#include "ifdfm/influence.hpp"
#include "ifdfm/metrics.hpp"
#include "ifdfm/training.hpp"

namespace ifdfm {

inline constexpr int kReportSchemaVersion = 1;

// Splits and index sets shared by every method of one experiment.
struct Prepared {
  Dataset data;
  Split split;
  std::vector<Index> reversed;  // J, indices into split.train
  LabeledSet arrivals;          // K: clicks in [T, T' - d_test), labels at T'
  ModelSpec spec;
};

Dataset load_dataset(const ExperimentConfig& cfg);
Prepared prepare(const ExperimentConfig& cfg);
Prepared prepare(const ExperimentConfig& cfg, Dataset data);

struct MethodRun {
  ParamVector params;
  double wall_time = 0.0;
  int epochs = 0;
  std::vector<EpochRecord> history;
};

// Trains "vanilla" (observed labels at T), "retrain" (labels known at T') or
// "oracle" (true labels). With `with_arrivals`, the training set also holds
// the arrival pool, which is how the online retrain is produced. Early
// stopping watches the validation window under true labels for every method.
MethodRun train_method(const ExperimentConfig& cfg, const Prepared& prep,
                       std::string_view method, std::uint64_t seed,
                       bool with_arrivals = false);

// Influence update of `theta_hat` (trained on observed labels at T).
UpdateReport run_update(const ExperimentConfig& cfg, const Prepared& prep,
                        const ParamVector& theta_hat, bool include_delay,
                        bool include_add, std::uint64_t seed);

// Scores `params` on `test` against true labels.
MethodMetrics evaluate_params(const ModelSpec& spec, const ParamVector& params,
                              const Dataset& test);

struct UpdateSummary {
  double delta_norm = 0.0;
  std::optional<double> residual_rel;
  int iterations = 0;
  bool converged = true;
  double wall_time = 0.0;
};

struct SeedReport {
  std::uint64_t seed = 0;
  std::map<std::string, MethodMetrics> methods;
  std::map<std::string, UpdateSummary> updates;
};

struct DataSummary {
  Index n_total = 0;
  Index n_train = 0;
  Index n_valid = 0;
  Index n_test = 0;
  Index n_reversed = 0;
  Index n_arrivals = 0;
  double train_observed_cvr = 0.0;
  double test_cvr = 0.0;
};

struct EvalReport {
  std::string protocol;  // "offline" or "online"
  std::map<std::string, std::string> config;
  DataSummary data;
  std::vector<SeedReport> per_seed;
  // Means over seeds, with RI recomputed from the mean metrics.
  std::map<std::string, MethodMetrics> mean;
  // Sample standard deviation over seeds (auc, prauc, log_loss only).
  std::map<std::string, MethodMetrics> stddev;
};

// Offline protocol: vanilla, retrain and oracle models plus the delay-only
// influence update of vanilla, all scored on the test window.
EvalReport run_offline(const ExperimentConfig& cfg);

// Online protocol: vanilla acts as the pretrained model; ifdfm folds in
// reversals and arrivals, ifdfm_wo_add reversals only, retrain is trained on
// training data plus arrivals.
EvalReport run_online(const ExperimentConfig& cfg);

struct TimingRow {
  Index n = 0;
  double vanilla_seconds = 0.0;
  double retrain_seconds = 0.0;
  double update_seconds = 0.0;  // rhs + solve + apply
  double ratio = 0.0;           // update / vanilla
  int vanilla_epochs = 0;
  int retrain_epochs = 0;
  int solver_iterations = 0;
  std::optional<double> residual_rel;
  bool converged = true;
};

struct TimingReport {
  std::map<std::string, std::string> config;
  std::vector<TimingRow> rows;
};

// Wall-clock study over cfg.timing_sizes using the first seed.
TimingReport run_timing(const ExperimentConfig& cfg);

// `include_timings = false` drops every wall-clock field so reruns compare
// equal.
std::string to_json(const EvalReport& report, bool include_timings = true);
std::string to_json(const TimingReport& report);

// protocol,seed,method,auc,prauc,log_loss,ri_auc,ri_prauc,ri_ll,wall_time;
// seed "mean" and "std" rows follow the per-seed rows.
void write_csv(std::ostream& out, const EvalReport& report);

}  // namespace ifdfm

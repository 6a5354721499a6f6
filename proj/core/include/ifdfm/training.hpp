#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "ifdfm/data.hpp"
#include "ifdfm/model.hpp"

namespace ifdfm {

struct TrainConfig {
  Index batch_size = 1024;
  double learning_rate = 1e-3;
  int max_epochs = 50;
  int early_stop_patience = 5;  // epochs without validation improvement; 0 = off
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::optional<ParamVector> warm_start;

  void validate() const;
};

struct EpochRecord {
  int epoch = 0;
  double train_loss = 0.0;  // mean of minibatch losses, weighted by size
  double valid_ll = 0.0;
};

struct TrainResult {
  ParamVector params;  // checkpoint with the best validation log loss
  int best_epoch = 0;
  double best_valid_ll = 0.0;
  std::vector<EpochRecord> history;
};

// Adam over shuffled minibatches on explicit labels.
TrainResult train_labeled(const ModelSpec& spec, const FeatureMatrix& x,
                          std::span<const double> y,
                          const FeatureMatrix& valid_x,
                          std::span<const double> valid_y,
                          const TrainConfig& cfg);

// Trains on `data` with labels derived from `view`; early stopping watches the
// validation log loss under `valid_view`.
TrainResult train(const Dataset& data, const LabelView& view,
                  const Dataset& valid, const LabelView& valid_view,
                  const ModelSpec& spec, const TrainConfig& cfg);

// CSV columns: epoch,train_loss,valid_ll
void write_history_csv(const std::filesystem::path& path,
                       std::span<const EpochRecord> history);

}  // namespace ifdfm

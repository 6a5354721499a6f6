#include "ifdfm/training.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>

#include "ifdfm/error.hpp"
#include "ifdfm/metrics.hpp"
#include "ifdfm/rng.hpp"

namespace ifdfm {

void TrainConfig::validate() const {
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) {
    throw ConfigError("train: learning_rate must be > 0");
  }
  if (max_epochs < 1) throw ConfigError("train: max_epochs must be >= 1");
  if (early_stop_patience < 0) {
    throw ConfigError("train: early_stop_patience must be >= 0");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0) ||
      !(epsilon > 0.0)) {
    throw ConfigError("train: invalid Adam hyperparameters");
  }
}

namespace {

double validation_log_loss(const Model& model, const ParamVector& params,
                           const FeatureMatrix& x, std::span<const double> y) {
  const Vector p = model.predict_batch(params, x);
  ScoredSet s;
  s.scores.assign(p.data(), p.data() + p.size());
  s.labels.assign(y.begin(), y.end());
  return log_loss(s);
}

}  // namespace

TrainResult train_labeled(const ModelSpec& spec, const FeatureMatrix& x,
                          std::span<const double> y,
                          const FeatureMatrix& valid_x,
                          std::span<const double> valid_y,
                          const TrainConfig& cfg) {
  cfg.validate();
  const Model model(spec);
  const Index n = x.rows();
  if (n == 0) throw ConfigError("train: empty training set");
  if (valid_x.rows() == 0) throw ConfigError("train: empty validation set");
  if (static_cast<Index>(y.size()) != n ||
      static_cast<Index>(valid_y.size()) != valid_x.rows()) {
    throw ConfigError("train: label count mismatch");
  }

  ParamVector params = cfg.warm_start ? *cfg.warm_start
                                      : initial_params(spec, cfg.seed);
  if (params.size() != model.num_params()) {
    throw ConfigError("train: warm start has the wrong parameter count");
  }
  Vector m = Vector::Zero(params.size());
  Vector v = Vector::Zero(params.size());
  double beta1_pow = 1.0, beta2_pow = 1.0;

  TrainResult result;
  result.params = params;
  result.best_valid_ll = std::numeric_limits<double>::infinity();

  const Index batch = std::min(cfg.batch_size, n);
  FeatureMatrix xb(batch, x.cols());
  std::vector<double> yb(static_cast<std::size_t>(batch));

  for (int epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    const auto order =
        epoch_permutation(static_cast<std::size_t>(n), cfg.seed,
                          static_cast<std::uint64_t>(epoch));
    double loss_sum = 0.0;
    Index batch_index = 0;
    for (Index start = 0; start < n; start += batch, ++batch_index) {
      const Index rows = std::min(batch, n - start);
      for (Index k = 0; k < rows; ++k) {
        const auto src = static_cast<Index>(order[start + k]);
        xb.row(k) = x.row(src);
        yb[k] = y[src];
      }
      const auto lg = model.loss_and_grad(
          params, xb.topRows(rows), std::span<const double>(yb.data(), rows));
      if (!std::isfinite(lg.loss) || !lg.grad.allFinite()) {
        throw NumericalError("train: non-finite loss at epoch " +
                             std::to_string(epoch) + ", batch " +
                             std::to_string(batch_index));
      }
      loss_sum += lg.loss * static_cast<double>(rows);

      beta1_pow *= cfg.beta1;
      beta2_pow *= cfg.beta2;
      m = cfg.beta1 * m + (1.0 - cfg.beta1) * lg.grad;
      v = cfg.beta2 * v + (1.0 - cfg.beta2) * lg.grad.cwiseAbs2();
      const double step =
          cfg.learning_rate * std::sqrt(1.0 - beta2_pow) / (1.0 - beta1_pow);
      params.array() -=
          step * m.array() /
          (v.array().sqrt() + cfg.epsilon * std::sqrt(1.0 - beta2_pow));
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / static_cast<double>(n);
    rec.valid_ll = validation_log_loss(model, params, valid_x, valid_y);
    if (!std::isfinite(rec.train_loss) || !std::isfinite(rec.valid_ll)) {
      throw NumericalError("train: non-finite epoch loss at epoch " +
                           std::to_string(epoch));
    }
    result.history.push_back(rec);
    if (rec.valid_ll < result.best_valid_ll) {
      result.best_valid_ll = rec.valid_ll;
      result.best_epoch = epoch;
      result.params = params;
    } else if (cfg.early_stop_patience > 0 &&
               epoch - result.best_epoch >= cfg.early_stop_patience) {
      break;
    }
  }
  return result;
}

TrainResult train(const Dataset& data, const LabelView& view,
                  const Dataset& valid, const LabelView& valid_view,
                  const ModelSpec& spec, const TrainConfig& cfg) {
  const auto y = labels(data, view);
  const auto valid_y = labels(valid, valid_view);
  return train_labeled(spec, data.features(), y, valid.features(), valid_y,
                       cfg);
}

void write_history_csv(const std::filesystem::path& path,
                       std::span<const EpochRecord> history) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << "epoch,train_loss,valid_ll\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.train_loss) << ','
        << format_double(r.valid_ll) << '\n';
  }
}

}  // namespace ifdfm
